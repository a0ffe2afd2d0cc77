//! The lazy simple random walk on one open cluster.
//!
//! From a cluster site `x` the walk picks one of the `2d` lattice directions
//! uniformly; it moves to `x + e` if that site is in the cluster and stays at
//! `x` otherwise. Directions leaving a free box count as leaving the cluster.
//! Cluster membership decides the move, not the state of the bond `{x, x+e}`.

mod laplace;
mod regeneration;

pub use laplace::{
    hitting_field, hitting_laplace_exact, hitting_laplace_mc, LaplaceEstimate, LaplaceMethod,
    McOptions, SolverMethod, SolverOptions,
};
pub use regeneration::{regeneration_prefix, regeneration_sequence, RegenerationSequence};

use num_traits::{FromPrimitive, Num};
use rand::Rng;

use crate::cluster::ClusterLabeling;
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Site};
use crate::rng::{self, tag, StreamRng};
use crate::scalar::Scalar;

const NONE: u32 = u32::MAX;

/// Transition kernel of the lazy walk restricted to one cluster.
///
/// Cluster sites get compact local indices `0..len()` in increasing site
/// order; `moves` holds, for each local site and each of the `2d` directions,
/// the local index of the target or `NONE` when the walk stays.
pub struct WalkKernel<'a> {
    config: &'a Configuration,
    label: u32,
    dim: usize,
    sites: Vec<usize>,
    local: Vec<u32>,
    moves: Vec<u32>,
}

/// One-step law from a site: stay probability and the probability of moving
/// to each distinct cluster neighbor.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<T> {
    pub stay: T,
    pub moves: Vec<(Site, T)>,
}

impl<T: Clone + Num> Transition<T> {
    pub fn total(&self) -> T {
        self.moves
            .iter()
            .fold(self.stay.clone(), |acc, (_, p)| acc + p.clone())
    }
}

impl<'a> WalkKernel<'a> {
    /// Kernel on the giant cluster.
    pub fn on_giant(config: &'a Configuration, labeling: &ClusterLabeling) -> Result<Self> {
        let g = labeling
            .giant()
            .ok_or_else(|| Error::precondition("configuration has no open cluster"))?;
        Self::on_cluster(config, labeling, g)
    }

    pub fn on_cluster(config: &'a Configuration, labeling: &ClusterLabeling, label: u32) -> Result<Self> {
        if label as usize >= labeling.num_clusters() {
            return Err(Error::domain(format!("no cluster with label {label}")));
        }
        let spec = *config.spec();
        let n = spec.num_sites();
        let dim = spec.dim();
        let mut local = vec![NONE; n];
        let mut sites = Vec::new();
        for s in 0..n {
            if labeling.label(s) == Some(label) {
                local[s] = sites.len() as u32;
                sites.push(s);
            }
        }
        let mut moves = vec![NONE; sites.len() * 2 * dim];
        for (i, &s) in sites.iter().enumerate() {
            for axis in 0..dim {
                for (k, forward) in [true, false].into_iter().enumerate() {
                    if let Some(t) = spec.step(s, axis, forward) {
                        moves[i * 2 * dim + 2 * axis + k] = local[t];
                    }
                }
            }
        }
        Ok(WalkKernel {
            config,
            label,
            dim,
            sites,
            local,
            moves,
        })
    }

    pub fn config(&self) -> &Configuration {
        self.config
    }

    pub fn label(&self) -> u32 {
        self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        2 * self.dim
    }

    /// Number of cluster sites.
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Box site index of each local index.
    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn local_index(&self, site: usize) -> Option<usize> {
        match self.local.get(site) {
            Some(&l) if l != NONE => Some(l as usize),
            _ => None,
        }
    }

    pub fn contains(&self, site: usize) -> bool {
        self.local_index(site).is_some()
    }

    /// Targets of the `2d` directions from local site `i` (`None` = stay).
    #[inline]
    pub(crate) fn targets(&self, i: usize) -> &[u32] {
        &self.moves[i * 2 * self.dim..(i + 1) * 2 * self.dim]
    }

    /// Directions from local site `i` that leave the cluster.
    #[inline]
    pub(crate) fn stay_count(&self, i: usize) -> usize {
        self.targets(i).iter().filter(|&&t| t == NONE).count()
    }

    fn require(&self, x: &Site) -> Result<usize> {
        let s = self.config.spec().index_of(x)?;
        self.local_index(s).ok_or_else(|| {
            Error::precondition(format!("site {x} is not on the walk's cluster"))
        })
    }

    /// Exact one-step law from `x` in any number type with `1/(2d)`:
    /// `1/(2d)` to each cluster neighbor, `#{e : x+e not in cluster}/(2d)`
    /// to stay.
    pub fn transition_distribution<T>(&self, x: &Site) -> Result<Transition<T>>
    where
        T: Clone + Num + FromPrimitive,
    {
        let i = self.require(x)?;
        let deg = T::from_usize(self.degree()).expect("degree representable");
        let unit = T::one() / deg;
        let spec = self.config.spec();
        let mut moves: Vec<(usize, T)> = Vec::new();
        let mut stay = T::zero();
        for &t in self.targets(i) {
            if t == NONE {
                stay = stay + unit.clone();
            } else {
                let site = self.sites[t as usize];
                match moves.iter_mut().find(|(s, _)| *s == site) {
                    Some((_, p)) => *p = p.clone() + unit.clone(),
                    None => moves.push((site, unit.clone())),
                }
            }
        }
        Ok(Transition {
            stay,
            moves: moves.into_iter().map(|(s, p)| (spec.site(s), p)).collect(),
        })
    }

    /// Path `X_0 = x0, .., X_steps` as box site indices.
    pub fn simulate(&self, x0: &Site, steps: usize, seed: u64, replica: u64) -> Result<Vec<usize>> {
        let mut at = self.require(x0)?;
        let mut rng = rng::stream(seed, replica, tag::WALK);
        let mut dirs = DirectionSampler::new(self.degree());
        let mut path = Vec::with_capacity(steps + 1);
        path.push(self.sites[at]);
        for _ in 0..steps {
            let t = self.targets(at)[dirs.next(&mut rng)];
            if t != NONE {
                at = t as usize;
            }
            path.push(self.sites[at]);
        }
        Ok(path)
    }

    /// Exact law of `X_n` started at `x0`, indexed by local site.
    ///
    /// Fails with a resource error when `len() * n` exceeds `budget`.
    pub fn distribution<F: Scalar>(&self, x0: &Site, n: usize, budget: usize) -> Result<Vec<F>> {
        let start = self.require(x0)?;
        if self.len().saturating_mul(n) > budget {
            return Err(Error::Resource(format!(
                "{} sites x {n} steps exceeds budget {budget}",
                self.len()
            )));
        }
        let unit = F::one() / F::of_usize(self.degree());
        let mut cur = vec![F::zero(); self.len()];
        let mut next = vec![F::zero(); self.len()];
        cur[start] = F::one();
        for _ in 0..n {
            next.iter_mut().for_each(|v| *v = F::zero());
            for (i, &mass) in cur.iter().enumerate() {
                if mass == F::zero() {
                    continue;
                }
                let share = mass * unit;
                for &t in self.targets(i) {
                    let j = if t == NONE { i } else { t as usize };
                    next[j] = next[j] + share;
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }
}

/// Uniform direction in `0..k`; consumes two bits per draw when `k` is a
/// power of two.
pub(crate) struct DirectionSampler {
    k: usize,
    bits: u32,
    buffer: u64,
    left: u32,
}

impl DirectionSampler {
    pub(crate) fn new(k: usize) -> Self {
        let bits = if k.is_power_of_two() { k.trailing_zeros() } else { 0 };
        DirectionSampler {
            k,
            bits,
            buffer: 0,
            left: 0,
        }
    }

    #[inline]
    pub(crate) fn next(&mut self, rng: &mut StreamRng) -> usize {
        if self.bits == 0 {
            return rng.random_range(0..self.k);
        }
        if self.left < self.bits {
            self.buffer = rng.random();
            self.left = 64;
        }
        let d = (self.buffer & ((1 << self.bits) - 1)) as usize;
        self.buffer >>= self.bits;
        self.left -= self.bits;
        d
    }
}
