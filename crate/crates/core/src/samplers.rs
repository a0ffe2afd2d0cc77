//! Configuration samplers: independent Bernoulli percolation and Markov chains
//! for the random-cluster measure on a box with free or wired boundary.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BoxSpec, Configuration, Mode};
use crate::rng::{self, tag, StreamRng};
use crate::union_find::UnionFind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    BernoulliBond,
    BernoulliSite,
    RandomCluster,
}

/// Boundary condition of the random-cluster measure on a free box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    /// No identification of boundary sites.
    #[default]
    Free,
    /// All sites on the faces of the box are joined through one external vertex.
    Wired,
}

/// Random-cluster dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    /// Swendsen-Wang for integer `q`, heat-bath otherwise.
    #[default]
    Auto,
    SwendsenWang,
    HeatBath,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub model: Model,
    pub p: f64,
    #[serde(default = "one")]
    pub q: f64,
    #[serde(default)]
    pub boundary_condition: BoundaryCondition,
    /// Full Markov-chain sweeps (random-cluster only); 0 selects `10 L`.
    #[serde(default)]
    pub sweeps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub replica: u64,
    #[serde(default)]
    pub dynamics: Dynamics,
}

fn one() -> f64 {
    1.0
}

impl SamplerSpec {
    pub fn bernoulli_bond(p: f64, seed: u64) -> Self {
        SamplerSpec {
            model: Model::BernoulliBond,
            p,
            q: 1.0,
            boundary_condition: BoundaryCondition::Free,
            sweeps: 0,
            seed,
            replica: 0,
            dynamics: Dynamics::Auto,
        }
    }

    pub fn bernoulli_site(p: f64, seed: u64) -> Self {
        SamplerSpec {
            model: Model::BernoulliSite,
            ..Self::bernoulli_bond(p, seed)
        }
    }

    pub fn random_cluster(p: f64, q: f64, bc: BoundaryCondition, sweeps: usize, seed: u64) -> Self {
        SamplerSpec {
            model: Model::RandomCluster,
            q,
            boundary_condition: bc,
            sweeps,
            ..Self::bernoulli_bond(p, seed)
        }
    }

    pub fn with_replica(&self, replica: u64) -> Self {
        SamplerSpec {
            replica,
            ..self.clone()
        }
    }

    /// Box mode the model draws states for.
    pub fn mode(&self) -> Mode {
        match self.model {
            Model::BernoulliSite => Mode::Site,
            _ => Mode::Bond,
        }
    }

    /// All violated constraints, empty if the spec is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(0.0..=1.0).contains(&self.p) {
            v.push(format!("sampler.p = {} is not in [0, 1]", self.p));
        }
        if self.model == Model::RandomCluster && !(self.q >= 1.0 && self.q.is_finite()) {
            v.push(format!("sampler.q = {} must be a finite real >= 1", self.q));
        }
        if self.model == Model::RandomCluster
            && self.dynamics == Dynamics::SwendsenWang
            && !is_integer(self.q)
        {
            v.push(format!("sampler.q = {} must be an integer for swendsen-wang", self.q));
        }
        v
    }

    pub fn effective_sweeps(&self, side: usize) -> usize {
        if self.sweeps == 0 {
            10 * side
        } else {
            self.sweeps
        }
    }
}

fn is_integer(q: f64) -> bool {
    (q - q.round()).abs() < 1e-12
}

/// Draws a configuration according to `spec` on `spec_box`.
pub fn sample(spec_box: &BoxSpec, spec: &SamplerSpec) -> Result<Configuration> {
    let v = spec.violations();
    if !v.is_empty() {
        return Err(Error::domain(v.join("; ")));
    }
    if spec_box.mode() != spec.mode() {
        return Err(Error::domain(format!(
            "{:?} sampler needs a {:?}-mode box",
            spec.model,
            spec.mode()
        )));
    }
    match spec.model {
        Model::BernoulliBond | Model::BernoulliSite => {
            Ok(sample_bernoulli(spec_box, spec.p, spec.seed, spec.replica))
        }
        Model::RandomCluster => sample_random_cluster(spec_box, spec),
    }
}

/// Each state open independently with probability `p`.
///
/// States are visited in index order and state `i` is open iff the `i`-th
/// uniform draw of the `(seed, replica, CONFIGURATION)` stream is below `p`.
pub fn sample_bernoulli(spec_box: &BoxSpec, p: f64, seed: u64, replica: u64) -> Configuration {
    let mut rng = rng::stream(seed, replica, tag::CONFIGURATION);
    let mut c = Configuration::closed(*spec_box);
    for i in 0..spec_box.num_states() {
        if rng.random::<f64>() < p {
            c.set_state(i, true);
        }
    }
    c
}

/// State of a random-cluster chain after the configured number of sweeps.
pub fn sample_random_cluster(spec_box: &BoxSpec, spec: &SamplerSpec) -> Result<Configuration> {
    if spec.model != Model::RandomCluster {
        return Err(Error::domain("sample_random_cluster needs a random-cluster spec"));
    }
    let mut chain = RandomClusterChain::new(*spec_box, spec)?;
    for _ in 0..spec.effective_sweeps(spec_box.side()) {
        chain.sweep();
    }
    Ok(chain.into_config())
}

/// Markov chain on bond configurations reversible for the random-cluster
/// measure `p^open (1-p)^closed q^clusters` on a box.
///
/// The chain starts from the all-open configuration. With a wired boundary
/// condition on a free box, clusters touching a face of the box count once.
pub struct RandomClusterChain {
    config: Configuration,
    p: f64,
    q: f64,
    wired: bool,
    dynamics: Dynamics,
    rng: StreamRng,
    on_boundary: Vec<bool>,
    scratch: BfsScratch,
}

impl RandomClusterChain {
    pub fn new(spec_box: BoxSpec, spec: &SamplerSpec) -> Result<Self> {
        if spec_box.mode() != Mode::Bond {
            return Err(Error::domain("random-cluster model lives on bonds"));
        }
        if !(spec.q >= 1.0) {
            return Err(Error::Unsupported(format!(
                "random-cluster sampling requires q >= 1, got {}",
                spec.q
            )));
        }
        let v = spec.violations();
        if !v.is_empty() {
            return Err(Error::domain(v.join("; ")));
        }
        let dynamics = match spec.dynamics {
            Dynamics::Auto if is_integer(spec.q) => Dynamics::SwendsenWang,
            Dynamics::Auto => Dynamics::HeatBath,
            d => d,
        };
        let wired = spec.boundary_condition == BoundaryCondition::Wired && !spec_box.is_wrapped();
        let n = spec_box.num_sites();
        let on_boundary = (0..n)
            .map(|s| {
                !spec_box.is_wrapped()
                    && (0..spec_box.dim()).any(|a| {
                        let c = spec_box.coord(s, a);
                        c == 0 || c + 1 == spec_box.side()
                    })
            })
            .collect();
        Ok(RandomClusterChain {
            config: Configuration::open(spec_box),
            p: spec.p,
            q: spec.q,
            wired,
            dynamics,
            rng: rng::stream(spec.seed, spec.replica, tag::CONFIGURATION),
            on_boundary,
            scratch: BfsScratch::new(n + 1),
        })
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn into_config(self) -> Configuration {
        self.config
    }

    pub fn dynamics(&self) -> Dynamics {
        self.dynamics
    }

    /// One full sweep of the configured dynamics.
    pub fn sweep(&mut self) {
        match self.dynamics {
            Dynamics::SwendsenWang => self.swendsen_wang_step(),
            _ => {
                for bond in 0..self.config.num_states() {
                    self.heat_bath_update(bond);
                }
            }
        }
    }

    /// Resamples one bond from its conditional law given all other bonds:
    /// open with probability `p` if its endpoints are joined without it,
    /// `p / (p + q (1 - p))` otherwise.
    pub fn heat_bath_update(&mut self, bond: usize) {
        let (u, v, _) = self.config.spec().bond_endpoints(bond);
        let connected = self.connected_without(u, v, bond);
        let prob = if connected {
            self.p
        } else {
            self.p / (self.p + self.q * (1.0 - self.p))
        };
        let open = self.rng.random::<f64>() < prob;
        self.config.set_state(bond, open);
    }

    /// Edwards-Sokal step: colour clusters uniformly from `q` colours (the
    /// wired cluster keeps colour 0), then open each bond with probability
    /// `p` exactly when its endpoints share a colour.
    pub fn swendsen_wang_step(&mut self) {
        let spec = *self.config.spec();
        let n = spec.num_sites();
        let ghost = n;
        let mut uf = UnionFind::new(n + 1);
        for bond in 0..spec.num_bonds() {
            if self.config.state(bond) {
                let (u, v, _) = spec.bond_endpoints(bond);
                uf.union(u, v);
            }
        }
        if self.wired {
            for s in 0..n {
                if self.on_boundary[s] {
                    uf.union(s, ghost);
                }
            }
        }
        let q = self.q.round() as u32;
        let mut colour = vec![u32::MAX; n + 1];
        let ghost_root = uf.find(ghost);
        colour[ghost_root] = 0;
        for s in 0..n {
            let r = uf.find(s);
            if colour[r] == u32::MAX {
                colour[r] = if q == 1 { 0 } else { self.rng.random_range(0..q) };
            }
        }
        for bond in 0..spec.num_bonds() {
            let (u, v, _) = spec.bond_endpoints(bond);
            let same = colour[uf.find(u)] == colour[uf.find(v)];
            let open = same && self.rng.random::<f64>() < self.p;
            self.config.set_state(bond, open);
        }
    }

    /// Bidirectional BFS between `u` and `v` over open bonds other than
    /// `skip`, stopping as soon as the two searches meet or one is exhausted.
    fn connected_without(&mut self, u: usize, v: usize, skip: usize) -> bool {
        if u == v {
            return true;
        }
        let spec = *self.config.spec();
        let ghost = spec.num_sites();
        let s = &mut self.scratch;
        s.next_generation();
        let (ga, gb) = (s.generation * 2, s.generation * 2 + 1);
        s.queue_a.clear();
        s.queue_b.clear();
        s.mark[u] = ga;
        s.mark[v] = gb;
        s.queue_a.push_back(u);
        s.queue_b.push_back(v);
        let config = &self.config;
        let on_boundary = &self.on_boundary;
        let wired = self.wired;
        loop {
            if s.queue_a.is_empty() || s.queue_b.is_empty() {
                return false;
            }
            let expand_a = s.queue_a.len() <= s.queue_b.len();
            let (queue, mine, theirs) = if expand_a {
                (&mut s.queue_a, ga, gb)
            } else {
                (&mut s.queue_b, gb, ga)
            };
            // expand one full BFS layer of the smaller frontier
            let layer = queue.len();
            for _ in 0..layer {
                let x = queue.pop_front().unwrap();
                let mut met = false;
                let mut visit = |y: usize, mark: &mut Vec<u64>, queue: &mut VecDeque<usize>| {
                    if mark[y] == theirs {
                        met = true;
                    } else if mark[y] != mine {
                        mark[y] = mine;
                        queue.push_back(y);
                    }
                };
                if x == ghost {
                    for y in 0..ghost {
                        if on_boundary[y] {
                            visit(y, &mut s.mark, queue);
                        }
                    }
                } else {
                    for axis in 0..spec.dim() {
                        for forward in [true, false] {
                            if let Some(b) = spec.bond_between(x, axis, forward) {
                                if b != skip && config.state(b) {
                                    let y = spec.step(x, axis, forward).unwrap();
                                    visit(y, &mut s.mark, queue);
                                }
                            }
                        }
                    }
                    if wired && on_boundary[x] {
                        visit(ghost, &mut s.mark, queue);
                    }
                }
                if met {
                    return true;
                }
            }
        }
    }
}

struct BfsScratch {
    mark: Vec<u64>,
    generation: u64,
    queue_a: VecDeque<usize>,
    queue_b: VecDeque<usize>,
}

impl BfsScratch {
    fn new(n: usize) -> Self {
        BfsScratch {
            mark: vec![0; n],
            generation: 0,
            queue_a: VecDeque::new(),
            queue_b: VecDeque::new(),
        }
    }

    fn next_generation(&mut self) {
        self.generation += 1;
    }
}

/// Unnormalised random-cluster weight `p^open (1-p)^closed q^clusters` of a
/// bond configuration on a free box.
pub fn random_cluster_weight(config: &Configuration, p: f64, q: f64) -> f64 {
    let spec = config.spec();
    let mut uf = UnionFind::new(spec.num_sites());
    let mut open = 0;
    for b in 0..spec.num_bonds() {
        if config.state(b) {
            open += 1;
            let (u, v, _) = spec.bond_endpoints(b);
            uf.union(u, v);
        }
    }
    let closed = spec.num_bonds() - open;
    let clusters = (0..spec.num_sites()).filter(|&s| uf.find(s) == s).count();
    p.powi(open as i32) * (1.0 - p).powi(closed as i32) * q.powi(clusters as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;

    fn free_box(l: usize) -> BoxSpec {
        BoxSpec::new(2, l, Mode::Bond, Boundary::Free).unwrap()
    }

    #[test]
    fn degenerate_bernoulli() {
        let b = BoxSpec::torus(2, 16).unwrap();
        assert_eq!(sample_bernoulli(&b, 0.0, 1, 0).count_open(), 0);
        assert_eq!(sample_bernoulli(&b, 1.0, 1, 0).count_open(), b.num_bonds());
    }

    #[test]
    fn bernoulli_half_fraction() {
        // binomial concentration: |f - 1/2| <= 3 sqrt(p(1-p)/N)
        let b = BoxSpec::torus(2, 64).unwrap();
        let c = sample_bernoulli(&b, 0.5, 99, 0);
        let n = b.num_bonds() as f64;
        let f = c.count_open() as f64 / n;
        assert!((f - 0.5).abs() <= 3.0 * (0.25 / n).sqrt(), "fraction {f}");
    }

    #[test]
    fn deterministic_per_seed_and_replica() {
        let b = free_box(8);
        let s = SamplerSpec::random_cluster(0.6, 2.5, BoundaryCondition::Wired, 3, 11);
        let a = sample(&b, &s).unwrap();
        assert_eq!(a, sample(&b, &s).unwrap());
        assert_ne!(a, sample(&b, &s.with_replica(1)).unwrap());
        let bb = BoxSpec::torus(2, 8).unwrap();
        let s = SamplerSpec::bernoulli_bond(0.5, 4);
        assert_eq!(sample(&bb, &s).unwrap(), sample(&bb, &s).unwrap());
    }

    #[test]
    fn full_p_stays_open() {
        for dynamics in [Dynamics::HeatBath, Dynamics::SwendsenWang] {
            for bc in [BoundaryCondition::Free, BoundaryCondition::Wired] {
                let mut s = SamplerSpec::random_cluster(1.0, 2.0, bc, 4, 1);
                s.dynamics = dynamics;
                let c = sample(&free_box(6), &s).unwrap();
                assert_eq!(c.count_open(), c.num_states());
            }
        }
    }

    #[test]
    fn rejects_bad_q_and_mode() {
        let s = SamplerSpec::random_cluster(0.5, 0.5, BoundaryCondition::Free, 1, 0);
        assert!(sample(&free_box(4), &s).is_err());
        assert!(matches!(
            RandomClusterChain::new(free_box(4), &s),
            Err(Error::Unsupported(_))
        ));
        let site = BoxSpec::new(2, 4, Mode::Site, Boundary::Free).unwrap();
        assert!(sample(&site, &SamplerSpec::bernoulli_bond(0.5, 0)).is_err());
        let mut sw = SamplerSpec::random_cluster(0.5, 1.5, BoundaryCondition::Free, 1, 0);
        sw.dynamics = Dynamics::SwendsenWang;
        assert!(!sw.violations().is_empty());
    }

    #[test]
    fn wired_bfs_goes_through_boundary() {
        // two boundary sites joined only through the external vertex
        let b = free_box(4);
        let s = SamplerSpec::random_cluster(0.5, 2.0, BoundaryCondition::Wired, 1, 0);
        let mut chain = RandomClusterChain::new(b, &s).unwrap();
        chain.config = Configuration::closed(b);
        let u = b.index_of(&crate::Site::new([0, 1])).unwrap();
        let v = b.index_of(&crate::Site::new([0, 2])).unwrap();
        let bond = b.bond_index(u, 1).unwrap();
        assert!(chain.connected_without(u, v, bond));
        let inner = b.index_of(&crate::Site::new([1, 1])).unwrap();
        assert!(!chain.connected_without(inner, v, usize::MAX));
        chain.wired = false;
        assert!(!chain.connected_without(u, v, bond));
    }

    #[test]
    fn weight_of_small_configs() {
        let b = BoxSpec::new(2, 2, Mode::Bond, Boundary::Free).unwrap();
        let c = Configuration::closed(b);
        assert!((random_cluster_weight(&c, 0.3, 2.0) - 0.7f64.powi(4) * 16.0).abs() < 1e-12);
        let c = Configuration::open(b);
        assert!((random_cluster_weight(&c, 0.3, 2.0) - 0.3f64.powi(4) * 2.0).abs() < 1e-12);
    }
}
