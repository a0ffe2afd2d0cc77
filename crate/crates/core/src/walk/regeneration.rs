use serde::Serialize;

use crate::cluster::ClusterLabeling;
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Site};

/// Successive multiples `k x` of a direction that land on the giant cluster,
/// seen from the origin.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RegenerationSequence {
    pub direction: Site,
    /// `T_x ∘ Θ_x^k`, all `>= 1`.
    pub gaps: Vec<usize>,
    /// `T_x^(1), T_x^(2), ..`, strictly increasing.
    pub times: Vec<usize>,
    /// Box index of `T_x^(k) x`.
    pub sites: Vec<usize>,
}

impl RegenerationSequence {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `T_x^(k)`, with `T_x^(0) = 0`.
    pub fn time(&self, k: usize) -> usize {
        if k == 0 { 0 } else { self.times[k - 1] }
    }

    pub fn mean_gap(&self) -> f64 {
        self.gaps.iter().sum::<usize>() as f64 / self.gaps.len() as f64
    }
}

/// Scans `k x`, `k = 1, 2, ..` on the torus and keeps up to `n` hits of the
/// giant cluster. The scan stops before `k |x|_∞` reaches half the side, so
/// every scanned point is a distinct site at its true displacement from the
/// origin.
pub fn regeneration_prefix(
    config: &Configuration,
    labeling: &ClusterLabeling,
    x: &Site,
    n: usize,
) -> Result<RegenerationSequence> {
    let spec = config.spec();
    if !spec.is_wrapped() {
        return Err(Error::Unsupported("regenerations need a wrapped box".into()));
    }
    if x.dim() != spec.dim() || x.is_zero() {
        return Err(Error::domain(format!("direction {x} must be a nonzero vector of dimension {}", spec.dim())));
    }
    if !labeling.on_giant(0) {
        return Err(Error::precondition("the origin is not on the giant cluster"));
    }
    let step = x.linf() as usize;
    let mut seq = RegenerationSequence {
        direction: x.clone(),
        gaps: Vec::new(),
        times: Vec::new(),
        sites: Vec::new(),
    };
    let mut last = 0;
    let mut k = 1;
    while seq.len() < n && 2 * k * step < spec.side() {
        let s = spec.wrapped_index(&x.scale(k as i64));
        if labeling.on_giant(s) {
            seq.gaps.push(k - last);
            seq.times.push(k);
            seq.sites.push(s);
            last = k;
        }
        k += 1;
    }
    Ok(seq)
}

/// Like [`regeneration_prefix`] but fails with a partial-result error when
/// fewer than `n` regenerations fit in the box.
pub fn regeneration_sequence(
    config: &Configuration,
    labeling: &ClusterLabeling,
    x: &Site,
    n: usize,
) -> Result<RegenerationSequence> {
    let seq = regeneration_prefix(config, labeling, x, n)?;
    if seq.len() < n {
        return Err(Error::Partial {
            found: seq.len(),
            requested: n,
            reason: format!("multiples of {x} reach half the box side"),
        });
    }
    Ok(seq)
}
