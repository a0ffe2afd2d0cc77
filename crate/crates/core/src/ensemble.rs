//! Independent replicas of a sampler, optionally conditioned on the event
//! that the origin lies on a spanning giant cluster.
//!
//! Conditioning is by rejection. Attempt `a` of replica `r` draws from the
//! sampler stream `(seed, r << 20 | a)`, so every member depends only on its
//! replica index and the ensemble is identical for any number of workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{label_clusters, ClusterLabeling};
use crate::error::{Error, Result};
use crate::lattice::{BoxSpec, Configuration};
use crate::samplers::{sample, SamplerSpec};

/// Largest number of attempts per replica under conditioning.
pub const MAX_ATTEMPTS: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conditioning {
    #[default]
    None,
    /// Origin on the giant cluster and the giant cluster spans the box.
    OriginOnGiant,
}

pub struct Member {
    pub replica: u64,
    /// Attempts used, including the accepted one.
    pub attempts: u64,
    pub config: Configuration,
    pub labeling: ClusterLabeling,
}

impl Member {
    fn draw(spec_box: &BoxSpec, sampler: &SamplerSpec, replica: u64, attempt: u64) -> Result<Self> {
        let config = sample(spec_box, &sampler.with_replica((replica << 20) | attempt))?;
        let labeling = label_clusters(&config);
        Ok(Member {
            replica,
            attempts: attempt + 1,
            config,
            labeling,
        })
    }

    /// Origin on the giant cluster and the giant cluster spans.
    pub fn omega0(&self) -> bool {
        self.labeling.on_giant(0) && self.labeling.giant_spans()
    }

    /// Unbiased single-sample estimate of the probability of the
    /// conditioning event: on a wrapped box the fraction of sites on a
    /// spanning giant (all translates of the origin), else the indicator.
    fn omega0_weight(&self) -> f64 {
        if self.config.spec().is_wrapped() {
            if self.labeling.giant_spans() {
                self.labeling.giant_density()
            } else {
                0.0
            }
        } else if self.omega0() {
            1.0
        } else {
            0.0
        }
    }
}

pub struct Ensemble {
    pub spec_box: BoxSpec,
    pub sampler: SamplerSpec,
    pub conditioning: Conditioning,
    pub members: Vec<Member>,
    attempts: u64,
    weight_sum: f64,
    accepted_weight_sum: f64,
}

impl Ensemble {
    /// Draws `replicas` members in parallel.
    pub fn sample(
        spec_box: &BoxSpec,
        sampler: &SamplerSpec,
        replicas: usize,
        conditioning: Conditioning,
    ) -> Result<Self> {
        if replicas == 0 {
            return Err(Error::domain("an ensemble needs at least one replica"));
        }
        let drawn: Vec<Result<(Member, f64)>> = (0..replicas as u64)
            .into_par_iter()
            .map(|r| {
                let mut weights = 0.0;
                for a in 0..MAX_ATTEMPTS {
                    let m = Member::draw(spec_box, sampler, r, a)?;
                    weights += m.omega0_weight();
                    if conditioning == Conditioning::None || m.omega0() {
                        return Ok((m, weights));
                    }
                }
                Err(Error::Resource(format!(
                    "replica {r}: conditioning event not seen in {MAX_ATTEMPTS} attempts"
                )))
            })
            .collect();
        let mut members = Vec::with_capacity(replicas);
        let mut weight_sum = 0.0;
        let mut accepted_weight_sum = 0.0;
        let mut attempts = 0;
        for d in drawn {
            let (m, w) = d?;
            attempts += m.attempts;
            weight_sum += w;
            accepted_weight_sum += m.omega0_weight();
            members.push(m);
        }
        Ok(Ensemble {
            spec_box: *spec_box,
            sampler: sampler.clone(),
            conditioning,
            members,
            attempts,
            weight_sum,
            accepted_weight_sum,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn configs(&self) -> Vec<&Configuration> {
        self.members.iter().map(|m| &m.config).collect()
    }

    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    /// Accepted members over attempts.
    pub fn acceptance_fraction(&self) -> f64 {
        self.members.len() as f64 / self.attempts as f64
    }

    /// Estimate of the probability of the conditioning event from every
    /// attempted configuration, each contributing its translate-averaged
    /// weight. On wrapped boxes this has far smaller variance than the
    /// acceptance fraction and the same mean.
    pub fn omega0_probability(&self) -> f64 {
        if self.conditioning == Conditioning::None {
            self.accepted_weight_sum / self.members.len() as f64
        } else {
            self.weight_sum / self.attempts as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Boundary, Mode};

    #[test]
    fn full_lattice_accepts_immediately() {
        let b = BoxSpec::torus(2, 16).unwrap();
        let e = Ensemble::sample(&b, &SamplerSpec::bernoulli_bond(1.0, 1), 4, Conditioning::OriginOnGiant).unwrap();
        assert_eq!(e.attempts(), 4);
        assert_eq!(e.acceptance_fraction(), 1.0);
        assert_eq!(e.omega0_probability(), 1.0);
    }

    #[test]
    fn conditioned_members_satisfy_event() {
        let b = BoxSpec::torus(2, 24).unwrap();
        let e = Ensemble::sample(&b, &SamplerSpec::bernoulli_bond(0.6, 5), 30, Conditioning::OriginOnGiant).unwrap();
        assert!(e.members.iter().all(|m| m.omega0()));
        assert!(e.attempts() >= 30);
        let p = e.omega0_probability();
        assert!(p > 0.5 && p < 1.0, "{p}");
        let replicas: Vec<u64> = e.members.iter().map(|m| m.replica).collect();
        assert_eq!(replicas, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let b = BoxSpec::torus(2, 20).unwrap();
        let s = SamplerSpec::bernoulli_bond(0.55, 9);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| Ensemble::sample(&b, &s, 12, Conditioning::OriginOnGiant).unwrap())
        };
        let (a, c) = (run(1), run(3));
        assert_eq!(a.attempts(), c.attempts());
        for (x, y) in a.members.iter().zip(&c.members) {
            assert_eq!(x.config, y.config);
        }
    }

    #[test]
    fn impossible_event_and_zero_replicas() {
        let b = BoxSpec::new(2, 6, Mode::Bond, Boundary::Free).unwrap();
        assert!(Ensemble::sample(&b, &SamplerSpec::bernoulli_bond(0.5, 1), 0, Conditioning::None).is_err());
        let e = Ensemble::sample(&b, &SamplerSpec::bernoulli_bond(0.0, 1), 3, Conditioning::None).unwrap();
        assert_eq!(e.omega0_probability(), 0.0);
    }
}
