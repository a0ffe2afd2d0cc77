//! Percolation clusters on finite boxes of Z^d, the lazy simple random walk on
//! the infinite-cluster proxy, and estimators for the quantities governing its
//! large deviations: hitting-time Laplace exponents, Lyapunov exponents,
//! directional constants of the chemical distance, the rate function and the
//! limit shape.
//!
//! Numeric routines are generic over the scalar type (see [`Scalar`]); the
//! aliases at the crate root fix `f64`, which is what the experiment runner
//! uses.

pub mod cluster;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod exponents;
pub mod lattice;
pub mod rng;
pub mod samplers;
pub mod scalar;
pub mod shapes;
pub mod stats;
pub mod union_find;
pub mod walk;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use cluster::{ClusterLabeling, Distance};
pub use ensemble::{Ensemble, Member};
pub use lattice::{Boundary, BoxSpec, Configuration, Mode, Site};
pub use samplers::{Dynamics, Model, SamplerSpec};
pub use walk::{RegenerationSequence, WalkKernel};

pub type LaplaceEstimate64 = walk::LaplaceEstimate<f64>;
pub type AlphaCurve64 = exponents::AlphaCurve<f64>;
pub type MuEstimate64 = exponents::MuEstimate<f64>;
pub type RateFunction64 = exponents::RateFunction<f64>;
pub type TripleDensity64 = exponents::TripleDensity<f64>;
pub type Polytope64 = shapes::Polytope<f64>;
pub type ShapeSet64 = shapes::ShapeSet<f64>;
pub type HausdorffReport64 = shapes::HausdorffReport<f64>;
