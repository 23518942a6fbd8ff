//! Black-box minimization by density-ratio estimation.
//!
//! The toolkit casts the expected-improvement acquisition as a class-posterior
//! probability: observations below the running `gamma`-quantile of objective
//! values get label 1, an MLP classifier is MAP-trained on the labels, a
//! Laplace approximation with generalized Gauss-Newton curvature supplies a
//! weight posterior, and candidates are ranked by the Monte-Carlo posterior
//! predictive `E[pi(x)] / gamma`. A TPE baseline estimates the same ratio from
//! two kernel density estimates, and random search closes the loop.
//!
//! All numerics are generic over the [`Real`] scalar (`f32` or `f64`); the
//! `*64` aliases below fix the common choice.

pub mod adam;
pub mod blackbox;
pub mod dataset;
pub mod error;
pub mod glm_gp;
pub mod laplace;
pub mod linalg;
pub mod mlp;
pub mod optimizer;
pub mod scalar;
pub mod tpe_kde;
pub mod two_gaussians;

pub use error::{Error, Result};
pub use scalar::Real;

/// A point in the search domain.
pub type Point<T> = Vec<T>;

pub type Domain64 = blackbox::Domain<f64>;
pub type Benchmark64 = blackbox::Benchmark<f64>;
pub type ObservationSet64 = dataset::ObservationSet<f64>;
pub type LabeledSet64 = dataset::LabeledSet<f64>;
pub type MlpParams64 = mlp::MlpParams<f64>;
pub type TrainConfig64 = laplace::TrainConfig<f64>;
pub type LaplacePosterior64 = laplace::LaplacePosterior<f64>;
pub type KdeModel64 = tpe_kde::KdeModel<f64>;
pub type SuggestStrategy64 = optimizer::SuggestStrategy<f64>;
pub type RunRecord64 = optimizer::RunRecord<f64>;
pub type RunOptions64 = optimizer::RunOptions<f64>;
