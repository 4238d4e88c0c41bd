//! Longitudinal causal-inference engine.
//!
//! Implements three estimators of the counterfactual mean outcome at the end
//! of follow-up under a (possibly dynamic) treatment rule:
//!
//! * the parametric g-formula with forward simulation ([`estimators::gformula_estimate`]),
//! * the sequential g-formula / iterated conditional expectations
//!   ([`estimators::seq_gformula_estimate`]),
//! * longitudinal targeted maximum likelihood estimation with
//!   clever-covariate targeting ([`estimators::ltmle_estimate`]),
//!
//! together with a structural-equation simulator that provides Monte Carlo
//! ground truth ([`scm`]), a super-learner stacking layer ([`learners`]), and
//! positivity/truncation diagnostics ([`diagnostics`]).
//!
//! The regression core ([`glm`]) and the learner layer are generic over the
//! floating-point scalar via `num-traits`; concrete `f64` aliases are
//! re-exported at the crate root. The data model, simulator and estimators
//! work in `f64`.

pub mod benchmark;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod expr;
pub mod glm;
pub mod learners;
pub mod longdata;
pub mod rng;
pub mod scm;

pub use error::Error;

/// `f64` data frame used by the regression core.
pub type Frame64 = glm::Frame<f64>;
/// `f64` fitted GLM.
pub type GlmFit64 = glm::GlmFit<f64>;
/// `f64` fitted stacked regression.
pub type SuperLearnerFit64 = learners::SuperLearnerFit<f64>;

/// Convenience `Result` alias for this crate.
pub type Result<T> = std::result::Result<T, Error>;
