//! Structural-equation simulator: declarative node lists compiled to stack
//! programs, a built-in 12-period cohort model, counterfactual simulation
//! under intervention rules, and Monte Carlo oracles for ground truth and
//! data support.

mod compile;
mod model;
mod paper;
mod simulate;

pub use model::{Dist, NodeDef, StructuralEquationModel};
pub use paper::build_paper_dgp;
pub use simulate::{
    data_support, observational_means, simulate, true_psi, SimMode, TruthEstimate,
};
