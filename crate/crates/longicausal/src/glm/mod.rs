//! Self-contained regression primitives.
//!
//! Weighted GLMs via iteratively reweighted least squares (Gaussian-identity,
//! Binomial-logit, QuasiBinomial-logit), offsets, intercept-only fluctuation
//! fits, stepwise selection by AIC, pairwise-interaction design expansion, and
//! non-negative least squares on the probability simplex.
//!
//! Everything here is generic over the floating-point scalar `F`
//! (`f32`/`f64`) through [`Scalar`]; concrete `f64` aliases live at the crate
//! root.

mod fluctuate;
mod frame;
mod irls;
mod linalg;
mod nnls;
mod stepwise;

pub use fluctuate::{fluctuate_intercept, FluctResult};
pub use frame::Frame;
pub use irls::{fit_glm, DesignCol, Family, GlmFit, GlmSpec};
pub use nnls::nnls_simplex;
pub use stepwise::stepwise_aic;

use num_traits::Float;

/// Scalar bound for the numerical core: a float with the handful of extra
/// conversions the fitting code needs.
pub trait Scalar:
    Float
    + num_traits::NumAssignOps
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` constant.
    fn c(x: f64) -> Self {
        Self::from(x).expect("constant representable in scalar type")
    }

    /// Widening conversion to `f64`.
    fn to64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + num_traits::NumAssignOps
        + std::iter::Sum
        + std::fmt::Debug
        + std::fmt::Display
        + Send
        + Sync
        + 'static
{
}

/// Expands `terms` with all pairwise interactions, capped so the total column
/// count (with intercept) stays at or below `max(n/5, terms + 1)`; interaction
/// columns are dropped from the end of the pair list first, so main effects
/// are never sacrificed for products.
pub fn expand_pairwise(terms: &[String], n: usize) -> (Vec<String>, Vec<(String, String)>) {
    let mut pairs = Vec::new();
    for j in 0..terms.len() {
        for k in (j + 1)..terms.len() {
            pairs.push((terms[j].clone(), terms[k].clone()));
        }
    }
    let cap = (n / 5).max(terms.len() + 1);
    let budget = cap.saturating_sub(1 + terms.len());
    pairs.truncate(budget);
    (terms.to_vec(), pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_cap_drops_products_first() {
        let terms: Vec<String> = (0..10).map(|i| format!("x{i}")).collect();
        let (main, pairs) = expand_pairwise(&terms, 100); // cap = 20 columns
        assert_eq!(main.len(), 10);
        assert_eq!(pairs.len(), 9); // 1 + 10 + 9 = 20
        let (_, all_pairs) = expand_pairwise(&terms, 100_000);
        assert_eq!(all_pairs.len(), 45);
    }
}
