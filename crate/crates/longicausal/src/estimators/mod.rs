//! The three estimator families — parametric g-formula with forward
//! simulation, sequential g-formula (iterated conditional expectations), and
//! LTMLE with clever-covariate targeting — plus influence-curve and
//! bootstrap inference.

mod gformula;
mod gmodels;
mod history;
mod ice;

pub use gformula::{
    gformula_estimate, natural_course, GFormulaConfig, NaturalCourseRow, NaturalCourseTable,
};
pub use gmodels::{clever_covariate, fit_g_models, CleverCovariateTrace, GModels, ProbModel};
pub use gformula::fit_model_bank;
pub use ice::{
    data_driven_scale, ice_core, ice_core_with_g, ltmle_estimate, seq_gformula_estimate,
    IceOptions, IceOutput,
};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Error;
use crate::learners::LearnerSet;
use crate::longdata::LongitudinalDataset;
use crate::rng::{stream, stream_seed};
use crate::{Frame64, Result};

/// Shared configuration of the stacked regressions inside an estimator.
#[derive(Debug, Clone)]
pub struct RegressionConfig {
    pub set: LearnerSet,
    pub folds: usize,
    /// How many most-recent past times enter each regression in addition to
    /// the anchor time and time 0 (the default 1 means times t, t−1, 0).
    pub lag: u32,
    pub seed: u64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig { set: LearnerSet::Set1, folds: 10, lag: 1, seed: 0 }
    }
}

/// One column per schema label; the frame all estimator regressions run on.
pub fn dataset_frame(ds: &LongitudinalDataset) -> Frame64 {
    history::base_frame(ds)
}

/// Per-time diagnostics of one estimation run.
#[derive(Debug, Clone, Serialize)]
pub struct TimeDiag {
    pub t: u32,
    /// Mean clever covariate among rows with positive numerator (LTMLE).
    pub mean_cc: Option<f64>,
    /// Fraction of those rows whose cumulative probability fell below the
    /// truncation bound.
    pub pct_truncated: Option<f64>,
    /// Rows with positive numerator (adherent, uncensored, alive) at t.
    pub usable_n: usize,
}

/// A point estimate with its uncertainty and diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateResult {
    pub method: String,
    /// JSON encoding of the rule estimated under.
    pub rule: String,
    pub t: u32,
    pub psi: f64,
    pub se: Option<f64>,
    pub ci: (f64, f64),
    pub diagnostics: Vec<TimeDiag>,
    /// Per-subject influence-curve values (LTMLE only), on the outcome scale.
    #[serde(skip)]
    pub ic: Option<Vec<f64>>,
}

impl EstimateResult {
    pub(crate) fn widen_ci(mut self) -> Self {
        self.ci.0 = self.ci.0.min(self.psi);
        self.ci.1 = self.ci.1.max(self.psi);
        self
    }
}

/// Summary of a nonparametric bootstrap.
#[derive(Debug, Clone)]
pub struct BootstrapSummary {
    pub ci: (f64, f64),
    /// Successful replicate estimates, in replicate order.
    pub reps: Vec<f64>,
    pub failed: usize,
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let pos = q * (m - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Percentile-bootstrap 95% interval for an estimator closure.
///
/// Each replicate resamples subjects with replacement (seeded by replicate
/// index, so the result is deterministic and independent of scheduling) and
/// calls `estimator(resample, replicate_seed)`. Failing replicates are
/// dropped and counted; more than 10% failures is an error.
pub fn bootstrap_ci<Fx>(
    estimator: Fx,
    ds: &LongitudinalDataset,
    b: usize,
    seed: u64,
) -> Result<BootstrapSummary>
where
    Fx: Fn(&LongitudinalDataset, u64) -> Result<f64> + Sync,
{
    if b == 0 {
        return Err(Error::Estimator("bootstrap needs at least one replicate".into()));
    }
    let n = ds.n();
    let outcomes: Vec<Result<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(seed, rep, 0xB0075);
            let rows: Vec<usize> =
                (0..n).map(|_| (rng.next() % n as u64) as usize).collect();
            let sub = ds.subset(&rows);
            estimator(&sub, stream_seed(seed, rep, 0xB0071))
        })
        .collect();
    let mut reps = Vec::with_capacity(b);
    let mut failed = 0usize;
    for o in outcomes {
        match o {
            Ok(v) if v.is_finite() => reps.push(v),
            _ => failed += 1,
        }
    }
    if failed * 10 > b {
        return Err(Error::BootstrapFailures { failed, total: b });
    }
    let mut sorted = reps.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ci = (quantile_sorted(&sorted, 0.025), quantile_sorted(&sorted, 0.975));
    Ok(BootstrapSummary { ci, reps, failed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::longdata::{NodeInfo, NodeRole, NodeSchema, ValueKind};
    use crate::rng::stream;

    fn gaussian_ds(n: usize, seed: u64) -> LongitudinalDataset {
        let schema = NodeSchema::new(vec![NodeInfo::new(
            "Y",
            NodeRole::Outcome,
            ValueKind::Continuous,
            0,
        )])
        .unwrap();
        let mut ds = LongitudinalDataset::new(schema, n);
        let mut rng = stream(seed, 0, 0);
        for i in 0..n {
            // Box-Muller standard normal.
            let u1: f64 = rng.uniform().max(1e-12);
            let u2: f64 = rng.uniform();
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            ds.set(i, 0, z);
        }
        ds
    }

    fn mean_estimator(ds: &LongitudinalDataset, _seed: u64) -> Result<f64> {
        let col = ds.column(0);
        Ok(col.iter().sum::<f64>() / col.len() as f64)
    }

    #[test]
    fn bootstrap_matches_analytic_standard_error() {
        let n = 10_000;
        let ds = gaussian_ds(n, 7);
        let s = bootstrap_ci(mean_estimator, &ds, 400, 11).unwrap();
        assert_eq!(s.failed, 0);
        assert!(s.ci.0 < 0.0 && s.ci.1 > 0.0, "{:?}", s.ci);
        let width = s.ci.1 - s.ci.0;
        let expect = 2.0 * 1.96 / (n as f64).sqrt();
        assert!((width - expect).abs() < 0.2 * expect, "{width} vs {expect}");
    }

    #[test]
    fn bootstrap_deterministic_and_seed_sensitive() {
        let ds = gaussian_ds(200, 3);
        let a = bootstrap_ci(mean_estimator, &ds, 50, 1).unwrap();
        let b = bootstrap_ci(mean_estimator, &ds, 50, 1).unwrap();
        let c = bootstrap_ci(mean_estimator, &ds, 50, 2).unwrap();
        assert_eq!(a.reps, b.reps);
        assert_ne!(a.reps, c.reps);
    }

    #[test]
    fn constant_estimator_gives_zero_width() {
        let ds = gaussian_ds(50, 9);
        let s = bootstrap_ci(|_, _| Ok(1.5), &ds, 30, 4).unwrap();
        assert_eq!(s.ci, (1.5, 1.5));
    }

    #[test]
    fn failure_fraction_enforced() {
        let ds = gaussian_ds(50, 9);
        let flaky = |d: &LongitudinalDataset, _s: u64| -> Result<f64> {
            // Fails whenever subject 0 was resampled into the first slot an
            // "unlucky" number of times; engineered ~50% failure.
            if d.get(0, 0) > 0.0 {
                Ok(1.0)
            } else {
                Err(Error::Estimator("synthetic".into()))
            }
        };
        assert!(matches!(
            bootstrap_ci(flaky, &ds, 100, 5),
            Err(Error::BootstrapFailures { .. })
        ));
    }
}
