//! Candidate learners and the stacking (super learner) ensemble used for all
//! outcome, treatment, and censoring regressions.
//!
//! Each learner is a GLM-family procedure; the ensemble weights are chosen by
//! non-negative least squares on the V-fold cross-validated predictions
//! (quadratic loss), constrained to the probability simplex. Learners that
//! fail to fit (error or non-convergence) in any fold are dropped from the
//! stack and recorded; estimation proceeds with the survivors.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::glm::{
    expand_pairwise, fit_glm, nnls_simplex, stepwise_aic, Family, Frame, GlmFit, GlmSpec,
    Scalar,
};
use crate::rng::stream;
use crate::Result;

/// A candidate regression procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    /// Weighted response mean (intercept-only GLM).
    Mean,
    /// GLM with all main terms.
    GlmMainTerms,
    /// GLM with main terms plus pairwise interactions (capped by sample size).
    GlmInteractions,
    /// Bidirectional stepwise main-terms GLM selected by AIC, re-run per fold.
    GlmStepAic,
}

impl LearnerKind {
    pub fn label(&self) -> &'static str {
        match self {
            LearnerKind::Mean => "mean",
            LearnerKind::GlmMainTerms => "glm_main_terms",
            LearnerKind::GlmInteractions => "glm_interactions",
            LearnerKind::GlmStepAic => "glm_step_aic",
        }
    }
}

/// Nested learner libraries of increasing flexibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerSet {
    Set1,
    Set2,
    Set3,
}

impl LearnerSet {
    pub fn members(&self) -> &'static [LearnerKind] {
        match self {
            LearnerSet::Set1 => &[LearnerKind::GlmMainTerms],
            LearnerSet::Set2 => &[
                LearnerKind::GlmMainTerms,
                LearnerKind::Mean,
                LearnerKind::GlmInteractions,
            ],
            LearnerSet::Set3 => &[
                LearnerKind::GlmMainTerms,
                LearnerKind::Mean,
                LearnerKind::GlmInteractions,
                LearnerKind::GlmStepAic,
            ],
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "set1" => Ok(LearnerSet::Set1),
            "set2" => Ok(LearnerSet::Set2),
            "set3" => Ok(LearnerSet::Set3),
            other => Err(Error::Estimator(format!("unknown learner set `{other}`"))),
        }
    }
}

/// Specification of one stacked regression.
#[derive(Debug, Clone)]
pub struct SuperLearnerSpec {
    pub family: Family,
    pub response: String,
    pub terms: Vec<String>,
    /// Optional per-row weight column; zero-weight rows are excluded.
    pub weights: Option<String>,
    pub set: LearnerSet,
    pub folds: usize,
    pub seed: u64,
}

/// One surviving member: its kind and full-data fit.
#[derive(Debug, Clone)]
pub struct FittedLearner<F> {
    pub kind: LearnerKind,
    pub fit: GlmFit<F>,
}

/// A fitted stacked regression.
#[derive(Debug, Clone)]
pub struct SuperLearnerFit<F> {
    pub family: Family,
    pub members: Vec<FittedLearner<F>>,
    /// Simplex weights aligned with `members`.
    pub weights: Vec<F>,
    /// Cross-validated quadratic risk per member (same rows, same folds).
    pub cv_risk: Vec<F>,
    /// Cross-validated quadratic risk of the stacked predictor.
    pub sl_cv_risk: F,
    /// Learners dropped for failing in some fold or on the full data.
    pub failed: Vec<LearnerKind>,
    pub folds: usize,
    pub seed: u64,
}

/// Resolves the concrete GLM specification a learner uses on a given training
/// set (data-dependent for the interaction cap and stepwise selection).
fn member_spec<F: Scalar>(
    kind: LearnerKind,
    sl: &SuperLearnerSpec,
    frame: &Frame<F>,
    train: &[usize],
) -> Result<GlmSpec> {
    let mut spec = GlmSpec::main_terms(sl.family, sl.response.clone(), &sl.terms);
    spec.weights = sl.weights.clone();
    match kind {
        LearnerKind::Mean => {
            spec.terms.clear();
            Ok(spec)
        }
        LearnerKind::GlmMainTerms => Ok(spec),
        LearnerKind::GlmInteractions => {
            let (main, pairs) = expand_pairwise(&sl.terms, train.len());
            spec.terms = main;
            spec.interactions = pairs;
            Ok(spec)
        }
        LearnerKind::GlmStepAic => {
            let mut base = spec.clone();
            base.terms.clear();
            stepwise_aic(&base, &sl.terms, frame, Some(train))
        }
    }
}

/// Fits one learner on `train`; `None` marks failure (error, non-convergence).
fn try_fit<F: Scalar>(
    kind: LearnerKind,
    sl: &SuperLearnerSpec,
    frame: &Frame<F>,
    train: &[usize],
) -> Option<GlmFit<F>> {
    let spec = member_spec(kind, sl, frame, train).ok()?;
    let fit = fit_glm(&spec, frame, Some(train)).ok()?;
    if fit.converged {
        Some(fit)
    } else {
        None
    }
}

/// Fits the stacked regression on `subset` rows (all rows when `None`).
///
/// Rows with a missing response or non-positive weight are excluded up
/// front; fold assignment is a seeded shuffle of the remaining rows. Failed
/// learners are dropped and listed in `failed`; if none survive the result
/// is [`Error::EmptyLibrary`].
pub fn fit_super_learner<F: Scalar>(
    sl: &SuperLearnerSpec,
    frame: &Frame<F>,
    subset: Option<&[usize]>,
) -> Result<SuperLearnerFit<F>> {
    if sl.folds < 2 {
        return Err(Error::Estimator("folds must be at least 2".into()));
    }
    let y = frame.require(&sl.response)?;
    let w = match &sl.weights {
        Some(name) => Some(frame.require(name)?),
        None => None,
    };
    let candidate_rows: Vec<usize> = match subset {
        Some(s) => s.to_vec(),
        None => (0..frame.n()).collect(),
    };
    let rows: Vec<usize> = candidate_rows
        .into_iter()
        .filter(|&i| {
            y[i].is_finite() && w.map_or(true, |w| w[i].is_finite() && w[i] > F::zero())
        })
        .collect();
    if rows.len() < sl.folds {
        return Err(Error::Estimator(format!(
            "{} usable rows for `{}` but {} folds requested",
            rows.len(),
            sl.response,
            sl.folds
        )));
    }

    // Seeded shuffle, then round-robin fold assignment.
    let mut shuffled = rows.clone();
    let mut rng = stream(sl.seed, 0x5157, 0);
    for i in (1..shuffled.len()).rev() {
        let j = (rng.next() % (i as u64 + 1)) as usize;
        shuffled.swap(i, j);
    }
    let fold_of: std::collections::HashMap<usize, usize> = shuffled
        .iter()
        .enumerate()
        .map(|(pos, &r)| (r, pos % sl.folds))
        .collect();

    // Cross-validated predictions per learner, indexed like `rows`.
    let kinds = sl.set.members();
    let mut cv_pred: Vec<Option<Vec<F>>> =
        kinds.iter().map(|_| Some(vec![F::nan(); rows.len()])).collect();
    for fold in 0..sl.folds {
        let train: Vec<usize> =
            rows.iter().copied().filter(|r| fold_of[r] != fold).collect();
        for (k, &kind) in kinds.iter().enumerate() {
            if cv_pred[k].is_none() {
                continue;
            }
            match try_fit(kind, sl, frame, &train) {
                Some(fit) => {
                    let pred = fit.predict(frame)?;
                    let store = cv_pred[k].as_mut().unwrap();
                    for (pos, &r) in rows.iter().enumerate() {
                        if fold_of[&r] == fold {
                            store[pos] = pred[r];
                        }
                    }
                }
                None => cv_pred[k] = None,
            }
        }
    }

    // Full-data refits for the survivors.
    let mut members = Vec::new();
    let mut surviving_cv: Vec<Vec<F>> = Vec::new();
    let mut failed = Vec::new();
    for (k, &kind) in kinds.iter().enumerate() {
        let cv = match cv_pred[k].take() {
            Some(cv) => cv,
            None => {
                failed.push(kind);
                continue;
            }
        };
        match try_fit(kind, sl, frame, &rows) {
            Some(fit) => {
                members.push(FittedLearner { kind, fit });
                surviving_cv.push(cv);
            }
            None => failed.push(kind),
        }
    }
    if members.is_empty() {
        return Err(Error::EmptyLibrary);
    }

    // Stacking rows: response and every survivor's CV prediction finite.
    let k = members.len();
    let stack_rows: Vec<usize> = (0..rows.len())
        .filter(|&pos| surviving_cv.iter().all(|cv| cv[pos].is_finite()))
        .collect();
    if stack_rows.is_empty() {
        return Err(Error::Estimator(format!(
            "no rows with finite cross-validated predictions for `{}`",
            sl.response
        )));
    }
    // Weighted quadratic loss via sqrt-weight scaling.
    let mut z = Vec::with_capacity(stack_rows.len() * k);
    let mut yy = Vec::with_capacity(stack_rows.len());
    let mut wsum = F::zero();
    for &pos in &stack_rows {
        let r = rows[pos];
        let wi = w.map_or(F::one(), |w| w[r]);
        let sw = wi.sqrt();
        for cv in &surviving_cv {
            z.push(cv[pos] * sw);
        }
        yy.push(y[r] * sw);
        wsum += wi;
    }
    let weights = nnls_simplex(&z, &yy, stack_rows.len(), k);

    // Risks on the stacking rows (weighted mean squared error).
    let mut cv_risk = vec![F::zero(); k];
    let mut sl_cv_risk = F::zero();
    for (m, &pos) in stack_rows.iter().enumerate() {
        let r = rows[pos];
        let wi = w.map_or(F::one(), |w| w[r]);
        let mut stacked = F::zero();
        for (j, cv) in surviving_cv.iter().enumerate() {
            let e = y[r] - cv[pos];
            cv_risk[j] += wi * e * e;
            stacked += weights[j] * cv[pos];
        }
        let e = y[r] - stacked;
        sl_cv_risk += wi * e * e;
        let _ = m;
    }
    for rsk in cv_risk.iter_mut() {
        *rsk = *rsk / wsum;
    }
    sl_cv_risk = sl_cv_risk / wsum;

    Ok(SuperLearnerFit {
        family: sl.family,
        members,
        weights,
        cv_risk,
        sl_cv_risk,
        failed,
        folds: sl.folds,
        seed: sl.seed,
    })
}

impl<F: Scalar> SuperLearnerFit<F> {
    /// Weighted-combination predictions on new data; probability-family
    /// output is clamped to `[0, 1]`. `NaN` propagates from missing inputs.
    pub fn predict(&self, frame: &Frame<F>) -> Result<Vec<F>> {
        let n = frame.n();
        let mut out = vec![F::zero(); n];
        for (member, &alpha) in self.members.iter().zip(&self.weights) {
            let pred = member.fit.predict(frame)?;
            for (o, p) in out.iter_mut().zip(pred) {
                *o += alpha * p;
            }
        }
        if self.family != Family::Gaussian {
            for o in out.iter_mut() {
                if *o < F::zero() {
                    *o = F::zero();
                } else if *o > F::one() {
                    *o = F::one();
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn sl_spec(set: LearnerSet, family: Family) -> SuperLearnerSpec {
        SuperLearnerSpec {
            family,
            response: "y".into(),
            terms: vec!["x1".into(), "x2".into()],
            weights: None,
            set,
            folds: 5,
            seed: 42,
        }
    }

    fn linear_frame(n: usize, seed: u64) -> Frame<f64> {
        let mut f = Frame::new(n);
        let mut s = stream(seed, 0, 0);
        let x1: Vec<f64> = (0..n).map(|_| s.uniform() * 2.0 - 1.0).collect();
        let x2: Vec<f64> = (0..n).map(|_| s.uniform() * 2.0 - 1.0).collect();
        let y: Vec<f64> = x1
            .iter()
            .zip(&x2)
            .map(|(&a, &b)| 1.0 + 2.0 * a - b + 0.1 * (s.uniform() - 0.5))
            .collect();
        f.push("x1", x1).unwrap();
        f.push("x2", x2).unwrap();
        f.push("y", y).unwrap();
        f
    }

    #[test]
    fn mean_only_library_predicts_overall_mean() {
        let mut spec = sl_spec(LearnerSet::Set1, Family::Gaussian);
        spec.terms.clear(); // main-terms learner degenerates to the mean
        let f = linear_frame(100, 1);
        let fit = fit_super_learner(&spec, &f, None).unwrap();
        let pred = fit.predict(&f).unwrap();
        let mean = f.col("y").unwrap().iter().sum::<f64>() / 100.0;
        for p in pred {
            assert!((p - mean).abs() < 1e-10);
        }
    }

    #[test]
    fn stacked_risk_beats_every_member() {
        let f = linear_frame(200, 2);
        let fit =
            fit_super_learner(&sl_spec(LearnerSet::Set2, Family::Gaussian), &f, None).unwrap();
        for &r in &fit.cv_risk {
            assert!(fit.sl_cv_risk <= r + 1e-10, "{} vs {r}", fit.sl_cv_risk);
        }
        // Linear truth: the main-terms learner should dominate the mean.
        let main = fit
            .members
            .iter()
            .position(|m| m.kind == LearnerKind::GlmMainTerms)
            .unwrap();
        let mean = fit.members.iter().position(|m| m.kind == LearnerKind::Mean).unwrap();
        assert!(fit.cv_risk[main] < fit.cv_risk[mean]);
    }

    #[test]
    fn weights_on_simplex_and_deterministic() {
        let f = linear_frame(150, 3);
        let spec = sl_spec(LearnerSet::Set3, Family::Gaussian);
        let a = fit_super_learner(&spec, &f, None).unwrap();
        let b = fit_super_learner(&spec, &f, None).unwrap();
        assert!((a.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(a.weights.iter().all(|&w| w >= 0.0));
        assert_eq!(a.weights, b.weights);
        let mut other = spec.clone();
        other.seed = 43;
        let c = fit_super_learner(&other, &f, None).unwrap();
        // Different folds may shift weights; risks stay close.
        assert!((a.sl_cv_risk - c.sl_cv_risk).abs() < 0.05);
    }

    #[test]
    fn probability_family_predictions_in_unit_interval() {
        let n = 200;
        let mut f = linear_frame(n, 4);
        let x1 = f.col("x1").unwrap().to_vec();
        let mut s = stream(4, 9, 0);
        let yb: Vec<f64> = x1
            .iter()
            .map(|&v| {
                let p = 1.0 / (1.0 + (-2.0 * v).exp());
                if s.uniform() < p {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        f.push("y", yb).unwrap();
        let fit =
            fit_super_learner(&sl_spec(LearnerSet::Set2, Family::Binomial), &f, None).unwrap();
        for p in fit.predict(&f).unwrap() {
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn subset_and_zero_weights_excluded() {
        let mut f = linear_frame(120, 5);
        let mut w = vec![1.0; 120];
        for wi in w.iter_mut().take(20) {
            *wi = 0.0;
        }
        f.push("w", w).unwrap();
        let mut spec = sl_spec(LearnerSet::Set1, Family::Gaussian);
        spec.weights = Some("w".into());
        let subset: Vec<usize> = (0..60).collect();
        let fit = fit_super_learner(&spec, &f, Some(&subset)).unwrap();
        assert_eq!(fit.members[0].fit.n_used, 40); // 60 subset minus 20 zero-weight
    }

    #[test]
    fn too_few_rows_errors() {
        let f = linear_frame(4, 6);
        let fit = fit_super_learner(&sl_spec(LearnerSet::Set1, Family::Gaussian), &f, None);
        assert!(fit.is_err());
    }
}
