//! Sequential g-formula (iterated conditional expectations) and LTMLE.
//!
//! Both share one backward recursion over time; LTMLE adds the
//! intercept-only weighted fluctuation after each regression and reports
//! influence-curve confidence intervals. With the fluctuation disabled the
//! recursion *is* the sequential g-formula, so the two estimators agree
//! exactly in that configuration.

use crate::error::Error;
use crate::glm::{fluctuate_intercept, Family};
use crate::learners::{fit_super_learner, SuperLearnerSpec};
use crate::longdata::{
    rule_matrix, InterventionRule, LongitudinalDataset, NodeRole, OutcomeScale,
};
use crate::rng::stream_seed;
use crate::Result;

use super::gmodels::{clever_covariate, fit_g_models, CleverCovariateTrace};
use super::history::{base_frame, history_times, lagged_history, same_time_before};
use super::{bootstrap_ci, EstimateResult, RegressionConfig, TimeDiag};

const Z975: f64 = 1.959964;
const LOGIT_CLAMP: f64 = 1e-6;

/// Options of one backward-recursion run.
#[derive(Debug, Clone)]
pub struct IceOptions {
    pub horizon: u32,
    pub cfg: RegressionConfig,
    /// Lower truncation bound of the clever-covariate probabilities
    /// (LTMLE only).
    pub gbound: f64,
    /// Outcome range for the unit-interval transform; `None` derives it
    /// from the data (min/max with a 5% margin).
    pub scale: Option<OutcomeScale>,
    /// Apply the targeting fluctuation (LTMLE) or not (sequential
    /// g-formula).
    pub fluctuate: bool,
}

/// Output of the backward recursion.
#[derive(Debug)]
pub struct IceOutput {
    /// Estimate on the original outcome scale.
    pub psi: f64,
    /// Estimate on the unit-interval scale.
    pub psi_unit: f64,
    pub scale: OutcomeScale,
    /// Influence-curve values on the original outcome scale (only when the
    /// fluctuation ran).
    pub ic: Option<Vec<f64>>,
    /// Clever-covariate trace (only when the fluctuation ran).
    pub trace: Option<CleverCovariateTrace>,
    /// Subjects at risk through t−1 (the fitting subset) per recursion step,
    /// descending in t.
    pub fit_n: Vec<(u32, usize)>,
    /// Largest |weighted fluctuation score| / (sum of weights) across steps.
    pub max_score: f64,
    /// Steps where all fluctuation weights were zero (update skipped).
    pub no_update_steps: Vec<u32>,
}

/// Derives the outcome range from the observed outcome columns up to
/// `horizon`, widened by 5% of the spread on each side.
pub fn data_driven_scale(ds: &LongitudinalDataset, horizon: u32) -> Result<OutcomeScale> {
    let schema = ds.schema();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for node in schema.nodes().iter().enumerate().filter_map(|(c, n)| {
        (n.role == NodeRole::Outcome && n.time <= horizon).then_some(c)
    }) {
        for v in ds.column(node) {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Estimator("no observed outcomes".into()));
    }
    let spread = (hi - lo).max(1.0);
    OutcomeScale::new(lo - 0.05 * spread, hi + 0.05 * spread)
}

/// Runs the backward recursion for `rule` at `opts.horizon`.
pub fn ice_core(
    ds: &LongitudinalDataset,
    rule: &InterventionRule,
    opts: &IceOptions,
) -> Result<IceOutput> {
    ice_core_with_g(ds, rule, opts, None)
}

/// As [`ice_core`], but reusing previously fitted treatment/censoring
/// models so that only the truncation bound differs between runs.
pub fn ice_core_with_g(
    ds: &LongitudinalDataset,
    rule: &InterventionRule,
    opts: &IceOptions,
    shared_g: Option<&super::gmodels::GModels>,
) -> Result<IceOutput> {
    let schema = ds.schema();
    let horizon = opts.horizon;
    let n = ds.n();
    let y_final = schema
        .outcome_at(horizon)
        .ok_or_else(|| Error::Estimator(format!("no outcome node at time {horizon}")))?;
    let scale = match opts.scale {
        Some(s) => s,
        None => data_driven_scale(ds, horizon)?,
    };
    let frame = base_frame(ds);
    let decisions = rule_matrix(ds, rule)?;
    let a_times: Vec<u32> = schema
        .treatment_times()
        .into_iter()
        .filter(|&t| t > 0)
        .collect();
    let decision_col = |u: u32| -> Option<Vec<f64>> {
        a_times
            .iter()
            .position(|&s| s == u)
            .map(|j| (0..n).map(|i| decisions[i][j]).collect())
    };

    // Clever covariate (LTMLE only).
    let trace = if opts.fluctuate {
        let fitted;
        let g = match shared_g {
            Some(g) => g,
            None => {
                fitted =
                    fit_g_models(ds, &frame, horizon.saturating_sub(1).max(1), &opts.cfg)?;
                &fitted
            }
        };
        Some(clever_covariate(ds, rule, g, opts.gbound)?)
    } else {
        None
    };
    let weights_at = |t: u32| -> Vec<f64> {
        match &trace {
            Some(tr) => tr.h[t as usize].clone(),
            None => vec![1.0; n],
        }
    };

    // iterated[s] on the unit scale; index s = 0..=horizon.
    let mut iterated: Vec<Vec<f64>> = vec![Vec::new(); horizon as usize + 1];
    iterated[horizon as usize] = ds
        .column(y_final)
        .iter()
        .map(|&y| {
            if y.is_finite() {
                scale.to_unit(y).clamp(0.0, 1.0)
            } else {
                f64::NAN
            }
        })
        .collect();

    let mut fit_n = Vec::new();
    let mut max_score = 0.0f64;
    let mut no_update_steps = Vec::new();

    for s in (1..=horizon).rev() {
        let resp = iterated[s as usize].clone();
        let at_risk: Vec<usize> = (0..n)
            .filter(|&i| ds.at_risk_through(i, s - 1) && resp[i].is_finite())
            .collect();
        if at_risk.is_empty() {
            return Err(Error::NoSubjectsAtRisk(s));
        }
        fit_n.push((s, at_risk.len()));

        let mut terms = lagged_history(schema, s, opts.cfg.lag);
        terms.extend(same_time_before(schema, s, NodeRole::Outcome));

        let mut fit_frame = frame.clone();
        fit_frame.push("__resp", resp.clone())?;
        let spec = SuperLearnerSpec {
            family: Family::QuasiBinomial,
            response: "__resp".into(),
            terms,
            weights: None,
            set: opts.cfg.set,
            folds: opts.cfg.folds,
            seed: stream_seed(opts.cfg.seed, 0x1CE, s as u64),
        };
        let qfit = fit_super_learner(&spec, &fit_frame, Some(&at_risk))?;

        // Predict with the lagged treatment history set to the rule.
        let mut pred_frame = fit_frame.clone();
        for u in history_times(s, opts.cfg.lag) {
            if u >= 1 {
                if let Some(col) = decision_col(u) {
                    let label = schema.nodes()[schema.treatment_at(u).unwrap()].label();
                    pred_frame.push(label, col)?;
                }
            }
        }
        let initial = qfit.predict(&pred_frame)?;

        let updated = if opts.fluctuate {
            let w = weights_at(s - 1);
            let fl = fluctuate_intercept(&initial, &resp, &w, LOGIT_CLAMP);
            if fl.no_update {
                no_update_steps.push(s);
            } else {
                // Fluctuation score on the fitting rows.
                let mut score = 0.0;
                let mut wsum = 0.0;
                for i in 0..n {
                    if w[i] > 0.0 && resp[i].is_finite() && fl.updated[i].is_finite() {
                        score += w[i] * (resp[i] - fl.updated[i]);
                        wsum += w[i];
                    }
                }
                if wsum > 0.0 {
                    max_score = max_score.max((score / wsum).abs());
                }
            }
            fl.updated
        } else {
            initial
        };
        iterated[s as usize - 1] = updated;
    }

    let finite: Vec<f64> = iterated[0].iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Estimator("no usable final predictions".into()));
    }
    let psi_unit = finite.iter().sum::<f64>() / finite.len() as f64;
    let psi = scale.from_unit(psi_unit);

    // Influence curve (Eq.-(5)-style), on the original scale.
    let ic = trace.as_ref().map(|tr| {
        (0..n)
            .map(|i| {
                let mut v = 0.0;
                for s in 1..=horizon as usize {
                    let h = tr.h[s - 1][i];
                    if h <= 0.0 {
                        continue;
                    }
                    let ys = iterated[s][i];
                    let yp = iterated[s - 1][i];
                    // Iterated outcomes unobserved past the recorded
                    // censoring history contribute nothing.
                    if ys.is_finite() && yp.is_finite() {
                        v += h * (ys - yp);
                    }
                }
                let y0 = if iterated[0][i].is_finite() {
                    iterated[0][i]
                } else {
                    psi_unit
                };
                (v + y0 - psi_unit) * scale.width()
            })
            .collect::<Vec<f64>>()
    });

    Ok(IceOutput {
        psi,
        psi_unit,
        scale,
        ic,
        trace,
        fit_n,
        max_score,
        no_update_steps,
    })
}

fn trace_diagnostics(trace: &CleverCovariateTrace, horizon: u32) -> Vec<TimeDiag> {
    (0..horizon)
        .map(|t| {
            let h = &trace.h[t as usize];
            let numer = &trace.numer[t as usize];
            let usable: Vec<usize> = (0..trace.n).filter(|&i| numer[i]).collect();
            if usable.is_empty() {
                return TimeDiag { t, mean_cc: None, pct_truncated: None, usable_n: 0 };
            }
            let mean_cc = usable.iter().map(|&i| h[i]).sum::<f64>() / usable.len() as f64;
            let pct = usable
                .iter()
                .filter(|&&i| trace.truncated[t as usize][i])
                .count() as f64
                / usable.len() as f64;
            TimeDiag {
                t,
                mean_cc: Some(mean_cc),
                pct_truncated: Some(pct),
                usable_n: usable.len(),
            }
        })
        .collect()
}

fn rule_json(rule: &InterventionRule) -> String {
    serde_json::to_string(rule).unwrap_or_else(|_| "<rule>".into())
}

/// LTMLE of the mean outcome at `horizon` under `rule`, with influence-curve
/// confidence interval.
pub fn ltmle_estimate(
    ds: &LongitudinalDataset,
    rule: &InterventionRule,
    horizon: u32,
    cfg: &RegressionConfig,
    gbound: f64,
    scale: Option<OutcomeScale>,
) -> Result<EstimateResult> {
    if !(gbound > 0.0 && gbound < 0.5) {
        return Err(Error::Estimator(format!(
            "truncation bound {gbound} outside (0, 0.5)"
        )));
    }
    let opts = IceOptions {
        horizon,
        cfg: cfg.clone(),
        gbound,
        scale,
        fluctuate: true,
    };
    let out = ice_core(ds, rule, &opts)?;
    let ic = out.ic.as_ref().expect("fluctuation ran");
    let n = ds.n() as f64;
    let mean = ic.iter().sum::<f64>() / n;
    let var = ic.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let diagnostics = trace_diagnostics(out.trace.as_ref().unwrap(), horizon);
    Ok(EstimateResult {
        method: "ltmle".into(),
        rule: rule_json(rule),
        t: horizon,
        psi: out.psi,
        se: Some(se),
        ci: (out.psi - Z975 * se, out.psi + Z975 * se),
        diagnostics,
        ic: Some(ic.clone()),
    })
}

/// Sequential g-formula (iterated conditional expectations) with a
/// percentile-bootstrap confidence interval (`bootstrap_b = 0` skips it).
pub fn seq_gformula_estimate(
    ds: &LongitudinalDataset,
    rule: &InterventionRule,
    horizon: u32,
    cfg: &RegressionConfig,
    bootstrap_b: usize,
    seed: u64,
) -> Result<EstimateResult> {
    let opts = IceOptions {
        horizon,
        cfg: cfg.clone(),
        gbound: 0.0,
        scale: None,
        fluctuate: false,
    };
    let out = ice_core(ds, rule, &opts)?;
    let diagnostics: Vec<TimeDiag> = out
        .fit_n
        .iter()
        .map(|&(t, k)| TimeDiag { t, mean_cc: None, pct_truncated: None, usable_n: k })
        .collect();
    let ci = if bootstrap_b > 0 {
        let boot = bootstrap_ci(
            |sub, rep_seed| {
                let mut o = opts.clone();
                o.cfg.seed = rep_seed;
                o.scale = Some(out.scale); // hold the transform fixed
                Ok(ice_core(sub, rule, &o)?.psi)
            },
            ds,
            bootstrap_b,
            seed,
        )?;
        boot.ci
    } else {
        (out.psi, out.psi)
    };
    Ok(EstimateResult {
        method: "seq_gformula".into(),
        rule: rule_json(rule),
        t: horizon,
        psi: out.psi,
        se: None,
        ci,
        diagnostics,
        ic: None,
    }
    .widen_ci())
}
