//! Treatment and censoring probability models (g-models) and the clever
//! covariate built from them.

use crate::glm::Family;
use crate::learners::{fit_super_learner, SuperLearnerSpec};
use crate::longdata::{rule_adherence_mask, rule_matrix, InterventionRule, LongitudinalDataset, NodeRole};
use crate::rng::stream_seed;
use crate::{Frame64, Result, SuperLearnerFit64};

use super::history::{lagged_history, same_time_before};
use super::RegressionConfig;

/// A per-time probability model: a stacked fit, or a constant when the
/// response was degenerate (no events / all events) in the fitting subset.
#[derive(Debug, Clone)]
pub enum ProbModel {
    Constant(f64),
    Stacked(SuperLearnerFit64),
}

/// Fitted treatment and censoring processes, with their in-sample
/// predictions cached per time for clever-covariate construction.
#[derive(Debug, Clone)]
pub struct GModels {
    /// Post-baseline times covered, ascending.
    pub times: Vec<u32>,
    /// P(A_t = 1 | history) among subjects untreated at t−1 and at risk
    /// through t−1; `None` when the schema has no treatment node at t.
    pub treatment: Vec<Option<ProbModel>>,
    /// P(censored at t | history, A_t) among subjects at risk through t−1
    /// (combined with the death process when survival nodes are present);
    /// `None` when the schema has neither censoring nor survival node at t.
    pub censoring: Vec<Option<ProbModel>>,
    /// Cached predictions aligned with `times`: `p_a[k][i]`, `p_c[k][i]`.
    pub p_a: Vec<Vec<f64>>,
    pub p_c: Vec<Vec<f64>>,
}

fn fit_prob_model(
    frame: &Frame64,
    response: &str,
    terms: Vec<String>,
    subset: &[usize],
    cfg: &RegressionConfig,
    seed: u64,
) -> Result<(ProbModel, Vec<f64>)> {
    let y = frame.require(response)?;
    let events: Vec<f64> = subset
        .iter()
        .map(|&i| y[i])
        .filter(|v| v.is_finite())
        .collect();
    let mean = if events.is_empty() {
        0.0
    } else {
        events.iter().sum::<f64>() / events.len() as f64
    };
    if events.len() < cfg.folds.max(2) || mean == 0.0 || mean == 1.0 {
        return Ok((ProbModel::Constant(mean), vec![mean; frame.n()]));
    }
    let spec = SuperLearnerSpec {
        family: Family::Binomial,
        response: response.to_string(),
        terms,
        weights: None,
        set: cfg.set,
        folds: cfg.folds,
        seed,
    };
    let fit = fit_super_learner(&spec, frame, Some(subset))?;
    let pred = fit.predict(frame)?;
    Ok((ProbModel::Stacked(fit), pred))
}

/// Fits the g-models for every post-baseline time up to `horizon`.
///
/// The treatment model at `t` is fit only among subjects not yet on
/// treatment at `t−1` (treatment is deterministic once started); the
/// censoring model among subjects at risk through `t−1`, with the same-time
/// treatment in its design.
pub fn fit_g_models(
    ds: &LongitudinalDataset,
    frame: &Frame64,
    horizon: u32,
    cfg: &RegressionConfig,
) -> Result<GModels> {
    let schema = ds.schema();
    let times: Vec<u32> = schema
        .times()
        .into_iter()
        .filter(|&t| t >= 1 && t <= horizon)
        .collect();
    let mut treatment = Vec::new();
    let mut censoring = Vec::new();
    let mut p_a = Vec::new();
    let mut p_c = Vec::new();
    for &t in &times {
        let at_risk: Vec<usize> =
            (0..ds.n()).filter(|&i| ds.at_risk_through(i, t - 1)).collect();
        if schema.treatment_at(t).is_some() {
            let prev_a = schema.treatment_at(t - 1);
            let untreated: Vec<usize> = at_risk
                .iter()
                .copied()
                .filter(|&i| prev_a.map_or(true, |c| ds.get(i, c) == 0.0))
                .collect();
            let mut terms = lagged_history(schema, t, cfg.lag);
            terms.extend(same_time_before(schema, t, NodeRole::Treatment));
            let label = schema.nodes()[schema.treatment_at(t).unwrap()].label();
            let (model, pred) = fit_prob_model(
                frame,
                &label,
                terms,
                &untreated,
                cfg,
                stream_seed(cfg.seed, 0xA0, t as u64),
            )?;
            treatment.push(Some(model));
            p_a.push(pred);
        } else {
            treatment.push(None);
            p_a.push(vec![f64::NAN; ds.n()]);
        }
        let cens_col = schema.censoring_at(t);
        let surv_col = schema.survival_at(t);
        if cens_col.is_some() || surv_col.is_some() {
            // Combined censoring/death indicator as one process per time.
            let mut frame_c = frame.clone();
            let event: Vec<f64> = (0..ds.n())
                .map(|i| {
                    let c = cens_col.map_or(0.0, |c| ds.get(i, c));
                    let d = surv_col.map_or(0.0, |c| {
                        let s = ds.get(i, c);
                        if s.is_nan() {
                            f64::NAN
                        } else {
                            1.0 - s
                        }
                    });
                    if c.is_nan() && d.is_nan() {
                        f64::NAN
                    } else {
                        c.max(d)
                    }
                })
                .collect();
            frame_c.push("__event", event)?;
            let mut terms = lagged_history(schema, t, cfg.lag);
            terms.extend(same_time_before(schema, t, NodeRole::Censoring));
            let (model, pred) = fit_prob_model(
                &frame_c,
                "__event",
                terms,
                &at_risk,
                cfg,
                stream_seed(cfg.seed, 0xC0, t as u64),
            )?;
            censoring.push(Some(model));
            p_c.push(pred);
        } else {
            censoring.push(None);
            p_c.push(vec![0.0; ds.n()]);
        }
    }
    Ok(GModels { times, treatment, censoring, p_a, p_c })
}

/// Per-subject, per-time clever covariate and its ingredients.
#[derive(Debug, Clone)]
pub struct CleverCovariateTrace {
    pub n: usize,
    pub t_max: u32,
    /// `h[t][i]`: clever covariate H_t (0 when the numerator indicator is 0).
    pub h: Vec<Vec<f64>>,
    /// Numerator indicator: adherent, uncensored, and alive through t.
    pub numer: Vec<Vec<bool>>,
    /// Raw (untruncated) cumulative probability through t; meaningful only
    /// while the numerator holds.
    pub cum_prob: Vec<Vec<f64>>,
    /// Whether the cumulative probability fell below the bound by time t.
    pub truncated: Vec<Vec<bool>>,
    pub gbound: f64,
}

/// Builds the clever covariate from fitted g-models: the adherence/censoring
/// indicator over the cumulative product of the fitted probabilities of
/// following the rule and remaining uncensored, with both the per-time
/// probabilities and the running product bounded below at `gbound`.
pub fn clever_covariate(
    ds: &LongitudinalDataset,
    rule: &InterventionRule,
    g: &GModels,
    gbound: f64,
) -> Result<CleverCovariateTrace> {
    let schema = ds.schema();
    let t_max = schema.t_max();
    let n = ds.n();
    let decisions = rule_matrix(ds, rule)?;
    let adherent = rule_adherence_mask(ds, rule)?;
    let a_times: Vec<u32> = schema
        .treatment_times()
        .into_iter()
        .filter(|&t| t > 0)
        .collect();
    let horizon = *g.times.last().unwrap_or(&0);

    let mut h = vec![vec![0.0; n]; t_max as usize + 1];
    let mut numer = vec![vec![false; n]; t_max as usize + 1];
    let mut cum_prob = vec![vec![f64::NAN; n]; t_max as usize + 1];
    let mut truncated = vec![vec![false; n]; t_max as usize + 1];

    for i in 0..n {
        let mut cum_raw = 1.0f64; // untruncated cumulative probability
        let mut cum_bounded = 1.0f64; // per-factor-bounded, then product-bounded
        let mut trunc = false;
        for t in 0..=t_max {
            let ok = adherent[i][t as usize];
            if !ok {
                numer[t as usize][i] = false;
                h[t as usize][i] = 0.0;
                cum_prob[t as usize][i] = cum_raw;
                truncated[t as usize][i] = trunc;
                continue;
            }
            if t >= 1 && t <= horizon {
                if let Some(k) = g.times.iter().position(|&s| s == t) {
                    // Treatment factor: deterministic 1 once on treatment
                    // with d=1; otherwise the fitted probability of taking
                    // the rule's decision.
                    if a_times.contains(&t) && g.treatment[k].is_some() {
                        let j = a_times.iter().position(|&s| s == t).unwrap();
                        let d = decisions[i][j];
                        let prev_on = schema
                            .treatment_at(t - 1)
                            .map_or(false, |c| ds.get(i, c) == 1.0);
                        let fac = if d == 1.0 && prev_on {
                            1.0
                        } else {
                            let p = g.p_a[k][i];
                            if d == 1.0 {
                                p
                            } else {
                                1.0 - p
                            }
                        };
                        if !fac.is_finite() {
                            // Cannot evaluate: drop the subject from the
                            // weighted parts from here on.
                            numer[t as usize][i] = false;
                            h[t as usize][i] = 0.0;
                            cum_prob[t as usize][i] = cum_raw;
                            continue;
                        }
                        cum_raw *= fac;
                        cum_bounded *= fac.max(gbound);
                    }
                    // Censoring/death factor: probability of remaining at
                    // risk.
                    if g.censoring[k].is_some() {
                        let fac = 1.0 - g.p_c[k][i];
                        if fac.is_finite() {
                            cum_raw *= fac;
                            cum_bounded *= fac.max(gbound);
                        }
                    }
                    cum_bounded = cum_bounded.max(gbound);
                    if cum_raw < gbound {
                        trunc = true;
                    }
                }
            }
            numer[t as usize][i] = true;
            cum_prob[t as usize][i] = cum_raw;
            truncated[t as usize][i] = trunc;
            h[t as usize][i] = 1.0 / cum_bounded;
        }
    }
    Ok(CleverCovariateTrace { n, t_max, h, numer, cum_prob, truncated, gbound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LearnerSet;
    use crate::longdata::{NodeInfo, NodeSchema, ValueKind};

    fn cfg() -> RegressionConfig {
        RegressionConfig { set: LearnerSet::Set1, folds: 2, lag: 1, seed: 1 }
    }

    fn schema(t_max: u32) -> NodeSchema {
        let mut nodes = vec![NodeInfo::new("V", NodeRole::Baseline, ValueKind::Binary, 0)];
        for t in 0..=t_max {
            nodes.push(NodeInfo::new("L", NodeRole::Confounder, ValueKind::Continuous, t));
            nodes.push(NodeInfo::new("Y", NodeRole::Outcome, ValueKind::Continuous, t));
            nodes.push(NodeInfo::new("A", NodeRole::Treatment, ValueKind::Binary, t));
            nodes.push(NodeInfo::new("C", NodeRole::Censoring, ValueKind::Binary, t));
        }
        NodeSchema::new(nodes).unwrap()
    }

    /// 2-period dataset with balanced treatment and no censoring events.
    fn toy() -> LongitudinalDataset {
        let mut ds = LongitudinalDataset::new(schema(2), 8);
        for i in 0..8 {
            let a1 = (i % 2) as f64;
            let a2 = if a1 == 1.0 { 1.0 } else { ((i / 2) % 2) as f64 };
            let row = [
                (i % 2) as f64, // V
                i as f64,       // L.0
                0.0,            // Y.0
                0.0,            // A.0
                0.0,            // C.0
                i as f64 + 1.0, // L.1
                0.1,            // Y.1
                a1,             // A.1
                0.0,            // C.1
                i as f64 + 2.0, // L.2
                0.2,            // Y.2
                a2,             // A.2
                0.0,            // C.2
            ];
            for (c, v) in row.iter().enumerate() {
                ds.set(i, c, *v);
            }
        }
        ds
    }

    #[test]
    fn degenerate_censoring_becomes_constant_zero() {
        let ds = toy();
        let frame = super::super::history::base_frame(&ds);
        let g = fit_g_models(&ds, &frame, 2, &cfg()).unwrap();
        assert!(matches!(g.censoring[0], Some(ProbModel::Constant(p)) if p == 0.0));
        assert!(g.treatment[0].is_some());
        // Treated-at-1 subjects are excluded from the time-2 treatment fit:
        // only the 4 untreated rows remain, half of which start at t=2.
        assert!(matches!(&g.treatment[1], Some(ProbModel::Stacked(_)) | Some(ProbModel::Constant(_))));
    }

    #[test]
    fn clever_covariate_unit_probabilities_give_unit_h() {
        let ds = toy();
        let frame = super::super::history::base_frame(&ds);
        let mut g = fit_g_models(&ds, &frame, 2, &cfg()).unwrap();
        // Force all probabilities to "always follows the rule".
        for k in 0..g.times.len() {
            g.p_a[k] = vec![1.0; ds.n()];
            g.p_c[k] = vec![0.0; ds.n()];
        }
        let trace = clever_covariate(&ds, &InterventionRule::d1(), &g, 0.01).unwrap();
        for i in 0..ds.n() {
            assert_eq!(trace.h[0][i], 1.0, "H_0 is 1 for everyone at risk");
        }
        // d1 adherent = treated from t=1 on: subjects with a1 == 1.
        for i in 0..ds.n() {
            let a1 = ds.value(i, "A", 1).unwrap();
            assert_eq!(trace.numer[2][i], a1 == 1.0);
            if a1 == 1.0 {
                assert_eq!(trace.h[2][i], 1.0);
                assert!(!trace.truncated[2][i]);
            } else {
                assert_eq!(trace.h[2][i], 0.0);
            }
        }
    }

    #[test]
    fn truncation_bounds_cumulative_product() {
        let ds = toy();
        let frame = super::super::history::base_frame(&ds);
        let mut g = fit_g_models(&ds, &frame, 2, &cfg()).unwrap();
        for k in 0..g.times.len() {
            g.p_a[k] = vec![0.1; ds.n()]; // rule d1: factor 0.1 per time
            g.p_c[k] = vec![0.0; ds.n()];
        }
        let trace = clever_covariate(&ds, &InterventionRule::d1(), &g, 0.05).unwrap();
        for i in 0..ds.n() {
            if trace.numer[2][i] {
                let a1_started = ds.value(i, "A", 1).unwrap() == 1.0;
                // Cumulative raw prob: 0.1 at t=1; then 1 (deterministic) or
                // 0.1 again at t=2; bounded below at 0.05 -> H = 1/max(.05, .)
                let raw = if a1_started { 0.1 } else { 0.01 };
                assert!((trace.cum_prob[2][i] - raw).abs() < 1e-12);
                assert!((trace.h[2][i] - 1.0 / raw.max(0.05)).abs() < 1e-9);
                assert_eq!(trace.truncated[2][i], raw < 0.05);
            }
        }
    }
}
