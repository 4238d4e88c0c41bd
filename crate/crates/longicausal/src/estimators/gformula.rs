//! Parametric g-formula: fit a bank of per-time conditional models, simulate
//! cohorts forward from the observed baseline under a treatment rule (or
//! under the fitted natural course), and average the simulated outcome.

use std::collections::HashMap;

use crate::error::Error;
use crate::expr::Expr;
use crate::glm::{fit_glm, Family, Frame, GlmSpec};
use crate::longdata::{
    InterventionRule, LongitudinalDataset, NodeRole, ValueKind,
};
use crate::rng::stream;
use crate::{Frame64, GlmFit64, Result};

use super::history::lagged_history;
use super::{bootstrap_ci, EstimateResult, TimeDiag};

/// Configuration of the g-formula model bank and simulation.
#[derive(Debug, Clone)]
pub struct GFormulaConfig {
    /// Most-recent past times in each design in addition to time 0.
    pub lag: u32,
    /// Forward-simulation cohort size.
    pub n_sim: usize,
    /// Percentile-bootstrap replicates (0 = point estimate only).
    pub bootstrap: usize,
    pub seed: u64,
    /// Within-time confounder ordering override (node names); default is the
    /// declared schema order. Exposed for ordering-sensitivity analysis.
    pub ordering: Option<Vec<String>>,
    /// Custom design expressions per node name, replacing the default
    /// main-terms history design for that node (evaluated at the node's
    /// time; variables may reference lagged values).
    pub features: Option<HashMap<String, Vec<Expr>>>,
}

impl Default for GFormulaConfig {
    fn default() -> Self {
        GFormulaConfig {
            lag: 1,
            n_sim: 10_000,
            bootstrap: 0,
            seed: 0,
            ordering: None,
            features: None,
        }
    }
}

#[derive(Debug, Clone)]
enum NodeModel {
    Gaussian { fit: GlmFit64, sigma: f64 },
    Logistic { fit: GlmFit64 },
    /// Degenerate response in the fitting subset.
    PointMass(f64),
}

#[derive(Debug, Clone)]
struct BankEntry {
    time: u32,
    role: NodeRole,
    col: usize,
    model: NodeModel,
    /// Plain history labels in the design.
    terms: Vec<String>,
    /// Custom expressions (paired with their generated column names).
    features: Vec<(String, Expr)>,
}

/// Fitted conditional models for every simulated node.
#[derive(Debug, Clone)]
pub struct GFormulaModelBank {
    entries: Vec<BankEntry>,
    /// Degenerate nodes replaced by point masses.
    pub warnings: Vec<String>,
}

fn eval_features_on(
    ds: &LongitudinalDataset,
    features: &[(String, Expr)],
    t: u32,
) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    for (fname, expr) in features {
        let mut col = Vec::with_capacity(ds.n());
        for i in 0..ds.n() {
            let lookup = |name: &str, at: i64| -> Option<f64> {
                if at < 0 {
                    return Some(f64::NAN);
                }
                ds.value(i, name, at as u32)
            };
            col.push(expr.eval(t as i64, &lookup)?);
        }
        out.push((fname.clone(), col));
    }
    Ok(out)
}

fn design_frame(
    ds: &LongitudinalDataset,
    entry_terms: &[String],
    features: &[(String, Expr)],
    t: u32,
    response: Option<(&str, Vec<f64>)>,
) -> Result<Frame64> {
    let mut frame = Frame::new(ds.n());
    for label in entry_terms {
        let col = ds
            .schema()
            .index_of_label(label)
            .ok_or_else(|| Error::Estimator(format!("missing column `{label}`")))?;
        frame.push(label.clone(), ds.column(col))?;
    }
    for (fname, col) in eval_features_on(ds, features, t)? {
        frame.push(fname, col)?;
    }
    if let Some((name, col)) = response {
        frame.push(name, col)?;
    }
    Ok(frame)
}

/// Within-time simulated node order at `t`: confounders (possibly permuted),
/// outcome, then — when modeling the natural course — treatment and
/// censoring.
fn node_order(
    ds: &LongitudinalDataset,
    t: u32,
    ordering: Option<&Vec<String>>,
    with_ac: bool,
) -> Vec<usize> {
    let schema = ds.schema();
    let mut conf = schema.confounders_at(t);
    if let Some(order) = ordering {
        conf.sort_by_key(|&c| {
            order
                .iter()
                .position(|n| *n == schema.nodes()[c].name)
                .unwrap_or(usize::MAX)
        });
    }
    let mut cols = conf;
    if let Some(c) = schema.outcome_at(t) {
        cols.push(c);
    }
    if with_ac {
        if let Some(c) = schema.treatment_at(t) {
            cols.push(c);
        }
        if let Some(c) = schema.censoring_at(t) {
            cols.push(c);
        }
    }
    cols
}

/// Design labels for the node in column `col` at time `t`, honoring the
/// permuted within-time order: lagged history plus the same-time nodes
/// already simulated before it.
fn default_terms(
    ds: &LongitudinalDataset,
    col: usize,
    t: u32,
    lag: u32,
    order: &[usize],
) -> Vec<String> {
    let schema = ds.schema();
    let mut terms = lagged_history(schema, t, lag);
    for &c in order {
        if c == col {
            break;
        }
        terms.push(schema.nodes()[c].label());
    }
    terms
}

/// Fits the conditional-model bank through `horizon`. `with_ac` adds the
/// treatment and censoring models needed for the natural course.
pub fn fit_model_bank(
    ds: &LongitudinalDataset,
    horizon: u32,
    cfg: &GFormulaConfig,
    with_ac: bool,
) -> Result<GFormulaModelBank> {
    let schema = ds.schema();
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for t in 1..=horizon {
        let order = node_order(ds, t, cfg.ordering.as_ref(), with_ac);
        for &col in &order {
            let node = &schema.nodes()[col];
            let at_risk: Vec<usize> = (0..ds.n())
                .filter(|&i| ds.at_risk_through(i, t - 1))
                .collect();
            let subset: Vec<usize> = if node.role == NodeRole::Treatment {
                // Monotone treatment: model initiation among the untreated.
                let prev = schema.treatment_at(t - 1);
                at_risk
                    .into_iter()
                    .filter(|&i| prev.map_or(true, |c| ds.get(i, c) == 0.0))
                    .collect()
            } else {
                at_risk
            };
            let custom = cfg
                .features
                .as_ref()
                .and_then(|m| m.get(&node.name))
                .cloned()
                .unwrap_or_default();
            let (terms, features): (Vec<String>, Vec<(String, Expr)>) = if custom.is_empty()
            {
                (default_terms(ds, col, t, cfg.lag, &order), Vec::new())
            } else {
                (
                    Vec::new(),
                    custom
                        .into_iter()
                        .enumerate()
                        .map(|(k, e)| (format!("__cf.{}.{t}.{k}", node.name), e))
                        .collect(),
                )
            };
            let label = node.label();
            let resp: Vec<f64> = ds.column(col);
            let observed: Vec<f64> = subset
                .iter()
                .map(|&i| resp[i])
                .filter(|v| v.is_finite())
                .collect();
            if observed.is_empty() {
                return Err(Error::NoSubjectsAtRisk(t));
            }
            let mean = observed.iter().sum::<f64>() / observed.len() as f64;
            let degenerate = observed.iter().all(|&v| v == observed[0]);
            let model = if degenerate {
                warnings.push(format!("degenerate response for {label}: point mass"));
                NodeModel::PointMass(observed[0])
            } else {
                let frame =
                    design_frame(ds, &terms, &features, t, Some(("__resp", resp.clone())))?;
                let mut all_terms: Vec<String> = terms.clone();
                all_terms.extend(features.iter().map(|(n, _)| n.clone()));
                let family = match node.kind {
                    ValueKind::Binary => Family::Binomial,
                    ValueKind::Continuous => Family::Gaussian,
                };
                let spec = GlmSpec::main_terms(family, "__resp", &all_terms);
                let fit = fit_glm(&spec, &frame, Some(&subset))?;
                match node.kind {
                    ValueKind::Continuous => {
                        let df = (fit.n_used.saturating_sub(fit.cols.len())).max(1);
                        let sigma = (fit.deviance / df as f64).max(0.0).sqrt();
                        NodeModel::Gaussian { fit, sigma }
                    }
                    ValueKind::Binary => NodeModel::Logistic { fit },
                }
            };
            let _ = mean;
            entries.push(BankEntry {
                time: t,
                role: node.role,
                col,
                model,
                terms,
                features,
            });
        }
    }
    Ok(GFormulaModelBank { entries, warnings })
}

/// How treatment/censoring evolve in the forward simulation.
enum SimPolicy<'a> {
    Rule(&'a InterventionRule),
    Natural,
}

/// Simulates `n_sim` subjects forward from resampled observed time-0 rows.
fn forward_simulate(
    bank: &GFormulaModelBank,
    ds: &LongitudinalDataset,
    policy: &SimPolicy<'_>,
    horizon: u32,
    n_sim: usize,
    seed: u64,
) -> Result<LongitudinalDataset> {
    let schema = ds.schema().clone();
    let mut sim = LongitudinalDataset::new(schema.clone(), n_sim);
    // Time-0 block (baselines + all time-0 nodes) copied from sampled rows.
    let t0_cols: Vec<usize> = (0..schema.len())
        .filter(|&c| schema.nodes()[c].time == 0)
        .collect();
    for i in 0..n_sim {
        let mut rng = stream(seed, i as u64, 0xBA5E);
        let src = (rng.next() % ds.n() as u64) as usize;
        for &c in &t0_cols {
            sim.set(i, c, ds.get(src, c));
        }
        // Intervention removes time-0 censoring.
        if matches!(policy, SimPolicy::Rule(_)) {
            if let Some(c) = schema.censoring_at(0) {
                sim.set(i, c, 0.0);
            }
        }
    }
    let mut active: Vec<bool> = (0..n_sim)
        .map(|i| sim.censoring_time(i).is_none())
        .collect();
    // Sticky-rule prior decision, seeded from the (copied) time-0 treatment.
    let a0 = schema.treatment_at(0);
    let mut prior: Vec<u8> = (0..n_sim)
        .map(|i| a0.map_or(0, |c| if sim.get(i, c) == 1.0 { 1 } else { 0 }))
        .collect();

    for t in 1..=horizon {
        for (gen, entry) in
            bank.entries.iter().enumerate().filter(|(_, e)| e.time == t)
        {
        // Mean-scale predictions from the fitted model (NaN for inactive
        // rows with missing history).
        let mu: Option<Vec<f64>> = match &entry.model {
            NodeModel::PointMass(_) => None,
            NodeModel::Gaussian { fit, .. } | NodeModel::Logistic { fit } => {
                let frame = design_frame(&sim, &entry.terms, &entry.features, t, None)?;
                Some(fit.predict(&frame)?)
            }
        };
        for i in 0..n_sim {
            if !active[i] {
                continue;
            }
            let value = match (&entry.model, entry.role, policy) {
                (_, NodeRole::Treatment, SimPolicy::Rule(rule)) => {
                    let lookup = |name: &str| sim.value(i, name, t);
                    let d = rule.evaluate(&lookup, prior[i])?;
                    prior[i] = d;
                    d as f64
                }
                (_, NodeRole::Censoring, SimPolicy::Rule(_)) => 0.0,
                (NodeModel::PointMass(v), _, _) => *v,
                (NodeModel::Gaussian { sigma, .. }, _, _) => {
                    let m = mu.as_ref().unwrap()[i];
                    let mut rng = stream(seed, i as u64, gen as u64 + 1);
                    let u1: f64 = rng.uniform().max(1e-15);
                    let u2: f64 = rng.uniform();
                    let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                    m + sigma * z
                }
                (NodeModel::Logistic { .. }, NodeRole::Treatment, SimPolicy::Natural) => {
                    // Monotone treatment maintained.
                    let prev_on = schema
                        .treatment_at(t - 1)
                        .map_or(false, |c| sim.get(i, c) == 1.0);
                    if prev_on {
                        1.0
                    } else {
                        let p = mu.as_ref().unwrap()[i];
                        let mut rng = stream(seed, i as u64, gen as u64 + 1);
                        if rng.uniform() < p {
                            1.0
                        } else {
                            0.0
                        }
                    }
                }
                (NodeModel::Logistic { .. }, _, _) => {
                    let p = mu.as_ref().unwrap()[i];
                    let mut rng = stream(seed, i as u64, gen as u64 + 1);
                    if rng.uniform() < p {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            sim.set(i, entry.col, value);
            if entry.role == NodeRole::Censoring && value == 1.0 {
                active[i] = false;
            }
            if entry.role == NodeRole::Treatment && value == 1.0 {
                prior[i] = 1;
            }
        }
        }
        // Under an intervention the bank carries no treatment or censoring
        // models: the rule assigns treatment and censoring is removed.
        if let SimPolicy::Rule(rule) = policy {
            if let Some(c) = schema.treatment_at(t) {
                for i in 0..n_sim {
                    if !active[i] {
                        continue;
                    }
                    let lookup = |name: &str| sim.value(i, name, t);
                    let d = rule.evaluate(&lookup, prior[i])?;
                    prior[i] = d;
                    sim.set(i, c, d as f64);
                }
            }
            if let Some(c) = schema.censoring_at(t) {
                for i in 0..n_sim {
                    if active[i] {
                        sim.set(i, c, 0.0);
                    }
                }
            }
        }
    }
    Ok(sim)
}

fn mean_at_risk(ds: &LongitudinalDataset, col: usize, t: u32) -> Option<f64> {
    let mut sum = 0.0;
    let mut k = 0usize;
    for i in 0..ds.n() {
        if ds.at_risk_through(i, t) {
            let v = ds.get(i, col);
            if v.is_finite() {
                sum += v;
                k += 1;
            }
        }
    }
    (k > 0).then(|| sum / k as f64)
}

/// Parametric g-formula estimate of the mean outcome at `horizon` under
/// `rule`, with optional percentile-bootstrap confidence interval
/// (refit-and-resimulate per replicate).
pub fn gformula_estimate(
    ds: &LongitudinalDataset,
    rule: &InterventionRule,
    horizon: u32,
    cfg: &GFormulaConfig,
) -> Result<EstimateResult> {
    let schema = ds.schema();
    let y_col = schema
        .outcome_at(horizon)
        .ok_or_else(|| Error::Estimator(format!("no outcome node at time {horizon}")))?;
    let run = |data: &LongitudinalDataset, sim_seed: u64| -> Result<f64> {
        let bank = fit_model_bank(data, horizon, cfg, false)?;
        let sim =
            forward_simulate(&bank, data, &SimPolicy::Rule(rule), horizon, cfg.n_sim, sim_seed)?;
        let vals: Vec<f64> =
            sim.column(y_col).into_iter().filter(|v| v.is_finite()).collect();
        if vals.is_empty() {
            return Err(Error::Estimator("no simulated outcomes".into()));
        }
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let psi = run(ds, cfg.seed)?;
    let ci = if cfg.bootstrap > 0 {
        bootstrap_ci(|sub, rep_seed| run(sub, rep_seed), ds, cfg.bootstrap, cfg.seed)?.ci
    } else {
        (psi, psi)
    };
    let diagnostics: Vec<TimeDiag> = (0..horizon)
        .map(|t| TimeDiag {
            t,
            mean_cc: None,
            pct_truncated: None,
            usable_n: (0..ds.n()).filter(|&i| ds.at_risk_through(i, t)).count(),
        })
        .collect();
    Ok(EstimateResult {
        method: "gformula".into(),
        rule: serde_json::to_string(rule).unwrap_or_else(|_| "<rule>".into()),
        t: horizon,
        psi,
        se: None,
        ci,
        diagnostics,
        ic: None,
    }
    .widen_ci())
}

/// One row of the natural-course comparison.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NaturalCourseRow {
    pub t: u32,
    /// Observed mean outcome among subjects at risk through t.
    pub observed_y: Option<f64>,
    /// Simulated natural-course mean outcome among simulated at-risk rows.
    pub simulated_y: Option<f64>,
    pub diff: Option<f64>,
    pub diff_ci: Option<(f64, f64)>,
    /// (label, observed mean, simulated mean) per confounder at t.
    pub confounders: Vec<(String, Option<f64>, Option<f64>)>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct NaturalCourseTable {
    pub rows: Vec<NaturalCourseRow>,
    pub warnings: Vec<String>,
}

/// Forward-simulates the fitted natural course (stochastic treatment and
/// censoring) and compares simulated with observed means per time.
pub fn natural_course(
    ds: &LongitudinalDataset,
    horizon: u32,
    cfg: &GFormulaConfig,
) -> Result<NaturalCourseTable> {
    let schema = ds.schema();
    let bank = fit_model_bank(ds, horizon, cfg, true)?;
    let sim = forward_simulate(&bank, ds, &SimPolicy::Natural, horizon, cfg.n_sim, cfg.seed)?;
    let diffs_of = |sim: &LongitudinalDataset| -> Vec<Option<f64>> {
        (0..=horizon)
            .map(|t| {
                let y = schema.outcome_at(t)?;
                match (mean_at_risk(ds, y, t), mean_at_risk(sim, y, t)) {
                    (Some(o), Some(s)) => Some(s - o),
                    _ => None,
                }
            })
            .collect()
    };
    // Percentile bootstrap of the per-time difference (refit + resimulate).
    let diff_cis: Vec<Option<(f64, f64)>> = if cfg.bootstrap > 0 {
        let reps: Vec<Result<Vec<Option<f64>>>> = (0..cfg.bootstrap as u64)
            .map(|rep| {
                let mut rng = stream(cfg.seed, rep, 0xB0075);
                let rows: Vec<usize> = (0..ds.n())
                    .map(|_| (rng.next() % ds.n() as u64) as usize)
                    .collect();
                let sub = ds.subset(&rows);
                let bank = fit_model_bank(&sub, horizon, cfg, true)?;
                let s = forward_simulate(
                    &bank,
                    &sub,
                    &SimPolicy::Natural,
                    horizon,
                    cfg.n_sim,
                    crate::rng::stream_seed(cfg.seed, rep, 0xB0071),
                )?;
                Ok((0..=horizon)
                    .map(|t| {
                        let y = schema.outcome_at(t)?;
                        match (mean_at_risk(&sub, y, t), mean_at_risk(&s, y, t)) {
                            (Some(o), Some(m)) => Some(m - o),
                            _ => None,
                        }
                    })
                    .collect())
            })
            .collect();
        let ok: Vec<&Vec<Option<f64>>> =
            reps.iter().filter_map(|r| r.as_ref().ok()).collect();
        (0..=horizon as usize)
            .map(|t| {
                let mut vals: Vec<f64> =
                    ok.iter().filter_map(|r| r[t]).filter(|v| v.is_finite()).collect();
                if vals.len() < 2 {
                    return None;
                }
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                Some((
                    super::quantile_sorted(&vals, 0.025),
                    super::quantile_sorted(&vals, 0.975),
                ))
            })
            .collect()
    } else {
        vec![None; horizon as usize + 1]
    };
    let diffs = diffs_of(&sim);
    let rows = (0..=horizon)
        .map(|t| {
            let y = schema.outcome_at(t);
            let observed_y = y.and_then(|c| mean_at_risk(ds, c, t));
            let simulated_y = y.and_then(|c| mean_at_risk(&sim, c, t));
            let confounders = schema
                .confounders_at(t)
                .into_iter()
                .map(|c| {
                    (
                        schema.nodes()[c].label(),
                        mean_at_risk(ds, c, t),
                        mean_at_risk(&sim, c, t),
                    )
                })
                .collect();
            NaturalCourseRow {
                t,
                observed_y,
                simulated_y,
                diff: diffs[t as usize],
                diff_ci: diff_cis[t as usize],
                confounders,
            }
        })
        .collect();
    Ok(NaturalCourseTable { rows, warnings: bank.warnings })
}
