use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

use super::dataset::LongitudinalDataset;
use super::schema::NodeRole;

/// Comparison operator of a rule clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    fn holds(self, value: f64, thr: f64) -> bool {
        match self {
            Comparator::Lt => value < thr,
            Comparator::Le => value <= thr,
            Comparator::Gt => value > thr,
            Comparator::Ge => value >= thr,
        }
    }
}

/// One threshold condition of a dynamic rule, e.g. `L1 < 750`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleClause {
    pub var: String,
    pub cmp: Comparator,
    pub thr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RuleBody {
    Static {
        #[serde(rename = "static")]
        value: u8,
    },
    Dynamic {
        /// Combined with OR: treat when any clause holds.
        clauses: Vec<RuleClause>,
        /// Once treated under the rule, stay treated.
        sticky: bool,
    },
}

/// A treatment rule: either a static assignment or an OR of threshold
/// clauses on current covariate values, optionally sticky (monotone).
///
/// Rules apply to treatment nodes from the first post-baseline treatment
/// time onward; the time-0 treatment is taken as given.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InterventionRule {
    body: RuleBody,
}

impl InterventionRule {
    pub fn fixed(value: u8) -> Self {
        InterventionRule { body: RuleBody::Static { value: if value == 0 { 0 } else { 1 } } }
    }

    pub fn dynamic(clauses: Vec<RuleClause>, sticky: bool) -> Self {
        InterventionRule { body: RuleBody::Dynamic { clauses, sticky } }
    }

    /// Treat immediately.
    pub fn d1() -> Self {
        Self::fixed(1)
    }

    /// Start treatment when CD4 count < 750, CD4 fraction < 0.25, or
    /// WAZ < −2; stay on once started.
    pub fn d2() -> Self {
        Self::dynamic(
            vec![
                RuleClause { var: "L1".into(), cmp: Comparator::Lt, thr: 750.0 },
                RuleClause { var: "L2".into(), cmp: Comparator::Lt, thr: 0.25 },
                RuleClause { var: "L3".into(), cmp: Comparator::Lt, thr: -2.0 },
            ],
            true,
        )
    }

    /// Start treatment when CD4 count < 350, CD4 fraction < 0.15, or
    /// WAZ < −2; stay on once started.
    pub fn d3() -> Self {
        Self::dynamic(
            vec![
                RuleClause { var: "L1".into(), cmp: Comparator::Lt, thr: 350.0 },
                RuleClause { var: "L2".into(), cmp: Comparator::Lt, thr: 0.15 },
                RuleClause { var: "L3".into(), cmp: Comparator::Lt, thr: -2.0 },
            ],
            true,
        )
    }

    /// Never treat.
    pub fn d4() -> Self {
        Self::fixed(0)
    }

    /// Looks up a named built-in rule (`d1`..`d4`).
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "d1" => Some(Self::d1()),
            "d2" => Some(Self::d2()),
            "d3" => Some(Self::d3()),
            "d4" => Some(Self::d4()),
            _ => None,
        }
    }

    /// Covariate names the rule reads.
    pub fn covariates(&self) -> Vec<&str> {
        match &self.body {
            RuleBody::Static { .. } => Vec::new(),
            RuleBody::Dynamic { clauses, .. } => {
                clauses.iter().map(|c| c.var.as_str()).collect()
            }
        }
    }

    /// Evaluates the rule at one time point. `lookup` maps a covariate name
    /// to its current value (`None` when the schema has no such variable);
    /// `prior` is the previous treatment decision, used by sticky rules.
    pub fn evaluate(
        &self,
        lookup: &dyn Fn(&str) -> Option<f64>,
        prior: u8,
    ) -> Result<u8> {
        match &self.body {
            RuleBody::Static { value } => Ok(*value),
            RuleBody::Dynamic { clauses, sticky } => {
                if *sticky && prior == 1 {
                    return Ok(1);
                }
                for clause in clauses {
                    let v = lookup(&clause.var).ok_or_else(|| {
                        Error::UnknownRuleCovariate(clause.var.clone())
                    })?;
                    if v.is_nan() {
                        return Err(Error::Rule(format!(
                            "covariate {} is missing where the rule needs it",
                            clause.var
                        )));
                    }
                    if clause.cmp.holds(v, clause.thr) {
                        return Ok(1);
                    }
                }
                Ok(0)
            }
        }
    }
}

/// Rule decisions on observed covariates: one row per subject, one column
/// per post-baseline treatment time (ascending). Entries are 0/1, or `NaN`
/// from the first time the subject's covariate history is unobserved
/// (censored or missing) onward.
pub fn rule_matrix(
    ds: &LongitudinalDataset,
    rule: &InterventionRule,
) -> Result<Vec<Vec<f64>>> {
    let schema = ds.schema();
    let a_times: Vec<u32> = schema
        .treatment_times()
        .into_iter()
        .filter(|&t| t > 0)
        .collect();
    // Static rules never read covariates; validate dynamic ones up front.
    for var in rule.covariates() {
        if !schema
            .nodes()
            .iter()
            .any(|n| n.name == var && n.role != NodeRole::Treatment)
        {
            return Err(Error::UnknownRuleCovariate(var.to_string()));
        }
    }
    let a0 = schema.treatment_at(0);
    let mut out = Vec::with_capacity(ds.n());
    for i in 0..ds.n() {
        let mut prior: u8 = match a0 {
            Some(c) if ds.get(i, c) == 1.0 => 1,
            _ => 0,
        };
        let mut row = Vec::with_capacity(a_times.len());
        let mut broken = false;
        for &t in &a_times {
            if broken || !ds.at_risk_through(i, t) {
                broken = true;
                row.push(f64::NAN);
                continue;
            }
            let lookup = |name: &str| ds.value(i, name, t);
            match rule.evaluate(&lookup, prior) {
                Ok(d) => {
                    prior = d;
                    row.push(d as f64);
                }
                Err(Error::Rule(_)) => {
                    // Needed covariate missing while nominally at risk:
                    // undefined from here on.
                    broken = true;
                    row.push(f64::NAN);
                }
                Err(e) => return Err(e),
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// Per-subject, per-time adherence indicator: entry `(i, t)` is true when
/// subject `i` is uncensored (and alive) through `t` and every observed
/// post-baseline treatment up to `t` equals the rule decision on the
/// observed covariate history. Monotone non-increasing in `t`.
pub fn rule_adherence_mask(
    ds: &LongitudinalDataset,
    rule: &InterventionRule,
) -> Result<Vec<Vec<bool>>> {
    let schema = ds.schema();
    let t_max = schema.t_max();
    let decisions = rule_matrix(ds, rule)?;
    let a_times: Vec<u32> = schema
        .treatment_times()
        .into_iter()
        .filter(|&t| t > 0)
        .collect();
    let mut out = Vec::with_capacity(ds.n());
    for i in 0..ds.n() {
        let mut row = Vec::with_capacity(t_max as usize + 1);
        let mut ok = true;
        for t in 0..=t_max {
            if ok && !ds.at_risk_through(i, t) {
                ok = false;
            }
            if ok {
                for (j, &s) in a_times.iter().enumerate() {
                    if s > t {
                        break;
                    }
                    let d = decisions[i][j];
                    let a = schema
                        .treatment_at(s)
                        .map(|c| ds.get(i, c))
                        .unwrap_or(f64::NAN);
                    if d.is_nan() || a.is_nan() || a != d {
                        ok = false;
                        break;
                    }
                }
            }
            row.push(ok);
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::dataset::LongitudinalDataset;
    use super::super::schema::{NodeInfo, NodeRole, NodeSchema, ValueKind};

    fn lookup_of<'a>(vals: &'a [(&'a str, f64)]) -> impl Fn(&str) -> Option<f64> + 'a {
        move |name: &str| vals.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }

    #[test]
    fn thresholds_cleared_gives_zero() {
        let r = InterventionRule::d2();
        let l = lookup_of(&[("L1", 800.0), ("L2", 0.30), ("L3", -1.0)]);
        assert_eq!(r.evaluate(&l, 0).unwrap(), 0);
    }

    #[test]
    fn static_rule_ignores_covariates() {
        let r = InterventionRule::d1();
        let l = lookup_of(&[]);
        assert_eq!(r.evaluate(&l, 0).unwrap(), 1);
        assert_eq!(InterventionRule::d4().evaluate(&l, 1).unwrap(), 0);
    }

    #[test]
    fn sticky_monotonicity() {
        let r = InterventionRule::d3();
        let l = lookup_of(&[("L1", 800.0), ("L2", 0.30), ("L3", -1.0)]);
        assert_eq!(r.evaluate(&l, 1).unwrap(), 1);
        assert_eq!(r.evaluate(&l, 0).unwrap(), 0);
    }

    #[test]
    fn any_clause_triggers() {
        let r = InterventionRule::d2();
        let l = lookup_of(&[("L1", 800.0), ("L2", 0.30), ("L3", -2.5)]);
        assert_eq!(r.evaluate(&l, 0).unwrap(), 1);
    }

    #[test]
    fn unknown_covariate_errors() {
        let r = InterventionRule::d2();
        let l = lookup_of(&[("L1", 100.0)]); // triggers before L2 is needed
        assert_eq!(r.evaluate(&l, 0).unwrap(), 1);
        let l2 = lookup_of(&[("L1", 800.0)]);
        assert!(matches!(
            r.evaluate(&l2, 0),
            Err(Error::UnknownRuleCovariate(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let s: InterventionRule = serde_json::from_str(r#"{"static":1}"#).unwrap();
        let l = lookup_of(&[]);
        assert_eq!(s.evaluate(&l, 0).unwrap(), 1);
        let d: InterventionRule = serde_json::from_str(
            r#"{"clauses":[{"var":"L1","cmp":"<","thr":750.0}],"sticky":true}"#,
        )
        .unwrap();
        let l2 = lookup_of(&[("L1", 700.0)]);
        assert_eq!(d.evaluate(&l2, 0).unwrap(), 1);
        let back = serde_json::to_string(&d).unwrap();
        let again: InterventionRule = serde_json::from_str(&back).unwrap();
        assert_eq!(again.evaluate(&l2, 0).unwrap(), 1);
    }

    fn two_period_schema() -> NodeSchema {
        NodeSchema::new(vec![
            NodeInfo::new("L1", NodeRole::Confounder, ValueKind::Continuous, 0),
            NodeInfo::new("A", NodeRole::Treatment, ValueKind::Binary, 0),
            NodeInfo::new("C", NodeRole::Censoring, ValueKind::Binary, 0),
            NodeInfo::new("L1", NodeRole::Confounder, ValueKind::Continuous, 1),
            NodeInfo::new("A", NodeRole::Treatment, ValueKind::Binary, 1),
            NodeInfo::new("C", NodeRole::Censoring, ValueKind::Binary, 1),
            NodeInfo::new("L1", NodeRole::Confounder, ValueKind::Continuous, 2),
            NodeInfo::new("A", NodeRole::Treatment, ValueKind::Binary, 2),
            NodeInfo::new("C", NodeRole::Censoring, ValueKind::Binary, 2),
        ])
        .unwrap()
    }

    fn low_cd4_rule() -> InterventionRule {
        InterventionRule::dynamic(
            vec![RuleClause { var: "L1".into(), cmp: Comparator::Lt, thr: 500.0 }],
            true,
        )
    }

    #[test]
    fn adherence_mask_follows_rule_and_censoring() {
        let mut ds = LongitudinalDataset::new(two_period_schema(), 3);
        // Subject 0: adheres everywhere (L1 high, A stays 0).
        for (c, v) in [600.0, 0.0, 0.0, 650.0, 0.0, 0.0, 700.0, 0.0, 0.0]
            .iter()
            .enumerate()
        {
            ds.set(0, c, *v);
        }
        // Subject 1: L1 drops below 500 at t=1 but A.1 stays 0 -> non-adherent
        // from t=1 on.
        for (c, v) in [600.0, 0.0, 0.0, 400.0, 0.0, 0.0, 450.0, 0.0, 0.0]
            .iter()
            .enumerate()
        {
            ds.set(1, c, *v);
        }
        // Subject 2: censored at t=2.
        for (c, v) in [600.0, 0.0, 0.0, 650.0, 0.0, 0.0, 700.0, 0.0, 1.0]
            .iter()
            .enumerate()
        {
            ds.set(2, c, *v);
        }
        let mask = rule_adherence_mask(&ds, &low_cd4_rule()).unwrap();
        assert_eq!(mask[0], vec![true, true, true]);
        assert_eq!(mask[1], vec![true, false, false]);
        assert_eq!(mask[2], vec![true, true, false]);
        // Monotone non-increasing.
        for row in &mask {
            for w in row.windows(2) {
                assert!(w[0] || !w[1]);
            }
        }
    }

    #[test]
    fn baseline_treatment_seeds_stickiness() {
        let mut ds = LongitudinalDataset::new(two_period_schema(), 1);
        // Treated at time 0; sticky rule keeps d=1 even with high L1.
        for (c, v) in [600.0, 1.0, 0.0, 650.0, 1.0, 0.0, 700.0, 1.0, 0.0]
            .iter()
            .enumerate()
        {
            ds.set(0, c, *v);
        }
        let m = rule_matrix(&ds, &low_cd4_rule()).unwrap();
        assert_eq!(m[0], vec![1.0, 1.0]);
    }

    #[test]
    fn rule_matrix_nan_after_censoring() {
        let mut ds = LongitudinalDataset::new(two_period_schema(), 1);
        for (c, v) in [400.0, 0.0, 1.0].iter().enumerate() {
            ds.set(0, c, *v);
        }
        let m = rule_matrix(&ds, &low_cd4_rule()).unwrap();
        assert!(m[0][0].is_nan() && m[0][1].is_nan());
    }
}
