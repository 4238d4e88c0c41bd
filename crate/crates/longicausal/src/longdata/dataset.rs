use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

use super::schema::{NodeRole, NodeSchema, ValueKind};

/// Known range of the outcome, used to map it onto `[0, 1]` for the
/// quasi-binomial iterated regressions and back for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeScale {
    pub lower: f64,
    pub upper: f64,
}

impl OutcomeScale {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(upper > lower) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::Dataset(format!(
                "invalid outcome range [{lower}, {upper}]"
            )));
        }
        Ok(OutcomeScale { lower, upper })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Maps `y` into `[0, 1]`; `NaN` propagates.
    pub fn to_unit(&self, y: f64) -> f64 {
        (y - self.lower) / self.width()
    }

    /// Maps a unit-interval value back onto the outcome scale.
    pub fn from_unit(&self, u: f64) -> f64 {
        u * self.width() + self.lower
    }
}

/// Kind of consistency violation found by [`LongitudinalDataset::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Binary column holds a value outside {0, 1}.
    NonBinaryValue,
    /// Non-missing value at or after a time when the subject was censored.
    ValueAfterCensoring,
    /// Outcome outside the declared range.
    OutcomeOutOfBounds,
    /// Treatment switched from 1 back to 0.
    NonMonotoneTreatment,
}

/// One consistency violation, addressed by subject row and column label.
#[derive(Debug, Clone)]
pub struct Violation {
    pub subject: usize,
    pub column: String,
    pub kind: ViolationKind,
    pub value: f64,
}

/// Wide-format longitudinal dataset: one row per subject, one column per
/// schema node, stored row-major. `NaN` encodes missing; censoring columns
/// hold 1 for "censored at this time".
#[derive(Debug, Clone)]
pub struct LongitudinalDataset {
    schema: NodeSchema,
    n: usize,
    data: Vec<f64>,
}

impl LongitudinalDataset {
    /// Allocates an all-missing dataset for `n` subjects.
    pub fn new(schema: NodeSchema, n: usize) -> Self {
        let ncols = schema.len();
        LongitudinalDataset { schema, n, data: vec![f64::NAN; n * ncols] }
    }

    /// Wraps a pre-filled row-major buffer (used by the simulator's
    /// parallel fill). `data.len()` must be `n * schema.len()`.
    pub(crate) fn from_raw(schema: NodeSchema, n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * schema.len());
        LongitudinalDataset { schema, n, data }
    }

    pub fn schema(&self) -> &NodeSchema {
        &self.schema
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.schema.len()
    }

    pub fn get(&self, subject: usize, col: usize) -> f64 {
        self.data[subject * self.schema.len() + col]
    }

    pub fn set(&mut self, subject: usize, col: usize, value: f64) {
        let ncols = self.schema.len();
        self.data[subject * ncols + col] = value;
    }

    /// Copies out one column.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, col)).collect()
    }

    /// Value of `name` at `time` for one subject; `None` if the schema has no
    /// such column.
    pub fn value(&self, subject: usize, name: &str, time: u32) -> Option<f64> {
        self.schema.index_of(name, time).map(|c| self.get(subject, c))
    }

    /// New dataset holding the listed rows (with repetition), e.g. a
    /// bootstrap resample.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let ncols = self.schema.len();
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for &r in rows {
            data.extend_from_slice(&self.data[r * ncols..(r + 1) * ncols]);
        }
        LongitudinalDataset { schema: self.schema.clone(), n: rows.len(), data }
    }

    /// First time at which the subject is recorded censored, if any.
    pub fn censoring_time(&self, subject: usize) -> Option<u32> {
        for t in self.schema.times() {
            if let Some(c) = self.schema.censoring_at(t) {
                if self.get(subject, c) == 1.0 {
                    return Some(t);
                }
            }
        }
        None
    }

    /// True when the subject has no censoring event recorded at any time
    /// `<= t` (and, if survival nodes exist, is recorded alive through `t`).
    pub fn at_risk_through(&self, subject: usize, t: u32) -> bool {
        for s in self.schema.times() {
            if s > t {
                break;
            }
            if let Some(c) = self.schema.censoring_at(s) {
                if self.get(subject, c) == 1.0 {
                    return false;
                }
            }
            if let Some(sv) = self.schema.survival_at(s) {
                if self.get(subject, sv) == 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// Scans the whole dataset for structural inconsistencies. An empty
    /// result means the dataset respects the schema conventions.
    pub fn validate(&self, scale: Option<&OutcomeScale>) -> Vec<Violation> {
        let mut out = Vec::new();
        let nodes = self.schema.nodes();
        for i in 0..self.n {
            let ct = self.censoring_time(i);
            let mut prev_a: Option<f64> = None;
            for (c, node) in nodes.iter().enumerate() {
                let v = self.get(i, c);
                if v.is_nan() {
                    continue;
                }
                if node.kind == ValueKind::Binary && v != 0.0 && v != 1.0 {
                    out.push(Violation {
                        subject: i,
                        column: node.label(),
                        kind: ViolationKind::NonBinaryValue,
                        value: v,
                    });
                }
                if let Some(ct) = ct {
                    // The censoring indicator itself is the last observed
                    // node at the censoring time.
                    let past_event = node.time > ct
                        || (node.time == ct
                            && node.role != NodeRole::Baseline
                            && self
                                .schema
                                .censoring_at(ct)
                                .map_or(false, |cc| c > cc));
                    if past_event {
                        out.push(Violation {
                            subject: i,
                            column: node.label(),
                            kind: ViolationKind::ValueAfterCensoring,
                            value: v,
                        });
                    }
                }
                if node.role == NodeRole::Outcome {
                    if let Some(s) = scale {
                        if v < s.lower || v > s.upper {
                            out.push(Violation {
                                subject: i,
                                column: node.label(),
                                kind: ViolationKind::OutcomeOutOfBounds,
                                value: v,
                            });
                        }
                    }
                }
                if node.role == NodeRole::Treatment {
                    if let Some(p) = prev_a {
                        if p == 1.0 && v == 0.0 {
                            out.push(Violation {
                                subject: i,
                                column: node.label(),
                                kind: ViolationKind::NonMonotoneTreatment,
                                value: v,
                            });
                        }
                    }
                    prev_a = Some(v);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::schema::{NodeInfo, NodeRole, ValueKind};

    fn small_schema() -> NodeSchema {
        NodeSchema::new(vec![
            NodeInfo::new("V1", NodeRole::Baseline, ValueKind::Binary, 0),
            NodeInfo::new("L1", NodeRole::Confounder, ValueKind::Continuous, 0),
            NodeInfo::new("Y", NodeRole::Outcome, ValueKind::Continuous, 0),
            NodeInfo::new("A", NodeRole::Treatment, ValueKind::Binary, 0),
            NodeInfo::new("C", NodeRole::Censoring, ValueKind::Binary, 0),
            NodeInfo::new("L1", NodeRole::Confounder, ValueKind::Continuous, 1),
            NodeInfo::new("Y", NodeRole::Outcome, ValueKind::Continuous, 1),
            NodeInfo::new("A", NodeRole::Treatment, ValueKind::Binary, 1),
            NodeInfo::new("C", NodeRole::Censoring, ValueKind::Binary, 1),
        ])
        .unwrap()
    }

    fn fill_row(ds: &mut LongitudinalDataset, i: usize, vals: &[f64]) {
        for (c, &v) in vals.iter().enumerate() {
            ds.set(i, c, v);
        }
    }

    #[test]
    fn clean_rows_validate() {
        let mut ds = LongitudinalDataset::new(small_schema(), 2);
        fill_row(&mut ds, 0, &[1.0, 500.0, -1.0, 0.0, 0.0, 520.0, -0.5, 1.0, 0.0]);
        // Censored at t=1: C.1 = 1, nothing after.
        fill_row(&mut ds, 1, &[0.0, 300.0, -2.0, 0.0, 0.0, 310.0, -1.9, 0.0, 1.0]);
        assert!(ds.validate(Some(&OutcomeScale::new(-15.0, 15.0).unwrap())).is_empty());
        assert_eq!(ds.censoring_time(1), Some(1));
        assert!(ds.at_risk_through(1, 0));
        assert!(!ds.at_risk_through(1, 1));
    }

    #[test]
    fn censoring_cuts_off_later_values() {
        let mut ds = LongitudinalDataset::new(small_schema(), 1);
        // Censored at t=0 but L1.1 recorded anyway.
        fill_row(&mut ds, 0, &[1.0, 500.0, -1.0, 0.0, 1.0, 520.0, f64::NAN, f64::NAN, f64::NAN]);
        let v = ds.validate(None);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::ValueAfterCensoring);
        assert_eq!(v[0].column, "L1.1");
    }

    #[test]
    fn flags_nonbinary_outofbounds_nonmonotone() {
        let mut ds = LongitudinalDataset::new(small_schema(), 1);
        fill_row(&mut ds, 0, &[2.0, 500.0, -20.0, 1.0, 0.0, 520.0, -0.5, 0.0, 0.0]);
        let v = ds.validate(Some(&OutcomeScale::new(-15.0, 15.0).unwrap()));
        let kinds: Vec<_> = v.iter().map(|x| x.kind).collect();
        assert!(kinds.contains(&ViolationKind::NonBinaryValue));
        assert!(kinds.contains(&ViolationKind::OutcomeOutOfBounds));
        assert!(kinds.contains(&ViolationKind::NonMonotoneTreatment));
    }

    #[test]
    fn subset_resamples_rows() {
        let mut ds = LongitudinalDataset::new(small_schema(), 2);
        fill_row(&mut ds, 0, &[1.0; 9]);
        fill_row(&mut ds, 1, &[0.0; 9]);
        let sub = ds.subset(&[1, 1, 0]);
        assert_eq!(sub.n(), 3);
        assert_eq!(sub.get(0, 0), 0.0);
        assert_eq!(sub.get(2, 0), 1.0);
    }

    #[test]
    fn outcome_scale_roundtrip() {
        let s = OutcomeScale::new(-15.0, 15.0).unwrap();
        assert_eq!(s.to_unit(0.0), 0.5);
        assert!((s.from_unit(s.to_unit(-3.2)) - (-3.2)).abs() < 1e-12);
        assert!(OutcomeScale::new(1.0, 1.0).is_err());
    }
}
