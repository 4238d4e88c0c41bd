use std::path::Path;

use crate::error::Error;
use crate::Result;

use super::dataset::LongitudinalDataset;
use super::schema::{NodeInfo, NodeRole, NodeSchema, ValueKind};

const CENSORED: &str = "censored";
const UNCENSORED: &str = "uncensored";

/// Writes the dataset in wide CSV format: one row per subject, headers are
/// the schema column labels, censoring columns hold `censored`/`uncensored`,
/// missing values are empty cells.
pub fn write_csv(ds: &LongitudinalDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    let schema = ds.schema();
    w.write_record(schema.labels())
        .map_err(|e| Error::Csv(e.to_string()))?;
    let mut record = Vec::with_capacity(schema.len());
    for i in 0..ds.n() {
        record.clear();
        for (c, node) in schema.nodes().iter().enumerate() {
            let v = ds.get(i, c);
            let cell = if v.is_nan() {
                String::new()
            } else if node.role == NodeRole::Censoring {
                (if v == 1.0 { CENSORED } else { UNCENSORED }).to_string()
            } else if node.kind == ValueKind::Binary {
                format!("{}", v as i64)
            } else {
                format!("{v}")
            };
            record.push(cell);
        }
        w.write_record(&record).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Splits a header into base name and time: `cd4.3` -> ("cd4", Some(3)),
/// `V1` -> ("V1", None).
fn split_label(label: &str) -> (&str, Option<u32>) {
    if let Some(pos) = label.rfind('.') {
        if let Ok(t) = label[pos + 1..].parse::<u32>() {
            return (&label[..pos], Some(t));
        }
    }
    (label, None)
}

/// Role inferred from the base name convention: `A` treatment, `C`
/// censoring, `S` survival, `Y` outcome; any other time-varying name is a
/// confounder and any other bare name a baseline covariate.
fn infer_role(base: &str, time: Option<u32>) -> NodeRole {
    match base {
        "A" => NodeRole::Treatment,
        "C" => NodeRole::Censoring,
        "S" => NodeRole::Survival,
        "Y" => NodeRole::Outcome,
        _ if time.is_some() => NodeRole::Confounder,
        _ => NodeRole::Baseline,
    }
}

/// Reads a wide-format CSV, inferring the schema from the header names and
/// the value kinds from the observed data (binary when every observed value
/// is 0 or 1).
pub fn read_csv(path: &Path) -> Result<LongitudinalDataset> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Csv(e.to_string()))?;
    let headers: Vec<String> = r
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let ncols = headers.len();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut binary = vec![true; ncols];
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        if rec.len() != ncols {
            return Err(Error::Csv(format!(
                "row {} has {} fields, expected {ncols}",
                rows.len() + 2,
                rec.len()
            )));
        }
        let mut row = Vec::with_capacity(ncols);
        for (c, cell) in rec.iter().enumerate() {
            let cell = cell.trim();
            let v = if cell.is_empty() {
                f64::NAN
            } else if cell.eq_ignore_ascii_case(CENSORED) {
                1.0
            } else if cell.eq_ignore_ascii_case(UNCENSORED) {
                0.0
            } else {
                cell.parse::<f64>().map_err(|_| {
                    Error::Csv(format!(
                        "cannot parse `{cell}` in column {}",
                        headers[c]
                    ))
                })?
            };
            if !v.is_nan() && v != 0.0 && v != 1.0 {
                binary[c] = false;
            }
            row.push(v);
        }
        rows.push(row);
    }

    let nodes: Vec<NodeInfo> = headers
        .iter()
        .enumerate()
        .map(|(c, h)| {
            let (base, time) = split_label(h);
            let role = infer_role(base, time);
            let kind = if binary[c] { ValueKind::Binary } else { ValueKind::Continuous };
            NodeInfo::new(base, role, kind, time.unwrap_or(0))
        })
        .collect();
    let schema = NodeSchema::new(nodes)?;
    let mut ds = LongitudinalDataset::new(schema, rows.len());
    for (i, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            ds.set(i, c, v);
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::schema::{NodeInfo, NodeRole, NodeSchema, ValueKind};

    fn sample() -> LongitudinalDataset {
        let schema = NodeSchema::new(vec![
            NodeInfo::new("V1", NodeRole::Baseline, ValueKind::Binary, 0),
            NodeInfo::new("cd4", NodeRole::Confounder, ValueKind::Continuous, 0),
            NodeInfo::new("Y", NodeRole::Outcome, ValueKind::Continuous, 0),
            NodeInfo::new("A", NodeRole::Treatment, ValueKind::Binary, 0),
            NodeInfo::new("C", NodeRole::Censoring, ValueKind::Binary, 0),
            NodeInfo::new("cd4", NodeRole::Confounder, ValueKind::Continuous, 1),
            NodeInfo::new("Y", NodeRole::Outcome, ValueKind::Continuous, 1),
        ])
        .unwrap();
        let mut ds = LongitudinalDataset::new(schema, 2);
        for (c, v) in [1.0, 512.25, -1.5, 0.0, 0.0, 530.0, -1.25].iter().enumerate() {
            ds.set(0, c, *v);
        }
        for (c, v) in [0.0, 300.0, -2.0, 1.0, 1.0, f64::NAN, f64::NAN].iter().enumerate() {
            ds.set(1, c, *v);
        }
        ds
    }

    #[test]
    fn round_trip_preserves_everything() {
        let ds = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wide.csv");
        write_csv(&ds, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("V1,cd4.0,Y.0,A.0,C.0,cd4.1,Y.1"));
        assert!(text.contains("censored"));
        assert!(text.contains("uncensored"));

        let back = read_csv(&path).unwrap();
        assert_eq!(back.n(), 2);
        assert_eq!(back.schema().labels(), ds.schema().labels());
        for i in 0..2 {
            for c in 0..ds.ncols() {
                let (a, b) = (ds.get(i, c), back.get(i, c));
                assert!(a == b || (a.is_nan() && b.is_nan()), "({i},{c}): {a} vs {b}");
            }
        }
        // Role inference matched the writer's schema.
        let node = &back.schema().nodes()[4];
        assert_eq!(node.role, NodeRole::Censoring);
        assert_eq!(back.schema().nodes()[1].role, NodeRole::Confounder);
        assert_eq!(back.schema().nodes()[0].role, NodeRole::Baseline);
    }

    #[test]
    fn rejects_bad_cells_and_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "V1,Y.0\n1,abc\n").unwrap();
        assert!(read_csv(&bad).is_err());
    }

    #[test]
    fn binary_kind_inferred_from_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.csv");
        std::fs::write(&p, "V1,x.1,Y.1\n1,0.5,0\n0,1,1\n").unwrap();
        let ds = read_csv(&p).unwrap();
        assert_eq!(ds.schema().nodes()[0].kind, ValueKind::Binary);
        assert_eq!(ds.schema().nodes()[1].kind, ValueKind::Continuous);
        assert_eq!(ds.schema().nodes()[2].kind, ValueKind::Binary);
    }
}
