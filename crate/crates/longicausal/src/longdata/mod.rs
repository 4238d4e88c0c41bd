//! Longitudinal data model: node schema, wide-format dataset, outcome
//! transformation bounds, and the treatment-rule DSL shared by the simulator
//! and all estimators.

mod csv_io;
mod dataset;
mod rule;
mod schema;

pub use csv_io::{read_csv, write_csv};
pub use dataset::{LongitudinalDataset, OutcomeScale, Violation, ViolationKind};
pub use rule::{rule_adherence_mask, rule_matrix, Comparator, InterventionRule, RuleClause};
pub use schema::{NodeInfo, NodeRole, NodeSchema, ValueKind};
