use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Role of a node in the time-ordered causal structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRole {
    /// Time-fixed covariate, measured once before follow-up.
    Baseline,
    /// Time-varying confounder.
    Confounder,
    /// Time-varying outcome.
    Outcome,
    /// Treatment indicator.
    Treatment,
    /// Censoring indicator (1 = censored at this time).
    Censoring,
    /// Survival indicator (1 = alive at this time).
    Survival,
}

impl NodeRole {
    /// Ordering rank inside a time block: confounders, then outcome, then
    /// treatment, then censoring, then survival.
    fn rank(self) -> u8 {
        match self {
            NodeRole::Baseline => 0,
            NodeRole::Confounder => 0,
            NodeRole::Outcome => 1,
            NodeRole::Treatment => 2,
            NodeRole::Censoring => 3,
            NodeRole::Survival => 4,
        }
    }
}

/// Measurement type of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueKind {
    /// Values in {0, 1} (or missing).
    Binary,
    /// Real-valued.
    Continuous,
}

/// One column of the wide-format dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeInfo {
    /// Base variable name without the time suffix.
    pub name: String,
    pub role: NodeRole,
    pub kind: ValueKind,
    /// Measurement time; baseline nodes are at time 0.
    pub time: u32,
}

impl NodeInfo {
    pub fn new(name: impl Into<String>, role: NodeRole, kind: ValueKind, time: u32) -> Self {
        NodeInfo { name: name.into(), role, kind, time }
    }

    /// Column label: the bare name for baseline nodes, `name.t` otherwise.
    pub fn label(&self) -> String {
        match self.role {
            NodeRole::Baseline => self.name.clone(),
            _ => format!("{}.{}", self.name, self.time),
        }
    }
}

/// Validated, time-ordered list of dataset columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeSchema {
    nodes: Vec<NodeInfo>,
}

impl NodeSchema {
    /// Checks the structural invariants and builds the schema:
    ///
    /// * at least one node; baseline nodes at time 0 and before all others;
    /// * times non-decreasing along the column order;
    /// * within a time block, confounders precede the outcome, which precedes
    ///   treatment, censoring and survival, with at most one node per
    ///   non-confounder role;
    /// * treatment/censoring/survival nodes are binary; column labels unique.
    pub fn new(nodes: Vec<NodeInfo>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Schema("schema has no nodes".into()));
        }
        let mut seen_non_baseline = false;
        let mut prev_time = 0u32;
        let mut prev_rank = 0u8;
        let mut labels = std::collections::HashSet::new();
        for node in &nodes {
            match node.role {
                NodeRole::Baseline => {
                    if node.time != 0 {
                        return Err(Error::Schema(format!(
                            "baseline node {} must be at time 0",
                            node.name
                        )));
                    }
                    if seen_non_baseline {
                        return Err(Error::Schema(format!(
                            "baseline node {} appears after time-varying nodes",
                            node.name
                        )));
                    }
                }
                _ => {
                    if seen_non_baseline {
                        if node.time < prev_time {
                            return Err(Error::Schema(format!(
                                "node {} breaks time ordering",
                                node.label()
                            )));
                        }
                        if node.time == prev_time && node.role.rank() < prev_rank {
                            return Err(Error::Schema(format!(
                                "node {} out of order within time {}",
                                node.label(),
                                node.time
                            )));
                        }
                        if node.time == prev_time
                            && node.role.rank() == prev_rank
                            && node.role != NodeRole::Confounder
                        {
                            return Err(Error::Schema(format!(
                                "duplicate {:?} node at time {}",
                                node.role, node.time
                            )));
                        }
                    }
                    seen_non_baseline = true;
                    prev_time = node.time;
                    prev_rank = node.role.rank();
                }
            }
            if matches!(
                node.role,
                NodeRole::Treatment | NodeRole::Censoring | NodeRole::Survival
            ) && node.kind != ValueKind::Binary
            {
                return Err(Error::Schema(format!(
                    "{:?} node {} must be binary",
                    node.role,
                    node.label()
                )));
            }
            if !labels.insert(node.label()) {
                return Err(Error::Schema(format!("duplicate column {}", node.label())));
            }
        }
        Ok(NodeSchema { nodes })
    }

    pub fn nodes(&self) -> &[NodeInfo] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Last measurement time in the schema.
    pub fn t_max(&self) -> u32 {
        self.nodes.iter().map(|n| n.time).max().unwrap_or(0)
    }

    /// Column labels in order.
    pub fn labels(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.label()).collect()
    }

    /// Column index of `name` at `time` (baseline nodes match any time 0
    /// lookup by bare name).
    pub fn index_of(&self, name: &str, time: u32) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.name == name && (n.time == time || n.role == NodeRole::Baseline && time == 0))
    }

    /// Column index by full label.
    pub fn index_of_label(&self, label: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.label() == label)
    }

    fn role_at(&self, role: NodeRole, time: u32) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.role == role && n.time == time)
    }

    pub fn outcome_at(&self, time: u32) -> Option<usize> {
        self.role_at(NodeRole::Outcome, time)
    }

    pub fn treatment_at(&self, time: u32) -> Option<usize> {
        self.role_at(NodeRole::Treatment, time)
    }

    pub fn censoring_at(&self, time: u32) -> Option<usize> {
        self.role_at(NodeRole::Censoring, time)
    }

    pub fn survival_at(&self, time: u32) -> Option<usize> {
        self.role_at(NodeRole::Survival, time)
    }

    /// Confounder column indices at `time`, in schema order.
    pub fn confounders_at(&self, time: u32) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.role == NodeRole::Confounder && n.time == time)
            .map(|(i, _)| i)
            .collect()
    }

    /// Baseline column indices.
    pub fn baselines(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.role == NodeRole::Baseline)
            .map(|(i, _)| i)
            .collect()
    }

    /// Sorted distinct measurement times of non-baseline nodes.
    pub fn times(&self) -> Vec<u32> {
        let mut ts: Vec<u32> = self
            .nodes
            .iter()
            .filter(|n| n.role != NodeRole::Baseline)
            .map(|n| n.time)
            .collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    }

    /// Times with a treatment node, ascending.
    pub fn treatment_times(&self) -> Vec<u32> {
        let mut ts: Vec<u32> = self
            .nodes
            .iter()
            .filter(|n| n.role == NodeRole::Treatment)
            .map(|n| n.time)
            .collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(t: u32) -> Vec<NodeInfo> {
        vec![
            NodeInfo::new("L1", NodeRole::Confounder, ValueKind::Continuous, t),
            NodeInfo::new("Y", NodeRole::Outcome, ValueKind::Continuous, t),
            NodeInfo::new("A", NodeRole::Treatment, ValueKind::Binary, t),
            NodeInfo::new("C", NodeRole::Censoring, ValueKind::Binary, t),
        ]
    }

    #[test]
    fn accepts_canonical_ordering() {
        let mut nodes = vec![NodeInfo::new("V1", NodeRole::Baseline, ValueKind::Binary, 0)];
        nodes.extend(block(0));
        nodes.extend(block(1));
        let s = NodeSchema::new(nodes).unwrap();
        assert_eq!(s.t_max(), 1);
        assert_eq!(s.treatment_times(), vec![0, 1]);
        assert_eq!(s.index_of("Y", 1), Some(6));
        assert_eq!(s.index_of_label("Y.1"), Some(6));
        assert_eq!(s.index_of("V1", 0), Some(0));
    }

    #[test]
    fn rejects_time_regression() {
        let mut nodes = block(1);
        nodes.extend(block(0));
        assert!(NodeSchema::new(nodes).is_err());
    }

    #[test]
    fn rejects_treatment_before_outcome() {
        let nodes = vec![
            NodeInfo::new("A", NodeRole::Treatment, ValueKind::Binary, 0),
            NodeInfo::new("Y", NodeRole::Outcome, ValueKind::Continuous, 0),
        ];
        assert!(NodeSchema::new(nodes).is_err());
    }

    #[test]
    fn rejects_continuous_treatment_and_duplicates() {
        assert!(NodeSchema::new(vec![NodeInfo::new(
            "A",
            NodeRole::Treatment,
            ValueKind::Continuous,
            0
        )])
        .is_err());
        let nodes = vec![
            NodeInfo::new("Y", NodeRole::Outcome, ValueKind::Continuous, 0),
            NodeInfo::new("Y", NodeRole::Outcome, ValueKind::Continuous, 0),
        ];
        assert!(NodeSchema::new(nodes).is_err());
    }

    #[test]
    fn rejects_late_baseline() {
        let nodes = vec![
            NodeInfo::new("Y", NodeRole::Outcome, ValueKind::Continuous, 0),
            NodeInfo::new("V1", NodeRole::Baseline, ValueKind::Binary, 0),
        ];
        assert!(NodeSchema::new(nodes).is_err());
    }
}
