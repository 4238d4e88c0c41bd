//! Shared history-design machinery: turning a wide dataset into a named
//! column frame and selecting the covariate history for a regression
//! anchored at a given time.

use crate::glm::Frame;
use crate::longdata::{LongitudinalDataset, NodeRole, NodeSchema};
use crate::Frame64;

/// One column per schema label, plus a row-index-free copy of the data.
pub(crate) fn base_frame(ds: &LongitudinalDataset) -> Frame64 {
    let mut frame = Frame::new(ds.n());
    for (c, node) in ds.schema().nodes().iter().enumerate() {
        frame
            .push(node.label(), ds.column(c))
            .expect("schema labels are unique");
    }
    frame
}

/// History times for a regression anchored at `t`: the `lag` most recent
/// past times plus time 0, ascending and deduplicated. Time `t` itself is
/// handled by the caller (same-time predecessors depend on the node).
pub(crate) fn history_times(t: u32, lag: u32) -> Vec<u32> {
    let mut ts = vec![0];
    for d in (1..=lag).rev() {
        if t >= d && t - d > 0 {
            ts.push(t - d);
        }
    }
    ts
}

/// Labels of the lagged history for a regression anchored at `t`: all
/// baselines, then confounders, outcome, and treatment at each history time
/// (censoring/survival indicators are constant within at-risk subsets and
/// excluded).
pub(crate) fn lagged_history(schema: &NodeSchema, t: u32, lag: u32) -> Vec<String> {
    let nodes = schema.nodes();
    let mut terms: Vec<String> =
        schema.baselines().iter().map(|&c| nodes[c].label()).collect();
    for s in history_times(t, lag) {
        for &c in &schema.confounders_at(s) {
            terms.push(nodes[c].label());
        }
        if let Some(c) = schema.outcome_at(s) {
            terms.push(nodes[c].label());
        }
        if let Some(c) = schema.treatment_at(s) {
            terms.push(nodes[c].label());
        }
    }
    terms
}

/// Same-time predecessor labels of a node at time `t`, by role rank:
/// everything in the time-`t` block strictly before `upto`.
pub(crate) fn same_time_before(schema: &NodeSchema, t: u32, upto: NodeRole) -> Vec<String> {
    fn rank(role: NodeRole) -> u8 {
        match role {
            NodeRole::Baseline => 0,
            NodeRole::Confounder => 1,
            NodeRole::Outcome => 2,
            NodeRole::Treatment => 3,
            NodeRole::Censoring => 4,
            NodeRole::Survival => 5,
        }
    }
    schema
        .nodes()
        .iter()
        .filter(|n| {
            n.time == t
                && n.role != NodeRole::Baseline
                && n.role != NodeRole::Censoring
                && n.role != NodeRole::Survival
                && rank(n.role) < rank(upto)
        })
        .map(|n| n.label())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::longdata::{NodeInfo, ValueKind};

    fn schema() -> NodeSchema {
        let mut nodes = vec![NodeInfo::new("V", NodeRole::Baseline, ValueKind::Binary, 0)];
        for t in 0..=3 {
            nodes.push(NodeInfo::new("L", NodeRole::Confounder, ValueKind::Continuous, t));
            nodes.push(NodeInfo::new("Y", NodeRole::Outcome, ValueKind::Continuous, t));
            nodes.push(NodeInfo::new("A", NodeRole::Treatment, ValueKind::Binary, t));
            nodes.push(NodeInfo::new("C", NodeRole::Censoring, ValueKind::Binary, t));
        }
        NodeSchema::new(nodes).unwrap()
    }

    #[test]
    fn history_times_dedups_and_includes_baseline() {
        assert_eq!(history_times(3, 1), vec![0, 2]);
        assert_eq!(history_times(1, 1), vec![0]);
        assert_eq!(history_times(3, 2), vec![0, 1, 2]);
        assert_eq!(history_times(0, 1), vec![0]);
    }

    #[test]
    fn lagged_history_lists_expected_labels() {
        let s = schema();
        assert_eq!(
            lagged_history(&s, 3, 1),
            vec!["V", "L.0", "Y.0", "A.0", "L.2", "Y.2", "A.2"]
        );
        assert_eq!(lagged_history(&s, 1, 1), vec!["V", "L.0", "Y.0", "A.0"]);
    }

    #[test]
    fn same_time_predecessors_respect_role_order() {
        let s = schema();
        assert_eq!(same_time_before(&s, 2, NodeRole::Outcome), vec!["L.2"]);
        assert_eq!(same_time_before(&s, 2, NodeRole::Treatment), vec!["L.2", "Y.2"]);
        assert_eq!(
            same_time_before(&s, 2, NodeRole::Censoring),
            vec!["L.2", "Y.2", "A.2"]
        );
    }
}
