use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::expr::Expr;
use crate::longdata::{NodeInfo, NodeRole, NodeSchema, ValueKind};
use crate::Result;

use super::compile::{compile, Prog};

/// Sampling distribution of a structural-equation node. Parameters are
/// expressions over previously generated nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dist {
    Bernoulli { p: Expr },
    Uniform { lo: Expr, hi: Expr },
    /// `sigma = 0` is a point mass at `mu`.
    Normal { mu: Expr, sigma: Expr },
    /// Normal truncated to `bounds`: draws below are replaced by a uniform
    /// draw from `lo_tail`, draws above by one from `hi_tail`.
    TruncNormal {
        mu: Expr,
        sigma: Expr,
        bounds: (f64, f64),
        lo_tail: (f64, f64),
        hi_tail: (f64, f64),
    },
}

/// One node of a structural-equation model, in generation order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeDef {
    pub name: String,
    pub time: u32,
    pub role: NodeRole,
    pub kind: ValueKind,
    pub dist: Dist,
    /// Whether the node appears as a dataset column.
    pub emit: bool,
    /// Treatment nodes an intervention rule may replace.
    #[serde(default)]
    pub intervenable: bool,
}

/// A structural-equation model: nodes listed in temporal (generation)
/// order, each with a sampling distribution parameterized by expressions
/// over earlier nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<NodeDef>", into = "Vec<NodeDef>")]
pub struct StructuralEquationModel {
    nodes: Vec<NodeDef>,
    #[serde(skip)]
    index: HashMap<(String, u32), usize>,
}

impl TryFrom<Vec<NodeDef>> for StructuralEquationModel {
    type Error = Error;
    fn try_from(nodes: Vec<NodeDef>) -> Result<Self> {
        StructuralEquationModel::new(nodes)
    }
}

impl From<StructuralEquationModel> for Vec<NodeDef> {
    fn from(m: StructuralEquationModel) -> Self {
        m.nodes
    }
}

impl StructuralEquationModel {
    /// Validates the node list: unique `(name, time)` pairs, non-decreasing
    /// times, and parameter expressions referencing only earlier nodes
    /// (checked by compiling every expression).
    pub fn new(nodes: Vec<NodeDef>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Model("model has no nodes".into()));
        }
        let mut index = HashMap::new();
        let mut prev_time = 0;
        for (i, node) in nodes.iter().enumerate() {
            if node.time < prev_time {
                return Err(Error::Model(format!(
                    "node {}.{} breaks temporal order",
                    node.name, node.time
                )));
            }
            prev_time = node.time;
            if index
                .insert((node.name.clone(), node.time), i)
                .is_some()
            {
                return Err(Error::Model(format!(
                    "duplicate node {}.{}",
                    node.name, node.time
                )));
            }
        }
        let model = StructuralEquationModel { nodes, index };
        model.compile()?; // reference validation
        Ok(model)
    }

    pub fn nodes(&self) -> &[NodeDef] {
        &self.nodes
    }

    /// Generation index of `(name, time)`.
    pub fn node_index(&self, name: &str, time: u32) -> Option<usize> {
        self.index.get(&(name.to_string(), time)).copied()
    }

    pub fn t_max(&self) -> u32 {
        self.nodes.iter().map(|n| n.time).max().unwrap_or(0)
    }

    /// Schema of the emitted dataset: emitted nodes ordered by time, then
    /// baseline → confounders → outcome → treatment → censoring → survival.
    pub fn schema(&self) -> Result<NodeSchema> {
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
        let mut emitted: Vec<&NodeDef> = self.nodes.iter().filter(|n| n.emit).collect();
        emitted.sort_by_key(|n| (n.time, rank(n.role)));
        NodeSchema::new(
            emitted
                .iter()
                .map(|n| NodeInfo::new(n.name.clone(), n.role, n.kind, n.time))
                .collect(),
        )
    }

    /// Generation indices of the emitted columns, aligned with [`Self::schema`].
    pub(crate) fn emitted_indices(&self) -> Result<Vec<usize>> {
        let schema = self.schema()?;
        schema
            .nodes()
            .iter()
            .map(|n| {
                self.node_index(&n.name, n.time).ok_or_else(|| {
                    Error::Model(format!("emitted node {}.{} missing", n.name, n.time))
                })
            })
            .collect()
    }

    pub(crate) fn compile(&self) -> Result<Vec<CompiledDist>> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, node)| {
                let cp = |e: &Expr| compile(e, node.time, i, &self.index);
                Ok(match &node.dist {
                    Dist::Bernoulli { p } => CompiledDist::Bernoulli { p: cp(p)? },
                    Dist::Uniform { lo, hi } => {
                        CompiledDist::Uniform { lo: cp(lo)?, hi: cp(hi)? }
                    }
                    Dist::Normal { mu, sigma } => {
                        CompiledDist::Normal { mu: cp(mu)?, sigma: cp(sigma)? }
                    }
                    Dist::TruncNormal { mu, sigma, bounds, lo_tail, hi_tail } => {
                        CompiledDist::TruncNormal {
                            mu: cp(mu)?,
                            sigma: cp(sigma)?,
                            bounds: *bounds,
                            lo_tail: *lo_tail,
                            hi_tail: *hi_tail,
                        }
                    }
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.nodes)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let nodes: Vec<NodeDef> = serde_json::from_str(json)?;
        Self::new(nodes)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum CompiledDist {
    Bernoulli { p: Prog },
    Uniform { lo: Prog, hi: Prog },
    Normal { mu: Prog, sigma: Prog },
    TruncNormal {
        mu: Prog,
        sigma: Prog,
        bounds: (f64, f64),
        lo_tail: (f64, f64),
        hi_tail: (f64, f64),
    },
}
