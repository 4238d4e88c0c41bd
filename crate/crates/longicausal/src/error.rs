use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("rule references unknown covariate `{0}`")]
    UnknownRuleCovariate(String),

    #[error("invalid rule: {0}")]
    Rule(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("out-of-support parameter for node `{node}` (subject {subject}): {detail}")]
    OutOfSupport {
        node: String,
        subject: usize,
        detail: String,
    },

    #[error("regression failure: {0}")]
    Glm(String),

    #[error("empty library: every learner failed")]
    EmptyLibrary,

    #[error("no subjects at risk at time {0}")]
    NoSubjectsAtRisk(u32),

    #[error("estimator failure: {0}")]
    Estimator(String),

    #[error("bootstrap failed: {failed} of {total} replicates errored (>10%)")]
    BootstrapFailures { failed: usize, total: usize },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
