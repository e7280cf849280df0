use crate::qpsolve::{QpData, QpStatus};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    /// Rejected at `SolverHandle::create`.
    #[error("QP setup failed: {0}")]
    QpSetup(String),

    #[error("QP usage error: {0}")]
    QpUsage(String),

    #[error("Riccati recursion ill-conditioned at stage {stage} (condition estimate {condition:.3e})")]
    IllConditioned { stage: usize, condition: f64 },

    #[error("singular KKT matrix: {0}")]
    SingularKkt(String),

    /// A per-agent QP failed inside the ADMM loop. `data` carries the failing
    /// instance (with the gradient of that iteration) for offline triage.
    #[error("agent {agent} QP failed at ADMM iteration {iteration}: status {status:?}")]
    AgentQp {
        agent: usize,
        iteration: usize,
        status: QpStatus,
        data: Box<QpData>,
    },

    #[error("report schema: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
