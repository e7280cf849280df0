//! Multi-agent trajectory planning with consensus ADMM.
//!
//! Each agent plans a linear-quadratic trajectory with box bounds; pairwise
//! separation is enforced through consensus targets projected by a
//! coordinator. Local QPs are solved by a parametric active-set kernel
//! ([`qpsolve`]) that can be started cold, from a Riccati warm start
//! ([`riccati`]), or hot from the previous iteration's working set.

pub mod admm;
pub mod error;
pub mod model;
pub mod oracle;
pub mod qpsolve;
pub mod record;
pub mod riccati;

pub use admm::{run, Mode, SolveReport, SolverConfig};
pub use error::{Error, Result};
pub use model::{circle_scenario, AgentModel, Scenario, Weights};
pub use qpsolve::{QpData, QpSettings, QpSolution, QpStatus, SolverHandle};
