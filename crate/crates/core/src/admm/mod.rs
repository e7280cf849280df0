//! Consensus ADMM over per-agent trajectory QPs.
//!
//! Each iteration solves every agent's local QP (in parallel), projects the
//! consensus targets of every pair onto the separation constraint, and takes a
//! dual ascent step. The three [`Mode`]s differ only in how the local QPs are
//! started.

pub mod consensus;
pub mod local;
mod parallel;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AgentModel, Scenario};
use crate::oracle::{min_separation, tracking_error};
use crate::qpsolve::{QpData, QpSettings, QpSolution, QpStatus, SolverHandle};
use crate::riccati::{bounded_lqr, build_stage_costs, PenaltyTerms, StageCosts};

pub use consensus::{
    consensus_project, consensus_update, dual_update, residuals, ConsensusRule, ConsensusState,
    ConsensusWindow,
};
use parallel::Dispatcher;

/// How each local QP is started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Fresh handle and cold start every iteration.
    Base,
    /// Cold start on the first iteration, hot start from the previous working set after.
    Hotstart,
    /// Riccati warm start on the first iteration, hot start after.
    Turbo,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Base, Mode::Hotstart, Mode::Turbo];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Base => "base",
            Mode::Hotstart => "hotstart",
            Mode::Turbo => "turbo",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Mode::Base),
            "hotstart" => Ok(Mode::Hotstart),
            "turbo" => Ok(Mode::Turbo),
            other => Err(Error::InvalidParameter(format!(
                "unknown mode {other:?} (expected base, hotstart or turbo)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rho: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub max_admm_iters: usize,
    pub mode: Mode,
    pub qp_tol: f64,
    /// Working-set change budget per QP solve; `None` means `10 (n + m)`.
    pub qp_max_iter: Option<usize>,
    /// Worker threads for the local solves. `0` uses the rayon default, `1`
    /// runs sequentially.
    pub threads: usize,
    pub consensus_window: ConsensusWindow,
    pub consensus_rule: ConsensusRule,
    /// Extra input weight used only inside the Riccati warm start.
    pub input_proximal: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho: 25.0,
            eps_primal: 1e-4,
            eps_dual: 1e-4,
            max_admm_iters: 500,
            mode: Mode::Turbo,
            qp_tol: 1e-8,
            qp_max_iter: None,
            threads: 0,
            consensus_window: ConsensusWindow::FromOne,
            consensus_rule: ConsensusRule::Pairwise,
            input_proximal: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("rho", self.rho)?;
        positive("eps_primal", self.eps_primal)?;
        positive("eps_dual", self.eps_dual)?;
        positive("qp_tol", self.qp_tol)?;
        if self.max_admm_iters == 0 {
            return Err(Error::InvalidParameter("max_admm_iters must be at least 1".into()));
        }
        if !(self.input_proximal.is_finite() && self.input_proximal >= 0.0) {
            return Err(Error::InvalidParameter("input_proximal must be non-negative".into()));
        }
        Ok(())
    }

    fn qp_settings(&self) -> QpSettings {
        QpSettings {
            tol: self.qp_tol,
            max_iter: self.qp_max_iter,
        }
    }
}

/// Per-iteration measurements. Vectors are indexed by agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Working-set changes of each local QP solve.
    pub qp_iterations: Vec<usize>,
    /// Time inside the QP kernel, handle creation included.
    pub qp_ms: Vec<f64>,
    /// Time spent computing the Riccati warm start (turbo, first iteration).
    pub warm_start_ms: Vec<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub local_ms: f64,
    pub consensus_ms: f64,
    /// Hash of each local QP's `H`, `A_eq`, `b_eq` and bounds.
    pub structure_hashes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// States `x_0 .. x_T`.
    pub states: Vec<Vec<f64>>,
    /// Inputs `u_0 .. u_{T-1}`.
    pub inputs: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn state_vectors(&self) -> Vec<DVector<f64>> {
        self.states.iter().map(|x| DVector::from_column_slice(x)).collect()
    }

    pub fn positions(&self, agent: &AgentModel) -> Vec<DVector<f64>> {
        self.states
            .iter()
            .map(|x| agent.position(&DVector::from_column_slice(x)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub config: SolverConfig,
    pub converged: bool,
    pub admm_iterations: usize,
    pub total_qp_iterations: usize,
    pub iterations: Vec<IterationRecord>,
    pub trajectories: Vec<Trajectory>,
    /// Smallest pairwise position distance over `t = 0..=T`; absent for a single agent.
    pub min_separation: Option<f64>,
    /// Distance between final position and reference final position, per agent.
    pub tracking_errors: Vec<f64>,
    pub wall_ms: f64,
}

impl SolveReport {
    pub fn qp_iterations_per_admm_iteration(&self) -> Vec<usize> {
        self.iterations.iter().map(|r| r.qp_iterations.iter().sum()).collect()
    }

    pub fn final_residuals(&self) -> (f64, f64) {
        self.iterations
            .last()
            .map(|r| (r.primal_residual, r.dual_residual))
            .unwrap_or((0.0, 0.0))
    }
}

/// Runs consensus ADMM to convergence or the iteration cap.
pub fn run(s: &Scenario, cfg: &SolverConfig) -> Result<SolveReport> {
    run_observed(s, cfg, |_, _| {})
}

/// Like [`run`], calling `observe(k, state)` after the dual update of every
/// iteration `k` (1-based).
pub fn run_observed<F>(s: &Scenario, cfg: &SolverConfig, mut observe: F) -> Result<SolveReport>
where
    F: FnMut(usize, &ConsensusState),
{
    s.validate()?;
    cfg.validate()?;
    let started = Instant::now();
    let horizon = s.horizon;
    let n_agents = s.n_agents();
    let mut state = init_state(s, cfg);
    let dispatcher = Dispatcher::new(cfg.threads)?;
    let mut workers: Vec<Worker> = (0..n_agents).map(|_| Worker::default()).collect();
    let mut records = Vec::new();
    let mut converged = false;

    for k in 1..=cfg.max_admm_iters {
        let t0 = Instant::now();
        let steps = dispatcher.map(&mut workers, |i, w| w.step(s, cfg, &state, i, k));
        let local_ms = ms_since(t0);
        let steps: Vec<Step> = steps.into_iter().collect::<Result<_>>()?;

        let t1 = Instant::now();
        let positions: Vec<Vec<DVector<f64>>> = steps
            .iter()
            .zip(&s.agents)
            .map(|(st, agent)| {
                let (xs, _) = local::unstack_primal(agent, horizon, &st.x);
                xs.iter().map(|x| agent.position(x)).collect()
            })
            .collect();
        let z_prev = state.clone();
        consensus_update(&mut state, &positions, s.d_safe, cfg.consensus_rule);
        dual_update(&mut state, &positions);
        let (primal, dual) = residuals(&z_prev, &state, &positions);
        let consensus_ms = ms_since(t1);

        records.push(IterationRecord {
            iteration: k,
            qp_iterations: steps.iter().map(|st| st.qp_iterations).collect(),
            qp_ms: steps.iter().map(|st| st.qp_ms).collect(),
            warm_start_ms: steps.iter().map(|st| st.warm_start_ms).collect(),
            primal_residual: primal,
            dual_residual: dual,
            local_ms,
            consensus_ms,
            structure_hashes: steps.iter().map(|st| st.structure_hash).collect(),
        });
        for (w, st) in workers.iter_mut().zip(steps) {
            w.last_x = Some(st.x);
        }
        observe(k, &state);
        if primal <= cfg.eps_primal && dual <= cfg.eps_dual {
            converged = true;
            break;
        }
    }

    let trajectories: Vec<Trajectory> = workers
        .iter()
        .zip(&s.agents)
        .map(|(w, agent)| {
            let x = w.last_x.as_ref().expect("at least one iteration ran");
            let (xs, us) = local::unstack_primal(agent, horizon, x);
            Trajectory {
                states: xs.iter().map(|v| v.as_slice().to_vec()).collect(),
                inputs: us.iter().map(|v| v.as_slice().to_vec()).collect(),
            }
        })
        .collect();
    let positions: Vec<Vec<DVector<f64>>> = trajectories
        .iter()
        .zip(&s.agents)
        .map(|(tr, agent)| tr.positions(agent))
        .collect();
    let min_sep = (n_agents >= 2).then(|| min_separation(&positions, s.d_p()));
    let tracking_errors = positions
        .iter()
        .zip(&s.agents)
        .map(|(pos, agent)| {
            let reference: Vec<DVector<f64>> = agent.x_ref.iter().map(|x| agent.position(x)).collect();
            tracking_error(pos, &reference, s.d_p())
        })
        .collect();

    Ok(SolveReport {
        config: *cfg,
        converged,
        admm_iterations: records.len(),
        total_qp_iterations: records.iter().flat_map(|r| r.qp_iterations.iter()).sum(),
        iterations: records,
        trajectories,
        min_separation: min_sep,
        tracking_errors,
        wall_ms: ms_since(started),
    })
}

/// Zero duals; targets are the reference positions, projected pairwise so
/// the initial targets already satisfy the separation constraint.
pub fn init_state(s: &Scenario, cfg: &SolverConfig) -> ConsensusState {
    let mut state = ConsensusState::zeros(
        s.n_agents(),
        s.d_p(),
        cfg.consensus_window.first()..=s.horizon,
        cfg.rho,
    );
    let reference: Vec<Vec<DVector<f64>>> = s
        .agents
        .iter()
        .map(|a| a.x_ref.iter().map(|x| a.position(x)).collect())
        .collect();
    let pairs: Vec<(usize, usize)> = state.pairs().collect();
    for t in state.times() {
        for &(i, j) in &pairs {
            let (zi, zj) = consensus_project(reference[i][t].as_slice(), reference[j][t].as_slice(), s.d_safe);
            state.set_z(i, j, t, &zi);
            state.set_z(j, i, t, &zj);
        }
    }
    state
}

/// Aggregated consensus terms seen by agent `i`.
pub fn penalty_terms(i: usize, state: &ConsensusState, horizon: usize) -> PenaltyTerms {
    let mut terms = PenaltyTerms::none(horizon, state.d_p());
    for t in state.times() {
        for j in (0..state.n_agents()).filter(|&j| j != i) {
            terms.add(t, state.z(i, j, t), state.lambda(i, j, t), state.rho);
        }
    }
    terms
}

/// Stage costs of agent `i` under the current consensus state.
pub fn local_stage_costs(s: &Scenario, state: &ConsensusState, i: usize) -> Result<StageCosts> {
    build_stage_costs(&s.agents[i], &penalty_terms(i, state, s.horizon), state.rho)
}

/// Agent `i`'s full local QP under the current consensus state.
pub fn local_qp(s: &Scenario, state: &ConsensusState, i: usize) -> Result<QpData> {
    Ok(local::assemble_qp(&s.agents[i], &local_stage_costs(s, state, i)?))
}

#[derive(Default)]
struct Worker {
    handle: Option<SolverHandle>,
    /// Structural hash of `handle`, taken when it is created. Hot starts
    /// cannot alter the structure, so it is not recomputed for them.
    structure_hash: u64,
    last_x: Option<DVector<f64>>,
}

struct Step {
    x: DVector<f64>,
    qp_iterations: usize,
    qp_ms: f64,
    warm_start_ms: f64,
    structure_hash: u64,
}

impl Worker {
    fn step(&mut self, s: &Scenario, cfg: &SolverConfig, state: &ConsensusState, i: usize, k: usize) -> Result<Step> {
        let agent = &s.agents[i];
        let stages = local_stage_costs(s, state, i)?;
        let mut warm_start_ms = 0.0;
        let t0;
        let solution: QpSolution = match (cfg.mode, k) {
            (Mode::Base, _) | (Mode::Hotstart, 1) => {
                t0 = Instant::now();
                let mut handle = SolverHandle::create(local::assemble_qp(agent, &stages), cfg.qp_settings())?;
                let sol = handle.solve_cold()?;
                self.handle = Some(handle);
                sol
            }
            (Mode::Turbo, 1) => {
                let tw = Instant::now();
                let warm = bounded_lqr(agent, &stages.clone().with_input_proximal(cfg.input_proximal))?;
                let x0 = local::stack_primal(&warm.x_warm, &warm.u_warm);
                let nu0 = local::stack_duals(&warm.nu);
                warm_start_ms = ms_since(tw);
                t0 = Instant::now();
                let mut handle = SolverHandle::create(local::assemble_qp(agent, &stages), cfg.qp_settings())?;
                let sol = handle.solve_warm(&x0, &nu0, &DVector::zeros(x0.len()))?;
                self.handle = Some(handle);
                sol
            }
            _ => {
                let g = local::gradient(&stages);
                t0 = Instant::now();
                let handle = self.handle.as_mut().expect("handle created on the first iteration");
                handle.solve_hot(&g)?
            }
        };
        let qp_ms = ms_since(t0);
        let handle = self.handle.as_ref().expect("handle present after a solve");
        if k == 1 || cfg.mode == Mode::Base {
            self.structure_hash = handle.data().structural_hash();
        }
        if solution.status != QpStatus::Optimal {
            return Err(Error::AgentQp {
                agent: i,
                iteration: k,
                status: solution.status,
                data: Box::new(handle.data().clone()),
            });
        }
        Ok(Step {
            x: solution.x,
            qp_iterations: solution.iterations,
            qp_ms,
            warm_start_ms,
            structure_hash: self.structure_hash,
        })
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{circle_scenario, Weights};

    #[test]
    fn mode_round_trips_through_strings() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("fast".parse::<Mode>().is_err());
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut c = SolverConfig::default();
        c.rho = 0.0;
        assert!(matches!(c.validate(), Err(Error::InvalidParameter(_))));
        let mut c = SolverConfig::default();
        c.max_admm_iters = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_agent_converges_in_one_iteration() {
        let s = circle_scenario(1, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
        for mode in Mode::ALL {
            let cfg = SolverConfig { mode, threads: 1, ..Default::default() };
            let rep = run(&s, &cfg).unwrap();
            assert!(rep.converged);
            assert_eq!(rep.admm_iterations, 1);
            assert_eq!(rep.final_residuals(), (0.0, 0.0));
            assert!(rep.min_separation.is_none());
        }
    }

    #[test]
    fn penalty_terms_count_neighbours_in_window() {
        let s = circle_scenario(3, 8.0, 4, 1.0, 2.0, Weights::default()).unwrap();
        let st = init_state(&s, &SolverConfig::default());
        let terms = penalty_terms(0, &st, 4);
        assert_eq!(terms.count, vec![0, 2, 2, 2, 2]);
    }
}
