//! Affine-LQR solve of an agent's local QP with the box constraints dropped:
//! backward Riccati sweep, forward rollout, and dynamics costates. The result
//! is the primal-dual warm start handed to the active-set kernel.
//!
//! Costate convention: with the equality rows laid out as in
//! [`crate::admm::local`] (`-x_0 = -x_init`, then
//! `A x_{t-1} + B u_{t-1} - x_t = 0`), the multiplier of the row block that
//! defines `x_t` is `nu_t = P_t x_t + p_t` under `H x + g + A_eq' nu = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::AgentModel;
use crate::qpsolve::{QpData, QpSettings, QpStatus, SolverHandle};

/// Largest accepted condition number of `S_t = Rbar + B' P_{t+1} B`.
pub const MAX_CONDITION: f64 = 1e12;

/// Consensus penalty data for one agent, aggregated per timestep: the number
/// of neighbour terms and `sum_j (lambda_ij,t - rho z_ij,t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyTerms {
    pub count: Vec<usize>,
    pub linear: Vec<DVector<f64>>,
}

impl PenaltyTerms {
    pub fn none(horizon: usize, d_p: usize) -> Self {
        PenaltyTerms {
            count: vec![0; horizon + 1],
            linear: vec![DVector::zeros(d_p); horizon + 1],
        }
    }

    /// Accumulates one neighbour term `rho/2 |C x_t - z + lambda/rho|^2`.
    pub fn add(&mut self, t: usize, z: &[f64], lambda: &[f64], rho: f64) {
        self.count[t] += 1;
        for (k, v) in self.linear[t].iter_mut().enumerate() {
            *v += lambda[k] - rho * z[k];
        }
    }
}

/// Per-stage quadratic model of the local objective, `t = 0..=T` for states
/// (stage `T` carries the terminal weight) and `t = 0..T` for inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCosts {
    pub state_weight: Vec<DMatrix<f64>>,
    pub state_linear: Vec<DVector<f64>>,
    pub input_weight: DMatrix<f64>,
    pub input_linear: Vec<DVector<f64>>,
}

impl StageCosts {
    pub fn horizon(&self) -> usize {
        self.input_linear.len()
    }

    /// Adds `weight * I` to the input Hessian (a proximal term on inputs).
    pub fn with_input_proximal(mut self, weight: f64) -> Self {
        if weight != 0.0 {
            let n_u = self.input_weight.nrows();
            self.input_weight += DMatrix::identity(n_u, n_u) * weight;
        }
        self
    }
}

/// Expands tracking plus consensus penalties into stage terms:
/// `Qbar_t = Q_t + rho * count_t * C'C`, `q_t = -Q_t x_ref,t + C' linear_t`,
/// `Rbar = R`, `r_t = 0`, with `Q_T` in place of `Q` at the last stage.
pub fn build_stage_costs(agent: &AgentModel, terms: &PenaltyTerms, rho: f64) -> Result<StageCosts> {
    let horizon = agent.x_ref.len() - 1;
    let d_p = agent.d_p();
    if terms.count.len() != horizon + 1 || terms.linear.len() != horizon + 1 {
        return Err(Error::Dimension(format!(
            "penalty terms cover {} stages, expected {}",
            terms.count.len(),
            horizon + 1
        )));
    }
    if terms.linear.iter().any(|v| v.len() != d_p) {
        return Err(Error::Dimension(format!(
            "consensus entries must have d_p = {d_p} components"
        )));
    }
    let ctc = agent.c.tr_mul(&agent.c);
    let mut state_weight = Vec::with_capacity(horizon + 1);
    let mut state_linear = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let q = if t == horizon { &agent.q_terminal } else { &agent.q };
        let mut qbar = q.clone();
        if terms.count[t] > 0 {
            qbar += &ctc * (rho * terms.count[t] as f64);
        }
        state_weight.push(qbar);
        state_linear.push(-(q * &agent.x_ref[t]) + agent.c.tr_mul(&terms.linear[t]));
    }
    Ok(StageCosts {
        state_weight,
        state_linear,
        input_weight: agent.r.clone(),
        input_linear: vec![DVector::zeros(agent.n_u()); horizon],
    })
}

/// Feedback gains and value-function parameters from the backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    /// `K_t`, `t = 0..T`.
    pub feedback: Vec<DMatrix<f64>>,
    /// `k_t`, `t = 0..T`.
    pub feedforward: Vec<DVector<f64>>,
    /// `P_t`, `t = 0..=T`.
    pub value_hessian: Vec<DMatrix<f64>>,
    /// `p_t`, `t = 0..=T`.
    pub value_gradient: Vec<DVector<f64>>,
}

pub fn backward_pass(stages: &StageCosts, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Gains> {
    let horizon = stages.horizon();
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if stages.state_weight.len() != horizon + 1 || stages.state_linear.len() != horizon + 1 {
        return Err(Error::Dimension("stage cost lists have inconsistent lengths".into()));
    }
    let mut p_mat = vec![DMatrix::zeros(0, 0); horizon + 1];
    let mut p_vec = vec![DVector::zeros(0); horizon + 1];
    let mut feedback = vec![DMatrix::zeros(0, 0); horizon];
    let mut feedforward = vec![DVector::zeros(0); horizon];
    p_mat[horizon] = stages.state_weight[horizon].clone();
    p_vec[horizon] = stages.state_linear[horizon].clone();

    for t in (0..horizon).rev() {
        let p_next = &p_mat[t + 1];
        let pa = p_next * a;
        let pb = p_next * b;
        let q_xx = &stages.state_weight[t] + a.tr_mul(&pa);
        let s = &stages.input_weight + b.tr_mul(&pb);
        let m = b.tr_mul(&pa);
        let s_lin = &stages.input_linear[t] + b.tr_mul(&p_vec[t + 1]);
        let q_lin = &stages.state_linear[t] + a.tr_mul(&p_vec[t + 1]);

        let s = (&s + s.transpose()) * 0.5;
        let eig = s.clone().symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::IllConditioned { stage: t, condition });
        }
        let chol = s
            .cholesky()
            .ok_or(Error::IllConditioned { stage: t, condition })?;
        let k_fb = -chol.solve(&m);
        let k_ff = -chol.solve(&s_lin);

        let p = &q_xx + m.tr_mul(&k_fb);
        p_mat[t] = (&p + p.transpose()) * 0.5;
        p_vec[t] = q_lin + m.tr_mul(&k_ff);
        feedback[t] = k_fb;
        feedforward[t] = k_ff;
    }
    Ok(Gains {
        feedback,
        feedforward,
        value_hessian: p_mat,
        value_gradient: p_vec,
    })
}

/// Closed-loop rollout `u_t = K_t x_t + k_t`, `x_{t+1} = A x_t + B u_t`.
pub fn forward_pass(
    gains: &Gains,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x_init: &DVector<f64>,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let horizon = gains.feedback.len();
    let mut xs = Vec::with_capacity(horizon + 1);
    let mut us = Vec::with_capacity(horizon);
    xs.push(x_init.clone());
    for t in 0..horizon {
        let u = &gains.feedback[t] * &xs[t] + &gains.feedforward[t];
        let x_next = a * &xs[t] + b * &u;
        us.push(u);
        xs.push(x_next);
    }
    (xs, us)
}

/// `nu_t = P_t x_t + p_t` for `t = 0..=T`: one costate per equality row block
/// (initial condition, then each dynamics step).
pub fn costates(
    value_hessian: &[DMatrix<f64>],
    value_gradient: &[DVector<f64>],
    x_warm: &[DVector<f64>],
) -> Vec<DVector<f64>> {
    value_hessian
        .iter()
        .zip(value_gradient)
        .zip(x_warm)
        .map(|((p, pv), x)| p * x + pv)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub gains: Gains,
    pub x_warm: Vec<DVector<f64>>,
    pub u_warm: Vec<DVector<f64>>,
    pub nu: Vec<DVector<f64>>,
}

/// Backward sweep, rollout from `x_init`, and costates.
pub fn affine_lqr(agent: &AgentModel, stages: &StageCosts) -> Result<RiccatiSolution> {
    let gains = backward_pass(stages, &agent.a, &agent.b)?;
    let (x_warm, u_warm) = forward_pass(&gains, &agent.a, &agent.b, &agent.x_init);
    let nu = costates(&gains.value_hessian, &gains.value_gradient, &x_warm);
    Ok(RiccatiSolution {
        gains,
        x_warm,
        u_warm,
        nu,
    })
}

/// Riccati solve followed by a rollout that respects the agent's boxes: at
/// each stage the input minimizes stage input cost plus the value function
/// of the next state, `1/2 u'Rbar u + r_t'u + 1/2 x'P x + p'x` with
/// `x = A x_t + B u`, subject to the input and next-state bounds. Without
/// active bounds this reproduces [`forward_pass`]. A stage whose bounded
/// problem is infeasible keeps only the input box; failing that, the clipped
/// feedback input is used. Costates are evaluated along the bounded rollout.
pub fn bounded_lqr(agent: &AgentModel, stages: &StageCosts) -> Result<RiccatiSolution> {
    let gains = backward_pass(stages, &agent.a, &agent.b)?;
    let horizon = stages.horizon();
    let mut x_warm = Vec::with_capacity(horizon + 1);
    let mut u_warm = Vec::with_capacity(horizon);
    x_warm.push(agent.x_init.clone());
    for t in 0..horizon {
        let x = &x_warm[t];
        let u = bounded_step(agent, stages, &gains, t, x, true)
            .or_else(|| bounded_step(agent, stages, &gains, t, x, false))
            .unwrap_or_else(|| {
                let u = &gains.feedback[t] * x + &gains.feedforward[t];
                DVector::from_fn(u.len(), |k, _| u[k].clamp(agent.u_lb[k], agent.u_ub[k]))
            });
        x_warm.push(&agent.a * x + &agent.b * &u);
        u_warm.push(u);
    }
    let nu = costates(&gains.value_hessian, &gains.value_gradient, &x_warm);
    Ok(RiccatiSolution {
        gains,
        x_warm,
        u_warm,
        nu,
    })
}

fn bounded_step(
    agent: &AgentModel,
    stages: &StageCosts,
    gains: &Gains,
    t: usize,
    x: &DVector<f64>,
    state_bounds: bool,
) -> Option<DVector<f64>> {
    let (n_x, n_u) = (agent.a.nrows(), agent.b.ncols());
    let n = n_u + n_x;
    let mut h = DMatrix::zeros(n, n);
    h.view_mut((0, 0), (n_u, n_u)).copy_from(&stages.input_weight);
    h.view_mut((n_u, n_u), (n_x, n_x)).copy_from(&gains.value_hessian[t + 1]);
    let mut g = DVector::zeros(n);
    g.rows_mut(0, n_u).copy_from(&stages.input_linear[t]);
    g.rows_mut(n_u, n_x).copy_from(&gains.value_gradient[t + 1]);
    let mut a_eq = DMatrix::zeros(n_x, n);
    a_eq.view_mut((0, 0), (n_x, n_u)).copy_from(&agent.b);
    a_eq.view_mut((0, n_u), (n_x, n_x)).copy_from(&(-DMatrix::<f64>::identity(n_x, n_x)));
    let b_eq = -(&agent.a * x);
    let free = DVector::from_element(n_x, crate::model::INFINITE_BOUND);
    let (x_lb, x_ub) = if state_bounds {
        (agent.x_lb.clone(), agent.x_ub.clone())
    } else {
        (-&free, free)
    };
    let stack = |a: &DVector<f64>, b: &DVector<f64>| DVector::from_iterator(n, a.iter().chain(b.iter()).copied());
    let data = QpData {
        h,
        g,
        a_eq,
        b_eq,
        lb: stack(&agent.u_lb, &x_lb),
        ub: stack(&agent.u_ub, &x_ub),
    };
    let mut handle = SolverHandle::create(data, QpSettings::default()).ok()?;
    let sol = handle.solve_cold().ok()?;
    (sol.status == QpStatus::Optimal).then(|| sol.x.rows(0, n_u).into_owned())
}
