//! Dense assembly of one agent's local QP.
//!
//! Variables are ordered `[x_0 .. x_T, u_0 .. u_{T-1}]`. Equality rows come in
//! `T + 1` blocks of `n_x`: block 0 is `-x_0 = -x_init`, block `t >= 1` is
//! `A x_{t-1} + B u_{t-1} - x_t = 0`. With this sign choice the multiplier of
//! block `t` equals the Riccati costate `P_t x_t + p_t`.
//!
//! `H`, `A_eq`, `b_eq` and the bounds depend only on the agent, the horizon,
//! `rho` and the consensus window; consensus targets and duals reach the QP
//! through the gradient alone.

use nalgebra::{DMatrix, DVector};

use crate::model::AgentModel;
use crate::qpsolve::QpData;
use crate::riccati::StageCosts;

fn state_offset(n_x: usize, t: usize) -> usize {
    t * n_x
}

fn input_offset(n_x: usize, n_u: usize, horizon: usize, t: usize) -> usize {
    (horizon + 1) * n_x + t * n_u
}

pub fn assemble_qp(agent: &AgentModel, stages: &StageCosts) -> QpData {
    let horizon = stages.horizon();
    let (n_x, n_u) = (agent.n_x(), agent.n_u());
    let n = agent.num_variables(horizon);
    let m = (horizon + 1) * n_x;

    let mut h = DMatrix::zeros(n, n);
    for t in 0..=horizon {
        let o = state_offset(n_x, t);
        h.view_mut((o, o), (n_x, n_x)).copy_from(&stages.state_weight[t]);
    }
    for t in 0..horizon {
        let o = input_offset(n_x, n_u, horizon, t);
        h.view_mut((o, o), (n_u, n_u)).copy_from(&stages.input_weight);
    }

    let mut a_eq = DMatrix::zeros(m, n);
    let mut b_eq = DVector::zeros(m);
    for k in 0..n_x {
        a_eq[(k, k)] = -1.0;
        b_eq[k] = -agent.x_init[k];
    }
    for t in 1..=horizon {
        let row = t * n_x;
        a_eq.view_mut((row, state_offset(n_x, t - 1)), (n_x, n_x))
            .copy_from(&agent.a);
        a_eq.view_mut((row, input_offset(n_x, n_u, horizon, t - 1)), (n_x, n_u))
            .copy_from(&agent.b);
        for k in 0..n_x {
            a_eq[(row + k, state_offset(n_x, t) + k)] = -1.0;
        }
    }

    let mut lb = DVector::zeros(n);
    let mut ub = DVector::zeros(n);
    for t in 0..=horizon {
        let o = state_offset(n_x, t);
        lb.rows_mut(o, n_x).copy_from(&agent.x_lb);
        ub.rows_mut(o, n_x).copy_from(&agent.x_ub);
    }
    for t in 0..horizon {
        let o = input_offset(n_x, n_u, horizon, t);
        lb.rows_mut(o, n_u).copy_from(&agent.u_lb);
        ub.rows_mut(o, n_u).copy_from(&agent.u_ub);
    }

    QpData {
        h,
        g: gradient(stages),
        a_eq,
        b_eq,
        lb,
        ub,
    }
}

/// Stacks the stage linear terms into the QP gradient.
pub fn gradient(stages: &StageCosts) -> DVector<f64> {
    let parts: Vec<&DVector<f64>> = stages
        .state_linear
        .iter()
        .chain(stages.input_linear.iter())
        .collect();
    stack(&parts)
}

fn stack(parts: &[&DVector<f64>]) -> DVector<f64> {
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(len);
    let mut o = 0;
    for p in parts {
        out.rows_mut(o, p.len()).copy_from(*p);
        o += p.len();
    }
    out
}

pub fn stack_primal(xs: &[DVector<f64>], us: &[DVector<f64>]) -> DVector<f64> {
    let parts: Vec<&DVector<f64>> = xs.iter().chain(us.iter()).collect();
    stack(&parts)
}

pub fn stack_duals(nu: &[DVector<f64>]) -> DVector<f64> {
    let parts: Vec<&DVector<f64>> = nu.iter().collect();
    stack(&parts)
}

/// Splits a stacked primal vector into states `t = 0..=T` and inputs `t = 0..T`.
pub fn unstack_primal(
    agent: &AgentModel,
    horizon: usize,
    v: &DVector<f64>,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let (n_x, n_u) = (agent.n_x(), agent.n_u());
    let xs = (0..=horizon)
        .map(|t| v.rows(state_offset(n_x, t), n_x).into_owned())
        .collect();
    let us = (0..horizon)
        .map(|t| v.rows(input_offset(n_x, n_u, horizon, t), n_u).into_owned())
        .collect();
    (xs, us)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{circle_scenario, Weights};
    use crate::riccati::{build_stage_costs, PenaltyTerms};

    #[test]
    fn per_agent_dimensions_for_two_agent_scenario() {
        let s = circle_scenario(2, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
        let st = build_stage_costs(&s.agents[0], &PenaltyTerms::none(20, 2), 25.0).unwrap();
        let qp = assemble_qp(&s.agents[0], &st);
        assert_eq!(qp.n(), 124);
        assert_eq!(qp.m(), 84);
    }

    #[test]
    fn stacking_round_trip() {
        let s = circle_scenario(2, 8.0, 5, 1.0, 2.0, Weights::default()).unwrap();
        let agent = &s.agents[0];
        let v = DVector::from_fn(agent.num_variables(5), |k, _| k as f64);
        let (xs, us) = unstack_primal(agent, 5, &v);
        assert_eq!(stack_primal(&xs, &us), v);
        assert_eq!(xs[1][0], 4.0);
        assert_eq!(us[0][0], 24.0);
    }

    #[test]
    fn reference_rollout_satisfies_equalities() {
        let s = circle_scenario(3, 8.0, 6, 0.5, 2.0, Weights::default()).unwrap();
        let agent = &s.agents[2];
        let st = build_stage_costs(agent, &PenaltyTerms::none(6, 2), 25.0).unwrap();
        let qp = assemble_qp(agent, &st);
        let mut xs = vec![agent.x_init.clone()];
        let us: Vec<DVector<f64>> = (0..6).map(|t| DVector::from_vec(vec![0.1 * t as f64, -0.2])).collect();
        for u in &us {
            let next = &agent.a * xs.last().unwrap() + &agent.b * u;
            xs.push(next);
        }
        let v = stack_primal(&xs, &us);
        assert!((&qp.a_eq * &v - &qp.b_eq).amax() < 1e-12);
    }
}
