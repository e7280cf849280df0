//! Random instance generators shared by the integration and acceptance suites.
#![allow(dead_code)]

use consensus_mpc::model::{AgentModel, INFINITE_BOUND};
use consensus_mpc::riccati::PenaltyTerms;
use consensus_mpc::QpData;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Dense strictly convex QP with `n <= 6`, `m <= min(3, n - 1)` equality
/// rows and a mix of finite, one-sided and absent bounds. The equality rows
/// pass through a point strictly inside the box, so every instance is feasible.
pub fn random_qp(rng: &mut impl Rng) -> QpData {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(0..=3.min(n - 1));
    let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let g = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
    let a_eq = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let inside = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
    let b_eq = &a_eq * &inside;
    let lb = DVector::from_fn(n, |_, _| {
        if rng.gen_bool(0.2) {
            -1e20
        } else {
            rng.gen_range(-1.5..-0.5)
        }
    });
    let ub = DVector::from_fn(n, |_, _| {
        if rng.gen_bool(0.2) {
            1e20
        } else {
            rng.gen_range(0.5..1.5)
        }
    });
    QpData {
        h,
        g,
        a_eq,
        b_eq,
        lb,
        ub,
    }
}

pub fn objective(d: &QpData, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(&d.h * x)) + d.g.dot(x)
}

/// Linear agent with `n_x <= 6`, `n_u <= 3`, `d_p <= min(3, n_x)`, mildly
/// stable dynamics, PSD state weights and PD input weight. Bounds are absent.
pub fn random_agent(rng: &mut impl Rng, horizon: usize) -> AgentModel {
    let n_x = rng.gen_range(1..=6);
    let n_u = rng.gen_range(1..=3);
    let d_p = rng.gen_range(1..=3.min(n_x));
    let scale = 0.3 / (n_x as f64).sqrt();
    let a = DMatrix::identity(n_x, n_x) + DMatrix::from_fn(n_x, n_x, |_, _| rng.gen_range(-scale..scale));
    let b = DMatrix::from_fn(n_x, n_u, |_, _| rng.gen_range(-1.0..1.0));
    let psd = |rng: &mut dyn rand::RngCore, k: usize| {
        let rank = rng.gen_range(0..=k);
        let l = DMatrix::from_fn(k, rank, |_, _| rng.gen_range(-1.0..1.0));
        &l * l.transpose()
    };
    let q = psd(rng, n_x);
    let q_terminal = psd(rng, n_x);
    let lr = DMatrix::from_fn(n_u, n_u, |_, _| rng.gen_range(-1.0..1.0));
    let r = &lr * lr.transpose() + DMatrix::identity(n_u, n_u) * 0.2;
    let c = DMatrix::from_fn(d_p, n_x, |i, j| if i == j { 1.0 } else { 0.0 });
    let x_init = DVector::from_fn(n_x, |_, _| rng.gen_range(-2.0..2.0));
    let x_ref = (0..=horizon)
        .map(|_| DVector::from_fn(n_x, |_, _| rng.gen_range(-2.0..2.0)))
        .collect();
    AgentModel {
        a,
        b,
        q,
        r,
        q_terminal,
        c,
        x_init,
        x_ref,
        x_lb: DVector::from_element(n_x, -INFINITE_BOUND),
        x_ub: DVector::from_element(n_x, INFINITE_BOUND),
        u_lb: DVector::from_element(n_u, -INFINITE_BOUND),
        u_ub: DVector::from_element(n_u, INFINITE_BOUND),
    }
}

/// Up to three neighbour terms per timestep with random targets and duals.
pub fn random_terms(rng: &mut impl Rng, horizon: usize, d_p: usize, rho: f64) -> PenaltyTerms {
    let mut terms = PenaltyTerms::none(horizon, d_p);
    for t in 0..=horizon {
        for _ in 0..rng.gen_range(0..=3) {
            let z: Vec<f64> = (0..d_p).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let lambda: Vec<f64> = (0..d_p).map(|_| rng.gen_range(-3.0..3.0)).collect();
            terms.add(t, &z, &lambda, rho);
        }
    }
    terms
}
