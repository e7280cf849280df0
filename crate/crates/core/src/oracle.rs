//! Reference computations for tests and acceptance checks. Deliberately
//! simple and independent of the solver paths they check: dense direct
//! solves and exhaustive enumeration, no performance goals.

use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::INFINITE_BOUND;
use crate::qpsolve::{ActiveBound, BoundSide, QpData, QpSolution, QpStatus};

/// Largest problem `brute_force_box_qp` accepts.
pub const BRUTE_FORCE_MAX_N: usize = 12;

fn solve_saddle(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = h.nrows();
    let m = a.nrows();
    if n + m == 0 {
        return Some((DVector::zeros(0), DVector::zeros(0)));
    }
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(h);
    k.view_mut((n, 0), (m, n)).copy_from(a);
    k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-g));
    rhs.rows_mut(n, m).copy_from(b);

    let lu = k.clone().lu();
    let diag = lu.u().diagonal().abs();
    if n + m > 0 && !(diag.min() > 1e-12 * diag.max().max(1.0)) {
        return None;
    }
    let mut sol = lu.solve(&rhs)?;
    // one step of iterative refinement
    let resid = &rhs - &k * &sol;
    if let Some(corr) = lu.solve(&resid) {
        sol += corr;
    }
    let x = sol.rows(0, n).into_owned();
    let nu = sol.rows(n, m).into_owned();
    Some((x, nu))
}

/// Solves `[H A'; A 0] [x; nu] = [-g; b]` densely, i.e. the minimizer of
/// `1/2 x'Hx + g'x` subject to `A x = b` with `H x + g + A' nu = 0`.
pub fn kkt_equality_solve(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = h.nrows();
    if !h.is_square() || g.len() != n || (a.nrows() > 0 && a.ncols() != n) || b.len() != a.nrows() {
        return Err(Error::Dimension("kkt_equality_solve: inconsistent shapes".into()));
    }
    let a = if a.nrows() == 0 { DMatrix::zeros(0, n) } else { a.clone() };
    let (x, nu) = solve_saddle(h, g, &a, b)
        .ok_or_else(|| Error::SingularKkt("saddle-point matrix is singular".into()))?;
    let stat = (h * &x + g + a.tr_mul(&nu)).amax();
    let feas = if a.nrows() > 0 { (&a * &x - b).amax() } else { 0.0 };
    let scale = 1.0 + g.amax().max(b.amax());
    if stat.max(feas) > 1e-10 * scale {
        return Err(Error::SingularKkt(format!(
            "saddle-point residual {:.3e} above tolerance",
            stat.max(feas)
        )));
    }
    Ok((x, nu))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pattern {
    Free,
    Lower,
    Upper,
    Fixed,
}

fn choices(lb: f64, ub: f64) -> Vec<Pattern> {
    if lb == ub {
        return vec![Pattern::Fixed];
    }
    let mut c = vec![Pattern::Free];
    if lb > -INFINITE_BOUND {
        c.push(Pattern::Lower);
    }
    if ub < INFINITE_BOUND {
        c.push(Pattern::Upper);
    }
    c
}

/// Ground-truth solve by enumerating every bound-activity pattern in
/// lexicographic order and returning the first KKT point found.
pub fn brute_force_box_qp(data: &QpData) -> Result<QpSolution> {
    let n = data.n();
    let m = data.m();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::InvalidParameter(format!(
            "brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}"
        )));
    }
    let options: Vec<Vec<Pattern>> = (0..n).map(|j| choices(data.lb[j], data.ub[j])).collect();
    let total: usize = options.iter().map(Vec::len).product();
    let tol = 1e-9 * (1.0 + data.g.amax().max(data.b_eq.amax()));

    let mut found: Option<QpSolution> = None;
    let mut digits = vec![0usize; n];
    for _ in 0..total {
        let pattern: Vec<Pattern> = (0..n).map(|j| options[j][digits[j]]).collect();
        if let Some(sol) = try_pattern(data, &pattern, tol) {
            match &found {
                None => {
                    found = Some(sol);
                    if !cfg!(debug_assertions) {
                        break;
                    }
                }
                Some(first) => {
                    debug_assert!(
                        (&first.x - &sol.x).amax() <= 1e-6 * (1.0 + first.x.amax()),
                        "strictly convex QP produced two distinct KKT points"
                    );
                }
            }
        }
        // odometer increment, last variable fastest
        for j in (0..n).rev() {
            digits[j] += 1;
            if digits[j] < options[j].len() {
                break;
            }
            digits[j] = 0;
        }
    }
    Ok(found.unwrap_or_else(|| QpSolution {
        x: DVector::zeros(n),
        nu: DVector::zeros(m),
        mu: DVector::zeros(n),
        working_set: Vec::new(),
        status: QpStatus::Infeasible,
        iterations: 0,
    }))
}

fn try_pattern(data: &QpData, pattern: &[Pattern], tol: f64) -> Option<QpSolution> {
    let n = data.n();
    let m = data.m();
    let free: Vec<usize> = (0..n).filter(|&j| pattern[j] == Pattern::Free).collect();
    let mut x = DVector::zeros(n);
    for j in 0..n {
        match pattern[j] {
            Pattern::Lower | Pattern::Fixed => x[j] = data.lb[j],
            Pattern::Upper => x[j] = data.ub[j],
            Pattern::Free => {}
        }
    }
    let nf = free.len();
    if m > nf {
        return None;
    }
    let h_ff = DMatrix::from_fn(nf, nf, |a, b| data.h[(free[a], free[b])]);
    let hx_fixed = &data.h * &x;
    let g_f = DVector::from_fn(nf, |a, _| data.g[free[a]] + hx_fixed[free[a]]);
    let a_f = DMatrix::from_fn(m, nf, |r, a| data.a_eq[(r, free[a])]);
    let b_f = if m > 0 { &data.b_eq - &data.a_eq * &x } else { DVector::zeros(0) };
    let (x_f, nu) = solve_saddle(&h_ff, &g_f, &a_f, &b_f)?;
    for (a, &j) in free.iter().enumerate() {
        x[j] = x_f[a];
        if x[j] < data.lb[j] - tol || x[j] > data.ub[j] + tol {
            return None;
        }
    }
    let grad = &data.h * &x + &data.g + data.a_eq.tr_mul(&nu);
    let mut mu = DVector::zeros(n);
    let mut working_set = Vec::new();
    for j in 0..n {
        let side = match pattern[j] {
            Pattern::Free => continue,
            Pattern::Lower => BoundSide::Lower,
            Pattern::Upper => BoundSide::Upper,
            Pattern::Fixed => BoundSide::Fixed,
        };
        mu[j] = -grad[j];
        let ok = match side {
            BoundSide::Lower => mu[j] <= tol,
            BoundSide::Upper => mu[j] >= -tol,
            BoundSide::Fixed => true,
        };
        if !ok {
            return None;
        }
        working_set.push(ActiveBound { index: j, side });
    }
    Some(QpSolution {
        x,
        nu,
        mu,
        working_set,
        status: QpStatus::Optimal,
        iterations: 0,
    })
}

/// Independent KKT certificate of a claimed solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktViolation {
    /// `|H x + g + A' nu + mu|_inf`
    pub stationarity: f64,
    /// `|A x - b|_inf`
    pub equality: f64,
    /// Largest bound violation.
    pub bounds: f64,
    /// Largest `min(|mu_j|, distance to the bound on mu_j's side)`.
    pub complementarity: f64,
}

impl KktViolation {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.equality)
            .max(self.bounds)
            .max(self.complementarity)
    }
}

pub fn kkt_violation(data: &QpData, sol: &QpSolution) -> KktViolation {
    let n = data.n();
    let stationarity = (&data.h * &sol.x + &data.g + data.a_eq.tr_mul(&sol.nu) + &sol.mu).amax();
    let equality = if data.m() > 0 {
        (&data.a_eq * &sol.x - &data.b_eq).amax()
    } else {
        0.0
    };
    let mut bounds = 0.0f64;
    let mut complementarity = 0.0f64;
    for j in 0..n {
        let x = sol.x[j];
        bounds = bounds.max(data.lb[j] - x).max(x - data.ub[j]);
        let mu = sol.mu[j];
        if mu != 0.0 {
            let bound = if mu > 0.0 { data.ub[j] } else { data.lb[j] };
            let gap = if bound.abs() >= INFINITE_BOUND {
                f64::INFINITY
            } else {
                (x - bound).abs()
            };
            complementarity = complementarity.max(mu.abs().min(gap));
        }
    }
    KktViolation {
        stationarity,
        equality,
        bounds,
        complementarity,
    }
}

/// Minimum pairwise position distance over all agents and all timesteps.
/// Positions are the first `d_p` state entries. `+inf` for fewer than two agents.
pub fn min_separation(trajectories: &[Vec<DVector<f64>>], d_p: usize) -> f64 {
    let len = trajectories.first().map_or(0, Vec::len);
    min_separation_over(trajectories, d_p, 0..=len.saturating_sub(1))
}

/// As [`min_separation`], restricted to the given timesteps.
pub fn min_separation_over(
    trajectories: &[Vec<DVector<f64>>],
    d_p: usize,
    times: RangeInclusive<usize>,
) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..trajectories.len() {
        for j in i + 1..trajectories.len() {
            for t in times.clone() {
                let (xi, xj) = (&trajectories[i][t], &trajectories[j][t]);
                let d = (xi.rows(0, d_p) - xj.rows(0, d_p)).norm();
                best = best.min(d);
            }
        }
    }
    best
}

/// Distance between the final position and the reference's final position.
pub fn tracking_error(trajectory: &[DVector<f64>], reference: &[DVector<f64>], d_p: usize) -> f64 {
    let (Some(x), Some(r)) = (trajectory.last(), reference.last()) else {
        return 0.0;
    };
    (x.rows(0, d_p) - r.rows(0, d_p)).norm()
}
