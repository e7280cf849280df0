//! Dense strictly convex QP kernel:
//!
//! ```text
//!     minimize    1/2 x' H x + g' x
//!     subject to  A_eq x = b_eq
//!                 lb <= x <= ub
//! ```
//!
//! The solver is a parametric active-set method. Every solve starts from a
//! primal-dual point that is optimal for an auxiliary instance
//! `(g0, b0, lb0, ub0)` sharing `H` and `A_eq`, then follows the straight
//! homotopy to `(g, b_eq, lb, ub)`, updating the working set of active bounds
//! at each breakpoint. The three entry points differ only in the starting point:
//!
//! * [`SolverHandle::solve_cold`]: zero vector projected onto the bounds, no
//!   active bounds, zero duals.
//! * [`SolverHandle::solve_warm`]: a caller-supplied primal-dual guess; bounds
//!   it violates are relaxed to pass through it, seed the working set, and
//!   move back to their true values along the path.
//! * [`SolverHandle::solve_hot`]: the previous optimal point and working set,
//!   with only the gradient moving.
//!
//! `iterations` counts bound additions plus bound removals in all three modes.
//!
//! Linear algebra: the full KKT matrix `K = [H A'; A 0]` is LU-factorized once
//! per handle. Active bounds enter as border rows `e_j'`, eliminated through
//! the Schur complement `S = E' K^{-1} E`, whose Cholesky factor is extended in
//! place when a bound is added and downdated when one leaves. `S` is positive definite exactly when the
//! active bounds are linearly independent of the equality rows, so a vanishing
//! pivot doubles as the dependency test.

use rustc_hash::FxHasher;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::INFINITE_BOUND;

/// QP instance. Bounds with magnitude `>= 1e19` are infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct QpData {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpData {
    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn m(&self) -> usize {
        self.a_eq.nrows()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    /// Hash of everything except the gradient.
    pub fn structural_hash(&self) -> u64 {
        let mut hasher = FxHasher::default();
        for part in [&self.h, &self.a_eq] {
            part.shape().hash(&mut hasher);
            part.as_slice().iter().for_each(|v| hasher.write_u64(v.to_bits()));
        }
        for part in [&self.b_eq, &self.lb, &self.ub] {
            part.len().hash(&mut hasher);
            part.as_slice().iter().for_each(|v| hasher.write_u64(v.to_bits()));
        }
        hasher.finish()
    }

    /// Matrix-market style text dump for offline triage of failing solves.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "%%QpData n={} m={}", self.n(), self.m());
        let dense = |out: &mut String, name: &str, m: &DMatrix<f64>| {
            let _ = writeln!(out, "%%MatrixMarket matrix coordinate real general");
            let _ = writeln!(out, "% {name}");
            let nnz = m.iter().filter(|v| **v != 0.0).count();
            let _ = writeln!(out, "{} {} {}", m.nrows(), m.ncols(), nnz);
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    if m[(i, j)] != 0.0 {
                        let _ = writeln!(out, "{} {} {:e}", i + 1, j + 1, m[(i, j)]);
                    }
                }
            }
        };
        let vector = |out: &mut String, name: &str, v: &DVector<f64>| {
            let _ = writeln!(out, "%%MatrixMarket matrix array real general");
            let _ = writeln!(out, "% {name}");
            let _ = writeln!(out, "{} 1", v.len());
            for x in v.iter() {
                let _ = writeln!(out, "{x:e}");
            }
        };
        dense(&mut out, "H", &self.h);
        vector(&mut out, "g", &self.g);
        dense(&mut out, "A_eq", &self.a_eq);
        vector(&mut out, "b_eq", &self.b_eq);
        vector(&mut out, "lb", &self.lb);
        vector(&mut out, "ub", &self.ub);
        out
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        let m = self.m();
        let setup = |msg: String| Err(Error::QpSetup(msg));
        if !self.h.is_square() {
            return setup("H must be square".into());
        }
        if self.g.len() != n || self.lb.len() != n || self.ub.len() != n {
            return setup("g, lb, ub must have n entries".into());
        }
        if m > 0 && self.a_eq.ncols() != n {
            return setup("A_eq must have n columns".into());
        }
        if self.b_eq.len() != m {
            return setup("b_eq must have m entries".into());
        }
        if m > n {
            return setup(format!("{m} equality rows exceed {n} variables"));
        }
        let finite = |v: &f64| v.is_finite();
        if !self.h.iter().all(finite) || !self.g.iter().all(finite) || !self.a_eq.iter().all(finite)
        {
            return setup("non-finite entries in H, g or A_eq".into());
        }
        let asym = (&self.h - self.h.transpose()).amax();
        if asym > 1e-10 {
            return setup(format!("H is not symmetric (max asymmetry {asym:.3e})"));
        }
        if let Some(j) = (0..n).find(|&j| self.lb[j] > self.ub[j] || self.lb[j].is_nan() || self.ub[j].is_nan()) {
            return setup(format!("bounds of variable {j} are inconsistent"));
        }
        if m > 0 {
            let sv = self.a_eq.clone().svd(false, false).singular_values;
            if sv.min() <= 1e-12 * sv.max().max(1.0) {
                return setup("A_eq is rank deficient".into());
            }
        }
        Ok(())
    }
}

fn lower_finite(v: f64) -> bool {
    v > -INFINITE_BOUND
}

fn upper_finite(v: f64) -> bool {
    v < INFINITE_BOUND
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    /// KKT tolerance for the optimality certificate.
    pub tol: f64,
    /// Working-set change budget per solve; `None` means `10 (n + m)`.
    pub max_iter: Option<usize>,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tol: 1e-8,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
    IllConditioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSide {
    Lower,
    Upper,
    /// `lb == ub`; permanently active.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveBound {
    pub index: usize,
    pub side: BoundSide,
}

/// Primal-dual answer. Stationarity convention: `H x + g + A_eq' nu + mu = 0`,
/// so `mu <= 0` on active lower bounds and `mu >= 0` on active upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub nu: DVector<f64>,
    pub mu: DVector<f64>,
    /// Active bounds at the solution, sorted by variable index.
    pub working_set: Vec<ActiveBound>,
    pub status: QpStatus,
    pub iterations: usize,
}

impl QpSolution {
    /// Magnitudes of the lower-bound multipliers.
    pub fn mu_lower(&self) -> DVector<f64> {
        self.mu.map(|v| (-v).max(0.0))
    }

    /// Magnitudes of the upper-bound multipliers.
    pub fn mu_upper(&self) -> DVector<f64> {
        self.mu.map(|v| v.max(0.0))
    }

    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone)]
struct Point {
    x: DVector<f64>,
    nu: DVector<f64>,
    mu: DVector<f64>,
}

/// Active bounds plus the Cholesky factor of their Schur complement.
#[derive(Debug, Clone, Default)]
struct WorkingSet {
    members: Vec<ActiveBound>,
    /// `K^{-1} e_j` for each member.
    cols: Vec<DVector<f64>>,
    /// Lower-triangular factor of `S`, row `k` holds `k + 1` entries.
    chol: Vec<Vec<f64>>,
}

const DEPENDENCY_TOL: f64 = 1e-9;

impl WorkingSet {
    fn position(&self, j: usize) -> Option<usize> {
        self.members.iter().position(|b| b.index == j)
    }

    /// Schur column of a candidate: entries `S_{k,new}` against current members.
    fn border(&self, j: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[j]).collect()
    }

    fn forward(&self, rhs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; rhs.len()];
        for k in 0..rhs.len() {
            let row = &self.chol[k];
            let s: f64 = (0..k).map(|i| row[i] * out[i]).sum();
            out[k] = (rhs[k] - s) / row[k];
        }
        out
    }

    fn backward(&self, rhs: &[f64]) -> Vec<f64> {
        let w = rhs.len();
        let mut out = vec![0.0; w];
        for k in (0..w).rev() {
            let s: f64 = (k + 1..w).map(|i| self.chol[i][k] * out[i]).sum();
            out[k] = (rhs[k] - s) / self.chol[k][k];
        }
        out
    }

    fn solve_schur(&self, rhs: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(rhs))
    }

    /// Appends a bound; returns it back if it is linearly dependent.
    fn try_add(&mut self, bound: ActiveBound, col: DVector<f64>) -> std::result::Result<(), DVector<f64>> {
        let j = bound.index;
        let diag = col[j];
        let border = self.border(j);
        let l = self.forward(&border);
        let d2 = diag - l.iter().map(|v| v * v).sum::<f64>();
        if !(d2 > DEPENDENCY_TOL * diag.abs()) || diag <= 1e-14 {
            return Err(col);
        }
        let mut row = l;
        row.push(d2.sqrt());
        self.chol.push(row);
        self.members.push(bound);
        self.cols.push(col);
        Ok(())
    }

    /// Removes member `k`. Deleting row and column `k` of `S = L L'` leaves
    /// the trailing block as `L22 L22' + v v'` with `v` the old column `k`
    /// below the diagonal, restored by a rank-one Cholesky update.
    fn remove(&mut self, k: usize) -> Result<()> {
        self.members.remove(k);
        self.cols.remove(k);
        let mut v: Vec<f64> = self.chol[k + 1..].iter().map(|row| row[k]).collect();
        self.chol.remove(k);
        for row in &mut self.chol[k..] {
            row.remove(k);
        }
        for p in 0..v.len() {
            let c = k + p;
            let diag = self.chol[c][c];
            let r = diag.hypot(v[p]);
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::SingularKkt("working set lost independence on removal".into()));
            }
            let (cs, sn) = (r / diag, v[p] / diag);
            self.chol[c][c] = r;
            for q in p + 1..v.len() {
                let row = &mut self.chol[c + q - p];
                row[c] = (row[c] + sn * v[q]) / cs;
                v[q] = cs * v[q] - sn * row[c];
            }
        }
        Ok(())
    }
}

/// Persistent solver state for one QP structure. Only the gradient may change
/// between solves, through [`SolverHandle::solve_hot`].
#[derive(Debug, Clone)]
pub struct SolverHandle {
    data: QpData,
    settings: QpSettings,
    kkt: LU<f64, Dyn, Dyn>,
    fixed: Vec<usize>,
    ws: WorkingSet,
    last: Option<Point>,
    /// Lazily filled `K^{-1} e_j`; bounds re-enter often across hot starts.
    col_cache: Vec<Option<DVector<f64>>>,
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Add(usize, BoundSide),
    Remove(usize),
}

impl SolverHandle {
    /// Validates the instance and factorizes the KKT matrix once.
    pub fn create(data: QpData, settings: QpSettings) -> Result<Self> {
        data.validate()?;
        let (n, m) = (data.n(), data.m());
        let mut k = DMatrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&data.h);
        if m > 0 {
            k.view_mut((n, 0), (m, n)).copy_from(&data.a_eq);
            k.view_mut((0, n), (n, m)).copy_from(&data.a_eq.transpose());
        }
        let lu = k.lu();
        let u = lu.u();
        let diag = u.diagonal().abs();
        let (dmin, dmax) = (diag.min(), diag.max());
        if n + m > 0 && !(dmin > 1e-13 * dmax.max(1.0)) {
            return Err(Error::QpSetup(
                "KKT matrix is singular: H is not positive definite on the null space of A_eq".into(),
            ));
        }
        let fixed: Vec<usize> = (0..n).filter(|&j| data.lb[j] == data.ub[j]).collect();
        let mut handle = SolverHandle {
            data,
            settings,
            kkt: lu,
            fixed,
            ws: WorkingSet::default(),
            last: None,
            col_cache: vec![None; n],
        };
        handle.reset_working_set()?;
        Ok(handle)
    }

    pub fn data(&self) -> &QpData {
        &self.data
    }

    pub fn settings(&self) -> &QpSettings {
        &self.settings
    }

    /// Working-set change budget per solve.
    pub fn max_iter(&self) -> usize {
        self.settings
            .max_iter
            .unwrap_or(10 * (self.data.n() + self.data.m()))
            .max(1)
    }

    fn n(&self) -> usize {
        self.data.n()
    }

    fn kkt_col(&mut self, j: usize) -> Result<DVector<f64>> {
        if let Some(col) = &self.col_cache[j] {
            return Ok(col.clone());
        }
        let mut e = DVector::zeros(self.n() + self.data.m());
        e[j] = 1.0;
        let col = self
            .kkt
            .solve(&e)
            .ok_or_else(|| Error::SingularKkt("KKT back-substitution failed".into()))?;
        self.col_cache[j] = Some(col.clone());
        Ok(col)
    }

    fn reset_working_set(&mut self) -> Result<()> {
        self.ws = WorkingSet::default();
        for &j in &self.fixed.clone() {
            let col = self.kkt_col(j)?;
            let bound = ActiveBound {
                index: j,
                side: BoundSide::Fixed,
            };
            if self.ws.try_add(bound, col).is_err() {
                return Err(Error::QpSetup(format!(
                    "fixed variable {j} is linearly dependent on the equality rows"
                )));
            }
        }
        Ok(())
    }

    fn target(&self) -> Params {
        Params {
            g: self.data.g.clone(),
            b: self.data.b_eq.clone(),
            lb: self.data.lb.clone(),
            ub: self.data.ub.clone(),
        }
    }

    /// Solves the equality system for the current working set with right-hand
    /// side `(-g, b)` and border values `c`.
    fn solve_bordered(&self, rhs: &DVector<f64>, c: &[f64]) -> Result<(DVector<f64>, Vec<f64>)> {
        let y = self
            .kkt
            .solve(rhs)
            .ok_or_else(|| Error::SingularKkt("KKT back-substitution failed".into()))?;
        Ok(self.border_correct(y, c))
    }

    /// Turns `y = K^{-1} rhs` into the bordered solution for border values `c`.
    fn border_correct(&self, mut y: DVector<f64>, c: &[f64]) -> (DVector<f64>, Vec<f64>) {
        let schur_rhs: Vec<f64> = self
            .ws
            .members
            .iter()
            .zip(c)
            .map(|(b, ck)| y[b.index] - ck)
            .collect();
        let mu_w = self.ws.solve_schur(&schur_rhs);
        for (col, mu) in self.ws.cols.iter().zip(&mu_w) {
            y.axpy(-mu, col, 1.0);
        }
        (y, mu_w)
    }

    /// The unique optimal point of the equality-restricted problem for `p`
    /// with the current working set held active.
    fn exact_point(&self, p: &Params) -> Result<Point> {
        let n = self.n();
        let mut rhs = DVector::zeros(n + self.data.m());
        rhs.rows_mut(0, n).copy_from(&(-&p.g));
        rhs.rows_mut(n, p.b.len()).copy_from(&p.b);
        let c: Vec<f64> = self.ws.members.iter().map(|&m| p.bound(m)).collect();
        let (y, mu_w) = self.solve_bordered(&rhs, &c)?;
        let mut x = y.rows(0, n).into_owned();
        let nu = y.rows(n, self.data.m()).into_owned();
        let mut mu = DVector::zeros(n);
        for (b, (v, ck)) in self.ws.members.iter().zip(mu_w.iter().zip(&c)) {
            mu[b.index] = *v;
            x[b.index] = *ck;
        }
        Ok(Point { x, nu, mu })
    }

    fn finish(&mut self, point: Point, status: QpStatus, iterations: usize) -> QpSolution {
        let mut working_set = self.ws.members.clone();
        working_set.sort_by_key(|b| b.index);
        let sol = QpSolution {
            x: point.x.clone(),
            nu: point.nu.clone(),
            mu: point.mu.clone(),
            working_set,
            status,
            iterations,
        };
        self.last = if status == QpStatus::Optimal {
            Some(point)
        } else {
            None
        };
        sol
    }

    /// Cold start: zero primal projected onto the bounds, zero duals, only
    /// fixed variables active.
    pub fn solve_cold(&mut self) -> Result<QpSolution> {
        let n = self.n();
        let x0 = DVector::from_fn(n, |j, _| 0.0f64.clamp(self.data.lb[j], self.data.ub[j]));
        self.reset_working_set()?;
        let start = Point {
            x: x0,
            nu: DVector::zeros(self.data.m()),
            mu: DVector::zeros(n),
        };
        let (lb, ub) = (self.data.lb.clone(), self.data.ub.clone());
        self.solve_from(start, lb, ub)
    }

    /// Warm start from an external primal-dual guess. The guess is taken as
    /// exact for an auxiliary problem whose violated bounds are relaxed to
    /// pass through it; those coordinates seed the working set (as do
    /// coordinates exactly at a bound) and the relaxed bounds are moved back
    /// along the homotopy. Bound duals of the wrong sign are dropped.
    pub fn solve_warm(
        &mut self,
        x0: &DVector<f64>,
        nu0: &DVector<f64>,
        mu0: &DVector<f64>,
    ) -> Result<QpSolution> {
        let (n, m) = (self.n(), self.data.m());
        if x0.len() != n || nu0.len() != m || mu0.len() != n {
            return Err(Error::Dimension(format!(
                "warm start expects x0 ({n}), nu0 ({m}), mu0 ({n})"
            )));
        }
        if !x0.iter().chain(nu0.iter()).chain(mu0.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("warm start contains non-finite entries".into()));
        }
        self.reset_working_set()?;
        let (mut lb0, mut ub0) = (self.data.lb.clone(), self.data.ub.clone());
        let mut mu = DVector::zeros(n);
        for j in 0..n {
            let (lb, ub) = (self.data.lb[j], self.data.ub[j]);
            if lb == ub {
                lb0[j] = x0[j];
                ub0[j] = x0[j];
                mu[j] = mu0[j];
                continue;
            }
            let side = if lower_finite(lb) && x0[j] <= lb {
                lb0[j] = x0[j];
                BoundSide::Lower
            } else if upper_finite(ub) && x0[j] >= ub {
                ub0[j] = x0[j];
                BoundSide::Upper
            } else {
                continue;
            };
            let col = self.kkt_col(j)?;
            if self.ws.try_add(ActiveBound { index: j, side }, col).is_ok() {
                let sign_ok = match side {
                    BoundSide::Lower => mu0[j] <= 0.0,
                    _ => mu0[j] >= 0.0,
                };
                if sign_ok {
                    mu[j] = mu0[j];
                }
            }
        }
        let start = Point {
            x: x0.clone(),
            nu: nu0.clone(),
            mu,
        };
        self.solve_from(start, lb0, ub0)
    }

    /// Hot start: previous optimal working set and point, new gradient.
    pub fn solve_hot(&mut self, g_new: &DVector<f64>) -> Result<QpSolution> {
        if g_new.len() != self.n() {
            return Err(Error::Dimension("gradient length must equal n".into()));
        }
        let Some(point) = self.last.clone() else {
            return Err(Error::QpUsage("solve_hot requires a prior successful solve".into()));
        };
        let g_from = std::mem::replace(&mut self.data.g, g_new.clone());
        let from = Params {
            g: g_from,
            ..self.target()
        };
        let budget = self.max_iter();
        let (point, status, iterations) = self.homotopy(point, from, budget)?;
        Ok(self.finish(point, status, iterations))
    }

    /// Builds the auxiliary instance for which `start` (with the current
    /// working set and bounds `lb0`, `ub0`) is optimal and runs the homotopy
    /// to the real data.
    fn solve_from(&mut self, start: Point, lb0: DVector<f64>, ub0: DVector<f64>) -> Result<QpSolution> {
        let from = Params {
            g: -(&self.data.h * &start.x + self.data.a_eq.tr_mul(&start.nu) + &start.mu),
            b: &self.data.a_eq * &start.x,
            lb: lb0,
            ub: ub0,
        };
        let budget = self.max_iter();
        let (point, status, iterations) = self.homotopy(start, from, budget)?;
        Ok(self.finish(point, status, iterations))
    }

    fn homotopy(&mut self, mut point: Point, mut cur: Params, budget: usize) -> Result<(Point, QpStatus, usize)> {
        let n = self.n();
        let m = self.data.m();
        let target = self.target();
        let mut iterations = 0usize;
        // Repair passes restart the homotopy if the final certificate fails.
        let mut repairs = 0;
        // The remaining data change shrinks by (1 - t) per step, so the
        // unbordered solve K^{-1} rhs is computed once per path and rescaled.
        let mut free_dir: Option<(DVector<f64>, f64)> = None;

        loop {
            let d = target.minus(&cur);
            if d.is_zero() {
                break;
            }
            if free_dir.is_none() {
                let mut rhs = DVector::zeros(n + m);
                rhs.rows_mut(0, n).copy_from(&(-&d.g));
                rhs.rows_mut(n, m).copy_from(&d.b);
                match self.kkt.solve(&rhs) {
                    Some(y) => free_dir = Some((y, 1.0)),
                    None => return Ok((point, QpStatus::IllConditioned, iterations)),
                }
            }
            let (base, scale) = free_dir.as_ref().expect("set above");
            let dc: Vec<f64> = self.ws.members.iter().map(|&b| d.bound(b)).collect();
            let (dy, dmu_w) = self.border_correct(base * *scale, &dc);
            let dx = dy.rows(0, n);
            let dual_scale = 1.0 + target.g.amax().max(cur.g.amax());

            let mut best: Option<(f64, usize, Event)> = None;
            let mut consider = |t: f64, j: usize, ev: Event| {
                let better = match best {
                    None => true,
                    Some((bt, bj, _)) => t < bt || (t == bt && j < bj),
                };
                if better {
                    best = Some((t, j, ev));
                }
            };

            let mut in_ws = vec![false; n];
            for b in &self.ws.members {
                in_ws[b.index] = true;
            }
            for j in (0..n).filter(|&j| !in_ws[j]) {
                let xj = point.x[j];
                if lower_finite(target.lb[j]) {
                    let (gap, rate) = (xj - cur.lb[j], dx[j] - d.lb[j]);
                    let tol = 1e-11 * (1.0 + target.lb[j].abs());
                    if rate < 0.0 && gap + rate < -tol {
                        consider(gap.max(0.0) / -rate, j, Event::Add(j, BoundSide::Lower));
                    }
                }
                if upper_finite(target.ub[j]) {
                    let (gap, rate) = (cur.ub[j] - xj, d.ub[j] - dx[j]);
                    let tol = 1e-11 * (1.0 + target.ub[j].abs());
                    if rate < 0.0 && gap + rate < -tol {
                        consider(gap.max(0.0) / -rate, j, Event::Add(j, BoundSide::Upper));
                    }
                }
            }
            for (k, b) in self.ws.members.iter().enumerate() {
                let (mu, dmu) = (point.mu[b.index], dmu_w[k]);
                let eps = 1e-11 * dual_scale;
                match b.side {
                    BoundSide::Lower if dmu > 0.0 && mu + dmu > eps => {
                        consider((-mu).max(0.0) / dmu, b.index, Event::Remove(b.index));
                    }
                    BoundSide::Upper if dmu < 0.0 && mu + dmu < -eps => {
                        consider(mu.max(0.0) / -dmu, b.index, Event::Remove(b.index));
                    }
                    _ => {}
                }
            }

            let Some((t, _, event)) = best.filter(|(t, _, _)| *t < 1.0) else {
                // Full step reaches the target data.
                point = match self.exact_point(&target) {
                    Ok(p) => p,
                    Err(_) => return Ok((point, QpStatus::IllConditioned, iterations)),
                };
                if self.certified(&point) || repairs >= 3 {
                    break;
                }
                // Drift pushed the endpoint outside tolerance: restart from a
                // sanitized copy of it.
                repairs += 1;
                free_dir = None;
                let (start, from) = self.sanitized_start(point)?;
                point = start;
                cur = from;
                continue;
            };

            cur.advance(t, &d);
            if let Some((_, scale)) = free_dir.as_mut() {
                *scale *= 1.0 - t;
            }
            // Move along the current segment with the pre-event working set,
            // then apply the event. Only a dependent exchange, which shifts
            // multipliers along a null direction, needs a fresh solve.
            let members = self.ws.members.clone();
            let changes = match event {
                Event::Add(j, side) => self.add_bound(j, side, &point, &dmu_w, t)?,
                Event::Remove(j) => {
                    let k = self.ws.position(j).expect("member present");
                    self.ws.remove(k)?;
                    1
                }
            };
            iterations += changes;
            if iterations >= budget {
                return Ok((point, QpStatus::MaxIter, iterations));
            }
            if changes == 1 {
                point.x.axpy(t, &dx, 1.0);
                point.nu.axpy(t, &dy.rows(n, m), 1.0);
                for (b, dmu) in members.iter().zip(&dmu_w) {
                    point.mu[b.index] += t * dmu;
                }
                match event {
                    Event::Add(j, side) => {
                        point.x[j] = cur.bound(ActiveBound { index: j, side });
                        point.mu[j] = 0.0;
                    }
                    Event::Remove(j) => point.mu[j] = 0.0,
                }
            } else {
                point = match self.exact_point(&cur) {
                    Ok(p) => p,
                    Err(_) => return Ok((point, QpStatus::IllConditioned, iterations)),
                };
            }
        }

        let status = if self.certified(&point) {
            QpStatus::Optimal
        } else {
            QpStatus::IllConditioned
        };
        Ok((point, status, iterations))
    }

    /// Adds bound `j` at the breakpoint reached by step `t`. When the bound is
    /// dependent on the working set, the multipliers are shifted along the
    /// dependency until some member's multiplier vanishes; that member leaves.
    fn add_bound(&mut self, j: usize, side: BoundSide, point: &Point, dmu_w: &[f64], t: f64) -> Result<usize> {
        let col = self.kkt_col(j)?;
        let bound = ActiveBound { index: j, side };
        let col = match self.ws.try_add(bound, col) {
            Ok(()) => return Ok(1),
            Err(col) => col,
        };
        // Null direction of the bordered system: delta_mu_j = 1,
        // delta_mu_W = -S^{-1} s.
        let border = self.ws.border(j);
        let shift: Vec<f64> = self.ws.solve_schur(&border).iter().map(|v| -v).collect();
        let dir = if side == BoundSide::Lower { -1.0 } else { 1.0 };
        let mut leave: Option<(f64, usize)> = None;
        for (k, b) in self.ws.members.iter().enumerate() {
            let mu_k = point.mu[b.index] + t * dmu_w[k];
            let rate = dir * shift[k];
            let limit = match b.side {
                BoundSide::Lower if rate > 0.0 => (-mu_k).max(0.0) / rate,
                BoundSide::Upper if rate < 0.0 => mu_k.max(0.0) / -rate,
                _ => continue,
            };
            let better = match leave {
                None => true,
                Some((bl, bk)) => limit < bl || (limit == bl && b.index < self.ws.members[bk].index),
            };
            if better {
                leave = Some((limit, k));
            }
        }
        let Some((_, k)) = leave else {
            return Err(Error::SingularKkt(format!(
                "bound {j} is dependent and no active bound can be exchanged"
            )));
        };
        self.ws.remove(k)?;
        self.ws
            .try_add(bound, col)
            .map_err(|_| Error::SingularKkt(format!("exchange for bound {j} stayed dependent")))?;
        Ok(2)
    }

    fn certified(&self, p: &Point) -> bool {
        let tol = self.settings.tol;
        let d = &self.data;
        for j in 0..d.n() {
            if lower_finite(d.lb[j]) && p.x[j] < d.lb[j] - tol {
                return false;
            }
            if upper_finite(d.ub[j]) && p.x[j] > d.ub[j] + tol {
                return false;
            }
        }
        for b in &self.ws.members {
            let mu = p.mu[b.index];
            match b.side {
                BoundSide::Lower if mu > tol => return false,
                BoundSide::Upper if mu < -tol => return false,
                _ => {}
            }
        }
        true
    }

    /// Clips an endpoint that missed the certificate, drops members with
    /// wrong-signed multipliers, and returns the matching auxiliary data.
    fn sanitized_start(&mut self, mut p: Point) -> Result<(Point, Params)> {
        let d = &self.data;
        for j in 0..d.n() {
            p.x[j] = p.x[j].clamp(d.lb[j], d.ub[j]);
        }
        let wrong: Vec<usize> = self
            .ws
            .members
            .iter()
            .filter(|b| match b.side {
                BoundSide::Lower => p.mu[b.index] > 0.0,
                BoundSide::Upper => p.mu[b.index] < 0.0,
                BoundSide::Fixed => false,
            })
            .map(|b| b.index)
            .collect();
        for j in wrong {
            let k = self.ws.position(j).expect("member present");
            self.ws.remove(k)?;
            p.mu[j] = 0.0;
        }
        let from = Params {
            g: -(&self.data.h * &p.x + self.data.a_eq.tr_mul(&p.nu) + &p.mu),
            b: &self.data.a_eq * &p.x,
            ..self.target()
        };
        Ok((p, from))
    }
}

/// Data along the parametric path: gradient, equality right-hand side and
/// bounds. Differences of two instances reuse the same type.
#[derive(Debug, Clone)]
struct Params {
    g: DVector<f64>,
    b: DVector<f64>,
    lb: DVector<f64>,
    ub: DVector<f64>,
}

impl Params {
    fn bound(&self, b: ActiveBound) -> f64 {
        match b.side {
            BoundSide::Lower | BoundSide::Fixed => self.lb[b.index],
            BoundSide::Upper => self.ub[b.index],
        }
    }

    /// `self - other`; infinite bounds contribute zero.
    fn minus(&self, other: &Params) -> Params {
        let diff = |a: &DVector<f64>, b: &DVector<f64>| {
            DVector::from_fn(a.len(), |j, _| {
                if a[j].abs() >= INFINITE_BOUND && a[j] == b[j] {
                    0.0
                } else {
                    a[j] - b[j]
                }
            })
        };
        Params {
            g: &self.g - &other.g,
            b: &self.b - &other.b,
            lb: diff(&self.lb, &other.lb),
            ub: diff(&self.ub, &other.ub),
        }
    }

    fn is_zero(&self) -> bool {
        [&self.g, &self.b, &self.lb, &self.ub]
            .iter()
            .all(|v| v.iter().all(|x| *x == 0.0))
    }

    fn advance(&mut self, t: f64, d: &Params) {
        self.g.axpy(t, &d.g, 1.0);
        self.b.axpy(t, &d.b, 1.0);
        self.lb.axpy(t, &d.lb, 1.0);
        self.ub.axpy(t, &d.ub, 1.0);
    }
}
