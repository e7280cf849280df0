//! Problem instances: agent dynamics, costs, bounds, references, and the
//! circle-swap benchmark scenarios.
//!
//! State ordering throughout is `[positions; velocities]`, so the position
//! selector of a double-integrator agent is `C = [I 0]`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bounds with magnitude at or above this are infinite.
pub const INFINITE_BOUND: f64 = 1e19;
/// Magnitude written to scenario files in place of an infinite bound.
pub const FILE_INFINITY: f64 = 1e20;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

const SYMMETRY_TOL: f64 = 1e-10;

/// One agent: linear dynamics, quadratic tracking costs, box bounds, reference.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q_terminal: DMatrix<f64>,
    /// Position selector, `d_p x n_x`.
    pub c: DMatrix<f64>,
    pub x_init: DVector<f64>,
    /// Reference states for `t = 0..=T`.
    pub x_ref: Vec<DVector<f64>>,
    pub x_lb: DVector<f64>,
    pub x_ub: DVector<f64>,
    pub u_lb: DVector<f64>,
    pub u_ub: DVector<f64>,
}

impl AgentModel {
    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn d_p(&self) -> usize {
        self.c.nrows()
    }

    /// Number of QP variables for horizon `horizon`: `(T+1) n_x + T n_u`.
    pub fn num_variables(&self, horizon: usize) -> usize {
        (horizon + 1) * self.n_x() + horizon * self.n_u()
    }

    /// Position of a state through the selector.
    pub fn position(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x
    }

    fn validate(&self, horizon: usize) -> Result<()> {
        let (nx, nu) = (self.n_x(), self.n_u());
        let dim = |what: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::Dimension(what.to_string()))
            }
        };
        dim("A must be square", self.a.is_square())?;
        dim("B rows must equal n_x", self.b.nrows() == nx)?;
        dim("Q must be n_x x n_x", self.q.shape() == (nx, nx))?;
        dim("Q_T must be n_x x n_x", self.q_terminal.shape() == (nx, nx))?;
        dim("R must be n_u x n_u", self.r.shape() == (nu, nu))?;
        dim("C columns must equal n_x", self.c.ncols() == nx)?;
        dim("x_init must have n_x entries", self.x_init.len() == nx)?;
        dim("x_lb/x_ub must have n_x entries", self.x_lb.len() == nx && self.x_ub.len() == nx)?;
        dim("u_lb/u_ub must have n_u entries", self.u_lb.len() == nu && self.u_ub.len() == nu)?;
        if self.x_ref.len() != horizon + 1 {
            return Err(Error::Dimension(format!(
                "x_ref has {} entries, expected T+1 = {}",
                self.x_ref.len(),
                horizon + 1
            )));
        }
        if self.x_ref.iter().any(|x| x.len() != nx) {
            return Err(Error::Dimension("x_ref entries must have n_x entries".into()));
        }

        check_symmetric_psd("Q", &self.q, false)?;
        check_symmetric_psd("Q_T", &self.q_terminal, false)?;
        check_symmetric_psd("R", &self.r, true)?;

        if self.c.nrows() == 0 || self.c.nrows() > nx {
            return Err(Error::InvalidParameter("C must have 1..=n_x rows".into()));
        }
        let sv = self.c.clone().svd(false, false).singular_values;
        let (smax, smin) = (sv.max(), sv.min());
        if smin <= 1e-12 * smax.max(1.0) {
            return Err(Error::InvalidParameter("C must have full row rank".into()));
        }

        for (lb, ub, what) in [(&self.x_lb, &self.x_ub, "x"), (&self.u_lb, &self.u_ub, "u")] {
            if lb.iter().zip(ub.iter()).any(|(l, u)| l > u) {
                return Err(Error::InvalidParameter(format!("{what}_lb must not exceed {what}_ub")));
            }
        }
        let inside = self
            .x_init
            .iter()
            .zip(self.x_lb.iter().zip(self.x_ub.iter()))
            .all(|(x, (l, u))| *l <= *x && *x <= *u);
        if !inside {
            return Err(Error::InfeasibleScenario("x_init lies outside the state bounds".into()));
        }
        Ok(())
    }
}

fn check_symmetric_psd(name: &str, m: &DMatrix<f64>, definite: bool) -> Result<()> {
    if (m - m.transpose()).amax() > SYMMETRY_TOL {
        return Err(Error::InvalidParameter(format!("{name} must be symmetric")));
    }
    let eig = m.clone().symmetric_eigenvalues();
    let scale = m.amax().max(1.0);
    let lowest = eig.min();
    if definite && lowest <= 1e-12 * scale {
        return Err(Error::InvalidParameter(format!("{name} must be positive definite")));
    }
    if !definite && lowest < -1e-10 * scale {
        return Err(Error::InvalidParameter(format!("{name} must be positive semidefinite")));
    }
    Ok(())
}

/// A full problem instance: `N` agents sharing horizon, timestep and safety radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub agents: Vec<AgentModel>,
    pub horizon: usize,
    pub dt: f64,
    pub d_safe: f64,
    /// Generator parameters, when the scenario came from `circle_scenario`.
    pub origin: Option<CircleParams>,
}

impl Scenario {
    pub fn new(agents: Vec<AgentModel>, horizon: usize, dt: f64, d_safe: f64) -> Result<Self> {
        let s = Scenario {
            agents,
            horizon,
            dt,
            d_safe,
            origin: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn d_p(&self) -> usize {
        self.agents[0].d_p()
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::InvalidParameter("scenario needs at least one agent".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon T must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if !(self.d_safe > 0.0 && self.d_safe.is_finite()) {
            return Err(Error::InvalidParameter("d_safe must be positive".into()));
        }
        let d_p = self.agents[0].d_p();
        for (i, agent) in self.agents.iter().enumerate() {
            agent.validate(self.horizon).map_err(|e| match e {
                Error::Dimension(m) => Error::Dimension(format!("agent {i}: {m}")),
                Error::InvalidParameter(m) => Error::InvalidParameter(format!("agent {i}: {m}")),
                Error::InfeasibleScenario(m) => Error::InfeasibleScenario(format!("agent {i}: {m}")),
                other => other,
            })?;
            if agent.d_p() != d_p {
                return Err(Error::Dimension(format!(
                    "agent {i} has position dimension {}, expected {d_p}",
                    agent.d_p()
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        file.into_scenario()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ScenarioFile::from_scenario(self))?)
    }
}

/// Exact zero-order-hold discretization of a `d_p`-dimensional double integrator.
pub fn double_integrator(dt: f64, d_p: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if !(1..=3).contains(&d_p) {
        return Err(Error::InvalidParameter(format!("d_p must be 1, 2 or 3, got {d_p}")));
    }
    let nx = 2 * d_p;
    let mut a = DMatrix::identity(nx, nx);
    let mut b = DMatrix::zeros(nx, d_p);
    for k in 0..d_p {
        a[(k, d_p + k)] = dt;
        b[(k, k)] = 0.5 * dt * dt;
        b[(d_p + k, k)] = dt;
    }
    Ok((a, b))
}

/// Constant-velocity reference from `p_start` (t = 0) to `p_goal` (t = T).
pub fn straight_line_reference(
    p_start: &[f64],
    p_goal: &[f64],
    horizon: usize,
    dt: f64,
) -> Result<Vec<DVector<f64>>> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon T must be at least 1".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if p_start.len() != p_goal.len() {
        return Err(Error::Dimension("start and goal dimensions differ".into()));
    }
    let d_p = p_start.len();
    let duration = horizon as f64 * dt;
    let velocity: Vec<f64> = p_start
        .iter()
        .zip(p_goal)
        .map(|(s, g)| (g - s) / duration)
        .collect();
    Ok((0..=horizon)
        .map(|t| {
            let frac = t as f64 / horizon as f64;
            DVector::from_fn(2 * d_p, |k, _| {
                if k < d_p {
                    p_start[k] + frac * (p_goal[k] - p_start[k])
                } else {
                    velocity[k - d_p]
                }
            })
        })
        .collect())
}

/// Scalar cost weights; `q` and `q_terminal` apply to positions only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub q: f64,
    pub r: f64,
    pub q_terminal: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            q: 1.0,
            r: 0.1,
            q_terminal: 10.0,
        }
    }
}

/// Parameters that reproduce a generated circle scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleParams {
    pub n_agents: usize,
    pub radius: f64,
    pub weights: Weights,
}

pub const ACCEL_BOUND: f64 = 10.0;

/// Agents evenly spaced on a circle, each swapping to the antipodal point.
pub fn circle_scenario(
    n_agents: usize,
    radius: f64,
    horizon: usize,
    dt: f64,
    d_safe: f64,
    weights: Weights,
) -> Result<Scenario> {
    if n_agents == 0 {
        return Err(Error::InvalidParameter("need at least one agent".into()));
    }
    if !(d_safe > 0.0) {
        return Err(Error::InvalidParameter("d_safe must be positive".into()));
    }
    if !(radius > d_safe) {
        return Err(Error::InfeasibleScenario(format!(
            "radius {radius} must exceed d_safe {d_safe}"
        )));
    }
    let d_p = 2;
    let (a, b) = double_integrator(dt, d_p)?;
    let nx = 2 * d_p;

    let mut c = DMatrix::zeros(d_p, nx);
    let mut pos_weight = DMatrix::zeros(nx, nx);
    for k in 0..d_p {
        c[(k, k)] = 1.0;
        pos_weight[(k, k)] = 1.0;
    }

    let p_max = 2.0 * radius;
    let v_max = 2.0 * radius / (horizon as f64 * dt);
    let x_ub = DVector::from_fn(nx, |k, _| if k < d_p { p_max } else { v_max });
    let u_ub = DVector::from_element(d_p, ACCEL_BOUND);

    let agents = (0..n_agents)
        .map(|i| {
            let angle = 2.0 * PI * i as f64 / n_agents as f64;
            let start = [radius * angle.cos(), radius * angle.sin()];
            let goal = [-start[0], -start[1]];
            let x_ref = straight_line_reference(&start, &goal, horizon, dt)?;
            let mut x_init = DVector::zeros(nx);
            x_init.rows_mut(0, d_p).copy_from_slice(&start);
            Ok(AgentModel {
                a: a.clone(),
                b: b.clone(),
                q: &pos_weight * weights.q,
                r: DMatrix::identity(d_p, d_p) * weights.r,
                q_terminal: &pos_weight * weights.q_terminal,
                c: c.clone(),
                x_init,
                x_ref,
                x_lb: -&x_ub,
                x_ub: x_ub.clone(),
                u_lb: -&u_ub,
                u_ub: u_ub.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut s = Scenario::new(agents, horizon, dt, d_safe)?;
    s.origin = Some(CircleParams {
        n_agents,
        radius,
        weights,
    });
    Ok(s)
}

/// Problem sizes of the centralized formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemDimensions {
    pub num_variables: usize,
    pub num_dynamics_constraints: usize,
    pub num_collision_pair_times: usize,
}

pub fn problem_dimensions(s: &Scenario) -> ProblemDimensions {
    let t = s.horizon;
    let n = s.n_agents();
    ProblemDimensions {
        num_variables: s.agents.iter().map(|a| a.num_variables(t)).sum(),
        num_dynamics_constraints: s.agents.iter().map(|a| t * a.n_x()).sum(),
        num_collision_pair_times: n * n.saturating_sub(1) / 2 * t,
    }
}

// ---------------------------------------------------------------------------
// File format: JSON, matrices as arrays of rows.

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    format_version: u32,
    #[serde(rename = "T")]
    horizon: usize,
    dt: f64,
    d_safe: f64,
    agents: Vec<AgentFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<CircleParams>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AgentFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
    #[serde(rename = "Q_T")]
    q_terminal: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    x_init: Vec<f64>,
    x_ref: Vec<Vec<f64>>,
    bounds: BoundsFile,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoundsFile {
    x_lb: Vec<f64>,
    x_ub: Vec<f64>,
    u_lb: Vec<f64>,
    u_ub: Vec<f64>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{name}: ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn bound_to_file(v: &DVector<f64>) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            if x >= INFINITE_BOUND {
                FILE_INFINITY
            } else if x <= -INFINITE_BOUND {
                -FILE_INFINITY
            } else {
                x
            }
        })
        .collect()
}

impl ScenarioFile {
    fn from_scenario(s: &Scenario) -> Self {
        ScenarioFile {
            format_version: SCENARIO_FORMAT_VERSION,
            horizon: s.horizon,
            dt: s.dt,
            d_safe: s.d_safe,
            generator: s.origin,
            agents: s
                .agents
                .iter()
                .map(|a| AgentFile {
                    a: rows_of(&a.a),
                    b: rows_of(&a.b),
                    q: rows_of(&a.q),
                    r: rows_of(&a.r),
                    q_terminal: rows_of(&a.q_terminal),
                    c: rows_of(&a.c),
                    x_init: a.x_init.iter().copied().collect(),
                    x_ref: a.x_ref.iter().map(|x| x.iter().copied().collect()).collect(),
                    bounds: BoundsFile {
                        x_lb: bound_to_file(&a.x_lb),
                        x_ub: bound_to_file(&a.x_ub),
                        u_lb: bound_to_file(&a.u_lb),
                        u_ub: bound_to_file(&a.u_ub),
                    },
                })
                .collect(),
        }
    }

    fn into_scenario(self) -> Result<Scenario> {
        if self.format_version != SCENARIO_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported scenario format version {}",
                self.format_version
            )));
        }
        let agents = self
            .agents
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                let named = |what: &str| format!("agent {i} {what}");
                Ok(AgentModel {
                    a: matrix_from_rows(&named("A"), &f.a)?,
                    b: matrix_from_rows(&named("B"), &f.b)?,
                    q: matrix_from_rows(&named("Q"), &f.q)?,
                    r: matrix_from_rows(&named("R"), &f.r)?,
                    q_terminal: matrix_from_rows(&named("Q_T"), &f.q_terminal)?,
                    c: matrix_from_rows(&named("C"), &f.c)?,
                    x_init: DVector::from_vec(f.x_init),
                    x_ref: f.x_ref.into_iter().map(DVector::from_vec).collect(),
                    x_lb: DVector::from_vec(f.bounds.x_lb),
                    x_ub: DVector::from_vec(f.bounds.x_ub),
                    u_lb: DVector::from_vec(f.bounds.u_lb),
                    u_ub: DVector::from_vec(f.bounds.u_ub),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut s = Scenario::new(agents, self.horizon, self.dt, self.d_safe)?;
        s.origin = self.generator;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_integrator_unit_step() {
        let (a, b) = double_integrator(1.0, 2).unwrap();
        let a_exp = DMatrix::from_row_slice(
            4,
            4,
            &[1., 0., 1., 0., 0., 1., 0., 1., 0., 0., 1., 0., 0., 0., 0., 1.],
        );
        let b_exp = DMatrix::from_row_slice(4, 2, &[0.5, 0., 0., 0.5, 1., 0., 0., 1.]);
        assert_eq!(a, a_exp);
        assert_eq!(b, b_exp);
    }

    #[test]
    fn double_integrator_half_step_1d() {
        let (a, b) = double_integrator(0.5, 1).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[1., 0.5, 0., 1.]));
        assert_eq!(b, DMatrix::from_row_slice(2, 1, &[0.125, 0.5]));
    }

    #[test]
    fn double_integrator_rejects_bad_parameters() {
        assert!(matches!(double_integrator(0.0, 2), Err(Error::InvalidParameter(_))));
        assert!(matches!(double_integrator(-1.0, 2), Err(Error::InvalidParameter(_))));
        assert!(matches!(double_integrator(1.0, 4), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn double_integrator_advances_position_by_velocity() {
        for &dt in &[0.1, 0.5, 1.0, 2.5] {
            let (a, _) = double_integrator(dt, 3).unwrap();
            let x = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.7, -0.3, 1.9]);
            let next = &a * &x;
            for k in 0..3 {
                assert_eq!(next[k], x[k] + dt * x[3 + k]);
                assert_eq!(next[3 + k], x[3 + k]);
            }
        }
    }

    #[test]
    fn reference_uniform_interpolation() {
        let r = straight_line_reference(&[0.0, 0.0], &[10.0, 0.0], 10, 1.0).unwrap();
        assert_eq!(r.len(), 11);
        for (k, x) in r.iter().enumerate() {
            assert!((x[0] - k as f64).abs() < 1e-12);
            assert_eq!(x[1], 0.0);
            assert_eq!(x[2], 1.0);
            assert_eq!(x[3], 0.0);
        }
    }

    #[test]
    fn reference_stationary_and_crossing() {
        let r = straight_line_reference(&[3.0, 4.0], &[3.0, 4.0], 5, 0.2).unwrap();
        assert!(r.iter().all(|x| x[0] == 3.0 && x[1] == 4.0 && x[2] == 0.0 && x[3] == 0.0));

        let r = straight_line_reference(&[-8.0, 0.0], &[8.0, 0.0], 20, 1.0).unwrap();
        assert!(r.iter().all(|x| (x[2] - 0.8).abs() < 1e-15 && x[3] == 0.0));
        assert_eq!(r[20][0], 8.0);
    }

    #[test]
    fn circle_two_agents_antipodal() {
        let s = circle_scenario(2, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
        let a0 = &s.agents[0];
        let a1 = &s.agents[1];
        assert_eq!(a0.x_init[0], 8.0);
        assert!(a0.x_init[1].abs() < 1e-12);
        assert_eq!(a1.x_init[0], -8.0);
        assert!(a1.x_init[1].abs() < 1e-12);
        assert!((a0.x_ref[20][0] + 8.0).abs() < 1e-12);
        assert!((a1.x_ref[20][0] - 8.0).abs() < 1e-12);
        // references cross at the origin at mid-horizon
        assert!(a0.x_ref[10].rows(0, 2).norm() < 1e-12);
        assert!(a1.x_ref[10].rows(0, 2).norm() < 1e-12);
    }

    #[test]
    fn circle_four_agents_quarter_turns() {
        let s = circle_scenario(4, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
        let expect = [(8.0, 0.0), (0.0, 8.0), (-8.0, 0.0), (0.0, -8.0)];
        for (agent, (x, y)) in s.agents.iter().zip(expect) {
            assert!((agent.x_init[0] - x).abs() < 1e-12);
            assert!((agent.x_init[1] - y).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_references_pass_through_central_disc() {
        for n in 2..=14 {
            let s = circle_scenario(n, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
            for agent in &s.agents {
                let closest = agent
                    .x_ref
                    .iter()
                    .map(|x| x.rows(0, 2).norm())
                    .fold(f64::INFINITY, f64::min);
                assert!(closest < s.d_safe);
            }
        }
    }

    #[test]
    fn circle_rejects_small_radius() {
        let err = circle_scenario(3, 2.0, 20, 1.0, 2.0, Weights::default()).unwrap_err();
        assert!(matches!(err, Error::InfeasibleScenario(_)));
    }

    #[test]
    fn dimensions_match_table() {
        let cases = [
            (1, 124, 80, 0),
            (2, 248, 160, 20),
            (4, 496, 320, 120),
            (6, 744, 480, 300),
            (10, 1240, 800, 900),
            (14, 1736, 1120, 1820),
        ];
        for (n, vars, dyn_rows, pairs) in cases {
            let s = circle_scenario(n, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
            let d = problem_dimensions(&s);
            assert_eq!(
                (d.num_variables, d.num_dynamics_constraints, d.num_collision_pair_times),
                (vars, dyn_rows, pairs),
                "N = {n}"
            );
        }
    }

    #[test]
    fn dimensions_scale_linearly_and_quadratically() {
        for n in 2..=14usize {
            let s = circle_scenario(n, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
            let d = problem_dimensions(&s);
            assert_eq!(d.num_variables, 124 * n);
            assert_eq!(d.num_dynamics_constraints, 80 * n);
            assert_eq!(d.num_collision_pair_times, n * (n - 1) / 2 * 20);
        }
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let s = circle_scenario(3, 8.0, 20, 0.7, 2.0, Weights::default()).unwrap();
        let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn infinite_bounds_survive_the_file_format() {
        let mut s = circle_scenario(2, 8.0, 4, 1.0, 2.0, Weights::default()).unwrap();
        s.agents[0].u_ub[0] = f64::INFINITY;
        s.agents[0].u_lb[1] = f64::NEG_INFINITY;
        let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
        assert!(back.agents[0].u_ub[0] >= INFINITE_BOUND);
        assert!(back.agents[0].u_lb[1] <= -INFINITE_BOUND);
    }

    #[test]
    fn validation_catches_bad_models() {
        let s = circle_scenario(2, 8.0, 5, 1.0, 2.0, Weights::default()).unwrap();

        let mut bad = s.agents.clone();
        bad[1].r = DMatrix::zeros(2, 2);
        assert!(Scenario::new(bad, 5, 1.0, 2.0).is_err());

        let mut bad = s.agents.clone();
        bad[0].x_init[2] = 100.0;
        assert!(matches!(
            Scenario::new(bad, 5, 1.0, 2.0),
            Err(Error::InfeasibleScenario(_))
        ));

        let mut bad = s.agents.clone();
        bad[0].x_ref.pop();
        assert!(matches!(Scenario::new(bad, 5, 1.0, 2.0), Err(Error::Dimension(_))));

        assert!(Scenario::new(s.agents.clone(), 5, 1.0, 0.0).is_err());
        assert!(Scenario::new(Vec::new(), 5, 1.0, 2.0).is_err());
    }
}
