//! Run records, trajectory CSV export, and the mode-by-size ablation grid.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::admm::{self, Mode, SolveReport, SolverConfig, Trajectory};
use crate::error::{Error, Result};
use crate::model::{circle_scenario, Scenario, Weights};

/// `major.minor`; readers accept any minor of their own major.
pub const RECORD_SCHEMA_VERSION: &str = "1.0";
const RECORD_SCHEMA_MAJOR: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDescriptor {
    pub n_agents: usize,
    pub horizon: usize,
    pub dt: f64,
    pub d_safe: f64,
    pub seed: Option<u64>,
    /// Where the scenario was read from, if anywhere.
    pub source: Option<String>,
}

impl ScenarioDescriptor {
    pub fn of(s: &Scenario) -> Self {
        ScenarioDescriptor {
            n_agents: s.n_agents(),
            horizon: s.horizon,
            dt: s.dt,
            d_safe: s.d_safe,
            seed: None,
            source: None,
        }
    }
}

/// Totals over all iterations. `qp_ms` and `warm_start_ms` add up per-agent
/// times, so they can exceed the wall time when agents run in parallel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PhaseTiming {
    pub warm_start_ms: f64,
    pub qp_ms: f64,
    pub local_wall_ms: f64,
    pub consensus_ms: f64,
}

impl PhaseTiming {
    pub fn of(report: &SolveReport) -> Self {
        let mut t = PhaseTiming::default();
        for r in &report.iterations {
            t.warm_start_ms += r.warm_start_ms.iter().sum::<f64>();
            t.qp_ms += r.qp_ms.iter().sum::<f64>();
            t.local_wall_ms += r.local_ms;
            t.consensus_ms += r.consensus_ms;
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: String,
    pub scenario: ScenarioDescriptor,
    pub mode: Mode,
    pub config: SolverConfig,
    pub wall_ms: f64,
    pub timing: PhaseTiming,
    pub report: SolveReport,
}

impl RunRecord {
    pub fn new(scenario: ScenarioDescriptor, report: SolveReport) -> Self {
        RunRecord {
            schema_version: RECORD_SCHEMA_VERSION.to_string(),
            scenario,
            mode: report.config.mode,
            config: report.config,
            wall_ms: report.wall_ms,
            timing: PhaseTiming::of(&report),
            report,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: String,
        }
        let v: Version = serde_json::from_str(text)?;
        check_schema(&v.schema_version)?;
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn check_schema(version: &str) -> Result<()> {
    let major = version
        .split('.')
        .next()
        .and_then(|m| m.parse::<u32>().ok())
        .ok_or_else(|| Error::Schema(format!("malformed schema version {version:?}")))?;
    if major != RECORD_SCHEMA_MAJOR {
        return Err(Error::Schema(format!(
            "unsupported record schema {version} (this build reads {RECORD_SCHEMA_MAJOR}.x)"
        )));
    }
    Ok(())
}

fn column_names(n_x: usize, n_u: usize) -> Vec<String> {
    let mut cols: Vec<String> = if n_x == 4 {
        ["x", "y", "vx", "vy"].iter().map(|s| s.to_string()).collect()
    } else {
        (1..=n_x).map(|k| format!("x{k}")).collect()
    };
    cols.extend((1..=n_u).map(|k| format!("u{k}")));
    cols
}

/// One row per agent and timestep: `agent,t,<states>,<inputs>`. Inputs are
/// empty on the final row of each agent. Numbers use the shortest
/// representation that parses back to the same `f64`.
pub fn trajectory_csv(trajectories: &[Trajectory]) -> String {
    let n_x = trajectories.first().and_then(|t| t.states.first()).map_or(0, Vec::len);
    let n_u = trajectories.first().and_then(|t| t.inputs.first()).map_or(0, Vec::len);
    let mut out = String::from("agent,t");
    for c in column_names(n_x, n_u) {
        out.push(',');
        out.push_str(&c);
    }
    out.push('\n');
    for (i, tr) in trajectories.iter().enumerate() {
        for (t, x) in tr.states.iter().enumerate() {
            let _ = write!(out, "{i},{t}");
            for v in x {
                let _ = write!(out, ",{v}");
            }
            match tr.inputs.get(t) {
                Some(u) => u.iter().for_each(|v| {
                    let _ = write!(out, ",{v}");
                }),
                None => (0..n_u).for_each(|_| out.push(',')),
            }
            out.push('\n');
        }
    }
    out
}

/// Inverse of [`trajectory_csv`].
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<Trajectory>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Schema("empty trajectory file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "agent" || cols[1] != "t" {
        return Err(Error::Schema("trajectory header must start with agent,t".into()));
    }
    let n_u = cols.iter().filter(|c| c.starts_with('u')).count();
    let n_x = cols.len() - 2 - n_u;
    let bad = |line: usize| Error::Schema(format!("malformed trajectory row {line}"));
    let mut trajectories: Vec<Trajectory> = Vec::new();
    for (ln, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(bad(ln + 2));
        }
        let agent: usize = fields[0].parse().map_err(|_| bad(ln + 2))?;
        let t: usize = fields[1].parse().map_err(|_| bad(ln + 2))?;
        if agent == trajectories.len() {
            trajectories.push(Trajectory { states: Vec::new(), inputs: Vec::new() });
        }
        let tr = trajectories.get_mut(agent).ok_or_else(|| bad(ln + 2))?;
        if t != tr.states.len() {
            return Err(bad(ln + 2));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(ln + 2));
        tr.states.push(fields[2..2 + n_x].iter().map(|s| num(s)).collect::<Result<_>>()?);
        let u = &fields[2 + n_x..];
        if u.iter().all(|s| !s.is_empty()) && n_u > 0 {
            tr.inputs.push(u.iter().map(|s| num(s)).collect::<Result<_>>()?);
        }
    }
    Ok(trajectories)
}

/// Grid definition for [`ablate`].
#[derive(Debug, Clone, PartialEq)]
pub struct AblationPlan {
    pub agents: Vec<usize>,
    pub modes: Vec<Mode>,
    /// Timed runs per cell; one extra warmup run precedes them and is discarded.
    pub repeats: usize,
    pub radius: f64,
    pub horizon: usize,
    pub dt: f64,
    pub d_safe: f64,
    pub weights: Weights,
    pub config: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub n_agents: usize,
    pub mode: Mode,
    pub admm_iters: usize,
    pub converged: bool,
    pub total_qp_iters: usize,
    pub wall_ms_mean: f64,
    pub wall_ms_std: f64,
    pub min_sep: Option<f64>,
    pub max_track_err: f64,
    /// Set when the cell failed; the numeric columns are then meaningless.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub cells: Vec<AblationCell>,
}

/// Runs every `(N, mode)` cell sequentially. Failed cells are recorded and
/// the grid continues.
pub fn ablate(plan: &AblationPlan) -> Result<AblationTable> {
    if plan.repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be at least 1".into()));
    }
    let mut cells = Vec::new();
    for &n in &plan.agents {
        let scenario = circle_scenario(n, plan.radius, plan.horizon, plan.dt, plan.d_safe, plan.weights)?;
        for &mode in &plan.modes {
            let cfg = SolverConfig { mode, ..plan.config };
            cells.push(run_cell(&scenario, &cfg, plan.repeats));
        }
    }
    Ok(AblationTable { cells })
}

fn run_cell(s: &Scenario, cfg: &SolverConfig, repeats: usize) -> AblationCell {
    let mut times = Vec::with_capacity(repeats);
    let mut last = None;
    for rep in 0..=repeats {
        match admm::run(s, cfg) {
            Ok(report) => {
                if rep > 0 {
                    times.push(report.wall_ms);
                }
                last = Some(report);
            }
            Err(e) => {
                return AblationCell {
                    n_agents: s.n_agents(),
                    mode: cfg.mode,
                    admm_iters: 0,
                    converged: false,
                    total_qp_iters: 0,
                    wall_ms_mean: f64::NAN,
                    wall_ms_std: f64::NAN,
                    min_sep: None,
                    max_track_err: f64::NAN,
                    error: Some(e.to_string()),
                }
            }
        }
    }
    let report = last.expect("at least one run");
    let (mean, std) = mean_std(&times);
    AblationCell {
        n_agents: s.n_agents(),
        mode: cfg.mode,
        admm_iters: report.admm_iterations,
        converged: report.converged,
        total_qp_iters: report.total_qp_iterations,
        wall_ms_mean: mean,
        wall_ms_std: std,
        min_sep: report.min_separation,
        max_track_err: report.tracking_errors.iter().copied().fold(0.0, f64::max),
        error: None,
    }
}

/// Mean and population standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "N,mode,admm_iters,converged,total_qp_iters,wall_ms_mean,wall_ms_std,min_sep,max_track_err\n",
        );
        for c in &self.cells {
            let min_sep = c.min_sep.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                c.n_agents,
                c.mode,
                c.admm_iters,
                c.converged,
                c.total_qp_iters,
                c.wall_ms_mean,
                c.wall_ms_std,
                min_sep,
                c.max_track_err
            );
        }
        out
    }

    pub fn cell(&self, n_agents: usize, mode: Mode) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.n_agents == n_agents && c.mode == mode)
    }

    /// Least-squares slope of `log(wall_ms_mean)` against `log(N)` over the
    /// successful cells of `mode`; `None` with fewer than two distinct sizes.
    pub fn scaling_slope(&self, mode: Mode) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .cells
            .iter()
            .filter(|c| c.mode == mode && c.error.is_none() && c.wall_ms_mean > 0.0)
            .map(|c| ((c.n_agents as f64).ln(), c.wall_ms_mean.ln()))
            .collect();
        loglog_slope(&pts)
    }
}

/// Ordinary least-squares slope through `(x, y)` points.
pub fn loglog_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_major_is_enforced() {
        assert!(check_schema("1.0").is_ok());
        assert!(check_schema("1.7").is_ok());
        assert!(matches!(check_schema("2.0"), Err(Error::Schema(_))));
        assert!(check_schema("x").is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let tr = vec![
            Trajectory {
                states: vec![vec![0.1, 1.0 / 3.0, -2e-300, 5.0], vec![1e20, -0.0, 7.25, 1.0 / 7.0]],
                inputs: vec![vec![f64::MIN_POSITIVE, -1.5]],
            },
            Trajectory {
                states: vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]],
                inputs: vec![vec![0.3, 0.7]],
            },
        ];
        let csv = trajectory_csv(&tr);
        assert!(csv.starts_with("agent,t,x,y,vx,vy,u1,u2\n"));
        assert_eq!(csv.lines().count(), 5);
        let back = parse_trajectory_csv(&csv).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in tr.iter().zip(&back) {
            for (x, y) in a.states.iter().flatten().zip(b.states.iter().flatten()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            assert_eq!(a.inputs, b.inputs);
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = [2.0f64, 4.0, 6.0, 10.0]
            .iter()
            .map(|n| (n.ln(), (3.0 * n.powf(1.2)).ln()))
            .collect();
        assert!((loglog_slope(&pts).unwrap() - 1.2).abs() < 1e-12);
        assert!(loglog_slope(&pts[..1]).is_none());
    }

    #[test]
    fn single_repeat_has_zero_std() {
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 1.0));
    }
}
