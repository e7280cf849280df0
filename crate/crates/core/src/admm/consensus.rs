//! Consensus targets and scaled duals per ordered agent pair and timestep,
//! and the coordinator's closed-form updates.

use std::ops::RangeInclusive;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Timesteps that carry consensus terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusWindow {
    /// `t = 1..=T`; `x_0` is pinned by the initial condition.
    #[default]
    FromOne,
    /// `t = 0..=T`.
    FromZero,
}

impl ConsensusWindow {
    pub fn first(self) -> usize {
        match self {
            ConsensusWindow::FromOne => 1,
            ConsensusWindow::FromZero => 0,
        }
    }
}

/// How the coordinator computes new targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusRule {
    /// Joint projection of the two agents' targets onto `|z_ij - z_ji| >= d_safe`.
    #[default]
    Pairwise,
    /// Projection of the averaged point onto `|z| >= d_safe`. This does not
    /// separate the two targets from each other; kept for comparison only.
    Literal,
}

/// `z` and `lambda` over all ordered pairs `(i, j)`, `i != j`, and all window
/// times, each entry a `d_p` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    n_agents: usize,
    d_p: usize,
    t_first: usize,
    t_last: usize,
    pub rho: f64,
    z: Vec<f64>,
    lambda: Vec<f64>,
}

impl ConsensusState {
    pub fn zeros(n_agents: usize, d_p: usize, times: RangeInclusive<usize>, rho: f64) -> Self {
        let (t_first, t_last) = (*times.start(), *times.end());
        let n_t = t_last + 1 - t_first;
        let len = n_agents * n_agents.saturating_sub(1) * n_t * d_p;
        ConsensusState {
            n_agents,
            d_p,
            t_first,
            t_last,
            rho,
            z: vec![0.0; len],
            lambda: vec![0.0; len],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn d_p(&self) -> usize {
        self.d_p
    }

    pub fn times(&self) -> RangeInclusive<usize> {
        self.t_first..=self.t_last
    }

    /// Number of `(i, j, t)` entries.
    pub fn len(&self) -> usize {
        self.z.len() / self.d_p.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    fn offset(&self, i: usize, j: usize, t: usize) -> usize {
        debug_assert!(i != j && i < self.n_agents && j < self.n_agents);
        debug_assert!(self.times().contains(&t));
        let pair = i * (self.n_agents - 1) + if j < i { j } else { j - 1 };
        let n_t = self.t_last + 1 - self.t_first;
        (pair * n_t + (t - self.t_first)) * self.d_p
    }

    pub fn z(&self, i: usize, j: usize, t: usize) -> &[f64] {
        let o = self.offset(i, j, t);
        &self.z[o..o + self.d_p]
    }

    pub fn lambda(&self, i: usize, j: usize, t: usize) -> &[f64] {
        let o = self.offset(i, j, t);
        &self.lambda[o..o + self.d_p]
    }

    pub fn set_z(&mut self, i: usize, j: usize, t: usize, v: &[f64]) {
        let o = self.offset(i, j, t);
        self.z[o..o + self.d_p].copy_from_slice(v);
    }

    pub fn set_lambda(&mut self, i: usize, j: usize, t: usize, v: &[f64]) {
        let o = self.offset(i, j, t);
        self.lambda[o..o + self.d_p].copy_from_slice(v);
    }

    /// Flat view of every target, for snapshots and comparisons.
    pub fn z_flat(&self) -> &[f64] {
        &self.z
    }

    pub fn lambda_flat(&self) -> &[f64] {
        &self.lambda
    }

    /// Unordered pairs `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_agents).flat_map(move |i| (i + 1..self.n_agents).map(move |j| (i, j)))
    }
}

/// Moves two points symmetrically apart along their connecting line until
/// they are exactly `d_safe` apart; points already far enough apart are
/// returned unchanged. Coincident points separate along the first axis, with
/// the first point on the negative side.
pub fn consensus_project(zi: &[f64], zj: &[f64], d_safe: f64) -> (Vec<f64>, Vec<f64>) {
    let diff: Vec<f64> = zi.iter().zip(zj).map(|(a, b)| a - b).collect();
    let gap = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    if gap >= d_safe {
        return (zi.to_vec(), zj.to_vec());
    }
    let dir: Vec<f64> = if gap > 0.0 {
        diff.iter().map(|v| v / gap).collect()
    } else {
        let mut e = vec![0.0; zi.len()];
        e[0] = -1.0;
        e
    };
    let half = 0.5 * d_safe;
    let mid: Vec<f64> = zi.iter().zip(zj).map(|(a, b)| 0.5 * (a + b)).collect();
    let new_i = mid.iter().zip(&dir).map(|(m, u)| m + half * u).collect();
    let new_j = mid.iter().zip(&dir).map(|(m, u)| m - half * u).collect();
    (new_i, new_j)
}

/// Projects a point onto the complement of the open ball `|z| < d_safe`.
fn project_outside_ball(p: &[f64], d_safe: f64) -> Vec<f64> {
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm >= d_safe {
        p.to_vec()
    } else if norm > 0.0 {
        p.iter().map(|v| v * d_safe / norm).collect()
    } else {
        let mut e = vec![0.0; p.len()];
        e[0] = d_safe;
        e
    }
}

/// Agent positions `positions[i][t]` for `t = 0..=T`.
pub type Positions = [Vec<DVector<f64>>];

/// Recomputes every target from current positions and duals.
pub fn consensus_update(state: &mut ConsensusState, positions: &Positions, d_safe: f64, rule: ConsensusRule) {
    let rho = state.rho;
    let pairs: Vec<(usize, usize)> = state.pairs().collect();
    for t in state.times() {
        for &(i, j) in &pairs {
            let (pi, pj) = (&positions[i][t], &positions[j][t]);
            let (li, lj) = (state.lambda(i, j, t).to_vec(), state.lambda(j, i, t).to_vec());
            let (zi, zj) = match rule {
                ConsensusRule::Pairwise => {
                    let hat_i: Vec<f64> = pi.iter().zip(&li).map(|(p, l)| p + l / rho).collect();
                    let hat_j: Vec<f64> = pj.iter().zip(&lj).map(|(p, l)| p + l / rho).collect();
                    consensus_project(&hat_i, &hat_j, d_safe)
                }
                ConsensusRule::Literal => {
                    let avg = |a: &[f64], b: &[f64]| -> Vec<f64> {
                        (0..a.len())
                            .map(|k| 0.5 * (pi[k] + pj[k]) + (a[k] - b[k]) / (2.0 * rho))
                            .collect()
                    };
                    (
                        project_outside_ball(&avg(&li, &lj), d_safe),
                        project_outside_ball(&avg(&lj, &li), d_safe),
                    )
                }
            };
            state.set_z(i, j, t, &zi);
            state.set_z(j, i, t, &zj);
        }
    }
}

/// `lambda_ij,t += rho (C_i x_i,t - z_ij,t)` for every ordered pair.
pub fn dual_update(state: &mut ConsensusState, positions: &Positions) {
    let n = state.n_agents;
    let rho = state.rho;
    for t in state.times() {
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let o = state.offset(i, j, t);
                for k in 0..state.d_p {
                    state.lambda[o + k] += rho * (positions[i][t][k] - state.z[o + k]);
                }
            }
        }
    }
}

/// `(max |C_i x_i,t - z_ij,t|_inf, rho * max |z_ij,t - z_prev_ij,t|_inf)`.
pub fn residuals(z_prev: &ConsensusState, state: &ConsensusState, positions: &Positions) -> (f64, f64) {
    let n = state.n_agents;
    let mut primal = 0.0f64;
    for t in state.times() {
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                for (p, z) in positions[i][t].iter().zip(state.z(i, j, t)) {
                    primal = primal.max((p - z).abs());
                }
            }
        }
    }
    let dual = state
        .z
        .iter()
        .zip(&z_prev.z)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    (primal, state.rho * dual)
}
