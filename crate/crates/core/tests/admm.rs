use consensus_mpc::admm::local::unstack_primal;
use consensus_mpc::admm::{consensus_update, init_state, local_qp, run_observed, ConsensusRule, ConsensusState};
use consensus_mpc::oracle::{kkt_violation, min_separation};
use consensus_mpc::{circle_scenario, run, Mode, QpSettings, SolverConfig, SolverHandle, Weights};
use nalgebra::DVector;
use proptest::prelude::*;

fn config(mode: Mode) -> SolverConfig {
    SolverConfig {
        mode,
        threads: 1,
        ..SolverConfig::default()
    }
}

#[test]
fn two_agent_swap_converges_with_separation() {
    let s = circle_scenario(2, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
    let r = run(&s, &config(Mode::Turbo)).unwrap();
    assert!(r.converged);
    let (rp, rd) = r.final_residuals();
    assert!(rp <= 1e-4 && rd <= 1e-4);
    let trajectories: Vec<Vec<DVector<f64>>> = r.trajectories.iter().map(|t| t.state_vectors()).collect();
    let recomputed = min_separation(&trajectories, 2);
    assert_eq!(Some(recomputed), r.min_separation);
    assert!(recomputed >= 1.999);
    for (t, a) in r.trajectories.iter().zip(&s.agents) {
        assert_eq!(t.states.len(), 21);
        assert_eq!(t.inputs.len(), 20);
        for (x, u) in t.state_vectors().windows(2).zip(&t.inputs) {
            let next = &a.a * &x[0] + &a.b * DVector::from_column_slice(u);
            assert!((next - &x[1]).amax() < 1e-8);
        }
    }
}

#[test]
fn consensus_iterates_do_not_depend_on_the_mode() {
    let s = circle_scenario(4, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
    let trace = |mode: Mode| {
        let mut states: Vec<ConsensusState> = Vec::new();
        let cfg = SolverConfig {
            max_admm_iters: 10,
            ..config(mode)
        };
        run_observed(&s, &cfg, |_, st| states.push(st.clone())).unwrap();
        states
    };
    let base = trace(Mode::Base);
    for mode in [Mode::Hotstart, Mode::Turbo] {
        let other = trace(mode);
        assert_eq!(other.len(), base.len());
        for (a, b) in base.iter().zip(&other) {
            let dz = a.z_flat().iter().zip(b.z_flat()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            let dl = a.lambda_flat().iter().zip(b.lambda_flat()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(dz <= 1e-6 && dl <= 1e-6, "{mode}: dz {dz:e} dlambda {dl:e}");
        }
    }
}

#[test]
fn warm_modes_spend_fewer_qp_iterations() {
    let s = circle_scenario(2, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
    let count = |mode| run(&s, &config(mode)).unwrap().total_qp_iterations;
    let (base, hot, turbo) = (count(Mode::Base), count(Mode::Hotstart), count(Mode::Turbo));
    assert!(hot < base);
    assert!(turbo <= hot);
}

#[test]
fn single_agent_solves_its_own_qp() {
    let s = circle_scenario(1, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
    let r = run(&s, &config(Mode::Turbo)).unwrap();
    assert!(r.converged);
    assert_eq!(r.min_separation, None);

    let qp = local_qp(&s, &init_state(&s, &SolverConfig::default()), 0).unwrap();
    let sol = SolverHandle::create(qp.clone(), QpSettings::default())
        .unwrap()
        .solve_cold()
        .unwrap();
    assert!(kkt_violation(&qp, &sol).max() <= 1e-8);
    let (xs, _) = unstack_primal(&s.agents[0], 20, &sol.x);
    let reached = s.agents[0].position(&xs[20]) - s.agents[0].position(&s.agents[0].x_ref[20]);
    assert!((reached.norm() - r.tracking_errors[0]).abs() < 1e-8);
    for (a, b) in xs.iter().zip(r.trajectories[0].state_vectors()) {
        assert!((a - b).amax() < 1e-8);
    }
}

#[test]
fn initial_targets_are_separated_reference_positions() {
    let s = circle_scenario(2, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
    let state = init_state(&s, &SolverConfig::default());
    assert_eq!(state.times(), 1..=20);
    assert!(state.lambda_flat().iter().all(|&v| v == 0.0));
    // At t = 0 the agents sit at (8, 0) and (-8, 0); at t = 10 both references
    // pass the origin and the targets split along the first axis.
    assert_eq!(state.z(0, 1, 1), s.agents[0].position(&s.agents[0].x_ref[1]).as_slice());
    let (zi, zj) = (state.z(0, 1, 10), state.z(1, 0, 10));
    let gap = ((zi[0] - zj[0]).powi(2) + (zi[1] - zj[1]).powi(2)).sqrt();
    assert!((gap - 2.0).abs() < 1e-12);
}

#[test]
fn threads_do_not_change_the_result() {
    let s = circle_scenario(4, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
    let cfg = SolverConfig {
        max_admm_iters: 30,
        ..config(Mode::Turbo)
    };
    let a = run(&s, &cfg).unwrap();
    let b = run(&s, &SolverConfig { threads: 4, ..cfg }).unwrap();
    assert_eq!(a.trajectories, b.trajectories);
    assert_eq!(a.total_qp_iterations, b.total_qp_iterations);
}

#[test]
fn invalid_configuration_is_rejected() {
    let s = circle_scenario(2, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
    let cfg = SolverConfig {
        rho: -1.0,
        ..SolverConfig::default()
    };
    assert!(run(&s, &cfg).is_err());
}

fn positions(points: &[(f64, f64)]) -> Vec<Vec<DVector<f64>>> {
    points
        .iter()
        .map(|&(x, y)| vec![DVector::from_vec(vec![x, y]); 2])
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pairwise_targets_are_always_separated(
        pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 2..5),
        duals in prop::collection::vec(-5.0f64..5.0, 64),
        d_safe in 0.5f64..3.0,
    ) {
        let n = pts.len();
        let mut state = ConsensusState::zeros(n, 2, 1..=1, 10.0);
        let mut k = 0;
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                state.set_lambda(i, j, 1, &[duals[k % 64], duals[(k + 1) % 64]]);
                k += 2;
            }
        }
        consensus_update(&mut state, &positions(&pts), d_safe, ConsensusRule::Pairwise);
        for (i, j) in state.pairs() {
            let (zi, zj) = (state.z(i, j, 1), state.z(j, i, 1));
            let gap = ((zi[0] - zj[0]).powi(2) + (zi[1] - zj[1]).powi(2)).sqrt();
            prop_assert!(gap >= d_safe - 1e-9);
        }
    }

    #[test]
    fn separated_points_are_left_alone(x in 2.0f64..10.0, y in -10.0f64..10.0) {
        let mut state = ConsensusState::zeros(2, 2, 1..=1, 10.0);
        consensus_update(&mut state, &positions(&[(x, y), (-x, y)]), 2.0, ConsensusRule::Pairwise);
        prop_assert_eq!(state.z(0, 1, 1), &[x, y][..]);
        prop_assert_eq!(state.z(1, 0, 1), &[-x, y][..]);
    }
}
