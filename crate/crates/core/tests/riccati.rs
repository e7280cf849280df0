mod common;

use consensus_mpc::admm::{init_state, local::assemble_qp, local::stack_duals, local::stack_primal, local_stage_costs};
use consensus_mpc::oracle::kkt_equality_solve;
use consensus_mpc::riccati::{affine_lqr, bounded_lqr, build_stage_costs};
use consensus_mpc::{circle_scenario, SolverConfig, Weights};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lqr_matches_the_equality_constrained_kkt_solve(seed in any::<u64>(), rho in 0.0f64..30.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let horizon = 6;
        let agent = common::random_agent(&mut rng, horizon);
        let terms = common::random_terms(&mut rng, horizon, agent.d_p(), rho);
        let stages = build_stage_costs(&agent, &terms, rho).unwrap();
        let sol = affine_lqr(&agent, &stages).unwrap();
        let qp = assemble_qp(&agent, &stages);
        let (x, nu) = kkt_equality_solve(&qp.h, &qp.g, &qp.a_eq, &qp.b_eq).unwrap();
        let scale = 1.0 + x.amax();
        prop_assert!((stack_primal(&sol.x_warm, &sol.u_warm) - &x).amax() <= 1e-8 * scale);
        prop_assert!((stack_duals(&sol.nu) - &nu).amax() <= 1e-7 * (1.0 + nu.amax()));
    }

    #[test]
    fn bounded_rollout_without_bounds_is_the_lqr_rollout(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let horizon = 5;
        let agent = common::random_agent(&mut rng, horizon);
        let terms = common::random_terms(&mut rng, horizon, agent.d_p(), 10.0);
        let stages = build_stage_costs(&agent, &terms, 10.0).unwrap();
        let free = affine_lqr(&agent, &stages).unwrap();
        let bounded = bounded_lqr(&agent, &stages).unwrap();
        for (a, b) in free.x_warm.iter().zip(&bounded.x_warm) {
            prop_assert!((a - b).amax() <= 1e-8 * (1.0 + a.amax()));
        }
    }

    #[test]
    fn bounded_rollout_respects_input_boxes(seed in any::<u64>(), limit in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let horizon = 5;
        let mut agent = common::random_agent(&mut rng, horizon);
        agent.u_lb = DVector::from_element(agent.n_u(), -limit);
        agent.u_ub = DVector::from_element(agent.n_u(), limit);
        let terms = common::random_terms(&mut rng, horizon, agent.d_p(), 5.0);
        let stages = build_stage_costs(&agent, &terms, 5.0).unwrap();
        let sol = bounded_lqr(&agent, &stages).unwrap();
        prop_assert_eq!(&sol.x_warm[0], &agent.x_init);
        for t in 0..horizon {
            prop_assert!(sol.u_warm[t].amax() <= limit + 1e-9);
            let next = &agent.a * &sol.x_warm[t] + &agent.b * &sol.u_warm[t];
            prop_assert!((next - &sol.x_warm[t + 1]).amax() <= 1e-9 * (1.0 + sol.x_warm[t + 1].amax()));
        }
    }
}

#[test]
fn bounded_rollout_keeps_circle_agents_inside_their_boxes() {
    let cfg = SolverConfig::default();
    for n in [2, 4, 6] {
        let s = circle_scenario(n, 8.0, 20, 1.0, 2.0, Weights::default()).unwrap();
        let state = init_state(&s, &cfg);
        for i in 0..n {
            let agent = &s.agents[i];
            let sol = bounded_lqr(agent, &local_stage_costs(&s, &state, i).unwrap()).unwrap();
            for x in &sol.x_warm {
                for k in 0..agent.n_x() {
                    assert!(x[k] >= agent.x_lb[k] - 1e-9 && x[k] <= agent.x_ub[k] + 1e-9);
                }
            }
            for u in &sol.u_warm {
                for k in 0..agent.n_u() {
                    assert!(u[k] >= agent.u_lb[k] - 1e-9 && u[k] <= agent.u_ub[k] + 1e-9);
                }
            }
        }
    }
}
