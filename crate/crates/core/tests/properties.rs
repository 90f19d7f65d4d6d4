//! Cross-module properties: planners against the verifier, branch and bound
//! against enumeration, and the polygon rows against the membership oracle.

use nalgebra::Vector3;
use proptest::prelude::*;

use swarmplan::dca::{initialize_trajectory, plan_dca, separation, DcaConfig, InitPolicy, PlanStatus};
use swarmplan::micp::{
    branch_and_bound, build_cubic_micp, cap_angle, enumerate_exhaustive, poly_lorentz2_rows, poly_membership,
    BnbSettings, BnbStatus,
};
use swarmplan::program::{
    add_slack_columns, build_base_problem, collision_row_from_positions, ConeBound, ConicProgram, VarRole,
};
use swarmplan::scenario::{generate_benchmark, BenchmarkBase, BenchmarkPattern, Scenario, VehicleSpec};
use swarmplan::solver::{solve, SolveStatus, SolverSettings};
use swarmplan::verify::{check_feasibility, evaluate_objective, min_pairwise_distance};

fn vehicle(start: Vector3<f64>, goal: Vector3<f64>, limit: f64) -> VehicleSpec {
    VehicleSpec {
        mass: 1.0,
        start_position: start,
        start_velocity: Vector3::zeros(),
        goal_position: goal,
        goal_velocity: Vector3::zeros(),
        goal_force: Vector3::zeros(),
        v_max: limit,
        f_max: limit,
    }
}

fn scenario(vehicles: Vec<VehicleSpec>, horizon: usize) -> Scenario {
    Scenario {
        vehicles,
        horizon,
        dt: 1.0,
        safety_distance: 5.0,
        force_weight: 1.0,
        goal_weight_slope: 0.05,
        arena_bounds: None,
        dca: None,
    }
}

fn head_on(horizon: usize) -> Scenario {
    let a = Vector3::new(-6.0, 0.0, 0.0);
    scenario(vec![vehicle(a, -a, 10.0), vehicle(-a, a, 10.0)], horizon)
}

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-range..range).prop_map(Vector3::from)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn linearization_never_overestimates(ai in vec3(20.0), aj in vec3(20.0), xi in vec3(20.0), xj in vec3(20.0)) {
        prop_assume!((ai - aj).norm() > 1e-6);
        let s = head_on(2);
        let (mut prog, mut map) = build_base_problem(&s);
        add_slack_columns(&mut prog, &mut map, 1.0).unwrap();
        let row = collision_row_from_positions(&map, ai, aj, 5.0, 0, 1, 1).unwrap();
        let mut x = vec![0.0; prog.num_vars];
        for a in 0..3 {
            x[map.position(0, 1, a)] = xi[a];
            x[map.position(1, 1, a)] = xj[a];
        }
        let lin = 5.0 + row.rhs - row.eval(&x);
        prop_assert!(lin <= (xi - xj).norm() + 1e-9);
        // Tight at the anchor itself.
        for a in 0..3 {
            x[map.position(0, 1, a)] = ai[a];
            x[map.position(1, 1, a)] = aj[a];
        }
        let at_anchor = 5.0 + row.rhs - row.eval(&x);
        prop_assert!((at_anchor - (ai - aj).norm()).abs() <= 1e-9 * (ai - aj).norm().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn polygon_rows_match_membership(r in 0.0..1.5f64, angle in 0.0..std::f64::consts::TAU, level in 1usize..5) {
        let d = 2.0;
        let (x, y) = (r * d * angle.cos(), r * d * angle.sin());
        // Stay clear of the boundary, where the solver and the oracle may
        // legitimately round differently.
        let near = |s: f64| (poly_membership(x * s, y * s, d, level)) != poly_membership(x, y, d, level);
        prop_assume!(!near(1.0 + 1e-4) && !near(1.0 - 1e-4));
        let mut prog = ConicProgram::new(2);
        prog.add_eq(vec![(0, 1.0)], x);
        prog.add_eq(vec![(1, 1.0)], y);
        poly_lorentz2_rows(&mut prog, level, 0, 1, ConeBound::Const(d)).unwrap();
        let sol = solve(&prog, &SolverSettings::default()).unwrap();
        let feasible = sol.status == SolveStatus::Optimal;
        prop_assert!(feasible || sol.status == SolveStatus::Infeasible);
        prop_assert_eq!(feasible, poly_membership(x, y, d, level));
    }

    #[test]
    fn branch_and_bound_matches_enumeration(dy in -2.5..2.5f64, dz in -2.0..2.0f64, horizon in 3usize..5) {
        // Every draw is reachable: |b - a| < 12 = f_max, one force step at K = 3.
        let a = Vector3::new(-5.0, dy, dz);
        let b = Vector3::new(5.0, -dy, 0.0);
        let s = scenario(vec![vehicle(a, b, 12.0), vehicle(b, a, 12.0)], horizon);
        let micp = build_cubic_micp(&s).unwrap();
        let bnb = branch_and_bound(&micp, &BnbSettings::default()).unwrap();
        let oracle = enumerate_exhaustive(&micp, &SolverSettings::default()).unwrap();
        prop_assert_eq!(bnb.status, BnbStatus::Optimal);
        prop_assert!((bnb.objective - oracle.objective).abs() <= 1e-6 * oracle.objective.abs().max(1.0));
        // The incumbent is feasible for the original problem and no better
        // than the root relaxation.
        prop_assert!(bnb.objective >= bnb.root_bound - 1e-6);
        let traj = bnb.trajectory.unwrap();
        prop_assert!(check_feasibility(&s, &traj, 1e-4).unwrap().feasible);
    }
}

#[test]
fn converged_random_box_runs_satisfy_true_separation() {
    let base = BenchmarkBase {
        horizon: 15,
        ..BenchmarkBase::default()
    };
    for seed in 0..4 {
        let s = generate_benchmark(4, BenchmarkPattern::RandomBox, seed, &base).unwrap();
        let cfg = DcaConfig::default();
        let r = plan_dca(&s, &cfg).unwrap();
        assert_eq!(r.status, PlanStatus::ConvergedFeasible, "seed {seed}");
        assert!(r.log.iter().all(|rec| rec.subproblem_status == SolveStatus::Optimal));
        let taus: Vec<f64> = r.log.iter().map(|rec| rec.tau).collect();
        assert!(taus.windows(2).all(|w| w[0] <= w[1]) && *taus.last().unwrap() == cfg.tau_max);
        for (i, j) in s.pairs() {
            for k in 0..s.horizon {
                assert!(separation(&r.trajectory, i, j, k) >= s.safety_distance - 10.0 * cfg.slack_tol);
            }
        }
    }
}

#[test]
fn head_on_solution_is_symmetric() {
    let s = head_on(12);
    let r = plan_dca(&s, &DcaConfig::default()).unwrap();
    assert_eq!(r.status, PlanStatus::ConvergedFeasible);
    assert!(r.min_separation >= 5.0 - 1e-4);
    // Swapping the labels and reflecting through the crossing point maps
    // the instance onto itself.
    let mirrored = r.trajectory.point_reflected();
    for k in 0..s.horizon {
        assert!((mirrored.position(1, k) - r.trajectory.position(0, k)).norm() <= 1e-4);
        assert!((mirrored.position(0, k) - r.trajectory.position(1, k)).norm() <= 1e-4);
    }
}

#[test]
fn straight_line_head_on_hits_the_degenerate_fallback() {
    let s = head_on(13);
    let t = initialize_trajectory(&s, InitPolicy::StraightLine);
    assert_eq!(separation(&t, 0, 1, 6), 0.0);
    let cfg = DcaConfig {
        init_policy: InitPolicy::StraightLine,
        ..DcaConfig::default()
    };
    let r = plan_dca(&s, &cfg).unwrap();
    assert_eq!(r.status, PlanStatus::ConvergedFeasible);
    assert!(min_pairwise_distance(&r.trajectory).unwrap().distance >= 5.0 - 1e-4);
}

#[test]
fn verifier_agrees_with_solver_cones_and_objective() {
    let base = BenchmarkBase {
        horizon: 10,
        ..BenchmarkBase::default()
    };
    let s = generate_benchmark(3, BenchmarkPattern::RandomBox, 11, &base).unwrap();
    let (prog, map) = build_base_problem(&s);
    let sol = solve(&prog, &SolverSettings::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    let traj = map.decode(&sol.primal);

    let report = check_feasibility(&s, &traj, 1e-4).unwrap();
    let mut velocity_margin = f64::INFINITY;
    let mut force_margin = f64::INFINITY;
    for cone in &prog.cones {
        if let ConeBound::Const(limit) = cone.bound {
            let margin = limit - cone.norm(&sol.primal);
            if matches!(map.role(cone.vector[0]), Some(VarRole::Velocity { .. })) {
                velocity_margin = velocity_margin.min(margin);
            } else {
                force_margin = force_margin.min(margin);
            }
        }
    }
    assert!((report.velocity_margin - velocity_margin).abs() <= 1e-9);
    assert!((report.force_margin - force_margin).abs() <= 1e-9);

    let cost = evaluate_objective(&s, &traj).unwrap();
    assert!((cost.combined - sol.objective).abs() <= 1e-6 * sol.objective.abs().max(1.0));
}

#[test]
fn far_apart_corridors_make_binaries_irrelevant() {
    let s = scenario(
        vec![
            vehicle(Vector3::new(0.0, 0.0, 0.0), Vector3::new(8.0, 0.0, 0.0), 10.0),
            vehicle(Vector3::new(0.0, 15.0, 0.0), Vector3::new(8.0, 15.0, 0.0), 10.0),
        ],
        6,
    );
    let micp = build_cubic_micp(&s).unwrap();
    let bnb = branch_and_bound(&micp, &BnbSettings::default()).unwrap();
    let free = solve(&micp.base, &SolverSettings::default()).unwrap();
    assert_eq!(bnb.status, BnbStatus::Optimal);
    assert!((bnb.objective - free.objective).abs() <= 1e-6);
}

#[test]
fn polygon_vertex_radius_is_reachable_through_the_rows() {
    // Maximizing x over the level-L polygon reaches the vertex d / cos(cap).
    let d = 1.0;
    for level in 1..=4 {
        let mut prog = ConicProgram::new(2);
        prog.objective[0] = -1.0;
        prog.add_eq(vec![(1, 1.0)], 0.0);
        poly_lorentz2_rows(&mut prog, level, 0, 1, ConeBound::Const(d)).unwrap();
        let sol = solve(&prog, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((-sol.objective - d / cap_angle(level).cos()).abs() <= 1e-6);
    }
}
