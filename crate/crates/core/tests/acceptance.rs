//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swarmplan::dca::{plan_dca, DcaConfig, PlanResult, PlanStatus};
use swarmplan::micp::{
    best_face, branch_and_bound, build_cubic_micp, cap_angle, enumerate_exhaustive, face, poly_membership, BnbSettings,
    BnbStatus,
};
use swarmplan::program::{build_base_problem, collision_row_from_positions, add_slack_columns, ConeBound, ConicProgram, SocConstraint};
use swarmplan::scenario::{generate_benchmark, BenchmarkBase, BenchmarkPattern, Scenario, VehicleSpec};
use swarmplan::solver::{solve, SolveStatus, SolverSettings};
use swarmplan::verify::{check_feasibility, evaluate_objective, min_pairwise_distance};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

// Criterion 1 ---------------------------------------------------------------

/// min ||x - c|| s.t. A x = b; closed form x* = c - A^T (A A^T)^-1 (A c - b).
fn affine_projection(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let n = rng.gen_range(3..9);
    let m = rng.gen_range(1..n);
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-2.0..2.0));
    let b = DVector::from_fn(m, |_, _| rng.gen_range(-5.0..5.0));
    let c = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
    let gram = (&a * a.transpose()).try_inverse().ok_or("singular draw")?;
    let x_star = &c - a.transpose() * gram * (&a * &c - &b);
    let expected = (&x_star - &c).norm();

    let mut prog = ConicProgram::new(n);
    let t = prog.add_var(1.0);
    for r in 0..m {
        prog.add_eq((0..n).map(|j| (j, a[(r, j)])).collect(), b[r]);
    }
    prog.add_cone(SocConstraint::shifted(ConeBound::Var(t), (0..n).collect(), c.iter().copied().collect()));
    let sol = solve(&prog, &SolverSettings::default()).map_err(|e| e.to_string())?;
    ensure(sol.status == SolveStatus::Optimal, || format!("status {}", sol.status))?;
    let x = DVector::from_column_slice(&sol.primal[..n]);
    ensure(rel_err(sol.objective, expected) <= 1e-6, || {
        format!("projection objective {} vs {expected}", sol.objective)
    })?;
    ensure((&x - &x_star).norm() / x_star.norm().max(1.0) <= 1e-6, || "projection point off".into())
}

/// min ||x - c|| s.t. ||x|| <= r with ||c|| > r; optimum ||c|| - r at c r / ||c||.
fn ball_distance(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let n = rng.gen_range(2..7);
    let c = DVector::from_fn(n, |_, _| rng.gen_range(-6.0..6.0));
    let r = rng.gen_range(0.1..0.9) * c.norm();
    let mut prog = ConicProgram::new(n);
    let t = prog.add_var(1.0);
    prog.add_cone(SocConstraint::shifted(ConeBound::Var(t), (0..n).collect(), c.iter().copied().collect()));
    prog.add_cone(SocConstraint::new(ConeBound::Const(r), (0..n).collect()));
    let sol = solve(&prog, &SolverSettings::default()).map_err(|e| e.to_string())?;
    ensure(sol.status == SolveStatus::Optimal, || format!("status {}", sol.status))?;
    let expected = c.norm() - r;
    ensure(rel_err(sol.objective, expected) <= 1e-6, || {
        format!("ball objective {} vs {expected}", sol.objective)
    })?;
    let x_star = &c * (r / c.norm());
    let x = DVector::from_column_slice(&sol.primal[..n]);
    ensure((&x - &x_star).norm() / x_star.norm().max(1.0) <= 1e-6, || "ball point off".into())
}

/// min c.x over a box, with one free cone so the program stays conic.
fn box_lp(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let n = rng.gen_range(2..10);
    let mut prog = ConicProgram::new(n);
    let mut expected = 0.0;
    for j in 0..n {
        let cj = rng.gen_range(-3.0..3.0);
        let lo = rng.gen_range(-5.0..0.0);
        let hi = lo + rng.gen_range(0.5..5.0);
        prog.objective[j] = cj;
        prog.add_le(vec![(j, 1.0)], hi);
        prog.add_le(vec![(j, -1.0)], -lo);
        expected += (cj * lo).min(cj * hi);
    }
    prog.add_cone(SocConstraint::new(ConeBound::Const(100.0), (0..n).collect()));
    let sol = solve(&prog, &SolverSettings::default()).map_err(|e| e.to_string())?;
    ensure(sol.status == SolveStatus::Optimal, || format!("status {}", sol.status))?;
    ensure(rel_err(sol.objective, expected) <= 1e-6, || {
        format!("box objective {} vs {expected}", sol.objective)
    })
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..50 {
        let run = match case % 3 {
            0 => affine_projection(&mut rng),
            1 => ball_distance(&mut rng),
            _ => box_lp(&mut rng),
        };
        run.map_err(|e| format!("case {case}: {e}"))?;
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.2} s"))?;
    Ok(format!("50 closed-form programs within 1e-6 in {secs:.2} s"))
}

// Criterion 2 ---------------------------------------------------------------

fn criterion_2() -> Outcome {
    let base = BenchmarkBase {
        horizon: 2,
        ..BenchmarkBase::default()
    };
    let s = generate_benchmark(2, BenchmarkPattern::CircleSwap, 0, &base).map_err(|e| e.to_string())?;
    let (mut prog, mut map) = build_base_problem(&s);
    add_slack_columns(&mut prog, &mut map, 1.0).map_err(|e| e.to_string())?;
    let d = s.safety_distance;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut point = || Vector3::from_fn(|_, _| rng.gen_range(-20.0..20.0));
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let (ai, aj, xi, xj) = (point(), point(), point(), point());
        let row = collision_row_from_positions(&map, ai, aj, d, 0, 1, 0).map_err(|e| e.to_string())?;
        let mut x = vec![0.0; prog.num_vars];
        for a in 0..3 {
            x[map.position(0, 0, a)] = xi[a];
            x[map.position(1, 0, a)] = xj[a];
        }
        // The row reads -lin(x) - s <= -d, so lin(x) = d + rhs - (row without slack).
        let lin = d + row.rhs - row.eval(&x);
        let truth = (xi - xj).norm();
        worst = worst.max(lin - truth);
        if lin > truth + 1e-12 * truth.max(1.0) {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} violations, worst excess {worst:e}"))?;
    Ok(format!("1000 samples, 0 violations, largest lin - g = {worst:.3e}"))
}

// Criteria 3, 4, 5 ------------------------------------------------------------

fn circle(n: usize) -> Scenario {
    generate_benchmark(n, BenchmarkPattern::CircleSwap, 0, &BenchmarkBase::default()).expect("benchmark")
}

fn end_to_end(n: usize, limit_secs: f64, converged: &mut Vec<(String, PlanResult)>) -> Outcome {
    let s = circle(n);
    let result = plan_dca(&s, &DcaConfig::default()).map_err(|e| e.to_string())?;
    let last = result.final_record().ok_or("empty log")?.clone();
    converged.push((format!("circle N={n}"), result.clone()));
    ensure(result.status == PlanStatus::ConvergedFeasible, || format!("status {}", result.status.as_str()))?;
    ensure(last.max_slack <= 1e-6, || format!("max slack {:e}", last.max_slack))?;
    let closest = min_pairwise_distance(&result.trajectory).map_err(|e| e.to_string())?;
    ensure(closest.distance >= 5.0 - 1e-4, || format!("min distance {}", closest.distance))?;
    let delta = last.delta.ok_or("no delta")?;
    ensure(delta.abs() <= 1e-4, || format!("final delta {delta:e}"))?;
    ensure(result.wall_time <= limit_secs, || format!("wall time {:.1} s", result.wall_time))?;
    let report = check_feasibility(&s, &result.trajectory, 1e-4).map_err(|e| e.to_string())?;
    ensure(report.feasible, || format!("verifier rejects: {report:?}"))?;
    Ok(format!(
        "{} pairs x 30 steps, min distance {:.6}, final delta {:.2e}, {} iterations, {:.1} s",
        s.num_pairs(),
        closest.distance,
        delta,
        result.iterations(),
        result.wall_time
    ))
}

fn criterion_5(converged: &[(String, PlanResult)], epsilon: f64) -> Outcome {
    let mut count = 0;
    for (name, r) in converged.iter().filter(|(_, r)| r.status == PlanStatus::ConvergedFeasible) {
        let last = r.final_record().ok_or("empty log")?;
        ensure(last.max_slack <= 1e-6, || format!("{name}: max slack {:e}", last.max_slack))?;
        if let Some(delta) = last.delta {
            ensure(delta.abs() <= epsilon, || format!("{name}: final delta {delta:e}"))?;
        }
        ensure(r.log.iter().all(|rec| rec.subproblem_status == SolveStatus::Optimal), || {
            format!("{name}: non-optimal subproblem")
        })?;
        count += 1;
    }
    ensure(count > 0, || "no converged runs".into())?;
    let all = converged.len();
    ensure(count == all, || format!("only {count} of {all} runs converged"))?;
    Ok(format!("{count} converged runs end with max slack <= 1e-6 and |delta| <= {epsilon:e}"))
}

// Criterion 6 ---------------------------------------------------------------

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

/// Two vehicles swapping places along the x axis.
fn head_on(horizon: usize) -> Scenario {
    let a = Vector3::new(-5.0, 0.0, 0.0);
    Scenario {
        vehicles: vec![vehicle(a, -a, 12.0), vehicle(-a, a, 12.0)],
        horizon,
        dt: 1.0,
        safety_distance: 5.0,
        force_weight: 1.0,
        goal_weight_slope: 0.05,
        arena_bounds: None,
        dca: None,
    }
}

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let mut notes = Vec::new();
    for horizon in [3, 4] {
        let micp = build_cubic_micp(&head_on(horizon)).map_err(|e| e.to_string())?;
        let bnb = branch_and_bound(&micp, &BnbSettings::default()).map_err(|e| e.to_string())?;
        let oracle = enumerate_exhaustive(&micp, &SolverSettings::default()).map_err(|e| e.to_string())?;
        ensure(bnb.status == BnbStatus::Optimal, || format!("K={horizon}: status {}", bnb.status.as_str()))?;
        ensure(rel_err(bnb.objective, oracle.objective) <= 1e-6, || {
            format!("K={horizon}: bnb {} vs enumeration {}", bnb.objective, oracle.objective)
        })?;
        notes.push(format!(
            "K={horizon}: {:.6} = {:.6} ({} nodes, {} solves)",
            bnb.objective, oracle.objective, bnb.nodes, oracle.solves
        ));
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{}; {secs:.1} s", notes.join(", ")))
}

// Criterion 7 ---------------------------------------------------------------

fn criterion_7(converged: &mut Vec<(String, PlanResult)>) -> Outcome {
    let mut notes = Vec::new();
    for (n, horizon, seed) in [(2, 5, 0), (2, 10, 1), (3, 5, 2)] {
        let base = BenchmarkBase {
            horizon,
            arena_padding: Some(5.0),
            ..BenchmarkBase::default()
        };
        let s = generate_benchmark(n, BenchmarkPattern::CircleSwap, seed, &base).map_err(|e| e.to_string())?;
        let tag = format!("N={n} K={horizon}");
        let dca = plan_dca(&s, &DcaConfig::default()).map_err(|e| e.to_string())?;
        converged.push((tag.clone(), dca.clone()));
        ensure(dca.status == PlanStatus::ConvergedFeasible, || format!("{tag}: DCA {}", dca.status.as_str()))?;
        let micp = build_cubic_micp(&s).map_err(|e| e.to_string())?;
        let bnb = branch_and_bound(&micp, &BnbSettings::default()).map_err(|e| e.to_string())?;
        ensure(bnb.status == BnbStatus::Optimal, || format!("{tag}: MICP {}", bnb.status.as_str()))?;
        let micp_traj = bnb.trajectory.as_ref().ok_or("no MICP trajectory")?;
        for (name, traj) in [("DCA", &dca.trajectory), ("MICP", micp_traj)] {
            let report = check_feasibility(&s, traj, 1e-4).map_err(|e| e.to_string())?;
            ensure(report.feasible, || format!("{tag}: {name} trajectory fails verification"))?;
        }
        let dca_fuel = evaluate_objective(&s, &dca.trajectory).map_err(|e| e.to_string())?.fuel;
        let micp_fuel = evaluate_objective(&s, micp_traj).map_err(|e| e.to_string())?.fuel;
        ensure(dca_fuel <= micp_fuel + 1e-6, || {
            format!("{tag}: DCA fuel {dca_fuel:.6} > MICP fuel {micp_fuel:.6}")
        })?;
        notes.push(format!("{tag} delta {:.4}", micp_fuel - dca_fuel));
    }
    Ok(format!("MICP - DCA fuel: {}", notes.join(", ")))
}

// Criterion 8 ---------------------------------------------------------------

fn criterion_8() -> Outcome {
    let d = 3.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for level in 1..=6 {
        let outer = d / cap_angle(level).cos() + 1e-9;
        let (mut inside, mut outside) = (0, 0);
        for _ in 0..100_000 {
            let angle = rng.gen_range(0.0..2.0 * PI);
            let r = rng.gen_range(0.0..1.2 * outer);
            let (x, y) = (r * angle.cos(), r * angle.sin());
            let norm = x.hypot(y);
            let member = poly_membership(x, y, d, level);
            if norm <= d {
                inside += 1;
                ensure(member, || format!("L={level}: ({x}, {y}) with norm {norm} excluded"))?;
            } else if norm > outer {
                outside += 1;
                ensure(!member, || format!("L={level}: ({x}, {y}) with norm {norm} included"))?;
            }
        }
        ensure(inside > 0 && outside > 0, || format!("L={level}: degenerate sample"))?;
    }
    Ok("10^5 samples per level 1..6, 0 violations".into())
}

// Criterion 9 ---------------------------------------------------------------

fn criterion_9() -> Outcome {
    let (pi, pj) = (Vector3::zeros(), Vector3::new(3.0, 3.0, 3.0));
    let d = 5.0;
    for f in 0..6 {
        let (axis, sign) = face(f);
        let gap = sign * (pi[axis] - pj[axis]);
        ensure(gap < d, || format!("face {f} holds with gap {gap}"))?;
    }
    let (_, margin) = best_face(&pi, &pj, d);
    let distance = (pi - pj).norm();
    ensure(margin < 0.0, || "some face holds".into())?;
    ensure(distance > d, || format!("distance {distance} <= d"))?;
    Ok(format!("all six faces fail (best margin {margin}), distance {distance:.6} > {d}"))
}

// Criterion 10 --------------------------------------------------------------

fn criterion_10(converged: &mut Vec<(String, PlanResult)>) -> Outcome {
    let s = Scenario {
        vehicles: vec![vehicle(Vector3::new(0.0, 0.0, 0.0), Vector3::new(20.0, 5.0, -3.0), 10.0)],
        horizon: 15,
        dt: 1.0,
        safety_distance: 5.0,
        force_weight: 1.0,
        goal_weight_slope: 0.05,
        arena_bounds: None,
        dca: None,
    };
    let result = plan_dca(&s, &DcaConfig::default()).map_err(|e| e.to_string())?;
    let (prog, _) = build_base_problem(&s);
    let direct = solve(&prog, &SolverSettings::default()).map_err(|e| e.to_string())?;
    converged.push(("single vehicle".into(), result.clone()));
    ensure(direct.status == SolveStatus::Optimal, || "direct solve failed".into())?;
    ensure(result.iterations() == 1, || format!("{} iterations", result.iterations()))?;
    let last = result.final_record().ok_or("empty log")?;
    let dca_objective = last.objective_f0 + last.penalty_term;
    ensure((dca_objective - direct.objective).abs() <= 1e-6, || {
        format!("{dca_objective} vs {}", direct.objective)
    })?;
    Ok(format!("one iteration, objective {dca_objective:.9} = {:.9}", direct.objective))
}

fn main() {
    let mut converged = Vec::new();
    let epsilon = DcaConfig::default().epsilon;
    let mut results: Vec<(usize, Outcome)> = vec![(1, criterion_1()), (2, criterion_2())];
    results.push((3, end_to_end(5, 300.0, &mut converged)));
    results.push((4, end_to_end(15, 1800.0, &mut converged)));
    results.push((6, criterion_6()));
    results.push((7, criterion_7(&mut converged)));
    results.push((8, criterion_8()));
    results.push((9, criterion_9()));
    results.push((10, criterion_10(&mut converged)));
    results.push((5, criterion_5(&converged, epsilon)));
    results.sort_by_key(|(n, _)| *n);

    let mut failed = 0;
    for (n, outcome) in &results {
        match outcome {
            Ok(msg) => println!("criterion {n}: PASS - {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n}: FAIL - {msg}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
