//! Plans a circle swap with the penalty DC iteration and reports the
//! convergence history.
//!
//! ```text
//! cargo run --release --example dca_circle_swap -- [vehicles] [horizon] [init_policy] [anchor_policy]
//! ```

use swarmplan::verify::{check_feasibility, evaluate_objective, DEFAULT_TOL};
use swarmplan::{generate_benchmark, plan_dca, BenchmarkBase, BenchmarkPattern, DcaConfig};

fn main() -> swarmplan::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let vehicles = args.first().map_or(5, |a| a.parse().expect("vehicle count"));
    let horizon = args.get(1).map_or(30, |a| a.parse().expect("horizon"));
    let mut config = DcaConfig::default();
    if let Some(policy) = args.get(2) {
        config.init_policy = policy.parse()?;
    }
    if let Some(policy) = args.get(3) {
        config.anchor_policy = policy.parse()?;
    }
    let base = BenchmarkBase {
        horizon,
        ..BenchmarkBase::default()
    };
    let scenario = generate_benchmark(vehicles, BenchmarkPattern::CircleSwap, 0, &base)?;
    let result = plan_dca(&scenario, &config)?;

    for r in result.log.iter().step_by(5).chain(result.log.last()) {
        println!(
            "m={:4} tau={:9.2} f0={:10.4} penalty={:10.4e} max_slack={:9.2e} delta={}",
            r.m,
            r.tau,
            r.objective_f0,
            r.penalty_term,
            r.max_slack,
            r.delta.map_or("-".into(), |d| format!("{d:.3e}"))
        );
    }
    let report = check_feasibility(&scenario, &result.trajectory, DEFAULT_TOL)?;
    let cost = evaluate_objective(&scenario, &result.trajectory)?;
    println!("status {}", result.status.as_str());
    println!("iterations {}", result.iterations());
    println!("min separation {:.6}", result.min_separation);
    println!("fuel {:.4} goal {:.4}", cost.fuel, cost.goal);
    println!("feasible at {DEFAULT_TOL}: {}", report.feasible);
    println!("wall time {:.2} s", result.wall_time);
    Ok(())
}
