//! Checks a trajectory CSV against a scenario and prints the report.
//! Without arguments, plans a small random instance first and checks that.
//!
//! ```text
//! cargo run --release --example verify_trajectory -- [scenario.json trajectory.csv]
//! ```

use std::fs::File;

use swarmplan::dynamics::read_trajectory_csv;
use swarmplan::verify::{check_feasibility, evaluate_objective, DEFAULT_TOL};
use swarmplan::{generate_benchmark, load_scenario, plan_dca, BenchmarkBase, BenchmarkPattern, DcaConfig};

fn main() -> swarmplan::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (scenario, traj) = match args.as_slice() {
        [s, t] => (load_scenario(File::open(s)?)?, read_trajectory_csv(File::open(t)?)?),
        [] => {
            let base = BenchmarkBase {
                horizon: 15,
                ..BenchmarkBase::default()
            };
            let scenario = generate_benchmark(4, BenchmarkPattern::RandomBox, 3, &base)?;
            let traj = plan_dca(&scenario, &DcaConfig::default())?.trajectory;
            (scenario, traj)
        }
        _ => {
            eprintln!("usage: verify_trajectory [scenario.json trajectory.csv]");
            std::process::exit(1);
        }
    };

    let report = check_feasibility(&scenario, &traj, DEFAULT_TOL)?;
    let cost = evaluate_objective(&scenario, &traj)?;
    println!("dynamics defect  {:.3e}", report.dynamics_defect);
    println!("boundary defect  {:.3e}", report.boundary_defect);
    println!("arena defect     {:.3e}", report.arena_defect);
    println!("velocity margin  {:.6}", report.velocity_margin);
    println!("force margin     {:.6}", report.force_margin);
    if let Some(p) = &report.min_separation {
        println!(
            "min separation   {:.6} (vehicles {} and {} at k={}, d={})",
            p.distance, p.i, p.j, p.k, report.safety_distance
        );
    }
    println!("fuel {:.4} goal {:.4} total {:.4}", cost.fuel, cost.goal, cost.combined);
    println!("feasible: {}", report.feasible);
    Ok(())
}
