//! Generates a benchmark scenario and prints it as JSON, with a short
//! summary on stderr.
//!
//! ```text
//! cargo run --example benchmark_generate -- [vehicles] [circle_swap|random_box] [seed]
//! ```

use swarmplan::{generate_benchmark, BenchmarkBase};

fn main() -> swarmplan::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let vehicles = args.first().map_or(5, |a| a.parse().expect("vehicle count"));
    let pattern = args.get(1).map_or("circle_swap", String::as_str).parse()?;
    let seed = args.get(2).map_or(0, |a| a.parse().expect("seed"));
    let scenario = generate_benchmark(vehicles, pattern, seed, &BenchmarkBase::default())?;

    let closest_start = scenario
        .pairs()
        .map(|(i, j)| (scenario.vehicles[i].start_position - scenario.vehicles[j].start_position).norm())
        .fold(f64::INFINITY, f64::min);
    let longest_leg = scenario
        .vehicles
        .iter()
        .map(|v| (v.goal_position - v.start_position).norm())
        .fold(0.0, f64::max);
    eprintln!(
        "{} vehicles, {} pairs, K={}, closest start pair {:.3}, longest leg {:.3}",
        scenario.num_vehicles(),
        scenario.num_pairs(),
        scenario.horizon,
        closest_start,
        longest_leg
    );
    println!("{}", scenario.to_json()?);
    Ok(())
}
