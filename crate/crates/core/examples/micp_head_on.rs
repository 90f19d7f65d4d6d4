//! Two vehicles trading places head-on, planned with the cubic big-M
//! baseline and with the DC iteration.
//!
//! ```text
//! cargo run --release --example micp_head_on -- [horizon]
//! ```

use nalgebra::Vector3;
use swarmplan::micp::{branch_and_bound, build_cubic_micp, face, BnbSettings};
use swarmplan::scenario::{Scenario, VehicleSpec};
use swarmplan::verify::evaluate_objective;
use swarmplan::{plan_dca, DcaConfig};

fn vehicle(start: Vector3<f64>, goal: Vector3<f64>) -> VehicleSpec {
    VehicleSpec {
        mass: 1.0,
        start_position: start,
        start_velocity: Vector3::zeros(),
        goal_position: goal,
        goal_velocity: Vector3::zeros(),
        goal_force: Vector3::zeros(),
        v_max: 12.0,
        f_max: 12.0,
    }
}

fn main() -> swarmplan::Result<()> {
    let horizon = std::env::args().nth(1).map_or(4, |a| a.parse().expect("horizon"));
    let a = Vector3::new(-5.0, 0.0, 0.0);
    let scenario = Scenario {
        vehicles: vec![vehicle(a, -a), vehicle(-a, a)],
        horizon,
        dt: 1.0,
        safety_distance: 5.0,
        force_weight: 1.0,
        goal_weight_slope: 0.05,
        arena_bounds: None,
        dca: None,
    };

    let micp = build_cubic_micp(&scenario)?;
    println!("{} disjunctions, {} binaries", micp.disjunctions.len(), micp.num_binaries());
    let bnb = branch_and_bound(&micp, &BnbSettings::default())?;
    println!(
        "branch and bound: {} after {} nodes, objective {:.6}, root bound {:.6}, {:.2} s",
        bnb.status.as_str(),
        bnb.nodes,
        bnb.objective,
        bnb.root_bound,
        bnb.wall_time
    );
    for (dis, faces) in micp.disjunctions.iter().zip(&bnb.assignment) {
        if let Some(f) = faces.iter().position(|&u| u == 1) {
            let (axis, sign) = face(f);
            println!("  k={} face {} ({}{})", dis.k + 1, f + 1, if sign > 0.0 { "+" } else { "-" }, ["x", "y", "z"][axis]);
        }
    }

    let dca = plan_dca(&scenario, &DcaConfig::default())?;
    let cost = evaluate_objective(&scenario, &dca.trajectory)?;
    println!(
        "dca: {} after {} iterations, objective {:.6}, min separation {:.4}",
        dca.status.as_str(),
        dca.iterations(),
        cost.combined,
        dca.min_separation
    );
    if let Some(traj) = &bnb.trajectory {
        let micp_cost = evaluate_objective(&scenario, traj)?;
        println!("fuel difference (micp - dca): {:.6}", micp_cost.fuel - cost.fuel);
    }
    Ok(())
}
