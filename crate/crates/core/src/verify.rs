//! Solver-free checks of a trajectory against the original nonconvex problem.
//!
//! Everything here is direct arithmetic on positions, velocities and forces,
//! so it can audit the output of either planner.
//!
//! Separation is only checked at the sampled steps. Two vehicles can still
//! pass through each other between samples.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::{dynamics_residual, Trajectory};
use crate::error::{PlanError, Result};
use crate::scenario::Scenario;

/// Tolerance used for reports unless the caller picks one.
pub const DEFAULT_TOL: f64 = 1e-4;

/// Closest pair over all steps; `k` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub distance: f64,
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Largest state-update defect (infinity norm).
    pub dynamics_defect: f64,
    /// Largest deviation from the pinned start and goal values.
    pub boundary_defect: f64,
    /// Largest excursion outside the arena box; 0 without one.
    pub arena_defect: f64,
    /// `min (v_max - ||v||)`; negative when some speed limit is broken.
    pub velocity_margin: f64,
    pub force_margin: f64,
    /// `None` for a single vehicle.
    pub min_separation: Option<PairDistance>,
    pub safety_distance: f64,
    pub tol: f64,
    pub feasible: bool,
}

/// Evaluates every constraint of the planning problem at `traj`.
pub fn check_feasibility(scenario: &Scenario, traj: &Trajectory, tol: f64) -> Result<FeasibilityReport> {
    traj.check_dims(scenario)?;
    let dynamics_defect = dynamics_residual(traj, scenario)?;
    let last = scenario.horizon - 1;

    let mut boundary_defect = 0.0_f64;
    let mut arena_defect = 0.0_f64;
    let mut velocity_margin = f64::INFINITY;
    let mut force_margin = f64::INFINITY;
    for (i, v) in scenario.vehicles.iter().enumerate() {
        let (first, final_state) = (&traj.states[i][0], &traj.states[i][last]);
        for defect in [
            first.position - v.start_position,
            first.velocity - v.start_velocity,
            final_state.position - v.goal_position,
            final_state.velocity - v.goal_velocity,
            traj.inputs[i][last].force - v.goal_force,
        ] {
            boundary_defect = boundary_defect.max(defect.amax());
        }
        for k in 0..scenario.horizon {
            let s = &traj.states[i][k];
            velocity_margin = velocity_margin.min(v.v_max - s.velocity.norm());
            force_margin = force_margin.min(v.f_max - traj.inputs[i][k].force.norm());
            if let Some(b) = &scenario.arena_bounds {
                let (lo, hi) = (b.lower(), b.upper());
                for a in 0..3 {
                    arena_defect = arena_defect.max(lo[a] - s.position[a]).max(s.position[a] - hi[a]);
                }
            }
        }
    }

    let min_separation = min_pairwise_distance(traj).ok();
    let d = scenario.safety_distance;
    let separated = min_separation.is_none_or(|p| p.distance >= d - tol);
    let feasible = dynamics_defect <= tol
        && boundary_defect <= tol
        && arena_defect <= tol
        && velocity_margin >= -tol
        && force_margin >= -tol
        && separated;
    Ok(FeasibilityReport {
        dynamics_defect,
        boundary_defect,
        arena_defect,
        velocity_margin,
        force_margin,
        min_separation,
        safety_distance: d,
        tol,
        feasible,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub fuel: f64,
    pub goal: f64,
    pub combined: f64,
}

/// `fuel = sum rho_f ||u_ik||`, `goal = sum a k ||p_ik - p_goal_i||` with 1-based `k`.
pub fn evaluate_objective(scenario: &Scenario, traj: &Trajectory) -> Result<ObjectiveBreakdown> {
    traj.check_dims(scenario)?;
    let mut fuel = 0.0;
    let mut goal = 0.0;
    for (i, v) in scenario.vehicles.iter().enumerate() {
        for k in 0..scenario.horizon {
            fuel += scenario.force_weight * traj.inputs[i][k].force.norm();
            goal += scenario.goal_weight_slope
                * (k + 1) as f64
                * (traj.states[i][k].position - v.goal_position).norm();
        }
    }
    Ok(ObjectiveBreakdown {
        fuel,
        goal,
        combined: fuel + goal,
    })
}

/// Exact minimum of `||p_i - p_j||` over `i < j` and all steps. Ties keep
/// the first triple in `(k, i, j)` order.
pub fn min_pairwise_distance(traj: &Trajectory) -> Result<PairDistance> {
    let n = traj.num_vehicles();
    if n < 2 {
        return Err(PlanError::Domain(format!("pairwise distance needs two vehicles, got {n}")));
    }
    let mut best = PairDistance {
        distance: f64::INFINITY,
        i: 0,
        j: 1,
        k: 0,
    };
    for k in 0..traj.horizon() {
        for i in 0..n {
            for j in i + 1..n {
                let distance = (traj.position(i, k) - traj.position(j, k)).norm();
                if distance < best.distance {
                    best = PairDistance { distance, i, j, k };
                }
            }
        }
    }
    Ok(best)
}

/// Writes `k,i,j,distance` for every step (1-based) and pair.
pub fn write_distance_csv<W: Write>(traj: &Trajectory, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "i", "j", "distance"])?;
    let n = traj.num_vehicles();
    for k in 0..traj.horizon() {
        for i in 0..n {
            for j in i + 1..n {
                let distance = (traj.position(i, k) - traj.position(j, k)).norm();
                w.write_record([(k + 1).to_string(), i.to_string(), j.to_string(), distance.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
