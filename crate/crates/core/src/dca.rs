//! Penalty DC algorithm for the collision-avoidance problem.
//!
//! The separation constraint `||p_i - p_j|| >= d` is relaxed with a
//! nonnegative slack `s_ijk` whose sum enters the objective with weight
//! `tau`. Each iteration replaces the separation by its first-order
//! expansion at the anchor trajectories kept by the [`AnchorPolicy`], solves
//! the resulting second-order cone program, adds the solution to the anchor
//! set and raises `tau` geometrically up to `tau_max`. Because the norm is
//! convex, every expansion under-estimates the true separation, so a
//! subproblem solution with zero slack is feasible for the original problem.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{StateVector, Trajectory};
use crate::error::{invalid, PlanError, Result};
use crate::program::{add_slack_columns, build_base_problem, set_slack_penalty, ConicProgram, SparseRow, VariableMap};
use crate::scenario::Scenario;
use crate::solver::{solve, SolveStatus, SolverSettings};
use crate::verify::min_pairwise_distance;

/// Separations at or below `DEGENERACY * d` have no usable gradient.
pub const DEGENERACY: f64 = 1e-9;
/// Relative offset applied to coincident anchor pairs, as a fraction of `d`.
pub const PERTURBATION: f64 = 1e-3;

/// Euclidean distance between vehicles `i` and `j` at step `k`.
pub fn separation(traj: &Trajectory, i: usize, j: usize, k: usize) -> f64 {
    (traj.position(i, k) - traj.position(j, k)).norm()
}

/// Gradient of the separation with respect to the positions of `i` and `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationGradient {
    pub on_i: Vector3<f64>,
    pub on_j: Vector3<f64>,
}

pub fn separation_gradient(traj: &Trajectory, i: usize, j: usize, k: usize, d: f64) -> Result<SeparationGradient> {
    gradient_at(traj.position(i, k), traj.position(j, k), d).ok_or(PlanError::DegenerateAnchor {
        i,
        j,
        k,
        separation: separation(traj, i, j, k),
    })
}

fn gradient_at(pi: Vector3<f64>, pj: Vector3<f64>, d: f64) -> Option<SeparationGradient> {
    let delta = pi - pj;
    let g = delta.norm();
    (g > DEGENERACY * d).then(|| {
        let n = delta / g;
        SeparationGradient { on_i: n, on_j: -n }
    })
}

/// Anchor positions for pair `(i, j)` at step `k`. Coincident positions are
/// pushed apart by `PERTURBATION * d` along the axis on which the pair's
/// relative displacement varies least over the anchor (ties go to the lower
/// axis index).
pub fn anchor_positions(anchor: &Trajectory, i: usize, j: usize, k: usize, d: f64) -> (Vector3<f64>, Vector3<f64>) {
    let (pi, pj) = (anchor.position(i, k), anchor.position(j, k));
    if (pi - pj).norm() > DEGENERACY * d {
        return (pi, pj);
    }
    let horizon = anchor.horizon() as f64;
    let rel: Vec<Vector3<f64>> = (0..anchor.horizon())
        .map(|t| anchor.position(i, t) - anchor.position(j, t))
        .collect();
    let mean = rel.iter().sum::<Vector3<f64>>() / horizon;
    let var = rel
        .iter()
        .map(|r| (r - mean).component_mul(&(r - mean)))
        .sum::<Vector3<f64>>();
    let mut axis = 0;
    for a in 1..3 {
        if var[a] < var[axis] {
            axis = a;
        }
    }
    let mut offset = Vector3::zeros();
    offset[axis] = 0.5 * PERTURBATION * d;
    (pi + offset, pj - offset)
}

/// Starting anchor for the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Straight line from start to goal at constant speed.
    StraightLine,
    /// Stay at the start for the first half of the horizon, then sit at the goal.
    HoverThenJump,
    /// Straight line bent to the right of the direction of travel by up to
    /// `d`, so that vehicles headed at each other pass side by side.
    #[default]
    LateralBypass,
}

impl std::str::FromStr for InitPolicy {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight_line" => Ok(Self::StraightLine),
            "hover_then_jump" => Ok(Self::HoverThenJump),
            "lateral_bypass" => Ok(Self::LateralBypass),
            other => Err(PlanError::Parse(format!("unknown init policy `{other}`"))),
        }
    }
}

/// Builds the initial anchor. It need not satisfy the dynamics or the
/// separation constraints; only its positions are used. Velocities are
/// forward differences and forces are zero.
pub fn initialize_trajectory(scenario: &Scenario, policy: InitPolicy) -> Trajectory {
    let horizon = scenario.horizon;
    let mut traj = Trajectory::zeros(scenario.num_vehicles(), horizon);
    for (i, v) in scenario.vehicles.iter().enumerate() {
        let travel = v.goal_position - v.start_position;
        let right = right_of(&travel) * scenario.safety_distance;
        let positions: Vec<Vector3<f64>> = (0..horizon)
            .map(|k| {
                let frac = k as f64 / (horizon - 1) as f64;
                (frac, v.start_position + travel * frac)
            })
            .enumerate()
            .map(|(k, (frac, line))| match policy {
                InitPolicy::StraightLine => line,
                InitPolicy::LateralBypass => line + right * (PI * frac).sin(),
                InitPolicy::HoverThenJump => {
                    if k < horizon / 2 {
                        v.start_position
                    } else {
                        v.goal_position
                    }
                }
            })
            .collect();
        for k in 0..horizon {
            let velocity = if k + 1 < horizon {
                (positions[k + 1] - positions[k]) / scenario.dt
            } else {
                v.goal_velocity
            };
            traj.states[i][k] = StateVector::new(positions[k], velocity);
        }
    }
    traj
}

/// Unit vector to the right of `travel` seen from above (`travel x z`),
/// falling back to `travel x x` for vertical motion; zero if `travel` is.
fn right_of(travel: &Vector3<f64>) -> Vector3<f64> {
    if travel.norm() == 0.0 {
        return Vector3::zeros();
    }
    let right = travel.cross(&Vector3::z());
    let right = if right.norm() > 1e-12 * travel.norm() { right } else { travel.cross(&Vector3::x()) };
    right.normalize()
}

/// Which anchors contribute linearized rows to each subproblem.
///
/// Accumulated rows never leave the subproblem, so anchors that disagree on
/// which side a vehicle passes on can make the rows contradictory and pin
/// some slack at `d`. The default keeps only the latest anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorPolicy {
    /// Every anchor ever visited.
    AccumulateAll,
    /// Only the most recent `m` anchors.
    KeepLastM(usize),
}

impl AnchorPolicy {
    /// Count used by `keep_last_m` without an explicit value.
    pub const DEFAULT_KEEP: usize = 20;
}

impl Default for AnchorPolicy {
    fn default() -> Self {
        AnchorPolicy::KeepLastM(1)
    }
}

impl std::str::FromStr for AnchorPolicy {
    type Err = PlanError;

    /// Accepts `accumulate_all`, `keep_last_m` or `keep_last_m:<count>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "accumulate_all" => Ok(Self::AccumulateAll),
            None if s == "keep_last_m" => Ok(Self::KeepLastM(Self::DEFAULT_KEEP)),
            Some(("keep_last_m", m)) => m
                .parse()
                .map(Self::KeepLastM)
                .map_err(|_| PlanError::Parse(format!("bad anchor count in `{s}`"))),
            _ => Err(PlanError::Parse(format!("unknown anchor policy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcaConfig {
    pub tau0: f64,
    pub mu: f64,
    pub tau_max: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    /// Largest slack accepted as a feasible outcome.
    pub slack_tol: f64,
    pub anchor_policy: AnchorPolicy,
    pub init_policy: InitPolicy,
    pub solver: SolverSettings,
}

impl Default for DcaConfig {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            mu: 1.5,
            tau_max: 1e4,
            epsilon: 1e-4,
            max_iters: 1000,
            slack_tol: 1e-6,
            anchor_policy: AnchorPolicy::default(),
            init_policy: InitPolicy::default(),
            solver: SolverSettings::default(),
        }
    }
}

impl DcaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0.is_finite() && self.tau0 >= 0.0) {
            return Err(invalid("tau0", "must be a finite number >= 0"));
        }
        if !(self.tau_max.is_finite() && self.tau_max >= self.tau0) {
            return Err(invalid("tau_max", "must be finite and at least tau0"));
        }
        if !(self.mu.is_finite() && self.mu > 1.0) {
            return Err(invalid("mu", "must exceed 1 so the penalty escalates"));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(invalid("epsilon", "must be positive"));
        }
        if self.slack_tol.is_nan() || self.slack_tol <= 0.0 {
            return Err(invalid("slack_tol", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be at least 1"));
        }
        if self.anchor_policy == AnchorPolicy::KeepLastM(0) {
            return Err(invalid("anchor_policy", "keep_last_m needs at least one anchor"));
        }
        self.solver.validate()
    }
}

/// Summary of one subproblem solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub m: usize,
    pub objective_f0: f64,
    pub penalty_term: f64,
    pub max_slack: f64,
    /// Change of `objective_f0 + penalty_term` from the previous iterate;
    /// `None` on the first one.
    pub delta: Option<f64>,
    pub tau: f64,
    pub subproblem_status: SolveStatus,
}

impl IterationRecord {
    pub fn total(&self) -> f64 {
        self.objective_f0 + self.penalty_term
    }
}

/// `(curr.f0 + curr.penalty) - (prev.f0 + prev.penalty)`.
pub fn delta_gap(prev: &IterationRecord, curr: &IterationRecord) -> Result<f64> {
    if prev.m + 1 != curr.m {
        return Err(PlanError::NonConsecutive {
            prev: prev.m,
            curr: curr.m,
        });
    }
    Ok(curr.total() - prev.total())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    ConvergedFeasible,
    ConvergedInfeasibleSlack,
    IterationLimit,
    SubproblemFailure,
}

impl PlanStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlanStatus::ConvergedFeasible => "converged_feasible",
            PlanStatus::ConvergedInfeasibleSlack => "converged_infeasible_slack",
            PlanStatus::IterationLimit => "iteration_limit",
            PlanStatus::SubproblemFailure => "subproblem_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub trajectory: Trajectory,
    pub status: PlanStatus,
    pub log: Vec<IterationRecord>,
    /// Smallest pairwise distance over all steps; infinite for one vehicle.
    pub min_separation: f64,
    pub wall_time: f64,
}

impl PlanResult {
    pub fn iterations(&self) -> usize {
        self.log.len()
    }

    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.log.last()
    }
}

struct Anchor {
    rows: Vec<SparseRow>,
}

/// State carried between iterations: the slack-augmented base program, the
/// anchor set and the current penalty weight.
pub struct DcaWorkspace {
    scenario: Scenario,
    config: DcaConfig,
    base: ConicProgram,
    map: VariableMap,
    anchors: VecDeque<Anchor>,
    tau: f64,
    m: usize,
    last_record: Option<IterationRecord>,
    last_trajectory: Option<Trajectory>,
}

impl DcaWorkspace {
    pub fn new(scenario: &Scenario, config: &DcaConfig) -> Result<Self> {
        scenario.validate()?;
        config.validate()?;
        let (mut base, mut map) = build_base_problem(scenario);
        add_slack_columns(&mut base, &mut map, config.tau0)?;
        let initial = initialize_trajectory(scenario, config.init_policy);
        let mut ws = Self {
            scenario: scenario.clone(),
            config: config.clone(),
            base,
            map,
            anchors: VecDeque::new(),
            tau: config.tau0,
            m: 0,
            last_record: None,
            last_trajectory: None,
        };
        ws.push_anchor(&initial);
        Ok(ws)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn iteration(&self) -> usize {
        self.m
    }

    pub fn variable_map(&self) -> &VariableMap {
        &self.map
    }

    /// Trajectory decoded from the latest subproblem.
    pub fn trajectory(&self) -> Option<&Trajectory> {
        self.last_trajectory.as_ref()
    }

    /// The subproblem the next call to [`DcaWorkspace::dca_iterate`] solves.
    pub fn subproblem(&self) -> ConicProgram {
        let mut prog = self.base.clone();
        set_slack_penalty(&mut prog, &self.map, self.tau);
        let extra: usize = self.anchors.iter().map(|a| a.rows.len()).sum();
        prog.inequalities.reserve(extra);
        for anchor in &self.anchors {
            prog.inequalities.extend(anchor.rows.iter().cloned());
        }
        prog
    }

    fn push_anchor(&mut self, traj: &Trajectory) {
        let horizon = self.scenario.horizon;
        let pairs = self.map.pairs().to_vec();
        let d = self.scenario.safety_distance;
        let map = &self.map;
        // Rows ordered by (k, i, j).
        let rows: Vec<SparseRow> = (0..horizon * pairs.len())
            .into_par_iter()
            .map(|idx| {
                let (k, (i, j)) = (idx / pairs.len(), pairs[idx % pairs.len()]);
                let (pi, pj) = anchor_positions(traj, i, j, k, d);
                crate::program::collision_row_from_positions(map, pi, pj, d, i, j, k)
                    .expect("slacks present and anchor nondegenerate")
            })
            .collect();
        self.anchors.push_back(Anchor { rows });
        if let AnchorPolicy::KeepLastM(cap) = self.config.anchor_policy {
            while self.anchors.len() > cap {
                self.anchors.pop_front();
            }
        }
    }

    /// Solves the current subproblem, records it, adds its solution to the
    /// anchor set and escalates the penalty. A failed solve is reported in
    /// the record's status and leaves the anchors untouched.
    pub fn dca_iterate(&mut self) -> Result<IterationRecord> {
        let prog = self.subproblem();
        let sol = solve(&prog, &self.config.solver)?;
        let tau = self.tau;
        if sol.status != SolveStatus::Optimal {
            let record = IterationRecord {
                m: self.m,
                objective_f0: f64::NAN,
                penalty_term: f64::NAN,
                max_slack: f64::NAN,
                delta: None,
                tau,
                subproblem_status: sol.status,
            };
            return Ok(record);
        }

        let slacks = &sol.primal[self.map.slack_indices()];
        let slack_sum: f64 = slacks.iter().map(|s| s.max(0.0)).sum();
        let max_slack = slacks.iter().fold(0.0_f64, |a, &s| a.max(s));
        let objective_f0: f64 = self.base.objective[..self.map.num_base_vars()]
            .iter()
            .zip(&sol.primal)
            .map(|(c, x)| c * x)
            .sum();
        let mut record = IterationRecord {
            m: self.m,
            objective_f0,
            penalty_term: tau * slack_sum,
            max_slack,
            delta: None,
            tau,
            subproblem_status: sol.status,
        };
        if let Some(prev) = &self.last_record {
            record.delta = Some(delta_gap(prev, &record)?);
        }

        let traj = self.map.decode(&sol.primal);
        self.push_anchor(&traj);
        self.last_trajectory = Some(traj);
        self.last_record = Some(record.clone());
        self.tau = (self.config.mu * self.tau).min(self.config.tau_max);
        self.m += 1;
        Ok(record)
    }
}

/// Runs the penalty DC iteration to termination.
///
/// Stops as converged once the penalty has reached `tau_max` and the
/// objective change `|delta|` is at most `epsilon`; the outcome is feasible
/// when the largest slack is within `slack_tol`. Without vehicle pairs the
/// first subproblem is already the original convex problem and the loop
/// stops after it.
pub fn plan_dca(scenario: &Scenario, config: &DcaConfig) -> Result<PlanResult> {
    let started = Instant::now();
    let mut ws = DcaWorkspace::new(scenario, config)?;
    let mut log = Vec::new();
    let d = scenario.safety_distance;

    let status = loop {
        if log.len() >= config.max_iters {
            break PlanStatus::IterationLimit;
        }
        let record = ws.dca_iterate()?;
        let ok = record.subproblem_status == SolveStatus::Optimal;
        log.push(record.clone());
        if !ok {
            break PlanStatus::SubproblemFailure;
        }
        let traj = ws.trajectory().expect("solved iterate");
        let min_sep = min_separation_of(traj);
        if scenario.num_pairs() == 0 {
            break PlanStatus::ConvergedFeasible;
        }
        let settled = record.tau >= config.tau_max && record.delta.is_some_and(|dl| dl.abs() <= config.epsilon);
        if settled {
            let feasible = record.max_slack <= config.slack_tol && min_sep >= d - 10.0 * config.slack_tol;
            break if feasible {
                PlanStatus::ConvergedFeasible
            } else {
                PlanStatus::ConvergedInfeasibleSlack
            };
        }
    };

    let trajectory = ws
        .trajectory()
        .cloned()
        .unwrap_or_else(|| initialize_trajectory(scenario, config.init_policy));
    Ok(PlanResult {
        min_separation: min_separation_of(&trajectory),
        trajectory,
        status,
        log,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

fn min_separation_of(traj: &Trajectory) -> f64 {
    min_pairwise_distance(traj).map_or(f64::INFINITY, |p| p.distance)
}

/// Writes `m,objective_f0,penalty_term,max_slack,delta,tau,status`; the
/// first iterate has an empty `delta`.
pub fn write_iteration_log_csv<W: Write>(log: &[IterationRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["m", "objective_f0", "penalty_term", "max_slack", "delta", "tau", "status"])?;
    for r in log {
        w.write_record([
            r.m.to_string(),
            r.objective_f0.to_string(),
            r.penalty_term.to_string(),
            r.max_slack.to_string(),
            r.delta.map(|d| d.to_string()).unwrap_or_default(),
            r.tau.to_string(),
            r.subproblem_status.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
