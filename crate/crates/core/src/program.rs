//! Solver-agnostic conic program and the assembly of the planning problem.
//!
//! A [`ConicProgram`] has a linear objective, sparse linear equalities and
//! `<=` inequalities, nonnegative variables, and second-order cones of the
//! form `||x[v] - shift|| <= bound`, where the bound is a variable or a
//! constant. [`build_base_problem`] lays out one 11-variable block per
//! vehicle and step:
//!
//! ```text
//! [x y z vx vy vz fx fy fz t_force t_goal]
//! ```
//!
//! and encodes the objective through the two epigraph scalars. Collision
//! handling is layered on top: penalty slacks with [`add_slack_columns`] and
//! linearized separation rows with [`add_linearized_collision_row`].

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::Vector3;

use crate::dca::{separation_gradient, DEGENERACY};
use crate::dynamics::{discretize, InputVector, StateVector, Trajectory};
use crate::error::{PlanError, Result};
use crate::scenario::Scenario;

/// `coeffs . x (= or <=) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl SparseRow {
    pub fn new(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConeBound {
    Var(usize),
    Const(f64),
}

impl ConeBound {
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            ConeBound::Var(t) => x[t],
            ConeBound::Const(c) => c,
        }
    }
}

/// `||x[vector] - shift||_2 <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub bound: ConeBound,
    pub vector: Vec<usize>,
    pub shift: Vec<f64>,
}

impl SocConstraint {
    pub fn new(bound: ConeBound, vector: Vec<usize>) -> Self {
        let shift = vec![0.0; vector.len()];
        Self { bound, vector, shift }
    }

    pub fn shifted(bound: ConeBound, vector: Vec<usize>, shift: Vec<f64>) -> Self {
        Self { bound, vector, shift }
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.vector
            .iter()
            .zip(&self.shift)
            .map(|(&j, s)| (x[j] - s).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConicProgram {
    pub num_vars: usize,
    /// Dense cost vector of length `num_vars`.
    pub objective: Vec<f64>,
    pub equalities: Vec<SparseRow>,
    pub inequalities: Vec<SparseRow>,
    pub cones: Vec<SocConstraint>,
    pub nonneg_vars: Vec<usize>,
}

impl ConicProgram {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            ..Self::default()
        }
    }

    /// Appends a variable with the given cost and returns its index.
    pub fn add_var(&mut self, cost: f64) -> usize {
        self.num_vars += 1;
        self.objective.push(cost);
        self.num_vars - 1
    }

    pub fn add_eq(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(SparseRow::new(coeffs, rhs));
    }

    pub fn add_le(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.inequalities.push(SparseRow::new(coeffs, rhs));
    }

    pub fn add_cone(&mut self, cone: SocConstraint) {
        self.cones.push(cone);
    }

    pub fn set_nonneg(&mut self, var: usize) {
        if let Err(pos) = self.nonneg_vars.binary_search(&var) {
            self.nonneg_vars.insert(pos, var);
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Checks index ranges, cone shapes, and finiteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars;
        if self.objective.len() != n {
            return Err(PlanError::InvalidProgram(format!(
                "objective has {} entries for {n} variables",
                self.objective.len()
            )));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(PlanError::InvalidProgram("objective has a non-finite cost".into()));
        }
        for (kind, rows) in [("equality", &self.equalities), ("inequality", &self.inequalities)] {
            for (r, row) in rows.iter().enumerate() {
                if !row.rhs.is_finite() {
                    return Err(PlanError::InvalidProgram(format!("{kind} row {r} has a non-finite rhs")));
                }
                for &(j, a) in &row.coeffs {
                    if j >= n || !a.is_finite() {
                        return Err(PlanError::InvalidProgram(format!(
                            "{kind} row {r} references x{j} with coefficient {a}"
                        )));
                    }
                }
            }
        }
        for (c, cone) in self.cones.iter().enumerate() {
            if cone.vector.is_empty() || cone.vector.len() != cone.shift.len() {
                return Err(PlanError::InvalidProgram(format!("cone {c} has an empty or misshapen vector")));
            }
            if cone.vector.iter().any(|&j| j >= n) || cone.shift.iter().any(|s| !s.is_finite()) {
                return Err(PlanError::InvalidProgram(format!("cone {c} references an invalid entry")));
            }
            match cone.bound {
                ConeBound::Var(t) if t >= n || cone.vector.contains(&t) => {
                    return Err(PlanError::InvalidProgram(format!("cone {c} has an invalid bound variable")));
                }
                ConeBound::Const(b) if !b.is_finite() => {
                    return Err(PlanError::InvalidProgram(format!("cone {c} has a non-finite bound")));
                }
                _ => {}
            }
        }
        if self.nonneg_vars.iter().any(|&j| j >= n) {
            return Err(PlanError::InvalidProgram("nonnegative index out of range".into()));
        }
        Ok(())
    }

    /// Line-oriented text dump: variables, then rows, then cones.
    pub fn dump<W: Write>(&self, mut w: W, name: &dyn Fn(usize) -> String) -> Result<()> {
        let fmt_row = |row: &SparseRow| {
            let mut s = String::new();
            for (n, &(j, a)) in row.coeffs.iter().enumerate() {
                if n > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{a:+}*{}", name(j));
            }
            s
        };
        writeln!(w, "# variables {}", self.num_vars)?;
        for j in 0..self.num_vars {
            let nonneg = if self.nonneg_vars.binary_search(&j).is_ok() { " nonneg" } else { "" };
            writeln!(w, "var {j} {} cost={}{nonneg}", name(j), self.objective[j])?;
        }
        writeln!(w, "# equalities {}", self.equalities.len())?;
        for row in &self.equalities {
            writeln!(w, "eq {} = {}", fmt_row(row), row.rhs)?;
        }
        writeln!(w, "# inequalities {}", self.inequalities.len())?;
        for row in &self.inequalities {
            writeln!(w, "le {} <= {}", fmt_row(row), row.rhs)?;
        }
        writeln!(w, "# cones {}", self.cones.len())?;
        for cone in &self.cones {
            let terms: Vec<String> = cone
                .vector
                .iter()
                .zip(&cone.shift)
                .map(|(&j, s)| if *s == 0.0 { name(j) } else { format!("({} - {s})", name(j)) })
                .collect();
            let bound = match cone.bound {
                ConeBound::Var(t) => name(t),
                ConeBound::Const(c) => c.to_string(),
            };
            writeln!(w, "soc || {} || <= {bound}", terms.join(", "))?;
        }
        Ok(())
    }
}

/// Number of variables in one vehicle-step block.
pub const BLOCK: usize = 11;
const POS: usize = 0;
const VEL: usize = 3;
const FORCE: usize = 6;
const T_FORCE: usize = 9;
const T_GOAL: usize = 10;

/// What a program variable represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    Position { vehicle: usize, k: usize, axis: usize },
    Velocity { vehicle: usize, k: usize, axis: usize },
    Force { vehicle: usize, k: usize, axis: usize },
    ForceEpigraph { vehicle: usize, k: usize },
    GoalEpigraph { vehicle: usize, k: usize },
    Slack { i: usize, j: usize, k: usize },
}

/// Index bookkeeping between the planning problem and program variables.
/// `k` is the 0-based step index throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableMap {
    pub num_vehicles: usize,
    pub horizon: usize,
    /// `(i, j)` pairs in slack order.
    pairs: Vec<(usize, usize)>,
    slack_base: Option<usize>,
}

impl VariableMap {
    fn new(scenario: &Scenario) -> Self {
        Self {
            num_vehicles: scenario.num_vehicles(),
            horizon: scenario.horizon,
            pairs: scenario.pairs().collect(),
            slack_base: None,
        }
    }

    fn block(&self, i: usize, k: usize) -> usize {
        debug_assert!(i < self.num_vehicles && k < self.horizon);
        (i * self.horizon + k) * BLOCK
    }

    pub fn num_base_vars(&self) -> usize {
        self.num_vehicles * self.horizon * BLOCK
    }

    pub fn position(&self, i: usize, k: usize, axis: usize) -> usize {
        self.block(i, k) + POS + axis
    }

    pub fn velocity(&self, i: usize, k: usize, axis: usize) -> usize {
        self.block(i, k) + VEL + axis
    }

    pub fn force(&self, i: usize, k: usize, axis: usize) -> usize {
        self.block(i, k) + FORCE + axis
    }

    pub fn positions(&self, i: usize, k: usize) -> [usize; 3] {
        std::array::from_fn(|a| self.position(i, k, a))
    }

    pub fn velocities(&self, i: usize, k: usize) -> [usize; 3] {
        std::array::from_fn(|a| self.velocity(i, k, a))
    }

    pub fn forces(&self, i: usize, k: usize) -> [usize; 3] {
        std::array::from_fn(|a| self.force(i, k, a))
    }

    pub fn state(&self, i: usize, k: usize) -> [usize; 6] {
        std::array::from_fn(|c| self.block(i, k) + c)
    }

    pub fn force_epigraph(&self, i: usize, k: usize) -> usize {
        self.block(i, k) + T_FORCE
    }

    pub fn goal_epigraph(&self, i: usize, k: usize) -> usize {
        self.block(i, k) + T_GOAL
    }

    pub fn has_slacks(&self) -> bool {
        self.slack_base.is_some()
    }

    pub fn num_slacks(&self) -> usize {
        if self.has_slacks() {
            self.pairs.len() * self.horizon
        } else {
            0
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Slack index for pair number `pair` (in [`VariableMap::pairs`] order) at step `k`.
    pub fn slack(&self, pair: usize, k: usize) -> Option<usize> {
        self.slack_base.map(|b| b + pair * self.horizon + k)
    }

    pub fn slack_for(&self, i: usize, j: usize, k: usize) -> Option<usize> {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let n = self.num_vehicles;
        let pair = i * (2 * n - i - 1) / 2 + (j - i - 1);
        self.slack(pair, k)
    }

    pub fn slack_indices(&self) -> std::ops::Range<usize> {
        match self.slack_base {
            Some(b) => b..b + self.num_slacks(),
            None => 0..0,
        }
    }

    /// Role of a program variable, or `None` if this map does not own it.
    pub fn role(&self, var: usize) -> Option<VarRole> {
        if var < self.num_base_vars() {
            let block = var / BLOCK;
            let (vehicle, k) = (block / self.horizon, block % self.horizon);
            let offset = var % BLOCK;
            return Some(match offset {
                0..=2 => VarRole::Position { vehicle, k, axis: offset },
                3..=5 => VarRole::Velocity { vehicle, k, axis: offset - VEL },
                6..=8 => VarRole::Force { vehicle, k, axis: offset - FORCE },
                T_FORCE => VarRole::ForceEpigraph { vehicle, k },
                _ => VarRole::GoalEpigraph { vehicle, k },
            });
        }
        if self.slack_indices().contains(&var) {
            let rel = var - self.slack_base.expect("slacks present");
            let (i, j) = self.pairs[rel / self.horizon];
            return Some(VarRole::Slack { i, j, k: rel % self.horizon });
        }
        None
    }

    pub fn name(&self, var: usize) -> String {
        const AXES: [&str; 3] = ["x", "y", "z"];
        match self.role(var) {
            Some(VarRole::Position { vehicle, k, axis }) => format!("{}[{vehicle},{}]", AXES[axis], k + 1),
            Some(VarRole::Velocity { vehicle, k, axis }) => format!("v{}[{vehicle},{}]", AXES[axis], k + 1),
            Some(VarRole::Force { vehicle, k, axis }) => format!("f{}[{vehicle},{}]", AXES[axis], k + 1),
            Some(VarRole::ForceEpigraph { vehicle, k }) => format!("tf[{vehicle},{}]", k + 1),
            Some(VarRole::GoalEpigraph { vehicle, k }) => format!("tg[{vehicle},{}]", k + 1),
            Some(VarRole::Slack { i, j, k }) => format!("s[{i},{j},{}]", k + 1),
            None => format!("x{var}"),
        }
    }

    /// Reads the trajectory out of a primal vector.
    pub fn decode(&self, x: &[f64]) -> Trajectory {
        let mut traj = Trajectory::zeros(self.num_vehicles, self.horizon);
        for i in 0..self.num_vehicles {
            for k in 0..self.horizon {
                let b = self.block(i, k);
                traj.states[i][k] = StateVector::new(
                    Vector3::new(x[b], x[b + 1], x[b + 2]),
                    Vector3::new(x[b + 3], x[b + 4], x[b + 5]),
                );
                traj.inputs[i][k] = InputVector::new(Vector3::new(x[b + 6], x[b + 7], x[b + 8]));
            }
        }
        traj
    }

    /// Builds a primal vector of length `num_vars` from a trajectory, setting
    /// epigraphs to their norms and slacks to the separation shortfall.
    pub fn encode(&self, traj: &Trajectory, scenario: &Scenario, num_vars: usize) -> Vec<f64> {
        let mut x = vec![0.0; num_vars];
        for (i, v) in scenario.vehicles.iter().enumerate() {
            for k in 0..self.horizon {
                let b = self.block(i, k);
                let s = &traj.states[i][k];
                let u = &traj.inputs[i][k];
                x[b..b + 3].copy_from_slice(s.position.as_slice());
                x[b + 3..b + 6].copy_from_slice(s.velocity.as_slice());
                x[b + 6..b + 9].copy_from_slice(u.force.as_slice());
                x[b + T_FORCE] = u.force.norm();
                x[b + T_GOAL] = (s.position - v.goal_position).norm();
            }
        }
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            for k in 0..self.horizon {
                if let Some(s) = self.slack(p, k) {
                    let gap = (traj.position(i, k) - traj.position(j, k)).norm();
                    x[s] = (scenario.safety_distance - gap).max(0.0);
                }
            }
        }
        x
    }
}

/// Convex part of the planning problem: objective epigraphs, dynamics,
/// boundary conditions, speed and force limits, and optional arena box.
pub fn build_base_problem(scenario: &Scenario) -> (ConicProgram, VariableMap) {
    let map = VariableMap::new(scenario);
    let horizon = scenario.horizon;
    let mut prog = ConicProgram::new(map.num_base_vars());

    for (i, v) in scenario.vehicles.iter().enumerate() {
        let model = discretize(v.mass, scenario.dt).expect("validated scenario");
        for k in 0..horizon {
            prog.objective[map.force_epigraph(i, k)] = scenario.force_weight;
            prog.objective[map.goal_epigraph(i, k)] = scenario.goal_weight_slope * (k + 1) as f64;
        }

        // x_{k+1} - A_hat x_k - B_hat u_k = 0
        for k in 0..horizon - 1 {
            let (cur, next, u) = (map.state(i, k), map.state(i, k + 1), map.forces(i, k));
            for (r, &row_var) in next.iter().enumerate() {
                let mut coeffs = vec![(row_var, 1.0)];
                for (c, &var) in cur.iter().enumerate() {
                    let a = model.a_hat[(r, c)];
                    if a != 0.0 {
                        coeffs.push((var, -a));
                    }
                }
                for (c, &var) in u.iter().enumerate() {
                    let b = model.b_hat[(r, c)];
                    if b != 0.0 {
                        coeffs.push((var, -b));
                    }
                }
                prog.add_eq(coeffs, 0.0);
            }
        }

        let pin = |prog: &mut ConicProgram, vars: [usize; 3], value: &Vector3<f64>| {
            for a in 0..3 {
                prog.add_eq(vec![(vars[a], 1.0)], value[a]);
            }
        };
        pin(&mut prog, map.positions(i, 0), &v.start_position);
        pin(&mut prog, map.velocities(i, 0), &v.start_velocity);
        let last = horizon - 1;
        pin(&mut prog, map.positions(i, last), &v.goal_position);
        pin(&mut prog, map.velocities(i, last), &v.goal_velocity);
        pin(&mut prog, map.forces(i, last), &v.goal_force);

        for k in 0..horizon {
            let forces = map.forces(i, k).to_vec();
            prog.add_cone(SocConstraint::new(ConeBound::Var(map.force_epigraph(i, k)), forces.clone()));
            prog.add_cone(SocConstraint::shifted(
                ConeBound::Var(map.goal_epigraph(i, k)),
                map.positions(i, k).to_vec(),
                v.goal_position.as_slice().to_vec(),
            ));
            prog.add_cone(SocConstraint::new(ConeBound::Const(v.v_max), map.velocities(i, k).to_vec()));
            prog.add_cone(SocConstraint::new(ConeBound::Const(v.f_max), forces));
        }

        if let Some(bounds) = &scenario.arena_bounds {
            let (lo, hi) = (bounds.lower(), bounds.upper());
            for k in 0..horizon {
                for (a, var) in map.positions(i, k).into_iter().enumerate() {
                    prog.add_le(vec![(var, 1.0)], hi[a]);
                    prog.add_le(vec![(var, -1.0)], -lo[a]);
                }
            }
        }
    }
    (prog, map)
}

/// Adds one nonnegative slack per pair and step with objective weight `tau`.
pub fn add_slack_columns(prog: &mut ConicProgram, map: &mut VariableMap, tau: f64) -> Result<()> {
    if map.has_slacks() {
        return Err(PlanError::SlackAlreadyAdded);
    }
    map.slack_base = Some(prog.num_vars);
    for _ in 0..map.pairs.len() * map.horizon {
        let s = prog.add_var(tau);
        prog.set_nonneg(s);
    }
    Ok(())
}

/// Changes the penalty weight on every slack column.
pub fn set_slack_penalty(prog: &mut ConicProgram, map: &VariableMap, tau: f64) {
    for s in map.slack_indices() {
        prog.objective[s] = tau;
    }
}

/// Linearization of `d - ||p_i - p_j|| <= s_ijk` at `anchor`, written as
/// `-grad . (p - p_hat) - s <= g(p_hat) - d`.
pub fn linearized_collision_row(
    map: &VariableMap,
    anchor: &Trajectory,
    d: f64,
    i: usize,
    j: usize,
    k: usize,
) -> Result<SparseRow> {
    map.slack_for(i, j, k).ok_or(PlanError::SlackMissing)?;
    separation_gradient(anchor, i, j, k, d)?;
    collision_row_from_positions(map, anchor.position(i, k), anchor.position(j, k), d, i, j, k)
}

/// Same row with the anchor given directly as the two positions.
pub fn collision_row_from_positions(
    map: &VariableMap,
    pi: Vector3<f64>,
    pj: Vector3<f64>,
    d: f64,
    i: usize,
    j: usize,
    k: usize,
) -> Result<SparseRow> {
    let slack = map.slack_for(i, j, k).ok_or(PlanError::SlackMissing)?;
    let g = (pi - pj).norm();
    if g <= DEGENERACY * d {
        return Err(PlanError::DegenerateAnchor { i, j, k, separation: g });
    }
    let n = (pi - pj) / g;
    let mut coeffs = Vec::with_capacity(7);
    for a in 0..3 {
        coeffs.push((map.position(i, k, a), -n[a]));
    }
    for a in 0..3 {
        coeffs.push((map.position(j, k, a), n[a]));
    }
    coeffs.push((slack, -1.0));
    // d - g - n.((x_i - x_j) - (p_i - p_j)) <= s  <=>  -n.(x_i - x_j) - s <= g - n.(p_i - p_j) - d
    let grad_dot_anchor = n.dot(&(pi - pj));
    Ok(SparseRow::new(coeffs, g - grad_dot_anchor - d))
}

pub fn add_linearized_collision_row(
    prog: &mut ConicProgram,
    map: &VariableMap,
    anchor: &Trajectory,
    d: f64,
    i: usize,
    j: usize,
    k: usize,
) -> Result<()> {
    let row = linearized_collision_row(map, anchor, d, i, j, k)?;
    prog.inequalities.push(row);
    Ok(())
}
