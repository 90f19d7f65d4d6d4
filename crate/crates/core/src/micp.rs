//! Mixed-integer baseline: big-M disjunctions over the faces of a cube.
//!
//! Vehicles `i` and `j` are separated at step `k` if some coordinate gap is
//! at least `d`. Each of the six faces `±(p_i - p_j)[axis] >= d` gets a
//! binary `u` that switches it off when set to 1:
//!
//! ```text
//! ±(p_i - p_j)[axis] >= d - M[axis] u,    u1 + ... + u6 <= 5
//! ```
//!
//! The cube contains the sphere of radius `d`, so the reformulation is
//! conservative. The module also carries the polyhedral approximation of
//! the 2-D Lorentz cone that generalizes the cube to finer polygons.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{PlanError, Result};
use crate::program::{build_base_problem, ConeBound, ConicProgram, SparseRow, VariableMap};
use crate::scenario::{ArenaBounds, Scenario};
use crate::solver::{solve, SolveStatus, SolverSettings, SolverSolution};

/// Rotation angle of level `nu` of the polygon recurrence.
fn level_angle(nu: usize) -> f64 {
    PI / 2f64.powi(nu as i32 + 2)
}

/// Half-angle of the final polygon sector for `level` rotations.
pub fn cap_angle(level: usize) -> f64 {
    PI / 2f64.powi(level as i32 + 1)
}

/// Auxiliary variables and rows of one polygon block.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyApproxBlock {
    pub level: usize,
    /// `alpha_0..alpha_L` followed by `beta_0..beta_L`.
    pub aux_vars: Vec<usize>,
    pub equalities: Vec<SparseRow>,
    pub inequalities: Vec<SparseRow>,
}

impl PolyApproxBlock {
    pub fn alpha(&self, nu: usize) -> usize {
        self.aux_vars[nu]
    }

    pub fn beta(&self, nu: usize) -> usize {
        self.aux_vars[self.level + 1 + nu]
    }
}

/// Appends the polygon outer approximation of `||(x, y)|| <= bound` to
/// `prog`. Points with norm at most `bound` are always feasible; the
/// polygon reaches out to `bound / cos(cap_angle(level))`.
pub fn poly_lorentz2_rows(
    prog: &mut ConicProgram,
    level: usize,
    x: usize,
    y: usize,
    bound: ConeBound,
) -> Result<PolyApproxBlock> {
    if level == 0 {
        return Err(PlanError::Domain("polygon level must be at least 1".into()));
    }
    let aux_vars: Vec<usize> = (0..2 * (level + 1)).map(|_| prog.add_var(0.0)).collect();
    let mut block = PolyApproxBlock {
        level,
        aux_vars,
        equalities: Vec::new(),
        inequalities: Vec::new(),
    };
    let (a0, b0) = (block.alpha(0), block.beta(0));
    for (v, aux) in [(x, a0), (y, b0)] {
        block.inequalities.push(SparseRow::new(vec![(v, 1.0), (aux, -1.0)], 0.0));
        block.inequalities.push(SparseRow::new(vec![(v, -1.0), (aux, -1.0)], 0.0));
    }
    for nu in 0..level {
        let (s, c) = level_angle(nu).sin_cos();
        let (a, b, a1, b1) = (block.alpha(nu), block.beta(nu), block.alpha(nu + 1), block.beta(nu + 1));
        block
            .equalities
            .push(SparseRow::new(vec![(a1, 1.0), (a, -c), (b, -s)], 0.0));
        // b1 >= |-s a + c b|
        block
            .inequalities
            .push(SparseRow::new(vec![(a, -s), (b, c), (b1, -1.0)], 0.0));
        block
            .inequalities
            .push(SparseRow::new(vec![(a, s), (b, -c), (b1, -1.0)], 0.0));
    }
    let (al, bl) = (block.alpha(level), block.beta(level));
    block.inequalities.push(match bound {
        ConeBound::Var(t) => SparseRow::new(vec![(al, 1.0), (t, -1.0)], 0.0),
        ConeBound::Const(d) => SparseRow::new(vec![(al, 1.0)], d),
    });
    block
        .inequalities
        .push(SparseRow::new(vec![(bl, 1.0), (al, -cap_angle(level).tan())], 0.0));
    prog.equalities.extend(block.equalities.iter().cloned());
    prog.inequalities.extend(block.inequalities.iter().cloned());
    Ok(block)
}

/// Decides membership of `(x, y)` in the level-`level` polygon of radius
/// `d` by running the recurrence with the smallest feasible auxiliaries.
pub fn poly_membership(x: f64, y: f64, d: f64, level: usize) -> bool {
    let (mut alpha, mut beta) = (x.abs(), y.abs());
    for nu in 0..level {
        let (s, c) = level_angle(nu).sin_cos();
        (alpha, beta) = (c * alpha + s * beta, (-s * alpha + c * beta).abs());
    }
    let slack = 1e-12 * d;
    alpha <= d + slack && beta <= cap_angle(level).tan() * alpha + slack
}

/// Face `f` in `0..6` as `(axis, sign)`: the face holds when
/// `sign * (p_i - p_j)[axis] >= d`.
pub fn face(f: usize) -> (usize, f64) {
    (f / 2, if f.is_multiple_of(2) { 1.0 } else { -1.0 })
}

/// Largest face margin `sign * (p_i - p_j)[axis] - d` and its face.
pub fn best_face(pi: &Vector3<f64>, pj: &Vector3<f64>, d: f64) -> (usize, f64) {
    (0..6)
        .map(|f| {
            let (axis, sign) = face(f);
            (f, sign * (pi[axis] - pj[axis]) - d)
        })
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
}

/// One pair and step of the cube reformulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Disjunction {
    pub pair: (usize, usize),
    pub k: usize,
    pub face_vars: [usize; 6],
    pub big_m: Vector3<f64>,
}

impl Disjunction {
    /// Hard row for face `f` (its binary fixed to 0).
    pub fn face_row(&self, map: &VariableMap, f: usize, d: f64) -> SparseRow {
        let (axis, sign) = face(f);
        let (i, j) = self.pair;
        SparseRow::new(
            vec![(map.position(i, self.k, axis), -sign), (map.position(j, self.k, axis), sign)],
            -d,
        )
    }
}

/// Relaxed mixed-integer program and the data needed to branch on it.
#[derive(Debug, Clone)]
pub struct CubicMicp {
    /// Convex part with the position box but no binaries.
    pub base: ConicProgram,
    /// `base` plus binaries in `[0, 1]`, big-M rows and cardinality rows.
    pub program: ConicProgram,
    pub map: VariableMap,
    pub disjunctions: Vec<Disjunction>,
    pub binaries: Vec<usize>,
    pub bounds: ArenaBounds,
    pub safety_distance: f64,
}

impl CubicMicp {
    pub fn num_binaries(&self) -> usize {
        self.binaries.len()
    }
}

/// Position box used for the big-M values: the arena if the scenario has
/// one, else the start/goal hull padded by `2d` on every side.
pub fn micp_bounds(scenario: &Scenario) -> ArenaBounds {
    if let Some(b) = scenario.arena_bounds {
        return b;
    }
    let pad = Vector3::repeat(2.0 * scenario.safety_distance);
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for v in &scenario.vehicles {
        for p in [v.start_position, v.goal_position] {
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
    }
    ArenaBounds::from_corners(lo - pad, hi + pad)
}

/// Builds the relaxed cube reformulation. The positions are confined to
/// [`micp_bounds`], which makes `M = 2 (extent + d)` per axis large enough
/// to switch any face off.
pub fn build_cubic_micp(scenario: &Scenario) -> Result<CubicMicp> {
    scenario.validate()?;
    let bounds = micp_bounds(scenario);
    let boxed = Scenario {
        arena_bounds: Some(bounds),
        ..scenario.clone()
    };
    let (base, map) = build_base_problem(&boxed);
    let d = scenario.safety_distance;
    let big_m = (bounds.upper() - bounds.lower() + Vector3::repeat(d)) * 2.0;

    let mut program = base.clone();
    let mut disjunctions = Vec::new();
    let mut binaries = Vec::new();
    for k in 0..scenario.horizon {
        for pair in scenario.pairs() {
            let face_vars: [usize; 6] = std::array::from_fn(|_| program.add_var(0.0));
            let disj = Disjunction {
                pair,
                k,
                face_vars,
                big_m,
            };
            for (f, &u) in face_vars.iter().enumerate() {
                program.set_nonneg(u);
                program.add_le(vec![(u, 1.0)], 1.0);
                let mut row = disj.face_row(&map, f, d);
                row.coeffs.push((u, -big_m[face(f).0]));
                program.inequalities.push(row);
            }
            program.add_le(face_vars.iter().map(|&u| (u, 1.0)).collect(), 5.0);
            binaries.extend(face_vars);
            disjunctions.push(disj);
        }
    }
    Ok(CubicMicp {
        base,
        program,
        map,
        disjunctions,
        binaries,
        bounds,
        safety_distance: d,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BnbSettings {
    pub max_nodes: usize,
    /// Larger instances are refused before any solve.
    pub max_binaries: usize,
    /// Nodes whose bound is within this of the incumbent are pruned.
    pub gap_tol: f64,
    pub solver: SolverSettings,
}

impl Default for BnbSettings {
    fn default() -> Self {
        Self {
            max_nodes: 20_000,
            max_binaries: 360,
            gap_tol: 1e-6,
            solver: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BnbStatus {
    Optimal,
    Infeasible,
    NodeLimit,
}

impl BnbStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            BnbStatus::Optimal => "optimal",
            BnbStatus::Infeasible => "infeasible",
            BnbStatus::NodeLimit => "node_limit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeOutcome {
    Infeasible,
    Pruned,
    Incumbent,
    Dominated,
    Branched,
}

/// One processed node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLogEntry {
    pub node: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub bound: f64,
    pub outcome: NodeOutcome,
    pub incumbent: f64,
}

/// Open node: a partial assignment `(binary position, value)` and its
/// parent's relaxation bound.
#[derive(Debug, Clone)]
struct BnbNode {
    id: usize,
    parent: Option<usize>,
    fixed: Vec<(usize, bool)>,
    bound: f64,
    depth: usize,
}

impl PartialEq for BnbNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for BnbNode {}

impl PartialOrd for BnbNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BnbNode {
    // Max-heap: smallest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

#[derive(Debug, Clone)]
pub struct BnbResult {
    pub status: BnbStatus,
    /// Best integral solution found, over all program variables.
    pub incumbent: Option<SolverSolution>,
    /// Binary values per disjunction for the incumbent.
    pub assignment: Vec<[u8; 6]>,
    pub trajectory: Option<Trajectory>,
    pub objective: f64,
    pub root_bound: f64,
    pub nodes: usize,
    pub log: Vec<NodeLogEntry>,
    pub wall_time: f64,
}

/// Rounds a relaxation whose positions already satisfy every disjunction:
/// the best face of each gets `u = 0`, the others `u = 1`.
fn implied_assignment(micp: &CubicMicp, traj: &Trajectory) -> Option<Vec<[u8; 6]>> {
    let d = micp.safety_distance;
    micp.disjunctions
        .iter()
        .map(|disj| {
            let (i, j) = disj.pair;
            let (f, margin) = best_face(&traj.position(i, disj.k), &traj.position(j, disj.k), d);
            (margin >= -1e-7).then(|| {
                let mut u = [1u8; 6];
                u[f] = 0;
                u
            })
        })
        .collect()
}

/// Best-bound branch and bound over the face binaries.
///
/// A node whose relaxed positions satisfy every disjunction is integral up
/// to relabeling the binaries and becomes an incumbent. Otherwise the most
/// fractional binary among the violated disjunctions is fixed to 0 and to 1.
pub fn branch_and_bound(micp: &CubicMicp, settings: &BnbSettings) -> Result<BnbResult> {
    if micp.num_binaries() > settings.max_binaries {
        return Err(PlanError::SizeGuard(format!(
            "{} binaries exceed the limit of {}; the mixed-integer baseline is meant for small instances",
            micp.num_binaries(),
            settings.max_binaries
        )));
    }
    let started = Instant::now();
    let d = micp.safety_distance;
    let mut heap = BinaryHeap::new();
    heap.push(BnbNode {
        id: 0,
        parent: None,
        fixed: Vec::new(),
        bound: f64::NEG_INFINITY,
        depth: 0,
    });
    let mut next_id = 1;
    let mut best: Option<(f64, SolverSolution, Vec<[u8; 6]>)> = None;
    let mut log = Vec::new();
    let mut root_bound = f64::NAN;
    let mut processed = 0;

    while let Some(node) = heap.pop() {
        let incumbent_value = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if node.bound >= incumbent_value - settings.gap_tol {
            continue;
        }
        if processed >= settings.max_nodes {
            heap.push(node);
            break;
        }
        processed += 1;

        let mut prog = micp.program.clone();
        for &(b, value) in &node.fixed {
            prog.add_eq(vec![(micp.binaries[b], 1.0)], if value { 1.0 } else { 0.0 });
        }
        let sol = solve(&prog, &settings.solver)?;
        let mut entry = NodeLogEntry {
            node: node.id,
            parent: node.parent,
            depth: node.depth,
            bound: sol.objective,
            outcome: NodeOutcome::Infeasible,
            incumbent: incumbent_value,
        };
        match sol.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                entry.bound = f64::INFINITY;
                log.push(entry);
                continue;
            }
            other => {
                return Err(PlanError::Solver(format!("node {} relaxation ended with status {other}", node.id)));
            }
        }
        if node.id == 0 {
            root_bound = sol.objective;
        }
        if sol.objective >= incumbent_value - settings.gap_tol {
            entry.outcome = NodeOutcome::Pruned;
            log.push(entry);
            continue;
        }

        let traj = micp.map.decode(&sol.primal);
        if let Some(assignment) = implied_assignment(micp, &traj) {
            entry.outcome = NodeOutcome::Incumbent;
            entry.incumbent = sol.objective;
            log.push(entry);
            let mut primal = sol.primal.clone();
            for (disj, u) in micp.disjunctions.iter().zip(&assignment) {
                for (&var, &val) in disj.face_vars.iter().zip(u) {
                    primal[var] = val as f64;
                }
            }
            let objective = sol.objective;
            best = Some((objective, SolverSolution { primal, ..sol }, assignment));
            continue;
        }

        let fixed: Vec<bool> = {
            let mut f = vec![false; micp.num_binaries()];
            for &(b, _) in &node.fixed {
                f[b] = true;
            }
            f
        };
        let mut pick: Option<(usize, f64)> = None;
        for (n, disj) in micp.disjunctions.iter().enumerate() {
            let (i, j) = disj.pair;
            let (_, margin) = best_face(&traj.position(i, disj.k), &traj.position(j, disj.k), d);
            if margin >= -1e-7 {
                continue;
            }
            for f in 0..6 {
                let b = n * 6 + f;
                if fixed[b] {
                    continue;
                }
                let frac = (sol.primal[micp.binaries[b]] - 0.5).abs();
                if pick.is_none_or(|(_, best_frac)| frac < best_frac) {
                    pick = Some((b, frac));
                }
            }
        }
        let Some((b, _)) = pick else {
            // Every binary of some violated disjunction is fixed, which the
            // fixed rows make infeasible; treat as dominated.
            entry.outcome = NodeOutcome::Dominated;
            log.push(entry);
            continue;
        };
        entry.outcome = NodeOutcome::Branched;
        log.push(entry);
        for value in [false, true] {
            let mut child_fixed = node.fixed.clone();
            child_fixed.push((b, value));
            heap.push(BnbNode {
                id: next_id,
                parent: Some(node.id),
                fixed: child_fixed,
                bound: sol.objective,
                depth: node.depth + 1,
            });
            next_id += 1;
        }
    }

    let open = heap
        .iter()
        .any(|n| n.bound < best.as_ref().map_or(f64::INFINITY, |b| b.0) - settings.gap_tol);
    let status = match (&best, open) {
        (_, true) => BnbStatus::NodeLimit,
        (Some(_), false) => BnbStatus::Optimal,
        (None, false) => BnbStatus::Infeasible,
    };
    let (objective, incumbent, assignment) = match best {
        Some((obj, sol, assign)) => (obj, Some(sol), assign),
        None => (f64::INFINITY, None, Vec::new()),
    };
    Ok(BnbResult {
        status,
        trajectory: incumbent.as_ref().map(|s| micp.map.decode(&s.primal)),
        incumbent,
        assignment,
        objective,
        root_bound,
        nodes: processed,
        log,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Largest number of face selections [`enumerate_exhaustive`] will try.
pub const ENUMERATION_LIMIT: usize = 10_000;

#[derive(Debug, Clone)]
pub struct EnumerationResult {
    /// Best objective, infinite if no selection is feasible.
    pub objective: f64,
    pub trajectory: Option<Trajectory>,
    /// Active face per disjunction for the best selection.
    pub faces: Vec<usize>,
    pub solves: usize,
}

/// Solves the convex program once for every choice of one hard face per
/// disjunction and keeps the best.
pub fn enumerate_exhaustive(micp: &CubicMicp, settings: &SolverSettings) -> Result<EnumerationResult> {
    let count = micp.disjunctions.len();
    let total = (0..count).try_fold(1usize, |acc, _| acc.checked_mul(6).filter(|&t| t <= ENUMERATION_LIMIT));
    let Some(total) = total else {
        return Err(PlanError::SizeGuard(format!(
            "6^{count} face selections exceed the enumeration limit of {ENUMERATION_LIMIT}"
        )));
    };
    let d = micp.safety_distance;
    let mut result = EnumerationResult {
        objective: f64::INFINITY,
        trajectory: None,
        faces: Vec::new(),
        solves: 0,
    };
    for code in 0..total {
        let mut rest = code;
        let faces: Vec<usize> = (0..count)
            .map(|_| {
                let f = rest % 6;
                rest /= 6;
                f
            })
            .collect();
        let mut prog = micp.base.clone();
        for (disj, &f) in micp.disjunctions.iter().zip(&faces) {
            prog.inequalities.push(disj.face_row(&micp.map, f, d));
        }
        let sol = solve(&prog, settings)?;
        result.solves += 1;
        match sol.status {
            SolveStatus::Optimal if sol.objective < result.objective => {
                result.objective = sol.objective;
                result.trajectory = Some(micp.map.decode(&sol.primal));
                result.faces = faces;
            }
            SolveStatus::Optimal | SolveStatus::Infeasible => {}
            other => return Err(PlanError::Solver(format!("face selection {code} ended with status {other}"))),
        }
    }
    Ok(result)
}

/// Writes `pair_i,pair_j,k,u1,...,u6` with 1-based `k`.
pub fn write_binary_dump_csv<W: Write>(micp: &CubicMicp, assignment: &[[u8; 6]], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["pair_i", "pair_j", "k", "u1", "u2", "u3", "u4", "u5", "u6"])?;
    for (disj, u) in micp.disjunctions.iter().zip(assignment) {
        let mut rec = vec![disj.pair.0.to_string(), disj.pair.1.to_string(), (disj.k + 1).to_string()];
        rec.extend(u.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `node,parent,depth,bound,outcome,incumbent`.
pub fn write_node_log_csv<W: Write>(log: &[NodeLogEntry], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["node", "parent", "depth", "bound", "outcome", "incumbent"])?;
    for e in log {
        let outcome = serde_json::to_value(e.outcome)?;
        w.write_record([
            e.node.to_string(),
            e.parent.map(|p| p.to_string()).unwrap_or_default(),
            e.depth.to_string(),
            e.bound.to_string(),
            outcome.as_str().unwrap_or_default().to_string(),
            e.incumbent.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
