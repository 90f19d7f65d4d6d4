//! Interior-point solve of a [`ConicProgram`].
//!
//! The program is translated into the standard form `A x + s = b`,
//! `s in K` of the Clarabel primal-dual interior-point solver, with `K` the
//! product of a zero cone (equalities), a nonnegative orthant (inequalities
//! and sign constraints) and one second-order cone per [`SocConstraint`].
//! Clarabel runs single-threaded here; repeated solves of the same program
//! return bit-identical results.
//!
//! [`residuals`] recomputes constraint defects straight from the program
//! data and never looks at solver internals.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

use crate::error::{PlanError, Result};
use crate::program::{ConeBound, ConicProgram, SocConstraint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub max_iters: u32,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_gap: 1e-8,
            max_iters: 200,
            verbose: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_feas > 0.0 && self.tol_gap > 0.0) {
            return Err(PlanError::Domain("solver tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(PlanError::Domain("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::IterationLimit => "iteration_limit",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scaled residuals reported by the interior-point method at termination.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveResiduals {
    pub primal_feas: f64,
    pub dual_feas: f64,
    pub duality_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSolution {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
    pub residuals: SolveResiduals,
    pub iterations: u32,
    /// Dual ray proving primal infeasibility, when `status` is `Infeasible`.
    pub certificate: Option<Vec<f64>>,
}

impl SolverSolution {
    fn without_solve(status: SolveStatus, num_vars: usize) -> Self {
        Self {
            status,
            primal: vec![0.0; num_vars],
            objective: f64::NAN,
            residuals: SolveResiduals::default(),
            iterations: 0,
            certificate: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Constraint defects of a point, computed from the raw program rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// Largest of equality defects, inequality excesses and sign violations.
    pub primal_feas: f64,
    /// Largest `||x[v] - shift|| - bound`, clipped at zero.
    pub cone_violation: f64,
    pub objective: f64,
}

pub fn residuals(program: &ConicProgram, primal: &[f64]) -> Result<ResidualReport> {
    if primal.len() != program.num_vars {
        return Err(PlanError::LengthMismatch {
            expected: program.num_vars,
            actual: primal.len(),
        });
    }
    let mut feas = 0.0_f64;
    for row in &program.equalities {
        feas = feas.max((row.eval(primal) - row.rhs).abs());
    }
    for row in &program.inequalities {
        feas = feas.max(row.eval(primal) - row.rhs);
    }
    for &j in &program.nonneg_vars {
        feas = feas.max(-primal[j]);
    }
    let cone = program
        .cones
        .iter()
        .map(|c| c.norm(primal) - c.bound.value(primal))
        .fold(0.0_f64, f64::max);
    Ok(ResidualReport {
        primal_feas: feas.max(0.0),
        cone_violation: cone,
        objective: program.objective_value(primal),
    })
}

/// Accepts near-optimal terminations whose independently rechecked point is
/// feasible to this absolute level.
const REDUCED_ACCURACY_FEAS: f64 = 1e-6;

pub fn solve(program: &ConicProgram, settings: &SolverSettings) -> Result<SolverSolution> {
    program.validate()?;
    settings.validate()?;
    let n = program.num_vars;

    // Presolve: rows with no coefficients are either vacuous or contradictory.
    for row in &program.equalities {
        if row.coeffs.iter().all(|&(_, a)| a == 0.0) && row.rhs.abs() > settings.tol_feas {
            return Ok(SolverSolution::without_solve(SolveStatus::Infeasible, n));
        }
    }
    for row in &program.inequalities {
        if row.coeffs.iter().all(|&(_, a)| a == 0.0) && row.rhs < -settings.tol_feas {
            return Ok(SolverSolution::without_solve(SolveStatus::Infeasible, n));
        }
    }
    let nonempty = |row: &&crate::program::SparseRow| row.coeffs.iter().any(|&(_, a)| a != 0.0);

    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut m = 0usize;
    let mut push_row = |coeffs: &[(usize, f64)], rhs: f64, b: &mut Vec<f64>, m: &mut usize| {
        for &(j, a) in coeffs {
            if a != 0.0 {
                rows.push(*m);
                cols.push(j);
                vals.push(a);
            }
        }
        b.push(rhs);
        *m += 1;
    };

    let eqs: Vec<_> = program.equalities.iter().filter(nonempty).collect();
    for row in &eqs {
        push_row(&row.coeffs, row.rhs, &mut b, &mut m);
    }
    if !eqs.is_empty() {
        cones.push(SupportedConeT::ZeroConeT(eqs.len()));
    }

    let ineqs: Vec<_> = program.inequalities.iter().filter(nonempty).collect();
    for row in &ineqs {
        push_row(&row.coeffs, row.rhs, &mut b, &mut m);
    }
    for &j in &program.nonneg_vars {
        push_row(&[(j, -1.0)], 0.0, &mut b, &mut m);
    }
    let orthant = ineqs.len() + program.nonneg_vars.len();
    if orthant > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(orthant));
    }

    for cone in &program.cones {
        push_soc(cone, &mut |c, r| push_row(c, r, &mut b, &mut m));
        cones.push(SupportedConeT::SecondOrderConeT(cone.vector.len() + 1));
    }

    let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
    let p = CscMatrix::new_from_triplets(n, n, Vec::new(), Vec::new(), Vec::new());
    let clarabel_settings = DefaultSettings {
        tol_feas: settings.tol_feas,
        tol_gap_abs: settings.tol_gap,
        tol_gap_rel: settings.tol_gap,
        max_iter: settings.max_iters,
        verbose: settings.verbose,
        max_threads: 1,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p, &program.objective, &a, &b, &cones, clarabel_settings)
        .map_err(|e| PlanError::Solver(e.to_string()))?;
    solver.solve();

    let sol = &solver.solution;
    let info = &solver.info;
    let residuals = SolveResiduals {
        primal_feas: info.res_primal,
        dual_feas: info.res_dual,
        duality_gap: info.gap_abs.min(info.gap_rel),
    };
    let primal = sol.x.clone();
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => {
            let check = residuals_or_inf(program, &primal);
            if check <= REDUCED_ACCURACY_FEAS {
                SolveStatus::Optimal
            } else {
                SolveStatus::NumericalFailure
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::IterationLimit,
        _ => SolveStatus::NumericalFailure,
    };
    let certificate = (status == SolveStatus::Infeasible).then(|| sol.z.clone());
    let objective = if status == SolveStatus::Optimal {
        program.objective_value(&primal)
    } else {
        f64::NAN
    };
    Ok(SolverSolution {
        status,
        primal,
        objective,
        residuals,
        iterations: sol.iterations,
        certificate,
    })
}

fn residuals_or_inf(program: &ConicProgram, x: &[f64]) -> f64 {
    residuals(program, x)
        .map(|r| r.primal_feas.max(r.cone_violation))
        .unwrap_or(f64::INFINITY)
}

type RowSink<'a> = dyn FnMut(&[(usize, f64)], f64) + 'a;

/// Cone rows for `s = b - A x`: `s_0 = bound` and `s_l = x[v_l] - shift_l`.
fn push_soc(cone: &SocConstraint, push: &mut RowSink<'_>) {
    match cone.bound {
        ConeBound::Var(t) => push(&[(t, -1.0)], 0.0),
        ConeBound::Const(c) => push(&[], c),
    }
    for (&j, &s) in cone.vector.iter().zip(&cone.shift) {
        push(&[(j, -1.0)], -s);
    }
}
