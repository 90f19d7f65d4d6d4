//! Solves a small second-order cone program directly: the point of the unit
//! ball around `c` closest to `p`, restricted to a half-space.
//!
//! ```text
//! cargo run --example conic_solve
//! ```

use swarmplan::program::{ConeBound, ConicProgram, SocConstraint};
use swarmplan::solver::{residuals, solve, SolverSettings};

fn main() -> swarmplan::Result<()> {
    let p = [3.0, 1.0, 0.5];
    let c = [0.0, 0.0, 0.0];

    // Variables x (3) and t; minimize t with ||x - p|| <= t, ||x - c|| <= 1, x0 + x1 <= 0.5.
    let mut prog = ConicProgram::new(3);
    let t = prog.add_var(1.0);
    prog.add_cone(SocConstraint::shifted(ConeBound::Var(t), vec![0, 1, 2], p.to_vec()));
    prog.add_cone(SocConstraint::shifted(ConeBound::Const(1.0), vec![0, 1, 2], c.to_vec()));
    prog.add_le(vec![(0, 1.0), (1, 1.0)], 0.5);

    let sol = solve(&prog, &SolverSettings::default())?;
    println!("status {} after {} iterations", sol.status, sol.iterations);
    println!("x = [{:.6}, {:.6}, {:.6}]", sol.primal[0], sol.primal[1], sol.primal[2]);
    println!("distance {:.6}", sol.objective);
    let check = residuals(&prog, &sol.primal)?;
    println!(
        "recomputed: primal defect {:.2e}, cone violation {:.2e}, objective {:.6}",
        check.primal_feas, check.cone_violation, check.objective
    );
    Ok(())
}
