//! Compares the nested polygon approximation of the disk with the disk
//! itself, by level.
//!
//! ```text
//! cargo run --example polyhedral_approx -- [samples]
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarmplan::micp::{cap_angle, poly_lorentz2_rows, poly_membership};
use swarmplan::program::{ConeBound, ConicProgram};

fn main() -> swarmplan::Result<()> {
    let samples: usize = std::env::args().nth(1).map_or(100_000, |a| a.parse().expect("samples"));
    let d = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let points: Vec<(f64, f64)> = (0..samples)
        .map(|_| (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)))
        .collect();
    let in_disk = points.iter().filter(|(x, y)| x.hypot(*y) <= d).count();

    println!("level  sides  rows  vertex_radius  area_ratio");
    for level in 1..=6 {
        let mut prog = ConicProgram::new(2);
        let block = poly_lorentz2_rows(&mut prog, level, 0, 1, ConeBound::Const(d))?;
        let rows = block.equalities.len() + block.inequalities.len();
        let in_poly = points.iter().filter(|(x, y)| poly_membership(*x, *y, d, level)).count();
        println!(
            "{level:5}  {:5}  {rows:4}  {:13.6}  {:10.6}",
            1usize << (level + 1),
            d / cap_angle(level).cos(),
            in_poly as f64 / in_disk as f64
        );
    }
    Ok(())
}
