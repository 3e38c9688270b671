//! First conjugate times of constant-curvature LQ problems, compared with
//! their closed forms.
//!
//! Run with `cargo run --example lq_conjugate_time`.

use std::f64::consts::PI;

use sr_curvature::lq::{bm_polynomial_check, conjugate_time, LqProblem};
use sr_curvature::twist::YoungDiagram;

fn main() -> sr_curvature::Result<()> {
    println!("single box, potential k: expected pi / sqrt(k)");
    for k in [0.25, 1.0, 4.0, 9.0] {
        let t = conjugate_time(&LqProblem::row(&[k]), 20.0, 1e-12)?.unwrap();
        println!("    k = {k:<5} t_c = {t:.10}  ({:.10})", PI / f64::sqrt(k));
    }

    println!("row of two boxes, potential (k, 0): expected 2 pi / sqrt(k)");
    for k in [1.0, 4.0] {
        let t = conjugate_time(&LqProblem::row(&[k, 0.0]), 20.0, 1e-12)?.unwrap();
        println!("    k = {k:<5} t_c = {t:.10}  ({:.10})", 2.0 * PI / f64::sqrt(k));
    }

    let free = LqProblem::young(&YoungDiagram::new(vec![2, 1]));
    println!("Y(2,1) without potential: {:?}", conjugate_time(&free, 50.0, 1e-10)?);

    for k in [[1.0, 0.0], [1.0, -1.0], [-1.0, 0.0]] {
        let c = bm_polynomial_check(&k)?;
        println!("comparison polynomial for {k:?}: simple imaginary root {}", c.has_simple_imaginary_root);
    }
    Ok(())
}
