//! Canonical Ricci curvatures of H-type groups and of a contact structure,
//! with their normalization residuals.
//!
//! Run with `cargo run --release --example canonical_ricci`.

use sr_curvature::canonical::{canonical_curvature, final_box_ricci, CanonicalOptions};
use sr_curvature::connection::{Connection, ConnectionKind};
use sr_curvature::model::CovectorPoint;
use sr_curvature::zoo;

fn main() -> sr_curvature::Result<()> {
    let opts = CanonicalOptions::default();
    for (entry, x, h) in [
        (zoo::heisenberg(), vec![0.1, 0.2, 0.0], vec![0.6, 0.8, 1.5]),
        (zoo::contact3d(1.0), vec![0.2, -0.1, 0.3], vec![1.0, 0.0, 0.7]),
        (zoo::quaternionic_heisenberg(1), vec![0.0; 7], vec![1.0, 0.0, 0.0, 0.0, 0.5, -0.5, std::f64::consts::FRAC_1_SQRT_2]),
    ] {
        let conn = Connection::build(entry.model.clone(), ConnectionKind::Nice);
        let p = CovectorPoint::new(x, h);
        let c = canonical_curvature(&conn, &p, &opts)?;
        println!("{} at h = {:?}: {}", entry.name, &p.h[entry.model.d1()..], c.diagram.label());
        for r in &c.ricci {
            println!("    Ric^({},{}) = {:>14.9}", r.a, r.b, r.value);
        }
        for inv in &entry.invariants {
            println!("    closed form {inv:?} -> {:.9}", (inv.eval)(&p));
        }
        println!("    largest normalization residual {:.1e}", c.normalization.max_residual());
        let fb = final_box_ricci(&conn, &p, opts.rank_tol)?;
        println!("    last box: rank {}, Ricci {:.9}", fb.rank, fb.ricci);
    }
    Ok(())
}
