//! Diameter bound estimates from sampled Ricci curvatures.
//!
//! Run with `cargo run --release --example diameter_bound`.

use sr_curvature::canonical::CanonicalOptions;
use sr_curvature::connection::{Connection, ConnectionKind};
use sr_curvature::lq::diameter_bound;
use sr_curvature::zoo;

fn main() -> sr_curvature::Result<()> {
    for name in ["su2", "surface:4", "quaternionic-heisenberg", "heisenberg"] {
        let entry = zoo::lookup(name)?;
        let conn = Connection::build(entry.model.clone(), ConnectionKind::Nice);
        let m = &entry.model;
        let samples = entry.region.sample(m.dim(), m.d1(), 24, 0);
        let b = diameter_bound(&conn, &samples, &CanonicalOptions::default())?;
        println!("{name}: best bound {:?} ({} samples, {} skipped)", b.best, b.samples, b.skipped);
        for r in &b.routes {
            println!("    {:?} row {:?}: k = {:.6?} bound {:?} {}", r.route, r.row, r.k, r.bound, r.reason.as_deref().unwrap_or(""));
        }
    }
    Ok(())
}
