//! Walks through the built-in models and checks their closed-form Ricci
//! values on a few random covectors.
//!
//! Run with `cargo run --release --example zoo_tour`.

use sr_curvature::canonical::{canonical_curvature, CanonicalOptions};
use sr_curvature::connection::{Connection, ConnectionKind};
use sr_curvature::twist::YoungDiagram;
use sr_curvature::zoo;

fn main() -> sr_curvature::Result<()> {
    for name in ["euclidean:3", "surface:-1", "heisenberg", "heisenberg:2", "contact3d:2", "su2", "martinet", "quaternionic-heisenberg"] {
        let entry = zoo::lookup(name)?;
        let m = &entry.model;
        let conn = Connection::build(m.clone(), ConnectionKind::Nice);
        let mut worst: f64 = 0.0;
        let mut done = 0;
        for p in entry.region.sample(m.dim(), m.d1(), 6, 1) {
            let Ok(c) = canonical_curvature(&conn, &p, &CanonicalOptions::default()) else { continue };
            done += 1;
            for inv in &entry.invariants {
                if let Some(v) = c.ricci(inv.block.0, inv.block.1) {
                    worst = worst.max((v - (inv.eval)(&p)).abs());
                }
            }
        }
        println!(
            "{:<26} dim {} rank {} generic {:<8} invariants {} covectors {done} worst error {worst:.1e}",
            entry.name,
            m.dim(),
            m.d1(),
            YoungDiagram::new(entry.declared_diagram.clone()).label(),
            entry.invariants.len()
        );
    }
    Ok(())
}
