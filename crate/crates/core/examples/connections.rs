//! Compares the two compatible connections on the Heisenberg group: torsion,
//! curvature and the identity checks each one satisfies.
//!
//! Run with `cargo run --example connections`.

use sr_curvature::connection::{Connection, ConnectionKind};
use sr_curvature::zoo;

fn main() -> sr_curvature::Result<()> {
    let entry = zoo::heisenberg();
    let x = vec![0.4, -0.3, 0.1];
    for kind in [ConnectionKind::Nice, ConnectionKind::Group] {
        let conn = Connection::build(entry.model.clone(), kind);
        let t = conn.torsion(&x)?;
        let r = conn.curvature(&x)?;
        let t_norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        println!("{}: |T| = {t_norm:.6}, |R| = {r_norm:.6}", conn.label());

        let report = conn.validate_identities(&[x.clone(), vec![1.0, 2.0, -0.5]])?;
        for c in &report.checks {
            println!("    {:<40} {:.2e}", c.identity, c.max_residual);
        }
    }
    Ok(())
}
