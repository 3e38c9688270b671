//! Twist polynomials and Young diagrams of Martinet covectors on both sides
//! of the singular surface `x = 0`.
//!
//! Run with `cargo run --example young_diagram`.

use sr_curvature::connection::{Connection, ConnectionKind};
use sr_curvature::model::CovectorPoint;
use sr_curvature::twist::{classify, classify_point, twist_polynomials, DEFAULT_RANK_TOL};
use sr_curvature::zoo;

fn main() -> sr_curvature::Result<()> {
    let entry = zoo::martinet();
    let conn = Connection::build(entry.model.clone(), ConnectionKind::Nice);

    for x in [-0.5, -1e-2, 0.0, 1e-2, 0.5] {
        let p = CovectorPoint::new(vec![x, 0.2, 0.0], vec![0.8, -0.6, 1.0]);
        let c = classify_point(&conn, &p, DEFAULT_RANK_TOL)?;
        let ranks: Vec<usize> = c.ranks.iter().map(|s| s.rank).collect();
        println!(
            "x = {x:>6}: {:<8} ranks {ranks:?} ample {} irregular {} uncertain {}",
            c.diagram.label(),
            c.ample,
            c.irregular,
            c.uncertain
        );
    }

    let p = CovectorPoint::new(vec![0.3, 0.0, 0.0], vec![1.0, 0.0, 0.5]);
    let t = twist_polynomials(&conn, &p, 2)?;
    println!("P_1 at {:?}:\n{}", p.x, t.polys[1]);

    // a short window crossing x = 0 is not equiregular
    let crossing = CovectorPoint::new(vec![-0.0123, 0.0, 0.0], vec![1.0, 0.0, 0.5]);
    let w = classify(&conn, &crossing, 0.05, 7, Some(&entry.declared_diagram), DEFAULT_RANK_TOL)?;
    println!("window through x = 0: diagram {} equiregular {}", w.diagram.label(), w.equiregular);
    for (t, d) in &w.samples {
        println!("    t = {t:.6}: {d}");
    }
    Ok(())
}
