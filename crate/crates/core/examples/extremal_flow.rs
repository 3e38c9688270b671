//! Integrates a normal extremal on SU(2) with its left-invariant contact
//! structure and transports the frame along it.
//!
//! Run with `cargo run --example extremal_flow`.

use sr_curvature::connection::{Connection, ConnectionKind};
use sr_curvature::flow::{integrate_extremal, parallel_transport};
use sr_curvature::model::CovectorPoint;
use sr_curvature::ode::Tolerances;
use sr_curvature::zoo;

fn main() -> sr_curvature::Result<()> {
    let entry = zoo::lookup("su2")?;
    let conn = Connection::build(entry.model.clone(), ConnectionKind::Nice);
    let p = CovectorPoint::new(vec![0.1, 0.2, 0.3], vec![0.6, 0.8, 1.5]);
    let tol = Tolerances::tight();

    let ext = integrate_extremal(&conn, &p, 2.0, &tol)?;
    println!("reached t = {} in {} steps, exited domain: {}", ext.t_reached(), ext.accepted_steps(), ext.exited);
    println!("relative Hamiltonian drift: {:.2e}", ext.hamiltonian_drift(entry.model.d1()));
    for t in [0.5, 1.0, 1.5, 2.0] {
        let q = ext.at(t)?;
        println!("t = {t}: x = {:.6?}, h = {:.6?}", q.x, q.h);
    }

    let frame = parallel_transport(&conn, &ext, 2.0, &tol)?;
    let m = frame.as_matrix();
    println!("transport at t = 2:\n{m}");
    // the horizontal block stays orthonormal under a metric connection
    let hb = m.view((0, 0), (2, 2)).into_owned();
    println!("|M_h^T M_h - I| = {:.2e}", (hb.transpose() * &hb - nalgebra::DMatrix::identity(2, 2)).norm());
    Ok(())
}
