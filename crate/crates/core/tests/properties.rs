use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;

use sr_curvature::canonical::{canonical_curvature, point_data, CanonicalOptions};
use sr_curvature::connection::{Connection, ConnectionKind};
use sr_curvature::flow::integrate_extremal;
use sr_curvature::lq::{conjugate_time, LqProblem};
use sr_curvature::model::CovectorPoint;
use sr_curvature::ode::Tolerances;
use sr_curvature::report::{cmd_ricci, Format, RunConfig};
use sr_curvature::twist::{classify_point, covector_scale, twist_polynomials, DEFAULT_RANK_TOL};
use sr_curvature::zoo;

fn conn(name: &str, kind: ConnectionKind) -> Connection {
    Connection::build(Arc::clone(&zoo::lookup(name).unwrap().model), kind)
}

fn model_name() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec!["heisenberg", "contact3d:1", "su2", "martinet", "quaternionic-heisenberg"])
}

/// A covector of `name` with horizontal part bounded away from zero.
fn covector(name: &'static str) -> impl Strategy<Value = CovectorPoint> {
    let e = zoo::lookup(name).unwrap();
    let (n, d1) = (e.model.dim(), e.model.d1());
    let base: Vec<_> = e.region.base.iter().map(|[lo, hi]| *lo..*hi).collect();
    (base, prop::collection::vec(-1.0f64..1.0, d1), prop::collection::vec(-2.0f64..2.0, n - d1), 0.3f64..1.0)
        .prop_map(move |(x, hh, hv, r)| {
            let s = hh.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
            let mut h: Vec<f64> = hh.iter().map(|v| v / s * r).collect();
            h.extend(hv);
            CovectorPoint::new(x, h)
        })
}

fn named_covector() -> impl Strategy<Value = (&'static str, CovectorPoint)> {
    model_name().prop_flat_map(|m| covector(m).prop_map(move |p| (m, p)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn twist_polynomials_are_homogeneous((name, p) in named_covector(), c in 0.2f64..5.0) {
        let conn = conn(name, ConnectionKind::Nice);
        let a = twist_polynomials(&conn, &p, 3).unwrap();
        let b = twist_polynomials(&conn, &p.scaled(c), 3).unwrap();
        for k in 1..=3 {
            let expect = &a.polys[k] * c.powi(k as i32);
            let scale = expect.norm().max((c * covector_scale(&p)).powi(k as i32));
            prop_assert!((&b.polys[k] - &expect).norm() <= 1e-6 * scale);
        }
    }

    #[test]
    fn classification_is_scale_invariant((name, p) in named_covector(), c in 0.2f64..5.0) {
        let conn = conn(name, ConnectionKind::Nice);
        let a = classify_point(&conn, &p, DEFAULT_RANK_TOL).unwrap();
        let b = classify_point(&conn, &p.scaled(c), DEFAULT_RANK_TOL).unwrap();
        prop_assert_eq!(a.diagram, b.diagram);
    }

    #[test]
    fn hamiltonian_is_conserved((name, p) in named_covector(), t in 0.1f64..3.0) {
        let conn = conn(name, ConnectionKind::Nice);
        let ext = integrate_extremal(&conn, &p, t, &Tolerances::tight()).unwrap();
        prop_assert!(ext.hamiltonian_drift(conn.model.d1()) <= 1e-9);
    }

    #[test]
    fn q_is_skew_and_s_symmetric((name, p) in named_covector()) {
        let conn = conn(name, ConnectionKind::Nice);
        let class = classify_point(&conn, &p, DEFAULT_RANK_TOL).unwrap();
        prop_assume!(class.ample && !class.irregular);
        let d = point_data(&conn, &p, &class.diagram, DEFAULT_RANK_TOL).unwrap();
        let scale = covector_scale(&p).max(1.0);
        prop_assert!((&d.q + d.q.transpose()).abs().max() <= 1e-10 * scale);
        prop_assert!((&d.s_hh - d.s_hh.transpose()).abs().max() <= 1e-10 * scale * scale);
    }

    #[test]
    fn single_box_conjugate_time(k in 0.05f64..50.0) {
        let t = conjugate_time(&LqProblem::row(&[k]), 2.0 * PI / k.sqrt(), 1e-12).unwrap().unwrap();
        prop_assert!((t * k.sqrt() - PI).abs() <= 1e-8);
    }

    #[test]
    fn conjugate_time_scales_with_potential(k in 0.1f64..4.0, c in 0.25f64..4.0) {
        // q -> c^2 q with t -> t / c, on a row of two boxes the potential of
        // the second box picks up c^4
        let a = conjugate_time(&LqProblem::row(&[k, 0.3]), 100.0, 1e-12).unwrap();
        let b = conjugate_time(&LqProblem::row(&[c * c * k, 0.3 * c.powi(4)]), 100.0, 1e-12).unwrap();
        match (a, b) {
            (Some(a), Some(b)) => prop_assert!((a / c - b).abs() <= 1e-7 * a),
            (None, None) => {}
            (a, b) if a.is_some_and(|a| a / c > 99.0) || b.is_some_and(|b| b * c > 99.0) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn ricci_is_homogeneous((name, p) in named_covector(), c in 0.3f64..3.0) {
        let conn = conn(name, ConnectionKind::Nice);
        let (Ok(a), Ok(b)) = (
            canonical_curvature(&conn, &p, &CanonicalOptions::default()),
            canonical_curvature(&conn, &p.scaled(c), &CanonicalOptions::default()),
        ) else {
            return Ok(());
        };
        for (x, y) in a.ricci.iter().zip(&b.ricci) {
            let expect = x.value * c.powi(2 * x.b as i32);
            let scale = expect.abs().max((c * covector_scale(&p)).powi(2 * x.b as i32));
            prop_assert!((y.value - expect).abs() <= 1e-6 * scale, "{} {} {}", name, y.value, expect);
        }
    }

    #[test]
    fn ricci_does_not_depend_on_the_connection(p in covector("heisenberg")) {
        let a = canonical_curvature(&conn("heisenberg", ConnectionKind::Nice), &p, &CanonicalOptions::default()).unwrap();
        let b = canonical_curvature(&conn("heisenberg", ConnectionKind::Group), &p, &CanonicalOptions::default()).unwrap();
        for (x, y) in a.ricci.iter().zip(&b.ricci) {
            prop_assert!((x.value - y.value).abs() <= 1e-5 * x.value.abs().max(covector_scale(&p).powi(2)));
        }
    }

    #[test]
    fn reports_are_reproducible(seed in 0u64..1000) {
        let cfg = RunConfig { model: "contact3d:1".into(), samples: 2, seed, ..Default::default() };
        let a = cmd_ricci(&cfg).unwrap().render(Format::Json);
        let b = cmd_ricci(&cfg).unwrap().render(Format::Json);
        prop_assert_eq!(a, b);
    }
}
