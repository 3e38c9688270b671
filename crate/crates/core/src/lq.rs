//! Linear-quadratic comparison problems, their first conjugate times, and
//! diameter bounds obtained by comparing Ricci curvatures with them.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::canonical::{canonical_curvature, final_box_ricci, CanonicalOptions};
use crate::connection::Connection;
use crate::error::{Error, Result};
use crate::model::CovectorPoint;
use crate::ode::{self, Tolerances};
use crate::twist::YoungDiagram;

/// The LQ problem `x' = A x + B u` with cost `u^2 / 2 - q(x, x) / 2`.
#[derive(Debug, Clone)]
pub struct LqProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

/// Number of scan points used to bracket the first conjugate time.
pub const SCAN_POINTS: usize = 512;

impl LqProblem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) {
            return Err(Error::Argument("LQ matrices have inconsistent shapes".into()));
        }
        if (&q - q.transpose()).abs().max() > 1e-12 * (1.0 + q.abs().max()) {
            return Err(Error::Argument("q must be symmetric".into()));
        }
        Ok(LqProblem { a, b, q })
    }

    /// Problem of a Young diagram: coordinates `e_{a,b}` ordered row by
    /// row, `A e_{a,b} = e_{a,b+1}` (zero at the end of a row), `B` selects
    /// the first column and `q` is zero.
    pub fn young(diagram: &YoungDiagram) -> Self {
        let rows = diagram.row_lengths();
        let n: usize = rows.iter().sum();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, rows.len());
        let mut off = 0;
        for (r, len) in rows.iter().enumerate() {
            b[(off, r)] = 1.0;
            for k in 0..len - 1 {
                a[(off + k + 1, off + k)] = 1.0;
            }
            off += len;
        }
        LqProblem { q: DMatrix::zeros(n, n), a, b }
    }

    /// Single row of length `m` with `q = diag(k_1, ..., k_m)`.
    pub fn row(k: &[f64]) -> Self {
        let mut p = Self::young(&YoungDiagram::new(vec![1; k.len()]));
        for (i, v) in k.iter().enumerate() {
            p.q[(i, i)] = *v;
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Hamiltonian matrix acting on `(p, x)`: `[[-A^T, -q], [B B^T, A]]`.
    pub fn hamiltonian(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&(-self.a.transpose()));
        h.view_mut((0, n), (n, n)).copy_from(&(-&self.q));
        h.view_mut((n, 0), (n, n)).copy_from(&(&self.b * self.b.transpose()));
        h.view_mut((n, n), (n, n)).copy_from(&self.a);
        h
    }
}

/// First conjugate time of the problem on `(0, t_max]`, or `None`.
///
/// The fundamental matrix of the Hamiltonian system is integrated once
/// with dense output. Sign changes of `det` of its `p(0) -> x(t)` block are
/// bracketed on a uniform scan and refined by bisection to `tol`. A double
/// root without sign change is not detected.
pub fn conjugate_time(problem: &LqProblem, t_max: f64, tol: f64) -> Result<Option<f64>> {
    if !(t_max > 0.0) {
        return Err(Error::Argument("t_max must be positive".into()));
    }
    let n = problem.dim();
    let h = problem.hamiltonian();
    let m = 2 * n;
    let y0: Vec<f64> = DMatrix::<f64>::identity(m, m).as_slice().to_vec();
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let phi = DMatrix::from_column_slice(m, m, y);
        dy.copy_from_slice((&h * phi).as_slice());
        Ok(())
    };
    let tols = Tolerances { rtol: 1e-13, atol: 1e-15, max_steps: 1_000_000 };
    let sol = ode::solve(rhs, 0.0, &y0, t_max, &[], &tols)?;
    if sol.truncated {
        return Err(Error::Integration("LQ fundamental matrix integration stopped early".into()));
    }
    let block = |t: f64| -> DMatrix<f64> {
        let y = sol.eval(t).expect("time inside the integrated range");
        let phi = DMatrix::from_column_slice(m, m, &y);
        phi.view((n, 0), (n, n)).into_owned()
    };
    let det = |t: f64| block(t).determinant();
    let times: Vec<f64> = (1..=SCAN_POINTS).map(|k| t_max * k as f64 / SCAN_POINTS as f64).collect();
    // degenerate when the block is numerically singular at every scan point
    let conditioned = times.iter().any(|&t| {
        let sv = block(t).singular_values();
        sv.min() > 1e-13 * sv.max().max(1e-300)
    });
    if !conditioned {
        return Err(Error::DegenerateProblem("the p(0) -> x(t) block is singular on the whole scan".into()));
    }
    let mut prev_t = times[0];
    let mut prev = det(prev_t);
    for &t in &times[1..] {
        let d = det(t);
        if d == 0.0 {
            return Ok(Some(t));
        }
        if prev != 0.0 && d.signum() != prev.signum() {
            let (mut lo, mut hi) = (prev_t, t);
            let mut dlo = prev;
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                let dm = det(mid);
                if dm == 0.0 {
                    return Ok(Some(mid));
                }
                if dm.signum() == dlo.signum() {
                    lo = mid;
                    dlo = dm;
                } else {
                    hi = mid;
                }
            }
            return Ok(Some(0.5 * (lo + hi)));
        }
        prev_t = t;
        prev = d;
    }
    Ok(None)
}

/// Result of the root test on `x^{2m} - sum_b (-1)^{m-b} k_{m-b} x^{2b}`.
#[derive(Debug, Clone, Serialize)]
pub struct PolynomialCheck {
    /// Roots in `y = x^2`, as `(re, im)`.
    pub y_roots: Vec<(f64, f64)>,
    /// Whether some `y` root is real, negative and simple, which gives a
    /// simple purely imaginary root `x`.
    pub has_simple_imaginary_root: bool,
}

/// Builds the comparison polynomial in `y = x^2` and checks for a simple
/// negative real root.
pub fn bm_polynomial_check(k: &[f64]) -> Result<PolynomialCheck> {
    let m = k.len();
    if m == 0 {
        return Err(Error::Argument("at least one coefficient is required".into()));
    }
    // coefficients c_j of y^j, j = 0..m
    let mut c = vec![0.0; m + 1];
    c[m] = 1.0;
    for b in 0..m {
        let sign = if (m - b) % 2 == 0 { 1.0 } else { -1.0 };
        c[b] -= sign * k[m - b - 1];
    }
    // companion matrix of the monic polynomial
    let mut comp = DMatrix::zeros(m, m);
    for i in 1..m {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..m {
        comp[(i, m - 1)] = -c[i];
    }
    let eig = comp.complex_eigenvalues();
    let roots: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    let scale = 1.0 + k.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = 1e-8 * scale;
    let has = roots.iter().enumerate().any(|(i, (re, im))| {
        im.abs() <= tol
            && *re < -tol
            && roots
                .iter()
                .enumerate()
                .all(|(j, (r2, i2))| j == i || ((r2 - re).powi(2) + (i2 - im).powi(2)).sqrt() > 1e-6 * scale)
    });
    Ok(PolynomialCheck { y_roots: roots, has_simple_imaginary_root: has })
}

/// How a diameter bound was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundRoute {
    /// Normalized Ricci curvature of the last box against a constant,
    /// bound `pi / sqrt(k)`.
    FinalBox,
    /// Ricci curvatures of one row against a single-row LQ problem, bound
    /// from its first conjugate time.
    RicciProfile,
}

/// Outcome of one route.
#[derive(Debug, Clone, Serialize)]
pub struct RouteBound {
    pub route: BoundRoute,
    /// Row of the reduced diagram used (1-based) for the profile route.
    pub row: Option<usize>,
    /// Sampled infima of the normalized curvatures.
    pub k: Vec<f64>,
    /// `None` when the route gives no bound.
    pub bound: Option<f64>,
    pub reason: Option<String>,
}

/// Diameter bound estimate over a sample of unit covectors.
#[derive(Debug, Clone, Serialize)]
pub struct DiameterBound {
    pub samples: usize,
    /// Samples that failed (outside the ample regular set, or numerical
    /// failure) and were left out of the infima.
    pub skipped: usize,
    pub routes: Vec<RouteBound>,
    /// Smallest bound over the routes. It estimates the true bound, since
    /// the infimum is taken over a finite sample only.
    pub best: Option<f64>,
}

/// Horizon for conjugate time searches in the profile route.
pub const PROFILE_T_MAX: f64 = 50.0;

/// Estimates diameter bounds from `samples`, which should have unit
/// horizontal part.
pub fn diameter_bound(conn: &Connection, samples: &[CovectorPoint], opts: &CanonicalOptions) -> Result<DiameterBound> {
    if samples.is_empty() {
        return Err(Error::Argument("no covector samples".into()));
    }
    let results: Vec<_> = samples
        .par_iter()
        .map(|p| {
            let c = canonical_curvature(conn, p, opts).ok();
            let f = final_box_ricci(conn, p, opts.rank_tol).ok();
            (c, f)
        })
        .collect();
    let mut routes = Vec::new();
    let mut skipped = 0;

    // final-box route
    let mut kf = f64::INFINITY;
    let mut rank = None;
    let mut fb_ok = true;
    for (_, f) in &results {
        match f {
            Some(f) => {
                rank = Some(f.rank);
                match f.normalized {
                    Some(v) => kf = kf.min(v),
                    None => fb_ok = false,
                }
            }
            None => fb_ok = false,
        }
    }
    routes.push(if !fb_ok || rank.is_none() {
        RouteBound {
            route: BoundRoute::FinalBox,
            row: None,
            k: vec![],
            bound: None,
            reason: Some("last box has rank one or could not be evaluated on every sample".into()),
        }
    } else if kf > 0.0 {
        RouteBound { route: BoundRoute::FinalBox, row: None, k: vec![kf], bound: Some(std::f64::consts::PI / kf.sqrt()), reason: None }
    } else {
        RouteBound { route: BoundRoute::FinalBox, row: None, k: vec![kf], bound: None, reason: Some("sampled infimum is not positive".into()) }
    });

    // Ricci profile route
    let good: Vec<_> = results.iter().filter_map(|(c, _)| c.as_ref()).collect();
    skipped += results.len() - good.len();
    if let Some(first) = good.first() {
        let reduced = first.diagram.reduced();
        let rows = reduced.lengths.len();
        for a in 1..=rows {
            let r = reduced.multiplicities[a - 1] as f64 - if a == rows { 1.0 } else { 0.0 };
            if r <= 0.0 {
                continue;
            }
            let len = reduced.lengths[a - 1];
            let mut k = vec![f64::INFINITY; len];
            let mut complete = true;
            for c in &good {
                for (b, kb) in k.iter_mut().enumerate() {
                    match c.ricci(a, b + 1) {
                        Some(v) => *kb = kb.min(v / r),
                        None => complete = false,
                    }
                }
            }
            if !complete {
                routes.push(RouteBound { route: BoundRoute::RicciProfile, row: Some(a), k, bound: None, reason: Some("Ricci values missing for this row".into()) });
                continue;
            }
            let check = bm_polynomial_check(&k)?;
            if !check.has_simple_imaginary_root {
                routes.push(RouteBound {
                    route: BoundRoute::RicciProfile,
                    row: Some(a),
                    k,
                    bound: None,
                    reason: Some("comparison polynomial has no simple purely imaginary root".into()),
                });
                continue;
            }
            let t = conjugate_time(&LqProblem::row(&k), PROFILE_T_MAX, 1e-10);
            let (bound, reason) = match t {
                Ok(Some(t)) => (Some(t), None),
                Ok(None) => (None, Some(format!("no conjugate time up to {PROFILE_T_MAX}"))),
                Err(e) => (None, Some(e.to_string())),
            };
            routes.push(RouteBound { route: BoundRoute::RicciProfile, row: Some(a), k, bound, reason });
        }
    }
    let best = routes.iter().filter_map(|r| r.bound).fold(None, |acc: Option<f64>, b| Some(acc.map_or(b, |a| a.min(b))));
    Ok(DiameterBound { samples: samples.len(), skipped, routes, best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_row_conjugate_times() {
        for k in [0.25, 1.0, 4.0, 9.0] {
            let t = conjugate_time(&LqProblem::row(&[k]), 20.0, 1e-10).unwrap().unwrap();
            assert!((t - PI / k.sqrt()).abs() < 1e-6, "{k} {t}");
        }
        assert!(conjugate_time(&LqProblem::row(&[0.0]), 50.0, 1e-10).unwrap().is_none());
    }

    #[test]
    fn second_order_row() {
        for k in [1.0, 4.0] {
            let t = conjugate_time(&LqProblem::row(&[k, 0.0]), 20.0, 1e-10).unwrap().unwrap();
            assert!((t - 2.0 * PI / k.sqrt()).abs() < 1e-4, "{k} {t}");
        }
    }

    #[test]
    fn second_order_row_against_closed_form() {
        // det of the p(0) -> x(t) block is proportional to 2 - 2 cos s - s sin s, s = sqrt(k) t
        let k: f64 = 2.0;
        let p = LqProblem::row(&[k, 0.0]);
        let t = conjugate_time(&p, 20.0, 1e-12).unwrap().unwrap();
        let s = k.sqrt() * t;
        assert!((2.0 - 2.0 * s.cos() - s * s.sin()).abs() < 1e-9);
    }

    #[test]
    fn degenerate_problem_is_reported() {
        let p = LqProblem::new(DMatrix::zeros(2, 2), DMatrix::from_row_slice(2, 1, &[1.0, 0.0]), DMatrix::zeros(2, 2)).unwrap();
        assert!(matches!(conjugate_time(&p, 5.0, 1e-8), Err(Error::DegenerateProblem(_))));
    }

    #[test]
    fn polynomial_roots() {
        assert!(bm_polynomial_check(&[1.0]).unwrap().has_simple_imaginary_root);
        assert!(!bm_polynomial_check(&[-1.0]).unwrap().has_simple_imaginary_root);
        let c = bm_polynomial_check(&[1.0, 0.0]).unwrap();
        assert!(c.has_simple_imaginary_root);
        // y^2 + y: roots 0 and -1
        let mut ys: Vec<f64> = c.y_roots.iter().map(|r| r.0).collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ys[0] + 1.0).abs() < 1e-12 && ys[1].abs() < 1e-12);
        // y^2 + 2y + 1 = (y + 1)^2 has only a double root
        assert!(!bm_polynomial_check(&[2.0, -1.0]).unwrap().has_simple_imaginary_root);
    }

    #[test]
    fn young_problem_shape() {
        let p = LqProblem::young(&YoungDiagram::new(vec![2, 1]));
        assert_eq!(p.dim(), 3);
        assert_eq!(p.a[(1, 0)], 1.0);
        assert_eq!(p.b[(0, 0)], 1.0);
        assert_eq!(p.b[(2, 1)], 1.0);
    }

    fn bound_for(spec: &str, count: usize) -> DiameterBound {
        let entry = crate::zoo::lookup(spec).unwrap();
        let conn = Connection::build(entry.model.clone(), crate::connection::ConnectionKind::Nice);
        let m = &entry.model;
        let samples = entry.region.sample(m.dim(), m.d1(), count, 7);
        diameter_bound(&conn, &samples, &CanonicalOptions::default()).unwrap()
    }

    #[test]
    fn hopf_bound_is_two_pi() {
        let b = bound_for("su2", 24);
        assert_eq!(b.skipped, 0);
        assert!((b.best.unwrap() - 2.0 * PI).abs() < 1e-3, "{b:?}");
        assert!(b.routes.iter().any(|r| r.route == BoundRoute::FinalBox && r.bound.is_none()));
    }

    #[test]
    fn round_surface_bound_is_pi() {
        let b = bound_for("surface:1", 8);
        assert!((b.best.unwrap() - PI).abs() < 1e-4, "{b:?}");
    }

    #[test]
    fn heisenberg_has_no_bound() {
        let b = bound_for("heisenberg", 16);
        assert!(b.best.is_none(), "{b:?}");
    }
}
