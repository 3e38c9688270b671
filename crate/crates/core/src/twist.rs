//! Twist polynomials, the flag they generate, and Young diagrams.
//!
//! `P_1 = -T(#e, .)` and the recursion `P_{k+1} = d P_k + P_1 P_k`, where
//! `d` is the covariant derivative along the Hamiltonian flow and `e` is the
//! tautological covector. Up to `P_3` everything is evaluated in closed form
//! from `T`, `nabla T` and `nabla^2 T`; `P_4` differentiates `P_3` along
//! the flow numerically.

use crate::connection::{Connection, PointGeometry};
use crate::error::{Error, Result};
use crate::flow::{flow_derivative, integrate_extremal, TensorKind};
use crate::model::{sharp_components, CovectorPoint};
use crate::ode::Tolerances;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub const K_MAX: usize = 4;
pub const DEFAULT_RANK_TOL: f64 = 1e-7;

/// Closed-form flow derivatives of the tautological covector and the first
/// twist polynomials at one covector.
#[derive(Debug, Clone)]
pub struct ExactTwist {
    pub n: usize,
    pub d1: usize,
    /// `e`, `de`, `d^2 e` as covector components.
    pub e: [Vec<f64>; 3],
    pub p1: DMatrix<f64>,
    pub dp1: DMatrix<f64>,
    pub p2: DMatrix<f64>,
    /// Present when the geometry was evaluated to second order.
    pub d2p1: Option<DMatrix<f64>>,
    pub p3: Option<DMatrix<f64>>,
}

fn matrix_of<F: Fn(&[f64]) -> Vec<f64>>(n: usize, f: F) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut w = vec![0.0; n];
    for j in 0..n {
        w[j] = 1.0;
        let col = f(&w);
        w[j] = 0.0;
        for k in 0..n {
            m[(k, j)] = col[k];
        }
    }
    m
}

fn pair(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ExactTwist {
    pub fn new(g: &PointGeometry, h: &[f64]) -> Self {
        let n = g.n;
        let d1 = g.d1;
        let v = sharp_components(h, d1);
        // (T*_v p)(w) = p(T(v, w))
        let tstar = |vv: &[f64], p: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|w| {
                    let mut e = vec![0.0; n];
                    e[w] = 1.0;
                    pair(p, &g.torsion_apply(vv, &e))
                })
                .collect()
        };
        let ts = tstar(&v, h);
        let de: Vec<f64> = ts.iter().map(|x| -x).collect();
        let sde = sharp_components(&de, d1);
        let p1 = matrix_of(n, |w| g.torsion_apply(&v, w).iter().map(|x| -x).collect());
        let dp1 = matrix_of(n, |w| {
            let a = g.dtorsion_apply(&v, &v, w);
            let b = g.torsion_apply(&sde, w);
            (0..n).map(|k| -a[k] - b[k]).collect()
        });
        let p2 = &dp1 + &p1 * &p1;
        let sts = sharp_components(&ts, d1);
        let d2e: Vec<f64> = (0..n)
            .map(|w| {
                let mut ew = vec![0.0; n];
                ew[w] = 1.0;
                -pair(h, &g.dtorsion_apply(&v, &v, &ew)) + pair(h, &g.torsion_apply(&sts, &ew)) + pair(&ts, &g.torsion_apply(&v, &ew))
            })
            .collect();
        let (d2p1, p3) = if g.order >= 2 {
            let sd2e = sharp_components(&d2e, d1);
            let d2p1 = matrix_of(n, |w| {
                let a = g.d2torsion_apply(&v, &v, &v, w);
                let b = g.dtorsion_apply(&v, &sde, w);
                let c = g.dtorsion_apply(&sde, &v, w);
                let d = g.torsion_apply(&sd2e, w);
                (0..n).map(|k| -a[k] - 2.0 * b[k] - c[k] - d[k]).collect()
            });
            let p3 = &d2p1 + &p1 * &dp1 * 2.0 + &dp1 * &p1 + &p1 * &p1 * &p1;
            (Some(d2p1), Some(p3))
        } else {
            (None, None)
        };
        ExactTwist {
            n,
            d1,
            e: [h.to_vec(), de, d2e],
            p1,
            dp1,
            p2,
            d2p1,
            p3,
        }
    }
}

/// Twist polynomials at one covector.
#[derive(Debug, Clone)]
pub struct TwistData {
    pub p: CovectorPoint,
    /// `P_0 = I, P_1, ...`
    pub polys: Vec<DMatrix<f64>>,
}

/// Time step used for numerical flow derivatives at a unit covector.
pub const FLOW_STEP: f64 = 0.01;

/// Full-frame norm of the covector, used to put time on a common scale.
pub fn covector_scale(p: &CovectorPoint) -> f64 {
    p.h.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Evaluates `P_0..P_{k_max}` at `p` (closed form up to `P_3`).
pub fn twist_polynomials(conn: &Connection, p: &CovectorPoint, k_max: usize) -> Result<TwistData> {
    if k_max > K_MAX {
        return Err(Error::Argument(format!("twist order is capped at {K_MAX}")));
    }
    let n = conn.model.dim();
    let order = if k_max >= 3 { 2 } else { 1 };
    let g = conn.geometry(&p.x, order)?;
    let ex = ExactTwist::new(&g, &p.h);
    let mut polys = vec![DMatrix::identity(n, n)];
    if k_max >= 1 {
        polys.push(ex.p1.clone());
    }
    if k_max >= 2 {
        polys.push(ex.p2.clone());
    }
    if k_max >= 3 {
        polys.push(ex.p3.clone().expect("second-order geometry"));
    }
    if k_max >= 4 {
        let scale = covector_scale(p).max(1e-300);
        let dp3 = flow_derivative(conn, p, TensorKind::Endomorphism, 1, FLOW_STEP / scale, |q| {
            let g = conn.geometry(&q.x, 2)?;
            Ok(ExactTwist::new(&g, &q.h).p3.unwrap())
        })?;
        let p4 = dp3 + &ex.p1 * &polys[3];
        polys.push(p4);
    }
    Ok(TwistData { p: p.clone(), polys })
}

/// One rank decision.
#[derive(Debug, Clone, Serialize)]
pub struct RankStep {
    /// Index `i` of the twist polynomial whose image was added.
    pub order: usize,
    pub rank: usize,
    pub threshold: f64,
    pub singular_values: Vec<f64>,
    pub uncertain: bool,
}

/// The flag generated by the twist polynomials.
#[derive(Debug, Clone)]
pub struct Flag {
    /// Orthonormal bases (frame-Euclidean) of the flag members, `E^1 = horizontal`.
    pub bases: Vec<DMatrix<f64>>,
    pub steps: Vec<RankStep>,
    /// Column counts after the non-increasing cutoff.
    pub columns: Vec<usize>,
    pub uncertain: bool,
    /// Set when some rank exceeded the previous column count.
    pub irregular: bool,
}

impl Flag {
    pub fn dims(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.ncols()).collect()
    }
}

/// Orthonormal basis of the horizontal subspace.
pub fn horizontal_basis(n: usize, d1: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d1, |r, c| if r == c { 1.0 } else { 0.0 })
}

/// Residual of the columns of `m` after projecting out the span of the
/// orthonormal columns of `basis`.
pub fn residual_mod(basis: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    if basis.ncols() == 0 {
        return m.clone();
    }
    let proj = basis * (basis.transpose() * m);
    m - proj
}

/// Builds the flag `E^{i+1} = E^i + P_i E` by incremental SVD and applies
/// the rank cutoff that keeps the column counts non-increasing.
///
/// Twist polynomials are rescaled to a covector of unit frame norm, so the
/// threshold `tol * max(1, |P_i E|)` is homogeneous. A singular value within
/// a factor 10 of the threshold marks the decision as uncertain.
pub fn flag_and_ranks(twist: &TwistData, d1: usize, tol: f64) -> Flag {
    let n = twist.polys[0].nrows();
    let scale = covector_scale(&twist.p);
    let mut basis = horizontal_basis(n, d1);
    let mut bases = vec![basis.clone()];
    let mut steps = Vec::new();
    let mut columns = vec![d1];
    let mut uncertain = false;
    let mut irregular = false;
    let mut stalled = false;
    let e = horizontal_basis(n, d1);
    for i in 1..twist.polys.len() {
        if basis.ncols() == n {
            break;
        }
        let pi = if scale > 0.0 { &twist.polys[i] / scale.powi(i as i32) } else { twist.polys[i].clone() };
        let img = &pi * &e;
        let res = residual_mod(&basis, &img);
        let svd = res.clone().svd(true, false);
        let mut sv: Vec<(f64, usize)> = svd.singular_values.iter().copied().enumerate().map(|(k, s)| (s, k)).collect();
        sv.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let norm = img.clone().svd(false, false).singular_values.max();
        let thr = tol * norm.max(1.0);
        let rank = sv.iter().filter(|(s, _)| *s > thr).count();
        let unc = sv.iter().any(|(s, _)| *s > thr / 10.0 && *s <= thr * 10.0);
        uncertain |= unc;
        steps.push(RankStep {
            order: i,
            rank,
            threshold: thr,
            singular_values: sv.iter().map(|x| x.0).collect(),
            uncertain: unc,
        });
        // grow the flag
        if rank > 0 {
            let u = svd.u.as_ref().unwrap();
            let mut cols: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
            for (s, k) in sv.iter().take(rank) {
                let _ = s;
                let mut c = u.column(*k).into_owned();
                for b in &cols {
                    let d = b.dot(&c);
                    c -= b * d;
                }
                let nc = c.norm();
                if nc > 1e-12 {
                    cols.push(c / nc);
                }
            }
            basis = DMatrix::from_columns(&cols);
        }
        bases.push(basis.clone());
        if !stalled {
            let prev = *columns.last().unwrap();
            if rank > prev {
                irregular = true;
                stalled = true;
            } else if rank == 0 {
                stalled = true;
            } else {
                columns.push(rank);
            }
        } else if rank > 0 {
            irregular = true;
        }
    }
    Flag {
        bases,
        steps,
        columns,
        uncertain,
        irregular,
    }
}

/// Young diagram given by its column counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct YoungDiagram {
    pub columns: Vec<usize>,
}

impl YoungDiagram {
    pub fn new(columns: Vec<usize>) -> Self {
        YoungDiagram { columns }
    }

    pub fn size(&self) -> usize {
        self.columns.iter().sum()
    }

    pub fn step(&self) -> usize {
        self.columns.len()
    }

    /// Row lengths `n_a`, one per row, non-increasing.
    pub fn row_lengths(&self) -> Vec<usize> {
        let rows = self.columns.first().copied().unwrap_or(0);
        (1..=rows).map(|a| self.columns.iter().filter(|&&d| d >= a).count()).collect()
    }

    /// Reduced diagram: rows of equal length are merged.
    pub fn reduced(&self) -> ReducedDiagram {
        let rows = self.row_lengths();
        let mut lengths: Vec<usize> = Vec::new();
        let mut mult: Vec<usize> = Vec::new();
        let mut row_to_block = Vec::new();
        for r in rows {
            if lengths.last() == Some(&r) {
                *mult.last_mut().unwrap() += 1;
            } else {
                lengths.push(r);
                mult.push(1);
            }
            row_to_block.push(lengths.len() - 1);
        }
        ReducedDiagram {
            lengths,
            multiplicities: mult,
            row_to_block,
        }
    }

    pub fn label(&self) -> String {
        format!(
            "Y({})",
            self.columns.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
        )
    }
}

/// Reduced Young diagram: distinct row lengths `n_a` (strictly
/// decreasing) with the number of rows `r_a` of each length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReducedDiagram {
    pub lengths: Vec<usize>,
    pub multiplicities: Vec<usize>,
    /// Reduced row index of every original row.
    pub row_to_block: Vec<usize>,
}

impl ReducedDiagram {
    /// Column counts of the reduced diagram.
    pub fn columns(&self) -> Vec<usize> {
        let s = self.lengths.first().copied().unwrap_or(0);
        (1..=s).map(|b| self.lengths.iter().filter(|&&l| l >= b).count()).collect()
    }

    pub fn rows(&self) -> usize {
        self.lengths.len()
    }

    /// True for the shape with reduced rows of lengths 2 and 1.
    pub fn is_21(&self) -> bool {
        self.lengths == vec![2, 1]
    }
}

/// Classification of one covector.
#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub diagram: YoungDiagram,
    pub ample: bool,
    pub uncertain: bool,
    pub irregular: bool,
    pub ranks: Vec<RankStep>,
}

/// Evaluates only the twist polynomials needed to exhaust the flag.
pub fn classify_point(conn: &Connection, p: &CovectorPoint, tol: f64) -> Result<Classification> {
    let n = conn.model.dim();
    let d1 = conn.model.d1();
    let mut k = 1;
    loop {
        let twist = twist_polynomials(conn, p, k)?;
        let flag = flag_and_ranks(&twist, d1, tol);
        let full = flag.bases.last().unwrap().ncols() == n;
        let stalled = flag.steps.last().map(|s| s.rank == 0).unwrap_or(false);
        if full || (stalled && !flag.irregular && k >= 2) || k == K_MAX {
            let diagram = YoungDiagram::new(flag.columns.clone());
            return Ok(Classification {
                ample: diagram.size() == n,
                diagram,
                uncertain: flag.uncertain,
                irregular: flag.irregular,
                ranks: flag.steps,
            });
        }
        k += 1;
    }
}

/// Distance of a covector from the singular set, measured by the smallest
/// singular value kept by a rank decision, relative to the scale of its
/// threshold. A step that keeps nothing contributes its largest singular
/// value, so the margin goes to zero continuously at a rank drop.
pub fn regularity_margin(steps: &[RankStep], rank_tol: f64) -> f64 {
    steps
        .iter()
        .map(|s| s.singular_values.get(s.rank.max(1) - 1).copied().unwrap_or(0.0) * rank_tol / s.threshold)
        .fold(f64::INFINITY, f64::min)
}

/// Golden-section iterations used to locate a dip of the margin between
/// two window samples.
const DIP_ITERATIONS: usize = 60;

/// Classification along a time window of the extremal.
#[derive(Debug, Clone, Serialize)]
pub struct WindowClassification {
    pub diagram: YoungDiagram,
    pub ample: bool,
    pub equiregular: bool,
    pub in_sigma: bool,
    pub uncertain: bool,
    pub irregular: bool,
    /// Sample times and the diagram labels seen there.
    pub samples: Vec<(f64, String)>,
}

/// Classifies `p` and the covectors along its extremal over `[0, t_window]`
/// (sampled at `samples + 1` times). Equiregular means the column counts
/// are the same at every sample; `in_sigma` compares with `declared`.
pub fn classify(conn: &Connection, p: &CovectorPoint, t_window: f64, samples: usize, declared: Option<&[usize]>, tol: f64) -> Result<WindowClassification> {
    let base = classify_point(conn, p, tol)?;
    let mut seen = vec![(0.0, base.diagram.label())];
    let mut equiregular = true;
    let mut uncertain = base.uncertain;
    let mut irregular = base.irregular;
    if t_window > 0.0 && samples > 0 {
        let ext = integrate_extremal(conn, p, t_window, &Tolerances::default())?;
        let reach = ext.t_reached();
        let at = |t: f64| -> Result<Classification> { classify_point(conn, &ext.at(t)?, tol) };
        let mut margins = vec![regularity_margin(&base.ranks, tol)];
        let times: Vec<f64> = (0..=samples).map(|s| reach * s as f64 / samples as f64).collect();
        let mut note = |c: &Classification, t: f64, seen: &mut Vec<(f64, String)>| {
            uncertain |= c.uncertain;
            irregular |= c.irregular;
            if c.diagram != base.diagram {
                equiregular = false;
            }
            seen.push((t, c.diagram.label()));
        };
        for &t in &times[1..] {
            let c = at(t)?;
            margins.push(regularity_margin(&c.ranks, tol));
            note(&c, t, &mut seen);
        }
        // the singular set is thin: a crossing between samples shows up as
        // a dip of the margin, whose bottom is located by golden section
        for s in 1..samples {
            if !(margins[s] < margins[s - 1] && margins[s] <= margins[s + 1]) {
                continue;
            }
            let golden = 0.5 * (5f64.sqrt() - 1.0);
            let (mut a, mut b) = (times[s - 1], times[s + 1]);
            let mut c1 = b - golden * (b - a);
            let mut c2 = a + golden * (b - a);
            let margin_at = |t: f64| at(t).map(|c| regularity_margin(&c.ranks, tol));
            let (mut m1, mut m2) = (margin_at(c1)?, margin_at(c2)?);
            for _ in 0..DIP_ITERATIONS {
                if m1 <= m2 {
                    b = c2;
                    c2 = c1;
                    m2 = m1;
                    c1 = b - golden * (b - a);
                    m1 = margin_at(c1)?;
                } else {
                    a = c1;
                    c1 = c2;
                    m1 = m2;
                    c2 = a + golden * (b - a);
                    m2 = margin_at(c2)?;
                }
            }
            let t = if m1 <= m2 { c1 } else { c2 };
            let c = at(t)?;
            if c.diagram != base.diagram {
                note(&c, t, &mut seen);
            }
        }
        seen.sort_by(|x, y| x.0.total_cmp(&y.0));
    }
    let in_sigma = declared.map(|d| d == base.diagram.columns.as_slice()).unwrap_or(false);
    Ok(WindowClassification {
        ample: base.ample,
        diagram: base.diagram,
        equiregular,
        in_sigma,
        uncertain,
        irregular,
        samples: seen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;
    use std::sync::Arc;

    fn nice(z: &zoo::ZooEntry) -> Connection {
        Connection::compatible(Arc::clone(&z.model))
    }

    #[test]
    fn martinet_twist_polynomials_match_closed_form() {
        let z = zoo::martinet();
        let conn = Connection::group(Arc::clone(&z.model));
        for (x, hx, hy, hz) in [(1.0, 0.3, -0.7, 0.4), (-0.6, 1.1, 0.2, -2.0), (0.25, -0.5, 0.5, 1.5)] {
            let p = CovectorPoint::new(vec![x, 0.4, -0.2], vec![hx, hy, hz]);
            let t = twist_polynomials(&conn, &p, 2).unwrap();
            // P_1 = 2x (p(X) dy - p(Y) dx) (x) Z
            let mut p1 = DMatrix::zeros(3, 3);
            p1[(2, 0)] = -2.0 * x * hy;
            p1[(2, 1)] = 2.0 * x * hx;
            assert!((&t.polys[1] - p1).norm() < 1e-12);
            // P_2 = -(nabla_v T)(v, .) + T(#T*_v p, .) with v = #p, where
            // T*_v p = -2x p(Z) (p(X) dy - p(Y) dx); on E this is
            // 2p(X)(p(X) dy - p(Y) dx) Z - 4x^2 p(Z)(p(X) dx + p(Y) dy) Z.
            let got = t.polys[2].view((2, 0), (1, 2)).into_owned();
            let want0 = -2.0 * hx * hy - 4.0 * x * x * hz * hx;
            let want1 = 2.0 * hx * hx - 4.0 * x * x * hz * hy;
            assert!((got[(0, 0)] - want0).abs() < 1e-12, "{} {}", got[(0, 0)], want0);
            assert!((got[(0, 1)] - want1).abs() < 1e-12);
        }
    }

    #[test]
    fn riemannian_twists_vanish() {
        let z = zoo::constant_curvature_surface(1.0);
        let p = CovectorPoint::new(vec![1.0, 0.2], vec![0.3, -0.8]);
        let t = twist_polynomials(&nice(&z), &p, 3).unwrap();
        for k in 1..=3 {
            assert!(t.polys[k].norm() < 1e-12);
        }
        let c = classify_point(&nice(&z), &p, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(c.diagram.columns, vec![2]);
        assert!(c.ample);
    }

    #[test]
    fn heisenberg_is_y21() {
        let z = zoo::heisenberg();
        for conn in [nice(&z), Connection::group(Arc::clone(&z.model))] {
            let p = CovectorPoint::new(vec![0.3, -0.1, 0.7], vec![0.6, 0.8, -1.4]);
            let c = classify_point(&conn, &p, DEFAULT_RANK_TOL).unwrap();
            assert_eq!(c.diagram.columns, vec![2, 1]);
            assert!(c.ample && !c.uncertain && !c.irregular);
        }
        // a covector annihilating the distribution
        let p = CovectorPoint::new(vec![0.0; 3], vec![0.0, 0.0, 1.0]);
        let c = classify_point(&nice(&z), &p, DEFAULT_RANK_TOL).unwrap();
        assert!(!c.ample);
        assert_eq!(c.diagram.columns, vec![2]);
    }

    #[test]
    fn martinet_on_the_singular_plane() {
        let z = zoo::martinet();
        let conn = nice(&z);
        let p = CovectorPoint::new(vec![0.0, 0.3, 0.1], vec![0.6, 0.8, 0.5]);
        let c = classify_point(&conn, &p, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(c.diagram.columns, vec![2]);
        assert!(c.irregular);
        let p = CovectorPoint::new(vec![0.2, 0.3, 0.1], vec![0.6, 0.8, 0.5]);
        assert_eq!(classify_point(&conn, &p, DEFAULT_RANK_TOL).unwrap().diagram.columns, vec![2, 1]);
    }

    #[test]
    fn martinet_crossing_breaks_equiregularity() {
        let z = zoo::martinet();
        let conn = nice(&z);
        let p = CovectorPoint::new(vec![-0.3, 0.0, 0.0], vec![1.0, 0.05, 0.0]);
        let w = classify(&conn, &p, 0.6, 12, Some(&z.declared_diagram), DEFAULT_RANK_TOL).unwrap();
        assert!(!w.equiregular);
        assert!(w.in_sigma);
    }

    #[test]
    fn crossing_between_samples_is_found() {
        let z = zoo::martinet();
        let conn = nice(&z);
        // x crosses 0 at t = 0.3123..., between the samples at 2/7 and 3/7 of the window
        let p = CovectorPoint::new(vec![-0.3123, 0.1, 0.0], vec![0.8, 0.6, 0.7]);
        let w = classify(&conn, &p, 0.7 / 0.8, 7, Some(&z.declared_diagram), DEFAULT_RANK_TOL).unwrap();
        assert!(!w.equiregular, "{:?}", w.samples);
        assert!(w.samples.iter().any(|(_, d)| d == "Y(2)"));
        // a window that stays on one side is equiregular
        let w = classify(&conn, &p, 0.2, 7, Some(&z.declared_diagram), DEFAULT_RANK_TOL).unwrap();
        assert!(w.equiregular);
    }

    #[test]
    fn quaternionic_diagram() {
        let z = zoo::quaternionic_heisenberg(2);
        let mut h = vec![0.0; 11];
        for (i, v) in h.iter_mut().enumerate() {
            *v = ((i * 7 % 5) as f64 - 2.0) * 0.3 + 0.1;
        }
        let p = CovectorPoint::new(vec![0.05; 11], h);
        let c = classify_point(&nice(&z), &p, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(c.diagram.columns, vec![8, 3]);
        let r = c.diagram.reduced();
        assert_eq!(r.lengths, vec![2, 1]);
        assert_eq!(r.multiplicities, vec![3, 5]);
    }

    #[test]
    fn young_diagram_rows() {
        let y = YoungDiagram::new(vec![3, 2, 2, 1]);
        assert_eq!(y.row_lengths(), vec![4, 3, 1]);
        let r = y.reduced();
        assert_eq!(r.lengths, vec![4, 3, 1]);
        assert_eq!(r.columns(), vec![3, 2, 2, 1]);
        let y = YoungDiagram::new(vec![4, 4, 1]);
        assert_eq!(y.reduced().lengths, vec![3, 2]);
        assert_eq!(y.reduced().multiplicities, vec![1, 3]);
    }
}

#[cfg(test)]
mod oracle_tests {
    use super::*;
    use crate::flow::{transport_twist_oracle, ORACLE_STEPS};
    use crate::zoo;
    use std::sync::Arc;

    #[test]
    fn recursion_agrees_with_transport() {
        let entries = [zoo::martinet(), zoo::heisenberg(), zoo::contact3d(1.0)];
        for z in entries {
            for conn in [Connection::compatible(Arc::clone(&z.model)), Connection::group(Arc::clone(&z.model))] {
                let p = CovectorPoint::new(vec![1.0, 0.2, -0.1], vec![0.3, -0.7, 0.4]);
                let t = twist_polynomials(&conn, &p, 3).unwrap();
                for k in 1..=3 {
                    let o = transport_twist_oracle(&conn, &p, k, ORACLE_STEPS).unwrap();
                    let rel = (&o - &t.polys[k]).norm() / t.polys[k].norm().max(1e-12);
                    assert!(rel < 1e-4, "{} {} k={k} rel={rel:e}", z.name, conn.label());
                }
            }
        }
    }
}
