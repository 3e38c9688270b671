//! Canonical frame data along an ample equiregular extremal: the box
//! decomposition of the horizontal space, the maps `B`, `C`, `Q`, the
//! symmetric form `S`, the frame maps `W_b` (written `wp` below) and the
//! curvature entries `K_{bj}` whose traces over boxes give Ricci curvatures.
//!
//! Everything is expressed in the moving frame `X_1..X_n` of the model. A
//! bilinear form on the tangent space is an `n x n` matrix `G` with
//! `G(u, v) = u^T G v`; a linear map is an `n x n` matrix acting on
//! coefficient columns. The horizontal space is spanned by the first `d1`
//! coordinate vectors.
//!
//! Shapes handled end to end: rows of a single length 1 (Riemannian) and
//! reduced shape `Y(2,1)`. The pointwise part (boxes, `B`, `C`, `Q`, `S` on
//! the horizontal space) works for any shape with rows of length at most 3.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::connection::{Connection, PointGeometry};
use crate::error::{Error, Result};
use crate::flow::{FlowGrid, TensorKind, STENCIL_REACH};
use crate::model::CovectorPoint;
use crate::ode::{self, Tolerances};
use crate::tensor::{i3, i4};
use crate::twist::{self, covector_scale, regularity_margin, flag_and_ranks, horizontal_basis, residual_mod, ExactTwist, ReducedDiagram, TwistData, YoungDiagram};

/// Time step of the nested flow derivatives at a unit covector.
pub const CANONICAL_STEP: f64 = 0.01;

/// Largest admissible relative residual when solving for `B` and `C`.
pub const SOLVE_TOL: f64 = 1e-6;

/// Largest admissible relative size of the vertical part that must vanish
/// when `S` is completed on `W_1 Box^{1,1}`.
pub const COMPLETION_TOL: f64 = 1e-5;

/// Shapes for which the full curvature pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Riemannian,
    Y21,
}

impl Shape {
    pub fn of(reduced: &ReducedDiagram) -> Option<Shape> {
        match reduced.lengths.as_slice() {
            [1] => Some(Shape::Riemannian),
            [2, 1] => Some(Shape::Y21),
            _ => None,
        }
    }

    /// Grid half width needed for the deepest nested derivative.
    fn levels(self) -> usize {
        match self {
            Shape::Riemannian => 1,
            Shape::Y21 => 3,
        }
    }
}

/// Orthogonal decomposition of the horizontal space into boxes, one per
/// row of the reduced diagram (longest rows first).
#[derive(Debug, Clone)]
pub struct BoxDecomposition {
    pub lengths: Vec<usize>,
    pub multiplicities: Vec<usize>,
    /// Orthonormal bases, `n x r_a`.
    pub bases: Vec<DMatrix<f64>>,
    /// Orthogonal projectors onto the boxes, `n x n`.
    pub proj: Vec<DMatrix<f64>>,
    /// Largest singular value that was treated as zero when splitting off
    /// a box, relative to the largest one.
    pub split_residual: f64,
}

fn svd_sorted(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    // right singular vectors ordered by decreasing singular value
    let k = m.ncols();
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|a, b| svd.singular_values[*b].partial_cmp(&svd.singular_values[*a]).unwrap());
    let mut vals: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let mut cols: Vec<DVector<f64>> = idx.iter().map(|&i| vt.row(i).transpose()).collect();
    // complete when the matrix is wide
    if cols.len() < k {
        let mut basis = DMatrix::from_columns(&cols);
        for e in 0..k {
            if cols.len() == k {
                break;
            }
            let mut v = DVector::zeros(k);
            v[e] = 1.0;
            let r = &v - &basis * (basis.transpose() * &v);
            if r.norm() > 1e-8 {
                cols.push(r.normalize());
                vals.push(0.0);
                basis = DMatrix::from_columns(&cols);
            }
        }
    }
    (vals, DMatrix::from_columns(&cols))
}

/// Splits the horizontal space into boxes. The last box is the kernel of
/// `[P_{n_last}]` on the horizontal space; each earlier box is the kernel of
/// `[P_{n_a}]` on the orthogonal complement of the boxes found so far.
pub fn box_decomposition(polys: &[DMatrix<f64>], flag: &twist::Flag, reduced: &ReducedDiagram, d1: usize) -> Result<BoxDecomposition> {
    let n = polys[0].nrows();
    let rows = reduced.lengths.len();
    let mut remaining = horizontal_basis(n, d1);
    let mut bases = vec![DMatrix::zeros(n, 0); rows];
    let mut split_residual: f64 = 0.0;
    for a in (0..rows).rev() {
        let r = reduced.multiplicities[a];
        if a == 0 {
            if remaining.ncols() != r {
                return Err(Error::Inconsistent(format!("first box has dimension {} instead of {r}", remaining.ncols())));
            }
            bases[0] = remaining.clone();
            break;
        }
        let k = reduced.lengths[a];
        if k >= polys.len() || k > flag.bases.len() {
            return Err(Error::UnsupportedDiagram(reduced.columns()));
        }
        let img = residual_mod(&flag.bases[k - 1], &(&polys[k] * &remaining));
        let (vals, v) = svd_sorted(&img);
        let m = remaining.ncols();
        if m < r {
            return Err(Error::Inconsistent("box dimensions exceed the horizontal rank".into()));
        }
        let top = vals.first().copied().unwrap_or(0.0).max(1e-300);
        for s in &vals[m - r..] {
            split_residual = split_residual.max(s / top);
        }
        let keep = v.columns(0, m - r).into_owned();
        let kern = v.columns(m - r, r).into_owned();
        bases[a] = &remaining * kern;
        remaining = &remaining * keep;
    }
    let proj = bases.iter().map(|b| b * b.transpose()).collect();
    Ok(BoxDecomposition {
        lengths: reduced.lengths.clone(),
        multiplicities: reduced.multiplicities.clone(),
        bases,
        proj,
        split_residual,
    })
}

fn hcat(blocks: &[&DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = blocks.iter().flat_map(|b| b.column_iter().map(|c| c.into_owned())).collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Least-squares solution of `lhs x = rhs` and the residual relative to the
/// size of the data.
fn lstsq(lhs: &DMatrix<f64>, rhs: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, f64) {
    if lhs.ncols() == 0 {
        let rel = rhs.norm() / rhs.norm().max(floor).max(1e-300);
        return (DMatrix::zeros(0, rhs.ncols()), rel);
    }
    let svd = lhs.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1e-300);
    let x = svd.solve(rhs, eps).expect("svd with both factors");
    let res = (lhs * &x - rhs).norm();
    let scale = (lhs.norm() * x.norm()).max(rhs.norm()).max(floor).max(1e-300);
    (x, res / scale)
}

/// The maps `B` and `C` on the horizontal space, defined box by box by
/// `P_{n_a} u = -P_{n_a - 1} B u` and `P_{n_a + 1} u = -P_{n_a} C u` modulo
/// the flag, with `B u` in boxes up to `a` and `C u` in earlier boxes.
pub fn maps_bc(polys: &[DMatrix<f64>], flag: &twist::Flag, boxes: &BoxDecomposition) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let n = polys[0].nrows();
    let mut b = DMatrix::zeros(n, n);
    let mut c = DMatrix::zeros(n, n);
    let mut worst: f64 = 0.0;
    let zero = DMatrix::zeros(n, 0);
    for (a, u) in boxes.bases.iter().enumerate() {
        let k = boxes.lengths[a];
        let upto: Vec<&DMatrix<f64>> = boxes.bases[..=a].iter().collect();
        let target = hcat(&upto, n);
        let base = if k >= 2 { &flag.bases[k - 2] } else { &zero };
        let lhs = residual_mod(base, &(&polys[k - 1] * &target));
        let rhs = -residual_mod(base, &(&polys[k] * u));
        let (x, rel) = lstsq(&lhs, &rhs, polys[k].norm());
        worst = worst.max(rel);
        b += &target * x * u.transpose();
        if a > 0 {
            if k + 1 >= polys.len() {
                return Err(Error::UnsupportedDiagram(boxes.lengths.clone()));
            }
            let before: Vec<&DMatrix<f64>> = boxes.bases[..a].iter().collect();
            let target = hcat(&before, n);
            let base = &flag.bases[k - 1];
            let lhs = residual_mod(base, &(&polys[k] * &target));
            let rhs = -residual_mod(base, &(&polys[k + 1] * u));
            let (x, rel) = lstsq(&lhs, &rhs, polys[k + 1].norm());
            worst = worst.max(rel);
            c += &target * x * u.transpose();
        }
    }
    if worst > SOLVE_TOL {
        return Err(Error::Inconsistent(format!("B/C equations have relative residual {worst:.3e}")));
    }
    Ok((b, c, worst))
}

/// `A^#` as an `n x n` matrix: `A^# X = sum_j A(X, X_j) X_j` over horizontal
/// `j`, with `A(v, w) = p(T(v, w)) / 2`.
pub fn a_sharp(g: &PointGeometry, h: &[f64]) -> DMatrix<f64> {
    let n = g.n;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..g.d1 {
        for i in 0..n {
            let mut s = 0.0;
            for (k, hk) in h.iter().enumerate() {
                s += hk * g.torsion[i3(n, k, i, j)];
            }
            m[(j, i)] = 0.5 * s;
        }
    }
    m
}

/// Matrix of `(y, z) -> p(R(#p, y) z)`.
fn curvature_form(g: &PointGeometry, h: &[f64], v: &[f64]) -> DMatrix<f64> {
    let n = g.n;
    let mut m = DMatrix::zeros(n, n);
    for y in 0..n {
        for z in 0..n {
            let mut s = 0.0;
            for (i, vi) in v.iter().enumerate() {
                if *vi == 0.0 {
                    continue;
                }
                for (l, hl) in h.iter().enumerate() {
                    s += hl * vi * g.curvature[i4(n, l, z, i, y)];
                }
            }
            m[(y, z)] = s;
        }
    }
    m
}

/// Matrix of `(y, z) -> p((nabla_y T)(#p, z))`.
fn dtorsion_form(g: &PointGeometry, h: &[f64], v: &[f64]) -> DMatrix<f64> {
    let n = g.n;
    let mut m = DMatrix::zeros(n, n);
    for y in 0..n {
        for z in 0..n {
            let mut s = 0.0;
            for (i, vi) in v.iter().enumerate() {
                if *vi == 0.0 {
                    continue;
                }
                for (l, hl) in h.iter().enumerate() {
                    s += hl * vi * g.dtorsion[i4(n, l, i, z, y)];
                }
            }
            m[(y, z)] = s;
        }
    }
    m
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Pointwise canonical data at one covector.
#[derive(Debug, Clone)]
pub struct PointData {
    pub point: CovectorPoint,
    pub n: usize,
    pub d1: usize,
    pub polys: Vec<DMatrix<f64>>,
    pub boxes: BoxDecomposition,
    pub b0: DMatrix<f64>,
    pub b_plus: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub a_sharp: DMatrix<f64>,
    pub q: DMatrix<f64>,
    /// `S` restricted to the horizontal space (bilinear).
    pub s_hh: DMatrix<f64>,
    /// `W_1 = (P_1 + A^# + S^#) pr_h + Q`, before zeroing on short rows.
    pub wp1_raw: DMatrix<f64>,
    /// `W_1` zeroed on boxes of rows of length 1.
    pub wp1: DMatrix<f64>,
    pub curvature_form: DMatrix<f64>,
    pub dtorsion_form: DMatrix<f64>,
    pub solve_residual: f64,
}

impl PointData {
    /// Projector onto the horizontal space.
    pub fn pr_h(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.d1 {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Sum of projectors onto the boxes whose rows are longer than `b`.
    pub fn longer_than(&self, b: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (a, p) in self.boxes.proj.iter().enumerate() {
            if self.boxes.lengths[a] > b {
                m += p;
            }
        }
        m
    }

    /// `S^#` built from a full bilinear form `s` (rows beyond `d1` are zero).
    pub fn sharp(&self, s: &DMatrix<f64>) -> DMatrix<f64> {
        let mut m = s.transpose();
        for r in self.d1..self.n {
            m.row_mut(r).fill(0.0);
        }
        m
    }
}

/// Computes `Q` and `S` on the horizontal space from `B`, `C` and `A^#`.
///
/// Diagonal blocks: `Q_aa = pr_a (B_0 - B_0^T - 2 A^#) pr_a / (2 n_a)` and
/// `S_aa = (B_0 + B_0^T) / 2`. Off-diagonal blocks with `i < a`:
/// `Q_ia = pr_i (C - B_+) pr_a` and
/// `S(u, v) = <(B_+ - n_a (C - B_+) - A^#) u, v>` for `u` in box `a`, `v` in
/// box `i`; the remaining blocks follow from skew-symmetry and symmetry.
pub fn q_and_s(boxes: &BoxDecomposition, b0: &DMatrix<f64>, b_plus: &DMatrix<f64>, c: &DMatrix<f64>, a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = b0.nrows();
    let mut q = DMatrix::zeros(n, n);
    let mut s = DMatrix::zeros(n, n);
    let qp = c - b_plus;
    for (ai, pa) in boxes.proj.iter().enumerate() {
        let na = boxes.lengths[ai] as f64;
        q += pa * (b0 - b0.transpose() - a * 2.0) * pa / (2.0 * na);
        s += pa * sym(b0) * pa;
        for pi in boxes.proj[..ai].iter() {
            let up = pi * &qp * pa;
            q += &up - up.transpose();
            // S^# block mapping box a into box i, then its transpose
            let blk = pi * (b_plus - &qp * na - a) * pa;
            s += blk.transpose() + &blk;
        }
    }
    (q, s)
}

/// Pointwise canonical data at `p` for a reduced shape fixed in advance.
/// Fails if the flag at `p` does not have the expected column counts.
pub fn point_data(conn: &Connection, p: &CovectorPoint, diagram: &YoungDiagram, tol: f64) -> Result<PointData> {
    let reduced = &diagram.reduced();
    let n = conn.model.dim();
    let d1 = conn.model.d1();
    let top = *reduced.lengths.first().unwrap_or(&1);
    if top > 3 {
        return Err(Error::UnsupportedDiagram(reduced.columns()));
    }
    let g = conn.geometry(&p.x, if top >= 3 { 2 } else { 1 })?;
    let ex = ExactTwist::new(&g, &p.h);
    let mut polys = vec![DMatrix::identity(n, n), ex.p1.clone(), ex.p2.clone()];
    if let Some(p3) = &ex.p3 {
        polys.push(p3.clone());
    }
    let data = TwistData { p: p.clone(), polys };
    let flag = flag_and_ranks(&data, d1, tol);
    let expected = diagram.columns.clone();
    if flag.columns != expected {
        return Err(Error::Inconsistent(format!(
            "flag has columns {:?} instead of {:?} near the base covector",
            flag.columns, expected
        )));
    }
    let polys = data.polys;
    let boxes = box_decomposition(&polys, &flag, reduced, d1)?;
    let (b, c, solve_residual) = maps_bc(&polys, &flag, &boxes)?;
    let mut b0 = DMatrix::zeros(n, n);
    for pa in &boxes.proj {
        b0 += pa * &b * pa;
    }
    let b_plus = &b - &b0;
    let a_full = a_sharp(&g, &p.h);
    let mut pr_h = DMatrix::zeros(n, n);
    for i in 0..d1 {
        pr_h[(i, i)] = 1.0;
    }
    let a_hh = &pr_h * &a_full * &pr_h;
    let (q, s_hh) = q_and_s(&boxes, &b0, &b_plus, &c, &a_hh);
    let s_sharp = &s_hh; // symmetric and supported on the horizontal block
    let wp1_raw = (&ex.p1 + &a_full + s_sharp) * &pr_h + &q;
    let mut long = DMatrix::zeros(n, n);
    for (a, pa) in boxes.proj.iter().enumerate() {
        if boxes.lengths[a] > 1 {
            long += pa;
        }
    }
    let wp1 = &wp1_raw * &long;
    let v = crate::model::sharp_components(&p.h, d1);
    let cf = curvature_form(&g, &p.h, &v);
    let tf = dtorsion_form(&g, &p.h, &v);
    Ok(PointData {
        point: p.clone(),
        n,
        d1,
        polys,
        boxes,
        b0,
        b_plus,
        c,
        a_sharp: a_full,
        q,
        s_hh,
        wp1_raw,
        wp1,
        curvature_form: cf,
        dtorsion_form: tf,
        solve_residual,
    })
}

/// One Ricci curvature `Ric^{a,b}` (row `a` of the reduced diagram, level
/// `b`, both counted from 1).
#[derive(Debug, Clone, Serialize)]
pub struct RicciEntry {
    pub a: usize,
    pub b: usize,
    pub value: f64,
    /// Same quantity traced from the directly evaluated curvature form, as a
    /// consistency check of the expansion used for `value`.
    pub check: Option<f64>,
}

/// Residuals of the normalization conditions for the computed `S`.
#[derive(Debug, Clone, Serialize)]
pub struct NormalizationReport {
    /// `(condition, largest relative residual, number of entries tested)`;
    /// a count of zero means the condition is vacuous for this shape.
    pub conditions: Vec<(String, f64, usize)>,
    /// Largest relative deviation between the expanded and the directly
    /// evaluated curvature form on the tested entries.
    pub expansion_mismatch: f64,
    /// Residual of `W_1` on the last box, which must vanish.
    pub kernel_residual: f64,
    /// Vertical part left over when completing `S`.
    pub completion_residual: f64,
}

impl NormalizationReport {
    pub fn max_residual(&self) -> f64 {
        self.conditions.iter().map(|c| c.1).fold(0.0, f64::max)
    }
}

/// Full output of the canonical pipeline at one covector.
#[derive(Debug, Clone)]
pub struct CanonicalCurvature {
    pub point: CovectorPoint,
    pub diagram: YoungDiagram,
    pub shape: Shape,
    /// Flow time step of the accepted finite-difference grid.
    pub step: f64,
    /// See [`regularity_margin`].
    pub margin: f64,
    pub base: PointData,
    /// Complete `S` as a bilinear form in the moving frame.
    pub s_full: DMatrix<f64>,
    /// `K_{00}`, `K_{01}`, `K_{11}` as bilinear forms on horizontal vectors.
    pub k: Vec<((usize, usize), DMatrix<f64>)>,
    /// The curvature form evaluated from its defining formula.
    pub r_direct: DMatrix<f64>,
    pub ricci: Vec<RicciEntry>,
    pub normalization: NormalizationReport,
}

impl CanonicalCurvature {
    pub fn ricci(&self, a: usize, b: usize) -> Option<f64> {
        self.ricci.iter().find(|r| r.a == a && r.b == b).map(|r| r.value)
    }

    pub fn k_entry(&self, b: usize, j: usize) -> Option<&DMatrix<f64>> {
        self.k.iter().find(|(bj, _)| *bj == (b, j)).map(|(_, m)| m)
    }
}

/// Options of the canonical pipeline.
#[derive(Debug, Clone, Copy)]
pub struct CanonicalOptions {
    pub rank_tol: f64,
    /// Flow step at a unit covector.
    pub step: f64,
    /// Symmetric perturbation of size `epsilon` added to `S` on
    /// `W_1 Box^{1,1}` (zero for the true frame); used as a negative control
    /// of the normalization check.
    pub perturbation: f64,
}

impl Default for CanonicalOptions {
    fn default() -> Self {
        CanonicalOptions {
            rank_tol: twist::DEFAULT_RANK_TOL,
            step: CANONICAL_STEP,
            perturbation: 0.0,
        }
    }
}

/// Margin below which the flow step is shrunk in proportion.
const MARGIN_REF: f64 = 0.25;
/// Smallest step reduction; below it finite-difference rounding dominates.
const MIN_STEP_FACTOR: f64 = 0.02;

/// Covectors with a smaller margin get the smallest step reduction, and
/// their finite-difference curvature is no longer reliable to the
/// validation tolerances.
pub const NEAR_SINGULAR_MARGIN: f64 = MARGIN_REF * MIN_STEP_FACTOR;

/// Step reduction near the singular set: where the margin is small the
/// flag changes fast along the flow and the grid must stay close to the
/// base point.
pub fn step_factor(margin: f64) -> f64 {
    (margin / MARGIN_REF).clamp(MIN_STEP_FACTOR, 1.0)
}

/// Ambient form from the values on the basis `V = [horizontal | W]`.
fn ambient(v_inv: &DMatrix<f64>, s_v: &DMatrix<f64>) -> DMatrix<f64> {
    v_inv.transpose() * s_v * v_inv
}

/// Terms of `K(U, V)` that do not involve `S` on `W_1 Box x W_1 Box`:
/// everything except the derivative term is taken at one point.
struct Expansion<'a> {
    d: &'a PointData,
    s: &'a DMatrix<f64>,
}

impl<'a> Expansion<'a> {
    /// `K(U u, V v)` with `U^+`, `V^+` the next frame maps, `g` the form
    /// `S(U., V.)` and `dg` its flow derivative.
    #[allow(clippy::too_many_arguments)]
    fn entry(&self, u: &DMatrix<f64>, v: &DMatrix<f64>, u_next: &DMatrix<f64>, v_next: &DMatrix<f64>, g: &DMatrix<f64>, dg: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.d;
        let r = u.transpose() * &d.curvature_form * v;
        let r2 = v.transpose() * &d.curvature_form * u;
        let t = u.transpose() * &d.dtorsion_form * v;
        let t2 = v.transpose() * &d.dtorsion_form * u;
        let au = &d.a_sharp * u;
        let av = &d.a_sharp * v;
        let ssharp = d.sharp(self.s);
        let su = &ssharp * u;
        let sv = &ssharp * v;
        let q = &d.q;
        (r + r2.transpose()) * 0.5 + (t + t2.transpose()) * 0.5 + au.transpose() * av - su.transpose() * sv - (dg - q * g + g * q)
            + u_next.transpose() * self.s * v
            + u.transpose() * self.s * v_next
    }
}

/// The curvature form from its defining formula:
/// `sym[p R(#p, X) Y + p (nabla_X T)(#p, Y)] + <(S^# + A^#) X, (S^# + A^#) Y> - (D^_t S)(X, Y)`.
fn direct_form(d: &PointData, s: &DMatrix<f64>, dhat_s: &DMatrix<f64>) -> DMatrix<f64> {
    let sa = d.sharp(s) + &d.a_sharp;
    sym(&(&d.curvature_form + &d.dtorsion_form)) + sa.transpose() * sa - sym(dhat_s)
}

/// Runs the canonical pipeline at `p`.
pub fn canonical_curvature(conn: &Connection, p: &CovectorPoint, opts: &CanonicalOptions) -> Result<CanonicalCurvature> {
    let class = twist::classify_point(conn, p, opts.rank_tol)?;
    if !class.ample || class.irregular {
        return Err(Error::DegenerateCovector(format!("diagram {} is not ample and regular; only the classification is available", class.diagram.label())));
    }
    let reduced = class.diagram.reduced();
    let shape = Shape::of(&reduced).ok_or_else(|| Error::UnsupportedDiagram(class.diagram.columns.clone()))?;
    let scale = covector_scale(p);
    let margin = regularity_margin(&class.ranks, opts.rank_tol);
    let mut delta = opts.step * step_factor(margin) / scale;
    let mut best = curvature_at_step(conn, p, &class.diagram, shape, delta, opts)?;
    best.margin = margin;
    let mut last_change = f64::INFINITY;
    for _ in 0..MAX_REFINEMENTS {
        let Ok(finer) = curvature_at_step(conn, p, &class.diagram, shape, delta / 2.0, opts) else { break };
        let change = best
            .ricci
            .iter()
            .zip(&finer.ricci)
            .map(|(a, b)| (a.value - b.value).abs() / b.value.abs().max(scale * scale))
            .fold(0.0, f64::max);
        if change > last_change {
            // rounding now dominates the truncation error
            break;
        }
        delta /= 2.0;
        best = CanonicalCurvature { margin, ..finer };
        last_change = change;
        if change <= REFINE_TOL {
            break;
        }
    }
    Ok(best)
}

/// Relative change of the Ricci values between two step sizes below which
/// the finer one is accepted.
pub const REFINE_TOL: f64 = 1e-9;
/// Largest number of step halvings per covector.
const MAX_REFINEMENTS: usize = 5;

fn curvature_at_step(conn: &Connection, p: &CovectorPoint, diagram: &YoungDiagram, shape: Shape, delta: f64, opts: &CanonicalOptions) -> Result<CanonicalCurvature> {
    let scale = covector_scale(p);
    let levels = shape.levels();
    let half = STENCIL_REACH * levels;
    let grid = FlowGrid::build(conn, p, half, delta)?;
    let n = conn.model.dim();
    let d1 = conn.model.d1();
    let hw = half as i64;
    let at = |lvl: Vec<DMatrix<f64>>, reach: usize| move |j: i64| lvl[(j + reach as i64) as usize].clone();

    let data: Vec<PointData> = grid
        .indices(half)
        .map(|j| point_data(conn, &grid.sample(j).point, diagram, opts.rank_tol))
        .collect::<Result<_>>()?;
    let pd = |j: i64| &data[(j + hw) as usize];
    let pr_h = pd(0).pr_h();

    match shape {
        Shape::Riemannian => {
            // S lives on the whole tangent space; W_1 = 0.
            let g: Vec<DMatrix<f64>> = grid.indices(half).map(|j| pd(j).s_hh.clone()).collect();
            let get = at(g, half);
            let dg = grid.derivative(0, TensorKind::Bilinear, false, &get);
            let dhat = grid.derivative(0, TensorKind::Bilinear, true, &get);
            let d0 = pd(0);
            let zero = DMatrix::zeros(n, n);
            let k00 = Expansion { d: d0, s: &d0.s_hh }.entry(&pr_h, &pr_h, &zero, &zero, &d0.s_hh, &dg);
            let direct = direct_form(d0, &d0.s_hh, &dhat);
            let mismatch = (&k00 - &direct).abs().max() / direct.abs().max().max(scale * scale);
            let value = k00.trace();
            let ricci = vec![RicciEntry { a: 1, b: 1, value, check: Some(direct.trace()) }];
            let normalization = NormalizationReport {
                conditions: vec![("i".into(), 0.0, 0), ("ii".into(), 0.0, 0), ("iii".into(), 0.0, 0), ("iv".into(), 0.0, 0), ("v".into(), 0.0, 0)],
                expansion_mismatch: mismatch,
                kernel_residual: 0.0,
                completion_residual: 0.0,
            };
            Ok(CanonicalCurvature {
                point: p.clone(),
                diagram: diagram.clone(),
                shape,
                step: delta,
                margin: f64::INFINITY,
                s_full: d0.s_hh.clone(),
                k: vec![((0, 0), k00)],
                r_direct: direct,
                ricci,
                normalization,
                base: d0.clone(),
            })
        }
        Shape::Y21 => y21(conn, &grid, &data, diagram.clone(), opts, n, d1),
    }
}

fn y21(_conn: &Connection, grid: &FlowGrid, data: &[PointData], diagram: YoungDiagram, opts: &CanonicalOptions, n: usize, d1: usize) -> Result<CanonicalCurvature> {
    let half = grid.half_width;
    let hw = half as i64;
    let pd = |j: i64| &data[(j + hw) as usize];
    let pr_h = pd(0).pr_h();
    let zero = DMatrix::<f64>::zeros(n, n);

    // level 1: derivative of W_1, then S on W_1 Box^{1,1} x horizontal
    let r1 = half - STENCIL_REACH;
    let wp: Vec<DMatrix<f64>> = grid.indices(half).map(|j| pd(j).wp1.clone()).collect();
    let mut sigma = Vec::new(); // Sigma u = S^#(W_1 u), horizontal-valued map on horizontal u
    let mut completion_residual: f64 = 0.0;
    for j in grid.indices(r1) {
        let d = pd(j);
        let dw = grid.derivative(j, TensorKind::Endomorphism, false, |i| wp[(i + hw) as usize].clone());
        let first = &d.boxes.proj[0];
        let bracket = (&dw + (&d.polys[1] + &d.a_sharp) * &d.wp1 + &d.wp1 * &d.q) * first;
        let vert = (DMatrix::identity(n, n) - &pr_h) * &bracket;
        let size = bracket.norm().max(d.wp1.norm() * covector_scale(&d.point)).max(1e-300);
        completion_residual = completion_residual.max(vert.norm() / size);
        sigma.push(-(&pr_h * bracket));
    }
    if completion_residual > COMPLETION_TOL {
        return Err(Error::Inconsistent(format!(
            "S cannot be completed on W_1 Box: vertical residual {completion_residual:.3e}"
        )));
    }
    let sig = |j: i64| &sigma[(j + r1 as i64) as usize];

    // basis V = [horizontal | W_1 u_k] and the partial ambient S (unknown block zero)
    let basis_v = |j: i64| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let d = pd(j);
        let w = &d.wp1 * &d.boxes.bases[0];
        let v = hcat(&[&horizontal_basis(n, d1), &w], n);
        if v.ncols() != n {
            return Err(Error::Inconsistent("W_1 Box^{1,1} does not complement the horizontal space".into()));
        }
        let vi = v.clone().try_inverse().ok_or_else(|| Error::Inconsistent("W_1 Box^{1,1} is not transversal".into()))?;
        Ok((v, vi))
    };
    let s_partial = |j: i64, s_ww: Option<&DMatrix<f64>>| -> Result<DMatrix<f64>> {
        let d = pd(j);
        let (_, vi) = basis_v(j)?;
        let u1 = &d.boxes.bases[0];
        let mut sv = DMatrix::zeros(n, n);
        sv.view_mut((0, 0), (d1, d1)).copy_from(&d.s_hh.view((0, 0), (d1, d1)));
        // S(W_1 u_k, X_j) = (Sigma u_k)_j
        let se = sig(j) * u1;
        for k in 0..u1.ncols() {
            for jj in 0..d1 {
                sv[(d1 + k, jj)] = se[(jj, k)];
                sv[(jj, d1 + k)] = se[(jj, k)];
            }
        }
        if let Some(ww) = s_ww {
            let m = u1.transpose() * ww * u1;
            sv.view_mut((d1, d1), (n - d1, n - d1)).copy_from(&m);
        }
        Ok(ambient(&vi, &sv))
    };

    // G_00 = S on horizontal, G_01 = Sigma viewed as S(u, W_1 v)
    let g00: Vec<DMatrix<f64>> = grid.indices(half).map(|j| pd(j).s_hh.clone()).collect();
    let g01: Vec<DMatrix<f64>> = grid.indices(r1).map(|j| sig(j).clone()).collect();

    // level 2: S on W_1 Box x W_1 Box from the skew condition on K_01
    let r2 = r1 - STENCIL_REACH;
    let mut omega = Vec::new();
    let mut s_full = Vec::new();
    for j in grid.indices(r2) {
        let d = pd(j);
        let s0 = s_partial(j, None)?;
        let dg01 = grid.derivative(j, TensorKind::Bilinear, false, |i| g01[(i + r1 as i64) as usize].clone());
        let rest = Expansion { d, s: &s0 }.entry(&pr_h, &d.wp1, &d.wp1, &zero, sig(j), &dg01);
        let first = &d.boxes.proj[0];
        let mut om = -(first * sym(&rest) * first);
        if opts.perturbation != 0.0 {
            om += first * opts.perturbation;
        }
        s_full.push(s_partial(j, Some(&om))?);
        omega.push(om);
    }
    let full = |j: i64| &s_full[(j + r2 as i64) as usize];

    // level 3: entries at the base point
    let d0 = pd(0);
    let s0 = full(0);
    let ex = Expansion { d: d0, s: s0 };
    let dg00 = grid.derivative(0, TensorKind::Bilinear, false, |i| g00[(i + hw) as usize].clone());
    let k00 = ex.entry(&pr_h, &pr_h, &d0.wp1, &d0.wp1, &d0.s_hh, &dg00);
    let dg01 = grid.derivative(0, TensorKind::Bilinear, false, |i| g01[(i + r1 as i64) as usize].clone());
    let k01 = ex.entry(&pr_h, &d0.wp1, &d0.wp1, &zero, sig(0), &dg01);
    let dg11 = grid.derivative(0, TensorKind::Bilinear, false, |i| omega[(i + r2 as i64) as usize].clone());
    let k11 = ex.entry(&d0.wp1, &d0.wp1, &zero, &zero, &omega[r2], &dg11);
    let dhat = grid.derivative(0, TensorKind::Bilinear, true, |i| full(i).clone());
    let direct = direct_form(d0, s0, &dhat);

    let u1 = &d0.boxes.bases[0];
    let u2 = &d0.boxes.bases[1];
    let w = &d0.wp1 * u1;
    let tr = |m: &DMatrix<f64>, b: &DMatrix<f64>| (b.transpose() * m * b).trace();
    let ricci = vec![
        RicciEntry { a: 1, b: 1, value: tr(&k00, u1), check: Some(tr(&direct, u1)) },
        RicciEntry { a: 2, b: 1, value: tr(&k00, u2), check: Some(tr(&direct, u2)) },
        RicciEntry { a: 1, b: 2, value: tr(&k11, u1), check: Some(tr(&direct, &w)) },
    ];

    // normalization: the only non-vacuous condition for this shape is the
    // skew-symmetry of K_01 on Box^{1,1}; tested with the direct form
    let cross = u1.transpose() * &direct * &w;
    // residuals are relative to the size of the compared entries, floored
    // at the homogeneity scale of each entry
    let h = covector_scale(&d0.point).max(1e-100);
    let cond_i = (&cross + cross.transpose()).abs().max() / cross.abs().max().max(h.powi(3));
    let mut mismatch: f64 = 0.0;
    let hb = hcat(&[u1, u2], n);
    let id = DMatrix::identity(n, n);
    for (km, left, right, ba, bb, deg) in [(&k00, &id, &id, &hb, &hb, 2), (&k01, &id, &d0.wp1, &hb, u1, 3), (&k11, &d0.wp1, &d0.wp1, u1, u1, 4)] {
        let lhs = ba.transpose() * km * bb;
        let rhs = (left * ba).transpose() * &direct * (right * bb);
        mismatch = mismatch.max((&lhs - &rhs).abs().max() / rhs.abs().max().max(h.powi(deg)));
    }
    let kernel_residual = (&d0.wp1_raw * u2).norm() / (d0.wp1_raw.norm().max(1e-300));
    let k = u1.ncols();
    let normalization = NormalizationReport {
        conditions: vec![
            ("i".into(), cond_i, k * k),
            ("ii".into(), 0.0, 0),
            ("iii".into(), 0.0, 0),
            ("iv".into(), 0.0, 0),
            ("v".into(), 0.0, 0),
        ],
        expansion_mismatch: mismatch,
        kernel_residual,
        completion_residual,
    };
    Ok(CanonicalCurvature {
        point: d0.point.clone(),
        diagram,
        shape: Shape::Y21,
        step: grid.delta,
        margin: f64::INFINITY,
        s_full: s0.clone(),
        k: vec![((0, 0), k00), ((0, 1), k01), ((1, 1), k11)],
        r_direct: direct,
        ricci,
        normalization,
        base: d0.clone(),
    })
}

/// Ricci curvature of the last box from its closed form for the compatible
/// connection:
///
/// `tr p R(#p, .) . + tr p((nabla_. T)(#p, .)) + |p T(pr ., pr .)|^2 / 4
///  - |C_p pr .|^2 - tr p T(., C_p .)`
///
/// where the box is the kernel of `T(#p, .)` on the horizontal space and
/// `C_p` maps it into the complement by
/// `T(#p, C_p u) = -(nabla_{#p} T)(#p, u) + sum_i p(T(#p, X_i)) T(X_i, u)`.
#[derive(Debug, Clone, Serialize)]
pub struct FinalBox {
    pub rank: usize,
    pub ricci: f64,
    /// `ricci / (rank - 1)`, when the rank exceeds one.
    pub normalized: Option<f64>,
    pub solve_residual: f64,
}

pub fn final_box_ricci(conn: &Connection, p: &CovectorPoint, rank_tol: f64) -> Result<FinalBox> {
    let n = conn.model.dim();
    let d1 = conn.model.d1();
    let g = conn.geometry(&p.x, 1)?;
    let h = &p.h;
    let v = crate::model::sharp_components(h, d1);
    let scale = covector_scale(p).max(1e-300);
    // T(#p, .) on the horizontal space
    let mut tv = DMatrix::zeros(n, d1);
    for i in 0..d1 {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let col = g.torsion_apply(&v, &e);
        for (r, x) in col.iter().enumerate() {
            tv[(r, i)] = *x;
        }
    }
    let (vals, vb) = svd_sorted(&tv);
    let thr = rank_tol * vals.first().copied().unwrap_or(0.0).max(scale);
    let rank_img = vals.iter().filter(|s| **s > thr).count();
    let kernel = vb.columns(rank_img, d1 - rank_img).into_owned();
    let comp = vb.columns(0, rank_img).into_owned();
    let lift = |m: &DMatrix<f64>| {
        let mut out = DMatrix::zeros(n, m.ncols());
        out.view_mut((0, 0), (d1, m.ncols())).copy_from(m);
        out
    };
    let kernel = lift(&kernel);
    let comp = lift(&comp);
    let rank = kernel.ncols();
    // T* p as a horizontal vector: sum_i p(T(#p, X_i)) X_i
    let mut tsp = vec![0.0; n];
    for (i, slot) in tsp.iter_mut().enumerate().take(d1) {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let t = g.torsion_apply(&v, &e);
        *slot = t.iter().zip(h).map(|(a, b)| a * b).sum();
    }
    let lhs = &tv * comp.rows(0, d1);
    let mut rhs = DMatrix::zeros(n, rank);
    for k in 0..rank {
        let u: Vec<f64> = kernel.column(k).iter().copied().collect();
        let a = g.dtorsion_apply(&v, &v, &u);
        let b = g.torsion_apply(&tsp, &u);
        for r in 0..n {
            rhs[(r, k)] = -a[r] + b[r];
        }
    }
    let (x, solve_residual) = lstsq(&lhs, &rhs, scale * scale);
    let cp = &comp * x; // n x rank, images C_p u_k
    let cf = curvature_form(&g, h, &v);
    let tf = dtorsion_form(&g, h, &v);
    let mut ric = 0.0;
    for k in 0..rank {
        let u = kernel.column(k);
        ric += (u.transpose() * &cf * u)[(0, 0)];
        ric += (u.transpose() * &tf * u)[(0, 0)];
        let cu = cp.column(k);
        ric -= cu.norm_squared();
        let uu: Vec<f64> = u.iter().copied().collect();
        let cc: Vec<f64> = cu.iter().copied().collect();
        let t = g.torsion_apply(&uu, &cc);
        ric -= t.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
        for l in 0..rank {
            let ul: Vec<f64> = kernel.column(l).iter().copied().collect();
            let t = g.torsion_apply(&uu, &ul);
            let val: f64 = t.iter().zip(h).map(|(a, b)| a * b).sum();
            ric += 0.25 * val * val;
        }
    }
    Ok(FinalBox {
        rank,
        ricci: ric,
        normalized: if rank > 1 { Some(ric / (rank as f64 - 1.0)) } else { None },
        solve_residual,
    })
}

/// Samples of a canonical horizontal frame `D_t X = Q X` along an extremal.
#[derive(Debug, Clone)]
pub struct CanonicalFrame {
    pub times: Vec<f64>,
    /// Horizontal frame (columns) in the moving frame at each time.
    pub frames: Vec<DMatrix<f64>>,
    /// The transport matrix of the connection at each time.
    pub transports: Vec<DMatrix<f64>>,
    /// Largest deviation from orthonormality along the run.
    pub orthonormality_drift: f64,
}

/// Integrates the canonical horizontal frame on `[0, t_end]`, starting from
/// an orthonormal basis adapted to the boxes at `p`.
pub fn canonical_frame(conn: &Connection, p: &CovectorPoint, t_end: f64, samples: usize, rank_tol: f64) -> Result<CanonicalFrame> {
    let class = twist::classify_point(conn, p, rank_tol)?;
    if !class.ample {
        return Err(Error::DegenerateCovector(format!("diagram {} is not ample", class.diagram.label())));
    }
    let n = conn.model.dim();
    let d1 = conn.model.d1();
    let field = crate::flow::FlowField::new(conn, crate::flow::Carry::Nabla);
    let base_len = field.state_len();
    let mut y0 = field.initial_state(p);
    let d0 = point_data(conn, p, &class.diagram, rank_tol)?;
    let start = hcat(&d0.boxes.bases.iter().collect::<Vec<_>>(), n);
    // frame coefficients with respect to the transported basis
    for c in 0..d1 {
        for r in 0..n {
            y0.push(start[(r, c)]);
        }
    }
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        field.eval(&y[..base_len], &mut dy[..base_len])?;
        let x = y[..n].to_vec();
        let h = y[n..2 * n].to_vec();
        let m = DMatrix::from_row_slice(n, n, &y[2 * n..2 * n + n * n]);
        let mi = m.clone().try_inverse().ok_or_else(|| Error::Integration("transport became singular".into()))?;
        let d = point_data(conn, &CovectorPoint::new(x, h), &class.diagram, rank_tol)?;
        let qt = &mi * &d.q * &m;
        let coef = DMatrix::from_column_slice(n, d1, &y[base_len..]);
        let dc = qt * coef;
        dy[base_len..].copy_from_slice(dc.as_slice());
        Ok(())
    };
    let times: Vec<f64> = (0..=samples).map(|k| t_end * k as f64 / samples as f64).collect();
    let sol = ode::solve(rhs, 0.0, &y0, t_end, &times, &Tolerances::tight())?;
    if sol.truncated {
        return Err(Error::Domain { point: sol.final_state()[..n].to_vec() });
    }
    let mut frames = Vec::new();
    let mut transports = Vec::new();
    let mut out_t = Vec::new();
    let mut drift: f64 = 0.0;
    let initial = (0.0, y0.clone());
    for (t, y) in std::iter::once(&initial).chain(sol.stop_states.iter()) {
        let m = DMatrix::from_row_slice(n, n, &y[2 * n..2 * n + n * n]);
        let coef = DMatrix::from_column_slice(n, d1, &y[base_len..]);
        let fr = &m * coef;
        let gram = fr.transpose() * &fr;
        drift = drift.max((gram - DMatrix::identity(d1, d1)).abs().max());
        out_t.push(*t);
        frames.push(fr);
        transports.push(m);
    }
    Ok(CanonicalFrame {
        times: out_t,
        frames,
        transports,
        orthonormality_drift: drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo;

    fn run(spec: &str, kind: crate::connection::ConnectionKind, x: Vec<f64>, h: Vec<f64>) -> CanonicalCurvature {
        let entry = zoo::lookup(spec).unwrap();
        let conn = Connection::build(entry.model.clone(), kind);
        canonical_curvature(&conn, &CovectorPoint::new(x, h), &CanonicalOptions::default()).unwrap()
    }

    use crate::connection::ConnectionKind::{Group, Nice};

    #[test]
    fn heisenberg_ricci() {
        for kind in [Nice, Group] {
            for hz in [-2.0, 0.0, 1.3] {
                let c = run("heisenberg", kind, vec![0.2, -0.1, 0.4], vec![0.6, 0.8, hz]);
                assert!((c.ricci(1, 1).unwrap() - hz * hz).abs() < 1e-6, "{kind:?} {:?}", c.ricci);
                assert!(c.ricci(1, 2).unwrap().abs() < 1e-5, "{:?}", c.ricci);
                assert!(c.ricci(2, 1).unwrap().abs() < 1e-6, "{:?}", c.ricci);
                assert!(c.normalization.max_residual() < 1e-6);
                assert!(c.normalization.expansion_mismatch < 1e-5, "{}", c.normalization.expansion_mismatch);
            }
        }
    }

    #[test]
    fn contact_ricci() {
        let c = run("contact3d:1", Nice, vec![0.3, 0.2, 0.0], vec![0.6, 0.8, 1.5]);
        assert!((c.ricci(1, 1).unwrap() - (1.0 + 2.25)).abs() < 1e-5, "{:?}", c.ricci);
    }

    #[test]
    fn surface_ricci_both_connections() {
        for kind in [Nice, Group] {
            let c = run("surface:1", kind, vec![1.0, 0.3], vec![0.6, -0.8]);
            assert!((c.ricci(1, 1).unwrap() - 1.0).abs() < 1e-6, "{kind:?} {:?}", c.ricci);
            assert!(c.normalization.expansion_mismatch < 1e-6);
        }
    }

    fn unit_horizontal(mut h: Vec<f64>) -> Vec<f64> {
        let norm: f64 = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        h.iter_mut().for_each(|v| *v /= norm);
        h
    }

    // H-type closed forms with flat Clifford structure, from the term-by-term
    // evaluation: Ric^{2,1} = (d1 - d2 - 1) h^2 / 4,
    // Ric^{1,1} = (11 d2 - 3) h^2 / 8, Ric^{1,2} = -45 (d2 - 1) h^4 / 256.
    fn h_type_oracle(d1: f64, d2: f64, h: f64) -> [f64; 3] {
        let h2 = h * h;
        [(d1 - d2 - 1.0) * h2 / 4.0, (11.0 * d2 - 3.0) * h2 / 8.0, -45.0 * (d2 - 1.0) * h2 * h2 / 256.0]
    }

    fn check_h_type(c: &CanonicalCurvature, want: [f64; 3], rel: f64) {
        let got = [c.ricci(2, 1).unwrap(), c.ricci(1, 1).unwrap(), c.ricci(1, 2).unwrap()];
        for (g, w) in got.iter().zip(want) {
            let err = if w == 0.0 { g.abs() } else { (g - w).abs() / w.abs() };
            assert!(err < rel, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn quaternionic_ricci() {
        for (kind, hv) in [(Nice, 0.5), (Nice, 1.0), (Nice, 2.0), (Group, 1.0)] {
            let mut hh = unit_horizontal(vec![0.3, -0.2, 0.5, 0.1, 0.4, -0.6, 0.2, 0.3]);
            hh.extend_from_slice(&[hv / 3f64.sqrt(); 3]);
            let c = run("quaternionic-heisenberg:2", kind, vec![0.1; 11], hh);
            check_h_type(&c, h_type_oracle(8.0, 3.0, hv), 1e-4);
            assert!(c.normalization.max_residual() < 1e-5);
        }
    }

    #[test]
    fn higher_heisenberg_ricci() {
        let mut hh = unit_horizontal(vec![0.3, -0.2, 0.5, 0.7]);
        hh.push(1.7);
        let c = run("heisenberg:2", Nice, vec![0.2, 0.1, -0.3, 0.4, 0.0], hh);
        check_h_type(&c, h_type_oracle(4.0, 1.0, 1.7), 1e-5);
    }

    #[test]
    fn final_box_matches_pipeline() {
        let entry = zoo::lookup("quaternionic-heisenberg:2").unwrap();
        let conn = Connection::build(entry.model.clone(), Nice);
        let mut h = vec![0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0];
        h.extend_from_slice(&[0.7, -0.4, 0.9]);
        let p = CovectorPoint::new(vec![0.0; 11], h);
        let fb = final_box_ricci(&conn, &p, 1e-7).unwrap();
        let c = canonical_curvature(&conn, &p, &CanonicalOptions::default()).unwrap();
        assert_eq!(fb.rank, 5);
        let pipe = c.ricci(2, 1).unwrap();
        assert!((fb.ricci - pipe).abs() < 1e-5 * pipe.abs(), "{} vs {}", fb.ricci, pipe);
    }

    #[test]
    fn riemannian_frame_is_parallel() {
        let entry = zoo::lookup("surface:1").unwrap();
        let conn = Connection::build(entry.model.clone(), Nice);
        let p = CovectorPoint::new(vec![1.0, 0.0], vec![0.6, 0.8]);
        let fr = canonical_frame(&conn, &p, 1.0, 4, 1e-7).unwrap();
        for (f, m) in fr.frames.iter().zip(&fr.transports) {
            let start = &fr.frames[0];
            let expect = m * start;
            assert!((f - &expect).abs().max() < 1e-7, "{f} {expect}");
        }
        assert!(fr.orthonormality_drift < 1e-9);
    }

    #[test]
    fn heisenberg_frame_maps() {
        let (r, h) = (1.5, 0.7);
        let c = run("heisenberg", Nice, vec![0.3, 0.1, 0.0], vec![r * 0.6, r * 0.8, h]);
        let d = &c.base;
        let y0 = DVector::from_vec(vec![0.6, 0.8, 0.0]);
        let y1 = d.boxes.bases[0].column(0).into_owned();
        assert!(y1.dot(&y0).abs() < 1e-12);
        // W_1 Y_1 = r Z_0 - H_{Z_0} Y_0
        let w = &d.wp1 * &y1;
        assert!((w[2].abs() - r).abs() < 1e-9);
        let hz = h * w[2] / r;
        for i in 0..2 {
            assert!((w[i] + hz * y0[i]).abs() < 1e-9, "{w}");
        }
        assert!((&d.wp1 * &y0).norm() < 1e-9);
        // S on the horizontal space: only the mixed entry is non-zero
        let s = &d.s_hh;
        let e = |a: &DVector<f64>, b: &DVector<f64>| (a.transpose() * s * b)[(0, 0)];
        assert!(e(&y0, &y0).abs() < 1e-9 && e(&y1, &y1).abs() < 1e-9);
        assert!((e(&y0, &y1).abs() - 0.5 * h).abs() < 1e-9);
        // S(W_1 Y_1, Y_1) = H^2 / 2
        let sw = (w.transpose() * &c.s_full * &y1)[(0, 0)];
        assert!((sw - 0.5 * h * h).abs() < 1e-7, "{sw}");
    }

    #[test]
    fn perturbed_s_breaks_normalization_linearly() {
        let entry = zoo::lookup("heisenberg").unwrap();
        let conn = Connection::build(entry.model.clone(), Nice);
        let p = CovectorPoint::new(vec![0.1, 0.2, 0.0], vec![0.6, 0.8, 1.2]);
        let res: Vec<f64> = [1e-3, 1e-2, 1e-1]
            .iter()
            .map(|&eps| {
                let opts = CanonicalOptions { perturbation: eps, ..Default::default() };
                canonical_curvature(&conn, &p, &opts).unwrap().normalization.max_residual()
            })
            .collect();
        assert!(res[0] > 1e-5);
        for w in res.windows(2) {
            assert!((w[1] / w[0] - 10.0).abs() < 0.1, "{res:?}");
        }
    }
}
