//! Sub-Riemannian structures given by an orthonormal frame on a chart.
//!
//! The first `horizontal_rank` frame fields span the horizontal bundle and
//! are orthonormal for the sub-Riemannian metric; the full frame is
//! declared orthonormal for a taming Riemannian metric. Covectors are
//! stored through their frame components `H_i = p(X_i)`, which makes the
//! cometric the diagonal matrix `diag(1,..,1,0,..,0)`.

use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::jet::{Jet, JetSpace};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::OnceLock;

/// Frame vector fields, `fields[i][a]` being the `d/dx_a` coefficient of `X_i`.
#[derive(Debug, Clone)]
pub struct Frame {
    pub fields: Vec<Vec<ScalarExpr>>,
}

impl Frame {
    pub fn dim(&self) -> usize {
        self.fields.len()
    }

    /// Coefficient matrix with column `i` holding `X_i`.
    pub fn matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |a, i| self.fields[i][a].eval(x))
    }
}

/// Axis-aligned coordinate box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub bounds: Vec<[f64; 2]>,
}

impl Domain {
    pub fn unbounded(n: usize) -> Self {
        Domain {
            bounds: vec![[f64::NEG_INFINITY, f64::INFINITY]; n],
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.bounds.len()
            && x.iter()
                .zip(&self.bounds)
                .all(|(v, b)| v.is_finite() && *v >= b[0] && *v <= b[1])
    }

    /// Midpoint of the box, with infinite sides replaced by zero.
    pub fn center(&self) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|b| {
                if b[0].is_finite() && b[1].is_finite() {
                    0.5 * (b[0] + b[1])
                } else if b[0].is_finite() {
                    b[0].max(0.0)
                } else if b[1].is_finite() {
                    b[1].min(0.0)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// A covector given by its base point and frame components `H_i = p(X_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovectorPoint {
    pub x: Vec<f64>,
    pub h: Vec<f64>,
}

impl CovectorPoint {
    pub fn new(x: Vec<f64>, h: Vec<f64>) -> Self {
        CovectorPoint { x, h }
    }

    pub fn scaled(&self, c: f64) -> Self {
        CovectorPoint {
            x: self.x.clone(),
            h: self.h.iter().map(|v| v * c).collect(),
        }
    }
}

pub struct SubRiemannianModel {
    pub name: String,
    pub frame: Frame,
    pub horizontal_rank: usize,
    pub domain: Domain,
    spaces: [OnceLock<JetSpace>; 4],
}

impl std::fmt::Debug for SubRiemannianModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubRiemannianModel")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("horizontal_rank", &self.horizontal_rank)
            .finish()
    }
}

impl Clone for SubRiemannianModel {
    fn clone(&self) -> Self {
        SubRiemannianModel::new(
            self.name.clone(),
            self.frame.clone(),
            self.horizontal_rank,
            self.domain.clone(),
        )
        .expect("cloning a validated model")
    }
}

/// Structure constants together with the Taylor data they were computed from.
pub struct FrameJets<'a> {
    pub space: &'a JetSpace,
    /// `coeff[a * n + i]`: jet of the `d/dx_a` coefficient of `X_i`.
    pub coeff: Vec<Jet>,
    /// `c[(k * n + i) * n + j]`: jet of `c^k_ij`, exact to `order`.
    pub c: Vec<Jet>,
    pub order: usize,
}

impl SubRiemannianModel {
    pub fn new(name: impl Into<String>, frame: Frame, d1: usize, domain: Domain) -> Result<Self> {
        let n = frame.dim();
        if n == 0 {
            return Err(Error::Model("empty frame".into()));
        }
        if d1 == 0 || d1 > n {
            return Err(Error::Model(format!(
                "horizontal rank {d1} must lie in 1..={n}"
            )));
        }
        for (i, f) in frame.fields.iter().enumerate() {
            if f.len() != n {
                return Err(Error::Model(format!(
                    "frame field {} has {} coefficients, expected {n}",
                    i + 1,
                    f.len()
                )));
            }
            if f.iter().any(|e| e.arity() > n) {
                return Err(Error::Model(format!(
                    "frame field {} references a coordinate beyond x{n}",
                    i + 1
                )));
            }
        }
        if domain.bounds.len() != n {
            return Err(Error::Model(format!(
                "domain has {} intervals, expected {n}",
                domain.bounds.len()
            )));
        }
        if domain.bounds.iter().any(|b| !(b[0] < b[1])) {
            return Err(Error::Model("domain intervals must satisfy lo < hi".into()));
        }
        Ok(SubRiemannianModel {
            name: name.into(),
            frame,
            horizontal_rank: d1,
            domain,
            spaces: Default::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn d1(&self) -> usize {
        self.horizontal_rank
    }

    pub fn jet_space(&self, order: usize) -> &JetSpace {
        self.spaces[order].get_or_init(|| JetSpace::new(self.dim(), order))
    }

    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(Error::Domain { point: x.to_vec() })
        }
    }

    /// Frame components of `#p`: the horizontal part of `H`, zero elsewhere.
    pub fn sharp(&self, p: &CovectorPoint) -> Result<Vec<f64>> {
        self.check_domain(&p.x)?;
        Ok(sharp_components(&p.h, self.d1()))
    }

    pub fn hamiltonian(&self, p: &CovectorPoint) -> f64 {
        hamiltonian_value(&p.h, self.d1())
    }

    /// Coefficient matrix of the frame at `x`; errors on a near-singular frame.
    pub fn frame_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let f = self.frame.matrix(x);
        let sv = f.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        if !(min > 1e-9 * max) {
            return Err(Error::FrameDegenerate { point: x.to_vec() });
        }
        Ok(f)
    }

    /// Structure constants `[X_i, X_j] = sum_k c^k_ij X_k`, indexed
    /// `(k * n + i) * n + j`.
    pub fn structure_constants(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_domain(x)?;
        let jets = self.frame_jets(x, 0)?;
        Ok(jets.c.iter().map(|j| j[0]).collect())
    }

    /// Structure-constant jets exact to `order` at `x`.
    pub fn frame_jets(&self, x: &[f64], order: usize) -> Result<FrameJets<'_>> {
        let n = self.dim();
        let sp = self.jet_space(order + 1);
        let mut coeff = Vec::with_capacity(n * n);
        for a in 0..n {
            for i in 0..n {
                coeff.push(self.frame.fields[i][a].eval_jet(sp, x));
            }
        }
        let f0 = DMatrix::from_fn(n, n, |a, i| coeff[a * n + i][0]);
        let g0 = f0
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::FrameDegenerate { point: x.to_vec() })?;
        let sv = f0.singular_values();
        if !(sv.min() > 1e-9 * sv.max()) {
            return Err(Error::FrameDegenerate { point: x.to_vec() });
        }
        // Inverse of F = F0 + N as sum_k (-G0 N)^k G0 with N nilpotent.
        let nil: Vec<Jet> = coeff
            .iter()
            .map(|j| {
                let mut m = j.clone();
                m[0] = 0.0;
                m
            })
            .collect();
        let mut kmat = vec![sp.zero(); n * n];
        for a in 0..n {
            for c in 0..n {
                let e = &mut kmat[a * n + c];
                for b in 0..n {
                    sp.axpy(e, -g0[(a, b)], &nil[b * n + c]);
                }
            }
        }
        let mut inv: Vec<Jet> = (0..n * n).map(|idx| sp.constant(g0[(idx / n, idx % n)])).collect();
        let mut term = inv.clone();
        for _ in 0..order.max(1) {
            let mut next = vec![sp.zero(); n * n];
            for a in 0..n {
                for b in 0..n {
                    let k = &kmat[a * n + b];
                    if JetSpace::is_zero(k) {
                        continue;
                    }
                    for c in 0..n {
                        let t = &term[b * n + c];
                        if JetSpace::is_zero(t) {
                            continue;
                        }
                        sp.mul_acc(&mut next[a * n + c], 1.0, k, t);
                    }
                }
            }
            for (e, t) in inv.iter_mut().zip(&next) {
                sp.add_assign(e, t);
            }
            term = next;
        }
        // Coordinate partials of coefficients.
        let mut dcoeff = Vec::with_capacity(n * n * n);
        for j in &coeff {
            for b in 0..n {
                dcoeff.push(sp.derivative(j, b));
            }
        }
        let dco = |a: usize, i: usize, b: usize| &dcoeff[(a * n + i) * n + b];
        let mut c = vec![sp.zero(); n * n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let mut bracket = vec![sp.zero(); n];
                for (a, br) in bracket.iter_mut().enumerate() {
                    for b in 0..n {
                        sp.mul_acc(br, 1.0, &coeff[b * n + i], dco(a, j, b));
                        sp.mul_acc(br, -1.0, &coeff[b * n + j], dco(a, i, b));
                    }
                }
                for k in 0..n {
                    let mut e = sp.zero();
                    for (a, br) in bracket.iter().enumerate() {
                        sp.mul_acc(&mut e, 1.0, &inv[k * n + a], br);
                    }
                    sp.truncate(&mut e, order);
                    c[(k * n + j) * n + i] = sp.scale(&e, -1.0);
                    c[(k * n + i) * n + j] = e;
                }
            }
        }
        Ok(FrameJets {
            space: sp,
            coeff,
            c,
            order,
        })
    }

    /// Checks that the frame is non-degenerate at the box center and at
    /// `samples` deterministic points of the domain.
    pub fn validate_frame(&self, samples: usize) -> Result<()> {
        let center = self.domain.center();
        self.frame_matrix(&center)?;
        let n = self.dim();
        for s in 0..samples {
            let x: Vec<f64> = (0..n)
                .map(|a| {
                    let b = self.domain.bounds[a];
                    let lo = b[0].max(center[a] - 5.0);
                    let hi = b[1].min(center[a] + 5.0);
                    let frac = ((s * 7 + a * 3) % 11) as f64 / 10.0;
                    lo + (hi - lo) * (0.05 + 0.9 * frac)
                })
                .collect();
            if self.domain.contains(&x) {
                self.frame_matrix(&x)?;
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            name: self.name.clone(),
            dim: self.dim(),
            horizontal_rank: self.d1(),
            frame: self
                .frame
                .fields
                .iter()
                .map(|f| f.iter().map(|e| e.to_string()).collect())
                .collect(),
            domain: self
                .domain
                .bounds
                .iter()
                .map(|b| [finite_or_big(b[0]), finite_or_big(b[1])])
                .collect(),
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        let n = file.dim;
        if file.frame.len() != n {
            return Err(Error::Model(format!(
                "frame has {} fields, expected dim = {n}",
                file.frame.len()
            )));
        }
        let mut fields = Vec::with_capacity(n);
        for row in &file.frame {
            let parsed = row
                .iter()
                .map(|s| ScalarExpr::parse(s, n))
                .collect::<Result<Vec<_>>>()?;
            fields.push(parsed);
        }
        let model = SubRiemannianModel::new(
            file.name.clone(),
            Frame { fields },
            file.horizontal_rank,
            Domain {
                bounds: file
                    .domain
                    .iter()
                    .map(|b| [big_to_infinite(b[0]), big_to_infinite(b[1])])
                    .collect(),
            },
        )?;
        model.validate_frame(8)?;
        Ok(model)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_file(&file)
    }
}

fn finite_or_big(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        v.signum() * 1e300
    }
}

fn big_to_infinite(v: f64) -> f64 {
    if v.abs() >= 1e300 {
        v.signum() * f64::INFINITY
    } else {
        v
    }
}

/// On-disk model description. Unbounded sides are written as `±1e300`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub name: String,
    pub dim: usize,
    pub horizontal_rank: usize,
    pub frame: Vec<Vec<String>>,
    pub domain: Vec<[f64; 2]>,
}

pub fn sharp_components(h: &[f64], d1: usize) -> Vec<f64> {
    h.iter()
        .enumerate()
        .map(|(i, v)| if i < d1 { *v } else { 0.0 })
        .collect()
}

pub fn hamiltonian_value(h: &[f64], d1: usize) -> f64 {
    0.5 * h.iter().take(d1).map(|v| v * v).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_frame(rows: &[&[&str]]) -> Frame {
        let n = rows.len();
        Frame {
            fields: rows
                .iter()
                .map(|r| r.iter().map(|s| ScalarExpr::parse(s, n).unwrap()).collect())
                .collect(),
        }
    }

    fn heis() -> SubRiemannianModel {
        let f = parse_frame(&[&["1", "0", "-x2/2"], &["0", "1", "x1/2"], &["0", "0", "1"]]);
        SubRiemannianModel::new("h", f, 2, Domain::unbounded(3)).unwrap()
    }

    fn idx(n: usize, k: usize, i: usize, j: usize) -> usize {
        (k * n + i) * n + j
    }

    #[test]
    fn heisenberg_brackets() {
        let m = heis();
        let c = m.structure_constants(&[0.3, -1.2, 4.0]).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let want = match (k, i, j) {
                        (2, 0, 1) => 1.0,
                        (2, 1, 0) => -1.0,
                        _ => 0.0,
                    };
                    assert!((c[idx(3, k, i, j)] - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn nonlinear_frame_brackets_against_finite_differences() {
        // X1 = d1 + sin(x2) d3, X2 = exp(x1) d2 + x1^2 d3, X3 = d3 + x2 d1
        let f = parse_frame(&[
            &["1", "0", "sin(x2)"],
            &["0", "exp(x1)", "x1^2"],
            &["x2", "0", "1"],
        ]);
        let m = SubRiemannianModel::new("t", f, 2, Domain::unbounded(3)).unwrap();
        let x = [0.2, 0.4, -0.3];
        let c = m.structure_constants(&x).unwrap();
        // Oracle: bracket by central differences, solve against the frame.
        let h = 1e-5;
        let fm = m.frame.matrix(&x);
        let inv = fm.clone().try_inverse().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut br = nalgebra::DVector::zeros(3);
                for b in 0..3 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[b] += h;
                    xm[b] -= h;
                    let dp = m.frame.matrix(&xp);
                    let dm = m.frame.matrix(&xm);
                    for a in 0..3 {
                        let dxj = (dp[(a, j)] - dm[(a, j)]) / (2.0 * h);
                        let dxi = (dp[(a, i)] - dm[(a, i)]) / (2.0 * h);
                        br[a] += fm[(b, i)] * dxj - fm[(b, j)] * dxi;
                    }
                }
                let want = &inv * br;
                for k in 0..3 {
                    assert!((c[idx(3, k, i, j)] - want[k]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn derivative_jets_of_structure_constants() {
        // Martinet-like frame with c^3_12 = 2 x1 so d c / d x1 = 2.
        let f = parse_frame(&[&["1", "0", "0"], &["0", "1", "x1^2"], &["0", "0", "1"]]);
        let m = SubRiemannianModel::new("m", f, 2, Domain::unbounded(3)).unwrap();
        let jets = m.frame_jets(&[0.7, 0.0, 0.0], 2).unwrap();
        let c = &jets.c[idx(3, 2, 0, 1)];
        assert!((c[0] - 1.4).abs() < 1e-14);
        assert!((jets.space.first(c, 0) - 2.0).abs() < 1e-14);
        assert!(jets.space.partial(c, &[2, 0, 0]).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let m = heis();
        let file = m.to_file();
        let text = serde_json::to_string(&file).unwrap();
        let back = SubRiemannianModel::from_file(&serde_json::from_str(&text).unwrap()).unwrap();
        let x = [0.5, 0.25, 1.0];
        assert_eq!(
            m.structure_constants(&x).unwrap(),
            back.structure_constants(&x).unwrap()
        );
    }

    #[test]
    fn rejects_degenerate_frames() {
        let f = parse_frame(&[&["1", "0"], &["x1", "0"]]);
        let m = SubRiemannianModel::new("bad", f, 1, Domain::unbounded(2)).unwrap();
        assert!(matches!(
            m.structure_constants(&[1.0, 0.0]),
            Err(Error::FrameDegenerate { .. })
        ));
    }

    #[test]
    fn domain_errors() {
        let f = parse_frame(&[&["1", "0"], &["0", "1"]]);
        let m = SubRiemannianModel::new(
            "box",
            f,
            2,
            Domain {
                bounds: vec![[-1.0, 1.0], [-1.0, 1.0]],
            },
        )
        .unwrap();
        let p = CovectorPoint::new(vec![2.0, 0.0], vec![1.0, 0.0]);
        assert!(matches!(m.sharp(&p), Err(Error::Domain { .. })));
    }
}
