//! Affine connections in frame coordinates.
//!
//! Every connection handled here has Christoffel symbols that are linear
//! combinations of the structure constants of the frame. A connection is
//! therefore stored as a fixed linear map `c -> Gamma`, and all derived
//! tensors (torsion, curvature, covariant derivatives of torsion) are
//! evaluated from the Taylor jets of the structure constants.
//!
//! Index conventions, with `n` the dimension:
//! * `gamma[i3(k,i,j)]`: `nabla_{X_i} X_j = sum_k Gamma^k_ij X_k`;
//! * `torsion[i3(k,i,j)] = Gamma^k_ij - Gamma^k_ji - c^k_ij`;
//! * `curvature[i4(l,k,i,j)]`: `R(X_i,X_j)X_k = sum_l R^l_kij X_l`;
//! * `dtorsion[i4(l,i,j,m)] = ((nabla_{X_m} T)(X_i,X_j))^l`;
//! * `d2torsion[i5(l,i,j,m,a)] = ((nabla^2_{X_a,X_m} T)(X_i,X_j))^l`.

use crate::error::Result;
use crate::model::SubRiemannianModel;
use crate::tensor::{i3, i4, i5};
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConnectionKind {
    /// Projected Levi-Civita connection of the taming metric, with the
    /// Lie-derivative correction on vertical directions.
    Nice,
    /// Zero Christoffel symbols: the frame itself is parallel.
    Group,
}

impl ConnectionKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nice" => Some(ConnectionKind::Nice),
            "group" => Some(ConnectionKind::Group),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConnectionKind::Nice => "nice",
            ConnectionKind::Group => "group",
        }
    }
}

/// Linear term `coef * c[index]`.
type LinTerm = (usize, f64);

#[derive(Clone)]
pub struct Connection {
    pub model: Arc<SubRiemannianModel>,
    pub kind: ConnectionKind,
    pub adjoint: bool,
    table: Vec<Vec<LinTerm>>,
}

impl std::fmt::Debug for Connection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Connection({}, {}{})", self.model.name, self.kind.name(), if self.adjoint { ", adjoint" } else { "" })
    }
}

/// Pointwise geometric data of a connection.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    pub n: usize,
    pub d1: usize,
    pub x: Vec<f64>,
    /// Frame coefficient matrix, row-major `frame[a * n + i]` = `dx_a` part of `X_i`.
    pub frame: Vec<f64>,
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    pub torsion: Vec<f64>,
    /// `X_m(c^k_ij)` at `i4(k,i,j,m)`; empty below order 1.
    pub dc: Vec<f64>,
    /// `X_m(Gamma^k_ij)` at `i4(k,i,j,m)`; empty below order 1.
    pub dgamma: Vec<f64>,
    pub curvature: Vec<f64>,
    pub dtorsion: Vec<f64>,
    pub d2torsion: Vec<f64>,
    pub order: usize,
}

impl Connection {
    /// The connection that preserves the splitting into the first `d1`
    /// frame fields and the rest, built from structure constants:
    ///
    /// * horizontal on horizontal: Koszul formula projected to horizontal,
    ///   `Gamma^k_ij = (c^k_ij - c^i_jk + c^j_ki) / 2`;
    /// * vertical on horizontal: `pr [Z, X] + tau_Z X` where
    ///   `<tau_{X_i} X_j, X_k> = -(c^k_ij + c^j_ik) / 2`, giving
    ///   `Gamma^k_ij = (c^k_ij - c^j_ik) / 2`;
    /// * horizontal on vertical: vertical part of the bracket, `c^k_ij`;
    /// * vertical on vertical: Koszul formula projected to vertical.
    pub fn compatible(model: Arc<SubRiemannianModel>) -> Self {
        let n = model.dim();
        let d1 = model.d1();
        let hor = |a: usize| a < d1;
        let mut table = vec![Vec::new(); n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let e = &mut table[i3(n, k, i, j)];
                    let koszul = [(i3(n, k, i, j), 0.5), (i3(n, i, j, k), -0.5), (i3(n, j, k, i), 0.5)];
                    match (hor(i), hor(j), hor(k)) {
                        (true, true, true) | (false, false, false) => e.extend(koszul),
                        (false, true, true) => {
                            e.push((i3(n, k, i, j), 0.5));
                            e.push((i3(n, j, i, k), -0.5));
                        }
                        (true, false, false) => e.push((i3(n, k, i, j), 1.0)),
                        _ => {}
                    }
                }
            }
        }
        Connection {
            model,
            kind: ConnectionKind::Nice,
            adjoint: false,
            table,
        }
    }

    /// The connection for which every frame field is parallel.
    pub fn group(model: Arc<SubRiemannianModel>) -> Self {
        let n = model.dim();
        Connection {
            model,
            kind: ConnectionKind::Group,
            adjoint: false,
            table: vec![Vec::new(); n * n * n],
        }
    }

    pub fn build(model: Arc<SubRiemannianModel>, kind: ConnectionKind) -> Self {
        match kind {
            ConnectionKind::Nice => Self::compatible(model),
            ConnectionKind::Group => Self::group(model),
        }
    }

    /// The adjoint connection `nabla - T`, i.e. `Gamma^k_ji + c^k_ij`.
    pub fn adjoint(&self) -> Self {
        let n = self.model.dim();
        let mut table = vec![Vec::new(); n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut e = self.table[i3(n, k, j, i)].clone();
                    e.push((i3(n, k, i, j), 1.0));
                    table[i3(n, k, i, j)] = simplify(e);
                }
            }
        }
        Connection {
            model: self.model.clone(),
            kind: self.kind,
            adjoint: !self.adjoint,
            table,
        }
    }

    pub fn label(&self) -> String {
        if self.adjoint {
            format!("{}-adjoint", self.kind.name())
        } else {
            self.kind.name().to_string()
        }
    }

    fn apply(&self, c: &[f64]) -> Vec<f64> {
        self.table
            .iter()
            .map(|e| e.iter().map(|&(idx, w)| w * c[idx]).sum())
            .collect()
    }

    /// Christoffel symbols only (cheapest evaluation, used by integrators).
    pub fn christoffel(&self, x: &[f64]) -> Result<Vec<f64>> {
        let c = self.model.structure_constants(x)?;
        Ok(self.apply(&c))
    }

    /// Frame matrix, structure constants and Christoffel symbols at `x`.
    pub fn christoffel_with_frame(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let m = &self.model;
        let n = m.dim();
        let jets = m.frame_jets(x, 0)?;
        let c: Vec<f64> = jets.c.iter().map(|j| j[0]).collect();
        let frame: Vec<f64> = jets.coeff.iter().map(|j| j[0]).collect();
        debug_assert_eq!(frame.len(), n * n);
        let gamma = self.apply(&c);
        Ok((frame, c, gamma))
    }

    pub fn torsion(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.geometry(x, 0)?.torsion)
    }

    pub fn curvature(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.geometry(x, 1)?.curvature)
    }

    /// First (`order = 1`) or second (`order = 2`) covariant derivative of torsion.
    pub fn nabla_torsion(&self, x: &[f64], order: usize) -> Result<Vec<f64>> {
        let g = self.geometry(x, order.clamp(1, 2))?;
        Ok(if order >= 2 { g.d2torsion } else { g.dtorsion })
    }

    /// Evaluates the connection and its derived tensors at `x`. `order`
    /// selects how much is computed: 0 gives `c`, `Gamma`, `T`; 1 adds
    /// curvature and `nabla T`; 2 adds `nabla^2 T`.
    pub fn geometry(&self, x: &[f64], order: usize) -> Result<PointGeometry> {
        let m = &self.model;
        m.check_domain(x)?;
        let n = m.dim();
        let order = order.min(2);
        let jets = m.frame_jets(x, order)?;
        let sp = jets.space;
        let frame: Vec<f64> = jets.coeff.iter().map(|j| j[0]).collect();
        let c: Vec<f64> = jets.c.iter().map(|j| j[0]).collect();
        let gamma = self.apply(&c);
        let mut torsion = vec![0.0; n * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    torsion[i3(n, k, i, j)] = gamma[i3(n, k, i, j)] - gamma[i3(n, k, j, i)] - c[i3(n, k, i, j)];
                }
            }
        }
        let mut g = PointGeometry {
            n,
            d1: m.d1(),
            x: x.to_vec(),
            frame,
            c,
            gamma,
            torsion,
            dc: Vec::new(),
            dgamma: Vec::new(),
            curvature: Vec::new(),
            dtorsion: Vec::new(),
            d2torsion: Vec::new(),
            order,
        };
        if order == 0 {
            return Ok(g);
        }
        let fr = &g.frame;
        // Coordinate partials of c.
        let n3 = n * n * n;
        let mut pc = vec![0.0; n3 * n];
        for t in 0..n3 {
            let jet = &jets.c[t];
            for a in 0..n {
                pc[t * n + a] = sp.first(jet, a);
            }
        }
        // Frame derivatives: X_m f = sum_a F[a][m] d_a f.
        let mut dc = vec![0.0; n3 * n];
        for t in 0..n3 {
            for mm in 0..n {
                let mut s = 0.0;
                for a in 0..n {
                    s += fr[a * n + mm] * pc[t * n + a];
                }
                dc[t * n + mm] = s;
            }
        }
        let mut dgamma = vec![0.0; n3 * n];
        for (t, e) in self.table.iter().enumerate() {
            for &(idx, w) in e {
                for mm in 0..n {
                    dgamma[t * n + mm] += w * dc[idx * n + mm];
                }
            }
        }
        let mut dtors = vec![0.0; n3 * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for mm in 0..n {
                        dtors[i4(n, k, i, j, mm)] = dgamma[i4(n, k, i, j, mm)]
                            - dgamma[i4(n, k, j, i, mm)]
                            - dc[i4(n, k, i, j, mm)];
                    }
                }
            }
        }
        let gm = &g.gamma;
        let cc = &g.c;
        let tt = &g.torsion;
        let mut curvature = vec![0.0; n3 * n];
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut r = dgamma[i4(n, l, j, k, i)] - dgamma[i4(n, l, i, k, j)];
                        for s in 0..n {
                            r += gm[i3(n, s, j, k)] * gm[i3(n, l, i, s)]
                                - gm[i3(n, s, i, k)] * gm[i3(n, l, j, s)]
                                - cc[i3(n, s, i, j)] * gm[i3(n, l, s, k)];
                        }
                        curvature[i4(n, l, k, i, j)] = r;
                    }
                }
            }
        }
        let mut dtorsion = vec![0.0; n3 * n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for mm in 0..n {
                        let mut v = dtors[i4(n, l, i, j, mm)];
                        for s in 0..n {
                            v += gm[i3(n, l, mm, s)] * tt[i3(n, s, i, j)]
                                - gm[i3(n, s, mm, i)] * tt[i3(n, l, s, j)]
                                - gm[i3(n, s, mm, j)] * tt[i3(n, l, i, s)];
                        }
                        dtorsion[i4(n, l, i, j, mm)] = v;
                    }
                }
            }
        }
        if order >= 2 {
            g.d2torsion = self.second_torsion(&jets, &g, &dgamma, &dtors, &dtorsion);
        }
        g.dc = dc;
        g.dgamma = dgamma;
        g.curvature = curvature;
        g.dtorsion = dtorsion;
        Ok(g)
    }

    fn second_torsion(
        &self,
        jets: &crate::model::FrameJets<'_>,
        g: &PointGeometry,
        dgamma: &[f64],
        dtors: &[f64],
        dtorsion: &[f64],
    ) -> Vec<f64> {
        let n = g.n;
        let sp = jets.space;
        let fr = &g.frame;
        let n3 = n * n * n;
        // Partials of the frame coefficients.
        let mut dframe = vec![0.0; n * n * n]; // (a, i, b): d_b F[a][i]
        for a in 0..n {
            for i in 0..n {
                for b in 0..n {
                    dframe[i3(n, a, i, b)] = sp.first(&jets.coeff[a * n + i], b);
                }
            }
        }
        // First and second coordinate partials of T from the c jets.
        let mut tp1 = vec![0.0; n3 * n];
        let mut tp2 = vec![0.0; n3 * n * n];
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut jet = sp.zero();
                    for &(idx, w) in &self.table[i3(n, k, i, j)] {
                        sp.axpy(&mut jet, w, &jets.c[idx]);
                    }
                    for &(idx, w) in &self.table[i3(n, k, j, i)] {
                        sp.axpy(&mut jet, -w, &jets.c[idx]);
                    }
                    sp.axpy(&mut jet, -1.0, &jets.c[i3(n, k, i, j)]);
                    let t = i3(n, k, i, j);
                    for a in 0..n {
                        tp1[t * n + a] = sp.first(&jet, a);
                        for b in 0..n {
                            tp2[(t * n + a) * n + b] = sp.second(&jet, a, b);
                        }
                    }
                }
            }
        }
        // X_a X_m T = sum_{b,c} F[b][a] (d_b F[c][m] d_c T + F[c][m] d_b d_c T)
        let mut xxt = vec![0.0; n3 * n * n]; // (t, m, a)
        for t in 0..n3 {
            for mm in 0..n {
                for a in 0..n {
                    let mut s = 0.0;
                    for b in 0..n {
                        let fba = fr[b * n + a];
                        if fba == 0.0 {
                            continue;
                        }
                        for cidx in 0..n {
                            s += fba
                                * (dframe[i3(n, cidx, mm, b)] * tp1[t * n + cidx]
                                    + fr[cidx * n + mm] * tp2[(t * n + b) * n + cidx]);
                        }
                    }
                    xxt[(t * n + mm) * n + a] = s;
                }
            }
        }
        let gm = &g.gamma;
        let tt = &g.torsion;
        // X_a (DT^l_ijm)
        let mut xdt = vec![0.0; n3 * n * n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for mm in 0..n {
                        for a in 0..n {
                            let mut v = xxt[(i3(n, l, i, j) * n + mm) * n + a];
                            for s in 0..n {
                                v += dgamma[i4(n, l, mm, s, a)] * tt[i3(n, s, i, j)]
                                    + gm[i3(n, l, mm, s)] * dtors[i4(n, s, i, j, a)]
                                    - dgamma[i4(n, s, mm, i, a)] * tt[i3(n, l, s, j)]
                                    - gm[i3(n, s, mm, i)] * dtors[i4(n, l, s, j, a)]
                                    - dgamma[i4(n, s, mm, j, a)] * tt[i3(n, l, i, s)]
                                    - gm[i3(n, s, mm, j)] * dtors[i4(n, l, i, s, a)];
                            }
                            xdt[i5(n, l, i, j, mm, a)] = v;
                        }
                    }
                }
            }
        }
        let mut d2 = vec![0.0; n3 * n * n];
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    for mm in 0..n {
                        for a in 0..n {
                            let mut v = xdt[i5(n, l, i, j, mm, a)];
                            for s in 0..n {
                                v += gm[i3(n, l, a, s)] * dtorsion[i4(n, s, i, j, mm)]
                                    - gm[i3(n, s, a, i)] * dtorsion[i4(n, l, s, j, mm)]
                                    - gm[i3(n, s, a, j)] * dtorsion[i4(n, l, i, s, mm)]
                                    - gm[i3(n, s, a, mm)] * dtorsion[i4(n, l, i, j, s)];
                            }
                            d2[i5(n, l, i, j, mm, a)] = v;
                        }
                    }
                }
            }
        }
        d2
    }

    /// Checks the structural properties of the connection and the curvature
    /// identities at the given points.
    pub fn validate_identities(&self, points: &[Vec<f64>]) -> Result<IdentityReport> {
        let mut checks: Vec<IdentityCheck> = Vec::new();
        let mut record = |name: &str, x: &[f64], r: f64| {
            if let Some(c) = checks.iter_mut().find(|c| c.identity == name) {
                if r > c.max_residual {
                    c.max_residual = r;
                    c.worst_point = x.to_vec();
                }
            } else {
                checks.push(IdentityCheck {
                    identity: name.to_string(),
                    max_residual: r,
                    worst_point: x.to_vec(),
                    tolerance: IDENTITY_TOL,
                    passed: true,
                });
            }
        };
        for x in points {
            let g = self.geometry(x, 1)?;
            record("splitting-preservation", x, g.preservation_residual());
            record("metric-compatibility", x, g.metric_residual());
            record("first-bianchi", x, g.bianchi_residual());
            let (hhv, hvh) = g.curv0_residuals();
            record("curvature-hhv", x, hhv);
            record("curvature-hvh", x, hvh);
            if self.kind == ConnectionKind::Nice && !self.adjoint {
                let (a, b) = g.nice_curvature_residuals();
                record("nice-curvature-hhv", x, a);
                record("nice-curvature-hvh", x, b);
            }
        }
        for c in &mut checks {
            c.passed = c.max_residual <= c.tolerance;
        }
        let passed = checks.iter().all(|c| c.passed);
        Ok(IdentityReport {
            connection: self.label(),
            points: points.len(),
            checks,
            passed,
        })
    }
}

fn simplify(mut e: Vec<LinTerm>) -> Vec<LinTerm> {
    e.sort_by_key(|t| t.0);
    let mut out: Vec<LinTerm> = Vec::new();
    for (idx, w) in e {
        match out.last_mut() {
            Some(last) if last.0 == idx => last.1 += w,
            _ => out.push((idx, w)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

pub const IDENTITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub identity: String,
    pub max_residual: f64,
    pub worst_point: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub connection: String,
    pub points: usize,
    pub checks: Vec<IdentityCheck>,
    pub passed: bool,
}

impl PointGeometry {
    pub fn g(&self, k: usize, i: usize, j: usize) -> f64 {
        self.gamma[i3(self.n, k, i, j)]
    }

    pub fn t(&self, k: usize, i: usize, j: usize) -> f64 {
        self.torsion[i3(self.n, k, i, j)]
    }

    /// Adjoint Christoffel symbols `Gamma - T`.
    pub fn adjoint_gamma(&self) -> Vec<f64> {
        self.gamma.iter().zip(&self.torsion).map(|(g, t)| g - t).collect()
    }

    /// `T(u, v)` for frame-component vectors.
    pub fn torsion_apply(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            if u[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                let w = u[i] * v[j];
                if w == 0.0 {
                    continue;
                }
                for (k, o) in out.iter_mut().enumerate() {
                    *o += w * self.torsion[i3(n, k, i, j)];
                }
            }
        }
        out
    }

    /// `(nabla_w T)(u, v)`.
    pub fn dtorsion_apply(&self, w: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            if u[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                if v[j] == 0.0 {
                    continue;
                }
                for m in 0..n {
                    let s = u[i] * v[j] * w[m];
                    if s == 0.0 {
                        continue;
                    }
                    for (l, o) in out.iter_mut().enumerate() {
                        *o += s * self.dtorsion[i4(n, l, i, j, m)];
                    }
                }
            }
        }
        out
    }

    /// `(nabla^2_{a,b} T)(u, v)`.
    pub fn d2torsion_apply(&self, a: &[f64], b: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            if u[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                if v[j] == 0.0 {
                    continue;
                }
                for m in 0..n {
                    if b[m] == 0.0 {
                        continue;
                    }
                    for q in 0..n {
                        let s = u[i] * v[j] * b[m] * a[q];
                        if s == 0.0 {
                            continue;
                        }
                        for (l, o) in out.iter_mut().enumerate() {
                            *o += s * self.d2torsion[i5(n, l, i, j, m, q)];
                        }
                    }
                }
            }
        }
        out
    }

    /// `R(u, v) w`.
    pub fn curvature_apply(&self, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            if u[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                if v[j] == 0.0 {
                    continue;
                }
                for k in 0..n {
                    let s = u[i] * v[j] * w[k];
                    if s == 0.0 {
                        continue;
                    }
                    for (l, o) in out.iter_mut().enumerate() {
                        *o += s * self.curvature[i4(n, l, k, i, j)];
                    }
                }
            }
        }
        out
    }

    /// Matrix of `v -> Gamma(u) v`, i.e. `sum_i u^i Gamma^k_ij`, row-major.
    pub fn gamma_along(&self, u: &[f64]) -> Vec<f64> {
        gamma_along(&self.gamma, self.n, u)
    }

    fn preservation_residual(&self) -> f64 {
        let n = self.n;
        let d1 = self.d1;
        let mut r: f64 = 0.0;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if (j < d1) != (k < d1) {
                        r = r.max(self.g(k, i, j).abs());
                    }
                }
            }
        }
        r
    }

    fn metric_residual(&self) -> f64 {
        let n = self.n;
        let d1 = self.d1;
        let mut r: f64 = 0.0;
        for i in 0..n {
            for j in 0..d1 {
                for l in 0..d1 {
                    r = r.max((self.g(l, i, j) + self.g(j, i, l)).abs());
                }
            }
        }
        r
    }

    /// Cyclic sum `R(X,Y)Z - (nabla_X T)(Y,Z) - T(T(X,Y),Z)` over frame triples.
    fn bianchi_vector(&self, a: usize, b: usize, c: usize) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for &(x, y, z) in &[(a, b, c), (b, c, a), (c, a, b)] {
            for (l, o) in out.iter_mut().enumerate() {
                let mut tt = 0.0;
                for s in 0..n {
                    tt += self.t(s, x, y) * self.t(l, s, z);
                }
                *o += self.dtorsion[i4(n, l, y, z, x)] + tt;
            }
        }
        out
    }

    fn bianchi_residual(&self) -> f64 {
        let n = self.n;
        let mut r: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let beta = self.bianchi_vector(a, b, c);
                    for l in 0..n {
                        let cyc = self.curvature[i4(n, l, c, a, b)]
                            + self.curvature[i4(n, l, a, b, c)]
                            + self.curvature[i4(n, l, b, c, a)];
                        r = r.max((cyc - beta[l]).abs());
                    }
                }
            }
        }
        r
    }

    /// Residuals of `R(X,Y)Z = pr_A B_Z(Y)X` and of the formula for
    /// `R(X,Z)Y` via `B_Z` and its metric adjoint, for horizontal `X, Y` and
    /// vertical `Z`. Here `B_Z(Y)X` is the Bianchi cyclic sum at `(X,Y,Z)`.
    fn curv0_residuals(&self) -> (f64, f64) {
        let n = self.n;
        let d1 = self.d1;
        let mut r1: f64 = 0.0;
        let mut r2: f64 = 0.0;
        let mut beta = vec![vec![Vec::new(); n]; n * n]; // beta[x*n+y][z]
        for x in 0..d1 {
            for y in 0..d1 {
                for z in d1..n {
                    beta[x * n + y][z] = self.bianchi_vector(x, y, z);
                }
            }
        }
        for x in 0..d1 {
            for y in 0..d1 {
                for z in d1..n {
                    // R(X,Y)Z = pr_A beta(X,Y,Z)
                    for l in d1..n {
                        let lhs = self.curvature[i4(n, l, z, x, y)];
                        r1 = r1.max((lhs - beta[x * n + y][z][l]).abs());
                    }
                    // R(X,Z)Y = 1/2 pr_E beta(Y,X,Z) - 1/2 (pr_E B_Z(Y))^dag X - 1/2 (pr_E B_Z(X))^dag Y
                    for l in 0..d1 {
                        let lhs = self.curvature[i4(n, l, y, x, z)];
                        let adj1 = beta[l * n + y][z][x];
                        let adj2 = beta[l * n + x][z][y];
                        let rhs = 0.5 * beta[y * n + x][z][l] - 0.5 * adj1 - 0.5 * adj2;
                        r2 = r2.max((lhs - rhs).abs());
                    }
                }
            }
        }
        (r1, r2)
    }

    /// Residuals of the explicit curvature formulas for the compatible
    /// connection in terms of `K = -pr_E[pr_A, pr_A] - pr_A[pr_E, pr_E]`
    /// and `tau`.
    fn nice_curvature_residuals(&self) -> (f64, f64) {
        let n = self.n;
        let d1 = self.d1;
        let hor = |a: usize| a < d1;
        let kk = |l: usize, i: usize, j: usize| -> f64 {
            if (hor(i) && hor(j) && !hor(l)) || (!hor(i) && !hor(j) && hor(l)) {
                -self.c[i3(n, l, i, j)]
            } else {
                0.0
            }
        };
        let dkk = |l: usize, i: usize, j: usize, m: usize| -> f64 {
            if (hor(i) && hor(j) && !hor(l)) || (!hor(i) && !hor(j) && hor(l)) {
                -self.dc[i4(n, l, i, j, m)]
            } else {
                0.0
            }
        };
        // tau^l_{a j}: a vertical, j and l horizontal.
        let tau = |l: usize, a: usize, j: usize| -> f64 {
            if !hor(a) && hor(j) && hor(l) {
                -0.5 * (self.c[i3(n, l, a, j)] + self.c[i3(n, j, a, l)])
            } else {
                0.0
            }
        };
        let dtau = |l: usize, a: usize, j: usize, m: usize| -> f64 {
            if !hor(a) && hor(j) && hor(l) {
                -0.5 * (self.dc[i4(n, l, a, j, m)] + self.dc[i4(n, j, a, l, m)])
            } else {
                0.0
            }
        };
        let gm = |k: usize, i: usize, j: usize| self.gamma[i3(n, k, i, j)];
        // (nabla_m K)^l_ij
        let nk = |l: usize, i: usize, j: usize, m: usize| -> f64 {
            let mut v = dkk(l, i, j, m);
            for s in 0..n {
                v += gm(l, m, s) * kk(s, i, j) - gm(s, m, i) * kk(l, s, j) - gm(s, m, j) * kk(l, i, s);
            }
            v
        };
        // (nabla_m tau)^l_{a j}
        let ntau = |l: usize, a: usize, j: usize, m: usize| -> f64 {
            let mut v = dtau(l, a, j, m);
            for s in 0..n {
                v += gm(l, m, s) * tau(s, a, j) - gm(s, m, a) * tau(l, s, j) - gm(s, m, j) * tau(l, a, s);
            }
            v
        };
        let mut r1: f64 = 0.0;
        let mut r2: f64 = 0.0;
        for x in 0..d1 {
            for y in 0..d1 {
                for z in d1..n {
                    for l in 0..n {
                        let lhs = self.curvature[i4(n, l, z, x, y)];
                        let mut rhs = nk(l, x, y, z);
                        for s in 0..d1 {
                            rhs += tau(s, z, x) * kk(l, s, y) + tau(s, z, y) * kk(l, x, s);
                        }
                        r1 = r1.max((lhs - rhs).abs());
                    }
                    // R(X,Z)Y
                    for l in 0..d1 {
                        let lhs = self.curvature[i4(n, l, y, x, z)];
                        // sharp <(nabla_. tau)_Z X, Y>: component l is <(nabla_{X_l} tau)_Z X, Y>
                        let mut rhs = ntau(y, z, x, l);
                        // -(nabla_Y tau)_Z X
                        rhs -= ntau(l, z, x, y);
                        // 1/2 K_Z K_X Y
                        let mut kzkx = 0.0;
                        for s in 0..n {
                            kzkx += kk(s, x, y) * kk(l, z, s);
                        }
                        rhs += 0.5 * kzkx;
                        // -1/2 (K_Z K_Y)^dag X: <X, K(Z, K(Y, X_l))>
                        let mut a1 = 0.0;
                        let mut a2 = 0.0;
                        for s in 0..n {
                            a1 += kk(s, y, l) * kk(x, z, s);
                            a2 += kk(s, x, l) * kk(y, z, s);
                        }
                        rhs -= 0.5 * a1 + 0.5 * a2;
                        r2 = r2.max((lhs - rhs).abs());
                    }
                }
            }
        }
        (r1, r2)
    }
}

/// Row-major matrix of `v -> sum_i u^i Gamma^k_ij v^j`.
pub fn gamma_along(gamma: &[f64], n: usize, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for (i, &ui) in u.iter().enumerate() {
        if ui == 0.0 {
            continue;
        }
        for k in 0..n {
            for j in 0..n {
                out[k * n + j] += ui * gamma[i3(n, k, i, j)];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Domain, Frame};
    use crate::expr::ScalarExpr;
    use crate::zoo;

    fn model_from(rows: &[&[&str]], d1: usize) -> Arc<SubRiemannianModel> {
        let n = rows.len();
        let frame = Frame {
            fields: rows
                .iter()
                .map(|r| r.iter().map(|s| ScalarExpr::parse(s, n).unwrap()).collect())
                .collect(),
        };
        Arc::new(SubRiemannianModel::new("test", frame, d1, Domain::unbounded(n)).unwrap())
    }

    /// Frame whose vertical field does not preserve the horizontal metric.
    fn twisted_contact() -> Arc<SubRiemannianModel> {
        model_from(&[&["1", "0", "0"], &["0", "1", "x1"], &["x2", "0", "1"]], 2)
    }

    #[test]
    fn heisenberg_torsion() {
        let m = zoo::heisenberg().model;
        let c = Connection::compatible(m.clone());
        let g = c.geometry(&[0.3, -0.4, 0.9], 1).unwrap();
        assert!((g.t(2, 0, 1) + 1.0).abs() < 1e-14);
        assert!((g.t(2, 1, 0) - 1.0).abs() < 1e-14);
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    if !(k == 2 && i != j && i < 2 && j < 2) {
                        assert!(g.t(k, i, j).abs() < 1e-14, "T^{k}_{i}{j}");
                    }
                    assert!(g.curvature[i4(3, k, i, j, 0)].abs() < 1e-13);
                }
            }
        }
        let adj = c.adjoint().geometry(&[0.3, -0.4, 0.9], 0).unwrap();
        assert!((adj.g(2, 0, 1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn euclidean_is_flat_and_torsion_free() {
        let m = zoo::euclidean(4).model;
        for kind in [ConnectionKind::Nice, ConnectionKind::Group] {
            let g = Connection::build(m.clone(), kind).geometry(&[0.1, 0.2, 0.3, 0.4], 2).unwrap();
            assert!(g.gamma.iter().chain(&g.torsion).chain(&g.curvature).chain(&g.d2torsion).all(|v| *v == 0.0));
        }
    }

    #[test]
    fn martinet_group_torsion() {
        let m = zoo::martinet().model;
        let c = Connection::group(m);
        for x in [-0.7, 0.0, 1.3] {
            let g = c.geometry(&[x, 0.5, 0.2], 1).unwrap();
            assert!((g.t(2, 0, 1) + 2.0 * x).abs() < 1e-13);
            assert!((g.dtorsion[i4(3, 2, 0, 1, 0)] + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_is_an_involution() {
        let m = twisted_contact();
        let c = Connection::compatible(m);
        let x = [0.4, -0.3, 0.8];
        let a = c.christoffel(&x).unwrap();
        let b = c.adjoint().adjoint().christoffel(&x).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn contact_sectional_curvature_matches_base() {
        for kappa in [1.0, 0.0, -1.0] {
            let z = zoo::contact3d(kappa);
            let c = Connection::compatible(z.model.clone());
            let g = c.geometry(&[0.9, 0.2, -0.1], 1).unwrap();
            // <R(X1,X2)X2, X1>
            assert!((g.curvature[i4(3, 0, 1, 0, 1)] - kappa).abs() < 1e-10, "kappa {kappa}");
            // the Reeb field is an isometry, so tau vanishes
            for j in 0..2 {
                for k in 0..2 {
                    assert!(g.g(k, 2, j).abs() < 1e-12);
                }
            }
        }
    }

    /// Central differences of `Gamma(x)` along the frame, used to rebuild the
    /// curvature without any Taylor arithmetic.
    fn curvature_by_differences(c: &Connection, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let (frame, cc, gam) = c.christoffel_with_frame(x).unwrap();
        let h = 1e-5;
        let mut dg = vec![0.0; n * n * n * n]; // X_m Gamma^k_ij at i4(k,i,j,m)
        for m in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            for a in 0..n {
                xp[a] += h * frame[a * n + m];
                xm[a] -= h * frame[a * n + m];
            }
            let gp = c.christoffel(&xp).unwrap();
            let gm = c.christoffel(&xm).unwrap();
            for idx in 0..n * n * n {
                dg[idx * n + m] = (gp[idx] - gm[idx]) / (2.0 * h);
            }
        }
        let g = |k: usize, i: usize, j: usize| gam[i3(n, k, i, j)];
        let mut r = vec![0.0; n * n * n * n];
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut v = dg[i4(n, l, j, k, i)] - dg[i4(n, l, i, k, j)];
                        for m in 0..n {
                            v += g(m, j, k) * g(l, i, m) - g(m, i, k) * g(l, j, m)
                                - cc[i3(n, m, i, j)] * g(l, m, k);
                        }
                        r[i4(n, l, k, i, j)] = v;
                    }
                }
            }
        }
        r
    }

    #[test]
    fn curvature_agrees_with_difference_oracle() {
        let models = [twisted_contact(), zoo::contact3d(1.0).model, zoo::martinet().model];
        for m in models {
            for kind in [ConnectionKind::Nice, ConnectionKind::Group] {
                let c = Connection::build(m.clone(), kind);
                let x = [0.7, 0.35, -0.2];
                let exact = c.curvature(&x).unwrap();
                let fd = curvature_by_differences(&c, &x);
                for (a, b) in exact.iter().zip(&fd) {
                    assert!((a - b).abs() < 1e-7, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn second_covariant_torsion_agrees_with_differences() {
        let m = twisted_contact();
        let c = Connection::compatible(m);
        let x = [0.2, -0.5, 0.4];
        let n = 3;
        let g = c.geometry(&x, 2).unwrap();
        // X_a(DT) by central differences along the frame
        let h = 1e-5;
        for a in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            for b in 0..n {
                xp[b] += h * g.frame[b * n + a];
                xm[b] -= h * g.frame[b * n + a];
            }
            let dp = c.geometry(&xp, 1).unwrap().dtorsion;
            let dm = c.geometry(&xm, 1).unwrap().dtorsion;
            for l in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        for mm in 0..n {
                            let mut v = (dp[i4(n, l, i, j, mm)] - dm[i4(n, l, i, j, mm)]) / (2.0 * h);
                            for s in 0..n {
                                v += g.g(l, a, s) * g.dtorsion[i4(n, s, i, j, mm)]
                                    - g.g(s, a, i) * g.dtorsion[i4(n, l, s, j, mm)]
                                    - g.g(s, a, j) * g.dtorsion[i4(n, l, i, s, mm)]
                                    - g.g(s, a, mm) * g.dtorsion[i4(n, l, i, j, s)];
                            }
                            let want = g.d2torsion[i5(n, l, i, j, mm, a)];
                            assert!((v - want).abs() < 1e-7, "{v} vs {want}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn identities_hold_on_zoo_models() {
        let entries = [
            zoo::heisenberg(),
            zoo::contact3d(1.0),
            zoo::contact3d(-0.5),
            zoo::martinet(),
            zoo::constant_curvature_surface(2.0),
        ];
        let pts = |n: usize, base: &[[f64; 2]]| -> Vec<Vec<f64>> {
            (0..6)
                .map(|s| {
                    (0..n)
                        .map(|a| {
                            let t = ((s * 7 + a * 3) % 11) as f64 / 10.0;
                            base[a][0] + t * (base[a][1] - base[a][0])
                        })
                        .collect()
                })
                .collect()
        };
        for z in entries {
            let p = pts(z.model.dim(), &z.region.base);
            for kind in [ConnectionKind::Nice, ConnectionKind::Group] {
                let c = Connection::build(z.model.clone(), kind);
                let rep = c.validate_identities(&p).unwrap();
                assert!(rep.passed, "{} {:?}", z.name, rep.checks);
            }
        }
        let rep = Connection::compatible(twisted_contact())
            .validate_identities(&[vec![0.3, 0.8, -0.4], vec![-1.2, 0.1, 0.5]])
            .unwrap();
        assert!(rep.passed, "{:?}", rep.checks);
    }

    #[test]
    fn identities_hold_on_quaternionic_heisenberg() {
        let z = zoo::quaternionic_heisenberg(2);
        let n = z.model.dim();
        let p: Vec<Vec<f64>> = (0..20)
            .map(|s| (0..n).map(|a| (((s * 13 + a * 5) % 17) as f64 - 8.0) / 8.0).collect())
            .collect();
        let rep = Connection::compatible(z.model).validate_identities(&p).unwrap();
        assert!(rep.passed, "{:?}", rep.checks);
    }
}
