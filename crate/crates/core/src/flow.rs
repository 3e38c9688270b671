//! Normal extremals and parallel transport along them.
//!
//! The state of an extremal is `(x, H)` where `H_i = p(X_i)` are the frame
//! components of the covector. Along the extremal the covector is parallel
//! for the adjoint connection, which in frame components reads
//! `H_k' = sum_{i<d1} sum_l H_i H_l Gammahat^l_ik`.
//!
//! Transport matrices `M(t)` hold the transported frame in their columns,
//! expressed in the moving frame at `x(t)`, and solve `M' = -Gamma(xdot) M`.

use crate::connection::{gamma_along, Connection};
use crate::error::{Error, Result};
use crate::model::{hamiltonian_value, sharp_components, CovectorPoint};
use crate::ode::{solve, Solution, Tolerances};
use crate::tensor::i3;
use nalgebra::DMatrix;
use serde::Serialize;

/// Which transport matrices to carry along with `(x, H)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Carry {
    None,
    Nabla,
    Both,
}

impl Carry {
    fn blocks(self) -> usize {
        match self {
            Carry::None => 0,
            Carry::Nabla => 1,
            Carry::Both => 2,
        }
    }
}

/// Right-hand side of the extremal equation with optional transport blocks.
pub(crate) struct FlowField<'a> {
    conn: &'a Connection,
    n: usize,
    d1: usize,
    carry: Carry,
}

impl<'a> FlowField<'a> {
    pub(crate) fn new(conn: &'a Connection, carry: Carry) -> Self {
        let m = &conn.model;
        FlowField {
            conn,
            n: m.dim(),
            d1: m.d1(),
            carry,
        }
    }

    pub(crate) fn state_len(&self) -> usize {
        2 * self.n + self.carry.blocks() * self.n * self.n
    }

    pub(crate) fn initial_state(&self, p: &CovectorPoint) -> Vec<f64> {
        let n = self.n;
        let mut y = Vec::with_capacity(self.state_len());
        y.extend_from_slice(&p.x);
        y.extend_from_slice(&p.h);
        for _ in 0..self.carry.blocks() {
            for a in 0..n {
                for b in 0..n {
                    y.push(if a == b { 1.0 } else { 0.0 });
                }
            }
        }
        y
    }

    pub(crate) fn eval(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.n;
        let d1 = self.d1;
        let x = &y[..n];
        let h = &y[n..2 * n];
        let model = &self.conn.model;
        if !model.domain.contains(x) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain { point: x.to_vec() });
        }
        let (frame, c, gamma) = self.conn.christoffel_with_frame(x)?;
        let v = sharp_components(h, d1);
        for a in 0..n {
            let mut s = 0.0;
            for i in 0..d1 {
                s += frame[a * n + i] * v[i];
            }
            dy[a] = s;
        }
        // Gammahat^l_ik = Gamma^l_ki + c^l_ik
        for k in 0..n {
            let mut s = 0.0;
            for i in 0..d1 {
                if v[i] == 0.0 {
                    continue;
                }
                for l in 0..n {
                    if h[l] == 0.0 {
                        continue;
                    }
                    s += v[i] * h[l] * (gamma[i3(n, l, k, i)] + c[i3(n, l, i, k)]);
                }
            }
            dy[n + k] = s;
        }
        if self.carry == Carry::None {
            return Ok(());
        }
        let gv = gamma_along(&gamma, n, &v);
        let mut blocks = vec![gv];
        if self.carry == Carry::Both {
            // Gammahat(v)^k_j = sum_i v^i (Gamma^k_ji + c^k_ij)
            let mut gh = vec![0.0; n * n];
            for k in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for i in 0..d1 {
                        s += v[i] * (gamma[i3(n, k, j, i)] + c[i3(n, k, i, j)]);
                    }
                    gh[k * n + j] = s;
                }
            }
            blocks.push(gh);
        }
        for (b, g) in blocks.iter().enumerate() {
            let off = 2 * n + b * n * n;
            let m = &y[off..off + n * n];
            let out = &mut dy[off..off + n * n];
            for r in 0..n {
                for col in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += g[r * n + k] * m[k * n + col];
                    }
                    out[r * n + col] = -s;
                }
            }
        }
        Ok(())
    }
}

/// An integrated normal extremal.
#[derive(Debug, Clone)]
pub struct Extremal {
    pub p: CovectorPoint,
    pub t_end: f64,
    /// True when the trajectory left the chart domain before `t_end`.
    pub exited: bool,
    n: usize,
    solution: Solution,
}

impl Extremal {
    pub fn t_reached(&self) -> f64 {
        self.solution.t_reached
    }

    /// Covector at time `t` from dense output.
    pub fn at(&self, t: f64) -> Result<CovectorPoint> {
        let y = self
            .solution
            .eval(t)
            .ok_or_else(|| Error::Argument(format!("time {t} outside the integrated range")))?;
        Ok(CovectorPoint::new(y[..self.n].to_vec(), y[self.n..2 * self.n].to_vec()))
    }

    pub fn step_times(&self) -> Vec<f64> {
        self.solution.step_times()
    }

    pub fn accepted_steps(&self) -> usize {
        self.solution.stats.accepted
    }

    /// Largest relative change of the Hamiltonian over the accepted steps.
    pub fn hamiltonian_drift(&self, d1: usize) -> f64 {
        let h0 = hamiltonian_value(&self.p.h, d1);
        self.step_times()
            .iter()
            .map(|&t| {
                let y = self.solution.eval(t).unwrap();
                (hamiltonian_value(&y[self.n..2 * self.n], d1) - h0).abs() / h0.max(1.0)
            })
            .fold(0.0, f64::max)
    }
}

fn check_start(conn: &Connection, p: &CovectorPoint) -> Result<()> {
    let m = &conn.model;
    if p.x.len() != m.dim() || p.h.len() != m.dim() {
        return Err(Error::Argument(format!(
            "covector has dimension ({}, {}), model has dimension {}",
            p.x.len(),
            p.h.len(),
            m.dim()
        )));
    }
    m.check_domain(&p.x)
}

/// Integrates the normal extremal through `p` up to time `t_end`.
pub fn integrate_extremal(conn: &Connection, p: &CovectorPoint, t_end: f64, tol: &Tolerances) -> Result<Extremal> {
    check_start(conn, p)?;
    if !(t_end > 0.0) {
        return Err(Error::Argument("t_end must be positive".into()));
    }
    let field = FlowField::new(conn, Carry::None);
    let y0 = field.initial_state(p);
    let sol = solve(|_t, y, dy| field.eval(y, dy), 0.0, &y0, t_end, &[], tol)?;
    Ok(Extremal {
        p: p.clone(),
        t_end,
        exited: sol.truncated,
        n: conn.model.dim(),
        solution: sol,
    })
}

/// Transport matrix at one time.
#[derive(Debug, Clone, Serialize)]
pub struct TransportFrame {
    pub t: f64,
    pub connection: String,
    /// Row-major `n x n`; column `j` is the transport of `X_j` in the frame at `x(t)`.
    pub matrix: Vec<f64>,
    pub n: usize,
}

impl TransportFrame {
    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.matrix)
    }
}

/// Parallel transport along the extremal of `extremal.p` up to time `t`
/// for `conn` (which may be an adjoint connection). The extremal itself is
/// recomputed jointly with the transport so both share one step sequence.
pub fn parallel_transport(conn: &Connection, extremal: &Extremal, t: f64, tol: &Tolerances) -> Result<TransportFrame> {
    if t < 0.0 || t > extremal.t_reached() + 1e-12 {
        return Err(Error::Argument(format!("time {t} outside the extremal range")));
    }
    let n = conn.model.dim();
    let field = FlowField::new(conn, Carry::Nabla);
    let y0 = field.initial_state(&extremal.p);
    let sol = solve(|_t, y, dy| field.eval(y, dy), 0.0, &y0, t, &[], tol)?;
    if sol.truncated {
        return Err(Error::Domain {
            point: sol.final_state()[..n].to_vec(),
        });
    }
    let y = sol.final_state();
    Ok(TransportFrame {
        t,
        connection: conn.label(),
        matrix: y[2 * n..2 * n + n * n].to_vec(),
        n,
    })
}

/// Covector and both transport matrices at one time.
#[derive(Debug, Clone)]
pub struct FlowSample {
    pub t: f64,
    pub point: CovectorPoint,
    /// `nabla`-transport, row-major.
    pub m: DMatrix<f64>,
    /// Adjoint transport, row-major.
    pub m_hat: DMatrix<f64>,
}

/// Integrates from `p` in both time directions and records the covector and
/// transport matrices at each requested time (which may include 0).
pub fn sample_flow(conn: &Connection, p: &CovectorPoint, times: &[f64], tol: &Tolerances) -> Result<Vec<FlowSample>> {
    check_start(conn, p)?;
    let n = conn.model.dim();
    let field = FlowField::new(conn, Carry::Both);
    let y0 = field.initial_state(p);
    let unpack = |t: f64, y: &[f64]| FlowSample {
        t,
        point: CovectorPoint::new(y[..n].to_vec(), y[n..2 * n].to_vec()),
        m: DMatrix::from_row_slice(n, n, &y[2 * n..2 * n + n * n]),
        m_hat: DMatrix::from_row_slice(n, n, &y[2 * n + n * n..2 * n + 2 * n * n]),
    };
    let mut out: Vec<Option<FlowSample>> = vec![None; times.len()];
    for dir in [1.0, -1.0] {
        let mine: Vec<f64> = times.iter().copied().filter(|t| t * dir > 0.0).collect();
        if mine.is_empty() {
            continue;
        }
        let end = mine.iter().copied().fold(0.0, |a: f64, b| if b * dir > a * dir { b } else { a });
        let sol = solve(|_t, y, dy| field.eval(y, dy), 0.0, &y0, end, &mine, tol)?;
        if sol.truncated {
            return Err(Error::Domain {
                point: sol.final_state()[..n].to_vec(),
            });
        }
        for (t, y) in &sol.stop_states {
            for (idx, tt) in times.iter().enumerate() {
                if tt == t {
                    out[idx] = Some(unpack(*t, y));
                }
            }
        }
    }
    for (idx, t) in times.iter().enumerate() {
        if *t == 0.0 {
            out[idx] = Some(unpack(0.0, &y0));
        }
    }
    out.into_iter()
        .map(|s| s.ok_or_else(|| Error::Integration("requested time was not reached".into())))
        .collect()
}

/// Transport-based twist polynomial `P_k = d^k/dt^k (Mhat^{-1} M)` at 0,
/// by central differences with two levels of Richardson extrapolation.
///
/// `h_grid` lists three step sizes, each half the previous; they are used in
/// the arc-length time of the extremal so that the result scales correctly.
pub fn transport_twist_oracle(conn: &Connection, p: &CovectorPoint, k: usize, h_grid: [f64; 3]) -> Result<DMatrix<f64>> {
    if k == 0 || k > 4 {
        return Err(Error::Argument("oracle order must be in 1..=4".into()));
    }
    let n = conn.model.dim();
    let speed = sharp_components(&p.h, conn.model.d1()).iter().map(|v| v * v).sum::<f64>().sqrt();
    if speed == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let scale = 1.0 / speed;
    let reach: &[i32] = if k <= 2 { &[-1, 1] } else { &[-2, -1, 1, 2] };
    let mut times = Vec::new();
    for h in h_grid {
        for r in reach {
            times.push(*r as f64 * h * scale);
        }
    }
    times.push(0.0);
    let samples = sample_flow(conn, p, &times, &Tolerances::tight())?;
    let g = |t: f64| -> DMatrix<f64> {
        let s = samples.iter().find(|s| s.t == t).unwrap();
        let inv = s.m_hat.clone().try_inverse().expect("transport is invertible");
        inv * &s.m
    };
    let stencil = |h: f64| -> DMatrix<f64> {
        let hh = h * scale;
        let f = |r: f64| g(r * hh);
        match k {
            1 => (f(1.0) - f(-1.0)) / (2.0 * hh),
            2 => (f(1.0) - f(0.0) * 2.0 + f(-1.0)) / (hh * hh),
            3 => (f(2.0) - f(1.0) * 2.0 + f(-1.0) * 2.0 - f(-2.0)) / (2.0 * hh.powi(3)),
            _ => (f(2.0) - f(1.0) * 4.0 + f(0.0) * 6.0 - f(-1.0) * 4.0 + f(-2.0)) / hh.powi(4),
        }
    };
    let d: Vec<DMatrix<f64>> = h_grid.iter().map(|&h| stencil(h)).collect();
    let r1a = (&d[1] * 4.0 - &d[0]) / 3.0;
    let r1b = (&d[2] * 4.0 - &d[1]) / 3.0;
    Ok((r1b * 16.0 - r1a) / 15.0)
}

/// Default step sizes for [`transport_twist_oracle`].
pub const ORACLE_STEPS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Samples of the flow on the uniform grid `j * delta`, `|j| <= half_width`,
/// used to differentiate pullback tensors along the extremal.
#[derive(Debug, Clone)]
pub struct FlowGrid {
    pub delta: f64,
    pub half_width: usize,
    pub samples: Vec<FlowSample>,
    m_inv: Vec<DMatrix<f64>>,
    m_hat_inv: Vec<DMatrix<f64>>,
}

/// Reach of the first-derivative stencil in grid steps.
pub const STENCIL_REACH: usize = 3;

/// Kind of pullback tensor, which fixes how it is expressed in a
/// transported basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Scalar,
    Vector,
    Covector,
    /// Endomorphism, or more generally a linear map between subbundles.
    Endomorphism,
    Bilinear,
}

impl FlowGrid {
    pub fn build(conn: &Connection, p: &CovectorPoint, half_width: usize, delta: f64) -> Result<Self> {
        let times: Vec<f64> = (-(half_width as i64)..=half_width as i64).map(|j| j as f64 * delta).collect();
        let samples = sample_flow(conn, p, &times, &Tolerances::tight())?;
        let inv = |m: &DMatrix<f64>| m.clone().try_inverse().ok_or_else(|| Error::Integration("transport matrix became singular".into()));
        let m_inv = samples.iter().map(|s| inv(&s.m)).collect::<Result<Vec<_>>>()?;
        let m_hat_inv = samples.iter().map(|s| inv(&s.m_hat)).collect::<Result<Vec<_>>>()?;
        Ok(FlowGrid {
            delta,
            half_width,
            samples,
            m_inv,
            m_hat_inv,
        })
    }

    /// Position in `samples` of grid index `j`.
    pub fn pos(&self, j: i64) -> usize {
        (j + self.half_width as i64) as usize
    }

    pub fn sample(&self, j: i64) -> &FlowSample {
        &self.samples[self.pos(j)]
    }

    pub fn indices(&self, reach: usize) -> std::ops::RangeInclusive<i64> {
        -(reach as i64)..=reach as i64
    }

    fn basis(&self, j: i64, adjoint: bool) -> (&DMatrix<f64>, &DMatrix<f64>) {
        let p = self.pos(j);
        if adjoint {
            (&self.samples[p].m_hat, &self.m_hat_inv[p])
        } else {
            (&self.samples[p].m, &self.m_inv[p])
        }
    }

    /// Expresses `value` (given in the moving frame at grid index `j`) in
    /// the transported basis.
    pub fn to_parallel(&self, j: i64, kind: TensorKind, value: &DMatrix<f64>, adjoint: bool) -> DMatrix<f64> {
        let (m, mi) = self.basis(j, adjoint);
        match kind {
            TensorKind::Scalar => value.clone(),
            TensorKind::Vector => mi * value,
            TensorKind::Covector => value * m,
            TensorKind::Endomorphism => mi * value * m,
            TensorKind::Bilinear => m.transpose() * value * m,
        }
    }

    /// Inverse of [`Self::to_parallel`].
    pub fn from_parallel(&self, j: i64, kind: TensorKind, value: &DMatrix<f64>, adjoint: bool) -> DMatrix<f64> {
        let (m, mi) = self.basis(j, adjoint);
        match kind {
            TensorKind::Scalar => value.clone(),
            TensorKind::Vector => m * value,
            TensorKind::Covector => value * mi,
            TensorKind::Endomorphism => m * value * mi,
            TensorKind::Bilinear => mi.transpose() * value * mi,
        }
    }

    /// Covariant derivative along the flow at grid index `j` of a tensor
    /// sampled at `j - 3 ..= j + 3` (`values(i)` returns the sample at
    /// index `i` in the moving frame). Uses the sixth-order central stencil.
    pub fn derivative<F>(&self, j: i64, kind: TensorKind, adjoint: bool, mut values: F) -> DMatrix<f64>
    where
        F: FnMut(i64) -> DMatrix<f64>,
    {
        const W: [f64; 3] = [45.0, -9.0, 1.0];
        let mut acc: Option<DMatrix<f64>> = None;
        for (s, w) in W.iter().enumerate() {
            let off = s as i64 + 1;
            let plus = self.to_parallel(j + off, kind, &values(j + off), adjoint);
            let minus = self.to_parallel(j - off, kind, &values(j - off), adjoint);
            let term = (plus - minus) * *w;
            acc = Some(match acc {
                Some(a) => a + term,
                None => term,
            });
        }
        let d = acc.unwrap() / (60.0 * self.delta);
        self.from_parallel(j, kind, &d, adjoint)
    }
}

/// Flow derivative `(d/dt)^order` at `p` of a pullback tensor given by
/// `section`, which maps a covector to the tensor's frame components.
pub fn flow_derivative<F>(conn: &Connection, p: &CovectorPoint, kind: TensorKind, order: usize, delta: f64, section: F) -> Result<DMatrix<f64>>
where
    F: Fn(&CovectorPoint) -> Result<DMatrix<f64>>,
{
    if order == 0 {
        return section(p);
    }
    if order > 3 {
        return Err(Error::Argument("flow derivatives are limited to order 3".into()));
    }
    let half = STENCIL_REACH * order;
    let grid = FlowGrid::build(conn, p, half, delta)?;
    let mut level: Vec<DMatrix<f64>> = grid
        .indices(half)
        .map(|j| section(&grid.sample(j).point))
        .collect::<Result<_>>()?;
    for lvl in 1..=order {
        let reach = half - STENCIL_REACH * lvl;
        let prev = level.clone();
        let prev_reach = reach + STENCIL_REACH;
        level = grid
            .indices(reach)
            .map(|j| grid.derivative(j, kind, false, |i| prev[(i + prev_reach as i64) as usize].clone()))
            .collect();
    }
    Ok(level.pop().unwrap())
}

/// First conjugate time of the exponential map along the extremal of `p`,
/// found from sign changes of `det d x(t) / d H(0)` (finite differences in
/// the initial covector) followed by bisection on dense output.
pub fn first_conjugate_time(conn: &Connection, p: &CovectorPoint, t_max: f64, scan_points: usize, t_tol: f64) -> Result<Option<f64>> {
    check_start(conn, p)?;
    let n = conn.model.dim();
    let eps = 1e-6 * p.h.iter().map(|v| v.abs()).fold(1e-3, f64::max);
    let tol = Tolerances::tight();
    let runs: Vec<(Extremal, Extremal)> = (0..n)
        .map(|a| {
            let mut hp = p.h.clone();
            let mut hm = p.h.clone();
            hp[a] += eps;
            hm[a] -= eps;
            Ok((
                integrate_extremal(conn, &CovectorPoint::new(p.x.clone(), hp), t_max, &tol)?,
                integrate_extremal(conn, &CovectorPoint::new(p.x.clone(), hm), t_max, &tol)?,
            ))
        })
        .collect::<Result<_>>()?;
    let reach = runs
        .iter()
        .map(|(a, b)| a.t_reached().min(b.t_reached()))
        .fold(t_max, f64::min);
    let det_at = |t: f64| -> Result<f64> {
        let mut jm = DMatrix::zeros(n, n);
        for (a, (ep, em)) in runs.iter().enumerate() {
            let xp = ep.at(t)?.x;
            let xm = em.at(t)?.x;
            for r in 0..n {
                jm[(r, a)] = (xp[r] - xm[r]) / (2.0 * eps);
            }
        }
        // normalise columns so the sign test is scale free
        for a in 0..n {
            let nrm = jm.column(a).norm();
            if nrm > 0.0 {
                jm.column_mut(a).scale_mut(1.0 / nrm);
            }
        }
        Ok(jm.determinant())
    };
    let mut prev_t = reach / scan_points as f64;
    let mut prev = det_at(prev_t)?;
    for i in 2..=scan_points {
        let t = reach * i as f64 / scan_points as f64;
        let cur = det_at(t)?;
        if prev != 0.0 && cur.signum() != prev.signum() {
            let (mut lo, mut hi, mut flo) = (prev_t, t, prev);
            while hi - lo > t_tol {
                let mid = 0.5 * (lo + hi);
                let fm = det_at(mid)?;
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            return Ok(Some(0.5 * (lo + hi)));
        }
        prev = cur;
        prev_t = t;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection::ConnectionKind;
    use crate::zoo;
    use std::sync::Arc;

    fn nice(z: &zoo::ZooEntry) -> Connection {
        Connection::compatible(Arc::clone(&z.model))
    }

    #[test]
    fn euclidean_straight_line() {
        let z = zoo::euclidean(3);
        let p = CovectorPoint::new(vec![0.0; 3], vec![1.0, 0.0, 0.0]);
        let e = integrate_extremal(&nice(&z), &p, 2.0, &Tolerances::default()).unwrap();
        let q = e.at(1.5).unwrap();
        assert!((q.x[0] - 1.5).abs() < 1e-12 && q.x[1].abs() < 1e-14);
        assert_eq!(q.h, vec![1.0, 0.0, 0.0]);
    }

    /// Closed-form Heisenberg geodesic in exponential coordinates.
    fn heisenberg_oracle(h: f64, t: f64) -> ([f64; 3], [f64; 3]) {
        let (s, c) = (h * t).sin_cos();
        let x = s / h;
        let y = (1.0 - c) / h;
        let z = (h * t - s) / (2.0 * h * h);
        ([x, y, z], [c, s, h])
    }

    #[test]
    fn heisenberg_geodesics_match_closed_form() {
        let z = zoo::heisenberg();
        for kind in [ConnectionKind::Nice, ConnectionKind::Group] {
            let conn = Connection::build(Arc::clone(&z.model), kind);
            for h in [0.7, -1.3, 2.5] {
                let p = CovectorPoint::new(vec![0.0; 3], vec![1.0, 0.0, h]);
                let e = integrate_extremal(&conn, &p, 3.0, &Tolerances::default()).unwrap();
                for i in 1..=6 {
                    let t = 0.5 * i as f64;
                    let q = e.at(t).unwrap();
                    let (x, hh) = heisenberg_oracle(h, t);
                    for a in 0..3 {
                        assert!((q.x[a] - x[a]).abs() < 1e-8, "{kind:?} h={h} t={t}");
                        assert!((q.h[a] - hh[a]).abs() < 1e-8);
                    }
                }
                assert!(e.hamiltonian_drift(2) < 1e-9);
            }
        }
    }

    #[test]
    fn time_reversal_returns_to_start() {
        let z = zoo::contact3d(1.0);
        let conn = nice(&z);
        let p = CovectorPoint::new(vec![1.2, 0.3, -0.2], vec![0.6, -0.8, 0.9]);
        let e = integrate_extremal(&conn, &p, 0.8, &Tolerances::default()).unwrap();
        let q = e.at(0.8).unwrap();
        let back = CovectorPoint::new(q.x.clone(), q.h.iter().map(|v| -v).collect());
        let r = integrate_extremal(&conn, &back, 0.8, &Tolerances::default()).unwrap().at(0.8).unwrap();
        for a in 0..3 {
            assert!((r.x[a] - p.x[a]).abs() < 1e-7);
            assert!((r.h[a] + p.h[a]).abs() < 1e-7);
        }
    }

    #[test]
    fn transport_keeps_horizontal_block_orthogonal() {
        let z = zoo::quaternionic_heisenberg(1);
        let conn = nice(&z);
        let mut h = vec![0.0; 7];
        h[0] = 0.6;
        h[1] = -0.3;
        h[2] = 0.5;
        h[4] = 1.1;
        h[6] = -0.4;
        let p = CovectorPoint::new(vec![0.1; 7], h);
        let e = integrate_extremal(&conn, &p, 1.0, &Tolerances::default()).unwrap();
        let m = parallel_transport(&conn, &e, 1.0, &Tolerances::default()).unwrap().as_matrix();
        let hb = m.view((0, 0), (4, 4)).into_owned();
        let gram = hb.transpose() * &hb;
        assert!((gram - DMatrix::identity(4, 4)).norm() < 1e-8);
        // splitting preserved
        assert!(m.view((0, 4), (4, 3)).norm() < 1e-12);
    }

    #[test]
    fn heisenberg_adjoint_transport_is_a_matrix_exponential() {
        // Along H = (1, 0, 0) the geodesic is a straight line and the adjoint
        // Christoffel matrix along it is constant.
        let z = zoo::heisenberg();
        let conn = nice(&z);
        let adj = conn.adjoint();
        let p = CovectorPoint::new(vec![0.0; 3], vec![1.0, 0.0, 0.0]);
        let e = integrate_extremal(&conn, &p, 1.0, &Tolerances::default()).unwrap();
        let got = parallel_transport(&adj, &e, 1.0, &Tolerances::tight()).unwrap().as_matrix();
        let g = adj.geometry(&[0.0; 3], 0).unwrap().gamma_along(&[1.0, 0.0, 0.0]);
        let gm = DMatrix::from_row_slice(3, 3, &g);
        let want = (-gm).exp();
        assert!((got - want).norm() < 1e-10);
    }

    #[test]
    fn transport_composes() {
        let z = zoo::contact3d(1.0);
        let conn = nice(&z);
        let p = CovectorPoint::new(vec![1.0, 0.0, 0.0], vec![0.3, 0.9, 0.5]);
        let tol = Tolerances::tight();
        let e = integrate_extremal(&conn, &p, 1.0, &tol).unwrap();
        let m1 = parallel_transport(&conn, &e, 0.4, &tol).unwrap().as_matrix();
        let m2 = parallel_transport(&conn, &e, 1.0, &tol).unwrap().as_matrix();
        let q = e.at(0.4).unwrap();
        let e2 = integrate_extremal(&conn, &q, 0.6, &tol).unwrap();
        let m12 = parallel_transport(&conn, &e2, 0.6, &tol).unwrap().as_matrix();
        assert!((m12 * m1 - m2).norm() < 1e-8);
    }

    #[test]
    fn domain_exit_truncates() {
        let z = zoo::contact3d(1.0);
        let conn = nice(&z);
        let p = CovectorPoint::new(vec![1.5, 0.0, 0.0], vec![1.0, 0.0, 0.0]);
        let e = integrate_extremal(&conn, &p, 5.0, &Tolerances::default()).unwrap();
        assert!(e.exited);
        assert!(e.t_reached() < 1.6);
    }

    #[test]
    fn oracle_vanishes_for_torsion_free() {
        let z = zoo::constant_curvature_surface(1.0);
        let p = CovectorPoint::new(vec![1.2, 0.1], vec![0.4, 0.7]);
        let p1 = transport_twist_oracle(&nice(&z), &p, 1, ORACLE_STEPS).unwrap();
        assert!(p1.norm() < 1e-8);
    }

    #[test]
    fn euler_form_derivative_on_heisenberg() {
        // d/dt of the covector in the parallel basis at p = (1, 0, h)
        let z = zoo::heisenberg();
        let h = 1.7;
        let p = CovectorPoint::new(vec![0.2, -0.1, 0.3], vec![1.0, 0.0, h]);
        let d = flow_derivative(&nice(&z), &p, TensorKind::Covector, 1, 0.01, |q| {
            Ok(DMatrix::from_row_slice(1, 3, &q.h))
        })
        .unwrap();
        assert!((d[(0, 0)]).abs() < 1e-9);
        assert!((d[(0, 1)] - h).abs() < 1e-9);
        assert!(d[(0, 2)].abs() < 1e-9);
    }

    #[test]
    fn surface_conjugate_time() {
        let kappa: f64 = 4.0;
        let z = zoo::constant_curvature_surface(kappa);
        let p = CovectorPoint::new(vec![0.3, 0.0], vec![0.0, 1.0]);
        let t = first_conjugate_time(&nice(&z), &p, 2.0, 200, 1e-9).unwrap().unwrap();
        assert!((t - std::f64::consts::PI / kappa.sqrt()).abs() < 1e-5, "{t}");
    }
}
