//! Truncated multivariate Taylor polynomials.
//!
//! A jet of order `N` in `n` variables stores the Taylor coefficients
//! `a_m` of `f(x0 + d) = sum_m a_m d^m` for every multi-index `m` with
//! `|m| <= N`. Arithmetic on jets is exact up to the truncation order, so
//! evaluating an expression tree in jet arithmetic yields every partial
//! derivative up to order `N` without finite differences.

use std::collections::HashMap;

/// Index tables shared by all jets of a given `(n, order)`.
#[derive(Debug, Clone)]
pub struct JetSpace {
    n: usize,
    order: usize,
    monomials: Vec<Vec<u8>>,
    degree: Vec<usize>,
    /// For every left index `i`, the pairs `(j, k)` with `m_i + m_j = m_k`.
    mul_table: Vec<Vec<(u32, u32)>>,
    /// For every variable, triples `(src, dst, factor)` describing `d/dx_v`.
    deriv_table: Vec<Vec<(u32, u32, f64)>>,
    var_index: Vec<usize>,
    /// Index of the monomial `x_a x_b`, stored at `a * n + b` (order >= 2).
    pair_index: Vec<usize>,
}

/// Coefficient vector of a jet; interpreted through a [`JetSpace`].
pub type Jet = Vec<f64>;

impl JetSpace {
    pub fn new(n: usize, order: usize) -> Self {
        let mut monomials: Vec<Vec<u8>> = Vec::new();
        for d in 0..=order {
            let mut cur = vec![0u8; n];
            push_degree(&mut monomials, &mut cur, 0, d);
        }
        let index: HashMap<Vec<u8>, usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let degree: Vec<usize> = monomials
            .iter()
            .map(|m| m.iter().map(|&e| e as usize).sum())
            .collect();
        let len = monomials.len();
        let mut mul_table = vec![Vec::new(); len];
        for i in 0..len {
            for j in 0..len {
                if degree[i] + degree[j] > order {
                    continue;
                }
                let sum: Vec<u8> = monomials[i]
                    .iter()
                    .zip(&monomials[j])
                    .map(|(a, b)| a + b)
                    .collect();
                mul_table[i].push((j as u32, index[&sum] as u32));
            }
        }
        let mut deriv_table = vec![Vec::new(); n];
        for (v, table) in deriv_table.iter_mut().enumerate() {
            for (src, m) in monomials.iter().enumerate() {
                if m[v] == 0 {
                    continue;
                }
                let mut lower = m.clone();
                lower[v] -= 1;
                table.push((src as u32, index[&lower] as u32, m[v] as f64));
            }
        }
        let var_index = (0..n)
            .map(|v| {
                let mut m = vec![0u8; n];
                m[v] = 1;
                if order >= 1 {
                    index[&m]
                } else {
                    usize::MAX
                }
            })
            .collect();
        let mut pair_index = vec![usize::MAX; n * n];
        if order >= 2 {
            for a in 0..n {
                for b in 0..n {
                    let mut m = vec![0u8; n];
                    m[a] += 1;
                    m[b] += 1;
                    pair_index[a * n + b] = index[&m];
                }
            }
        }
        JetSpace {
            pair_index,
            n,
            order,
            monomials,
            degree,
            mul_table,
            deriv_table,
            var_index,
        }
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn zero(&self) -> Jet {
        vec![0.0; self.len()]
    }

    pub fn constant(&self, c: f64) -> Jet {
        let mut j = self.zero();
        j[0] = c;
        j
    }

    /// The jet of the coordinate function `x_v` expanded around `x0_v`.
    pub fn variable(&self, v: usize, x0: f64) -> Jet {
        let mut j = self.constant(x0);
        if self.order >= 1 {
            j[self.var_index[v]] = 1.0;
        }
        j
    }

    pub fn add(&self, a: &Jet, b: &Jet) -> Jet {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    pub fn add_assign(&self, a: &mut Jet, b: &Jet) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }

    /// `a += s * b`
    pub fn axpy(&self, a: &mut Jet, s: f64, b: &Jet) {
        if s == 0.0 {
            return;
        }
        for (x, y) in a.iter_mut().zip(b) {
            *x += s * y;
        }
    }

    pub fn scale(&self, a: &Jet, s: f64) -> Jet {
        a.iter().map(|x| x * s).collect()
    }

    pub fn is_zero(a: &Jet) -> bool {
        a.iter().all(|&x| x == 0.0)
    }

    pub fn is_constant(a: &Jet) -> bool {
        a[1..].iter().all(|&x| x == 0.0)
    }

    pub fn mul(&self, a: &Jet, b: &Jet) -> Jet {
        let mut out = self.zero();
        self.mul_acc(&mut out, 1.0, a, b);
        out
    }

    /// `out += s * a * b`
    pub fn mul_acc(&self, out: &mut Jet, s: f64, a: &Jet, b: &Jet) {
        if Self::is_constant(b) {
            self.axpy(out, s * b[0], a);
            return;
        }
        if Self::is_constant(a) {
            self.axpy(out, s * a[0], b);
            return;
        }
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let sa = s * ai;
            for &(j, k) in &self.mul_table[i] {
                let bj = b[j as usize];
                if bj != 0.0 {
                    out[k as usize] += sa * bj;
                }
            }
        }
    }

    /// Evaluates `sum_k taylor[k] * (a - a0)^k` where `a0` is the constant
    /// term of `a`. Supplying `taylor[k] = f^(k)(a0) / k!` composes a smooth
    /// univariate function with the jet.
    pub fn compose(&self, a: &Jet, taylor: &[f64]) -> Jet {
        let mut delta = a.clone();
        delta[0] = 0.0;
        let top = self.order.min(taylor.len().saturating_sub(1));
        let mut acc = self.constant(taylor[top]);
        for k in (0..top).rev() {
            acc = self.mul(&acc, &delta);
            acc[0] += taylor[k];
        }
        acc
    }

    /// Partial derivative with respect to coordinate `v`; the result is
    /// exact up to order `order - 1`.
    pub fn derivative(&self, a: &Jet, v: usize) -> Jet {
        let mut out = self.zero();
        for &(src, dst, f) in &self.deriv_table[v] {
            out[dst as usize] += f * a[src as usize];
        }
        out
    }

    /// Value of the partial derivative `d^m f(x0)` for the multi-index `m`.
    pub fn partial(&self, a: &Jet, m: &[u8]) -> f64 {
        let idx = self
            .monomials
            .iter()
            .position(|x| x.as_slice() == m)
            .expect("multi-index exceeds jet order");
        let fact: f64 = m.iter().map(|&e| factorial(e as usize)).product();
        a[idx] * fact
    }

    /// First partial derivative `d f / d x_v` at the expansion point.
    pub fn first(&self, a: &Jet, v: usize) -> f64 {
        a[self.var_index[v]]
    }

    /// Second partial derivative `d^2 f / dx_a dx_b` at the expansion point.
    pub fn second(&self, f: &Jet, a: usize, b: usize) -> f64 {
        let v = f[self.pair_index[a * self.n + b]];
        if a == b {
            2.0 * v
        } else {
            v
        }
    }

    /// Drops every coefficient above degree `d`.
    pub fn truncate(&self, a: &mut Jet, d: usize) {
        for (x, &deg) in a.iter_mut().zip(&self.degree) {
            if deg > d {
                *x = 0.0;
            }
        }
    }
}

fn push_degree(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, pos: usize, remaining: usize) {
    if pos + 1 == cur.len() || cur.is_empty() {
        if let Some(last) = cur.last_mut() {
            *last = remaining as u8;
            out.push(cur.clone());
            *cur.last_mut().unwrap() = 0;
        } else if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for e in (0..=remaining).rev() {
        cur[pos] = e as u8;
        push_degree(out, cur, pos + 1, remaining - e);
    }
    cur[pos] = 0;
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// Taylor coefficients `f^(k)(x)/k!`, `k = 0..=order`, of common functions.
pub(crate) fn sin_taylor(x: f64, order: usize) -> Vec<f64> {
    let (s, c) = x.sin_cos();
    let cycle = [s, c, -s, -c];
    (0..=order).map(|k| cycle[k % 4] / factorial(k)).collect()
}

pub(crate) fn cos_taylor(x: f64, order: usize) -> Vec<f64> {
    let (s, c) = x.sin_cos();
    let cycle = [c, -s, -c, s];
    (0..=order).map(|k| cycle[k % 4] / factorial(k)).collect()
}

pub(crate) fn exp_taylor(x: f64, order: usize) -> Vec<f64> {
    let e = x.exp();
    (0..=order).map(|k| e / factorial(k)).collect()
}

/// Taylor coefficients of `y -> y^a` around `x`, i.e. binomial series.
pub(crate) fn pow_taylor(x: f64, a: f64, order: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    let mut coeff = 1.0;
    for k in 0..=order {
        out.push(coeff * x.powf(a - k as f64));
        coeff *= (a - k as f64) / (k as f64 + 1.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        assert_eq!(JetSpace::new(3, 3).len(), 20);
        assert_eq!(JetSpace::new(11, 3).len(), 364);
        assert_eq!(JetSpace::new(2, 0).len(), 1);
        assert_eq!(JetSpace::new(1, 4).len(), 5);
    }

    #[test]
    fn product_of_variables() {
        let sp = JetSpace::new(2, 3);
        let x = sp.variable(0, 2.0);
        let y = sp.variable(1, -1.0);
        let f = sp.mul(&sp.mul(&x, &x), &y); // x^2 y
        assert!((f[0] + 4.0).abs() < 1e-15);
        assert!((sp.partial(&f, &[1, 0]) - (-4.0)).abs() < 1e-14);
        assert!((sp.partial(&f, &[0, 1]) - 4.0).abs() < 1e-14);
        assert!((sp.partial(&f, &[2, 1]) - 2.0).abs() < 1e-14);
        assert!((sp.partial(&f, &[1, 1]) - 4.0).abs() < 1e-14);
        assert_eq!(sp.partial(&f, &[3, 0]), 0.0);
    }

    #[test]
    fn sine_composition_matches_derivatives() {
        let sp = JetSpace::new(1, 4);
        let x0 = 0.7;
        let f = sp.compose(&sp.variable(0, x0), &sin_taylor(x0, 4));
        let want = [x0.sin(), x0.cos(), -x0.sin(), -x0.cos(), x0.sin()];
        for (k, w) in want.iter().enumerate() {
            assert!((sp.partial(&f, &[k as u8]) - w).abs() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn derivative_lowers_order() {
        let sp = JetSpace::new(2, 3);
        let x = sp.variable(0, 1.5);
        let y = sp.variable(1, 0.5);
        let f = sp.mul(&sp.mul(&x, &y), &y); // x y^2
        let fy = sp.derivative(&f, 1); // 2 x y
        assert!((fy[0] - 1.5).abs() < 1e-15);
        assert!((sp.first(&fy, 0) - 1.0).abs() < 1e-15);
        assert!((sp.first(&fy, 1) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn reciprocal_series() {
        let sp = JetSpace::new(1, 3);
        let x0 = 2.0;
        let inv = sp.compose(&sp.variable(0, x0), &pow_taylor(x0, -1.0, 3));
        let want = [0.5, -0.25, 2.0 / 8.0, -6.0 / 16.0];
        for (k, w) in want.iter().enumerate() {
            assert!((sp.partial(&inv, &[k as u8]) - w).abs() < 1e-14);
        }
    }
}
