//! Dormand–Prince 5(4) integrator with continuous extension.
//!
//! Steps are clipped so that requested stop times are hit exactly, which
//! keeps finite-difference stencils built on the output free of
//! interpolation error.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-10,
            atol: 1e-11,
            max_steps: 200_000,
        }
    }
}

impl Tolerances {
    pub fn tight() -> Self {
        Tolerances {
            rtol: 1e-13,
            atol: 1e-14,
            max_steps: 400_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step with its interpolation coefficients.
#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

impl Segment {
    fn eval(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.r;
        (0..r1.len())
            .map(|i| r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))))
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Result of one integration run.
#[derive(Debug, Clone)]
pub struct Solution {
    pub t_start: f64,
    /// Last time reached; differs from the requested end when truncated.
    pub t_reached: f64,
    /// Set when the vector field refused to evaluate (for example because
    /// the state left the chart) and the run had to stop early.
    pub truncated: bool,
    /// States at the requested stop times that were reached, in order.
    pub stop_states: Vec<(f64, Vec<f64>)>,
    pub stats: StepStats,
    segments: Vec<Segment>,
    y_start: Vec<f64>,
}

impl Solution {
    pub fn final_state(&self) -> Vec<f64> {
        match self.segments.last() {
            Some(s) => s.eval(s.t0 + s.h),
            None => self.y_start.clone(),
        }
    }

    /// Dense-output state at time `t`, which must lie in the integrated range.
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        let (lo, hi) = if self.t_reached >= self.t_start {
            (self.t_start, self.t_reached)
        } else {
            (self.t_reached, self.t_start)
        };
        let slack = 1e-12 * (1.0 + hi.abs().max(lo.abs()));
        if t < lo - slack || t > hi + slack {
            return None;
        }
        if self.segments.is_empty() {
            return Some(self.y_start.clone());
        }
        let forward = self.segments[0].h > 0.0;
        let idx = self.segments.partition_point(|s| {
            let end = s.t0 + s.h;
            if forward {
                end < t
            } else {
                end > t
            }
        });
        let seg = &self.segments[idx.min(self.segments.len() - 1)];
        Some(seg.eval(t))
    }

    /// Accepted step times, including the start.
    pub fn step_times(&self) -> Vec<f64> {
        let mut v = vec![self.t_start];
        v.extend(self.segments.iter().map(|s| s.t0 + s.h));
        v
    }
}

fn err_norm(y0: &[f64], y1: &[f64], e: &[f64], tol: &Tolerances) -> f64 {
    let n = y0.len().max(1) as f64;
    let s: f64 = y0
        .iter()
        .zip(y1)
        .zip(e)
        .map(|((a, b), d)| {
            let sc = tol.atol + tol.rtol * a.abs().max(b.abs());
            (d / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end` (either direction).
///
/// `stops` are times strictly between `t0` and `t_end` (plus possibly
/// `t_end` itself) at which the state is recorded exactly. If `f` returns an
/// error the step is retried with a smaller step; when the step collapses the
/// run ends with `truncated = true` instead of failing, unless nothing at
/// all could be integrated.
pub fn solve<F>(mut f: F, t0: f64, y0: &[f64], t_end: f64, stops: &[f64], tol: &Tolerances) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();
    let mut stops: Vec<f64> = stops
        .iter()
        .copied()
        .filter(|s| (s - t0) * dir > 0.0 && (s - t_end) * dir <= 0.0)
        .collect();
    stops.sort_by(|a, b| ((a - t0) * dir).partial_cmp(&((b - t0) * dir)).unwrap());
    stops.dedup();
    let mut sol = Solution {
        t_start: t0,
        t_reached: t0,
        truncated: false,
        stop_states: Vec::new(),
        stats: StepStats::default(),
        segments: Vec::new(),
        y_start: y0.to_vec(),
    };
    if span == 0.0 {
        return Ok(sol);
    }
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut y = y0.to_vec();
    let mut t = t0;
    f(t, &y, &mut k[0])?;
    sol.stats.evaluations += 1;
    // initial step guess from the size of the derivative
    let d0 = err_norm(&y, &y, &y, tol);
    let d1 = err_norm(&y, &y, &k[0], tol);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(span).max(1e-12 * span) * dir;
    let h_floor = 1e-14 * (1.0 + t0.abs().max(t_end.abs()));
    let mut stop_idx = 0;
    let mut ytmp = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut last_rejected = false;
    loop {
        if sol.stats.accepted + sol.stats.rejected >= tol.max_steps {
            return Err(Error::Integration(format!(
                "step budget of {} exhausted at t = {t}",
                tol.max_steps
            )));
        }
        let target = if stop_idx < stops.len() { stops[stop_idx] } else { t_end };
        let mut hit_target = false;
        if (t + h - target) * dir >= 0.0 || ((target - t - h) * dir).abs() < 1e-12 * h.abs() {
            h = target - t;
            hit_target = true;
        }
        // stages
        let stage = |f: &mut F, k: &mut Vec<Vec<f64>>, idx: usize, tt: f64, coeffs: &[(usize, f64)], ytmp: &mut Vec<f64>| -> Result<()> {
            for i in 0..n {
                let mut v = y[i];
                for &(j, a) in coeffs {
                    v += h * a * k[j][i];
                }
                ytmp[i] = v;
            }
            let (head, tail) = k.split_at_mut(idx);
            let _ = head;
            f(tt, ytmp, &mut tail[0])
        };
        let res: Result<()> = (|| {
            stage(&mut f, &mut k, 1, t + C2 * h, &[(0, A21)], &mut ytmp)?;
            stage(&mut f, &mut k, 2, t + C3 * h, &[(0, A31), (1, A32)], &mut ytmp)?;
            stage(&mut f, &mut k, 3, t + C4 * h, &[(0, A41), (1, A42), (2, A43)], &mut ytmp)?;
            stage(&mut f, &mut k, 4, t + C5 * h, &[(0, A51), (1, A52), (2, A53), (3, A54)], &mut ytmp)?;
            stage(&mut f, &mut k, 5, t + h, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], &mut ytmp)?;
            for i in 0..n {
                y1[i] = y[i] + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
            }
            let (head, tail) = k.split_at_mut(6);
            let _ = head;
            f(t + h, &y1, &mut tail[0])
        })();
        sol.stats.evaluations += 6;
        if let Err(e) = res {
            // refuse region: shrink and retry, or truncate
            sol.stats.rejected += 1;
            h *= 0.25;
            if h.abs() < h_floor.max(1e-10 * span) {
                if sol.segments.is_empty() && stop_idx == 0 && sol.stats.accepted == 0 {
                    return Err(e);
                }
                sol.truncated = true;
                return Ok(sol);
            }
            last_rejected = true;
            continue;
        }
        let e: Vec<f64> = (0..n)
            .map(|i| h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]))
            .collect();
        let err = err_norm(&y, &y1, &e, tol);
        if err <= 1.0 || h.abs() <= h_floor {
            // accept
            let ydiff: Vec<f64> = (0..n).map(|i| y1[i] - y[i]).collect();
            let bspl: Vec<f64> = (0..n).map(|i| h * k[0][i] - ydiff[i]).collect();
            let r4: Vec<f64> = (0..n).map(|i| ydiff[i] - h * k[6][i] - bspl[i]).collect();
            let r5: Vec<f64> = (0..n)
                .map(|i| h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]))
                .collect();
            sol.segments.push(Segment {
                t0: t,
                h,
                r: [y.clone(), ydiff, bspl, r4, r5],
            });
            sol.stats.accepted += 1;
            t = if hit_target { target } else { t + h };
            y.copy_from_slice(&y1);
            let k6 = k[6].clone();
            k[0].copy_from_slice(&k6);
            sol.t_reached = t;
            if hit_target {
                if stop_idx < stops.len() {
                    sol.stop_states.push((t, y.clone()));
                    stop_idx += 1;
                }
                if (t - t_end).abs() <= 0.0 || (stop_idx >= stops.len() && (t - t_end) * dir >= 0.0) {
                    return Ok(sol);
                }
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            let fac = if last_rejected { fac.min(1.0) } else { fac };
            last_rejected = false;
            // keep the proposal independent of the clipping to a stop time
            let h_prop = if hit_target { sol.segments.last().unwrap().h } else { h };
            h = h_prop * fac;
        } else {
            sol.stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            last_rejected = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let f = |_t: f64, y: &[f64], d: &mut [f64]| {
            d[0] = y[1];
            d[1] = -y[0];
            Ok(())
        };
        let stops: Vec<f64> = (1..=10).map(|i| 0.3 * i as f64).collect();
        let s = solve(f, 0.0, &[0.0, 1.0], 3.0, &stops, &Tolerances::tight()).unwrap();
        assert_eq!(s.stop_states.len(), 10);
        for (t, y) in &s.stop_states {
            assert!((y[0] - t.sin()).abs() < 1e-12, "{t}");
            assert!((y[1] - t.cos()).abs() < 1e-12);
        }
        // dense output between steps
        for i in 0..50 {
            let t = 0.061 * i as f64;
            let y = s.eval(t).unwrap();
            assert!((y[0] - t.sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn backward_integration() {
        let f = |_t: f64, y: &[f64], d: &mut [f64]| {
            d[0] = y[0];
            Ok(())
        };
        let s = solve(f, 0.0, &[1.0], -2.0, &[-1.0], &Tolerances::default()).unwrap();
        assert!((s.final_state()[0] - (-2.0f64).exp()).abs() < 1e-9);
        assert!((s.stop_states[0].1[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn truncates_when_field_refuses() {
        let f = |_t: f64, y: &[f64], d: &mut [f64]| {
            if y[0] > 1.0 {
                return Err(Error::Domain { point: y.to_vec() });
            }
            d[0] = 1.0;
            Ok(())
        };
        let s = solve(f, 0.0, &[0.0], 5.0, &[], &Tolerances::default()).unwrap();
        assert!(s.truncated);
        assert!(s.t_reached > 0.99 && s.t_reached <= 1.0 + 1e-9);
    }
}
