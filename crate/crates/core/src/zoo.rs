//! Built-in models with known invariants.

use crate::error::{Error, Result};
use crate::expr::ScalarExpr;
use crate::model::{CovectorPoint, Domain, Frame, SubRiemannianModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::Arc;

/// A closed-form Ricci value, evaluated on a covector.
#[derive(Clone)]
pub struct DeclaredInvariant {
    /// Reduced-diagram block `(a, b)` of the Ricci value.
    pub block: (usize, usize),
    pub formula: &'static str,
    pub eval: Arc<dyn Fn(&CovectorPoint) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for DeclaredInvariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Ric^{{{},{}}} = {}", self.block.0, self.block.1, self.formula)
    }
}

/// Where covectors for sampling should be drawn.
#[derive(Debug, Clone)]
pub struct SampleRegion {
    /// Box from which base points are drawn (a sub-box of the domain).
    pub base: Vec<[f64; 2]>,
    /// Range of vertical momentum components for unit horizontal part.
    pub vertical: [f64; 2],
}

impl SampleRegion {
    /// Default region for a model outside the zoo: a unit box around the
    /// domain centre (clipped to the domain) and vertical range `[-3, 3]`.
    pub fn for_model(model: &SubRiemannianModel) -> Self {
        let c = model.domain.center();
        let base = c
            .iter()
            .zip(&model.domain.bounds)
            .map(|(m, b)| {
                let lo = (m - 1.0).max(b[0]);
                let hi = (m + 1.0).min(b[1]);
                // keep away from the boundary of a bounded domain
                let pad = 1e-3 * (hi - lo);
                [lo + pad, hi - pad]
            })
            .collect();
        SampleRegion { base, vertical: [-3.0, 3.0] }
    }

    /// Draws `count` covectors with unit horizontal part. Base points are
    /// uniform in the box, the horizontal direction is uniform on the
    /// sphere and the vertical part has a uniform direction with magnitude
    /// uniform in the vertical range (a signed value when there is a single
    /// vertical direction). Every eighth sample, starting with the first,
    /// has zero vertical part when the range contains zero, because curvature
    /// infima are often attained there. Deterministic given `seed`.
    pub fn sample(&self, n: usize, d1: usize, count: usize, seed: u64) -> Vec<CovectorPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = StandardNormal;
        (0..count)
            .map(|i| {
                let x: Vec<f64> = self.base.iter().map(|b| if b[1] > b[0] { rng.gen_range(b[0]..b[1]) } else { b[0] }).collect();
                let mut h = unit_gaussian(&mut rng, &normal, d1);
                let d2 = n - d1;
                if d2 > 0 {
                    let [lo, hi] = self.vertical;
                    let mut m = if hi > lo { rng.gen_range(lo..hi) } else { lo };
                    if i % 8 == 0 && lo <= 0.0 && hi >= 0.0 {
                        m = 0.0;
                    }
                    let dir = if d2 == 1 { vec![1.0] } else { unit_gaussian(&mut rng, &normal, d2) };
                    h.extend(dir.iter().map(|v| v * m));
                }
                CovectorPoint::new(x, h)
            })
            .collect()
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, normal: &StandardNormal, k: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(normal)).collect();
        let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if r > 1e-6 {
            return v.iter().map(|a| a / r).collect();
        }
    }
}

#[derive(Debug, Clone)]
pub struct ZooEntry {
    pub name: String,
    pub model: Arc<SubRiemannianModel>,
    /// Column counts of the Young diagram on the generic set.
    pub declared_diagram: Vec<usize>,
    pub invariants: Vec<DeclaredInvariant>,
    pub region: SampleRegion,
}

fn e(s: &str, n: usize) -> ScalarExpr {
    ScalarExpr::parse(s, n).expect("built-in expression")
}

fn frame_from(rows: Vec<Vec<String>>) -> Frame {
    let n = rows.len();
    Frame {
        fields: rows
            .into_iter()
            .map(|r| r.iter().map(|s| e(s, n)).collect())
            .collect(),
    }
}

fn unit_rows(n: usize) -> Vec<Vec<String>> {
    (0..n)
        .map(|i| (0..n).map(|a| if a == i { "1".into() } else { "0".into() }).collect())
        .collect()
}

fn horizontal_norm(p: &CovectorPoint, d1: usize) -> f64 {
    p.h.iter().take(d1).map(|v| v * v).sum::<f64>().sqrt()
}

fn vertical_norm(p: &CovectorPoint, d1: usize) -> f64 {
    p.h.iter().skip(d1).map(|v| v * v).sum::<f64>().sqrt()
}

fn inv(block: (usize, usize), formula: &'static str, f: impl Fn(&CovectorPoint) -> f64 + Send + Sync + 'static) -> DeclaredInvariant {
    DeclaredInvariant {
        block,
        formula,
        eval: Arc::new(f),
    }
}

/// Flat `R^n` with the coordinate frame; every direction is horizontal.
pub fn euclidean(n: usize) -> ZooEntry {
    let model = SubRiemannianModel::new(
        format!("euclidean:{n}"),
        frame_from(unit_rows(n)),
        n,
        Domain::unbounded(n),
    )
    .expect("valid model");
    ZooEntry {
        name: format!("euclidean:{n}"),
        model: Arc::new(model),
        declared_diagram: vec![n],
        invariants: vec![inv((1, 1), "0", |_| 0.0)],
        region: SampleRegion {
            base: vec![[-1.0, 1.0]; n],
            vertical: [0.0, 0.0],
        },
    }
}

/// Warped-product profile `G` with `G'' = -kappa G`, `G(0) = 0`, `G'(0) = 1`,
/// and its antiderivative `F` with `F(0) = 0`, as expression strings in `u`.
fn profile(kappa: f64, u: &str) -> (String, String, [f64; 2]) {
    if kappa > 0.0 {
        let s = kappa.sqrt();
        (
            format!("sin({s}*{u})/{s}"),
            format!("(1 - cos({s}*{u}))/{kappa}"),
            [0.1 / s, (std::f64::consts::PI - 0.1) / s],
        )
    } else if kappa < 0.0 {
        let s = (-kappa).sqrt();
        (
            format!("((exp({s}*{u}) - exp(-{s}*{u}))/2)/{s}"),
            format!("((exp({s}*{u}) + exp(-{s}*{u}))/2 - 1)/{}", -kappa),
            [0.1 / s, 6.0 / s],
        )
    } else {
        ("1".into(), u.to_string(), [-50.0, 50.0])
    }
}

/// Two-dimensional Riemannian surface of constant curvature `kappa` in
/// geodesic polar-type coordinates `du^2 + G(u)^2 dv^2`.
pub fn constant_curvature_surface(kappa: f64) -> ZooEntry {
    let (g, _, ubox) = profile(kappa, "x1");
    let rows = vec![
        vec!["1".to_string(), "0".to_string()],
        vec!["0".to_string(), format!("1/({g})")],
    ];
    let name = format!("surface:{kappa}");
    let model = SubRiemannianModel::new(
        name.clone(),
        frame_from(rows),
        2,
        Domain {
            bounds: vec![ubox, [f64::NEG_INFINITY, f64::INFINITY]],
        },
    )
    .expect("valid model");
    let mid = 0.5 * (ubox[0] + ubox[1]);
    let half = 0.25 * (ubox[1] - ubox[0]);
    ZooEntry {
        name,
        model: Arc::new(model),
        declared_diagram: vec![2],
        invariants: vec![inv((1, 1), "kappa * r^2", move |p| kappa * horizontal_norm(p, 2).powi(2))],
        region: SampleRegion {
            base: vec![[mid - half, mid + half], [-1.0, 1.0]],
            vertical: [0.0, 0.0],
        },
    }
}

/// Heisenberg group in exponential coordinates.
pub fn heisenberg() -> ZooEntry {
    let rows = vec![
        vec!["1".into(), "0".into(), "-x2/2".into()],
        vec!["0".into(), "1".into(), "x1/2".into()],
        vec!["0".into(), "0".into(), "1".into()],
    ];
    let model = SubRiemannianModel::new("heisenberg", frame_from(rows), 2, Domain::unbounded(3))
        .expect("valid model");
    ZooEntry {
        name: "heisenberg".into(),
        model: Arc::new(model),
        declared_diagram: vec![2, 1],
        invariants: vec![
            inv((1, 1), "h^2", |p| p.h[2] * p.h[2]),
            inv((1, 2), "0", |_| 0.0),
            inv((2, 1), "0", |_| 0.0),
        ],
        region: SampleRegion {
            base: vec![[-1.0, 1.0]; 3],
            vertical: [-3.0, 3.0],
        },
    }
}

/// Heisenberg group of dimension `2n + 1` with the standard complex
/// structure on the horizontal space; `n = 1` is [`heisenberg`].
pub fn heisenberg_n(n: usize) -> ZooEntry {
    assert!(n >= 1);
    if n == 1 {
        return heisenberg();
    }
    let d1 = 2 * n;
    let dim = d1 + 1;
    let mut rows = unit_rows(dim);
    for i in 0..n {
        rows[2 * i][d1] = format!("-x{}/2", 2 * i + 2);
        rows[2 * i + 1][d1] = format!("x{}/2", 2 * i + 1);
    }
    let name = format!("heisenberg:{n}");
    let model = SubRiemannianModel::new(name.clone(), frame_from(rows), d1, Domain::unbounded(dim)).expect("valid model");
    let d1f = d1 as f64;
    ZooEntry {
        name,
        model: Arc::new(model),
        declared_diagram: vec![d1, 1],
        invariants: vec![
            inv((1, 1), "h^2", move |p| p.h[d1] * p.h[d1]),
            inv((1, 2), "0", |_| 0.0),
            inv((2, 1), "(d1 - 2) h^2 / 4", move |p| 0.25 * (d1f - 2.0) * p.h[d1] * p.h[d1]),
        ],
        region: SampleRegion {
            base: vec![[-1.0, 1.0]; dim],
            vertical: [-3.0, 3.0],
        },
    }
}

/// Contact circle bundle over a surface of constant curvature `kappa`:
/// contact form `dz - F(u) dv` whose differential is the area form of the
/// base, so that the Reeb field `d/dz` is an infinitesimal isometry.
pub fn contact3d(kappa: f64) -> ZooEntry {
    let (g, f, ubox) = profile(kappa, "x1");
    let rows = vec![
        vec!["1".to_string(), "0".to_string(), "0".to_string()],
        vec!["0".to_string(), format!("1/({g})"), format!("({f})/({g})")],
        vec!["0".to_string(), "0".to_string(), "1".to_string()],
    ];
    let name = format!("contact3d:{kappa}");
    let model = SubRiemannianModel::new(
        name.clone(),
        frame_from(rows),
        2,
        Domain {
            bounds: vec![
                ubox,
                [f64::NEG_INFINITY, f64::INFINITY],
                [f64::NEG_INFINITY, f64::INFINITY],
            ],
        },
    )
    .expect("valid model");
    let mid = 0.5 * (ubox[0] + ubox[1]);
    let half = if kappa == 0.0 { 1.0 } else { 0.3 * (ubox[1] - ubox[0]) };
    ZooEntry {
        name,
        model: Arc::new(model),
        declared_diagram: vec![2, 1],
        invariants: vec![
            inv((1, 1), "kappa * r^2 + h^2", move |p| {
                kappa * horizontal_norm(p, 2).powi(2) + p.h[2] * p.h[2]
            }),
            inv((1, 2), "0", |_| 0.0),
            inv((2, 1), "0", |_| 0.0),
        ],
        region: SampleRegion {
            base: vec![[mid - half, mid + half], [-1.0, 1.0], [-1.0, 1.0]],
            vertical: [-3.0, 3.0],
        },
    }
}

/// Martinet distribution spanned by `d/dx` and `d/dy + x^2 d/dz`.
pub fn martinet() -> ZooEntry {
    let rows = vec![
        vec!["1".into(), "0".into(), "0".into()],
        vec!["0".into(), "1".into(), "x1^2".into()],
        vec!["0".into(), "0".into(), "1".into()],
    ];
    let model = SubRiemannianModel::new("martinet", frame_from(rows), 2, Domain::unbounded(3))
        .expect("valid model");
    ZooEntry {
        name: "martinet".into(),
        model: Arc::new(model),
        declared_diagram: vec![2, 1],
        invariants: Vec::new(),
        region: SampleRegion {
            base: vec![[-1.0, 1.0]; 3],
            vertical: [-3.0, 3.0],
        },
    }
}

/// Left multiplication by `i`, `j`, `k` on the quaternions `a + bi + cj + dk`.
pub fn quaternion_units() -> [[[f64; 4]; 4]; 3] {
    [
        [
            [0.0, -1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, 1.0, 0.0],
        ],
        [
            [0.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, -1.0, 0.0, 0.0],
        ],
        [
            [0.0, 0.0, 0.0, -1.0],
            [0.0, 0.0, -1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
        ],
    ]
}

/// Quaternionic Heisenberg group of horizontal rank `4n`: brackets
/// `[X_i, X_j] = sum_k (J_k)_ij Z_k` with `J_k` block-diagonal quaternion
/// units, in exponential coordinates.
pub fn quaternionic_heisenberg(n: usize) -> ZooEntry {
    assert!(n >= 1);
    let d1 = 4 * n;
    let dim = d1 + 3;
    let units = quaternion_units();
    let jk = |k: usize, a: usize, b: usize| -> f64 {
        if a / 4 != b / 4 {
            0.0
        } else {
            units[k][a % 4][b % 4]
        }
    };
    let mut rows = unit_rows(dim);
    for i in 0..d1 {
        for k in 0..3 {
            // coefficient of d/dz_k in X_i: 1/2 sum_j x_j (J_k)_ji
            let mut terms = Vec::new();
            for j in 0..d1 {
                let w = 0.5 * jk(k, j, i);
                if w != 0.0 {
                    terms.push(format!("{}*x{}", w, j + 1));
                }
            }
            rows[i][d1 + k] = if terms.is_empty() {
                "0".into()
            } else {
                terms.join(" + ")
            };
        }
    }
    let name = format!("quaternionic-heisenberg:{n}");
    let model = SubRiemannianModel::new(name.clone(), frame_from(rows), d1, Domain::unbounded(dim))
        .expect("valid model");
    let d1f = d1 as f64;
    let d2f = 3.0;
    ZooEntry {
        name,
        model: Arc::new(model),
        declared_diagram: vec![d1, 3],
        invariants: vec![
            inv((2, 1), "(d1 - d2 - 1) h^2 / 4", move |p| {
                0.25 * (d1f - d2f - 1.0) * vertical_norm(p, d1).powi(2)
            }),
            inv((1, 1), "(11 d2 - 3) h^2 / 8", move |p| {
                (11.0 * d2f - 3.0) / 8.0 * vertical_norm(p, d1).powi(2)
            }),
            inv((1, 2), "-45 (d2 - 1) h^4 / 256", move |p| {
                -45.0 * (d2f - 1.0) / 256.0 * vertical_norm(p, d1).powi(4)
            }),
        ],
        region: SampleRegion {
            base: vec![[-1.0, 1.0]; dim],
            vertical: [0.0, 3.0],
        },
    }
}

/// Names accepted by [`lookup`].
pub const ZOO_NAMES: &[&str] = &[
    "euclidean[:n]",
    "surface[:kappa]",
    "heisenberg[:n]",
    "contact3d[:kappa]",
    "su2",
    "martinet",
    "quaternionic-heisenberg[:n]",
];

/// Resolves `name` or `name:param` to a zoo entry.
pub fn lookup(spec: &str) -> Result<ZooEntry> {
    let (name, param) = match spec.split_once(':') {
        Some((a, b)) => (a, Some(b)),
        None => (spec, None),
    };
    let float = |default: f64| -> Result<f64> {
        param
            .map(|s| s.parse::<f64>().map_err(|_| Error::Argument(format!("bad parameter in '{spec}'"))))
            .unwrap_or(Ok(default))
    };
    let int = |default: usize| -> Result<usize> {
        param
            .map(|s| s.parse::<usize>().map_err(|_| Error::Argument(format!("bad parameter in '{spec}'"))))
            .unwrap_or(Ok(default))
    };
    match name {
        "euclidean" => {
            let n = int(3)?;
            if n == 0 {
                return Err(Error::Argument("euclidean dimension must be positive".into()));
            }
            Ok(euclidean(n))
        }
        "surface" | "constant-curvature-surface" => Ok(constant_curvature_surface(float(1.0)?)),
        "heisenberg" => {
            let n = int(1)?;
            if n == 0 {
                return Err(Error::Argument("heisenberg dimension must be positive".into()));
            }
            Ok(heisenberg_n(n))
        }
        "contact3d" => Ok(contact3d(float(1.0)?)),
        "su2" | "hopf" => Ok(contact3d(1.0)),
        "martinet" => Ok(martinet()),
        "quaternionic-heisenberg" | "qheisenberg" => {
            let n = int(2)?;
            if n == 0 {
                return Err(Error::Argument("quaternionic dimension must be positive".into()));
            }
            Ok(quaternionic_heisenberg(n))
        }
        _ => Err(Error::Argument(format!(
            "unknown model '{spec}'; known models: {}",
            ZOO_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::i3;

    #[test]
    fn quaternion_units_square_to_minus_one_and_anticommute() {
        let u = quaternion_units();
        let mul = |a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]| {
            let mut out = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        out[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            out
        };
        for a in 0..3 {
            let sq = mul(&u[a], &u[a]);
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(sq[i][j], if i == j { -1.0 } else { 0.0 });
                }
            }
            for b in 0..3 {
                if a != b {
                    let ab = mul(&u[a], &u[b]);
                    let ba = mul(&u[b], &u[a]);
                    for i in 0..4 {
                        for j in 0..4 {
                            assert_eq!(ab[i][j], -ba[i][j]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn martinet_bracket_is_two_x() {
        let z = martinet();
        let c = z.model.structure_constants(&[1.5, -0.2, 0.3]).unwrap();
        assert!((c[i3(3, 2, 0, 1)] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn contact_brackets() {
        let z = contact3d(1.0);
        let u: f64 = 1.1;
        let c = z.model.structure_constants(&[u, 0.4, -0.7]).unwrap();
        assert!((c[i3(3, 2, 0, 1)] - 1.0).abs() < 1e-13);
        assert!((c[i3(3, 1, 0, 1)] + u.cos() / u.sin()).abs() < 1e-13);
        let z0 = contact3d(0.0);
        let c0 = z0.model.structure_constants(&[0.3, 0.4, 0.5]).unwrap();
        assert!((c0[i3(3, 2, 0, 1)] - 1.0).abs() < 1e-14);
        assert!(c0[i3(3, 1, 0, 1)].abs() < 1e-14);
        let zm = contact3d(-1.0);
        let cm = zm.model.structure_constants(&[0.8, 0.0, 0.0]).unwrap();
        assert!((cm[i3(3, 2, 0, 1)] - 1.0).abs() < 1e-13);
        assert!((cm[i3(3, 1, 0, 1)] + 0.8f64.cosh() / 0.8f64.sinh()).abs() < 1e-13);
    }

    #[test]
    fn quaternionic_brackets_are_quaternion_units() {
        let z = quaternionic_heisenberg(2);
        let m = &z.model;
        let n = m.dim();
        let x: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 - 0.3).collect();
        let c = m.structure_constants(&x).unwrap();
        let u = quaternion_units();
        for k in 0..3 {
            for i in 0..8 {
                for j in 0..8 {
                    let want = if i / 4 == j / 4 { u[k][i % 4][j % 4] } else { 0.0 };
                    assert!((c[i3(n, 8 + k, i, j)] - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn lookup_names() {
        assert_eq!(lookup("euclidean:4").unwrap().model.dim(), 4);
        assert_eq!(lookup("quaternionic-heisenberg").unwrap().model.dim(), 11);
        assert_eq!(lookup("su2").unwrap().declared_diagram, vec![2, 1]);
        assert!(lookup("nosuch").is_err());
        assert!(lookup("euclidean:x").is_err());
    }
}
