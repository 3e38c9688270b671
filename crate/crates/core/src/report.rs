//! Report documents for the command-line tool: model loading, covector
//! sampling, one function per command, and serialization (JSON with
//! 17-significant-digit floats, or CSV of the per-covector records).

use std::io;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::canonical::{canonical_curvature, final_box_ricci, CanonicalOptions, CANONICAL_STEP, COMPLETION_TOL, NEAR_SINGULAR_MARGIN, REFINE_TOL, SOLVE_TOL};
use crate::connection::{Connection, ConnectionKind};
use crate::error::{Error, Result};
use crate::flow::transport_twist_oracle;
use crate::lq::{bm_polynomial_check, conjugate_time, diameter_bound, LqProblem};
use crate::model::{CovectorPoint, SubRiemannianModel};
use crate::twist::{self, classify, twist_polynomials, YoungDiagram};
use crate::zoo::{self, SampleRegion, ZooEntry};

pub const SCHEMA: &str = "srcurv.report";
pub const SCHEMA_VERSION: &str = "1.0.0";

/// Time window over which equiregularity is probed by `classify`.
pub const DEFAULT_WINDOW: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Everything a command needs besides the command name.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: String,
    pub connection: ConnectionKind,
    pub samples: usize,
    pub seed: u64,
    pub t_max: Option<f64>,
    pub tol: f64,
    /// A single covector instead of a random sample.
    pub point: Option<(Vec<f64>, Vec<f64>)>,
    /// Deterministic sweep of the vertical magnitude over the sampling range.
    pub sweep: Option<usize>,
    /// Column counts of the LQ diagram.
    pub diagram: Vec<usize>,
    /// Diagonal of `q` for the LQ problem.
    pub q: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: "heisenberg".into(),
            connection: ConnectionKind::Nice,
            samples: 16,
            seed: 0,
            t_max: None,
            tol: twist::DEFAULT_RANK_TOL,
            point: None,
            sweep: None,
            diagram: vec![1],
            q: vec![1.0],
        }
    }
}

/// A model together with its sampling region and, for zoo models, the
/// declared invariants.
pub struct LoadedModel {
    pub model: Arc<SubRiemannianModel>,
    pub zoo: Option<ZooEntry>,
    pub region: SampleRegion,
}

/// Resolves a zoo name (optionally `name:param`) or a path to a JSON model.
pub fn load_model(spec: &str) -> Result<LoadedModel> {
    let path = Path::new(spec);
    if spec.ends_with(".json") || path.is_file() {
        let model = SubRiemannianModel::load_json(path)?;
        model.validate_frame(16)?;
        let region = SampleRegion::for_model(&model);
        return Ok(LoadedModel { model: Arc::new(model), zoo: None, region });
    }
    let entry = zoo::lookup(spec)?;
    Ok(LoadedModel { model: entry.model.clone(), region: entry.region.clone(), zoo: Some(entry) })
}

/// The covectors a command runs on.
pub fn covectors(cfg: &RunConfig, loaded: &LoadedModel) -> Result<Vec<CovectorPoint>> {
    let m = &loaded.model;
    let (n, d1) = (m.dim(), m.d1());
    if let Some((x, h)) = &cfg.point {
        if x.len() != n || h.len() != n {
            return Err(Error::Argument(format!("covector needs {n} base and {n} momentum components")));
        }
        m.check_domain(x)?;
        return Ok(vec![CovectorPoint::new(x.clone(), h.clone())]);
    }
    if let Some(k) = cfg.sweep {
        // fixed base point and horizontal direction, vertical magnitude on a grid
        let base = loaded.region.sample(n, d1, 1, cfg.seed).pop().expect("one sample");
        let mut dir = base.h[d1..].to_vec();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            dir.iter_mut().for_each(|v| *v /= norm);
        } else if !dir.is_empty() {
            dir[0] = 1.0;
        }
        let [lo, hi] = loaded.region.vertical;
        return Ok((0..k)
            .map(|i| {
                let s = if k > 1 { lo + (hi - lo) * i as f64 / (k - 1) as f64 } else { lo };
                let mut h = base.h[..d1].to_vec();
                h.extend(dir.iter().map(|v| v * s));
                CovectorPoint::new(base.x.clone(), h)
            })
            .collect());
    }
    Ok(loaded.region.sample(n, d1, cfg.samples, cfg.seed))
}

/// A finished command: the JSON document and a flat table of records.
#[derive(Debug, Clone)]
pub struct Report {
    pub document: Value,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Report {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => to_json_string(&self.document),
            Format::Csv => to_csv(&self.header, &self.rows),
        }
    }
}

fn envelope(command: &str, cfg: &RunConfig, model: Option<&SubRiemannianModel>, tolerances: Value, results: Value) -> Value {
    json!({
        "schema": SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "model": model.map(|m| json!({"name": m.name, "dim": m.dim(), "horizontal_rank": m.d1()})),
        "connection": if model.is_some() { json!(cfg.connection.name()) } else { Value::Null },
        "seed": cfg.seed,
        "tolerances": tolerances,
        "results": results,
    })
}

fn error_value(e: &Error) -> Value {
    serde_json::to_value(e.to_object()).unwrap_or(Value::Null)
}

fn covector_value(p: &CovectorPoint) -> Value {
    json!({"x": p.x, "h": p.h})
}

fn canonical_opts(cfg: &RunConfig) -> CanonicalOptions {
    CanonicalOptions { rank_tol: cfg.tol, ..Default::default() }
}

fn pipeline_tolerances(cfg: &RunConfig) -> Value {
    json!({
        "rank_tol": cfg.tol,
        "flow_step_at_unit_covector": CANONICAL_STEP,
        "step_refinement_tol": REFINE_TOL,
        "near_singular_margin": NEAR_SINGULAR_MARGIN,
        "solve_residual_max": SOLVE_TOL,
        "completion_residual_max": COMPLETION_TOL,
    })
}

/// Young-diagram census over the sample.
pub fn cmd_classify(cfg: &RunConfig) -> Result<Report> {
    let loaded = load_model(&cfg.model)?;
    let conn = Connection::build(loaded.model.clone(), cfg.connection);
    let pts = covectors(cfg, &loaded)?;
    let declared = loaded.zoo.as_ref().map(|z| z.declared_diagram.clone());
    let window = cfg.t_max.unwrap_or(DEFAULT_WINDOW);
    let records: Vec<Value> = pts
        .par_iter()
        .map(|p| match classify(&conn, p, window, 5, declared.as_deref(), cfg.tol) {
            Ok(c) => json!({
                "covector": covector_value(p),
                "diagram": c.diagram.label(),
                "columns": c.diagram.columns,
                "ample": c.ample,
                "equiregular": c.equiregular,
                "in_sigma": c.in_sigma,
                "uncertain": c.uncertain,
                "irregular": c.irregular,
                "error": null,
            }),
            Err(e) => json!({"covector": covector_value(p), "error": error_value(&e)}),
        })
        .collect();
    let mut census: Vec<(String, usize)> = Vec::new();
    let mut in_sigma = 0usize;
    for r in &records {
        if let Some(label) = r.get("diagram").and_then(|v| v.as_str()) {
            match census.iter_mut().find(|(l, _)| l == label) {
                Some(c) => c.1 += 1,
                None => census.push((label.to_string(), 1)),
            }
            if r["in_sigma"].as_bool() == Some(true) {
                in_sigma += 1;
            }
        }
    }
    census.sort();
    let total = records.len();
    let header = ["x", "h", "diagram", "ample", "equiregular", "in_sigma", "uncertain", "irregular", "error"];
    let rows = records
        .iter()
        .map(|r| {
            vec![
                r["covector"]["x"].clone(),
                r["covector"]["h"].clone(),
                r.get("diagram").cloned().unwrap_or(Value::Null),
                r.get("ample").cloned().unwrap_or(Value::Null),
                r.get("equiregular").cloned().unwrap_or(Value::Null),
                r.get("in_sigma").cloned().unwrap_or(Value::Null),
                r.get("uncertain").cloned().unwrap_or(Value::Null),
                r.get("irregular").cloned().unwrap_or(Value::Null),
                r["error"].get("kind").cloned().unwrap_or(Value::Null),
            ]
        })
        .collect();
    let results = json!({
        "window": window,
        "declared_diagram": declared.map(|d| YoungDiagram::new(d).label()),
        "census": census.iter().map(|(l, c)| json!({"diagram": l, "count": c})).collect::<Vec<_>>(),
        "sigma_fraction": if total > 0 { json!(in_sigma as f64 / total as f64) } else { Value::Null },
        "records": records,
    });
    Ok(Report {
        document: envelope("classify", cfg, Some(&loaded.model), json!({"rank_tol": cfg.tol}), results),
        header: header.iter().map(|s| s.to_string()).collect(),
        rows,
    })
}

fn ricci_record(conn: &Connection, p: &CovectorPoint, opts: &CanonicalOptions, zoo: Option<&ZooEntry>) -> Value {
    let fb = final_box_ricci(conn, p, opts.rank_tol).ok();
    match canonical_curvature(conn, p, opts) {
        Ok(c) => {
            let declared: Vec<Value> = zoo
                .map(|z| {
                    z.invariants
                        .iter()
                        .map(|inv| {
                            let want = (inv.eval)(p);
                            let got = c.ricci(inv.block.0, inv.block.1);
                            json!({"a": inv.block.0, "b": inv.block.1, "formula": inv.formula, "expected": want,
                                   "abs_error": got.map(|g| (g - want).abs())})
                        })
                        .collect()
                })
                .unwrap_or_default();
            json!({
                "covector": covector_value(p),
                "diagram": c.diagram.label(),
                "ricci": c.ricci,
                "normalization": c.normalization,
                "flow_step": c.step,
                "regularity_margin": c.margin,
                "near_singular": c.margin < NEAR_SINGULAR_MARGIN,
                "final_box": fb,
                "declared": declared,
                "error": null,
            })
        }
        Err(e) => json!({"covector": covector_value(p), "final_box": fb, "error": error_value(&e)}),
    }
}

/// Full canonical pipeline per covector.
pub fn cmd_ricci(cfg: &RunConfig) -> Result<Report> {
    let loaded = load_model(&cfg.model)?;
    let conn = Connection::build(loaded.model.clone(), cfg.connection);
    let pts = covectors(cfg, &loaded)?;
    let opts = canonical_opts(cfg);
    let records: Vec<Value> = pts.par_iter().map(|p| ricci_record(&conn, p, &opts, loaded.zoo.as_ref())).collect();
    let header: Vec<String> = ["x", "h", "diagram", "a", "b", "ricci", "check", "normalization_max", "error"].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for r in &records {
        let base = |extra: Vec<Value>| {
            let mut v = vec![r["covector"]["x"].clone(), r["covector"]["h"].clone()];
            v.extend(extra);
            v
        };
        match r.get("ricci").and_then(|v| v.as_array()) {
            Some(entries) => {
                let nmax = r["normalization"]["conditions"].as_array().map(|c| c.iter().filter_map(|x| x[1].as_f64()).fold(0.0, f64::max));
                for e in entries {
                    rows.push(base(vec![r["diagram"].clone(), e["a"].clone(), e["b"].clone(), e["value"].clone(), e["check"].clone(), json!(nmax), Value::Null]));
                }
            }
            None => rows.push(base(vec![Value::Null, Value::Null, Value::Null, Value::Null, Value::Null, Value::Null, r["error"]["kind"].clone()])),
        }
    }
    let results = json!({"records": records});
    Ok(Report { document: envelope("ricci", cfg, Some(&loaded.model), pipeline_tolerances(cfg), results), header, rows })
}

/// Diameter bound estimate over the sample.
pub fn cmd_bonnet_myers(cfg: &RunConfig) -> Result<Report> {
    let loaded = load_model(&cfg.model)?;
    let conn = Connection::build(loaded.model.clone(), cfg.connection);
    let pts = covectors(cfg, &loaded)?;
    let bound = diameter_bound(&conn, &pts, &canonical_opts(cfg))?;
    let header: Vec<String> = ["route", "row", "k", "bound", "reason"].iter().map(|s| s.to_string()).collect();
    let rows = bound
        .routes
        .iter()
        .map(|r| vec![json!(r.route), json!(r.row), json!(r.k), json!(r.bound), json!(r.reason)])
        .collect();
    let results = json!({
        "estimate_note": "infima are taken over the sampled covectors only",
        "bound": bound,
    });
    Ok(Report { document: envelope("bonnet-myers", cfg, Some(&loaded.model), pipeline_tolerances(cfg), results), header, rows })
}

/// First conjugate time of the LQ problem of a Young diagram with diagonal `q`.
pub fn cmd_lq(cfg: &RunConfig) -> Result<Report> {
    let diagram = YoungDiagram::new(cfg.diagram.clone());
    if diagram.columns.is_empty() || diagram.columns.windows(2).any(|w| w[1] > w[0]) || diagram.columns.contains(&0) {
        return Err(Error::Argument("diagram column counts must be positive and non-increasing".into()));
    }
    let mut problem = LqProblem::young(&diagram);
    if cfg.q.len() != problem.dim() {
        return Err(Error::Argument(format!("q needs {} diagonal entries", problem.dim())));
    }
    for (i, v) in cfg.q.iter().enumerate() {
        problem.q[(i, i)] = *v;
    }
    let t_max = cfg.t_max.unwrap_or(20.0);
    let tol = 1e-10;
    let t = conjugate_time(&problem, t_max, tol)?;
    let rows_q: Vec<Vec<f64>> = {
        let mut off = 0;
        diagram
            .row_lengths()
            .iter()
            .map(|len| {
                let r = cfg.q[off..off + len].to_vec();
                off += len;
                r
            })
            .collect()
    };
    let single_row = diagram.row_lengths().len() == 1;
    let poly = if single_row { Some(bm_polynomial_check(&rows_q[0])?) } else { None };
    let results = json!({
        "diagram": diagram.label(),
        "q_diagonal": cfg.q,
        "t_max": t_max,
        "conjugate_time": t,
        "polynomial": poly,
    });
    Ok(Report {
        document: envelope("lq", cfg, None, json!({"bisection_tol": tol, "scan_points": crate::lq::SCAN_POINTS}), results),
        header: vec!["diagram".into(), "q".into(), "conjugate_time".into()],
        rows: vec![vec![json!(diagram.label()), json!(cfg.q), json!(t)]],
    })
}

#[derive(Debug, Clone, Serialize)]
struct Check {
    name: String,
    value: f64,
    tolerance: f64,
    passed: bool,
    detail: Value,
}

fn check(name: &str, value: f64, tolerance: f64, detail: Value) -> Check {
    Check { name: name.into(), value, tolerance, passed: value.is_finite() && value <= tolerance, detail }
}

/// Internal consistency checks on the model and the pipeline.
pub fn cmd_validate(cfg: &RunConfig) -> Result<Report> {
    let loaded = load_model(&cfg.model)?;
    let model = &loaded.model;
    let conn = Connection::build(model.clone(), cfg.connection);
    let pts = covectors(cfg, &loaded)?;
    let mut checks = Vec::new();

    let bases: Vec<Vec<f64>> = pts.iter().map(|p| p.x.clone()).collect();
    let ids = conn.validate_identities(&bases)?;
    let worst = ids.checks.iter().map(|c| c.max_residual).fold(0.0, f64::max);
    checks.push(check("connection_identities", worst, crate::connection::IDENTITY_TOL, serde_json::to_value(&ids).unwrap_or(Value::Null)));

    // recursion against transport oracle on a few covectors
    let oracle_pts: Vec<&CovectorPoint> = pts.iter().take(5).collect();
    let twist_err = oracle_pts
        .par_iter()
        .map(|p| -> Result<f64> {
            let exact = twist_polynomials(&conn, p, 3)?;
            let mut worst: f64 = 0.0;
            for k in 1..=3 {
                let o = transport_twist_oracle(&conn, p, k, crate::flow::ORACLE_STEPS)?;
                let e = &exact.polys[k];
                worst = worst.max((&o - e).norm() / e.norm().max(twist::covector_scale(p).powi(k as i32)).max(1e-300));
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    checks.push(check("twist_recursion_vs_transport", twist_err, 1e-4, json!({"covectors": oracle_pts.len(), "orders": [1, 2, 3]})));

    let opts = canonical_opts(cfg);
    let records: Vec<Value> = pts.par_iter().map(|p| ricci_record(&conn, p, &opts, loaded.zoo.as_ref())).collect();
    let ok: Vec<&Value> = records.iter().filter(|r| r["error"].is_null()).collect();
    let norm_of = |r: &Value| -> f64 {
        r["normalization"]["conditions"].as_array().map(|c| c.iter().filter_map(|x| x[1].as_f64()).fold(0.0, f64::max)).unwrap_or(f64::INFINITY)
    };
    let (near, regular): (Vec<&Value>, Vec<&Value>) = ok.iter().partition(|r| r["near_singular"].as_bool() == Some(true));
    let norm_max = regular.iter().map(|r| norm_of(r)).fold(0.0, f64::max);
    let near_max = near.iter().map(|r| norm_of(r)).fold(0.0, f64::max);
    let mismatch = regular.iter().filter_map(|r| r["normalization"]["expansion_mismatch"].as_f64()).fold(0.0, f64::max);
    checks.push(check(
        "normalization_conditions",
        norm_max,
        1e-5,
        json!({"covectors": regular.len(), "failed": records.len() - ok.len(), "near_singular": near.len(), "near_singular_max_residual": near_max}),
    ));
    checks.push(check("curvature_expansion_vs_defining_formula", mismatch, 1e-5, Value::Null));
    if let Some(z) = &loaded.zoo {
        let mut worst: f64 = 0.0;
        for r in &regular {
            for d in r["declared"].as_array().cloned().unwrap_or_default() {
                let want = d["expected"].as_f64().unwrap_or(0.0);
                let err = d["abs_error"].as_f64().unwrap_or(f64::INFINITY);
                worst = worst.max(err / want.abs().max(1.0));
            }
        }
        checks.push(check("declared_invariants", worst, 1e-5, json!({"formulas": z.invariants.iter().map(|i| format!("{i:?}")).collect::<Vec<_>>()})));
        let declared = YoungDiagram::new(z.declared_diagram.clone()).label();
        let mismatched = records.iter().filter(|r| r["error"].is_null() && r["diagram"].as_str() != Some(declared.as_str())).count();
        checks.push(check("declared_diagram", mismatched as f64, 0.0, json!({"declared": declared})));
    }
    let passed = checks.iter().all(|c| c.passed);
    let header: Vec<String> = ["check", "value", "tolerance", "passed"].iter().map(|s| s.to_string()).collect();
    let rows = checks.iter().map(|c| vec![json!(c.name), json!(c.value), json!(c.tolerance), json!(c.passed)]).collect();
    let results = json!({"passed": passed, "checks": checks});
    Ok(Report { document: envelope("validate", cfg, Some(model), pipeline_tolerances(cfg), results), header, rows })
}

/// Formatter that writes every float with 17 significant digits and
/// non-finite values as `null`.
struct Precise<W> {
    pretty: serde_json::ser::PrettyFormatter<'static>,
    _w: std::marker::PhantomData<W>,
}

macro_rules! forward {
    ($($name:ident($($arg:ident: $t:ty),*)),* $(,)?) => {
        $(fn $name<X: ?Sized + io::Write>(&mut self, w: &mut X $(, $arg: $t)*) -> io::Result<()> {
            self.pretty.$name(w $(, $arg)*)
        })*
    };
}

impl<W> serde_json::ser::Formatter for Precise<W> {
    fn write_f64<X: ?Sized + io::Write>(&mut self, w: &mut X, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<X: ?Sized + io::Write>(&mut self, w: &mut X, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    forward!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        end_object_key(),
        begin_object_value(),
        end_object_value(),
    );
}

/// Serializes with 17 significant digits per float.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let fmt = Precise::<()> { pretty: serde_json::ser::PrettyFormatter::with_indent(b"  "), _w: std::marker::PhantomData };
    let mut ser = serde_json::Serializer::with_formatter(&mut out, fmt);
    value.serialize(&mut ser).expect("serializing to memory");
    out.push(b'\n');
    String::from_utf8(out).expect("JSON is UTF-8")
}

fn csv_cell(v: &Value) -> String {
    let raw = match v {
        Value::Null => String::new(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{f:.16e}"),
            _ => n.to_string(),
        },
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(csv_cell).collect::<Vec<_>>().join(" "),
        other => other.to_string(),
    };
    if raw.contains(',') || raw.contains('"') || raw.contains('\n') {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw
    }
}

pub fn to_csv(header: &[String], rows: &[Vec<Value>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter().map(csv_cell).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// JSON error document `{"error": {"kind", "message"}}`.
pub fn error_document(e: &Error) -> String {
    to_json_string(&json!({ "error": error_value(e) }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        let s = to_json_string(&json!({"a": 0.1, "b": [1.0, f64::NAN], "c": 3}));
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("null"));
        assert!(s.contains("\"c\": 3"));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn classify_is_deterministic() {
        let cfg = RunConfig { model: "martinet".into(), samples: 6, seed: 3, ..Default::default() };
        let a = cmd_classify(&cfg).unwrap().render(Format::Json);
        let b = cmd_classify(&cfg).unwrap().render(Format::Json);
        assert_eq!(a, b);
        assert!(a.contains("\"schema_version\""));
    }

    #[test]
    fn lq_report() {
        let cfg = RunConfig { diagram: vec![1], q: vec![4.0], ..Default::default() };
        let r = cmd_lq(&cfg).unwrap();
        let t = r.document["results"]["conjugate_time"].as_f64().unwrap();
        assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-8);
        assert!(r.render(Format::Csv).starts_with("diagram,q,conjugate_time\n"));
    }

    #[test]
    fn unknown_model_is_an_argument_error() {
        let cfg = RunConfig { model: "nope".into(), ..Default::default() };
        let e = cmd_ricci(&cfg).unwrap_err();
        assert!(error_document(&e).contains("\"kind\": \"argument\""));
    }

    #[test]
    fn validate_heisenberg_passes() {
        let cfg = RunConfig { model: "heisenberg".into(), samples: 6, ..Default::default() };
        let r = cmd_validate(&cfg).unwrap();
        assert_eq!(r.document["results"]["passed"], json!(true), "{}", to_json_string(&r.document));
    }
}
