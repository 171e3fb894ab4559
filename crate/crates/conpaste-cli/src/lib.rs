//! Scenario runner for the conpaste toolkit.
//!
//! A scenario is one JSON document naming a grid, a seed and a task. Running
//! it produces a set of named artifacts (CVF1 fields, CSV tables and a
//! `report.json`), which are byte-identical across reruns with the same
//! inputs.

pub mod scenario;

use conpaste::divsolve::{
    constant_sweep, de_mean, solve_divergence_torus, solve_divergence_zero_boundary_tol, staggered_divergence, sweep_csv,
    SOLVE_TOL,
};
use conpaste::grid::{divergence, integrate, jacobian, norms, GridSpec, ScalarField, VectorField};
use conpaste::io::{read_field_file, write_field, FieldData};
use conpaste::mollify::{kernel, mollify_field};
use conpaste::moser::{det_residual, solve_jacobian_eq_traced, MoserProblem};
use conpaste::pasting::{compatibility_defect, paste_with, smooth_conservative};
use conpaste::regions::RegionSet;
use conpaste::symplectic::{
    blend_generating, blend_report, generating_from_map, map_from_generating, GeneratingFunction, LocalMap, Patch,
    FD_STEP,
};
use conpaste::Error;
use serde_json::{json, Value};
use std::path::Path;

pub use scenario::{Scenario, Task};

/// Exit status for a failed configuration (unreadable or invalid scenario).
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Run(e) => exit_code(e),
        }
    }
}

/// Process exit status for each library error class.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotCompatible(_) => 3,
        Error::NoContraction(_) => 4,
        Error::RegionTooTight(_) => 5,
        Error::InvalidField(_) => 6,
        Error::InvalidParameter(_) => 7,
        Error::InvalidRegion(_) => 8,
        Error::GridTooCoarse(_) => 9,
        Error::KernelTooWide(_) => 10,
        Error::SpecMismatch => 11,
        Error::SolverFailure(_) => 12,
        Error::NotConservativeInput(_) => 13,
        Error::TargetUnreachable(_) => 14,
        Error::DegenerateMap(_) => 15,
        Error::NotDiffeo(_) => 16,
        Error::NoTwist(_) => 17,
        Error::TwistLost(_) => 18,
        Error::NewtonFailure(_) => 19,
        Error::FormatError(_) => 20,
        Error::Io(_) => 21,
    }
}

/// Name of the error variant, as recorded in reports.
pub fn error_class(e: &Error) -> &'static str {
    match e {
        Error::InvalidField(_) => "InvalidField",
        Error::InvalidParameter(_) => "InvalidParameter",
        Error::InvalidRegion(_) => "InvalidRegion",
        Error::RegionTooTight(_) => "RegionTooTight",
        Error::GridTooCoarse(_) => "GridTooCoarse",
        Error::KernelTooWide(_) => "KernelTooWide",
        Error::SpecMismatch => "SpecMismatch",
        Error::NotCompatible(_) => "NotCompatible",
        Error::SolverFailure(_) => "SolverFailure",
        Error::NotConservativeInput(_) => "NotConservativeInput",
        Error::TargetUnreachable(_) => "TargetUnreachable",
        Error::NoContraction(_) => "NoContraction",
        Error::DegenerateMap(_) => "DegenerateMap",
        Error::NotDiffeo(_) => "NotDiffeo",
        Error::NoTwist(_) => "NoTwist",
        Error::TwistLost(_) => "TwistLost",
        Error::NewtonFailure(_) => "NewtonFailure",
        Error::FormatError(_) => "FormatError",
        Error::Io(_) => "Io",
    }
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub grid: Option<usize>,
    pub seed: Option<u64>,
}

pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load_scenario(path: &Path, o: Overrides) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut sc = parse_scenario(&text)?;
    sc.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    if let Some(g) = o.grid {
        sc.grid = g;
    }
    if let Some(s) = o.seed {
        sc.seed = s;
    }
    Ok(sc)
}

/// Files produced by one run, in write order.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    /// `None` on success.
    pub error: Option<Error>,
}

impl Artifacts {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(0, exit_code)
    }

    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    pub fn report(&self) -> Value {
        self.file("report.json").and_then(|b| serde_json::from_slice(b).ok()).unwrap_or(Value::Null)
    }

    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            std::fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Out {
    files: Vec<(String, Vec<u8>)>,
    result: Value,
}

impl Out {
    fn field(&mut self, name: &str, f: FieldData, meta: Option<&Value>) -> conpaste::Result<()> {
        let mut buf = Vec::new();
        write_field(&mut buf, &f, meta)?;
        self.files.push((name.to_string(), buf));
        Ok(())
    }

    fn text(&mut self, name: &str, s: String) {
        self.files.push((name.to_string(), s.into_bytes()));
    }
}

/// Runs a scenario. Library errors are recorded in the artifacts (and the
/// report); only configuration problems are returned as `Err`.
pub fn run_scenario(sc: &Scenario) -> Result<Artifacts, CliError> {
    let spec = GridSpec::uniform(2, sc.grid).map_err(|e| CliError::Config(e.to_string()))?;
    let mut out = Out::default();
    let status = execute(sc, &spec, &mut out);
    let mut report = json!({
        "scenario": sc.name,
        "op": sc.task.op(),
        "grid": sc.grid,
        "seed": sc.seed,
        "status": if status.is_ok() { "ok" } else { "error" },
    });
    if let Err(e) = &status {
        report["error"] = json!({ "class": error_class(e), "code": exit_code(e), "message": e.to_string() });
    }
    report["result"] = out.result;
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    let mut files = out.files;
    files.push(("report.json".into(), text.into_bytes()));
    Ok(Artifacts { files, error: status.err() })
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Diagnostics of a pasted field `z` against the base field `x`.
pub fn field_report(z: &VectorField, x: &VectorField, rs: &RegionSet, alpha: f64) -> conpaste::Result<Value> {
    if z.spec() != x.spec() || z.spec() != rs.spec() {
        return Err(Error::SpecMismatch);
    }
    let diff = z.sub(x)?;
    let mut support: f64 = 0.0;
    for i in 0..z.spec().len() {
        if (0..z.dim()).any(|a| diff.comp(a)[i] != 0.0) {
            support = support.max(rs.dist_k()[i]);
        }
    }
    Ok(json!({
        "closeness": to_json(&norms(&diff, alpha)?),
        "divergence_residual_sup": staggered_divergence(z).max_abs(),
        "spectral_divergence_sup": divergence(z)?.max_abs(),
        "support_radius": support,
        "margin": rs.margin(),
        "support_within_margin": support <= rs.margin(),
    }))
}

fn max_diff_on(a: &VectorField, b: &VectorField, mask: &[bool]) -> f64 {
    let mut m: f64 = 0.0;
    for (i, &inside) in mask.iter().enumerate() {
        if inside {
            for c in 0..a.dim() {
                m = m.max((a.comp(c)[i] - b.comp(c)[i]).abs());
            }
        }
    }
    m
}

fn execute(sc: &Scenario, spec: &GridSpec, out: &mut Out) -> conpaste::Result<()> {
    let seed = sc.seed;
    match &sc.task {
        Task::Mollify { field, eps } => {
            let v = field.build(spec, seed)?;
            let k = kernel(*eps, spec)?;
            let m = mollify_field(&v, &k)?;
            let commutation = divergence(&m)?.sub(&mollify_field(&divergence(&v)?, &k)?)?.max_abs();
            let input = norms(&v, 0.5)?;
            out.result = json!({
                "eps": eps,
                "kernel_support_nodes": k.support_count(),
                "input": to_json(&input),
                "output": to_json(&norms(&m, 0.5)?),
                "commutation_sup": commutation,
                "commutation_relative": if input.c1 > 0.0 { commutation / input.c1 } else { 0.0 },
                "divergence_in": divergence(&v)?.max_abs(),
                "divergence_out": divergence(&m)?.max_abs(),
            });
            out.field("mollified.cvf", FieldData::Vector(m), None)?;
        }
        Task::Smooth { field, eps } => {
            let x = field.build(spec, seed)?;
            let s = smooth_conservative(&x, *eps)?;
            out.result = json!({
                "eps_target": eps,
                "eps_used": s.eps_used,
                "achieved": to_json(&s.achieved),
                "divergence_sup": divergence(&s.z)?.max_abs(),
            });
            out.field("smoothed.cvf", FieldData::Vector(s.z), None)?;
        }
        Task::Paste { x, y, regions, alpha, smoothness } => {
            let rs = regions.build(spec)?;
            let xf = x.build(spec, seed)?;
            let yf = y.build(spec, seed)?;
            let p = paste_with(&xf, &yf, &rs, *alpha, *smoothness)?;
            let (v, o, w) = (rs.v_mask(), rs.omega_mask(), rs.w_mask());
            let mut csv = String::from("label,nodes,max_abs_z_minus_x,max_abs_z_minus_y\n");
            for (name, m) in [("V", &v), ("Omega", &o), ("W", &w)] {
                let n = m.iter().filter(|&&b| b).count();
                csv.push_str(&format!(
                    "{name},{n},{:e},{:e}\n",
                    max_diff_on(&p.z, &xf, m),
                    max_diff_on(&p.z, &yf, m)
                ));
            }
            let t_defect = {
                let t = p.z.add(&p.correction)?;
                compatibility_defect(&t, &rs)?
            };
            out.result = json!({
                "regions": rs.metadata(),
                "paste": to_json(&p.report),
                "diagnostics": field_report(&p.z, &xf, &rs, *alpha)?,
                "plateau_v_max_diff": max_diff_on(&p.z, &yf, &v),
                "plateau_w_max_diff": max_diff_on(&p.z, &xf, &w),
                "compatibility_defect": t_defect,
            });
            out.text("regions.csv", csv);
            out.field("z.cvf", FieldData::Vector(p.z), Some(&rs.metadata()))?;
            out.field("correction.cvf", FieldData::Vector(p.correction), None)?;
            out.field("labels.cvf", FieldData::Scalar(rs.label_field()), Some(&rs.metadata()))?;
        }
        Task::Divsolve { g, regions, restrict, tol } => {
            let mut gf = g.build(spec, seed)?;
            match regions {
                Some(cfg) => {
                    let rs = cfg.build(spec)?;
                    let omega = rs.omega_mask();
                    if *restrict {
                        for (val, &b) in gf.values_mut().iter_mut().zip(&omega) {
                            if !b {
                                *val = 0.0;
                            }
                        }
                        gf = de_mean(&gf, &omega)?;
                    }
                    let v = solve_divergence_zero_boundary_tol(&gf, &rs, tol.unwrap_or(SOLVE_TOL))?;
                    let residual = staggered_divergence(&v).sub(&gf)?.max_abs();
                    let outside = omega.iter().map(|&b| !b).collect::<Vec<_>>();
                    out.result = json!({
                        "domain": "omega",
                        "regions": rs.metadata(),
                        "g_sup": gf.max_abs(),
                        "constraint_residual": residual,
                        "relative_residual": if gf.max_abs() > 0.0 { residual / gf.max_abs() } else { 0.0 },
                        "max_abs_outside_omega": max_diff_on(&v, &VectorField::zeros(spec), &outside),
                        "v": to_json(&norms(&v, 0.5)?),
                    });
                    out.field("v.cvf", FieldData::Vector(v), Some(&rs.metadata()))?;
                }
                None => {
                    let v = solve_divergence_torus(&gf)?;
                    out.result = json!({
                        "domain": "torus",
                        "g_sup": gf.max_abs(),
                        "constraint_residual": divergence(&v)?.sub(&gf)?.max_abs(),
                        "v": to_json(&norms(&v, 0.5)?),
                    });
                    out.field("v.cvf", FieldData::Vector(v), None)?;
                }
            }
            out.field("g.cvf", FieldData::Scalar(gf), None)?;
        }
        Task::Sweep { regions, n_samples, alpha } => {
            let rs = regions.build(spec)?;
            let rows = constant_sweep(&rs, *n_samples, seed, *alpha)?;
            let ratio = |f: fn(&conpaste::divsolve::SweepRow) -> f64| {
                let v: Vec<f64> = rows.iter().map(f).collect();
                let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
                (v, hi / lo)
            };
            let (c0, c0_spread) = ratio(|r| r.ratio_c0);
            let (_, holder_spread) = ratio(|r| r.ratio_holder);
            out.result = json!({
                "regions": rs.metadata(),
                "rows": to_json(&rows),
                "ratio_holder_spread": holder_spread,
                "ratio_c0_spread": c0_spread,
                "ratio_c0_increasing": c0.windows(2).all(|w| w[1] > w[0]),
            });
            out.text("sweep.csv", sweep_csv(&rows));
        }
        Task::Moser { f, g, regions, lambda, tol, max_iter } => {
            let ff = f.build(spec, seed)?;
            let gf = match g {
                Some(g) => g.build(spec, seed)?,
                None => ScalarField::constant(spec, 1.0),
            };
            let mut p = match regions {
                Some(cfg) => MoserProblem::on_region(ff, gf, &cfg.build(spec)?)?,
                None => MoserProblem::on_torus(ff, gf)?,
            };
            if let Some(l) = lambda {
                p = p.with_lambda(*l);
            }
            let (u, trace) = solve_jacobian_eq_traced(&p, *tol, *max_iter);
            out.text("trace.csv", trace.to_csv());
            out.result = json!({ "trace": to_json(&trace), "iterations": trace.iterations() });
            let u = u?;
            let det = jacobian(&u)?.det().clone();
            out.result["det_residual_sup"] = json!(det_residual(&u, &p)?.max_abs());
            out.result["min_det"] = json!(det.values().iter().cloned().fold(f64::INFINITY, f64::min));
            out.result["volume"] = json!(integrate(&det, None)?);
            out.field("u.cvf", FieldData::Map(u), None)?;
        }
        Task::Weakpaste { map, x0, r, alpha } => {
            let f = map.build(spec);
            let (g, rep) = conpaste::diffeo_pasting::weak_paste(&f, x0, *r, *alpha)?;
            out.result = to_json(&rep);
            out.field("g.cvf", FieldData::Map(g), None)?;
        }
        Task::Symplectic { outer, inner, delta, center, nodes, sample_nodes, sample_scale, probes } => {
            let inner = inner.clone().unwrap_or_else(|| outer.linearization());
            let wide = Patch::new(*center, sample_scale * delta)?;
            let sample = |t: &scenario::TwistRecipe| LocalMap::sample(wide, *sample_nodes, |x, y| t.eval(x, y));
            let s0 = generating_from_map(&sample(outer)?, *delta, *nodes)?;
            let s1 = generating_from_map(&sample(&inner)?, *delta, *nodes)?;
            let s = blend_generating(&s0, &s1, *delta)?;
            let rep = blend_report(&s0, &s1, &s, FD_STEP)?;
            let mut images = Vec::new();
            for p in probes {
                images.push(json!({ "point": p, "image": s.map_point(p[0], p[1])? }));
            }
            out.result = json!({ "blend": to_json(&rep), "fd_step": FD_STEP, "probes": images });
            let meta = json!({ "patch": to_json(s.patch()), "nodes": "chebyshev_lobatto" });
            let m = map_from_generating(&s);
            out.field("map.cvf", local_map_field(&m)?, Some(&meta))?;
            out.field("generating.cvf", generating_field(&s)?, Some(&meta))?;
        }
    }
    Ok(())
}

/// Map samples as a vector field over an `n × n` index grid; nodes outside
/// the chart hold NaN.
fn local_map_field(m: &LocalMap) -> conpaste::Result<FieldData> {
    let n = m.grid().n();
    let spec = GridSpec::uniform(2, n)?;
    let (xs, ys) = m.components();
    let clean = |v: &[f64]| v.iter().map(|&x| if x.is_finite() { x } else { 0.0 }).collect::<Vec<_>>();
    // Invalid nodes are written as 0; their indices are listed alongside.
    Ok(FieldData::Vector(VectorField::new(spec, vec![clean(xs), clean(ys)])?))
}

fn generating_field(s: &GeneratingFunction) -> conpaste::Result<FieldData> {
    let nodes = s.grid().nodes();
    let n = nodes.len();
    let spec = GridSpec::uniform(2, n)?;
    let vals: Vec<f64> = (0..n * n).map(|k| s.jet(nodes[k / n], nodes[k % n]).s).collect();
    Ok(FieldData::Scalar(ScalarField::new(spec, vals)?))
}

/// Header and norms of a CVF1 file, as printed by `inspect`.
pub fn inspect(path: &Path) -> Result<String, CliError> {
    let (field, header) = read_field_file(path)?;
    let n = match &field {
        FieldData::Scalar(s) => norms(s, 0.5)?,
        FieldData::Vector(v) => norms(v, 0.5)?,
        FieldData::Map(m) => norms(m.displacement(), 0.5)?,
    };
    let mut s = serde_json::to_string_pretty(&header).map_err(|e| CliError::Config(e.to_string()))?;
    s.push_str(&format!("\nc0 = {:e}\nc1 = {:e}\nholder(0.5) = {:e}\n", n.c0, n.c1, n.holder));
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn exit_codes_are_distinct_and_nonzero() {
        let all = [
            Error::InvalidField(String::new()),
            Error::InvalidParameter(String::new()),
            Error::InvalidRegion(String::new()),
            Error::RegionTooTight(String::new()),
            Error::GridTooCoarse(String::new()),
            Error::KernelTooWide(String::new()),
            Error::SpecMismatch,
            Error::NotCompatible(String::new()),
            Error::SolverFailure(String::new()),
            Error::NotConservativeInput(String::new()),
            Error::TargetUnreachable(String::new()),
            Error::NoContraction(String::new()),
            Error::DegenerateMap(String::new()),
            Error::NotDiffeo(String::new()),
            Error::NoTwist(String::new()),
            Error::TwistLost(String::new()),
            Error::NewtonFailure(String::new()),
            Error::FormatError(String::new()),
            Error::Io(String::new()),
        ];
        let codes: BTreeSet<i32> = all.iter().map(exit_code).collect();
        assert_eq!(codes.len(), all.len());
        assert!(codes.iter().all(|&c| c > EXIT_CONFIG));
        let names: BTreeSet<&str> = all.iter().map(error_class).collect();
        assert_eq!(names.len(), all.len());
        assert_eq!(exit_code(&Error::NotCompatible(String::new())), 3);
        assert_eq!(exit_code(&Error::NoContraction(String::new())), 4);
        assert_eq!(exit_code(&Error::RegionTooTight(String::new())), 5);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let bad = r#"{"name": "x", "gird": 32, "task": {"op": "moser", "f": {"kind": "constant", "value": 1}}}"#;
        assert!(matches!(parse_scenario(bad), Err(CliError::Config(_))));
        let good = r#"{"name": "x", "task": {"op": "moser", "f": {"kind": "constant", "value": 1}}}"#;
        let sc = parse_scenario(good).unwrap();
        assert_eq!((sc.grid, sc.seed, sc.task.op()), (64, 1, "moser"));
    }

    #[test]
    fn field_report_of_identical_fields_is_zero() {
        let spec = GridSpec::uniform(2, 32).unwrap();
        let cfg: scenario::RegionsCfg = serde_json::from_str(
            r#"{"k": {"shape": "ball", "center": [0.5, 0.5], "radius": 0.1},
                "u": {"shape": "ball", "center": [0.5, 0.5], "radius": 0.4}, "delta": 0.25}"#,
        )
        .unwrap();
        let rs = cfg.build(&spec).unwrap();
        let x = VectorField::from_fn(&spec, |p| [(6.0 * p[1]).sin(), 0.0, 0.0]);
        let r = field_report(&x, &x, &rs, 0.5).unwrap();
        assert_eq!(r["closeness"]["c1"], 0.0);
        assert_eq!(r["support_radius"], 0.0);
        let other = VectorField::zeros(&GridSpec::uniform(2, 16).unwrap());
        assert!(matches!(field_report(&other, &x, &rs, 0.5), Err(Error::SpecMismatch)));
    }
}
