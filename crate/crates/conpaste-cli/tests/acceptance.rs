//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines land verbatim in the test
//! log. The process fails only when a criterion outside `KNOWN_FAILURES`
//! fails.

use conpaste::diffeo_pasting::{linear_blend, weak_paste, Linearization};
use conpaste::divsolve::{solve_divergence_torus, solve_divergence_zero_boundary};
use conpaste::grid::{divergence, norms, GridMap, GridSpec, ScalarField, VectorField};
use conpaste::mollify::{kernel, mollify_field};
use conpaste::moser::{solve_jacobian_eq_traced, MoserProblem};
use conpaste::pasting::paste_with;
use conpaste::regions::{ball_mask, nested_regions, RegionSet};
use conpaste::synth::{random_scalar, random_spectral_curl, random_staggered_curl};
use conpaste::Error;
use conpaste_cli::{load_scenario, run_scenario, Artifacts, Overrides};
use serde_json::Value;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Criteria expected to fail at desk scale; see the README.
const KNOWN_FAILURES: &[usize] = &[9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn run(name: &str) -> Artifacts {
    let sc = load_scenario(&scenario_dir().join(format!("{name}.json")), Overrides::default()).unwrap();
    run_scenario(&sc).unwrap()
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn spread(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn centered(spec: &GridSpec, rk: f64, ru: f64, delta: f64) -> RegionSet {
    let c = [0.5, 0.5];
    nested_regions(spec, &ball_mask(spec, &c, rk), &ball_mask(spec, &c, ru), delta).unwrap()
}

fn bits(v: &VectorField) -> Vec<u64> {
    (0..v.dim()).flat_map(|a| v.comp(a).iter().map(|x| x.to_bits()).collect::<Vec<_>>()).collect()
}

fn pasting_exactness() -> Outcome {
    let a = run("paste_basic");
    let r = &a.report()["result"];
    let (pv, pw) = (num(&r["plateau_v_max_diff"]), num(&r["plateau_w_max_diff"]));
    let div = num(&r["diagnostics"]["divergence_residual_sup"]);
    let defect = num(&r["compatibility_defect"]).abs();
    outcome(
        a.error.is_none() && pv == 0.0 && pw == 0.0 && div <= 1e-8 && defect <= 1e-11,
        format!("|Z-Y| on V = {pv:e}, |Z-X| on W = {pw:e}, sup|Div Z| = {div:.2e}, defect = {defect:.2e}"),
    )
}

fn trivial_paste() -> Outcome {
    let spec = GridSpec::uniform(2, 64).unwrap();
    let rs = centered(&spec, 0.1, 0.35, 0.2);
    let x = random_staggered_curl(&spec, 11, 4).unwrap().scale(0.3);
    let p = paste_with(&x, &x.clone(), &rs, 0.5, 2).unwrap();
    let same = bits(&p.z) == bits(&x);
    let zero = (0..2).all(|a| p.correction.comp(a).iter().all(|&v| v == 0.0));
    outcome(same && zero, format!("Z == X bitwise: {same}, v == 0: {zero}"))
}

fn support_control() -> Outcome {
    let spec = GridSpec::uniform(2, 128).unwrap();
    let x = random_staggered_curl(&spec, 3, 4).unwrap().scale(0.2);
    let y = random_staggered_curl(&spec, 4, 4).unwrap().scale(0.2);
    let mut pass = true;
    let mut parts = Vec::new();
    for delta in [0.2, 0.1, 0.05] {
        let rs = centered(&spec, 0.1, 0.45, delta);
        let z = paste_with(&x, &y, &rs, 0.5, 2).unwrap().z;
        let support = num(&conpaste_cli::field_report(&z, &x, &rs, 0.5).unwrap()["support_radius"]);
        pass &= support <= delta;
        parts.push(format!("δ={delta}: {support:.4}"));
    }
    outcome(pass, format!("support radius {}", parts.join(", ")))
}

fn linear_response() -> Outcome {
    let spec = GridSpec::uniform(2, 64).unwrap();
    let rs = centered(&spec, 0.1, 0.35, 0.2);
    let x = random_staggered_curl(&spec, 5, 4).unwrap().scale(0.5);
    let w = random_staggered_curl(&spec, 6, 4).unwrap();
    let wc1 = norms(&w, 0.5).unwrap().c1;
    let mut ratios = Vec::new();
    for gap in [1e-1, 1e-2, 1e-3, 1e-4] {
        let y = x.add(&w.scale(gap / wc1)).unwrap();
        let yc1 = norms(&y.sub(&x).unwrap(), 0.5).unwrap().c1;
        let z = paste_with(&x, &y, &rs, 0.5, 2).unwrap().z;
        ratios.push(norms(&z.sub(&x).unwrap(), 0.5).unwrap().c1 / yc1);
    }
    let s = spread(&ratios);
    outcome(s < 2.0, format!("‖Z-X‖_C1/‖Y-X‖_C1 = {ratios:.4?}, spread {s:.6}"))
}

fn mollifier_commutation() -> Outcome {
    let spec = GridSpec::uniform(2, 64).unwrap();
    let k = kernel(0.125, &spec).unwrap();
    let (mut worst_comm, mut worst_div) = (0.0f64, 0.0f64);
    for seed in 0..20u64 {
        let kmax = 2 + (seed % 5) as usize;
        let curl = random_spectral_curl(&spec, seed, kmax).unwrap();
        let grad = conpaste::grid::gradient(&random_scalar(&spec, seed + 1000, kmax).unwrap()).unwrap();
        let f = curl.add(&grad.scale(0.1)).unwrap();
        let c1 = norms(&f, 0.5).unwrap().c1;
        let lhs = divergence(&mollify_field(&f, &k).unwrap()).unwrap();
        let rhs = mollify_field(&divergence(&f).unwrap(), &k).unwrap();
        worst_comm = worst_comm.max(lhs.sub(&rhs).unwrap().max_abs() / c1);
        let out = divergence(&mollify_field(&curl, &k).unwrap()).unwrap().max_abs();
        worst_div = worst_div.max(out);
    }
    outcome(
        worst_comm <= 1e-12 && worst_div <= 1e-12,
        format!("max commutation/C1 = {worst_comm:.2e}, max div out = {worst_div:.2e} over 20 fields"),
    )
}

fn denseness() -> Outcome {
    let a = run("smooth_curl");
    let r = &a.report()["result"];
    let c1 = num(&r["achieved"]["c1"]);
    let div = num(&r["divergence_sup"]);
    outcome(
        a.error.is_none() && c1 <= 0.1 && div <= 1e-10,
        format!("‖Z-X‖_C1 = {c1:.4e}, sup|div Z| = {div:.2e}, ε' = {}", r["eps_used"]),
    )
}

fn divergence_solver() -> Outcome {
    let spec = GridSpec::uniform(2, 64).unwrap();
    let g = ScalarField::from_fn(&spec, |x| 2.0 * PI * (2.0 * PI * x[0]).cos());
    let v = solve_divergence_torus(&g).unwrap();
    let exact = VectorField::from_fn(&spec, |x| [(2.0 * PI * x[0]).sin(), 0.0, 0.0]);
    let err = v.sub(&exact).unwrap().max_abs();
    let a = run("divsolve_annulus");
    let r = &a.report()["result"];
    let (res, outside) = (num(&r["constraint_residual"]), num(&r["max_abs_outside_omega"]));
    let torus_rejects = matches!(run("divsolve_nonzero_mean").error, Some(Error::NotCompatible(_)));
    let rs = centered(&spec, 0.1, 0.35, 0.2);
    let omega = rs.omega_mask();
    let ones = ScalarField::new(spec.clone(), omega.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()).unwrap();
    let ring_rejects = matches!(solve_divergence_zero_boundary(&ones, &rs), Err(Error::NotCompatible(_)));
    outcome(
        err <= 1e-11 && res <= 1e-9 && outside == 0.0 && torus_rejects && ring_rejects,
        format!(
            "analytic error {err:.2e}, annulus residual {res:.2e}, max |v| off Ω {outside:e}, \
             nonzero mean rejected on torus {torus_rejects} and on Ω {ring_rejects}"
        ),
    )
}

fn moser_contraction() -> Outcome {
    let a = run("moser_small");
    let t = &a.report()["result"]["trace"];
    let res: Vec<f64> = t["residuals"].as_array().unwrap().iter().map(num).collect();
    let ratio = t["ratios"].as_array().unwrap().iter().filter_map(Value::as_f64).fold(0.0, f64::max);
    let last = *res.last().unwrap();
    let iters = res.len() - 1;
    let spec = GridSpec::uniform(2, 64).unwrap();
    let one = ScalarField::from_fn(&spec, |_| 1.0);
    let p = MoserProblem::on_torus(one.clone(), one).unwrap();
    let u = solve_jacobian_eq_traced(&p, 1e-8, 50).0.unwrap();
    let identity = u.displacement().max_abs() == 0.0;
    let refuses = matches!(run("moser_large").error, Some(Error::NoContraction(_)));
    outcome(
        a.error.is_none() && last <= 1e-8 && iters <= 25 && ratio <= 0.7 && identity && refuses,
        format!(
            "residual {last:.2e} after {iters} iterations, worst ratio {ratio:.4}, \
             f = 1 gives id {identity}, large f refused {refuses}"
        ),
    )
}

fn two_shear(s: &GridSpec, a: f64, b: f64) -> GridMap {
    GridMap::from_fn(s, |x| {
        let d1 = a * (2.0 * PI * x[1]).sin();
        [d1, b * (2.0 * PI * (x[0] + d1)).sin(), 0.0]
    })
}

/// Max deviations of `g` from the affine map on `B(x0, r/2)` and from `f`
/// outside `B(x0, r)`.
fn plateau_diffs(f: &GridMap, g: &GridMap, x0: &[f64], r: f64) -> (f64, f64) {
    let s = f.spec();
    let lin = Linearization::of(f, x0).unwrap();
    let (mut inner, mut outer) = (0.0f64, 0.0f64);
    for i in 0..s.len() {
        let y = s.coord(i);
        let d = s.torus_dist(&y, x0);
        let gd = [g.displacement().comp(0)[i], g.displacement().comp(1)[i]];
        if d <= r / 2.0 {
            let l = lin.displacement(s, &y);
            inner = inner.max((gd[0] - l[0]).abs().max((gd[1] - l[1]).abs()));
        } else if d >= r {
            let fd = [f.displacement().comp(0)[i], f.displacement().comp(1)[i]];
            outer = outer.max((gd[0] - fd[0]).abs().max((gd[1] - fd[1]).abs()));
        }
    }
    (inner, outer)
}

fn weak_paste_criterion() -> Outcome {
    let s = GridSpec::uniform(2, 128).unwrap();
    let f = two_shear(&s, 0.05, 0.05);
    let r = 0.08;
    let mut parts = Vec::new();
    let x0 = [0.25, 0.25];
    let main = match weak_paste(&f, &x0, r, 0.5) {
        Ok((g, rep)) => {
            let (inner, outer) = plateau_diffs(&f, &g, &x0, r);
            parts.push(format!("(0.25,0.25): det residual {:.2e}, plateaus {inner:e}/{outer:e}", rep.det_residual));
            rep.det_residual <= 1e-7 && rep.min_det > 0.0 && inner == 0.0 && outer == 0.0
        }
        Err(e) => {
            parts.push(format!("(0.25,0.25): {e}"));
            false
        }
    };
    let mut blend = Vec::new();
    for rr in [0.16, 0.08, 0.04] {
        let h = linear_blend(&f, &x0, rr).unwrap();
        blend.push(norms(&h.displacement().sub(f.displacement()).unwrap(), 0.5).unwrap().c1 / rr);
    }
    let sweep_ok = spread(&blend) < 2.0;
    parts.push(format!("‖h-f‖_C1/r over r = 0.16, 0.08, 0.04: {blend:.4?} (spread {:.3})", spread(&blend)));
    let x1 = [0.5, 0.5];
    match weak_paste(&f, &x1, r, 0.5) {
        Ok((g, rep)) => {
            let (inner, outer) = plateau_diffs(&f, &g, &x1, r);
            parts.push(format!(
                "inflection (0.5,0.5): det residual {:.2e}, plateaus {inner:e}/{outer:e}",
                rep.det_residual
            ));
        }
        Err(e) => parts.push(format!("inflection (0.5,0.5): {e}")),
    }
    outcome(main && sweep_ok, parts.join("; "))
}

fn symplectic_blend() -> Outcome {
    let a = run("symplectic_standard");
    let b = &a.report()["result"]["blend"];
    let det = num(&b["det_deviation"]);
    let (inner, outer) = (num(&b["inner_max_diff"]), num(&b["outer_max_diff"]));
    outcome(
        a.error.is_none() && det <= 1e-8 && inner == 0.0 && outer == 0.0,
        format!(
            "|det-1| = {det:.2e}, inner diff {inner:e} on {} nodes, outer diff {outer:e} on {} nodes",
            b["inner_nodes"], b["outer_nodes"]
        ),
    )
}

fn estimate_sweep() -> Outcome {
    let a = run("sweep_octaves");
    let r = &a.report()["result"];
    let hs = num(&r["ratio_holder_spread"]);
    let inc = r["ratio_c0_increasing"].as_bool().unwrap_or(false);
    let c0: Vec<f64> = r["rows"].as_array().unwrap().iter().map(|row| num(&row["ratio_c0"])).collect();
    outcome(
        a.error.is_none() && hs < 10.0 && inc,
        format!("holder ratio spread {hs:.3}, C0 ratios {c0:.3?}"),
    )
}

fn determinism() -> Outcome {
    let mut names: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    names.sort();
    let mut bad = Vec::new();
    let mut ran = 0;
    for p in &names {
        let Ok(sc) = load_scenario(p, Overrides::default()) else { continue };
        ran += 1;
        if run_scenario(&sc).unwrap().files != run_scenario(&sc).unwrap().files {
            bad.push(sc.name.clone());
        }
    }
    outcome(bad.is_empty(), format!("{ran} scenarios rerun, differing: {bad:?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("pasting exactness", pasting_exactness),
        ("trivial-paste identity", trivial_paste),
        ("support control", support_control),
        ("linear response", linear_response),
        ("mollifier commutation", mollifier_commutation),
        ("denseness pipeline", denseness),
        ("divergence solver", divergence_solver),
        ("moser contraction", moser_contraction),
        ("weak paste", weak_paste_criterion),
        ("symplectic blend", symplectic_blend),
        ("estimate sweep", estimate_sweep),
        ("determinism", determinism),
    ];
    let mut unexpected = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let n = k + 1;
        let t = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {verdict}  {name} ({:.1}s): {}", t.elapsed().as_secs_f64(), o.detail);
        if !o.pass && !KNOWN_FAILURES.contains(&n) {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
