//! Empirical probe of the estimate constant of the zero-boundary solver.
//!
//! Sample `s` solves `div v = g_s` with
//! `g_s = sin 2(θ - φ) · (χ(ρ/R) - χ(2^{s+1} ρ/R))` in polar coordinates
//! `(ρ, θ)` about a seeded centre deep inside Ω, `χ` a smooth plateau profile
//! (1 below 1/2, 0 above 1). Every sample has sup norm 1 and adds one
//! dyadic octave of finer structure. `∇v` at the centre behaves like a
//! double Riesz transform of a degree-0 function and grows roughly linearly
//! with the octave count, while the Hölder seminorm of `g` grows too, so
//! the C¹/Hölder ratio stays bounded.

use super::{solve_on_system, StaggeredSystem};
use crate::error::Result;
use crate::grid::{norms, ScalarField};
use crate::regions::{bump_value, distance_to, RegionSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const SWEEP_CSV_HEADER: &str = "sample,freq_max,c0_g,holder_g,c1_v,ratio_c0,ratio_holder,status";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub sample: usize,
    /// Reciprocal of the innermost support radius of `g`.
    pub freq_max: f64,
    pub c0_g: f64,
    pub holder_g: f64,
    pub c1_v: f64,
    pub ratio_c0: f64,
    pub ratio_holder: f64,
    pub status: String,
}

/// Runs `n_samples` solves of increasing frequency content on `rs`'s Ω.
pub fn constant_sweep(rs: &RegionSet, n_samples: usize, seed: u64, alpha: f64) -> Result<Vec<SweepRow>> {
    if n_samples == 0 {
        return Err(crate::Error::InvalidParameter("n_samples must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(crate::Error::InvalidParameter(format!("alpha = {alpha} outside (0,1)")));
    }
    let spec = rs.spec();
    let omega = rs.omega_mask();
    let outside: Vec<bool> = omega.iter().map(|&b| !b).collect();
    let depth = distance_to(spec, &outside);
    let deepest = depth.iter().cloned().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<usize> = (0..spec.len()).filter(|&i| depth[i] >= 0.9 * deepest).collect();
    let centre_node = candidates[rng.gen_range(0..candidates.len())];
    let phi = rng.gen_range(0.0..std::f64::consts::PI);
    let centre = spec.coord(centre_node);
    let radius = 0.75 * depth[centre_node];
    let sys = StaggeredSystem::standard(spec, &omega);

    let mut rows = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let inner = radius / f64::powi(2.0, s as i32 + 2);
        let scale = f64::powi(2.0, s as i32 + 1);
        let mut g = ScalarField::from_fn(spec, |x| {
            let d = spec.torus_delta(&centre, x);
            let rho = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if rho == 0.0 {
                return 0.0;
            }
            let theta = d[1].atan2(d[0]);
            let profile = bump_value(rho / radius, 1.0) - bump_value(scale * rho / radius, 1.0);
            (2.0 * (theta - phi)).sin() * profile
        });
        let mut gn = sys.gather_nodes(g.values());
        sys.project(&mut gn);
        let vals = g.values_mut();
        vals.iter_mut().for_each(|v| *v = 0.0);
        for (k, &i) in sys.nodes().iter().enumerate() {
            vals[i] = gn[k];
        }
        let row = match solve_on_system(&g, &sys).and_then(|v| {
            let ng = norms(&g, alpha)?;
            let nv = norms(&v, alpha)?;
            Ok((ng, nv))
        }) {
            Ok((ng, nv)) => SweepRow {
                sample: s,
                freq_max: 1.0 / inner,
                c0_g: ng.c0,
                holder_g: ng.holder,
                c1_v: nv.c1,
                ratio_c0: nv.c1 / ng.c0,
                ratio_holder: nv.c1 / ng.holder,
                status: "ok".into(),
            },
            Err(e) => SweepRow {
                sample: s,
                freq_max: 1.0 / inner,
                c0_g: f64::NAN,
                holder_g: f64::NAN,
                c1_v: f64::NAN,
                ratio_c0: f64::NAN,
                ratio_holder: f64::NAN,
                status: format!("failed: {e}"),
            },
        };
        rows.push(row);
    }
    Ok(rows)
}

/// CSV rendering with a fixed header and shortest round-trip floats.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
            r.sample,
            r.freq_max,
            r.c0_g,
            r.holder_g,
            r.c1_v,
            r.ratio_c0,
            r.ratio_holder,
            r.status.replace(',', ";")
        ));
    }
    out
}
