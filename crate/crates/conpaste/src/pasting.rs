//! Pasting of divergence-free vector fields: blend with a partition of unity,
//! measure the divergence defect, and remove it on the annulus Ω.

use crate::divsolve::{solve_divergence_torus, solve_on_system, staggered_divergence, StaggeredSystem};
use crate::error::{Error, Result};
use crate::grid::{divergence, integrate, norms, NormReport, VectorField};
use crate::mollify::{kernel, mollify_field};
use crate::regions::{partition_of_unity, CutoffInfo, RegionSet};
use serde::Serialize;

/// Conservativity threshold on inputs (sup of the divergence).
pub const INPUT_DIV_TOL: f64 = 1e-9;
/// Hölder exponent used in closeness reports unless specified.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PasteReport {
    /// `∫_Ω Div T` before correction (signed).
    pub defect_integral: f64,
    /// `sup |Div Z|` over the torus after correction.
    pub divergence_residual_sup: f64,
    /// `sup |div Z|` with the spectral divergence; diagnostic only.
    pub spectral_divergence_sup: f64,
    /// Norms of `Z - X`.
    pub closeness: NormReport,
    /// Norms of `Y - X`, for the closeness ratio.
    pub input_gap: NormReport,
    /// Largest distance to `K` of a node where `Z ≠ X`.
    pub support_radius: f64,
    pub margin: f64,
    /// `sup |v|` of the correction.
    pub correction_sup: f64,
    pub cutoff: CutoffInfo,
}

#[derive(Clone, Debug)]
pub struct Paste {
    pub z: VectorField,
    /// Correction `v` with `Z = T - v`.
    pub correction: VectorField,
    pub report: PasteReport,
}

/// `∫_Ω Div T` with the staggered divergence.
pub fn compatibility_defect(t: &VectorField, rs: &RegionSet) -> Result<f64> {
    t.spec().check_same(rs.spec())?;
    integrate(&staggered_divergence(t), Some(&rs.omega_mask()))
}

fn check_conservative(name: &str, f: &VectorField) -> Result<()> {
    let d = staggered_divergence(f).max_abs();
    if d > INPUT_DIV_TOL {
        return Err(Error::NotConservativeInput(format!("sup |Div {name}| = {d:e}")));
    }
    Ok(())
}

/// `Z = ξ1 Y + ξ2 X - v` with `Z = Y` on `V`, `Z = X` on `W`, `Div Z = 0`.
pub fn paste_vector_fields(x: &VectorField, y: &VectorField, rs: &RegionSet) -> Result<(VectorField, PasteReport)> {
    let p = paste_with(x, y, rs, DEFAULT_ALPHA, 2)?;
    Ok((p.z, p.report))
}

/// As [`paste_vector_fields`], with the closeness exponent and the cutoff
/// smoothness chosen by the caller; also returns the correction.
pub fn paste_with(x: &VectorField, y: &VectorField, rs: &RegionSet, alpha: f64, smoothness: usize) -> Result<Paste> {
    x.spec().check_same(y.spec())?;
    x.spec().check_same(rs.spec())?;
    x.check_finite()?;
    y.check_finite()?;
    check_conservative("X", x)?;
    check_conservative("Y", y)?;
    let spec = x.spec();
    let cut = partition_of_unity(rs, smoothness)?;
    let xi = cut.xi1.values();
    let dim = spec.dim();

    let mut t = x.clone();
    for a in 0..dim {
        let (xa, ya) = (x.comp(a), y.comp(a));
        let ta = t.comp_mut(a);
        for i in 0..spec.len() {
            ta[i] = if xi[i] == 1.0 { ya[i] } else { xa[i] + xi[i] * (ya[i] - xa[i]) };
        }
    }
    let defect_integral = compatibility_defect(&t, rs)?;

    // The defect is computed from T - X so that Y = X gives g = 0 bitwise.
    let omega = rs.omega_mask();
    let diff = t.sub(x)?;
    let mut g = staggered_divergence(&diff);
    for (v, &b) in g.values_mut().iter_mut().zip(&omega) {
        if !b {
            *v = 0.0;
        }
    }
    let sys = StaggeredSystem::standard(spec, &omega);
    let v = solve_on_system(&g, &sys)?;
    let z = t.sub(&v)?;

    let zx = z.sub(x)?;
    let mut support_radius: f64 = 0.0;
    for i in 0..spec.len() {
        if (0..dim).any(|a| zx.comp(a)[i] != 0.0) {
            support_radius = support_radius.max(rs.dist_k()[i]);
        }
    }
    let report = PasteReport {
        defect_integral,
        divergence_residual_sup: staggered_divergence(&z).max_abs(),
        spectral_divergence_sup: divergence(&z)?.max_abs(),
        closeness: norms(&zx, alpha)?,
        input_gap: norms(&y.sub(x)?, alpha)?,
        support_radius,
        margin: rs.margin(),
        correction_sup: v.max_norm(),
        cutoff: cut.info,
    };
    Ok(Paste { z, correction: v, report })
}

#[derive(Clone, Debug)]
pub struct Smoothed {
    pub z: VectorField,
    pub achieved: NormReport,
    /// Mollifier radius that met the target.
    pub eps_used: f64,
}

/// Mollify with the largest dyadic `ε' ≥ 4h` whose corrected result is
/// within `eps` of `X` in C¹, then remove the residual divergence on the
/// whole torus.
pub fn smooth_conservative(x: &VectorField, eps: f64) -> Result<Smoothed> {
    x.check_finite()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("target ε = {eps} must be positive")));
    }
    let d = divergence(x)?.max_abs();
    if d > INPUT_DIV_TOL {
        return Err(Error::NotConservativeInput(format!("sup |div X| = {d:e}")));
    }
    let spec = x.spec();
    if x.max_abs() == 0.0 {
        let zero = VectorField::zeros(spec);
        let achieved = norms(&zero, DEFAULT_ALPHA)?;
        return Ok(Smoothed { z: zero, achieved, eps_used: 0.0 });
    }
    let floor = 4.0 * spec.h_min();
    let mut e = 0.125;
    while e >= floor {
        let k = kernel(e, spec)?;
        let xe = mollify_field(x, &k)?;
        // The torus has unit volume, so the integral is the mean.
        let g = divergence(&xe)?;
        let mean = integrate(&g, None)?;
        let v = solve_divergence_torus(&g.map(|v| v - mean))?;
        let z = xe.sub(&v)?;
        let achieved = norms(&z.sub(x)?, DEFAULT_ALPHA)?;
        if achieved.c1 <= eps {
            return Ok(Smoothed { z, achieved, eps_used: e });
        }
        e *= 0.5;
    }
    Err(Error::TargetUnreachable(format!("no mollifier radius ≥ 4h reaches C¹ distance {eps:e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::regions::{ball_mask, nested_regions};
    use std::f64::consts::PI;

    fn rs(n: usize) -> RegionSet {
        let s = GridSpec::uniform(2, n).unwrap();
        let c = [0.5, 0.5];
        nested_regions(&s, &ball_mask(&s, &c, 0.1), &ball_mask(&s, &c, 0.35), 0.2).unwrap()
    }

    fn base(s: &GridSpec) -> VectorField {
        VectorField::from_fn(s, |x| [(2.0 * PI * x[1]).sin(), (2.0 * PI * x[0]).sin(), 0.0])
    }

    #[test]
    fn identical_inputs_paste_to_input() {
        let r = rs(32);
        let x = base(r.spec());
        let (z, rep) = paste_vector_fields(&x, &x, &r).unwrap();
        assert_eq!(z, x);
        assert_eq!(rep.closeness.c1, 0.0);
        assert_eq!(rep.correction_sup, 0.0);
    }

    #[test]
    fn non_conservative_input_rejected() {
        let r = rs(32);
        let x = base(r.spec());
        let y = VectorField::from_fn(r.spec(), |p| [(2.0 * PI * p[0]).sin(), 0.0, 0.0]);
        assert!(matches!(paste_vector_fields(&x, &y, &r), Err(Error::NotConservativeInput(_))));
    }

    #[test]
    fn smooth_zero_and_unreachable() {
        let s = GridSpec::uniform(2, 32).unwrap();
        let z = smooth_conservative(&VectorField::zeros(&s), 0.1).unwrap();
        assert_eq!(z.z.max_abs(), 0.0);
        let x = base(&s);
        assert!(matches!(smooth_conservative(&x, 1e-16), Err(Error::TargetUnreachable(_))));
    }
}
