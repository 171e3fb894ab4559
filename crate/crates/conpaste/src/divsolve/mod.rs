//! Solvers for `div v = g`: on the whole torus, and on a region `Ω` with
//! `v = 0` outside its interior.

mod staggered;
mod sweep;

pub use staggered::{staggered_divergence, StaggeredSystem};
pub use sweep::{constant_sweep, sweep_csv, SweepRow, SWEEP_CSV_HEADER};

use crate::error::{Error, Result};
use crate::grid::{gradient, integrate, inverse_laplacian, ScalarField, VectorField};
use crate::regions::RegionSet;

/// Relative tolerance of the compatibility checks.
pub const COMPAT_TOL: f64 = 1e-10;
/// Relative tolerance of the constrained solve.
pub const SOLVE_TOL: f64 = 1e-10;

/// `v = ∇a` with `Δa = g` spectrally. Requires `∫ g = 0`.
pub fn solve_divergence_torus(g: &ScalarField) -> Result<VectorField> {
    g.check_finite()?;
    let gmax = g.max_abs();
    let mean = integrate(g, None)?;
    if mean.abs() > COMPAT_TOL * gmax {
        return Err(Error::NotCompatible(format!("∫g = {mean:e} on the torus")));
    }
    if gmax == 0.0 {
        return Ok(VectorField::zeros(g.spec()));
    }
    gradient(&inverse_laplacian(g)?)
}

/// Subtracts the Ω-average of `g` on the nodes of `omega`.
pub fn de_mean(g: &ScalarField, omega: &[bool]) -> Result<ScalarField> {
    let n = omega.iter().filter(|&&b| b).count();
    if n == 0 {
        return Err(Error::InvalidRegion("empty Ω".into()));
    }
    let mean = g.values().iter().zip(omega).filter(|(_, &b)| b).map(|(v, _)| v).sum::<f64>() / n as f64;
    let mut out = g.clone();
    for (v, &b) in out.values_mut().iter_mut().zip(omega) {
        if b {
            *v -= mean;
        }
    }
    Ok(out)
}

/// Minimum-H¹ solution of `Div v = g` on `Ω` with `v = 0` on every face
/// not interior to `Ω`, using the staggered divergence of
/// [`staggered_divergence`].
pub fn solve_divergence_zero_boundary(g: &ScalarField, rs: &RegionSet) -> Result<VectorField> {
    solve_divergence_zero_boundary_tol(g, rs, SOLVE_TOL)
}

/// As [`solve_divergence_zero_boundary`] with a caller-chosen relative
/// residual target. Targets below round-off end in `SolverFailure`.
pub fn solve_divergence_zero_boundary_tol(g: &ScalarField, rs: &RegionSet, tol_rel: f64) -> Result<VectorField> {
    g.spec().check_same(rs.spec())?;
    g.check_finite()?;
    if !(tol_rel > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol_rel} must be positive")));
    }
    let sys = StaggeredSystem::standard(g.spec(), &rs.omega_mask());
    solve_on_system_tol(g, &sys, tol_rel)
}

pub(crate) fn solve_on_system(g: &ScalarField, sys: &StaggeredSystem) -> Result<VectorField> {
    solve_on_system_tol(g, sys, SOLVE_TOL)
}

fn solve_on_system_tol(g: &ScalarField, sys: &StaggeredSystem, tol_rel: f64) -> Result<VectorField> {
    let spec = g.spec();
    let gmax = g.max_abs();
    if gmax == 0.0 {
        return Ok(VectorField::zeros(spec));
    }
    let mut inside = vec![false; spec.len()];
    for &i in sys.nodes() {
        inside[i] = true;
    }
    if let Some(i) = (0..spec.len()).find(|&i| !inside[i] && g.values()[i].abs() > 1e-12 * gmax) {
        return Err(Error::NotCompatible(format!("g is nonzero outside Ω at node {i}")));
    }
    let gn = sys.gather_nodes(g.values());
    for (c, s) in sys.component_integrals(&gn).iter().enumerate() {
        if s.abs() > COMPAT_TOL * gmax {
            return Err(Error::NotCompatible(format!("∫g = {s:e} on component {c} of Ω")));
        }
    }
    let v = sys.solve_min_h1(&gn, tol_rel)?;
    Ok(sys.scatter_faces(&v))
}
