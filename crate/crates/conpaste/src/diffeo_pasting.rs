//! Local linearization of volume-preserving maps.
//!
//! [`linear_blend`] replaces a torus map `f` near `x0` by its affine
//! approximation through a radial bump; [`weak_paste`] then repairs the
//! Jacobian on the annulus `r/2 < |y - x0| < r` so the result preserves
//! volume again while staying affine on the inner ball and equal to `f`
//! outside the outer one. Maps here are two-dimensional.

use crate::error::{Error, Result};
use crate::grid::{
    integrate, interp_cubic, invert_map_point, jacobian, norms, partial, trig_eval, GridMap, GridSpec, ScalarField,
    VectorField,
};
use crate::regions::{bump_value, check_bump_radius};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Blend radii must stay below this.
pub const MAX_RADIUS: f64 = 0.2;
/// Volume-preservation threshold on input maps (spectral Jacobian).
pub const INPUT_DET_TOL: f64 = 1e-9;
/// Target for the annulus residual; iteration stops once it is reached.
pub const ANNULUS_TARGET: f64 = 1e-8;
/// A correction that ends above this residual is rejected.
pub const ANNULUS_ACCEPT: f64 = 1e-6;
pub const MAX_LM_ITERATIONS: usize = 40;
/// Largest annulus handled by the dense solver.
const MAX_UNKNOWN_NODES: usize = 4000;

/// Fourth-order centred first-difference weights at offsets −2..=2.
const C4: [(isize, f64); 4] = [(-2, 1.0 / 12.0), (-1, -8.0 / 12.0), (1, 8.0 / 12.0), (2, -1.0 / 12.0)];

/// Fourth-order centred derivative of `values` along `axis` at node `i`.
fn c4_at(spec: &GridSpec, values: &[f64], axis: usize, i: usize) -> f64 {
    C4.iter().map(|&(o, c)| c * values[spec.shift(i, axis, o)]).sum::<f64>() / spec.h(axis)
}

/// `det(I + D d)` with the fourth-order centred difference `D`.
pub fn det_c4(m: &GridMap) -> Result<ScalarField> {
    let spec = m.spec();
    check_2d(spec)?;
    let d = m.displacement();
    let vals = (0..spec.len()).map(|i| det_c4_at(spec, d.comp(0), d.comp(1), i)).collect();
    ScalarField::new(spec.clone(), vals)
}

fn det_c4_at(spec: &GridSpec, d1: &[f64], d2: &[f64], i: usize) -> f64 {
    let g = c4_grad(spec, d1, d2, i);
    g[0][0] * g[1][1] - g[0][1] * g[1][0]
}

/// Jacobian matrix `I + D d` at node `i`.
fn c4_grad(spec: &GridSpec, d1: &[f64], d2: &[f64], i: usize) -> [[f64; 2]; 2] {
    [
        [1.0 + c4_at(spec, d1, 0, i), c4_at(spec, d1, 1, i)],
        [c4_at(spec, d2, 0, i), 1.0 + c4_at(spec, d2, 1, i)],
    ]
}

fn check_2d(spec: &GridSpec) -> Result<()> {
    if spec.dim() != 2 {
        return Err(Error::InvalidParameter("map pasting is two-dimensional".into()));
    }
    if spec.sizes().iter().any(|&n| n < 8) {
        return Err(Error::GridTooCoarse("map pasting needs at least 8 nodes per axis".into()));
    }
    Ok(())
}

/// Affine approximation `y ↦ f(x0) + Df(x0)(y - x0)` in the chart centred at
/// `x0`, with `Df(x0)` from the trigonometric interpolant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Linearization {
    pub x0: [f64; 2],
    /// Displacement of `f` at `x0`.
    pub shift: [f64; 2],
    /// `Df(x0)`.
    pub matrix: [[f64; 2]; 2],
}

impl Linearization {
    pub fn of(f: &GridMap, x0: &[f64]) -> Result<Self> {
        let spec = f.spec();
        check_2d(spec)?;
        let mut shift = [0.0; 2];
        let mut matrix = [[0.0; 2]; 2];
        for a in 0..2 {
            let (v, g) = trig_eval(spec, f.displacement().comp(a), x0);
            shift[a] = v;
            matrix[a] = [g[0], g[1]];
            matrix[a][a] += 1.0;
        }
        Ok(Linearization { x0: [x0[0], x0[1]], shift, matrix })
    }

    /// Displacement of the affine map at `y`.
    pub fn displacement(&self, spec: &GridSpec, y: &[f64]) -> [f64; 2] {
        let d = spec.torus_delta(&self.x0, y);
        let a = &self.matrix;
        [
            self.shift[0] + (a[0][0] - 1.0) * d[0] + a[0][1] * d[1],
            self.shift[1] + a[1][0] * d[0] + (a[1][1] - 1.0) * d[1],
        ]
    }

    pub fn det(&self) -> f64 {
        self.matrix[0][0] * self.matrix[1][1] - self.matrix[0][1] * self.matrix[1][0]
    }
}

/// `h = ρ·(affine) + (1-ρ)·f` with the radial bump `ρ` of radius `r`.
/// Nodes with `ρ = 1` carry the affine map and nodes with `ρ = 0` carry `f`,
/// both bit for bit.
pub fn linear_blend(f: &GridMap, x0: &[f64], r: f64) -> Result<GridMap> {
    let spec = f.spec();
    check_2d(spec)?;
    check_bump_radius(spec, r, MAX_RADIUS)?;
    let lin = Linearization::of(f, x0)?;
    let fd = f.displacement();
    let mut comps = vec![fd.comp(0).to_vec(), fd.comp(1).to_vec()];
    for i in 0..spec.len() {
        let y = spec.coord(i);
        let rho = bump_value(spec.torus_dist(&y, x0), r);
        if rho == 0.0 {
            continue;
        }
        let aff = lin.displacement(spec, &y);
        for a in 0..2 {
            comps[a][i] = if rho == 1.0 { aff[a] } else { rho * aff[a] + (1.0 - rho) * fd.comp(a)[i] };
        }
    }
    let h = GridMap::new(VectorField::new(spec.clone(), comps)?)?;
    let det = det_c4(&h)?;
    if let Some(i) = (0..spec.len()).find(|&i| !(det.values()[i] > 0.0)) {
        return Err(Error::NotDiffeo(format!("blend has det = {:e} at node {i}", det.values()[i])));
    }
    Ok(h)
}

/// Measurements of `θ̂ = 1/det Dh(h⁻¹(y))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaReport {
    pub alpha: f64,
    pub c0: f64,
    /// Hölder-α seminorm of `θ̂ - 1`.
    pub holder_seminorm: f64,
    /// `c0 + holder_seminorm`.
    pub holder_norm: f64,
    /// `holder_norm / r^{1-α}`.
    pub scaled: f64,
    pub sampled_nodes: usize,
}

/// Samples `θ̂ - 1` on nodes whose preimage under `h` lies near the blend
/// ball, by Newton inversion of `h` and cubic interpolation of `det_c4 h`.
/// Elsewhere `h` equals `f` or its linearization and `θ̂ - 1` is set to zero.
pub fn theta_field(h: &GridMap, x0: &[f64], r: f64, lin: &Linearization) -> Result<(ScalarField, usize)> {
    let spec = h.spec();
    let det = det_c4(h)?;
    let a = nalgebra::Matrix2::new(lin.matrix[0][0], lin.matrix[0][1], lin.matrix[1][0], lin.matrix[1][1]);
    let ainv = a.try_inverse().ok_or_else(|| Error::NotDiffeo("singular linearization".into()))?;
    let fx0 = [x0[0] + lin.shift[0], x0[1] + lin.shift[1]];
    let reach = r + 3.0 * spec.h_min();
    let mut out = vec![0.0; spec.len()];
    let mut count = 0;
    for i in 0..spec.len() {
        let y = spec.coord(i);
        let dy = spec.torus_delta(&fx0, &y);
        let dx = ainv * nalgebra::Vector2::new(dy[0], dy[1]);
        if dx.norm() > reach {
            continue;
        }
        let guess = [x0[0] + dx[0], x0[1] + dx[1]];
        let x = invert_map_point(h, &y, &guess)?;
        let j = interp_cubic(spec, det.values(), &x[..2]);
        if !(j > 0.0) {
            return Err(Error::NotDiffeo(format!("det Dh = {j:e} at a preimage")));
        }
        out[i] = 1.0 / j - 1.0;
        count += 1;
    }
    Ok((ScalarField::new(spec.clone(), out)?, count))
}

pub fn theta_report(h: &GridMap, x0: &[f64], r: f64, alpha: f64) -> Result<ThetaReport> {
    // The linearization is read off h itself: it is affine near x0.
    let lin = Linearization::of(h, x0)?;
    theta_report_with(h, x0, r, alpha, &lin)
}

fn theta_report_with(h: &GridMap, x0: &[f64], r: f64, alpha: f64, lin: &Linearization) -> Result<ThetaReport> {
    let (theta, sampled_nodes) = theta_field(h, x0, r, lin)?;
    let n = norms(&theta, alpha)?;
    let holder_norm = n.c0 + n.holder;
    Ok(ThetaReport {
        alpha,
        c0: n.c0,
        holder_seminorm: n.holder,
        holder_norm,
        scaled: holder_norm / r.powf(1.0 - alpha),
        sampled_nodes,
    })
}

/// Sup of the second spectral derivatives of the displacement of `f`.
pub fn c2_size(f: &GridMap) -> f64 {
    let spec = f.spec();
    let d = spec.dim();
    let mut m: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            let db = partial(spec, f.displacement().comp(a), b);
            for c in b..d {
                m = m.max(partial(spec, &db, c).iter().fold(0.0, |s, v| s.max(v.abs())));
            }
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakPasteReport {
    pub x0: [f64; 2],
    pub r: f64,
    pub alpha: f64,
    pub linearization: Linearization,
    /// `sup |det_c4 Dg - 1|` over all nodes.
    pub det_residual: f64,
    /// The same restricted to the constraint set around the annulus.
    pub det_residual_annulus: f64,
    /// `sup |det Dg - 1|` with the spectral Jacobian; diagnostic only.
    pub det_residual_spectral: f64,
    pub min_det: f64,
    /// `‖h - f‖_{C¹}` of the uncorrected blend.
    pub blend_c1: f64,
    /// `‖g - f‖_{C¹}`.
    pub paste_c1: f64,
    /// Sup of the second derivatives of `f`.
    pub f_c2: f64,
    /// `blend_c1 / (f_c2 · r)`.
    pub blend_constant: f64,
    pub theta: ThetaReport,
    /// `theta.holder_norm / (f_c2 · r^{1-α})`.
    pub theta_constant: f64,
    pub iterations: usize,
    pub unknown_nodes: usize,
    pub constraint_nodes: usize,
    /// `∫ (det_c4 Dg - 1)` over the torus.
    pub volume_defect: f64,
}

/// Pastes the linearization of `f` at `x0` into `f` on `B(x0, r)` and
/// corrects the annulus so that `det_c4 Dg = 1`.
pub fn weak_paste(f: &GridMap, x0: &[f64], r: f64, alpha: f64) -> Result<(GridMap, WeakPasteReport)> {
    let spec = f.spec().clone();
    check_2d(&spec)?;
    check_bump_radius(&spec, r, MAX_RADIUS)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside (0,1)")));
    }
    let jf = jacobian(f)?;
    let dev = jf.det().values().iter().fold(0.0, |m: f64, d| m.max((d - 1.0).abs()));
    if dev > INPUT_DET_TOL {
        return Err(Error::InvalidField(format!("f is not volume-preserving: sup |det Df - 1| = {dev:e}")));
    }
    let lin = Linearization::of(f, x0)?;
    let h = linear_blend(f, x0, r)?;

    let n = spec.len();
    let dist: Vec<f64> = (0..n).map(|i| spec.torus_dist(&spec.coord(i), x0)).collect();
    let unknown: Vec<usize> = (0..n).filter(|&i| dist[i] > 0.5 * r && dist[i] < r).collect();
    if unknown.is_empty() {
        return Err(Error::GridTooCoarse("annulus contains no nodes".into()));
    }
    if unknown.len() > MAX_UNKNOWN_NODES {
        return Err(Error::InvalidParameter(format!(
            "annulus has {} nodes; the dense solver handles at most {MAX_UNKNOWN_NODES}",
            unknown.len()
        )));
    }
    let mut uid = vec![usize::MAX; n];
    for (k, &i) in unknown.iter().enumerate() {
        uid[i] = k;
    }
    let mut in_c = vec![false; n];
    for &p in &unknown {
        in_c[p] = true;
        for &(o, _) in &C4 {
            for axis in 0..2 {
                in_c[spec.shift(p, axis, o)] = true;
            }
        }
    }
    let cons: Vec<usize> = (0..n).filter(|&i| in_c[i]).collect();
    let mut cid = vec![usize::MAX; n];
    for (k, &i) in cons.iter().enumerate() {
        cid[i] = k;
    }

    let precond = dirichlet_inverse(&spec, &unknown, &uid)?;
    let nu = unknown.len();
    let mut d1 = h.displacement().comp(0).to_vec();
    let mut d2 = h.displacement().comp(1).to_vec();
    let residual = |d1: &[f64], d2: &[f64]| -> DVector<f64> {
        DVector::from_iterator(cons.len(), cons.iter().map(|&q| 1.0 - det_c4_at(&spec, d1, d2, q)))
    };
    let mut res = residual(&d1, &d2);
    let mut mu = 1e-6;
    let mut iterations = 0;
    while iterations < MAX_LM_ITERATIONS && res.amax() > ANNULUS_TARGET {
        iterations += 1;
        let m = linearized_det(&spec, &d1, &d2, &unknown, &cid, cons.len());
        // M P with P = blockdiag(L⁻¹, L⁻¹).
        let mut mp = DMatrix::<f64>::zeros(cons.len(), 2 * nu);
        mp.columns_mut(0, nu).copy_from(&(m.columns(0, nu) * &precond));
        mp.columns_mut(nu, nu).copy_from(&(m.columns(nu, nu) * &precond));
        let k = &mp * m.transpose();
        let scale = k.trace() / cons.len() as f64;
        let cur = res.norm();
        let mut accepted = false;
        while mu <= 1.0 {
            let mut reg = k.clone();
            for i in 0..cons.len() {
                reg[(i, i)] += mu * scale;
            }
            let Some(ch) = reg.cholesky() else {
                mu *= 4.0;
                continue;
            };
            let lam = ch.solve(&res);
            let dw = mp.transpose() * lam;
            let (mut t1, mut t2) = (d1.clone(), d2.clone());
            for (k, &p) in unknown.iter().enumerate() {
                t1[p] += dw[k];
                t2[p] += dw[nu + k];
            }
            let rn = residual(&t1, &t2);
            if rn.norm() < cur {
                d1 = t1;
                d2 = t2;
                res = rn;
                mu = (mu / 3.0).max(1e-16);
                accepted = true;
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    let det_residual_annulus = res.amax();
    if det_residual_annulus > ANNULUS_ACCEPT {
        return Err(Error::NoContraction(format!(
            "annulus correction stalled at {det_residual_annulus:e}; r may be too large"
        )));
    }
    let g = GridMap::new(VectorField::new(spec.clone(), vec![d1, d2])?)?;
    let det = det_c4(&g)?;
    let min_det = det.values().iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_det > 0.0) {
        return Err(Error::NotDiffeo(format!("corrected map has det = {min_det:e}")));
    }
    let det_residual = det.values().iter().fold(0.0, |m: f64, d| m.max((d - 1.0).abs()));
    let det_residual_spectral =
        jacobian(&g)?.det().values().iter().fold(0.0, |m: f64, d| m.max((d - 1.0).abs()));
    let volume_defect = integrate(&det.map(|d| d - 1.0), None)?;
    let blend_c1 = norms(&h.displacement().sub(f.displacement())?, alpha)?.c1;
    let paste_c1 = norms(&g.displacement().sub(f.displacement())?, alpha)?.c1;
    let f_c2 = c2_size(f);
    let theta = theta_report_with(&h, x0, r, alpha, &lin)?;
    let theta_constant = theta.holder_norm / (f_c2 * r.powf(1.0 - alpha));
    let report = WeakPasteReport {
        x0: [x0[0], x0[1]],
        r,
        alpha,
        linearization: lin,
        det_residual,
        det_residual_annulus,
        det_residual_spectral,
        min_det,
        blend_c1,
        paste_c1,
        f_c2,
        blend_constant: blend_c1 / (f_c2 * r),
        theta,
        theta_constant,
        iterations,
        unknown_nodes: nu,
        constraint_nodes: cons.len(),
        volume_defect,
    };
    Ok((g, report))
}

/// Inverse of the Dirichlet five-point Laplacian on the unknown nodes.
fn dirichlet_inverse(spec: &GridSpec, unknown: &[usize], uid: &[usize]) -> Result<DMatrix<f64>> {
    let nu = unknown.len();
    let mut lap = DMatrix::<f64>::zeros(nu, nu);
    for (k, &p) in unknown.iter().enumerate() {
        for axis in 0..2 {
            let ih2 = 1.0 / (spec.h(axis) * spec.h(axis));
            lap[(k, k)] += 2.0 * ih2;
            for o in [-1, 1] {
                let q = uid[spec.shift(p, axis, o)];
                if q != usize::MAX {
                    lap[(k, q)] -= ih2;
                }
            }
        }
    }
    lap.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::SolverFailure("annulus Laplacian is not positive definite".into()))
}

/// `∂(det_c4)/∂w` on the constraint nodes for displacement increments on the
/// unknown nodes; columns `0..nu` act on the first component.
fn linearized_det(
    spec: &GridSpec,
    d1: &[f64],
    d2: &[f64],
    unknown: &[usize],
    cid: &[usize],
    ncons: usize,
) -> DMatrix<f64> {
    let nu = unknown.len();
    let mut m = DMatrix::<f64>::zeros(ncons, 2 * nu);
    for (k, &p) in unknown.iter().enumerate() {
        for &(o, c) in &C4 {
            for axis in 0..2 {
                let q = spec.shift(p, axis, -o);
                let row = cid[q];
                if row == usize::MAX {
                    continue;
                }
                let cc = c / spec.h(axis);
                let g = c4_grad(spec, d1, d2, q);
                if axis == 0 {
                    m[(row, k)] += g[1][1] * cc;
                    m[(row, nu + k)] -= g[0][1] * cc;
                } else {
                    m[(row, k)] -= g[1][0] * cc;
                    m[(row, nu + k)] += g[0][0] * cc;
                }
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn two_shear(s: &GridSpec, a: f64, b: f64) -> GridMap {
        GridMap::from_fn(s, |x| {
            let d1 = a * (2.0 * PI * x[1]).sin();
            [d1, b * (2.0 * PI * (x[0] + d1)).sin(), 0.0]
        })
    }

    #[test]
    fn c4_det_of_shear_is_one_to_truncation() {
        let s = GridSpec::uniform(2, 64).unwrap();
        let f = GridMap::from_fn(&s, |x| [0.1 * (2.0 * PI * x[1]).sin(), 0.0, 0.0]);
        let d = det_c4(&f).unwrap();
        assert!(d.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn affine_map_blends_to_itself() {
        let s = GridSpec::uniform(2, 64).unwrap();
        let f = GridMap::from_fn(&s, |_| [0.013, -0.02, 0.0]);
        let h = linear_blend(&f, &[0.5, 0.5], 0.1).unwrap();
        for a in 0..2 {
            for (x, y) in h.displacement().comp(a).iter().zip(f.displacement().comp(a)) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn blend_plateaus_are_exact() {
        let s = GridSpec::uniform(2, 64).unwrap();
        let f = GridMap::from_fn(&s, |x| [0.1 * (2.0 * PI * x[1]).sin(), 0.0, 0.0]);
        let x0 = [0.5, 0.5];
        let h = linear_blend(&f, &x0, 0.1).unwrap();
        let lin = Linearization::of(&f, &x0).unwrap();
        for i in 0..s.len() {
            let y = s.coord(i);
            let d = s.torus_dist(&y, &x0);
            let hd = [h.displacement().comp(0)[i], h.displacement().comp(1)[i]];
            if d <= 0.05 {
                assert_eq!(hd, lin.displacement(&s, &y));
            } else if d >= 0.1 {
                assert_eq!(hd, [f.displacement().comp(0)[i], f.displacement().comp(1)[i]]);
            }
        }
    }

    #[test]
    fn radius_checks() {
        let s = GridSpec::uniform(2, 32).unwrap();
        let f = GridMap::identity(&s);
        assert!(matches!(linear_blend(&f, &[0.5, 0.5], 0.15), Ok(_)));
        assert!(matches!(linear_blend(&f, &[0.5, 0.5], 0.1), Err(Error::GridTooCoarse(_))));
        assert!(matches!(linear_blend(&f, &[0.5, 0.5], 0.2), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn weak_paste_of_affine_map_is_identity_operation() {
        let s = GridSpec::uniform(2, 64).unwrap();
        let f = GridMap::from_fn(&s, |_| [0.01, 0.02, 0.0]);
        let (g, rep) = weak_paste(&f, &[0.5, 0.5], 0.125, 0.5).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.theta.c0 < 1e-14);
        for a in 0..2 {
            for (x, y) in g.displacement().comp(a).iter().zip(f.displacement().comp(a)) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn weak_paste_two_shear_64() {
        let s = GridSpec::uniform(2, 64).unwrap();
        let f = two_shear(&s, 0.05, 0.05);
        let x0 = [0.5, 0.5];
        let (g, rep) = weak_paste(&f, &x0, 0.15, 0.5).unwrap();
        // At 64² the fourth-order truncation of f alone is about 8e-7.
        assert!(rep.det_residual <= 1e-6, "{rep:?}");
        assert!(rep.min_det > 0.0);
        let lin = &rep.linearization;
        for i in 0..s.len() {
            let y = s.coord(i);
            let d = s.torus_dist(&y, &x0);
            let gd = [g.displacement().comp(0)[i], g.displacement().comp(1)[i]];
            if d <= 0.075 {
                assert_eq!(gd, lin.displacement(&s, &y));
            } else if d >= 0.15 {
                assert_eq!(gd, [f.displacement().comp(0)[i], f.displacement().comp(1)[i]]);
            }
        }
    }

    #[test]
    fn rejects_compressible_input() {
        let s = GridSpec::uniform(2, 32).unwrap();
        let f = GridMap::from_fn(&s, |x| [0.05 * (2.0 * PI * x[0]).sin(), 0.0, 0.0]);
        assert!(matches!(weak_paste(&f, &[0.5, 0.5], 0.15, 0.5), Err(Error::InvalidField(_))));
    }
}
