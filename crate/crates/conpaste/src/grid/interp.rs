//! Periodic cubic (4-point Lagrange) interpolation and map inversion.

use super::{wrap_delta, wrap_unit, GridMap, GridSpec};
use crate::error::{Error, Result};

fn weights(t: f64) -> ([f64; 4], [f64; 4]) {
    let w = [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ];
    let dw = [
        -(3.0 * t * t - 6.0 * t + 2.0) / 6.0,
        (3.0 * t * t - 4.0 * t - 1.0) / 2.0,
        -(3.0 * t * t - 2.0 * t - 2.0) / 2.0,
        (3.0 * t * t - 1.0) / 6.0,
    ];
    (w, dw)
}

/// Value and gradient of the periodic tensor-cubic interpolant at `x`.
pub fn interp_cubic_grad(spec: &GridSpec, values: &[f64], x: &[f64]) -> (f64, [f64; 3]) {
    let d = spec.dim();
    let mut base = [0usize; 3];
    let mut w = [[0.0; 4]; 3];
    let mut dw = [[0.0; 4]; 3];
    for a in 0..d {
        let n = spec.sizes()[a];
        let p = wrap_unit(x[a]) * n as f64;
        let i0 = p.floor();
        let (wa, da) = weights(p - i0);
        w[a] = wa;
        dw[a] = da.map(|v| v * n as f64);
        base[a] = (i0 as isize - 1).rem_euclid(n as isize) as usize;
    }
    let mut val = 0.0;
    let mut grad = [0.0; 3];
    let kz = if d == 3 { 4 } else { 1 };
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..kz {
                let mut mi = [0usize; 3];
                let o = [i, j, k];
                for a in 0..d {
                    mi[a] = (base[a] + o[a]) % spec.sizes()[a];
                }
                let v = values[spec.flatten(&mi)];
                let wz = if d == 3 { w[2][k] } else { 1.0 };
                val += w[0][i] * w[1][j] * wz * v;
                grad[0] += dw[0][i] * w[1][j] * wz * v;
                grad[1] += w[0][i] * dw[1][j] * wz * v;
                if d == 3 {
                    grad[2] += w[0][i] * w[1][j] * dw[2][k] * v;
                }
            }
        }
    }
    (val, grad)
}

pub fn interp_cubic(spec: &GridSpec, values: &[f64], x: &[f64]) -> f64 {
    interp_cubic_grad(spec, values, x).0
}

/// `x + d(x)` with `d` interpolated; not reduced mod 1.
pub fn map_point(m: &GridMap, x: &[f64]) -> [f64; 3] {
    let spec = m.spec();
    let mut y = [0.0; 3];
    for a in 0..spec.dim() {
        y[a] = x[a] + interp_cubic(spec, m.displacement().comp(a), x);
    }
    y
}

/// Solves `x + d(x) = y (mod 1)` by Newton's method from `guess`.
pub fn invert_map_point(m: &GridMap, y: &[f64], guess: &[f64]) -> Result<[f64; 3]> {
    let spec = m.spec();
    let d = spec.dim();
    let mut x = [0.0; 3];
    x[..d].copy_from_slice(&guess[..d]);
    for _ in 0..50 {
        let mut r = [0.0; 3];
        let mut j = nalgebra::DMatrix::<f64>::identity(d, d);
        for a in 0..d {
            let (v, g) = interp_cubic_grad(spec, m.displacement().comp(a), &x);
            r[a] = wrap_delta(x[a] + v - y[a]);
            for b in 0..d {
                j[(a, b)] += g[b];
            }
        }
        let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn < 1e-12 {
            return Ok(x.map(wrap_unit));
        }
        let rhs = nalgebra::DVector::from_column_slice(&r[..d]);
        let step = j
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NewtonFailure("singular Jacobian in map inversion".into()))?;
        for a in 0..d {
            x[a] -= step[a];
        }
    }
    Err(Error::NewtonFailure("map inversion did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarField;
    use std::f64::consts::PI;

    #[test]
    fn reproduces_cubics_and_nodes() {
        let s = GridSpec::uniform(2, 32).unwrap();
        let f = ScalarField::from_fn(&s, |x| (2.0 * PI * x[0]).sin() + (2.0 * PI * x[1]).cos());
        let i = s.flatten(&[3, 30]);
        let x = s.coord(i);
        assert!((interp_cubic(&s, f.values(), &x[..2]) - f.values()[i]).abs() < 1e-14);
        let (v, g) = interp_cubic_grad(&s, f.values(), &[0.41, 0.77]);
        assert!((v - ((2.0 * PI * 0.41).sin() + (2.0 * PI * 0.77).cos())).abs() < 1e-4);
        assert!((g[0] - 2.0 * PI * (2.0 * PI * 0.41).cos()).abs() < 1e-2);
    }

    #[test]
    fn inverts_shear() {
        let s = GridSpec::uniform(2, 64).unwrap();
        let m = GridMap::from_fn(&s, |x| [0.1 * (2.0 * PI * x[1]).sin(), 0.0, 0.0]);
        let x = [0.3, 0.6];
        let y = map_point(&m, &x);
        let back = invert_map_point(&m, &y, &y).unwrap();
        assert!((back[0] - x[0]).abs() < 1e-10 && (back[1] - x[1]).abs() < 1e-10);
    }
}
