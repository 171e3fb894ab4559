//! Spectral differentiation on the periodic grid.
//!
//! Derivatives multiply Fourier coefficients by `2πik`. The Nyquist mode of
//! an even-sized axis has no real derivative and is zeroed, so the Laplacian
//! symbol used here is exactly the one produced by `divergence ∘ gradient`.

use super::{GridMap, GridSpec, ScalarField, VectorField};
use crate::error::Result;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::f64::consts::PI;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_nd(spec: &GridSpec, data: &mut [Complex64], inverse: bool) {
    let len = spec.len();
    let mut buf = Vec::new();
    for axis in 0..spec.dim() {
        let n = spec.sizes()[axis];
        let stride: usize = spec.sizes()[axis + 1..].iter().product();
        let plan = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            if inverse {
                p.plan_fft_inverse(n)
            } else {
                p.plan_fft_forward(n)
            }
        });
        buf.resize(n, Complex64::new(0.0, 0.0));
        let block = n * stride;
        for outer in 0..len / block {
            for inner in 0..stride {
                let start = outer * block + inner;
                for j in 0..n {
                    buf[j] = data[start + j * stride];
                }
                plan.process(&mut buf);
                for j in 0..n {
                    data[start + j * stride] = buf[j];
                }
            }
        }
    }
    if inverse {
        let s = 1.0 / len as f64;
        for c in data.iter_mut() {
            *c *= s;
        }
    }
}

pub(crate) fn forward(spec: &GridSpec, values: &[f64]) -> Vec<Complex64> {
    let mut c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(spec, &mut c, false);
    c
}

pub(crate) fn inverse_real(spec: &GridSpec, mut c: Vec<Complex64>) -> Vec<f64> {
    fft_nd(spec, &mut c, true);
    c.into_iter().map(|z| z.re).collect()
}

/// Signed integer frequency of index `j` on an axis of `n` nodes; Nyquist is `+n/2`.
pub(crate) fn freq(j: usize, n: usize) -> f64 {
    if 2 * j <= n {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

/// Derivative symbol `2πk` with the Nyquist mode zeroed.
pub(crate) fn deriv_freq(j: usize, n: usize) -> f64 {
    if 2 * j == n {
        0.0
    } else {
        2.0 * PI * freq(j, n)
    }
}

/// Per-node derivative symbols, one array per axis.
pub(crate) fn symbols(spec: &GridSpec) -> Vec<Vec<f64>> {
    let d = spec.dim();
    let mut out = vec![vec![0.0; spec.len()]; d];
    for i in 0..spec.len() {
        let mi = spec.unflatten(i);
        for a in 0..d {
            out[a][i] = deriv_freq(mi[a], spec.sizes()[a]);
        }
    }
    out
}

/// Spectral partial derivative of raw node values along `axis`.
pub fn partial(spec: &GridSpec, values: &[f64], axis: usize) -> Vec<f64> {
    let mut c = forward(spec, values);
    let n = spec.sizes()[axis];
    for (i, z) in c.iter_mut().enumerate() {
        let k = deriv_freq(spec.unflatten(i)[axis], n);
        *z *= Complex64::new(0.0, k);
    }
    inverse_real(spec, c)
}

pub fn divergence(v: &VectorField) -> Result<ScalarField> {
    v.check_finite()?;
    let spec = v.spec();
    let sym = symbols(spec);
    let mut acc = vec![Complex64::new(0.0, 0.0); spec.len()];
    for a in 0..spec.dim() {
        let c = forward(spec, v.comp(a));
        for i in 0..spec.len() {
            acc[i] += c[i] * Complex64::new(0.0, sym[a][i]);
        }
    }
    Ok(ScalarField::from_vec_unchecked(spec.clone(), inverse_real(spec, acc)))
}

pub fn gradient(s: &ScalarField) -> Result<VectorField> {
    s.check_finite()?;
    let spec = s.spec();
    let sym = symbols(spec);
    let c = forward(spec, s.values());
    let comps = (0..spec.dim())
        .map(|a| {
            let ca = c.iter().zip(&sym[a]).map(|(z, k)| z * Complex64::new(0.0, *k)).collect();
            inverse_real(spec, ca)
        })
        .collect();
    Ok(VectorField::from_vecs_unchecked(spec.clone(), comps))
}

/// Spectral Laplacian, identical in exact arithmetic to `divergence(gradient(s))`.
pub fn laplacian(s: &ScalarField) -> Result<ScalarField> {
    s.check_finite()?;
    let spec = s.spec();
    let sym = symbols(spec);
    let mut c = forward(spec, s.values());
    for (i, z) in c.iter_mut().enumerate() {
        let k2: f64 = (0..spec.dim()).map(|a| sym[a][i] * sym[a][i]).sum();
        *z *= -k2;
    }
    Ok(ScalarField::from_vec_unchecked(spec.clone(), inverse_real(spec, c)))
}

/// Zero-mean solution `a` of `laplacian(a) = s`, with modes the Laplacian
/// annihilates (the mean and pure Nyquist modes) dropped from `s`.
pub fn inverse_laplacian(s: &ScalarField) -> Result<ScalarField> {
    s.check_finite()?;
    let spec = s.spec();
    let sym = symbols(spec);
    let mut c = forward(spec, s.values());
    for (i, z) in c.iter_mut().enumerate() {
        let k2: f64 = (0..spec.dim()).map(|a| sym[a][i] * sym[a][i]).sum();
        if k2 == 0.0 {
            *z = Complex64::new(0.0, 0.0);
        } else {
            *z /= -k2;
        }
    }
    Ok(ScalarField::from_vec_unchecked(spec.clone(), inverse_real(spec, c)))
}

/// Per-node Jacobian matrices of a [`GridMap`] and their determinants.
#[derive(Clone, Debug)]
pub struct Jacobian {
    dim: usize,
    /// `entries[a * dim + b]` holds `∂_b (x_a + d_a)` at every node.
    entries: Vec<Vec<f64>>,
    det: ScalarField,
}

impl Jacobian {
    /// Assembles a Jacobian from displacement-gradient arrays `∂_b d_a`.
    pub(crate) fn from_displacement_gradient(spec: &GridSpec, mut grad: Vec<Vec<f64>>) -> Self {
        let d = spec.dim();
        for a in 0..d {
            for v in grad[a * d + a].iter_mut() {
                *v += 1.0;
            }
        }
        let det = (0..spec.len())
            .map(|i| {
                let m = |a: usize, b: usize| grad[a * d + b][i];
                if d == 2 {
                    m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)
                } else {
                    m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
                        - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
                }
            })
            .collect();
        Jacobian { dim: d, entries: grad, det: ScalarField::from_vec_unchecked(spec.clone(), det) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn det(&self) -> &ScalarField {
        &self.det
    }

    pub fn entry(&self, a: usize, b: usize) -> &[f64] {
        &self.entries[a * self.dim + b]
    }

    pub fn at(&self, i: usize) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for a in 0..self.dim {
            for b in 0..self.dim {
                m[a][b] = self.entries[a * self.dim + b][i];
            }
        }
        m
    }
}

/// Spectral Jacobian of `x + d(x)`.
pub fn jacobian(m: &GridMap) -> Result<Jacobian> {
    let disp = m.displacement();
    disp.check_finite()?;
    let spec = disp.spec();
    let d = spec.dim();
    let sym = symbols(spec);
    let mut grad = vec![Vec::new(); d * d];
    for a in 0..d {
        let c = forward(spec, disp.comp(a));
        for b in 0..d {
            let cb = c.iter().zip(&sym[b]).map(|(z, k)| z * Complex64::new(0.0, *k)).collect();
            grad[a * d + b] = inverse_real(spec, cb);
        }
    }
    Ok(Jacobian::from_displacement_gradient(spec, grad))
}

/// Value and gradient of the trigonometric interpolant of `values` at an
/// arbitrary point. Agrees with the grid values and spectral derivatives at
/// nodes.
pub fn trig_eval(spec: &GridSpec, values: &[f64], x: &[f64]) -> (f64, [f64; 3]) {
    let c = forward(spec, values);
    let n = spec.len() as f64;
    let d = spec.dim();
    let mut val = 0.0;
    let mut grad = [0.0; 3];
    for (i, z) in c.iter().enumerate() {
        if z.norm() == 0.0 {
            continue;
        }
        let mi = spec.unflatten(i);
        let mut phase = 0.0;
        let mut k = [0.0; 3];
        for a in 0..d {
            k[a] = freq(mi[a], spec.sizes()[a]);
            phase += 2.0 * PI * k[a] * x[a];
        }
        let e = Complex64::new(phase.cos(), phase.sin());
        let t = z * e / n;
        val += t.re;
        for a in 0..d {
            if 2 * mi[a] != spec.sizes()[a] {
                grad[a] += (t * Complex64::new(0.0, 2.0 * PI * k[a])).re;
            } else {
                // Nyquist term contributes c·cos(π n x); its derivative vanishes at nodes.
                grad[a] += -(z.re / n) * PI * spec.sizes()[a] as f64 * phase.sin();
            }
        }
    }
    (val, grad)
}
