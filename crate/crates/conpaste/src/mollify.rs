//! Friedrichs mollification on the torus, done in frequency space so that it
//! commutes exactly with the spectral derivatives of [`crate::grid`].

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use rustfft::num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct MollifierKernel {
    eps: f64,
    kernel: ScalarField,
}

impl MollifierKernel {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Kernel samples centred at the origin node.
    pub fn field(&self) -> &ScalarField {
        &self.kernel
    }

    pub fn support_count(&self) -> usize {
        self.kernel.values().iter().filter(|&&v| v > 0.0).count()
    }
}

fn bump(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Exponential bump scaled to radius `eps`, renormalized to unit discrete mass.
pub fn kernel(eps: f64, spec: &GridSpec) -> Result<MollifierKernel> {
    if !eps.is_finite() || eps < 4.0 * spec.h_min() {
        return Err(Error::GridTooCoarse(format!("ε = {eps} below 4h = {}", 4.0 * spec.h_min())));
    }
    if eps >= 0.25 {
        return Err(Error::KernelTooWide(format!("ε = {eps} ≥ 0.25")));
    }
    let origin = [0.0; 3];
    let raw = ScalarField::from_fn(spec, |x| bump(spec.torus_dist(x, &origin) / eps));
    let mass: f64 = raw.values().iter().sum::<f64>() * spec.cell_volume();
    Ok(MollifierKernel { eps, kernel: raw.scale(1.0 / mass) })
}

fn convolve(spec: &GridSpec, values: &[f64], khat: &[Complex64]) -> Vec<f64> {
    let mut c = crate::grid::spectral_forward(spec, values);
    for (z, k) in c.iter_mut().zip(khat) {
        *z *= k;
    }
    crate::grid::spectral_inverse(spec, c)
}

fn kernel_hat(k: &MollifierKernel) -> Vec<Complex64> {
    let spec = k.kernel.spec();
    let w = spec.cell_volume();
    crate::grid::spectral_forward(spec, k.kernel.values()).into_iter().map(|z| z * w).collect()
}

/// Fields that can be mollified componentwise.
pub trait Mollifiable: Sized {
    fn mollify_with(&self, k: &MollifierKernel) -> Result<Self>;
}

impl Mollifiable for ScalarField {
    fn mollify_with(&self, k: &MollifierKernel) -> Result<Self> {
        self.spec().check_same(k.kernel.spec())?;
        let kh = kernel_hat(k);
        ScalarField::new(self.spec().clone(), convolve(self.spec(), self.values(), &kh))
    }
}

impl Mollifiable for VectorField {
    fn mollify_with(&self, k: &MollifierKernel) -> Result<Self> {
        self.spec().check_same(k.kernel.spec())?;
        let kh = kernel_hat(k);
        let comps = self.comps().iter().map(|c| convolve(self.spec(), c, &kh)).collect();
        VectorField::new(self.spec().clone(), comps)
    }
}

/// Periodic convolution `F * η_ε`, componentwise.
pub fn mollify_field<F: Mollifiable>(f: &F, k: &MollifierKernel) -> Result<F> {
    f.mollify_with(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{divergence, integrate};
    use std::f64::consts::PI;

    #[test]
    fn unit_mass_and_support() {
        let s = GridSpec::uniform(2, 64).unwrap();
        let k = kernel(0.1, &s).unwrap();
        assert!((integrate(k.field(), None).unwrap() - 1.0).abs() <= 1e-12);
        for i in 0..s.len() {
            if s.torus_dist(&s.coord(i), &[0.0; 3]) >= 0.1 {
                assert_eq!(k.field().values()[i], 0.0);
            }
            assert!(k.field().values()[i] >= 0.0);
        }
    }

    #[test]
    fn width_errors() {
        let s = GridSpec::uniform(2, 64).unwrap();
        assert!(matches!(kernel(0.05, &s), Err(Error::GridTooCoarse(_))));
        assert!(matches!(kernel(0.25, &s), Err(Error::KernelTooWide(_))));
    }

    #[test]
    fn halving_eps_quarters_support() {
        let s = GridSpec::uniform(2, 256).unwrap();
        let a = kernel(0.2, &s).unwrap().support_count() as f64;
        let b = kernel(0.1, &s).unwrap().support_count() as f64;
        assert!((a / b - 4.0).abs() < 0.1);
    }

    #[test]
    fn constant_unchanged_and_spec_mismatch() {
        let s = GridSpec::uniform(2, 32).unwrap();
        let k = kernel(0.15, &s).unwrap();
        let c = ScalarField::constant(&s, 2.0);
        assert!(mollify_field(&c, &k).unwrap().map(|v| v - 2.0).max_abs() <= 1e-13);
        let other = ScalarField::zeros(&GridSpec::uniform(2, 16).unwrap());
        assert!(matches!(mollify_field(&other, &k), Err(Error::SpecMismatch)));
    }

    #[test]
    fn divergence_free_stays_divergence_free() {
        let s = GridSpec::uniform(2, 64).unwrap();
        let v = VectorField::from_fn(&s, |x| {
            let (sx, cx) = (2.0 * PI * x[0]).sin_cos();
            let (sy, cy) = (2.0 * PI * 3.0 * x[1]).sin_cos();
            [3.0 * sx * cy, -cx * sy, 0.0]
        });
        let k = kernel(0.1, &s).unwrap();
        assert!(divergence(&mollify_field(&v, &k).unwrap()).unwrap().max_abs() <= 1e-12);
    }
}
