//! Seeded synthetic fields for scenarios and tests.
//!
//! All generators are deterministic in `(spec, seed, kmax)` and use
//! `ChaCha8Rng`, so outputs are reproducible across platforms.

use crate::error::{Error, Result};
use crate::grid::{partial, GridSpec, ScalarField, VectorField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const TERMS: usize = 16;

fn check_band(spec: &GridSpec, kmax: usize) -> Result<()> {
    let limit = spec.sizes().iter().min().copied().unwrap_or(0) / 2;
    if kmax == 0 || kmax >= limit {
        return Err(Error::InvalidParameter(format!(
            "band limit {kmax} must lie in [1, {limit}) for this grid"
        )));
    }
    Ok(())
}

/// Sum of `TERMS` plane waves with integer frequencies `|k_a| ≤ kmax`,
/// amplitudes decaying like `1/(1 + |k|²)`, scaled to sup norm 1.
pub fn random_scalar(spec: &GridSpec, seed: u64, kmax: usize) -> Result<ScalarField> {
    check_band(spec, kmax)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let km = kmax as i64;
    let terms: Vec<(Vec<f64>, f64, f64)> = (0..TERMS)
        .map(|_| {
            let k: Vec<f64> = (0..spec.dim()).map(|_| rng.gen_range(-km..=km) as f64).collect();
            let k2: f64 = k.iter().map(|v| v * v).sum();
            (k, rng.gen_range(-1.0..1.0) / (1.0 + k2), rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    let s = ScalarField::from_fn(spec, |x| {
        terms
            .iter()
            .map(|(k, a, p)| a * (2.0 * PI * k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + p).sin())
            .sum()
    });
    let m = s.max_abs();
    Ok(if m > 0.0 { s.scale(1.0 / m) } else { s })
}

fn check_plane(spec: &GridSpec) -> Result<()> {
    if spec.dim() != 2 {
        return Err(Error::InvalidParameter("stream-function fields are two-dimensional".into()));
    }
    Ok(())
}

/// `(∂₂ψ, -∂₁ψ)` with spectral derivatives of a random stream function, so
/// the spectral divergence vanishes to rounding.
pub fn random_spectral_curl(spec: &GridSpec, seed: u64, kmax: usize) -> Result<VectorField> {
    check_plane(spec)?;
    let psi = random_scalar(spec, seed, kmax)?;
    let a = partial(spec, psi.values(), 1);
    let b: Vec<f64> = partial(spec, psi.values(), 0).iter().map(|v| -v).collect();
    VectorField::new(spec.clone(), vec![a, b])
}

/// Backward-difference curl of a random stream function. The staggered
/// divergence `Σ_a (v_a(i) - v_a(i - e_a))/h` of the result vanishes to
/// rounding.
pub fn random_staggered_curl(spec: &GridSpec, seed: u64, kmax: usize) -> Result<VectorField> {
    check_plane(spec)?;
    let psi = random_scalar(spec, seed, kmax)?;
    let p = psi.values();
    let (h0, h1) = (spec.h(0), spec.h(1));
    let a: Vec<f64> = (0..spec.len()).map(|i| (p[i] - p[spec.shift(i, 1, -1)]) / h1).collect();
    let b: Vec<f64> = (0..spec.len()).map(|i| -(p[i] - p[spec.shift(i, 0, -1)]) / h0).collect();
    VectorField::new(spec.clone(), vec![a, b])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divsolve::staggered_divergence;
    use crate::grid::divergence;

    #[test]
    fn curls_are_divergence_free_in_their_own_sense() {
        let s = GridSpec::uniform(2, 32).unwrap();
        let v = random_spectral_curl(&s, 4, 5).unwrap();
        assert!(divergence(&v).unwrap().max_abs() < 1e-11);
        let w = random_staggered_curl(&s, 4, 5).unwrap();
        assert!(staggered_divergence(&w).max_abs() < 1e-10);
    }

    #[test]
    fn seeded_and_normalized() {
        let s = GridSpec::uniform(2, 16).unwrap();
        let a = random_scalar(&s, 9, 3).unwrap();
        assert_eq!(a, random_scalar(&s, 9, 3).unwrap());
        assert_ne!(a, random_scalar(&s, 10, 3).unwrap());
        assert!((a.max_abs() - 1.0).abs() < 1e-15);
        assert!(random_scalar(&s, 9, 8).is_err());
    }
}
