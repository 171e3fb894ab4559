//! Uniform periodic grids on the flat torus `[0,1)^n`, n = 2 or 3.
//!
//! Node values are stored row-major with the last axis fastest. Axis 0 is
//! `x`, axis 1 is `y`. Vector fields keep one contiguous array per component.

mod interp;
mod norms;
mod spectral;

pub use interp::{interp_cubic, interp_cubic_grad, invert_map_point, map_point};
pub use norms::{norms, NormReport};
pub use spectral::{
    divergence, gradient, inverse_laplacian, jacobian, laplacian, partial, trig_eval, Jacobian,
};
pub(crate) use spectral::{forward as spectral_forward, inverse_real as spectral_inverse};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    sizes: Vec<usize>,
}

impl GridSpec {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.len() != 2 && sizes.len() != 3 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 2 or 3, got {}",
                sizes.len()
            )));
        }
        if let Some(&n) = sizes.iter().find(|&&n| n < 8) {
            return Err(Error::InvalidParameter(format!("grid size {n} < 8")));
        }
        Ok(GridSpec { sizes: sizes.to_vec() })
    }

    /// Square (cubic) grid with `n` nodes per axis.
    pub fn uniform(dim: usize, n: usize) -> Result<Self> {
        Self::new(&vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self, axis: usize) -> f64 {
        1.0 / self.sizes[axis] as f64
    }

    /// Smallest spacing over all axes.
    pub fn h_min(&self) -> f64 {
        (0..self.dim()).map(|a| self.h(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.h(a)).product()
    }

    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rem = idx;
        for a in (0..self.dim()).rev() {
            out[a] = rem % self.sizes[a];
            rem /= self.sizes[a];
        }
        out
    }

    pub fn flatten(&self, mi: &[usize]) -> usize {
        let mut idx = 0;
        for a in 0..self.dim() {
            idx = idx * self.sizes[a] + mi[a];
        }
        idx
    }

    /// Flat index of the node `offset` steps along `axis` from `idx`, periodically.
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let stride: usize = self.sizes[axis + 1..].iter().product();
        let n = self.sizes[axis] as isize;
        let i = ((idx / stride) % self.sizes[axis]) as isize;
        let j = (i + offset).rem_euclid(n);
        (idx as isize + (j - i) * stride as isize) as usize
    }

    /// Flat index of the node displaced by a multi-offset.
    pub fn offset(&self, idx: usize, off: &[isize]) -> usize {
        let mut j = idx;
        for (a, &o) in off.iter().enumerate().take(self.dim()) {
            if o != 0 {
                j = self.shift(j, a, o);
            }
        }
        j
    }

    pub fn coord(&self, idx: usize) -> [f64; 3] {
        let mi = self.unflatten(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim() {
            x[a] = mi[a] as f64 * self.h(a);
        }
        x
    }

    /// Minimum-image displacement `b - a` on the unit torus, per axis.
    pub fn torus_delta(&self, a: &[f64], b: &[f64]) -> [f64; 3] {
        let mut d = [0.0; 3];
        for k in 0..self.dim() {
            d[k] = wrap_delta(b[k] - a[k]);
        }
        d
    }

    pub fn torus_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.torus_delta(a, b);
        d.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn node_dist(&self, i: usize, j: usize) -> f64 {
        self.torus_dist(&self.coord(i), &self.coord(j))
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SpecMismatch)
        }
    }
}

/// Wraps a coordinate difference into `[-1/2, 1/2)`.
pub fn wrap_delta(d: f64) -> f64 {
    d - (d + 0.5).floor()
}

/// Reduces a coordinate into `[0, 1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let y = x - x.floor();
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// Common read access for scalar and vector fields.
pub trait Field {
    fn spec(&self) -> &GridSpec;
    fn components(&self) -> Vec<&[f64]>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidField(format!(
                "expected {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("non-finite value".into()));
        }
        Ok(ScalarField { spec, values })
    }

    pub(crate) fn from_vec_unchecked(spec: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        ScalarField { spec, values }
    }

    pub fn zeros(spec: &GridSpec) -> Self {
        ScalarField { spec: spec.clone(), values: vec![0.0; spec.len()] }
    }

    pub fn constant(spec: &GridSpec, c: f64) -> Self {
        ScalarField { spec: spec.clone(), values: vec![c; spec.len()] }
    }

    pub fn from_fn(spec: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..spec.len()).map(|i| f(&spec.coord(i)[..spec.dim()])).collect();
        ScalarField { spec: spec.clone(), values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField { spec: self.spec.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add(&self, o: &ScalarField) -> Result<Self> {
        self.spec.check_same(&o.spec)?;
        let values = self.values.iter().zip(&o.values).map(|(a, b)| a + b).collect();
        Ok(ScalarField { spec: self.spec.clone(), values })
    }

    pub fn sub(&self, o: &ScalarField) -> Result<Self> {
        self.spec.check_same(&o.spec)?;
        let values = self.values.iter().zip(&o.values).map(|(a, b)| a - b).collect();
        Ok(ScalarField { spec: self.spec.clone(), values })
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidField("non-finite value".into()))
        }
    }
}

impl Field for ScalarField {
    fn spec(&self) -> &GridSpec {
        &self.spec
    }
    fn components(&self) -> Vec<&[f64]> {
        vec![&self.values]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    spec: GridSpec,
    comps: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(spec: GridSpec, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != spec.dim() {
            return Err(Error::InvalidField(format!(
                "expected {} components, got {}",
                spec.dim(),
                comps.len()
            )));
        }
        for c in &comps {
            if c.len() != spec.len() {
                return Err(Error::InvalidField("component length mismatch".into()));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidField("non-finite value".into()));
            }
        }
        Ok(VectorField { spec, comps })
    }

    pub(crate) fn from_vecs_unchecked(spec: GridSpec, comps: Vec<Vec<f64>>) -> Self {
        VectorField { spec, comps }
    }

    pub fn zeros(spec: &GridSpec) -> Self {
        VectorField { spec: spec.clone(), comps: vec![vec![0.0; spec.len()]; spec.dim()] }
    }

    /// Samples `f(x)`; only the first `dim` entries of the returned array are used.
    pub fn from_fn(spec: &GridSpec, f: impl Fn(&[f64]) -> [f64; 3]) -> Self {
        let d = spec.dim();
        let mut comps = vec![vec![0.0; spec.len()]; d];
        for i in 0..spec.len() {
            let v = f(&spec.coord(i)[..d]);
            for a in 0..d {
                comps[a][i] = v[a];
            }
        }
        VectorField { spec: spec.clone(), comps }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn comp(&self, a: usize) -> &[f64] {
        &self.comps[a]
    }

    pub fn comp_mut(&mut self, a: usize) -> &mut [f64] {
        &mut self.comps[a]
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn into_comps(self) -> Vec<Vec<f64>> {
        self.comps
    }

    pub fn at(&self, i: usize) -> [f64; 3] {
        let mut v = [0.0; 3];
        for a in 0..self.dim() {
            v[a] = self.comps[a][i];
        }
        v
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|c| max_abs(c)).fold(0.0, f64::max)
    }

    /// Largest Euclidean length over nodes.
    pub fn max_norm(&self) -> f64 {
        (0..self.spec.len())
            .map(|i| self.comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, c: f64) -> Self {
        let comps = self.comps.iter().map(|v| v.iter().map(|x| c * x).collect()).collect();
        VectorField { spec: self.spec.clone(), comps }
    }

    pub fn add(&self, o: &VectorField) -> Result<Self> {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &VectorField) -> Result<Self> {
        self.zip(o, |a, b| a - b)
    }

    fn zip(&self, o: &VectorField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.spec.check_same(&o.spec)?;
        let comps = self
            .comps
            .iter()
            .zip(&o.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
            .collect();
        Ok(VectorField { spec: self.spec.clone(), comps })
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        if self.comps.iter().all(|c| c.iter().all(|v| v.is_finite())) {
            Ok(())
        } else {
            Err(Error::InvalidField("non-finite value".into()))
        }
    }
}

impl Field for VectorField {
    fn spec(&self) -> &GridSpec {
        &self.spec
    }
    fn components(&self) -> Vec<&[f64]> {
        self.comps.iter().map(|c| c.as_slice()).collect()
    }
}

/// A torus self-map `x -> x + displacement(x) mod 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMap {
    displacement: VectorField,
}

impl GridMap {
    pub fn new(displacement: VectorField) -> Result<Self> {
        displacement.check_finite()?;
        Ok(GridMap { displacement })
    }

    pub fn identity(spec: &GridSpec) -> Self {
        GridMap { displacement: VectorField::zeros(spec) }
    }

    pub fn from_fn(spec: &GridSpec, f: impl Fn(&[f64]) -> [f64; 3]) -> Self {
        GridMap { displacement: VectorField::from_fn(spec, f) }
    }

    pub fn spec(&self) -> &GridSpec {
        self.displacement.spec()
    }

    pub fn displacement(&self) -> &VectorField {
        &self.displacement
    }

    pub fn into_displacement(self) -> VectorField {
        self.displacement
    }

    /// Image of node `i`, reduced to `[0,1)^n`.
    pub fn image(&self, i: usize) -> [f64; 3] {
        let x = self.spec().coord(i);
        let d = self.displacement.at(i);
        let mut y = [0.0; 3];
        for a in 0..self.spec().dim() {
            y[a] = wrap_unit(x[a] + d[a]);
        }
        y
    }
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Boolean node mask helpers.
pub fn mask_count(mask: &[bool]) -> usize {
    mask.iter().filter(|&&b| b).count()
}

/// `h^n`-weighted sum of `s` over `mask`, or over the whole torus.
pub fn integrate(s: &ScalarField, mask: Option<&[bool]>) -> Result<f64> {
    let w = s.spec().cell_volume();
    match mask {
        None => Ok(w * s.values().iter().sum::<f64>()),
        Some(m) => {
            if m.len() != s.spec().len() {
                return Err(Error::InvalidRegion("mask length mismatch".into()));
            }
            if !m.iter().any(|&b| b) {
                return Err(Error::InvalidRegion("empty mask".into()));
            }
            Ok(w * s.values().iter().zip(m).filter(|(_, &b)| b).map(|(v, _)| v).sum::<f64>())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_rejects_small_and_bad_dims() {
        assert!(GridSpec::new(&[4, 8]).is_err());
        assert!(GridSpec::new(&[8]).is_err());
        assert!(GridSpec::new(&[8, 8, 8, 8]).is_err());
        assert!(GridSpec::new(&[8, 16]).is_ok());
    }

    #[test]
    fn flatten_roundtrip_and_shift() {
        let s = GridSpec::new(&[8, 10, 12]).unwrap();
        for i in [0, 1, 17, 333, s.len() - 1] {
            let mi = s.unflatten(i);
            assert_eq!(s.flatten(&mi), i);
        }
        let i = s.flatten(&[7, 0, 11]);
        assert_eq!(s.unflatten(s.shift(i, 0, 1)), [0, 0, 11]);
        assert_eq!(s.unflatten(s.shift(i, 1, -1)), [7, 9, 11]);
        assert_eq!(s.unflatten(s.shift(i, 2, 3)), [7, 0, 2]);
    }

    #[test]
    fn torus_distance_uses_min_image() {
        let s = GridSpec::uniform(2, 16).unwrap();
        let d = s.torus_dist(&[0.05, 0.5], &[0.95, 0.5]);
        assert!((d - 0.1).abs() < 1e-15);
    }

    #[test]
    fn integrate_constant_and_mask() {
        let s = GridSpec::uniform(2, 32).unwrap();
        let one = ScalarField::constant(&s, 1.0);
        assert!((integrate(&one, None).unwrap() - 1.0).abs() < 1e-14);
        let empty = vec![false; s.len()];
        assert!(matches!(integrate(&one, Some(&empty)), Err(Error::InvalidRegion(_))));
        let cosx = ScalarField::from_fn(&s, |x| (2.0 * std::f64::consts::PI * x[0]).cos());
        assert!(integrate(&cosx, None).unwrap().abs() < 1e-13);
    }

    #[test]
    fn field_constructor_validates() {
        let s = GridSpec::uniform(2, 8).unwrap();
        assert!(ScalarField::new(s.clone(), vec![0.0; 63]).is_err());
        let mut v = vec![0.0; 64];
        v[3] = f64::NAN;
        assert!(ScalarField::new(s.clone(), v).is_err());
        assert!(VectorField::new(s.clone(), vec![vec![0.0; 64]]).is_err());
    }
}
