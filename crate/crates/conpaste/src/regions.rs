//! Nested region systems `V ⊂ Ω ⊂ W` and the smooth cutoffs built on them.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const LABEL_V: u8 = 0;
pub const LABEL_OMEGA: u8 = 1;
pub const LABEL_W: u8 = 2;

/// Node mask of the closed torus ball `|x - center| ≤ radius`.
pub fn ball_mask(spec: &GridSpec, center: &[f64], radius: f64) -> Vec<bool> {
    (0..spec.len()).map(|i| spec.torus_dist(&spec.coord(i), center) <= radius).collect()
}

/// Node mask of the box `|x_a - center_a| ≤ half_a` (torus offsets).
pub fn box_mask(spec: &GridSpec, center: &[f64], half: &[f64]) -> Vec<bool> {
    (0..spec.len())
        .map(|i| {
            let d = spec.torus_delta(center, &spec.coord(i));
            (0..spec.dim()).all(|a| d[a].abs() <= half[a])
        })
        .collect()
}

/// Mask nodes that have at least one axis neighbour outside the mask.
fn boundary_nodes(spec: &GridSpec, mask: &[bool]) -> Vec<usize> {
    (0..spec.len())
        .filter(|&i| {
            mask[i]
                && (0..spec.dim()).any(|a| !mask[spec.shift(i, a, 1)] || !mask[spec.shift(i, a, -1)])
        })
        .collect()
}

/// Torus distance from every node to the nearest node of `mask` (0 inside).
pub fn distance_to(spec: &GridSpec, mask: &[bool]) -> Vec<f64> {
    let bnd = boundary_nodes(spec, mask);
    let pts: Vec<[f64; 3]> = bnd.iter().map(|&j| spec.coord(j)).collect();
    (0..spec.len())
        .map(|i| {
            if mask[i] {
                return 0.0;
            }
            let x = spec.coord(i);
            pts.iter().map(|p| spec.torus_dist(&x, p)).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionSet {
    spec: GridSpec,
    labels: Vec<u8>,
    k: Vec<bool>,
    dist_k: Vec<f64>,
    delta: f64,
    meta: Value,
}

impl RegionSet {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn margin(&self) -> f64 {
        self.delta
    }

    pub fn k_mask(&self) -> &[bool] {
        &self.k
    }

    /// Torus distance from each node to `K`.
    pub fn dist_k(&self) -> &[f64] {
        &self.dist_k
    }

    fn mask(&self, l: u8) -> Vec<bool> {
        self.labels.iter().map(|&x| x == l).collect()
    }

    pub fn v_mask(&self) -> Vec<bool> {
        self.mask(LABEL_V)
    }

    pub fn omega_mask(&self) -> Vec<bool> {
        self.mask(LABEL_OMEGA)
    }

    pub fn w_mask(&self) -> Vec<bool> {
        self.mask(LABEL_W)
    }

    /// The same regions with the roles of `V` and `W` exchanged.
    pub fn swapped(&self) -> RegionSet {
        let mut out = self.clone();
        for l in out.labels.iter_mut() {
            *l = match *l {
                LABEL_V => LABEL_W,
                LABEL_W => LABEL_V,
                x => x,
            };
        }
        out
    }

    /// Labels as a scalar field (0 = V, 1 = Ω, 2 = W), for CVF1 output.
    pub fn label_field(&self) -> ScalarField {
        ScalarField::from_vec_unchecked(self.spec.clone(), self.labels.iter().map(|&l| l as f64).collect())
    }

    pub fn metadata(&self) -> Value {
        serde_json::json!({
            "delta": self.delta,
            "k_nodes": self.k.iter().filter(|&&b| b).count(),
            "v_nodes": self.labels.iter().filter(|&&l| l == LABEL_V).count(),
            "omega_nodes": self.labels.iter().filter(|&&l| l == LABEL_OMEGA).count(),
            "k": self.meta,
        })
    }

    /// Attach a caller-side description of `K` to the metadata.
    pub fn with_description(mut self, desc: Value) -> Self {
        self.meta = desc;
        self
    }
}

/// Builds `V = δ/3`-dilation of `K`, `Ω = {δ/3 < d_K ≤ δ} ∩ U`, `W` = the rest.
pub fn nested_regions(spec: &GridSpec, k: &[bool], u: &[bool], delta: f64) -> Result<RegionSet> {
    if k.len() != spec.len() || u.len() != spec.len() {
        return Err(Error::InvalidRegion("mask length mismatch".into()));
    }
    if !k.iter().any(|&b| b) {
        return Err(Error::InvalidRegion("K is empty".into()));
    }
    if k.iter().zip(u).any(|(&a, &b)| a && !b) {
        return Err(Error::InvalidRegion("K is not contained in U".into()));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("margin δ = {delta} must be positive")));
    }
    let dist_k = distance_to(spec, k);
    let mut labels = vec![LABEL_W; spec.len()];
    for i in 0..spec.len() {
        if dist_k[i] <= delta / 3.0 {
            if !u[i] {
                return Err(Error::RegionTooTight("V leaves U".into()));
            }
            labels[i] = LABEL_V;
        } else if dist_k[i] <= delta && u[i] {
            labels[i] = LABEL_OMEGA;
        }
    }
    if !labels.iter().any(|&l| l == LABEL_OMEGA) {
        return Err(Error::RegionTooTight("Ω is empty".into()));
    }
    // V and W must be separated by at least three node layers along every axis path.
    for i in 0..spec.len() {
        if labels[i] != LABEL_V {
            continue;
        }
        for a in 0..spec.dim() {
            for s in [-2isize, -1, 1, 2] {
                if labels[spec.shift(i, a, s)] == LABEL_W {
                    return Err(Error::RegionTooTight(
                        "fewer than three Ω layers between V and W".into(),
                    ));
                }
            }
        }
        if spec.dim() >= 2 {
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                if b >= spec.dim() {
                    continue;
                }
                for (sa, sb) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                    let j = spec.shift(spec.shift(i, a, sa), b, sb);
                    if labels[j] == LABEL_W {
                        return Err(Error::RegionTooTight(
                            "fewer than three Ω layers between V and W".into(),
                        ));
                    }
                }
            }
        }
    }
    Ok(RegionSet { spec: spec.clone(), labels, k: k.to_vec(), dist_k, delta, meta: Value::Null })
}

/// Generalized smoothstep of order `k`: odd-symmetric polynomial with
/// `S(0) = 0`, `S(1) = 1` and `k` vanishing derivatives at both ends.
pub fn smoothstep(k: usize, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 0..=k {
        s += binom(k + j, j) * binom(2 * k + 1, k - j) * (-t).powi(j as i32);
    }
    s * t.powi(k as i32 + 1)
}

/// `S_k'(t) = (2k+1)!/(k!)² · t^k (1-t)^k`.
pub fn smoothstep_deriv(k: usize, t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    lead(k) * (t * (1.0 - t)).powi(k as i32)
}

/// `S_k''(t)`.
pub fn smoothstep_deriv2(k: usize, t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let u = t * (1.0 - t);
    lead(k) * k as f64 * u.powi(k as i32 - 1) * (1.0 - 2.0 * t)
}

fn lead(k: usize) -> f64 {
    (k + 1..=2 * k + 1).map(|v| v as f64).product::<f64>() / (1..=k).map(|v| v as f64).product::<f64>()
}

/// `max |S_k'| = S_k'(1/2)`; 15/8 for the quintic.
pub fn smoothstep_constant(k: usize) -> f64 {
    smoothstep_deriv(k, 0.5)
}

fn binom(n: usize, r: usize) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffInfo {
    pub smoothness: usize,
    /// Torus distance between the two plateau sets.
    pub width: f64,
    /// `max |S_k'|`.
    pub c_s: f64,
}

#[derive(Clone, Debug)]
pub struct Cutoff {
    pub xi1: ScalarField,
    pub xi2: ScalarField,
    pub info: CutoffInfo,
}

/// Partition of unity `ξ1 + ξ2 = 1` with `ξ1 = 1` on `V` and `0` on `W`.
///
/// The plateaus are widened by the Ω nodes touching `V` (resp. `W`) so that
/// compact difference stencils centred on `V` or `W` only see plateau values.
/// Between the plateaus `ξ1 = 1 - S_k(t)`, `t = d₁/(d₁ + d₂)`, with `d₁, d₂`
/// the torus distances to the widened plateaus.
pub fn partition_of_unity(rs: &RegionSet, smoothness: usize) -> Result<Cutoff> {
    if smoothness < 2 {
        return Err(Error::InvalidParameter("smoothness must be at least 2".into()));
    }
    let spec = rs.spec();
    let touches = |i: usize, l: u8| {
        (0..spec.dim()).any(|a| rs.labels[spec.shift(i, a, 1)] == l || rs.labels[spec.shift(i, a, -1)] == l)
    };
    let mut inner = vec![false; spec.len()];
    let mut outer = vec![false; spec.len()];
    for i in 0..spec.len() {
        match rs.labels[i] {
            LABEL_V => inner[i] = true,
            LABEL_W => outer[i] = true,
            _ => {
                if touches(i, LABEL_V) {
                    inner[i] = true;
                } else if touches(i, LABEL_W) {
                    outer[i] = true;
                }
            }
        }
    }
    let d1 = distance_to(spec, &inner);
    let d2 = distance_to(spec, &outer);
    let width = (0..spec.len()).filter(|&i| inner[i]).map(|i| d2[i]).fold(f64::INFINITY, f64::min);
    let xi1: Vec<f64> = (0..spec.len())
        .map(|i| {
            if inner[i] {
                1.0
            } else if outer[i] {
                0.0
            } else {
                1.0 - smoothstep(smoothness, d1[i] / (d1[i] + d2[i]))
            }
        })
        .collect();
    let xi2 = xi1.iter().map(|v| 1.0 - v).collect();
    Ok(Cutoff {
        xi1: ScalarField::from_vec_unchecked(spec.clone(), xi1),
        xi2: ScalarField::from_vec_unchecked(spec.clone(), xi2),
        info: CutoffInfo { smoothness, width, c_s: smoothstep_constant(smoothness) },
    })
}

/// Radial bump `ρ = 1 - S₂((|y - x0| - r/2)/(r/2))`: `ρ = 1` on `B(x0, r/2)`,
/// `ρ = 0` outside `B(x0, r)`, `|∇ρ| ≤ C_b/r` with `C_b = 2·15/8`.
pub fn radial_bump(spec: &GridSpec, x0: &[f64], r: f64) -> Result<ScalarField> {
    check_bump_radius(spec, r, 0.25)?;
    Ok(ScalarField::from_fn(spec, |y| bump_value(spec.torus_dist(y, x0), r)))
}

pub(crate) fn check_bump_radius(spec: &GridSpec, r: f64, max: f64) -> Result<()> {
    if !(r.is_finite() && r > 0.0) || r >= max {
        return Err(Error::InvalidParameter(format!("radius {r} outside (0, {max})")));
    }
    if r < 4.0 * spec.h_min() {
        return Err(Error::GridTooCoarse(format!("radius {r} below 4h = {}", 4.0 * spec.h_min())));
    }
    Ok(())
}

pub(crate) fn bump_value(dist: f64, r: f64) -> f64 {
    if dist <= 0.5 * r {
        1.0
    } else if dist >= r {
        0.0
    } else {
        1.0 - smoothstep(2, (dist - 0.5 * r) / (0.5 * r))
    }
}

/// Profile constant `C_b` in `|∇ρ| ≤ C_b/r`.
pub fn bump_constant() -> f64 {
    2.0 * smoothstep_constant(2)
}
