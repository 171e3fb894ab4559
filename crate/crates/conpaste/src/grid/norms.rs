use super::{spectral, Field, GridSpec};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Graph (L1) radius of the exhaustive short-range pair sample.
const PAIR_RADIUS: isize = 8;
const LONG_PAIRS: usize = 10_000;
const PAIR_SEED: u64 = 0x486f_6c64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub c0: f64,
    pub c1: f64,
    pub alpha: f64,
    pub holder: f64,
}

/// Discrete C⁰, C¹ and Hölder-α norms.
///
/// `c1 = max(c0, sup ‖Df‖)` with `Df` the spectral derivative and the
/// operator 2-norm. The Hölder seminorm is a lower bound: it is the max over
/// all node pairs within graph distance 8 plus a fixed seeded set of
/// long-range pairs.
pub fn norms<F: Field>(f: &F, alpha: f64) -> Result<NormReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside (0,1)")));
    }
    let spec = f.spec();
    let comps = f.components();
    for c in &comps {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("non-finite value".into()));
        }
    }
    let n = spec.len();
    let c0 = (0..n)
        .map(|i| comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
        .fold(0.0, f64::max);

    let d = spec.dim();
    let derivs: Vec<Vec<Vec<f64>>> = comps
        .iter()
        .map(|c| (0..d).map(|b| spectral::partial(spec, c, b)).collect())
        .collect();
    let mut dmax: f64 = 0.0;
    for i in 0..n {
        let mut m = nalgebra::DMatrix::<f64>::zeros(comps.len(), d);
        for (a, da) in derivs.iter().enumerate() {
            for b in 0..d {
                m[(a, b)] = da[b][i];
            }
        }
        dmax = dmax.max(op_norm(&m));
    }
    let c1 = c0.max(dmax);
    let holder = holder_seminorm(spec, &comps, alpha);
    Ok(NormReport { c0, c1, alpha, holder })
}

fn op_norm(m: &nalgebra::DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    if m.nrows() == 2 && m.ncols() == 2 {
        let t = m.iter().map(|v| v * v).sum::<f64>();
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = (t * t - 4.0 * det * det).max(0.0).sqrt();
        return ((t + disc) / 2.0).sqrt();
    }
    m.clone().singular_values().max()
}

/// Offsets with positive lexicographic sign and L1 length in `1..=PAIR_RADIUS`.
fn short_offsets(dim: usize) -> Vec<[isize; 3]> {
    let r = PAIR_RADIUS;
    let mut out = Vec::new();
    let zr = if dim == 3 { r } else { 0 };
    for a in -r..=r {
        for b in -r..=r {
            for c in -zr..=zr {
                let l1 = a.abs() + b.abs() + c.abs();
                if l1 == 0 || l1 > r {
                    continue;
                }
                if (a, b, c) > (0, 0, 0) {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

fn holder_seminorm(spec: &GridSpec, comps: &[&[f64]], alpha: f64) -> f64 {
    let n = spec.len();
    let d = spec.dim();
    let diff = |i: usize, j: usize| -> f64 {
        comps.iter().map(|c| (c[i] - c[j]).powi(2)).sum::<f64>().sqrt()
    };
    let mut best: f64 = 0.0;
    for off in short_offsets(d) {
        let mut dist2 = 0.0;
        for a in 0..d {
            let len = spec.sizes()[a] as isize;
            let o = off[a].rem_euclid(len);
            let o = o.min(len - o);
            dist2 += (o as f64 * spec.h(a)).powi(2);
        }
        if dist2 == 0.0 {
            continue;
        }
        let w = dist2.sqrt().powf(alpha);
        let mut m: f64 = 0.0;
        for i in 0..n {
            m = m.max(diff(i, spec.offset(i, &off[..d])));
        }
        best = best.max(m / w);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PAIR_SEED);
    for _ in 0..LONG_PAIRS {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        let dist = spec.node_dist(i, j);
        if dist > 0.0 {
            best = best.max(diff(i, j) / dist.powf(alpha));
        }
    }
    best
}
