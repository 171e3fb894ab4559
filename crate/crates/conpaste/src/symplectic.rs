//! Local pasting of area-preserving planar maps through type-1 generating
//! functions `S(x, X)`, with `y = -∂₁S` and `Y = ∂₂S`.
//!
//! Everything lives in a square chart `[-δ, δ]²` around a patch center and is
//! sampled on Chebyshev–Lobatto tensor grids, so derivatives and path
//! integrals are spectral.

use crate::error::{Error, Result};
use serde::Serialize;

/// Smallest admissible `|∂X/∂y|` for a map and `|∂²S/∂x∂X|` for a
/// generating function.
pub const TWIST_MIN: f64 = 1e-3;
/// Tolerance on `det Df - 1` for maps handed to [`generating_from_map`].
pub const SYMPLECTIC_TOL: f64 = 1e-9;
/// Step tolerance of the implicit solves.
pub const NEWTON_TOL: f64 = 1e-12;
/// Default step of the finite-difference Jacobian. The blend bump has large
/// high derivatives, so fourth-order truncation dominates above about 5e-5
/// and rounding below about 2e-5.
pub const FD_STEP: f64 = 5e-5;

const MAX_NEWTON: usize = 100;
// Final Newton solves start from a cell of this dyadic lattice, which makes
// the result depend only on S near the root.
const SEED_LATTICE: f64 = 1.0 / (1u64 << 20) as f64;

/// Square chart `center + [-radius, radius]²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Patch {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Patch {
    pub fn new(center: [f64; 2], radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || !center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter(format!("bad patch: center {center:?}, radius {radius}")));
        }
        Ok(Patch { center, radius })
    }
}

/// Chebyshev–Lobatto nodes on `[-r, r]`, increasing, with an exact zero in
/// the middle.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebGrid {
    radius: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    diff: Vec<f64>,
}

impl ChebGrid {
    pub fn new(n: usize, radius: f64) -> Result<Self> {
        if n < 5 || n % 2 == 0 {
            return Err(Error::InvalidParameter(format!("Chebyshev grid needs odd n ≥ 5, got {n}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("radius {radius} must be positive")));
        }
        let m = n - 1;
        let mut nodes: Vec<f64> = (0..n).map(|k| -radius * (std::f64::consts::PI * k as f64 / m as f64).cos()).collect();
        for k in 0..n / 2 {
            nodes[k] = -nodes[n - 1 - k];
        }
        nodes[m / 2] = 0.0;
        let weights: Vec<f64> = (0..n)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                if k == 0 || k == m {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let mut diff = vec![0.0; n * n];
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                if i != j {
                    let d = (weights[j] / weights[i]) / (nodes[i] - nodes[j]);
                    diff[i * n + j] = d;
                    row += d;
                }
            }
            diff[i * n + i] = -row;
        }
        Ok(ChebGrid { radius, nodes, weights, diff })
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Index of the zero node.
    pub fn center(&self) -> usize {
        self.n() / 2
    }

    /// Lagrange basis values at `t` (barycentric form; exact at nodes).
    fn basis(&self, t: f64) -> Vec<f64> {
        let n = self.n();
        let mut l = vec![0.0; n];
        if let Some(k) = self.nodes.iter().position(|&x| x == t) {
            l[k] = 1.0;
            return l;
        }
        let mut sum = 0.0;
        for k in 0..n {
            l[k] = self.weights[k] / (t - self.nodes[k]);
            sum += l[k];
        }
        for v in &mut l {
            *v /= sum;
        }
        l
    }

    fn contract(&self, table: &[f64], lx: &[f64], ly: &[f64]) -> f64 {
        let n = self.n();
        let mut acc = 0.0;
        for i in 0..n {
            if lx[i] == 0.0 {
                continue;
            }
            let row = &table[i * n..(i + 1) * n];
            let s: f64 = row.iter().zip(ly).map(|(a, b)| a * b).sum();
            acc += lx[i] * s;
        }
        acc
    }

    /// Tensor interpolant of `table` (row index along the first variable).
    pub fn interp2(&self, table: &[f64], x: f64, y: f64) -> f64 {
        self.contract(table, &self.basis(x), &self.basis(y))
    }

    /// Spectral derivative along the first (`axis = 0`) or second variable.
    pub fn derivative(&self, table: &[f64], axis: usize) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n)
                    .map(|k| {
                        if axis == 0 {
                            self.diff[i * n + k] * table[k * n + j]
                        } else {
                            self.diff[j * n + k] * table[i * n + k]
                        }
                    })
                    .sum();
            }
        }
        out
    }

    /// `F(t_k) = ∫_0^{t_k} p` for the interpolant `p` of `values`.
    fn antiderivative(&self, values: &[f64]) -> Vec<f64> {
        let n = self.n();
        let m = n - 1;
        let theta: Vec<f64> = (0..n).map(|k| std::f64::consts::PI * (1.0 - k as f64 / m as f64)).collect();
        let mut c = vec![0.0; n];
        for (j, cj) in c.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in 0..n {
                let w = if k == 0 || k == m { 0.5 } else { 1.0 };
                s += w * values[k] * (j as f64 * theta[k]).cos();
            }
            *cj = 2.0 * s / m as f64;
        }
        c[0] *= 0.5;
        c[m] *= 0.5;
        let mut b = vec![0.0; n + 1];
        b[1] += c[0];
        if n > 1 {
            b[2] += c[1] / 4.0;
        }
        for j in 2..n {
            b[j + 1] += c[j] / (2.0 * (j + 1) as f64);
            b[j - 1] -= c[j] / (2.0 * (j - 1) as f64);
        }
        let q = |k: usize| -> f64 { b.iter().enumerate().map(|(j, bj)| bj * (j as f64 * theta[k]).cos()).sum() };
        let q0 = q(self.center());
        let mut out: Vec<f64> = (0..n).map(|k| self.radius * (q(k) - q0)).collect();
        out[self.center()] = 0.0;
        out
    }
}

/// Samples of a planar map on a Chebyshev tensor grid over a patch, in
/// coordinates relative to the patch center.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalMap {
    patch: Patch,
    grid: ChebGrid,
    x_img: Vec<f64>,
    y_img: Vec<f64>,
    valid: Vec<bool>,
}

impl LocalMap {
    /// Samples `f(x, y) = (X, Y)` on an `n × n` grid over `[-r, r]²`.
    pub fn sample(patch: Patch, n: usize, f: impl Fn(f64, f64) -> [f64; 2]) -> Result<Self> {
        let grid = ChebGrid::new(n, patch.radius)?;
        let mut x_img = Vec::with_capacity(n * n);
        let mut y_img = Vec::with_capacity(n * n);
        for &x in grid.nodes() {
            for &y in grid.nodes() {
                let [a, b] = f(x, y);
                if !(a.is_finite() && b.is_finite()) {
                    return Err(Error::InvalidField(format!("map is not finite at ({x}, {y})")));
                }
                x_img.push(a);
                y_img.push(b);
            }
        }
        Ok(LocalMap { patch, grid, x_img, y_img, valid: vec![true; n * n] })
    }

    pub fn patch(&self) -> &Patch {
        &self.patch
    }

    pub fn grid(&self) -> &ChebGrid {
        &self.grid
    }

    /// Chart coordinates of node `(i, j)`.
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [self.grid.nodes[i], self.grid.nodes[j]]
    }

    /// Image of node `(i, j)`, or `None` where the map is undefined.
    pub fn image(&self, i: usize, j: usize) -> Option<[f64; 2]> {
        let k = i * self.grid.n() + j;
        self.valid[k].then(|| [self.x_img[k], self.y_img[k]])
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn components(&self) -> (&[f64], &[f64]) {
        (&self.x_img, &self.y_img)
    }

    fn require_complete(&self) -> Result<()> {
        if self.valid_count() != self.valid.len() {
            return Err(Error::InvalidField(format!(
                "{} map samples fall outside the chart",
                self.valid.len() - self.valid_count()
            )));
        }
        Ok(())
    }

    /// `det Df` at the nodes from spectral derivatives.
    pub fn spectral_det(&self) -> Result<Vec<f64>> {
        self.require_complete()?;
        let g = &self.grid;
        let (xx, xy) = (g.derivative(&self.x_img, 0), g.derivative(&self.x_img, 1));
        let (yx, yy) = (g.derivative(&self.y_img, 0), g.derivative(&self.y_img, 1));
        Ok((0..xx.len()).map(|k| xx[k] * yy[k] - xy[k] * yx[k]).collect())
    }

    /// Largest difference over nodes valid in both maps, with the number of
    /// such nodes.
    pub fn max_diff(&self, other: &LocalMap) -> Result<(f64, usize)> {
        if self.grid != other.grid {
            return Err(Error::SpecMismatch);
        }
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for k in 0..self.valid.len() {
            if self.valid[k] && other.valid[k] {
                count += 1;
                worst = worst
                    .max((self.x_img[k] - other.x_img[k]).abs())
                    .max((self.y_img[k] - other.y_img[k]).abs());
            }
        }
        Ok((worst, count))
    }
}

/// Values of `S` and the derivatives the implicit solve needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub s: f64,
    pub s1: f64,
    pub s2: f64,
    pub s12: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GfKind {
    /// Chebyshev samples of `S` and of its spectral derivatives.
    Cheb { s: Vec<f64>, s1: Vec<f64>, s2: Vec<f64>, s12: Vec<f64> },
    /// `λ(2‖(x, X)‖/δ) S1 + (1 - λ) S0`, evaluated exactly.
    Blend { outer: Box<GeneratingFunction>, inner: Box<GeneratingFunction>, delta: f64 },
}

/// Type-1 generating function on a square `(x, X)` patch.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratingFunction {
    patch: Patch,
    grid: ChebGrid,
    kind: GfKind,
    twist_bound: f64,
}

impl GeneratingFunction {
    /// Samples `s(x, X)` on an `n × n` grid and normalizes `S(0, 0) = 0`.
    pub fn from_fn(patch: Patch, n: usize, s: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let grid = ChebGrid::new(n, patch.radius)?;
        let mut table = Vec::with_capacity(n * n);
        for &x in grid.nodes() {
            for &xx in grid.nodes() {
                table.push(s(x, xx));
            }
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidField("S is not finite".into()));
        }
        let c = table[grid.center() * n + grid.center()];
        for v in &mut table {
            *v -= c;
        }
        Self::from_table(patch, grid, table)
    }

    fn from_table(patch: Patch, grid: ChebGrid, s: Vec<f64>) -> Result<Self> {
        let s1 = grid.derivative(&s, 0);
        let s2 = grid.derivative(&s, 1);
        let s12 = grid.derivative(&s1, 1);
        let twist_bound = signed_min(&s12).ok_or_else(|| Error::NoTwist("∂²S/∂x∂X changes sign".into()))?;
        if twist_bound < TWIST_MIN {
            return Err(Error::NoTwist(format!("min |∂²S/∂x∂X| = {twist_bound:e}")));
        }
        Ok(GeneratingFunction { patch, grid, kind: GfKind::Cheb { s, s1, s2, s12 }, twist_bound })
    }

    pub fn patch(&self) -> &Patch {
        &self.patch
    }

    pub fn grid(&self) -> &ChebGrid {
        &self.grid
    }

    pub fn kind(&self) -> &GfKind {
        &self.kind
    }

    /// `min |∂²S/∂x∂X|` over the check points (the sign is constant).
    pub fn twist_bound(&self) -> f64 {
        self.twist_bound
    }

    /// `S` and its derivatives at chart point `(x, X)`.
    pub fn jet(&self, x: f64, xx: f64) -> Jet {
        match &self.kind {
            GfKind::Cheb { s, s1, s2, s12 } => {
                let (lx, ly) = (self.grid.basis(x), self.grid.basis(xx));
                Jet {
                    s: self.grid.contract(s, &lx, &ly),
                    s1: self.grid.contract(s1, &lx, &ly),
                    s2: self.grid.contract(s2, &lx, &ly),
                    s12: self.grid.contract(s12, &lx, &ly),
                }
            }
            GfKind::Blend { outer, inner, delta } => {
                let rho = x.hypot(xx);
                let z = 2.0 * rho / delta;
                if z <= 0.5 {
                    return inner.jet(x, xx);
                }
                if z >= 1.0 {
                    return outer.jet(x, xx);
                }
                let (a, b) = (outer.jet(x, xx), inner.jet(x, xx));
                let (l, dl, ddl) = bump(z);
                // Chain rule for λ(2ρ/δ).
                let k = 2.0 / delta;
                let l1 = dl * k * x / rho;
                let l2 = dl * k * xx / rho;
                let l12 = k * x * xx / (rho * rho) * (ddl * k - dl / rho);
                let d = Jet { s: b.s - a.s, s1: b.s1 - a.s1, s2: b.s2 - a.s2, s12: b.s12 - a.s12 };
                Jet {
                    s: a.s + l * d.s,
                    s1: a.s1 + l1 * d.s + l * d.s1,
                    s2: a.s2 + l2 * d.s + l * d.s2,
                    s12: a.s12 + l12 * d.s + l1 * d.s2 + l2 * d.s1 + l * d.s12,
                }
            }
        }
    }

    /// Image of chart point `(x, y)`: solves `y = -∂₁S(x, X)` for `X` in the
    /// patch, then `Y = ∂₂S(x, X)`.
    pub fn map_point(&self, x: f64, y: f64) -> Result<[f64; 2]> {
        let r = self.patch.radius;
        let f = |xx: f64| {
            let j = self.jet(x, xx);
            (-j.s1 - y, -j.s12)
        };
        let xx = solve_monotone(&f, -r, r).ok_or_else(|| {
            Error::NewtonFailure(format!("no X in the patch with y = -∂₁S(x, X) at ({x}, {y})"))
        })?;
        Ok([xx, self.jet(x, xx).s2])
    }
}

/// Smallest value of `sign · v`, where the sign is taken from the middle
/// entry; `None` if the sign is not constant.
fn signed_min(v: &[f64]) -> Option<f64> {
    let sign = v[v.len() / 2].signum();
    let m = v.iter().map(|x| sign * x).fold(f64::INFINITY, f64::min);
    (m > 0.0).then_some(m)
}

fn psi(t: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let e = (-1.0 / t).exp();
    let t2 = t * t;
    (e, e / t2, e * (1.0 - 2.0 * t) / (t2 * t2))
}

/// `λ` on `[1/2, 1]` with its first two derivatives; `λ = 1` below, `0` above.
fn bump(z: f64) -> (f64, f64, f64) {
    let (u, du, ddu) = psi(1.0 - z);
    let (v, dv, ddv) = psi(z - 0.5);
    let (u1, u2) = (-du, ddu);
    let w = u + v;
    let (w1, w2) = (u1 + dv, u2 + ddv);
    let b = u / w;
    let b1 = (u1 - b * w1) / w;
    let b2 = (u2 - 2.0 * b1 * w1 - b * w2) / w;
    (b, b1, b2)
}

/// Safeguarded Newton on a bracket for a monotone function.
fn newton_bracketed(f: &impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64, flo: f64, start: f64, tol: f64) -> f64 {
    // Orient so that f(lo) < 0.
    let flip = flo > 0.0;
    let g = |x: f64| {
        let (v, d) = f(x);
        if flip {
            (-v, -d)
        } else {
            (v, d)
        }
    };
    let mut x = start;
    let mut dx_old = hi - lo;
    let (mut fx, mut dfx) = g(x);
    for _ in 0..MAX_NEWTON {
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton_ok = dfx != 0.0 && {
            let nx = x - fx / dfx;
            nx > lo && nx < hi && (2.0 * fx).abs() <= (dx_old * dfx).abs()
        };
        let (nx, dx) = if newton_ok {
            let dx = fx / dfx;
            (x - dx, dx)
        } else {
            let m = 0.5 * (lo + hi);
            (m, x - m)
        };
        dx_old = dx;
        if nx == x || dx.abs() < tol {
            return nx;
        }
        x = nx;
        (fx, dfx) = g(x);
    }
    x
}

/// Root of a monotone `f` on `[lo, hi]`, or `None` if it has no sign change.
///
/// A first pass locates the root; the final pass runs from the cell of a
/// fixed dyadic lattice that contains it, so the result depends only on `f`
/// near the root.
fn solve_monotone(f: &impl Fn(f64) -> (f64, f64), lo: f64, hi: f64) -> Option<f64> {
    let (fa, fb) = (f(lo).0, f(hi).0);
    if !(fa.is_finite() && fb.is_finite()) {
        return None;
    }
    if fa == 0.0 {
        return Some(lo);
    }
    if fb == 0.0 {
        return Some(hi);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let rough = newton_bracketed(f, lo, hi, fa, 0.5 * (lo + hi), 1e-3 * SEED_LATTICE);
    let below = |v: f64| v.signum() == fa.signum();
    let mut k = (rough / SEED_LATTICE).floor();
    for _ in 0..64 {
        let (a, b) = (k * SEED_LATTICE, (k + 1.0) * SEED_LATTICE);
        let (va, vb) = (f(a).0, f(b).0);
        if va == 0.0 {
            return Some(a);
        }
        if vb == 0.0 {
            return Some(b);
        }
        if below(va) && !below(vb) {
            return Some(newton_bracketed(f, a, b, va, 0.5 * (a + b), NEWTON_TOL * 1e-3));
        }
        k += if below(vb) { 1.0 } else { -1.0 };
    }
    None
}

/// Type-1 generating function of `f` on the `(x, X)` patch `[-δ, δ]²`, with
/// `n` Chebyshev nodes per axis.
///
/// The samples of `f` must cover every `y` with `X(x, y) ∈ [-δ, δ]`.
pub fn generating_from_map(f: &LocalMap, delta: f64, n: usize) -> Result<GeneratingFunction> {
    f.require_complete()?;
    let det = f.spectral_det()?;
    let dev = det.iter().fold(0.0, |m: f64, d| m.max((d - 1.0).abs()));
    if dev > SYMPLECTIC_TOL {
        return Err(Error::InvalidField(format!("map is not area-preserving: sup |det Df - 1| = {dev:e}")));
    }
    let mg = &f.grid;
    let xy = mg.derivative(&f.x_img, 1);
    let twist = signed_min(&xy).unwrap_or(0.0);
    if twist < TWIST_MIN {
        return Err(Error::NoTwist(format!("min |∂X/∂y| = {twist:e} on the samples")));
    }
    let patch = Patch::new(f.patch.center, delta)?;
    let grid = ChebGrid::new(n, delta)?;
    let r = mg.radius();
    // y(x_i, X_j) and Y(x_i, X_j) by inverting X(x_i, ·).
    let mut ys = vec![0.0; n * n];
    let mut big_y = vec![0.0; n * n];
    for (i, &x) in grid.nodes().iter().enumerate() {
        let lx = mg.basis(x);
        for (j, &xx) in grid.nodes().iter().enumerate() {
            let g = |y: f64| {
                let ly = mg.basis(y);
                (mg.contract(&f.x_img, &lx, &ly) - xx, mg.contract(&xy, &lx, &ly))
            };
            let y = solve_monotone(&g, -r, r).ok_or_else(|| {
                Error::InvalidParameter(format!("map samples do not reach X = {xx} at x = {x}; sample a wider patch"))
            })?;
            ys[i * n + j] = y;
            big_y[i * n + j] = mg.contract(&f.y_img, &lx, &mg.basis(y));
        }
    }
    // S(x, X) = ∫_0^X Y(0, t) dt - ∫_0^x y(s, X) ds.
    let c = grid.center();
    let a = grid.antiderivative(&big_y[c * n..(c + 1) * n]);
    let mut s = vec![0.0; n * n];
    for j in 0..n {
        let col: Vec<f64> = (0..n).map(|i| ys[i * n + j]).collect();
        let b = grid.antiderivative(&col);
        for i in 0..n {
            s[i * n + j] = a[j] - b[i];
        }
    }
    GeneratingFunction::from_table(patch, grid, s)
}

/// `S = λ(2‖(x, X)‖/δ) S1 + (1 - λ) S0` with `λ = 1` on `‖·‖ ≤ δ/4` and
/// `λ = 0` on `‖·‖ ≥ δ/2`.
pub fn blend_generating(s0: &GeneratingFunction, s1: &GeneratingFunction, delta: f64) -> Result<GeneratingFunction> {
    if s0.patch != s1.patch || s0.grid != s1.grid {
        return Err(Error::SpecMismatch);
    }
    if !(delta > 0.0 && delta <= s0.patch.radius) {
        return Err(Error::InvalidParameter(format!(
            "blend radius {delta} must lie in (0, {}]",
            s0.patch.radius
        )));
    }
    for (name, g) in [("S0", s0), ("S1", s1)] {
        let v = g.jet(0.0, 0.0).s;
        if v.abs() > 1e-14 {
            return Err(Error::InvalidParameter(format!("{name}(0, 0) = {v:e}; normalize the constant")));
        }
    }
    let mut out = GeneratingFunction {
        patch: s0.patch,
        grid: s0.grid.clone(),
        kind: GfKind::Blend { outer: Box::new(s0.clone()), inner: Box::new(s1.clone()), delta },
        twist_bound: 0.0,
    };
    let samples = twist_samples(&out);
    out.twist_bound = signed_min(&samples)
        .filter(|&t| t >= TWIST_MIN)
        .ok_or_else(|| Error::TwistLost(format!("∂²S/∂x∂X reaches {:e}", samples.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())))))?;
    Ok(out)
}

/// `∂²S/∂x∂X` on the Chebyshev nodes and on a uniform lattice four times
/// finer; the middle entry is the patch center.
fn twist_samples(g: &GeneratingFunction) -> Vec<f64> {
    let r = g.patch.radius;
    let m = 4 * g.grid.n();
    let uniform: Vec<f64> = (0..=m).map(|k| -r + 2.0 * r * k as f64 / m as f64).collect();
    let mut out = vec![g.jet(0.0, 0.0).s12];
    for axis in [g.grid.nodes(), &uniform[..]] {
        for &x in axis {
            for &xx in axis {
                out.push(g.jet(x, xx).s12);
            }
        }
    }
    let mid = out.len() / 2;
    out.swap(0, mid);
    out
}

/// Blends generating functions chart by chart along an orbit.
pub fn blend_orbit(outer: &[GeneratingFunction], inner: &[GeneratingFunction], deltas: &[f64]) -> Result<Vec<GeneratingFunction>> {
    if outer.len() != inner.len() || outer.len() != deltas.len() {
        return Err(Error::InvalidParameter("orbit charts, replacements and radii differ in number".into()));
    }
    outer.iter().zip(inner).zip(deltas).map(|((a, b), &d)| blend_generating(a, b, d)).collect()
}

/// Samples the map of `S` on its own grid; nodes without a root in the patch
/// are marked invalid.
pub fn map_from_generating(s: &GeneratingFunction) -> LocalMap {
    let grid = s.grid.clone();
    let n = grid.n();
    let mut x_img = vec![f64::NAN; n * n];
    let mut y_img = vec![f64::NAN; n * n];
    let mut valid = vec![false; n * n];
    for (i, &x) in grid.nodes().iter().enumerate() {
        for (j, &y) in grid.nodes().iter().enumerate() {
            if let Ok([a, b]) = s.map_point(x, y) {
                let k = i * n + j;
                x_img[k] = a;
                y_img[k] = b;
                valid[k] = true;
            }
        }
    }
    LocalMap { patch: s.patch, grid, x_img, y_img, valid }
}

/// `det D(map of S)` at `(x, y)`. Each partial derivative is a fourth-order
/// central difference at `step` and `step/2`, combined by one Richardson
/// step into a sixth-order estimate.
pub fn fd_det(s: &GeneratingFunction, x: f64, y: f64, step: f64) -> Result<f64> {
    let d = |ex: f64, ey: f64, h: f64| -> Result<[f64; 2]> {
        let mut acc = [0.0; 2];
        for (k, c) in [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)] {
            let p = s.map_point(x + k * h * ex, y + k * h * ey)?;
            acc[0] += c * p[0];
            acc[1] += c * p[1];
        }
        Ok([acc[0] / (12.0 * h), acc[1] / (12.0 * h)])
    };
    let rich = |ex: f64, ey: f64| -> Result<[f64; 2]> {
        let (a, b) = (d(ex, ey, step)?, d(ex, ey, 0.5 * step)?);
        Ok([(16.0 * b[0] - a[0]) / 15.0, (16.0 * b[1] - a[1]) / 15.0])
    };
    let (dx, dy) = (rich(1.0, 0.0)?, rich(0.0, 1.0)?);
    Ok(dx[0] * dy[1] - dy[0] * dx[1])
}

/// Checks of a blended generating function against its two parents.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlendReport {
    pub patch: Patch,
    pub delta: f64,
    pub twist_outer: f64,
    pub twist_inner: f64,
    pub twist_blend: f64,
    /// Nodes where the map of the blend is defined.
    pub valid_nodes: usize,
    /// Nodes whose finite-difference stencil stays inside the chart.
    pub interior_nodes: usize,
    /// `max |det - 1|` over interior nodes.
    pub det_deviation: f64,
    /// Nodes whose root has `‖(x, X)‖ ≤ δ/4`, and the largest difference
    /// there to the map of `S1`.
    pub inner_nodes: usize,
    pub inner_max_diff: f64,
    /// Nodes whose root has `‖(x, X)‖ ≥ δ/2`, against the map of `S0`.
    pub outer_nodes: usize,
    pub outer_max_diff: f64,
}

/// Symplecticity and plateau checks for `blend = blend_generating(s0, s1, δ)`.
pub fn blend_report(s0: &GeneratingFunction, s1: &GeneratingFunction, blend: &GeneratingFunction, step: f64) -> Result<BlendReport> {
    let GfKind::Blend { delta, .. } = blend.kind else {
        return Err(Error::InvalidParameter("not a blended generating function".into()));
    };
    let (m, m0, m1) = (map_from_generating(blend), map_from_generating(s0), map_from_generating(s1));
    let n = blend.grid.n();
    let r = blend.patch.radius;
    let mut rep = BlendReport {
        patch: blend.patch,
        delta,
        twist_outer: s0.twist_bound,
        twist_inner: s1.twist_bound,
        twist_blend: blend.twist_bound,
        valid_nodes: m.valid_count(),
        interior_nodes: 0,
        det_deviation: 0.0,
        inner_nodes: 0,
        inner_max_diff: 0.0,
        outer_nodes: 0,
        outer_max_diff: 0.0,
    };
    for i in 0..n {
        for j in 0..n {
            let Some(img) = m.image(i, j) else { continue };
            let [x, y] = m.node(i, j);
            if x.abs().max(y.abs()) <= r - 2.0 * step {
                if let Ok(d) = fd_det(blend, x, y, step) {
                    rep.interior_nodes += 1;
                    rep.det_deviation = rep.det_deviation.max((d - 1.0).abs());
                }
            }
            let rho = x.hypot(img[0]);
            let diff = |o: Option<[f64; 2]>| o.map_or(f64::INFINITY, |p| (p[0] - img[0]).abs().max((p[1] - img[1]).abs()));
            if rho <= 0.25 * delta {
                rep.inner_nodes += 1;
                rep.inner_max_diff = rep.inner_max_diff.max(diff(m1.image(i, j)));
            } else if rho >= 0.5 * delta {
                rep.outer_nodes += 1;
                rep.outer_max_diff = rep.outer_max_diff.max(diff(m0.image(i, j)));
            }
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn patch(r: f64) -> Patch {
        Patch::new([0.0, 0.0], r).unwrap()
    }

    #[test]
    fn cheb_derivative_and_integral_of_polynomial() {
        let g = ChebGrid::new(9, 0.5).unwrap();
        assert_eq!(g.nodes()[g.center()], 0.0);
        let n = g.n();
        let t: Vec<f64> = (0..n * n).map(|k| {
            let (x, y) = (g.nodes()[k / n], g.nodes()[k % n]);
            x.powi(3) * y - 2.0 * y * y
        }).collect();
        let d0 = g.derivative(&t, 0);
        let d1 = g.derivative(&t, 1);
        for k in 0..n * n {
            let (x, y) = (g.nodes()[k / n], g.nodes()[k % n]);
            assert!((d0[k] - 3.0 * x * x * y).abs() < 1e-13);
            assert!((d1[k] - (x.powi(3) - 4.0 * y)).abs() < 1e-13);
        }
        let f: Vec<f64> = g.nodes().iter().map(|x| 1.0 + x + x.powi(7)).collect();
        let a = g.antiderivative(&f);
        for (k, &x) in g.nodes().iter().enumerate() {
            assert!((a[k] - (x + x * x / 2.0 + x.powi(8) / 8.0)).abs() < 1e-15);
        }
        assert!((g.interp2(&t, 0.1, -0.2) - (1e-3 * -0.2 - 0.08)).abs() < 1e-15);
    }

    #[test]
    fn shear_has_quadratic_generating_function() {
        let f = LocalMap::sample(patch(0.3), 15, |x, y| [x + y, y]).unwrap();
        let s = generating_from_map(&f, 0.1, 11).unwrap();
        let exact = GeneratingFunction::from_fn(patch(0.1), 11, |x, xx| (xx - x).powi(2) / 2.0).unwrap();
        let (GfKind::Cheb { s: a, .. }, GfKind::Cheb { s: b, .. }) = (s.kind(), exact.kind()) else { unreachable!() };
        for (u, v) in a.iter().zip(b) {
            assert!((u - v).abs() < 1e-15, "{u} {v}");
        }
        assert!((s.twist_bound() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_has_no_twist() {
        let f = LocalMap::sample(patch(0.2), 11, |x, y| [x, y]).unwrap();
        assert!(matches!(generating_from_map(&f, 0.1, 11), Err(Error::NoTwist(_))));
        let flat = GeneratingFunction::from_fn(patch(0.1), 11, |x, xx| x * x + xx * xx);
        assert!(matches!(flat, Err(Error::NoTwist(_))));
    }

    #[test]
    fn non_symplectic_map_rejected() {
        let f = LocalMap::sample(patch(0.3), 11, |x, y| [x + y, 1.01 * y]).unwrap();
        assert!(matches!(generating_from_map(&f, 0.1, 11), Err(Error::InvalidField(_))));
    }

    #[test]
    fn quadratic_generating_function_gives_shear() {
        let s = GeneratingFunction::from_fn(patch(0.1), 11, |x, xx| (xx - x).powi(2) / 2.0).unwrap();
        let m = map_from_generating(&s);
        for i in 0..11 {
            for j in 0..11 {
                let [x, y] = m.node(i, j);
                match m.image(i, j) {
                    Some([a, b]) => {
                        assert!((a - (x + y)).abs() < 1e-12 && (b - y).abs() < 1e-12);
                    }
                    None => assert!((x + y).abs() > 0.1 - 1e-12),
                }
            }
        }
    }

    #[test]
    fn bump_plateaus_and_derivatives() {
        assert_eq!(bump(0.5), (1.0, 0.0, 0.0));
        assert_eq!(bump(1.0), (0.0, 0.0, 0.0));
        let h = 1e-5;
        for z in [0.55, 0.7, 0.85, 0.95] {
            let (_, d, dd) = bump(z);
            let fd = (bump(z + h).0 - bump(z - h).0) / (2.0 * h);
            let fdd = (bump(z + h).1 - bump(z - h).1) / (2.0 * h);
            assert!((d - fd).abs() < 1e-7 * (1.0 + d.abs()));
            assert!((dd - fdd).abs() < 1e-5 * (1.0 + dd.abs()));
        }
    }

    #[test]
    fn blend_of_equal_functions_is_unchanged() {
        let s = GeneratingFunction::from_fn(patch(0.1), 11, |x, xx| (xx - x).powi(2) / 2.0 + 0.2 * (2.0 * PI * x).sin()).unwrap();
        let b = blend_generating(&s, &s, 0.1).unwrap();
        for &(x, xx) in &[(0.0, 0.0), (0.01, 0.02), (0.03, -0.02), (0.05, 0.06), (-0.09, 0.1)] {
            assert_eq!(b.jet(x, xx), s.jet(x, xx));
        }
    }

    #[test]
    fn cubic_perturbation_keeps_twist() {
        let p = patch(0.2);
        let s0 = GeneratingFunction::from_fn(p, 15, |x, xx| (xx - x).powi(2) / 2.0).unwrap();
        let s1 = GeneratingFunction::from_fn(p, 15, |x, xx| (xx - x).powi(2) / 2.0 + 0.01 * (xx - x).powi(3)).unwrap();
        let b = blend_generating(&s0, &s1, 0.2).unwrap();
        assert!((b.twist_bound() / s0.twist_bound() - 1.0).abs() < 0.1);
        let j = b.jet(0.02, -0.01);
        assert_eq!(j, s1.jet(0.02, -0.01));
    }

    #[test]
    fn far_apart_functions_lose_twist() {
        let p = patch(0.2);
        let s0 = GeneratingFunction::from_fn(p, 15, |x, xx| (xx - x).powi(2) / 2.0).unwrap();
        let s1 = GeneratingFunction::from_fn(p, 15, |x, xx| -(xx - x).powi(2) / 2.0).unwrap();
        assert!(matches!(blend_generating(&s0, &s1, 0.2), Err(Error::TwistLost(_))));
    }

    #[test]
    fn blend_radius_checked() {
        let p = patch(0.1);
        let s0 = GeneratingFunction::from_fn(p, 11, |x, xx| (xx - x).powi(2) / 2.0).unwrap();
        assert!(matches!(blend_generating(&s0, &s0, 0.2), Err(Error::InvalidParameter(_))));
        let q = GeneratingFunction::from_fn(patch(0.2), 11, |x, xx| (xx - x).powi(2) / 2.0).unwrap();
        assert!(matches!(blend_generating(&s0, &q, 0.1), Err(Error::SpecMismatch)));
    }

    #[test]
    fn point_outside_chart_is_newton_failure() {
        let s = GeneratingFunction::from_fn(patch(0.1), 11, |x, xx| (xx - x).powi(2) / 2.0).unwrap();
        assert!(matches!(s.map_point(0.1, 0.1), Err(Error::NewtonFailure(_))));
    }
}
