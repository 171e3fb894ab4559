//! The Jacobian determinant equation `g(u(x)) det ∇u(x) = λ f(x)` solved by
//! the contraction `v ← L(λf/g∘u - 1 - Q(∇v))`, `u = id + v`, where `L` is a
//! right inverse of the divergence.
//!
//! On the torus `L` is the spectral gradient of the inverse Laplacian and all
//! derivatives are spectral. On a bounded Ω (2D only) the displacement lives
//! on staggered faces, `L` is the constrained minimum-H¹ solve and the
//! Jacobian uses one-sided face differences chosen so that `Q` sums to zero
//! exactly; `v` is then zero off Ω bit for bit.

use crate::divsolve::{solve_divergence_torus, solve_on_system, StaggeredSystem};
use crate::error::{Error, Result};
use crate::grid::{integrate, interp_cubic, jacobian, GridMap, GridSpec, ScalarField, VectorField};
use crate::regions::RegionSet;
use serde::Serialize;

/// Largest admissible `‖λf/g - 1‖_{C⁰}`.
pub const SMALLNESS_LIMIT: f64 = 0.25;
/// Minimum per-iteration residual decrease factor.
pub const MIN_DECREASE: f64 = 1.2;
/// Consecutive slow iterations tolerated before giving up.
pub const SLOW_LIMIT: usize = 3;
/// Displacement bound keeping `u` a well-defined torus map.
pub const INJECTIVITY_MARGIN: f64 = 0.25;

/// `det(I + ζ) - 1 - tr ζ` for a `dim × dim` matrix stored in the top-left
/// block of `z`.
pub fn q_of(z: &[[f64; 3]; 3], dim: usize) -> f64 {
    match dim {
        1 => 0.0,
        2 => z[0][0] * z[1][1] - z[0][1] * z[1][0],
        _ => {
            let m = |a: usize, b: usize| z[a][b];
            let minors = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0) + m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)
                + m(1, 1) * m(2, 2)
                - m(1, 2) * m(2, 1);
            let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
                - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
            minors + det
        }
    }
}

#[derive(Clone, Debug)]
enum Domain {
    Torus,
    /// Effective constraint nodes and the system built on them.
    Bounded { mask: Vec<bool>, sys: Box<StaggeredSystem> },
}

/// Data of one Jacobian equation.
#[derive(Clone, Debug)]
pub struct MoserProblem {
    f: ScalarField,
    g: ScalarField,
    domain: Domain,
    lambda: f64,
}

impl MoserProblem {
    /// Whole-torus problem with `λ = ∫g / ∫f`.
    pub fn on_torus(f: ScalarField, g: ScalarField) -> Result<Self> {
        let mask = vec![true; f.spec().len()];
        Self::build(f, g, Domain::Torus, &mask)
    }

    /// Problem on the annulus Ω of `rs`.
    pub fn on_region(f: ScalarField, g: ScalarField, rs: &RegionSet) -> Result<Self> {
        f.spec().check_same(rs.spec())?;
        Self::on_mask(f, g, &rs.omega_mask())
    }

    /// Problem on an arbitrary node set of a 2D grid. The set is trimmed to
    /// the nodes the staggered unknowns can reach; see [`MoserProblem::domain_mask`].
    pub fn on_mask(f: ScalarField, g: ScalarField, omega: &[bool]) -> Result<Self> {
        let spec = f.spec().clone();
        if spec.dim() != 2 {
            return Err(Error::InvalidParameter("bounded Jacobian solves are two-dimensional".into()));
        }
        if omega.len() != spec.len() {
            return Err(Error::InvalidRegion("mask length differs from the grid".into()));
        }
        let (mask, sys) = bounded_system(&spec, omega);
        if sys.face_count() == 0 {
            return Err(Error::RegionTooTight("Ω admits no staggered unknowns".into()));
        }
        Self::build(f, g, Domain::Bounded { mask: mask.clone(), sys: Box::new(sys) }, &mask)
    }

    fn build(f: ScalarField, g: ScalarField, domain: Domain, mask: &[bool]) -> Result<Self> {
        f.spec().check_same(g.spec())?;
        f.check_finite()?;
        g.check_finite()?;
        for (name, s) in [("f", &f), ("g", &g)] {
            if s.values().iter().zip(mask).any(|(&v, &b)| b && !(v > 0.0)) {
                return Err(Error::InvalidField(format!("{name} must be positive on the domain")));
            }
        }
        let lambda = integrate(&g, Some(mask))? / integrate(&f, Some(mask))?;
        Ok(MoserProblem { f, g, domain, lambda })
    }

    /// Replaces `λ`; solving then checks it against `∫g/∫f`.
    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn g(&self) -> &ScalarField {
        &self.g
    }

    pub fn spec(&self) -> &GridSpec {
        self.f.spec()
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.domain, Domain::Torus)
    }

    /// Nodes on which the equation is imposed.
    pub fn domain_mask(&self) -> Vec<bool> {
        match &self.domain {
            Domain::Torus => vec![true; self.spec().len()],
            Domain::Bounded { mask, .. } => mask.clone(),
        }
    }

    /// `sup |λf/g - 1|` over the domain.
    pub fn smallness(&self) -> f64 {
        let mask = self.domain_mask();
        let (f, g) = (self.f.values(), self.g.values());
        (0..f.len()).filter(|&i| mask[i]).map(|i| (self.lambda * f[i] / g[i] - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Restricted free faces and the trimmed node set: `v1(i)` is free when
/// `i, i+e1, i+e2 ∈ Ω`, `v2(j)` when `j, j+e2 ∈ Ω`, and Ω keeps only nodes
/// touched by a free face. A node outside the set then has no free face in
/// its divergence and `G12 = 0`, so its determinant is exactly 1.
fn bounded_system(spec: &GridSpec, omega: &[bool]) -> (Vec<bool>, StaggeredSystem) {
    let mut om = omega.to_vec();
    loop {
        let n = spec.len();
        let f1: Vec<bool> = (0..n).map(|i| om[i] && om[spec.shift(i, 0, 1)] && om[spec.shift(i, 1, 1)]).collect();
        let f2: Vec<bool> = (0..n).map(|j| om[j] && om[spec.shift(j, 1, 1)]).collect();
        let mut touched = vec![false; n];
        for i in 0..n {
            if f1[i] {
                touched[i] = true;
                touched[spec.shift(i, 0, 1)] = true;
            }
            if f2[i] {
                touched[i] = true;
                touched[spec.shift(i, 1, 1)] = true;
            }
        }
        let next: Vec<bool> = om.iter().zip(&touched).map(|(&a, &b)| a && b).collect();
        if next == om {
            let sys = StaggeredSystem::with_faces(spec, &om, &[f1, f2]);
            return (om, sys);
        }
        om = next;
    }
}

/// Entries `G[a][b]` of the staggered displacement gradient at every node.
fn staggered_gradient(v: &VectorField) -> [[Vec<f64>; 2]; 2] {
    let spec = v.spec();
    let (v1, v2) = (v.comp(0), v.comp(1));
    let (h0, h1) = (spec.h(0), spec.h(1));
    let n = spec.len();
    let mut g = [[vec![0.0; n], vec![0.0; n]], [vec![0.0; n], vec![0.0; n]]];
    for i in 0..n {
        let im0 = spec.shift(i, 0, -1);
        let im1 = spec.shift(i, 1, -1);
        g[0][0][i] = (v1[i] - v1[im0]) / h0;
        g[0][1][i] = (v1[i] - v1[im1]) / h1;
        g[1][1][i] = (v2[i] - v2[im1]) / h1;
        g[1][0][i] = (v2[spec.offset(i, &[1, -1])] - v2[im1]) / h0;
    }
    g
}

/// Determinant of `I + G` for a staggered displacement.
pub fn staggered_det(v: &VectorField) -> Result<ScalarField> {
    if v.dim() != 2 {
        return Err(Error::InvalidParameter("staggered Jacobian is two-dimensional".into()));
    }
    let g = staggered_gradient(v);
    let d = (0..v.spec().len())
        .map(|i| (1.0 + g[0][0][i]) * (1.0 + g[1][1][i]) - g[0][1][i] * g[1][0][i])
        .collect();
    ScalarField::new(v.spec().clone(), d)
}

/// Node positions implied by a staggered displacement (face averages).
fn staggered_node_displacement(v: &VectorField, i: usize) -> [f64; 3] {
    let spec = v.spec();
    [
        0.5 * (v.comp(0)[i] + v.comp(0)[spec.shift(i, 0, -1)]),
        0.5 * (v.comp(1)[i] + v.comp(1)[spec.shift(i, 1, -1)]),
        0.0,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationTrace {
    /// `sup |det ∇u - λf/g∘u|` over the domain, one entry per iterate.
    pub residuals: Vec<f64>,
    /// `residuals[k] / residuals[k-1]`; empty slot for the first iterate.
    pub ratios: Vec<Option<f64>>,
    pub status: String,
    pub lambda: f64,
    /// `sup |λf/g - 1|` at the start.
    pub smallness: f64,
    pub smallness_limit: f64,
    pub domain_nodes: usize,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.residuals.len().saturating_sub(1)
    }

    /// CSV with columns `iter,residual_c0,ratio`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,residual_c0,ratio\n");
        for (k, (r, q)) in self.residuals.iter().zip(&self.ratios).enumerate() {
            match q {
                Some(q) => s.push_str(&format!("{k},{r:e},{q:e}\n")),
                None => s.push_str(&format!("{k},{r:e},\n")),
            }
        }
        s
    }
}

struct State {
    det: Vec<f64>,
    /// `g∘u` on the domain.
    gu: Vec<f64>,
    rhs: Vec<f64>,
    residual: f64,
}

fn is_constant(s: &ScalarField) -> bool {
    let v = s.values();
    v.iter().all(|&x| x == v[0])
}

fn evaluate(p: &MoserProblem, v: &VectorField, mask: &[bool]) -> Result<State> {
    let spec = p.spec();
    let n = spec.len();
    let (det, tr_minus): (Vec<f64>, Vec<f64>) = match &p.domain {
        Domain::Torus => {
            let jac = jacobian(&GridMap::new(v.clone())?)?;
            let d = spec.dim();
            let tr: Vec<f64> = (0..n).map(|i| (0..d).map(|a| jac.entry(a, a)[i] - 1.0).sum()).collect();
            (jac.det().values().to_vec(), tr)
        }
        Domain::Bounded { .. } => {
            let g = staggered_gradient(v);
            let det = (0..n).map(|i| (1.0 + g[0][0][i]) * (1.0 + g[1][1][i]) - g[0][1][i] * g[1][0][i]).collect();
            let tr = (0..n).map(|i| g[0][0][i] + g[1][1][i]).collect();
            (det, tr)
        }
    };
    let g_const = is_constant(&p.g);
    let (f, g) = (p.f.values(), p.g.values());
    let mut rhs = vec![0.0; n];
    let mut gu_all = vec![0.0; n];
    let mut residual: f64 = 0.0;
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        let gu = if g_const {
            g[0]
        } else {
            let x = spec.coord(i);
            let d = match p.domain {
                Domain::Torus => v.at(i),
                Domain::Bounded { .. } => staggered_node_displacement(v, i),
            };
            let y = [x[0] + d[0], x[1] + d[1], x[2] + d[2]];
            interp_cubic(spec, g, &y[..spec.dim()])
        };
        gu_all[i] = gu;
        let target = p.lambda * f[i] / gu;
        rhs[i] = target - 1.0 - (det[i] - 1.0 - tr_minus[i]);
        residual = residual.max((det[i] - target).abs());
    }
    Ok(State { det, gu: gu_all, rhs, residual })
}

fn apply_l(p: &MoserProblem, rhs: Vec<f64>) -> Result<VectorField> {
    let spec = p.spec();
    match &p.domain {
        Domain::Torus => {
            let s = ScalarField::new(spec.clone(), rhs)?;
            let mean = integrate(&s, None)?;
            solve_divergence_torus(&s.map(|x| x - mean))
        }
        Domain::Bounded { sys, .. } => {
            let mut gn = sys.gather_nodes(&rhs);
            sys.project(&mut gn);
            let mut full = vec![0.0; spec.len()];
            for (k, &i) in sys.nodes().iter().enumerate() {
                full[i] = gn[k];
            }
            solve_on_system(&ScalarField::new(spec.clone(), full)?, sys)
        }
    }
}

/// Runs the contraction and returns the map together with the trace, which
/// is filled in even when the solve fails.
pub fn solve_jacobian_eq_traced(p: &MoserProblem, tol: f64, max_iter: usize) -> (Result<GridMap>, IterationTrace) {
    let mask = p.domain_mask();
    let mut trace = IterationTrace {
        residuals: Vec::new(),
        ratios: Vec::new(),
        status: String::new(),
        lambda: p.lambda,
        smallness: p.smallness(),
        smallness_limit: SMALLNESS_LIMIT,
        domain_nodes: mask.iter().filter(|&&b| b).count(),
    };
    let out = run(p, tol, max_iter, &mask, &mut trace);
    trace.status = match &out {
        Ok(_) => "converged".into(),
        Err(e) => e.to_string(),
    };
    (out, trace)
}

fn run(p: &MoserProblem, tol: f64, max_iter: usize, mask: &[bool], trace: &mut IterationTrace) -> Result<GridMap> {
    if !(tol >= 1e-12) {
        return Err(Error::InvalidParameter(format!("tolerance {tol:e} below 1e-12")));
    }
    let expected = integrate(&p.g, Some(mask))? / integrate(&p.f, Some(mask))?;
    if !((p.lambda - expected).abs() <= 1e-10 * expected) {
        return Err(Error::NotCompatible(format!("λ = {} but ∫g/∫f = {expected}", p.lambda)));
    }
    if trace.smallness > SMALLNESS_LIMIT {
        return Err(Error::NoContraction(format!(
            "‖λf/g - 1‖ = {:.3e} exceeds the contraction regime {SMALLNESS_LIMIT}",
            trace.smallness
        )));
    }
    let spec = p.spec();
    let gmax = p.g.values().iter().zip(mask).filter(|(_, &b)| b).map(|(v, _)| *v).fold(0.0, f64::max);
    let stop = tol / gmax.max(1.0);
    let mut v = VectorField::zeros(spec);
    let mut slow = 0;
    for k in 0..=max_iter {
        let st = evaluate(p, &v, mask)?;
        let prev = trace.residuals.last().copied();
        trace.residuals.push(st.residual);
        trace.ratios.push(prev.map(|r| st.residual / r));
        if let Some(i) = (0..spec.len()).find(|&i| !(st.det[i] > 0.0)) {
            return Err(Error::DegenerateMap(format!("det ∇u = {:e} at node {i}", st.det[i])));
        }
        if st.residual <= stop {
            return GridMap::new(v);
        }
        if let Some(r) = prev {
            if r < MIN_DECREASE * st.residual {
                slow += 1;
                if slow >= SLOW_LIMIT {
                    return Err(Error::NoContraction(format!(
                        "residual fell by less than {MIN_DECREASE}x for {SLOW_LIMIT} iterations (now {:e})",
                        st.residual
                    )));
                }
            } else {
                slow = 0;
            }
        }
        if k == max_iter {
            break;
        }
        v = apply_l(p, st.rhs)?;
        if v.max_norm() >= INJECTIVITY_MARGIN {
            return Err(Error::DegenerateMap(format!(
                "displacement {:.3} reached the injectivity margin",
                v.max_norm()
            )));
        }
    }
    Err(Error::NoContraction(format!(
        "residual {:e} above tolerance after {max_iter} iterations",
        trace.residuals.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Solves `g(u) det ∇u = λf` on the problem's domain with `u = id` off it.
pub fn solve_jacobian_eq(p: &MoserProblem, tol: f64, max_iter: usize) -> Result<(GridMap, IterationTrace)> {
    let (u, trace) = solve_jacobian_eq_traced(p, tol, max_iter);
    Ok((u?, trace))
}

/// Pointwise `g(u(x)) det ∇u(x) - λf(x)` on the problem's domain, zero
/// elsewhere. For bounded problems `u` must carry a staggered displacement.
pub fn det_residual(u: &GridMap, p: &MoserProblem) -> Result<ScalarField> {
    u.spec().check_same(p.spec())?;
    let mask = p.domain_mask();
    let st = evaluate(p, u.displacement(), &mask)?;
    let f = p.f.values();
    let spec = p.spec();
    let mut out = vec![0.0; spec.len()];
    for i in 0..spec.len() {
        if mask[i] {
            out[i] = st.gu[i] * st.det[i] - p.lambda * f[i];
        }
    }
    ScalarField::new(spec.clone(), out)
}
