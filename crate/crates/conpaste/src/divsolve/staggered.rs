//! Staggered (face-centred) divergence on a node subset and the
//! minimum-H¹ constrained solve built on it.
//!
//! Component `a` of a vector field at node `i` is read as the value on the
//! face between `i` and `i + e_a`. The divergence at node `i` is
//! `Σ_a (v_a(i) - v_a(i - e_a)) / h_a`, so summing it over any node set
//! telescopes to the flux through the set's boundary faces.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::linalg::{cg, dot, norm_inf, UnionFind};

const NONE: usize = usize::MAX;

/// Staggered divergence of a whole-torus field.
pub fn staggered_divergence(v: &VectorField) -> ScalarField {
    let spec = v.spec();
    let mut out = vec![0.0; spec.len()];
    for a in 0..spec.dim() {
        let c = v.comp(a);
        let ih = 1.0 / spec.h(a);
        for i in 0..spec.len() {
            out[i] += (c[i] - c[spec.shift(i, a, -1)]) * ih;
        }
    }
    ScalarField::from_vec_unchecked(spec.clone(), out)
}

/// The discrete constrained problem on a node set `Ω` with a chosen set of
/// free faces. All other faces are held at zero.
#[derive(Clone, Debug)]
pub struct StaggeredSystem {
    spec: GridSpec,
    /// `(axis, node)` of each free face; the face joins `node` and `node + e_axis`.
    faces: Vec<(usize, usize)>,
    face_id: Vec<Vec<usize>>,
    /// Constraint nodes (Ω) and their ids.
    nodes: Vec<usize>,
    node_id: Vec<usize>,
    /// Free-face-connected component of each constraint node.
    comp: Vec<usize>,
    comp_size: Vec<usize>,
    /// Neighbouring free faces of the same axis, `2·dim` slots per face.
    nbr: Vec<usize>,
}

impl StaggeredSystem {
    /// Faces are free when both end nodes lie in `omega`.
    pub fn standard(spec: &GridSpec, omega: &[bool]) -> Self {
        let free: Vec<Vec<bool>> = (0..spec.dim())
            .map(|a| (0..spec.len()).map(|i| omega[i] && omega[spec.shift(i, a, 1)]).collect())
            .collect();
        Self::with_faces(spec, omega, &free)
    }

    /// `free[a][i]` marks the face between `i` and `i + e_a` as an unknown.
    /// Both end nodes of a free face must lie in `omega`.
    pub fn with_faces(spec: &GridSpec, omega: &[bool], free: &[Vec<bool>]) -> Self {
        let d = spec.dim();
        let mut face_id = vec![vec![NONE; spec.len()]; d];
        let mut faces = Vec::new();
        for a in 0..d {
            for i in 0..spec.len() {
                if free[a][i] {
                    debug_assert!(omega[i] && omega[spec.shift(i, a, 1)]);
                    face_id[a][i] = faces.len();
                    faces.push((a, i));
                }
            }
        }
        let nodes: Vec<usize> = (0..spec.len()).filter(|&i| omega[i]).collect();
        let mut node_id = vec![NONE; spec.len()];
        for (k, &i) in nodes.iter().enumerate() {
            node_id[i] = k;
        }
        let mut uf = UnionFind::new(nodes.len());
        for &(a, i) in &faces {
            uf.union(node_id[i], node_id[spec.shift(i, a, 1)]);
        }
        let (comp, ncomp) = uf.labels();
        let mut comp_size = vec![0; ncomp];
        for &c in &comp {
            comp_size[c] += 1;
        }
        let mut nbr = vec![NONE; faces.len() * 2 * d];
        for (f, &(a, i)) in faces.iter().enumerate() {
            for b in 0..d {
                nbr[f * 2 * d + 2 * b] = face_id[a][spec.shift(i, b, 1)];
                nbr[f * 2 * d + 2 * b + 1] = face_id[a][spec.shift(i, b, -1)];
            }
        }
        StaggeredSystem { spec: spec.clone(), faces, face_id, nodes, node_id, comp, comp_size, nbr }
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn component_count(&self) -> usize {
        self.comp_size.len()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Constraint nodes touched by at least one free face.
    pub fn active_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.spec.len()];
        for &(a, i) in &self.faces {
            m[i] = true;
            m[self.spec.shift(i, a, 1)] = true;
        }
        m
    }

    /// Discrete divergence `B v` on the constraint nodes.
    pub fn div(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (f, &(a, i)) in self.faces.iter().enumerate() {
            let w = v[f] / self.spec.h(a);
            out[self.node_id[i]] += w;
            out[self.node_id[self.spec.shift(i, a, 1)]] -= w;
        }
    }

    /// Adjoint `Bᵀ p` on the free faces.
    pub fn div_t(&self, p: &[f64], out: &mut [f64]) {
        for (f, &(a, i)) in self.faces.iter().enumerate() {
            out[f] = (p[self.node_id[i]] - p[self.node_id[self.spec.shift(i, a, 1)]]) / self.spec.h(a);
        }
    }

    /// Dirichlet face Laplacian `A v` (H¹ seminorm Gram operator).
    fn lap(&self, v: &[f64], out: &mut [f64]) {
        let d = self.spec.dim();
        for f in 0..self.faces.len() {
            let mut s = 0.0;
            for b in 0..d {
                let ih2 = 1.0 / (self.spec.h(b) * self.spec.h(b));
                let p = self.nbr[f * 2 * d + 2 * b];
                let m = self.nbr[f * 2 * d + 2 * b + 1];
                let vp = if p == NONE { 0.0 } else { v[p] };
                let vm = if m == NONE { 0.0 } else { v[m] };
                s += (2.0 * v[f] - vp - vm) * ih2;
            }
            out[f] = s;
        }
    }

    /// Removes the mean of `p` on every free-face component.
    pub fn project(&self, p: &mut [f64]) {
        let mut sums = vec![0.0; self.comp_size.len()];
        for (k, &c) in self.comp.iter().enumerate() {
            sums[c] += p[k];
        }
        for (k, &c) in self.comp.iter().enumerate() {
            p[k] -= sums[c] / self.comp_size[c] as f64;
        }
    }

    /// `h^n`-weighted sums of `g` (on constraint nodes) per component.
    pub fn component_integrals(&self, g: &[f64]) -> Vec<f64> {
        let w = self.spec.cell_volume();
        let mut sums = vec![0.0; self.comp_size.len()];
        for (k, &c) in self.comp.iter().enumerate() {
            sums[c] += w * g[k];
        }
        sums
    }

    pub fn gather_nodes(&self, field: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&i| field[i]).collect()
    }

    /// Face unknowns scattered into a zero-extended vector field.
    pub fn scatter_faces(&self, v: &[f64]) -> VectorField {
        let mut comps = vec![vec![0.0; self.spec.len()]; self.spec.dim()];
        for (f, &(a, i)) in self.faces.iter().enumerate() {
            comps[a][i] = v[f];
        }
        VectorField::from_vecs_unchecked(self.spec.clone(), comps)
    }

    pub fn gather_faces(&self, v: &VectorField) -> Vec<f64> {
        self.faces.iter().map(|&(a, i)| v.comp(a)[i]).collect()
    }

    pub fn face_id(&self, axis: usize, node: usize) -> Option<usize> {
        let f = self.face_id[axis][node];
        (f != NONE).then_some(f)
    }

    fn solve_a(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let out = cg(rhs, 1e-13, 20 * self.faces.len().max(10), |x, y| self.lap(x, y), |_| {});
        if !out.converged {
            return Err(Error::SolverFailure("face Laplacian solve did not converge".into()));
        }
        Ok(out.x)
    }

    /// Minimum-H¹ face field with `B v = g`, for `g` given on the constraint
    /// nodes and already compatible on every component.
    ///
    /// Uzawa conjugate gradients on `B A⁻¹ Bᵀ λ = g`, accumulating
    /// `v = A⁻¹ Bᵀ λ`, followed by a feasibility projection
    /// `v += Bᵀ (B Bᵀ)⁻¹ (g - B v)`.
    pub fn solve_min_h1(&self, g: &[f64], tol_rel: f64) -> Result<Vec<f64>> {
        let nf = self.faces.len();
        let nn = self.nodes.len();
        let mut v = vec![0.0; nf];
        let mut r = g.to_vec();
        self.project(&mut r);
        let g_inf = norm_inf(&r);
        if g_inf == 0.0 {
            return Ok(v);
        }
        if nf == 0 {
            return Err(Error::RegionTooTight("no free faces inside Ω".into()));
        }
        let max_iter = 10 * nf;
        let mut bt = vec![0.0; nf];
        let mut sd = vec![0.0; nn];
        let mut d = r.clone();
        self.div_t(&d, &mut bt);
        let mut w = self.solve_a(&bt)?;
        let mut rr = dot(&r, &r);
        let mut converged = false;
        let mut best = f64::INFINITY;
        let mut since_best = 0;
        for _ in 0..max_iter {
            self.div(&w, &mut sd);
            let dsd = dot(&d, &sd);
            if !(dsd > 0.0) {
                break;
            }
            let alpha = rr / dsd;
            for f in 0..nf {
                v[f] += alpha * w[f];
            }
            for k in 0..nn {
                r[k] -= alpha * sd[k];
            }
            self.project(&mut r);
            let rinf = norm_inf(&r);
            if rinf <= tol_rel * g_inf {
                converged = true;
                break;
            }
            if rinf < 0.5 * best {
                best = rinf;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > 200 {
                    break;
                }
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            self.div_t(&r, &mut bt);
            let ar = self.solve_a(&bt)?;
            for k in 0..nn {
                d[k] = r[k] + beta * d[k];
            }
            for f in 0..nf {
                w[f] = ar[f] + beta * w[f];
            }
        }
        if !converged {
            return Err(Error::SolverFailure("constrained divergence solve stagnated".into()));
        }
        self.polish(g, &mut v)?;
        Ok(v)
    }

    /// Drives `B v - g` to round-off by a correction in the range of `Bᵀ`.
    pub fn polish(&self, g: &[f64], v: &mut [f64]) -> Result<()> {
        let nn = self.nodes.len();
        let nf = self.faces.len();
        let mut bv = vec![0.0; nn];
        let mut tmp = vec![0.0; nf];
        for _ in 0..3 {
            self.div(v, &mut bv);
            let mut res: Vec<f64> = g.iter().zip(&bv).map(|(a, b)| a - b).collect();
            self.project(&mut res);
            if norm_inf(&res) <= 1e-15 * norm_inf(g).max(1e-300) {
                break;
            }
            let out = cg(
                &res,
                1e-14,
                20 * nn.max(10),
                |x, y| {
                    self.div_t(x, &mut tmp);
                    self.div(&tmp, y);
                },
                |p| self.project(p),
            );
            let mut corr = vec![0.0; nf];
            self.div_t(&out.x, &mut corr);
            for f in 0..nf {
                v[f] += corr[f];
            }
        }
        Ok(())
    }
}
