//! Small iterative linear-algebra helpers shared by the solvers.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) struct CgOutcome {
    pub x: Vec<f64>,
    pub converged: bool,
}

/// Conjugate gradients for a symmetric positive (semi-)definite operator.
///
/// `project` is applied to every residual; pass the orthogonal projector onto
/// the range when the operator has a known null space.
pub(crate) fn cg(
    b: &[f64],
    tol_rel: f64,
    max_iter: usize,
    mut apply: impl FnMut(&[f64], &mut [f64]),
    project: impl Fn(&mut [f64]),
) -> CgOutcome {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    project(&mut r);
    let b_norm = norm2(&r);
    if b_norm == 0.0 {
        return CgOutcome { x, converged: true };
    }
    let mut d = r.clone();
    let mut q = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        apply(&d, &mut q);
        let dq = dot(&d, &q);
        if !(dq > 0.0) {
            return CgOutcome { x, converged: false };
        }
        let alpha = rr / dq;
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * q[i];
        }
        project(&mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol_rel * b_norm {
            return CgOutcome { x, converged: true };
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            d[i] = r[i] + beta * d[i];
        }
    }
    CgOutcome { x, converged: false }
}

/// Disjoint-set forest with path halving.
pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    pub fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    /// Dense component labels `0..k` in order of first appearance.
    pub fn labels(&mut self) -> (Vec<usize>, usize) {
        let n = self.parent.len();
        let mut map = vec![usize::MAX; n];
        let mut out = vec![0; n];
        let mut k = 0;
        for i in 0..n {
            let r = self.find(i);
            if map[r] == usize::MAX {
                map[r] = k;
                k += 1;
            }
            out[i] = map[r];
        }
        (out, k)
    }
}
