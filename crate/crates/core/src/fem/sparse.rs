//! Compressed sparse row matrices on triangulation patterns and the two
//! Krylov solvers used by the time stepper.

use std::collections::BTreeSet;

use super::FemError;

/// CSR matrix whose sparsity follows the node graph of a triangulation,
/// optionally with `block × block` dense blocks per node pair.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    diag: Vec<usize>,
}

/// Sparsity pattern plus, per triangle, the value slots of its local matrix
/// in row-major order of local dofs (`3·block` of them).
#[derive(Debug, Clone)]
pub struct Pattern {
    pub matrix: Csr,
    pub elem_slots: Vec<Vec<usize>>,
    pub block: usize,
}

impl Pattern {
    pub fn from_triangles(n_nodes: usize, triangles: &[[usize; 3]], block: usize) -> Self {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_nodes];
        for t in triangles {
            for &a in t {
                for &b in t {
                    adj[a].insert(b);
                }
            }
        }
        for (i, s) in adj.iter_mut().enumerate() {
            s.insert(i);
        }
        let n = n_nodes * block;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for set in adj.iter() {
            for _k in 0..block {
                for &j in set {
                    for l in 0..block {
                        cols.push(j * block + l);
                    }
                }
                row_ptr.push(cols.len());
            }
        }
        let vals = vec![0.0; cols.len()];
        let mut matrix = Csr { n, row_ptr, cols, vals, diag: Vec::new() };
        matrix.diag = (0..n).map(|i| matrix.find(i, i).expect("diagonal present")).collect();
        let mut elem_slots = Vec::with_capacity(triangles.len());
        for t in triangles {
            let dofs: Vec<usize> = t.iter().flat_map(|&a| (0..block).map(move |k| a * block + k)).collect();
            let mut slots = Vec::with_capacity(dofs.len() * dofs.len());
            for &r in &dofs {
                for &c in &dofs {
                    slots.push(matrix.find(r, c).expect("element entry present"));
                }
            }
            elem_slots.push(slots);
        }
        Self { matrix, elem_slots, block }
    }
}

impl Csr {
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn diag_slot(&self, i: usize) -> usize {
        self.diag[i]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.diag.iter().map(|&k| self.vals[k]).collect()
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row(i) {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        }
    }

    /// Replaces row `i` by the identity row.
    pub fn set_identity_row(&mut self, i: usize) {
        for k in self.row(i) {
            self.vals[k] = if self.cols[k] == i { 1.0 } else { 0.0 };
        }
    }

    /// Symmetric elimination of a homogeneous Dirichlet dof.
    pub fn eliminate_symmetric(&mut self, i: usize) {
        for k in self.row(i) {
            let j = self.cols[k];
            self.vals[k] = if j == i { 1.0 } else { 0.0 };
            if j != i {
                if let Some(kk) = self.find(j, i) {
                    self.vals[kk] = 0.0;
                }
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inverse_diagonal(a: &Csr) -> Vec<f64> {
    a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect()
}

/// Jacobi-preconditioned conjugate gradients. `x` holds the initial guess
/// and receives the solution; returns the iteration count.
pub fn cg(a: &Csr, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<usize, FemError> {
    let n = a.n;
    let bn = norm(b);
    if bn == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let dinv = inverse_diagonal(a);
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if norm(&r) <= tol * bn {
        return Ok(0);
    }
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(FemError::Solver { solver: "cg", iterations: it, residual: norm(&r) / bn });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= tol * bn {
            return Ok(it);
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(FemError::Solver { solver: "cg", iterations: max_iter, residual: norm(&r) / bn })
}

/// Jacobi-preconditioned BiCGSTAB for the non-symmetric transport systems.
pub fn bicgstab(a: &Csr, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<usize, FemError> {
    let n = a.n;
    let bn = norm(b);
    if bn == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let dinv = inverse_diagonal(a);
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    if norm(&r) <= tol * bn {
        return Ok(0);
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zs = vec![0.0; n];
    let mut t = vec![0.0; n];
    let fail = |it, r: &[f64]| FemError::Solver { solver: "bicgstab", iterations: it, residual: norm(r) / bn };
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return Err(fail(it, &r));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = p[i] * dinv[i];
        }
        a.matvec(&y, &mut v);
        let r0v = dot(&r0, &v);
        if r0v == 0.0 {
            return Err(fail(it, &r));
        }
        alpha = rho / r0v;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= tol * bn {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(it);
        }
        for i in 0..n {
            zs[i] = s[i] * dinv[i];
        }
        a.matvec(&zs, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * zs[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) <= tol * bn {
            return Ok(it);
        }
        if omega == 0.0 {
            return Err(fail(it, &r));
        }
    }
    Err(fail(max_iter, &r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> Csr {
        let tris: Vec<[usize; 3]> = (0..n - 2).map(|i| [i, i + 1, i + 2]).collect();
        let mut p = Pattern::from_triangles(n, &tris, 1).matrix;
        for i in 0..n {
            for k in p.row(i) {
                let j = p.cols[k];
                p.vals[k] = if i == j {
                    2.5
                } else if i.abs_diff(j) == 1 {
                    -1.0
                } else {
                    0.0
                };
            }
        }
        p
    }

    fn dense_solve(a: &Csr, b: &[f64]) -> Vec<f64> {
        let n = a.n;
        let mut m = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            for k in a.row(i) {
                m[i][a.cols[k]] = a.vals[k];
            }
            m[i][n] = b[i];
        }
        for c in 0..n {
            let piv = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
            m.swap(c, piv);
            for r in 0..n {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for k in c..=n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
        (0..n).map(|i| m[i][n] / m[i][i]).collect()
    }

    #[test]
    fn cg_matches_dense() {
        let a = laplacian_1d(30);
        let b: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut x = vec![0.0; 30];
        cg(&a, &b, &mut x, 1e-12, 200).unwrap();
        let e = dense_solve(&a, &b);
        for (u, v) in x.iter().zip(&e) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn bicgstab_matches_dense_nonsymmetric() {
        let mut a = laplacian_1d(25);
        for i in 0..25 {
            if let Some(k) = a.find(i, i + 1) {
                a.vals[k] = -0.4;
            }
        }
        let b: Vec<f64> = (0..25).map(|i| 1.0 + i as f64).collect();
        let mut x = vec![0.0; 25];
        bicgstab(&a, &b, &mut x, 1e-12, 200).unwrap();
        let e = dense_solve(&a, &b);
        for (u, v) in x.iter().zip(&e) {
            assert!((u - v).abs() < 1e-8 * v.abs().max(1.0));
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = laplacian_1d(5);
        let mut x = vec![1.0; 5];
        assert_eq!(cg(&a, &[0.0; 5], &mut x, 1e-8, 10).unwrap(), 0);
        assert_eq!(x, vec![0.0; 5]);
    }

    #[test]
    fn symmetric_elimination_keeps_symmetry() {
        let mut a = laplacian_1d(6);
        a.eliminate_symmetric(2);
        for i in 0..6 {
            for k in a.row(i) {
                let j = a.cols[k];
                assert_eq!(a.vals[k], a.vals[a.find(j, i).unwrap()]);
            }
        }
        assert_eq!(a.vals[a.diag_slot(2)], 1.0);
    }

    #[test]
    fn block_pattern_slots() {
        let p = Pattern::from_triangles(3, &[[0, 1, 2]], 2);
        assert_eq!(p.matrix.n, 6);
        assert_eq!(p.elem_slots[0].len(), 36);
        assert_eq!(p.matrix.vals.len(), 36);
    }
}
