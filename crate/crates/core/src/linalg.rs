//! Sparse symmetric matrices and SPD solvers.
//!
//! Two routes are available: an envelope (skyline) Cholesky factorization on
//! a reverse Cuthill–McKee ordering, and Jacobi-preconditioned conjugate
//! gradients. Mesh Laplacians have small envelopes after RCM, so the direct
//! route is the default.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("conjugate gradients did not converge: relative residual {residual:e} after {iterations} iterations")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles an `n × n` matrix from triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }
}

/// Which SPD solver backs a linear solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Cholesky,
    ConjugateGradient { tolerance: f64, max_iterations: usize },
}

impl Default for SolverKind {
    fn default() -> Self {
        SolverKind::Cholesky
    }
}

/// A prepared solver for one SPD matrix.
pub enum SpdSolver {
    Cholesky(SkylineCholesky),
    Cg { matrix: CsrMatrix, tolerance: f64, max_iterations: usize },
}

impl SpdSolver {
    pub fn new(matrix: CsrMatrix, kind: SolverKind) -> Result<Self, LinalgError> {
        match kind {
            SolverKind::Cholesky => Ok(Self::Cholesky(SkylineCholesky::factor(&matrix)?)),
            SolverKind::ConjugateGradient { tolerance, max_iterations } => {
                Ok(Self::Cg { matrix, tolerance, max_iterations })
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        match self {
            Self::Cholesky(c) => Ok(c.solve(b)),
            Self::Cg { matrix, tolerance, max_iterations } => {
                conjugate_gradient(matrix, b, *tolerance, *max_iterations)
            }
        }
    }
}

/// Reverse Cuthill–McKee ordering: `perm[k]` is the original row placed at `k`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n;
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        // start each component at a minimum-degree vertex
        let start = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)).unwrap();
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a.row(v).map(|(j, _)| j).filter(|&j| !visited[j]).collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope Cholesky factor `P A Pᵀ = L Lᵀ`.
pub struct SkylineCholesky {
    n: usize,
    perm: Vec<usize>,
    /// First stored column of each row of `L`.
    first: Vec<usize>,
    /// Offset of row `i`'s first stored entry in `data`.
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let n = a.n;
        let perm = rcm_ordering(a);
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (i, &row) in perm.iter().enumerate() {
            for (j, _) in a.row(row) {
                let pj = inv[j];
                if pj < first[i] {
                    first[i] = pj;
                }
            }
        }
        let mut offset = Vec::with_capacity(n + 1);
        let mut total = 0;
        for i in 0..n {
            offset.push(total);
            total += i - first[i] + 1;
        }
        offset.push(total);
        let mut data = vec![0.0; total];
        for (i, &row) in perm.iter().enumerate() {
            for (j, v) in a.row(row) {
                let pj = inv[j];
                if pj <= i {
                    data[offset[i] + pj - first[i]] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let ri = offset[i] - fi;
                let rj = offset[j] - fj;
                let mut s = data[ri + j];
                for k in k0..j {
                    s -= data[ri + k] * data[rj + k];
                }
                if j < i {
                    data[ri + j] = s / data[rj + j];
                } else {
                    if !(s > 0.0) {
                        return Err(LinalgError::NotPositiveDefinite { row: perm[i], pivot: s });
                    }
                    data[ri + i] = s.sqrt();
                }
            }
        }
        Ok(Self { n, perm, first, offset, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        // forward: L y = Pb
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.offset[i] - fi;
            let mut s = y[i];
            for k in fi..i {
                s -= self.data[ri + k] * y[k];
            }
            y[i] = s / self.data[ri + i];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let fi = self.first[i];
            let ri = self.offset[i] - fi;
            y[i] /= self.data[ri + i];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.data[ri + k] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

/// Jacobi-preconditioned conjugate gradients, stopping at `‖r‖ ≤ tol·‖b‖`.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_iterations: usize,
) -> Result<Vec<f64>, LinalgError> {
    let n = a.n;
    if b.len() != n {
        return Err(LinalgError::Dimension { expected: n, found: b.len() });
    }
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = 1.0;
    for it in 0..max_iterations {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(LinalgError::NotPositiveDefinite { row: it, pivot: pap });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r) / bnorm;
        if res <= tol {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(LinalgError::NoConvergence { iterations: max_iterations, residual: res })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
