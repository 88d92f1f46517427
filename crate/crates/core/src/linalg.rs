//! Sparse CSR matrices, preconditioned conjugate gradients and dense Cholesky.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds from (row, col, value) triplets. Duplicates are summed in input
    /// order, so the result is reproducible for a fixed triplet sequence.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(r, c, v) in triplets {
            cols[fill[r]] = c;
            vals[fill[r]] = v;
            fill[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for i in 0..nrows {
            order.clear();
            order.extend(counts[i]..counts[i + 1]);
            // stable sort keeps input order among equal columns
            order.sort_by_key(|&k| cols[k]);
            for &k in &order {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == cols[k] {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    col_idx.push(cols[k]);
                    values.push(vals[k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(T::zero())
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            let mut s = T::zero();
            for (&j, &a) in c.iter().zip(v) {
                s += a * x[j];
            }
            *yi = s;
        }
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        dot(x, &self.mul_vec(y))
    }

    /// Principal submatrix on the given (ascending) index set.
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.ncols];
        for (k, &i) in keep.iter().enumerate() {
            map[i] = k;
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &i in keep {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                if map[j] != usize::MAX {
                    col_idx.push(map[j]);
                    values.push(a);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows: keep.len(), ncols: keep.len(), row_ptr, col_idx, values }
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        (0..self.nrows).all(|i| {
            let (c, v) = self.row(i);
            c.iter().zip(v).all(|(&j, &a)| (a - self.get(j, i)).abs() <= tol * (T::one() + a.abs()))
        })
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Incomplete Cholesky factor with the sparsity of the lower triangle of `A`.
struct IncompleteCholesky<T> {
    n: usize,
    // row-wise strictly lower part and diagonal
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
    diag: Vec<T>,
}

impl<T: Real> IncompleteCholesky<T> {
    fn new(a: &CsrMatrix<T>, shift: T) -> Option<Self> {
        let n = a.nrows;
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values: Vec<T> = Vec::new();
        let mut diag = vec![T::zero(); n];
        for i in 0..n {
            let (c, v) = a.row(i);
            let start = col_idx.len();
            for (&j, &x) in c.iter().zip(v) {
                if j < i {
                    col_idx.push(j);
                    values.push(x);
                }
            }
            let end = col_idx.len();
            for p in start..end {
                let k = col_idx[p];
                // sparse dot of rows i and k over columns < k
                let (mut s, mut q) = (values[p], row_ptr[k]);
                let qe = row_ptr[k + 1];
                for r in start..p {
                    let j = col_idx[r];
                    while q < qe && col_idx[q] < j {
                        q += 1;
                    }
                    if q < qe && col_idx[q] == j {
                        s -= values[r] * values[q];
                    }
                }
                values[p] = s / diag[k];
            }
            let mut d = a.get(i, i) * (T::one() + shift);
            for &l in &values[start..end] {
                d -= l * l;
            }
            if !(d > T::zero()) {
                return None;
            }
            diag[i] = d.sqrt();
            row_ptr.push(end);
        }
        Some(Self { n, row_ptr, col_idx, values, diag })
    }

    fn apply(&self, r: &[T], z: &mut [T]) {
        // forward solve L y = r
        for i in 0..self.n {
            let mut s = r[i];
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s -= self.values[p] * z[self.col_idx[p]];
            }
            z[i] = s / self.diag[i];
        }
        // backward solve L^T z = y
        for i in (0..self.n).rev() {
            z[i] /= self.diag[i];
            let zi = z[i];
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                z[self.col_idx[p]] -= self.values[p] * zi;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveInfo {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradients with an incomplete Cholesky preconditioner.
///
/// If the factorization breaks down the diagonal is shifted and the
/// factorization retried.
pub fn solve_spd<T: Real>(a: &CsrMatrix<T>, b: &[T], tol: T) -> Result<(Vec<T>, SolveInfo), SolverError> {
    let n = a.nrows;
    if b.len() != n {
        return Err(SolverError::Dimension { expected: n, got: b.len() });
    }
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        return Ok((vec![T::zero(); n], SolveInfo { iterations: 0, relative_residual: 0.0 }));
    }
    let mut shift = T::zero();
    let pc = loop {
        if let Some(pc) = IncompleteCholesky::new(a, shift) {
            break pc;
        }
        shift = if shift == T::zero() { T::of(1e-3) } else { shift * T::of(2.0) };
        if shift > T::one() {
            return Err(SolverError::NotPositiveDefinite { pivot: 0, value: 0.0 });
        }
    };
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut z = vec![T::zero(); n];
    pc.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    let max_iter = 20 * n + 100;
    let mut res = T::one();
    for it in 0..max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(SolverError::NotPositiveDefinite { pivot: it, value: pap.as_f64() });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm2(&r) / bnorm;
        if res <= tol {
            // confirm with the true residual
            let ax = a.mul_vec(&x);
            let true_res = norm2(&ax.iter().zip(b).map(|(&u, &v)| v - u).collect::<Vec<_>>()) / bnorm;
            if true_res <= tol * T::of(10.0) {
                return Ok((x, SolveInfo { iterations: it + 1, relative_residual: true_res.as_f64() }));
            }
            r = ax.iter().zip(b).map(|(&u, &v)| v - u).collect();
        }
        pc.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(SolverError::NotConverged { iterations: max_iter, residual: res.as_f64() })
}

/// Dense symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.data[i * self.n + j]
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n).map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], x)).collect()
    }

    pub fn add_sparse(&mut self, a: &CsrMatrix<T>, scale: T) {
        for i in 0..a.nrows {
            let (c, v) = a.row(i);
            for (&j, &x) in c.iter().zip(v) {
                *self.at_mut(i, j) += scale * x;
            }
        }
    }

    /// In-place Cholesky factorization; the lower triangle holds `L` afterwards.
    pub fn cholesky(mut self) -> Result<Cholesky<T>, SolverError> {
        let n = self.n;
        for j in 0..n {
            let mut d = self.at(j, j);
            for k in 0..j {
                d -= self.at(j, k) * self.at(j, k);
            }
            if !(d > T::zero()) {
                return Err(SolverError::NotPositiveDefinite { pivot: j, value: d.as_f64() });
            }
            let d = d.sqrt();
            *self.at_mut(j, j) = d;
            for i in (j + 1)..n {
                let mut s = self.at(i, j);
                let (ri, rj) = (i * n, j * n);
                for k in 0..j {
                    s -= self.data[ri + k] * self.data[rj + k];
                }
                *self.at_mut(i, j) = s / d;
            }
        }
        Ok(Cholesky { l: self })
    }
}

pub struct Cholesky<T> {
    l: DenseMatrix<T>,
}

impl<T: Real> Cholesky<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l.at(i, k) * y[k];
            }
            y[i] = s / self.l.at(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l.at(k, i) * y[k];
            }
            y[i] = s / self.l.at(i, i);
        }
        y
    }

    /// `b^T A^{-1} b`, computed as `|L^{-1} b|^2`.
    pub fn inverse_quadratic_form(&self, b: &[T]) -> T {
        let n = self.l.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l.at(i, k) * y[k];
            }
            y[i] = s / self.l.at(i, i);
        }
        dot(&y, &y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 0, 2.0), (0, 1, 3.0), (1, 1, 1.0)]);
        assert_eq!(a.get(0, 1), 4.0);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.mul_vec(&[1.0, 1.0]), vec![6.0, 1.0]);
    }

    #[test]
    fn pcg_solves_tridiagonal_system() {
        let n = 200;
        let a = laplacian_1d(n);
        // manufactured: x_i = sin(i), b = A x
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = a.mul_vec(&x);
        let (sol, info) = solve_spd(&a, &b, 1e-12).unwrap();
        assert!(info.relative_residual <= 1e-11);
        for i in 0..n {
            assert!((sol[i] - x[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn dense_cholesky_matches_sparse_solve() {
        let n = 30;
        let a = laplacian_1d(n);
        let mut d = DenseMatrix::zeros(n);
        d.add_sparse(&a, 1.0);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let ch = d.clone().cholesky().unwrap();
        let x = ch.solve(&b);
        let (y, _) = solve_spd(&a, &b, 1e-14).unwrap();
        for i in 0..n {
            assert!((x[i] - y[i]).abs() < 1e-9 * (1.0 + y[i].abs()));
        }
        let q = ch.inverse_quadratic_form(&b);
        assert!((q - dot(&b, &x)).abs() < 1e-9 * q);
        let mut bad = DenseMatrix::<f64>::zeros(2);
        *bad.at_mut(0, 0) = -1.0;
        assert!(bad.cholesky().is_err());
    }

    #[test]
    fn submatrix_extracts_principal_block() {
        let a = laplacian_1d(5);
        let s = a.submatrix(&[1, 2, 3]);
        assert_eq!(s.nrows, 3);
        assert_eq!(s.get(0, 0), 2.0);
        assert_eq!(s.get(0, 1), -1.0);
        assert!(s.is_symmetric(0.0));
    }
}
