//! Sparse and dense linear algebra helpers shared by the solvers.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Compressed sparse row matrix with `f64` entries.
#[derive(Clone, Debug)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, trip: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in trip {
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; trip.len()];
        let mut vals = vec![0.0; trip.len()];
        for &(r, c, v) in trip {
            let k = next[r];
            cols[k] = c;
            vals[k] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(trip.len());
        let mut data = Vec::with_capacity(trip.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_unstable_by_key(|e| e.0);
            let mut last = usize::MAX;
            for &(c, v) in &row {
                if c == last {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    data.push(v);
                    last = c;
                }
            }
            indptr.push(indices.len());
        }
        Csr { nrows, ncols, indptr, indices, data }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |k| (self.indices[k], self.data[k]))
    }

    pub fn transpose(&self) -> Csr {
        let mut trip = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                trip.push((j, i, v));
            }
        }
        Csr::from_triplets(self.ncols, self.nrows, &trip)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn matvec_c(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| x[j] * v).sum())
            .collect()
    }

    /// y = A x for every column of a dense block.
    pub fn mul_dense(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        assert_eq!(x.nrows(), self.ncols);
        let mut y = Mat::<f64>::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.col(c);
            for i in 0..self.nrows {
                let mut acc = 0.0;
                for (j, v) in self.row(i) {
                    acc += v * xc[j];
                }
                y[(i, c)] = acc;
            }
        }
        y
    }

    /// Sub-matrix with the given rows and columns (column map: old -> new or usize::MAX).
    pub fn select(&self, rows: &[usize], col_map: &[usize], ncols: usize) -> Csr {
        let mut trip = Vec::new();
        for (ni, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                let nj = col_map[j];
                if nj != usize::MAX {
                    trip.push((ni, nj, v));
                }
            }
        }
        Csr::from_triplets(rows.len(), ncols, &trip)
    }

    /// A Aᵀ.
    pub fn gram(&self) -> Csr {
        let t = self.transpose();
        let mut trip = Vec::new();
        let mut acc: Vec<f64> = vec![0.0; self.nrows];
        let mut mark: Vec<usize> = vec![usize::MAX; self.nrows];
        let mut touched = Vec::new();
        for i in 0..self.nrows {
            touched.clear();
            for (k, a) in self.row(i) {
                for (j, b) in t.row(k) {
                    if mark[j] != i {
                        mark[j] = i;
                        acc[j] = 0.0;
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            for &j in &touched {
                trip.push((i, j, acc[j]));
            }
        }
        Csr::from_triplets(self.nrows, self.nrows, &trip)
    }

    /// Aᵀ A.
    pub fn normal(&self) -> Csr {
        self.transpose().gram()
    }

    pub fn add_diagonal(&self, d: &[f64]) -> Csr {
        let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + d.len());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                trip.push((i, j, v));
            }
        }
        for (i, &v) in d.iter().enumerate() {
            if v != 0.0 {
                trip.push((i, i, v));
            }
        }
        Csr::from_triplets(self.nrows, self.ncols, &trip)
    }

    /// Row and column scaling: diag(l) A diag(r).
    pub fn scaled(&self, l: &[f64], r: &[f64]) -> Csr {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in out.indptr[i]..out.indptr[i + 1] {
                out.data[k] *= l[i] * r[out.indices[k]];
            }
        }
        out
    }

    pub fn scale(&self, a: f64) -> Csr {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= a);
        out
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trip: Vec<Triplet<usize, usize, f64>> = (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip)
            .map_err(|e| Error::Linear(format!("sparse assembly: {e:?}")))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sparse direct factorization of a symmetric positive definite matrix, with an
/// LU fallback when the Cholesky factorization breaks down.
pub struct SparseSolver {
    n: usize,
    inner: Factor,
}

enum Factor {
    Llt(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Lu(faer::sparse::linalg::solvers::Lu<usize, f64>),
}

impl SparseSolver {
    pub fn new(a: &Csr) -> Result<Self> {
        assert_eq!(a.nrows, a.ncols);
        let m = a.to_faer()?;
        let inner = match m.sp_cholesky(Side::Lower) {
            Ok(f) => Factor::Llt(f),
            Err(_) => Factor::Lu(
                m.sp_lu()
                    .map_err(|e| Error::Linear(format!("sparse LU: {e:?}")))?,
            ),
        };
        Ok(SparseSolver { n: a.nrows, inner })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self.inner, Factor::Llt(_))
    }

    pub fn solve_in_place(&self, b: &mut Mat<f64>) {
        match &self.inner {
            Factor::Llt(f) => f.solve_in_place(b.as_mut()),
            Factor::Lu(f) => f.solve_in_place(b.as_mut()),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut m = col_mat(b);
        self.solve_in_place(&mut m);
        m.col(0).iter().copied().collect()
    }

    pub fn solve_c(&self, b: &[C64]) -> Vec<C64> {
        let mut m = Mat::<f64>::from_fn(b.len(), 2, |i, j| if j == 0 { b[i].re } else { b[i].im });
        self.solve_in_place(&mut m);
        (0..b.len()).map(|i| C64::new(m[(i, 0)], m[(i, 1)])).collect()
    }

    /// Solve with iterative refinement against the original matrix.
    pub fn solve_refined(&self, a: &Csr, b: &[f64], sweeps: usize) -> Vec<f64> {
        let mut x = self.solve(b);
        for _ in 0..sweeps {
            let ax = a.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            let dx = self.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(p, q)| *p += q);
        }
        x
    }
}

pub fn col_mat(b: &[f64]) -> Mat<f64> {
    Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i])
}

/// Splits complex vectors into a real block [re_0, im_0, re_1, im_1, ...].
pub fn split_complex(cols: &[Vec<C64>]) -> Mat<f64> {
    let n = cols.first().map_or(0, |c| c.len());
    Mat::<f64>::from_fn(n, 2 * cols.len(), |i, j| {
        let z = cols[j / 2][i];
        if j % 2 == 0 {
            z.re
        } else {
            z.im
        }
    })
}

pub fn join_complex(m: &Mat<f64>) -> Vec<Vec<C64>> {
    (0..m.ncols() / 2)
        .map(|c| {
            (0..m.nrows())
                .map(|i| C64::new(m[(i, 2 * c)], m[(i, 2 * c + 1)]))
                .collect()
        })
        .collect()
}

/// Dense real matrix times complex vector.
pub fn dense_matvec_c(a: MatRef<'_, f64>, x: &[C64]) -> Vec<C64> {
    assert_eq!(a.ncols(), x.len());
    let xm = split_complex(&[x.to_vec()]);
    let y = a * &xm;
    join_complex(&y).pop().unwrap()
}

pub fn dense_matvec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let y = a * col_mat(x);
    y.col(0).iter().copied().collect()
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm2_c(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Bilinear (unconjugated) complex dot product.
pub fn dot_c(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn diff_norm_c(x: &[C64], y: &[C64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value of a linear map given `x -> A x` and `y -> Aᵀ y`.
pub fn power_norm<F, G>(n: usize, a: F, at: G, iters: usize, seed: u64) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = crate::util::random_vec(n, seed);
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut sigma2 = 0.0;
    for _ in 0..iters {
        let y = at(&a(&x));
        let ny = norm2(&y);
        if ny == 0.0 {
            return 0.0;
        }
        sigma2 = ny;
        x = y.into_iter().map(|v| v / ny).collect();
    }
    sigma2.sqrt()
}

/// Spectral radius estimate of a real operator by power iteration on
/// complex start vectors; the ratio of successive norms is averaged over the
/// last iterations to damp the oscillation of complex-conjugate pairs.
pub fn power_spectral_radius<F>(n: usize, a: F, iters: usize, seed: u64) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = crate::util::random_vec(n, seed);
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut logs = Vec::with_capacity(iters);
    for _ in 0..iters {
        let y = a(&x);
        let ny = norm2(&y);
        if ny == 0.0 {
            return 0.0;
        }
        logs.push(ny.ln());
        x = y.into_iter().map(|v| v / ny).collect();
    }
    let tail = (iters / 2).max(1);
    let m = &logs[logs.len() - tail..];
    (m.iter().sum::<f64>() / m.len() as f64).exp()
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Finite-difference weights (Fornberg) for derivatives 0..=m at `z` from nodes `x`.
/// Returns `w[k][j]`, the weight of node j for the k-th derivative.
pub fn fd_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_weights_reproduce_central_second_difference() {
        let w = fd_weights(0.0, &[-1.0, 0.0, 1.0], 2);
        assert!((w[2][0] - 1.0).abs() < 1e-14);
        assert!((w[2][1] + 2.0).abs() < 1e-14);
        assert!((w[1][2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn fd_weights_one_sided_derivative_of_cubic() {
        let x = [0.5, 1.5, 2.5, 3.5];
        let w = fd_weights(0.0, &x, 3);
        let f = |t: f64| 2.0 - t + 3.0 * t * t - 0.5 * t * t * t;
        let d: Vec<f64> = (0..4)
            .map(|k| x.iter().zip(&w[k]).map(|(t, c)| c * f(*t)).sum())
            .collect();
        assert!((d[0] - 2.0).abs() < 1e-12);
        assert!((d[1] + 1.0).abs() < 1e-12);
        assert!((d[2] - 6.0).abs() < 1e-11);
        assert!((d[3] + 3.0).abs() < 1e-10);
    }

    #[test]
    fn csr_gram_matches_dense() {
        let a = Csr::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0), (1, 2, -1.0), (1, 2, 0.5)]);
        let g = a.gram();
        let dense = |m: &Csr, i: usize, j: usize| m.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1);
        assert_eq!(dense(&g, 0, 0), 5.0);
        assert_eq!(dense(&g, 0, 1), -1.0);
        assert_eq!(dense(&g, 1, 1), 9.25);
    }

    #[test]
    fn sparse_solver_solves_spd_system() {
        let a = Csr::from_triplets(3, 3, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 2.0)]);
        let s = SparseSolver::new(&a).unwrap();
        assert!(s.is_cholesky());
        let x = s.solve(&[1.0, 2.0, 4.0]);
        let r = a.matvec(&x);
        assert!((r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14 && (r[2] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let x = [0.2, 0.1, 0.05];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        assert!((loglog_slope(&x, &y) + 1.5).abs() < 1e-12);
    }
}
