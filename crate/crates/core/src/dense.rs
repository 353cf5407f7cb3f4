//! Small column-major dense matrix used at the solver boundary.

use crate::error::{Error, Result};
use crate::lapack;

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = if nrows == 0 { 0 } else { rows[0].len() };
        let mut m = Self::zeros(nrows, ncols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), ncols);
            for (j, v) in r.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// y = self * x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let col = &self.data[j * self.nrows..(j + 1) * self.nrows];
            for i in 0..self.nrows {
                y[i] += col[i] * xj;
            }
        }
        y
    }

    /// C = self * other
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut c = DenseMatrix::zeros(self.nrows, other.ncols);
        for j in 0..other.ncols {
            for k in 0..self.ncols {
                let b = other[(k, j)];
                if b == 0.0 {
                    continue;
                }
                let col = &self.data[k * self.nrows..(k + 1) * self.nrows];
                for i in 0..self.nrows {
                    c.data[j * self.nrows + i] += col[i] * b;
                }
            }
        }
        c
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.ncols, self.nrows);
        for j in 0..self.ncols {
            for i in 0..self.nrows {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// self += alpha * u * d * v^T with u, v given as column blocks and d diagonal.
    pub fn add_scaled_outer(&mut self, alpha: f64, u: &DenseMatrix, d: &[f64], v: &DenseMatrix) {
        assert_eq!(u.nrows, self.nrows);
        assert_eq!(v.nrows, self.ncols);
        assert_eq!(u.ncols, d.len());
        assert_eq!(v.ncols, d.len());
        for c in 0..d.len() {
            let scale = alpha * d[c];
            let ucol = &u.data[c * u.nrows..(c + 1) * u.nrows];
            let vcol = &v.data[c * v.nrows..(c + 1) * v.nrows];
            for j in 0..self.ncols {
                let s = scale * vcol[j];
                if s == 0.0 {
                    continue;
                }
                let col = &mut self.data[j * self.nrows..(j + 1) * self.nrows];
                for i in 0..self.nrows {
                    col[i] += ucol[i] * s;
                }
            }
        }
    }

    /// Eigenvalues (ascending) of a symmetric matrix; consumes a copy.
    pub fn sym_eigenvalues(&self) -> Result<Vec<f64>> {
        let n = self.nrows;
        let mut a = self.data.clone();
        lapack::syevd(&mut a, n, false).map_err(|info| Error::Lapack {
            routine: "dsyevd",
            info,
        })
    }

    /// Full symmetric eigendecomposition: (eigenvalues ascending, eigenvectors
    /// as columns).
    pub fn sym_eigen(&self) -> Result<(Vec<f64>, DenseMatrix)> {
        let n = self.nrows;
        let mut a = self.data.clone();
        let w = lapack::syevd(&mut a, n, true).map_err(|info| Error::Lapack {
            routine: "dsyevd",
            info,
        })?;
        Ok((
            w,
            DenseMatrix {
                nrows: n,
                ncols: n,
                data: a,
            },
        ))
    }

    /// Singular values, descending.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        let mut a = self.data.clone();
        lapack::singular_values(&mut a, self.nrows, self.ncols).map_err(|info| Error::Lapack {
            routine: "dgesdd",
            info,
        })
    }

    /// Numerical rank via singular values with a relative tolerance.
    pub fn rank_svd(&self, tol_rel: f64) -> Result<usize> {
        let s = self.singular_values()?;
        let smax = s.first().copied().unwrap_or(0.0);
        Ok(s.iter().filter(|&&v| v > tol_rel * smax).count())
    }

    /// Numerical rank of a symmetric matrix from the block-diagonal factor of
    /// a Bunch-Kaufman LDL^T factorization (fast, BLAS3).
    pub fn rank_sym_ldlt(&self, tol_rel: f64) -> Result<usize> {
        let n = self.nrows;
        let mut a = self.data.clone();
        let eigs = lapack::sytrf_block_diag_eigs(&mut a, n).map_err(|info| Error::Lapack {
            routine: "dsytrf",
            info,
        })?;
        let maxabs = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(eigs.iter().filter(|v| v.abs() > tol_rel * maxabs).count())
    }

    /// Rank of a symmetric positive semidefinite matrix via pivoted Cholesky.
    pub fn rank_psd_pivoted(&self, tol_rel: f64) -> Result<usize> {
        let n = self.nrows;
        let maxdiag = (0..n).fold(0.0f64, |m, i| m.max(self[(i, i)].abs()));
        let mut a = self.data.clone();
        let (rank, _pivots) =
            lapack::pstrf_rank(&mut a, n, tol_rel * maxdiag).map_err(|info| Error::Lapack {
                routine: "dpstrf",
                info,
            })?;
        Ok(rank)
    }

    /// Cholesky factor L (lower) with A = L L^T.
    pub fn cholesky(&self) -> Result<DenseMatrix> {
        let n = self.nrows;
        let mut a = self.data.clone();
        lapack::potrf(&mut a, n).map_err(|info| Error::Lapack {
            routine: "dpotrf",
            info,
        })?;
        // zero the strict upper triangle for cleanliness
        for j in 1..n {
            for i in 0..j {
                a[i + j * n] = 0.0;
            }
        }
        Ok(DenseMatrix {
            nrows: n,
            ncols: n,
            data: a,
        })
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i + j * self.nrows]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        let n = self.nrows;
        &mut self.data[i + j * n]
    }
}

/// Symmetric-definite generalized eigensolve A x = lambda B x with B SPD.
/// Returns (eigenvalues ascending, B-orthonormal eigenvectors as columns).
pub fn sym_definite_eigen(a: &DenseMatrix, b: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = a.nrows;
    assert_eq!(a.ncols, n);
    assert_eq!(b.nrows, n);
    let mut l = b.data.clone();
    lapack::potrf(&mut l, n).map_err(|info| Error::Lapack {
        routine: "dpotrf",
        info,
    })?;
    let mut c = a.data.clone();
    lapack::sygst(&mut c, &l, n).map_err(|info| Error::Lapack {
        routine: "dsygst",
        info,
    })?;
    let w = lapack::syevd(&mut c, n, true).map_err(|info| Error::Lapack {
        routine: "dsyevd",
        info,
    })?;
    // back-transform: x = L^-T z
    lapack::trsm_lower_left(&l, &mut c, n, n, true);
    Ok((
        w,
        DenseMatrix {
            nrows: n,
            ncols: n,
            data: c,
        },
    ))
}

/// One eigenvalue/vector set from the general (QZ) eigensolver.
#[derive(Debug, Clone)]
pub struct GeneralEigenPair {
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub beta: f64,
    /// Right eigenvector (complex parts may be nonzero for complex pairs).
    pub right_re: Vec<f64>,
    pub right_im: Vec<f64>,
    pub left_re: Vec<f64>,
    pub left_im: Vec<f64>,
}

impl GeneralEigenPair {
    pub fn is_finite(&self, beta_tol: f64) -> bool {
        self.beta.abs() > beta_tol
    }

    pub fn lambda_re(&self) -> f64 {
        self.alpha_re / self.beta
    }

    pub fn lambda_im(&self) -> f64 {
        self.alpha_im / self.beta
    }
}

/// All eigenpairs (left and right eigenvectors) of a general pencil (A, B).
pub fn general_eigenpairs(a: &DenseMatrix, b: &DenseMatrix) -> Result<Vec<GeneralEigenPair>> {
    let n = a.nrows;
    let mut aw = a.data.clone();
    let mut bw = b.data.clone();
    let res = lapack::ggev(&mut aw, &mut bw, n).map_err(|info| Error::Lapack {
        routine: "dggev",
        info,
    })?;
    let col = |m: &Vec<f64>, j: usize| m[j * n..(j + 1) * n].to_vec();
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    while j < n {
        if res.alpha_im[j] == 0.0 {
            out.push(GeneralEigenPair {
                alpha_re: res.alpha_re[j],
                alpha_im: 0.0,
                beta: res.beta[j],
                right_re: col(&res.vr, j),
                right_im: vec![0.0; n],
                left_re: col(&res.vl, j),
                left_im: vec![0.0; n],
            });
            j += 1;
        } else {
            // complex conjugate pair packed in columns j (real) and j+1 (imag)
            let rr = col(&res.vr, j);
            let ri = col(&res.vr, j + 1);
            let lr = col(&res.vl, j);
            let li = col(&res.vl, j + 1);
            for sign in [1.0, -1.0] {
                out.push(GeneralEigenPair {
                    alpha_re: res.alpha_re[if sign > 0.0 { j } else { j + 1 }],
                    alpha_im: res.alpha_im[if sign > 0.0 { j } else { j + 1 }],
                    beta: res.beta[if sign > 0.0 { j } else { j + 1 }],
                    right_re: rr.clone(),
                    right_im: ri.iter().map(|v| sign * v).collect(),
                    left_re: lr.clone(),
                    left_im: li.iter().map(|v| sign * v).collect(),
                });
            }
            j += 2;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definite_pair_diagonal() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]);
        let b = DenseMatrix::identity(2);
        let (w, _) = sym_definite_eigen(&a, &b).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-13 && (w[1] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn ggev_simple() {
        let a = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 5.0]]);
        let b = DenseMatrix::identity(2);
        let pairs = general_eigenpairs(&a, &b).unwrap();
        let mut ls: Vec<f64> = pairs.iter().map(|p| p.lambda_re()).collect();
        ls.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((ls[0] - 3.0).abs() < 1e-12 && (ls[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rank_detection() {
        let a = DenseMatrix::from_rows(&[
            vec![2.0, 0.0, 0.0],
            vec![0.0, 1e-14, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        assert_eq!(a.rank_svd(1e-9).unwrap(), 2);
        assert_eq!(a.rank_sym_ldlt(1e-9).unwrap(), 2);
        assert_eq!(a.rank_psd_pivoted(1e-9).unwrap(), 2);
    }
}
