//! Thin FFI layer over the LAPACK/BLAS routines used by the solvers.
//!
//! Only the handful of routines actually needed are declared here; all of
//! them operate on column-major `f64` storage.

use std::ffi::c_char;

extern "C" {
    fn dsyevd_(
        jobz: *const c_char,
        uplo: *const c_char,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        w: *mut f64,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        liwork: *const i32,
        info: *mut i32,
    );

    fn dpotrf_(
        uplo: *const c_char,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        info: *mut i32,
    );

    fn dsygst_(
        itype: *const i32,
        uplo: *const c_char,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        b: *const f64,
        ldb: *const i32,
        info: *mut i32,
    );

    fn dtrsm_(
        side: *const c_char,
        uplo: *const c_char,
        transa: *const c_char,
        diag: *const c_char,
        m: *const i32,
        n: *const i32,
        alpha: *const f64,
        a: *const f64,
        lda: *const i32,
        b: *mut f64,
        ldb: *const i32,
    );

    fn dggev_(
        jobvl: *const c_char,
        jobvr: *const c_char,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        b: *mut f64,
        ldb: *const i32,
        alphar: *mut f64,
        alphai: *mut f64,
        beta: *mut f64,
        vl: *mut f64,
        ldvl: *const i32,
        vr: *mut f64,
        ldvr: *const i32,
        work: *mut f64,
        lwork: *const i32,
        info: *mut i32,
    );

    fn dgesdd_(
        jobz: *const c_char,
        m: *const i32,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        s: *mut f64,
        u: *mut f64,
        ldu: *const i32,
        vt: *mut f64,
        ldvt: *const i32,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        info: *mut i32,
    );

    fn dsytrf_(
        uplo: *const c_char,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        ipiv: *mut i32,
        work: *mut f64,
        lwork: *const i32,
        info: *mut i32,
    );

    fn dpstrf_(
        uplo: *const c_char,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        piv: *mut i32,
        rank: *mut i32,
        tol: *const f64,
        work: *mut f64,
        info: *mut i32,
    );
}

/// Eigendecomposition of a symmetric matrix (divide and conquer).
///
/// `a` is n*n column-major; on success it is overwritten by the eigenvectors
/// (one per column) when `vectors` is true. Returns eigenvalues ascending.
pub fn syevd(a: &mut [f64], n: usize, vectors: bool) -> Result<Vec<f64>, i32> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Ok(Vec::new());
    }
    let jobz = if vectors { b'V' } else { b'N' } as c_char;
    let uplo = b'L' as c_char;
    let ni = n as i32;
    let mut w = vec![0.0; n];
    let mut info = 0i32;
    // workspace query
    let mut work_q = [0.0f64];
    let mut iwork_q = [0i32];
    let lwork_q = -1i32;
    unsafe {
        dsyevd_(
            &jobz,
            &uplo,
            &ni,
            a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work_q.as_mut_ptr(),
            &lwork_q,
            iwork_q.as_mut_ptr(),
            &lwork_q,
            &mut info,
        );
    }
    if info != 0 {
        return Err(info);
    }
    let lwork = work_q[0] as i32;
    let liwork = iwork_q[0];
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        dsyevd_(
            &jobz,
            &uplo,
            &ni,
            a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        Err(info)
    } else {
        Ok(w)
    }
}

/// Cholesky factorization of a symmetric positive definite matrix (lower).
///
/// On success the lower triangle of `a` holds L with A = L*L^T.
pub fn potrf(a: &mut [f64], n: usize) -> Result<(), i32> {
    assert_eq!(a.len(), n * n);
    let uplo = b'L' as c_char;
    let ni = n as i32;
    let mut info = 0i32;
    unsafe {
        dpotrf_(&uplo, &ni, a.as_mut_ptr(), &ni, &mut info);
    }
    if info != 0 {
        Err(info)
    } else {
        Ok(())
    }
}

/// Reduce the symmetric-definite problem A x = lambda B x to standard form
/// given B = L L^T from [`potrf`]: A is overwritten by L^-1 A L^-T.
pub fn sygst(a: &mut [f64], l: &[f64], n: usize) -> Result<(), i32> {
    let itype = 1i32;
    let uplo = b'L' as c_char;
    let ni = n as i32;
    let mut info = 0i32;
    unsafe {
        dsygst_(&itype, &uplo, &ni, a.as_mut_ptr(), &ni, l.as_ptr(), &ni, &mut info);
    }
    if info != 0 {
        Err(info)
    } else {
        Ok(())
    }
}

/// Solve op(L) X = B in place for lower-triangular L (`trans` selects L or L^T).
pub fn trsm_lower_left(l: &[f64], x: &mut [f64], n: usize, ncols: usize, transpose: bool) {
    let side = b'L' as c_char;
    let uplo = b'L' as c_char;
    let transa = if transpose { b'T' } else { b'N' } as c_char;
    let diag = b'N' as c_char;
    let m = n as i32;
    let nc = ncols as i32;
    let alpha = 1.0f64;
    unsafe {
        dtrsm_(
            &side,
            &uplo,
            &transa,
            &diag,
            &m,
            &nc,
            &alpha,
            l.as_ptr(),
            &m,
            x.as_mut_ptr(),
            &m,
        );
    }
}

/// Output of the generalized nonsymmetric eigensolver.
pub struct GgevResult {
    pub alpha_re: Vec<f64>,
    pub alpha_im: Vec<f64>,
    pub beta: Vec<f64>,
    /// Left eigenvectors, column-major n*n (LAPACK packed real/complex pairs).
    pub vl: Vec<f64>,
    /// Right eigenvectors, column-major n*n.
    pub vr: Vec<f64>,
}

/// Generalized eigenproblem A x = lambda B x for a general (nonsymmetric)
/// pair, with left and right eigenvectors. `a` and `b` are destroyed.
pub fn ggev(a: &mut [f64], b: &mut [f64], n: usize) -> Result<GgevResult, i32> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n * n);
    let jobvl = b'V' as c_char;
    let jobvr = b'V' as c_char;
    let ni = n as i32;
    let mut alphar = vec![0.0; n];
    let mut alphai = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut vl = vec![0.0; n * n];
    let mut vr = vec![0.0; n * n];
    let mut info = 0i32;
    let mut work_q = [0.0f64];
    let lwork_q = -1i32;
    unsafe {
        dggev_(
            &jobvl,
            &jobvr,
            &ni,
            a.as_mut_ptr(),
            &ni,
            b.as_mut_ptr(),
            &ni,
            alphar.as_mut_ptr(),
            alphai.as_mut_ptr(),
            beta.as_mut_ptr(),
            vl.as_mut_ptr(),
            &ni,
            vr.as_mut_ptr(),
            &ni,
            work_q.as_mut_ptr(),
            &lwork_q,
            &mut info,
        );
    }
    if info != 0 {
        return Err(info);
    }
    let lwork = (work_q[0] as i32).max(8 * ni);
    let mut work = vec![0.0; lwork as usize];
    unsafe {
        dggev_(
            &jobvl,
            &jobvr,
            &ni,
            a.as_mut_ptr(),
            &ni,
            b.as_mut_ptr(),
            &ni,
            alphar.as_mut_ptr(),
            alphai.as_mut_ptr(),
            beta.as_mut_ptr(),
            vl.as_mut_ptr(),
            &ni,
            vr.as_mut_ptr(),
            &ni,
            work.as_mut_ptr(),
            &lwork,
            &mut info,
        );
    }
    if info != 0 {
        Err(info)
    } else {
        Ok(GgevResult {
            alpha_re: alphar,
            alpha_im: alphai,
            beta,
            vl,
            vr,
        })
    }
}

/// Singular values of an m*n matrix (values only). `a` is destroyed.
pub fn singular_values(a: &mut [f64], m: usize, n: usize) -> Result<Vec<f64>, i32> {
    assert_eq!(a.len(), m * n);
    let jobz = b'N' as c_char;
    let mi = m as i32;
    let ni = n as i32;
    let k = m.min(n);
    let mut s = vec![0.0; k.max(1)];
    let mut info = 0i32;
    let mut iwork = vec![0i32; 8 * k.max(1)];
    let mut work_q = [0.0f64];
    let lwork_q = -1i32;
    unsafe {
        dgesdd_(
            &jobz,
            &mi,
            &ni,
            a.as_mut_ptr(),
            &mi,
            s.as_mut_ptr(),
            std::ptr::null_mut(),
            &1,
            std::ptr::null_mut(),
            &1,
            work_q.as_mut_ptr(),
            &lwork_q,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(info);
    }
    let lwork = work_q[0] as i32;
    let mut work = vec![0.0; lwork.max(1) as usize];
    unsafe {
        dgesdd_(
            &jobz,
            &mi,
            &ni,
            a.as_mut_ptr(),
            &mi,
            s.as_mut_ptr(),
            std::ptr::null_mut(),
            &1,
            std::ptr::null_mut(),
            &1,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        Err(info)
    } else {
        Ok(s)
    }
}

/// Bunch-Kaufman LDL^T factorization of a symmetric indefinite matrix.
/// Returns the eigenvalues of the block-diagonal D (used for rank counting).
pub fn sytrf_block_diag_eigs(a: &mut [f64], n: usize) -> Result<Vec<f64>, i32> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Ok(Vec::new());
    }
    let uplo = b'L' as c_char;
    let ni = n as i32;
    let mut ipiv = vec![0i32; n];
    let mut info = 0i32;
    let mut work_q = [0.0f64];
    let lwork_q = -1i32;
    unsafe {
        dsytrf_(
            &uplo,
            &ni,
            a.as_mut_ptr(),
            &ni,
            ipiv.as_mut_ptr(),
            work_q.as_mut_ptr(),
            &lwork_q,
            &mut info,
        );
    }
    if info != 0 && info != ni {
        return Err(info);
    }
    let lwork = (work_q[0] as i32).max(1);
    let mut work = vec![0.0; lwork as usize];
    unsafe {
        dsytrf_(
            &uplo,
            &ni,
            a.as_mut_ptr(),
            &ni,
            ipiv.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            &mut info,
        );
    }
    // info > 0 flags an exactly singular D block, which is fine for ranking.
    if info < 0 {
        return Err(info);
    }
    let at = |i: usize, j: usize| a[i + j * n];
    let mut eigs = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if ipiv[i] > 0 {
            eigs.push(at(i, i));
            i += 1;
        } else {
            // 2x2 block [[d11, d21], [d21, d22]] stored at (i,i), (i+1,i), (i+1,i+1)
            let d11 = at(i, i);
            let d21 = at(i + 1, i);
            let d22 = at(i + 1, i + 1);
            let tr = d11 + d22;
            let det = d11 * d22 - d21 * d21;
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            eigs.push(tr / 2.0 - disc);
            eigs.push(tr / 2.0 + disc);
            i += 2;
        }
    }
    Ok(eigs)
}

/// Pivoted Cholesky of a symmetric positive semidefinite matrix.
/// Returns (rank, pivot magnitudes in elimination order).
pub fn pstrf_rank(a: &mut [f64], n: usize, tol: f64) -> Result<(usize, Vec<f64>), i32> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Ok((0, Vec::new()));
    }
    let uplo = b'L' as c_char;
    let ni = n as i32;
    let mut piv = vec![0i32; n];
    let mut rank = 0i32;
    let mut work = vec![0.0f64; 2 * n];
    let mut info = 0i32;
    unsafe {
        dpstrf_(
            &uplo,
            &ni,
            a.as_mut_ptr(),
            &ni,
            piv.as_mut_ptr(),
            &mut rank,
            &tol,
            work.as_mut_ptr(),
            &mut info,
        );
    }
    // info > 0 simply means the matrix is rank deficient.
    if info < 0 {
        return Err(info);
    }
    let r = rank as usize;
    let pivots = (0..r).map(|i| a[i + i * n] * a[i + i * n]).collect();
    Ok((r, pivots))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syevd_small_diag() {
        let mut a = vec![2.0, 0.0, 0.0, 3.0];
        let w = syevd(&mut a, 2, true).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-14);
        assert!((w[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn potrf_identity() {
        let mut a = vec![1.0, 0.0, 0.0, 1.0];
        potrf(&mut a, 2).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-15);
    }
}
