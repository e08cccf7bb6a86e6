# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled coordinate-descent sweep for the envelope log-det objective.

Mirrors _sweep_py exactly (same update order, same LAPACK drivers:
dgeqrf/dorgqr for the complement basis, dposv for the Schur complements,
dsyevd for the MM eigensteps), so results agree with the fallback to
rounding error while avoiding per-step Python and allocation overhead.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, log, sqrt
from scipy.linalg.cython_blas cimport ddot, dgemm, dgemv, dnrm2
from scipy.linalg.cython_lapack cimport dgeqrf, dorgqr, dposv, dsyevd

cnp.import_array()

BACKEND = "cython"


cdef int _schur(double* M, double* A, double* G0, int r, int k, int m,
                double* B, double* MA, double* T, double* C, double* X,
                double* MG0) except -1:
    # B = G0'M G0 - (G0'M A)(A'M A)^{-1}(A'M G0); all buffers F-order, lda=rows
    cdef double one = 1.0, zero = 0.0, neg = -1.0
    cdef int info = 0, i, j
    dgemm("N", "N", &r, &m, &r, &one, M, &r, G0, &r, &zero, MG0, &r)
    dgemm("T", "N", &m, &m, &r, &one, G0, &r, MG0, &r, &zero, B, &m)
    if k > 0:
        dgemm("N", "N", &r, &k, &r, &one, M, &r, A, &r, &zero, MA, &r)
        dgemm("T", "N", &k, &k, &r, &one, A, &r, MA, &r, &zero, T, &k)
        dgemm("T", "N", &k, &m, &r, &one, MA, &r, G0, &r, &zero, X, &k)
        for j in range(m):          # C = X' (m x k) kept for the final gemm
            for i in range(k):
                C[i * m + j] = X[j * k + i]
        dposv("U", &k, &m, T, &k, X, &k, &info)
        if info != 0:
            raise np.linalg.LinAlgError("A'MA not positive definite in sweep")
        dgemm("N", "N", &m, &m, &k, &neg, C, &m, X, &k, &one, B, &m)
    for j in range(m):
        for i in range(j):
            B[j * m + i] = B[i * m + j] = 0.5 * (B[j * m + i] + B[i * m + j])
    return 0


def update_column(object M1o, object M2o, object Go, int j,
                  int max_inner=40, double inner_tol=1e-12):
    """MM update of column j of G against the others; returns local objective."""
    cdef cnp.ndarray[double, ndim=2] M1 = np.asfortranarray(M1o, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] M2 = np.asfortranarray(M2o, dtype=np.float64)
    cdef int r = M1.shape[0]
    cdef int u = Go.shape[1]
    cdef int k = u - 1
    cdef int m = r - k
    cdef int info = 0, i, c, it, one_i = 1
    cdef double one = 1.0, zero = 0.0, neg = -1.0, nrm

    cdef cnp.ndarray[double, ndim=2] A = np.asfortranarray(
        np.delete(np.asarray(Go, dtype=np.float64), j, axis=1))
    cdef cnp.ndarray[double, ndim=2] Q = np.zeros((r, r), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=1] tau = np.empty(max(k, 1), dtype=np.float64)
    cdef int lwork = 64 * r + r
    cdef cnp.ndarray[double, ndim=1] work = np.empty(lwork, dtype=np.float64)

    if k > 0:
        Q[:, :k] = A
        dgeqrf(&r, &k, &Q[0, 0], &r, &tau[0], &work[0], &lwork, &info)
        if info != 0:
            raise np.linalg.LinAlgError("dgeqrf failed")
        dorgqr(&r, &r, &k, &Q[0, 0], &r, &tau[0], &work[0], &lwork, &info)
        if info != 0:
            raise np.linalg.LinAlgError("dorgqr failed")
    else:
        for i in range(r):
            Q[i, i] = 1.0
    cdef double* G0 = &Q[0, 0] + k * r  # r x m, lda=r

    cdef cnp.ndarray[double, ndim=2] B1 = np.empty((m, m), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2] B2 = np.empty((m, m), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2] MA = np.empty((r, max(k, 1)), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2] T = np.empty((max(k, 1), max(k, 1)), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2] C = np.empty((m, max(k, 1)), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2] X = np.empty((max(k, 1), m), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=2] MG0 = np.empty((r, m), dtype=np.float64, order="F")
    _schur(&M1[0, 0], &A[0, 0] if k > 0 else NULL, G0, r, k, m,
           &B1[0, 0], &MA[0, 0], &T[0, 0], &C[0, 0], &X[0, 0], &MG0[0, 0])
    _schur(&M2[0, 0], &A[0, 0] if k > 0 else NULL, G0, r, k, m,
           &B2[0, 0], &MA[0, 0], &T[0, 0], &C[0, 0], &X[0, 0], &MG0[0, 0])

    cdef cnp.ndarray[double, ndim=1] g = np.ascontiguousarray(
        np.asarray(Go, dtype=np.float64)[:, j])
    cdef cnp.ndarray[double, ndim=1] w = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] cand = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] tmp = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] F = np.empty((m, m), dtype=np.float64, order="F")
    cdef cnp.ndarray[double, ndim=1] evals = np.empty(m, dtype=np.float64)
    cdef int lework = 1 + 6 * m + 2 * m * m + 16
    cdef cnp.ndarray[double, ndim=1] ework = np.empty(lework, dtype=np.float64)
    cdef int liwork = 3 + 5 * m + 8
    cdef cnp.ndarray[int, ndim=1] iwork = np.empty(liwork, dtype=np.intc)

    dgemv("T", &r, &m, &one, G0, &r, &g[0], &one_i, &zero, &w[0], &one_i)
    nrm = dnrm2(&m, &w[0], &one_i)
    for i in range(m):
        w[i] /= nrm

    cdef double a, b, f, a_new, b_new, f_new, dot
    dgemv("N", &m, &m, &one, &B1[0, 0], &m, &w[0], &one_i, &zero, &tmp[0], &one_i)
    a = ddot(&m, &w[0], &one_i, &tmp[0], &one_i)
    dgemv("N", &m, &m, &one, &B2[0, 0], &m, &w[0], &one_i, &zero, &tmp[0], &one_i)
    b = ddot(&m, &w[0], &one_i, &tmp[0], &one_i)
    f = log(a) + log(b)
    for it in range(max_inner):
        for c in range(m):
            for i in range(m):
                F[i, c] = B1[i, c] / a + B2[i, c] / b
        dsyevd("V", "U", &m, &F[0, 0], &m, &evals[0], &ework[0], &lework,
               &iwork[0], &liwork, &info)
        if info != 0:
            raise np.linalg.LinAlgError("dsyevd failed")
        for i in range(m):
            cand[i] = F[i, 0]
        dot = ddot(&m, &cand[0], &one_i, &w[0], &one_i)
        if dot < 0.0:
            for i in range(m):
                cand[i] = -cand[i]
        dgemv("N", &m, &m, &one, &B1[0, 0], &m, &cand[0], &one_i, &zero, &tmp[0], &one_i)
        a_new = ddot(&m, &cand[0], &one_i, &tmp[0], &one_i)
        dgemv("N", &m, &m, &one, &B2[0, 0], &m, &cand[0], &one_i, &zero, &tmp[0], &one_i)
        b_new = ddot(&m, &cand[0], &one_i, &tmp[0], &one_i)
        f_new = log(a_new) + log(b_new)
        if f_new > f:
            break
        for i in range(m):
            w[i] = cand[i]
        a = a_new
        b = b_new
        if f - f_new <= inner_tol * max(1.0, fabs(f)):
            f = f_new
            break
        f = f_new

    dgemv("N", &r, &m, &one, G0, &r, &w[0], &one_i, &zero, &g[0], &one_i)
    cdef cnp.ndarray[double, ndim=1] t2 = np.empty(max(k, 1), dtype=np.float64)
    if k > 0:
        dgemv("T", &r, &k, &one, &A[0, 0], &r, &g[0], &one_i, &zero, &t2[0], &one_i)
        dgemv("N", &r, &k, &neg, &A[0, 0], &r, &t2[0], &one_i, &one, &g[0], &one_i)
    nrm = dnrm2(&r, &g[0], &one_i)
    for i in range(r):
        g[i] /= nrm
    Go[:, j] = g
    return f


def sweep(object M1, object M2, object G, int max_inner=40, double inner_tol=1e-12):
    """One full in-place sweep over all columns of G."""
    cdef int j
    for j in range(G.shape[1]):
        update_column(M1, M2, G, j, max_inner, inner_tol)
