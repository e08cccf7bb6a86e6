"""Pure-NumPy coordinate-descent sweep for the envelope log-det objective.

One sweep revisits each column of the semi-orthogonal iterate G in turn.
With the other columns A fixed, the free column lives on the unit sphere of
span(A)^perp; in an orthonormal basis G0 of that complement the contribution
of the column to the objective is log(w'B1 w) + log(w'B2 w), which is driven
downhill by a majorize-minimize step: at the current w the log terms are
linearized, leaving a quadratic form whose minimizer on the sphere is the
smallest eigenvector of B1/(w'B1 w) + B2/(w'B2 w).  Each MM step provably
does not increase the objective, so the sweep is monotone.

The compiled backend in _sweep_cy implements the same update order with the
same LAPACK drivers, so the two backends agree to rounding error.
"""

import numpy as np

BACKEND = "python"


def _complement_basis(A):
    """Orthonormal basis of span(A)^perp via full QR (r x (r-cols))."""
    r, c = A.shape
    if c == 0:
        return np.eye(r)
    q = np.linalg.qr(A, mode="complete")[0]
    return np.ascontiguousarray(q[:, c:])


def _min_eigvec(F):
    w, v = np.linalg.eigh(F)
    return v[:, 0]


def update_column(M1, M2, G, j, max_inner, inner_tol):
    """MM update of column j of G against the others; returns local objective."""
    A = np.delete(G, j, axis=1)
    G0 = _complement_basis(A)
    if A.shape[1] > 0:
        M1A = M1 @ A
        M2A = M2 @ A
        C1 = G0.T @ M1A
        C2 = G0.T @ M2A
        B1 = G0.T @ M1 @ G0 - C1 @ np.linalg.solve(A.T @ M1A, C1.T)
        B2 = G0.T @ M2 @ G0 - C2 @ np.linalg.solve(A.T @ M2A, C2.T)
    else:
        B1 = M1.copy()
        B2 = M2.copy()
    B1 = 0.5 * (B1 + B1.T)
    B2 = 0.5 * (B2 + B2.T)

    w = G0.T @ G[:, j]
    w /= np.linalg.norm(w)
    a = w @ B1 @ w
    b = w @ B2 @ w
    f = np.log(a) + np.log(b)
    for _ in range(max_inner):
        cand = _min_eigvec(B1 / a + B2 / b)
        if cand @ w < 0.0:
            cand = -cand
        a_new = cand @ B1 @ cand
        b_new = cand @ B2 @ cand
        f_new = np.log(a_new) + np.log(b_new)
        if f_new > f:  # roundoff guard: keep the previous point
            break
        w, a, b = cand, a_new, b_new
        if f - f_new <= inner_tol * max(1.0, abs(f)):
            f = f_new
            break
        f = f_new

    g = G0 @ w
    if A.shape[1] > 0:  # re-orthogonalize against drift
        g -= A @ (A.T @ g)
    g /= np.linalg.norm(g)
    G[:, j] = g
    return f


def sweep(M1, M2, G, max_inner=40, inner_tol=1e-12):
    """One full in-place sweep over all columns of G."""
    for j in range(G.shape[1]):
        update_column(M1, M2, G, j, max_inner, inner_tol)
