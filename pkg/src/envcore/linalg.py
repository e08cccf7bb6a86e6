"""Dense symmetric linear algebra and the shared envelope objective.

Everything an envelope estimator needs from the numerical layer lives here:
validation of symmetric/PD inputs, canonicalization of semi-orthogonal
bases (so optimizer output is deterministic and comparable across runs),
orthonormal completions, a basis-free subspace metric, and the minimizer of

    f(G) = log det(G' M1 G) + log det(G' M2 G)

over semi-orthogonal G, which is the single optimization every estimator
family reduces to.  The column-sweep kernel is provided by
:mod:`envcore.kernels` (compiled extension with pure-NumPy fallback).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatch, NoConvergence, NonPositiveDefinite

_SYM_RTOL = 1e-12
_JITTER_DELTA = 1e-8


def check_symmetric(M, name="matrix"):
    """Validate symmetry to relative 1e-12 and return a symmetrized copy."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got {M.shape}")
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.T).max() > _SYM_RTOL * scale:
        raise NonPositiveDefinite(f"{name} is not symmetric")
    return 0.5 * (M + M.T)


def check_pd(M, name="matrix", jitter=False):
    """Reject non-PD matrices; with jitter=True, regularize instead.

    Returns (matrix, jittered flag).  The jitter is delta * trace(M)/r on
    the diagonal with delta = 1e-8.
    """
    M = check_symmetric(M, name)
    r = M.shape[0]
    eigs = np.linalg.eigvalsh(M)
    cutoff = r * np.finfo(float).eps * max(eigs[-1], 0.0)
    if eigs[0] > cutoff:
        return M, False
    if not jitter:
        raise NonPositiveDefinite(
            f"{name} is not positive definite (min eig {eigs[0]:.3e})")
    return M + (_JITTER_DELTA * np.trace(M) / r) * np.eye(r), True


def canonicalize(G):
    """Deterministic representative of the span of a semi-orthogonal G.

    Flips each column so its largest-magnitude entry is positive (first
    occurrence on ties), then orders columns by descending value of their
    first nonzero coordinate.
    """
    G = np.array(G, dtype=float, copy=True)
    r, u = G.shape
    if u == 0:
        return G
    for j in range(u):
        i = int(np.argmax(np.abs(G[:, j])))
        if G[i, j] < 0:
            G[:, j] = -G[:, j]
    keys = np.empty(u)
    for j in range(u):
        nz = np.nonzero(np.abs(G[:, j]) > 1e-12)[0]
        keys[j] = G[nz[0], j] if nz.size else 0.0
    order = np.argsort(-keys, kind="stable")
    return G[:, order]


def is_semi_orthogonal(G, tol=1e-10):
    G = np.asarray(G, dtype=float)
    u = G.shape[1]
    return np.linalg.norm(G.T @ G - np.eye(u)) <= tol


def complete_basis(B):
    """Canonicalized orthonormal basis of span(B)^perp."""
    B = np.asarray(B, dtype=float)
    r, u = B.shape
    if u > 0 and not is_semi_orthogonal(B):
        raise DimensionMismatch("basis is not semi-orthogonal")
    if u >= r:
        raise DimensionMismatch("basis already spans the full space")
    if u == 0:
        return canonicalize(np.eye(r))
    Q = np.linalg.qr(B, mode="complete")[0]
    B0 = Q[:, u:]
    # QR completion is orthogonal to span(Q[:, :u]) = span(B) by construction
    return canonicalize(B0)


def subspace_distance(A, B):
    """|| P_A - P_B ||_F / sqrt(2u); 0 iff equal spans, 1 iff orthogonal."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise DimensionMismatch(f"shape mismatch: {A.shape} vs {B.shape}")
    u = A.shape[1]
    if u == 0:
        return 0.0
    PA = A @ A.T
    PB = B @ B.T
    return float(np.linalg.norm(PA - PB) / np.sqrt(2 * u))


def envelope_objective(G, M1, M2):
    """log det(G'M1G) + log det(G'M2G); raises on non-PD projections."""
    G = np.asarray(G, dtype=float)
    if G.shape[1] == 0:
        return 0.0
    if M1.shape[0] != G.shape[0] or M2.shape[0] != G.shape[0]:
        raise DimensionMismatch("inner-product matrices must match G rows")
    total = 0.0
    for M, name in ((M1, "M1"), (M2, "M2")):
        sign, logdet = np.linalg.slogdet(G.T @ M @ G)
        if sign <= 0:
            raise NonPositiveDefinite(f"G'{name}G has non-positive determinant")
        total += logdet
    return float(total)


@dataclass
class OptimizerOptions:
    """Knobs for the semi-orthogonal log-det minimizer."""

    tol: float = 1e-8
    max_sweeps: int = 500
    max_inner: int = 40
    inner_tol: float = 1e-12
    n_random: int = 5
    seed: int = 0
    jitter: bool = False
    max_subset_starts: int = 30


def _starting_values(M1, M2, u, opts):
    from itertools import combinations
    from math import comb

    M2inv = np.linalg.inv(M2)
    r = M1.shape[0]
    cands = []
    exhaustive = comb(r, u) <= opts.max_subset_starts
    for M in (M1, M2inv, M1 + M2inv):
        vecs = np.linalg.eigh(M)[1]
        if exhaustive:
            # every u-subset of eigenvectors; the objective has local
            # minima near eigenspaces, so this sweep is a cheap net
            for idx in combinations(range(r), u):
                cands.append(vecs[:, list(idx)])
        else:
            cands.append(vecs[:, :u])
            cands.append(vecs[:, ::-1][:, :u])
    if opts.n_random > 0:
        rng = np.random.default_rng(opts.seed)
        for _ in range(opts.n_random):
            Z = rng.standard_normal((r, u))
            cands.append(np.linalg.qr(Z)[0])
    # drop duplicates by span
    kept = []
    for G in cands:
        if not any(subspace_distance(G, H) < 1e-9 for H in kept):
            kept.append(G)
    return kept


def minimize_envelope_objective(M1, M2, u, opts=None, info=None):
    """Minimize log|G'M1G| + log|G'M2G| over semi-orthogonal r x u G.

    Multi-start blockwise coordinate descent; starts are the leading and
    trailing u eigenvectors of M1, M2^{-1} and M1 + M2^{-1} plus optional
    random orthonormal starts.  Returns the canonicalized best basis.

    Raises NoConvergence (carrying the best iterate) if the winning start
    has not met the relative-change tolerance within max_sweeps sweeps.
    Only the span of the result is statistically meaningful; the returned
    representative is fixed by :func:`canonicalize`.
    """
    opts = opts or OptimizerOptions()
    jittered = False
    M1, j1 = check_pd(M1, "M1", jitter=opts.jitter)
    M2, j2 = check_pd(M2, "M2", jitter=opts.jitter)
    jittered = j1 or j2
    r = M1.shape[0]
    if M2.shape[0] != r:
        raise DimensionMismatch("M1 and M2 must have equal dimension")
    if not 0 <= u <= r:
        raise DimensionMismatch(f"u={u} outside [0, {r}]")
    if info is not None:
        info["jittered"] = jittered
        info["backend"] = kernels.BACKEND
    if u == 0:
        return np.empty((r, 0))
    if u == r:
        return canonicalize(np.eye(r))

    best_G = None
    best_f = np.inf
    best_converged = False
    for start in _starting_values(M1, M2, u, opts):
        G = np.array(start, order="C", copy=True)
        f = envelope_objective(G, M1, M2)
        converged = False
        for _ in range(opts.max_sweeps):
            kernels.sweep(M1, M2, G, opts.max_inner, opts.inner_tol)
            f_new = envelope_objective(G, M1, M2)
            if f - f_new <= opts.tol * max(1.0, abs(f)):
                f = min(f, f_new)
                converged = True
                break
            f = f_new
        if f < best_f:
            best_f = f
            best_G = G
            best_converged = converged
    if not best_converged:
        raise NoConvergence(
            f"no convergence in {opts.max_sweeps} sweeps (objective {best_f:.6g})",
            best=canonicalize(best_G), objective=best_f)
    if info is not None:
        info["objective"] = best_f
    return canonicalize(best_G)
