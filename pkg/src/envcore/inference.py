"""Dimension selection, likelihood-ratio and Wald tests, and contrasts.

Builds on the estimator families: BIC dimension selection, the
likelihood-ratio test that trailing rows of alpha vanish (is the constraint
matrix over-specified?), envelope estimation of column contrasts alpha @ c1
(with profile means as the special case c1 = x_new - xbar), and element-wise
Wald p-values from plug-in asymptotic variances.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (DegenerateVariance, InvalidPartition,
                     RankDeficientContrast)
from .estimators import (_alpha_cm, _const, _envelope_avar, _logdet_pd,
                         fit_ecm, fit_em, fit_secm)
from .linalg import complete_basis, minimize_envelope_objective
from .model import compute_moments, residual_cov


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: int
    p_value: float
    loglik_null: float
    loglik_alt: float
    kind: str


@dataclass(frozen=True)
class ContrastFit:
    c1: np.ndarray
    c2: np.ndarray
    alpha1: np.ndarray        # k x p1, raw-U coordinates
    basis: np.ndarray         # k x u1
    basis0: np.ndarray
    Omega: np.ndarray
    Omega0: np.ndarray
    avar_alpha1: np.ndarray   # (k p1) x (k p1)
    avar_Ualpha1: np.ndarray  # (r p1) x (r p1)
    S_Z1_Z2: np.ndarray       # residual cov of the contrast predictors


@dataclass(frozen=True)
class ProfileEstimate:
    x_new: np.ndarray
    mean: np.ndarray   # r-vector estimate of E(Y | X = x_new)
    avar: np.ndarray   # r x r, for sqrt(n) (mean_hat - mean)


_FITTERS = {"em": fit_em, "ecm": fit_ecm, "secm": fit_secm}


def _admissible_dims(kind, m):
    if kind == "em":
        return range(0, m.r + 1)
    if kind == "ecm":
        return range(0, m.k + 1)
    if kind == "secm":
        return [v for v in range(1, m.k + 1)
                if m.p * (m.k - v) >= m.k - 1]
    raise ValueError(f"unknown kind {kind!r}")


def select_dimension(data, kind, criterion="bic", opts=None, trace=None):
    """Smallest dimension minimizing BIC for the given estimator family.

    Failed dimensions are skipped with a warning.  Pass a dict as `trace`
    to receive the full {dim: bic} table.
    """
    if criterion != "bic":
        raise ValueError(f"unsupported criterion {criterion!r}")
    m = compute_moments(data)
    dims = _admissible_dims(kind, m)
    fitter = _FITTERS[kind]
    best_dim, best_bic = None, np.inf
    for u in dims:
        try:
            fit = fitter(data, u, opts=opts, moments=m)
        except Exception as exc:
            warnings.warn(f"{kind} fit failed at dim {u}: {exc}",
                          stacklevel=2)
            continue
        if trace is not None:
            trace[u] = fit.bic
        if fit.bic < best_bic - 1e-12:  # ties go to the smaller dimension
            best_dim, best_bic = u, fit.bic
    if best_dim is None:
        raise InvalidPartition(f"no dimension admissible for kind {kind!r}")
    return best_dim


def test_rows(data, u, k2, opts=None):
    """LRT that the last k2 rows of alpha are zero, given dimension u.

    The statistic is twice the log-likelihood gap between the fitted
    envelope model and the null model where the trailing constrained
    coordinates carry no regression; it is asymptotically chi-squared
    with u*k2 degrees of freedom under the null.
    """
    m = compute_moments(data)
    k = m.k
    if not 1 <= k2 <= k - u:
        raise InvalidPartition(
            f"k2={k2} outside [1, k-u]=[1, {k - u}]")
    k1 = k - k2
    D = data.Yd
    D1, D2 = D[:, :k1], D[:, k1:]
    S = data.Ys
    X = data.X
    S_D2_S = residual_cov(D2, S, "S_S")
    S_D1_D2S = residual_cov(D1, np.hstack([D2, S]), "S_(D2,S)")
    S_D1_XS = residual_cov(D1, np.hstack([X, S]), "S_(X,S)")
    S_D1_D2S_inv = np.linalg.inv(S_D1_D2S)
    Phi1 = minimize_envelope_objective(S_D1_XS, S_D1_D2S_inv, u, opts)
    loglik_null = _const(m) - 0.5 * m.n * (
        _logdet_pd(m.sigma_S, "Sigma_S")
        + _logdet_pd(S_D2_S, "S_D2|S")
        + _logdet_pd(S_D1_D2S, "S_D1|(D2,S)")
        + _logdet_pd(Phi1.T @ S_D1_XS @ Phi1, "G1'S_D1|(X,S)G1")
        + _logdet_pd(Phi1.T @ S_D1_D2S_inv @ Phi1, "G1'S_D1|(D2,S)^-1 G1"))
    loglik_alt = fit_ecm(data, u, opts=opts, moments=m).loglik
    stat = 2.0 * (loglik_alt - loglik_null)
    if stat < 0.0:
        warnings.warn(f"negative LRT statistic {stat:.3e} clipped to 0",
                      stacklevel=2)
        stat = 0.0
    df = u * k2
    return TestResult(statistic=float(stat), df=df,
                      p_value=float(stats.chi2.sf(stat, df)),
                      loglik_null=loglik_null, loglik_alt=loglik_alt,
                      kind="row_test")


def fit_contrast(data, c1, u1, opts=None):
    """Envelope estimation of the column contrast alpha @ c1.

    The predictors are rotated so the contrast appears as a coefficient
    block; the remaining rotated predictors join Y_S as nuisance
    covariates, and the envelope is computed for the contrast block only.
    """
    c1 = np.atleast_2d(np.asarray(c1, dtype=float))
    if c1.shape[0] != data.p:
        c1 = c1.T
    p, p1 = c1.shape
    if p != data.p or p1 > p:
        raise RankDeficientContrast(f"c1 must be p x p1 with p1 <= p={data.p}")
    if np.linalg.matrix_rank(c1) < p1:
        raise RankDeficientContrast("c1 is rank deficient")
    if p1 < p:
        Q1, R1 = np.linalg.qr(c1)
        c2 = complete_basis(Q1 * np.sign(np.diag(R1)))
    else:
        c2 = np.empty((p, 0))
    C = np.hstack([c1, c2])
    if np.linalg.matrix_rank(C) < p:
        raise RankDeficientContrast("C = (c1, c2) is singular")
    m = compute_moments(data)
    Z = data.X @ np.linalg.inv(C).T
    Z1, Z2 = Z[:, :p1], Z[:, p1:]
    K = np.hstack([Z2, data.Ys])
    D = data.Yd
    alpha_cm = _alpha_cm(m)
    S_D_K = residual_cov(D, K, "S_K")
    M2 = np.linalg.inv(S_D_K)
    basis = minimize_envelope_objective(m.S_D_XS, M2, u1, opts)
    basis0 = complete_basis(basis) if u1 < m.k else np.empty((m.k, 0))
    Omega = basis.T @ m.S_D_XS @ basis
    Omega0 = basis0.T @ S_D_K @ basis0
    alpha1 = basis @ (basis.T @ (alpha_cm @ c1))
    S_Z1_Z2 = residual_cov(Z1, Z2, "S_Z2")
    if u1 == 0:
        avar_alpha1 = np.zeros((m.k * p1, m.k * p1))
    else:
        avar_alpha1 = _envelope_avar(S_Z1_Z2, basis, basis0, Omega, Omega0,
                                     basis.T @ (alpha_cm @ c1))
    IU = np.kron(np.eye(p1), data.U)
    return ContrastFit(c1=c1, c2=c2, alpha1=alpha1, basis=basis,
                       basis0=basis0, Omega=Omega, Omega0=Omega0,
                       avar_alpha1=avar_alpha1,
                       avar_Ualpha1=IU @ avar_alpha1 @ IU.T,
                       S_Z1_Z2=S_Z1_Z2)


def estimate_profile(data, x_new, u1, opts=None):
    """Envelope estimate of the mean response profile at X = x_new."""
    x_new = np.asarray(x_new, dtype=float).reshape(-1)
    if x_new.size != data.p:
        raise RankDeficientContrast(
            f"x_new must have length p={data.p}, got {x_new.size}")
    m = compute_moments(data)
    U = data.U
    PU = U @ np.linalg.solve(U.T @ U, U.T)
    proj_mean = PU @ m.ybar
    c1 = (x_new - m.xbar).reshape(-1, 1)
    from .estimators import fit_cm
    Sigma = fit_cm(data, moments=m).Sigma
    if np.linalg.norm(c1) < 1e-12:
        return ProfileEstimate(x_new=x_new, mean=proj_mean,
                               avar=PU @ Sigma @ PU)
    cf = fit_contrast(data, c1, u1, opts=opts)
    mean = proj_mean + (U @ cf.alpha1).reshape(-1)
    avar = PU @ Sigma @ PU + cf.avar_Ualpha1
    return ProfileEstimate(x_new=x_new, mean=mean,
                           avar=0.5 * (avar + avar.T))


def wald_pvalues(fit):
    """Two-sided normal p-values for each coefficient from plug-in avar."""
    r, p = fit.beta.shape
    diag = np.diag(fit.avar_beta).copy()
    if diag.min() < -1e-12:
        raise DegenerateVariance(
            f"avar diagonal has negative entry {diag.min():.3e}")
    diag = np.clip(diag, 0.0, None)
    se = np.sqrt(diag / fit.n).reshape(p, r).T  # vec stacks columns
    pvals = np.empty((r, p))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(fit.beta) / se
    z = np.where((se == 0) & (fit.beta == 0), 0.0, z)
    pvals = 2.0 * stats.norm.sf(z)
    return pvals
