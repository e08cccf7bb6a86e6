"""Data container, constrained-coordinate transform, and sample moments.

The constraint span(beta) <= span(U) is handled by rotating the response
into constrained coordinates Y_D (which carry the regression) and
complementary coordinates Y_S (which do not):

    W = (U (U'U)^{-1}, U0),   Y_D = W1'Y  (k-vector),   Y_S = U0'Y,

with U0 an orthonormal basis of span(U)^perp, so Y = U Y_D + U0 Y_S.
All downstream estimators consume the divisor-n sample moments of
(Y, X, Y_D, Y_S) computed here.  Two intercept conventions are supported:
"model2" constrains the intercept to span(U) as well (the complementary
coordinates then have mean zero and enter through their uncentered second
moment T_S), while "model3" leaves the intercept free (centered S_S).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (DataError, DimensionMismatch, RankDeficientU,
                     SingularMoment)
from .linalg import complete_basis

INTERCEPT_MODES = ("model2", "model3")


def solve_moment(M, B, name):
    """Solve M Z = B for a moment matrix M, raising SingularMoment."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] == 0:
        return np.zeros((0,) + np.asarray(B).shape[1:])
    # guard against numerically singular but technically invertible moments
    if np.linalg.cond(M) > 1.0 / (np.finfo(float).eps * 1e3):
        raise SingularMoment(name)
    try:
        return np.linalg.solve(M, B)
    except np.linalg.LinAlgError:
        raise SingularMoment(name) from None


@dataclass
class ResponseTransform:
    """Coordinates induced by the constraint matrix U."""

    U: np.ndarray        # r x k, as supplied
    U_norm: np.ndarray   # orthonormalized U (QR, positive diagonal of R)
    R: np.ndarray        # upper triangular, U = U_norm @ R
    W1: np.ndarray       # U (U'U)^{-1}; rows of Y @ W1 are the Y_D coords
    U0: np.ndarray       # orthonormal basis of span(U)^perp
    logdet_W: float      # log |det (W1, U0)|


def build_transform(U):
    """Validate U and construct the constrained-coordinate transform."""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2:
        raise DimensionMismatch(f"U must be 2-D, got shape {U.shape}")
    r, k = U.shape
    if not (1 <= k <= r):
        raise DimensionMismatch(f"U must be r x k with 1 <= k <= r, got {U.shape}")
    if not np.all(np.isfinite(U)):
        raise DataError("U contains non-finite entries")
    Q, R = np.linalg.qr(U)
    diag = np.diag(R)
    if np.min(np.abs(diag)) <= r * np.finfo(float).eps * max(np.abs(diag).max(), 1.0):
        raise RankDeficientU(f"U has rank < {k}")
    signs = np.sign(diag)
    Q = Q * signs
    R = R * signs[:, None]
    W1 = solve_moment(U.T @ U, U.T, "U'U").T
    U0 = complete_basis(Q) if k < r else np.empty((r, 0))
    sign, logdet = np.linalg.slogdet(np.hstack([W1, U0]))
    return ResponseTransform(U=U, U_norm=Q, R=R, W1=W1, U0=U0,
                             logdet_W=float(logdet))


@dataclass
class Dataset:
    """Observed responses and predictors plus the coefficient constraint.

    intercept_mode "model2" constrains the intercept to span(U);
    "model3" leaves it unconstrained.
    """

    Y: np.ndarray
    X: np.ndarray
    U: np.ndarray
    intercept_mode: str = "model2"
    transform: ResponseTransform = field(init=False, repr=False)

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        if self.Y.ndim != 2 or self.X.ndim != 2:
            raise DimensionMismatch("Y and X must be 2-D arrays")
        if self.Y.shape[0] != self.X.shape[0]:
            raise DimensionMismatch(
                f"Y has {self.Y.shape[0]} rows but X has {self.X.shape[0]}")
        if self.Y.shape[0] < 2:
            raise DataError("need at least 2 observations")
        if not np.all(np.isfinite(self.Y)) or not np.all(np.isfinite(self.X)):
            raise DataError("Y or X contains non-finite entries")
        if self.intercept_mode not in INTERCEPT_MODES:
            raise DataError(f"intercept_mode must be one of {INTERCEPT_MODES}")
        self.transform = build_transform(self.U)
        self.U = self.transform.U
        if self.U.shape[0] != self.Y.shape[1]:
            raise DimensionMismatch(
                f"U has {self.U.shape[0]} rows but Y has {self.Y.shape[1]} columns")
        n, p = self.X.shape
        r = self.Y.shape[1]
        if n <= p + r:
            warnings.warn(
                f"n={n} observations with p+r={p + r}; sample moments may "
                "be singular", stacklevel=2)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def r(self):
        return self.Y.shape[1]

    @property
    def k(self):
        return self.U.shape[1]

    @property
    def Yd(self):
        return self.Y @ self.transform.W1

    @property
    def Ys(self):
        return self.Y @ self.transform.U0


@dataclass
class Moments:
    """Divisor-n sample moments consumed by the estimators."""

    n: int
    p: int
    r: int
    k: int
    intercept_mode: str
    logdet_W: float
    xbar: np.ndarray
    ybar: np.ndarray
    dbar: np.ndarray
    sbar: np.ndarray
    S_X: np.ndarray
    S_Y: np.ndarray
    S_YX: np.ndarray
    S_Y_X: np.ndarray      # residual cov of Y given X
    S_D: np.ndarray
    S_S: np.ndarray        # centered second moment of Y_S
    T_S: np.ndarray        # uncentered second moment of Y_S
    S_DX: np.ndarray
    S_DS: np.ndarray
    S_SX: np.ndarray
    S_X_S: np.ndarray      # residual cov of X given Y_S
    S_D_S: np.ndarray      # residual cov of Y_D given Y_S
    S_D_XS: np.ndarray     # residual cov of Y_D given (X, Y_S)

    @property
    def sigma_S(self):
        """Second-moment matrix of Y_S entering the likelihood."""
        return self.T_S if self.intercept_mode == "model2" else self.S_S


def cross_moment(A, B):
    """Divisor-n covariance between the columns of A and of B."""
    n = A.shape[0]
    Ac = A - A.mean(axis=0)
    Bc = B - B.mean(axis=0)
    return Ac.T @ Bc / n


def residual_cov(A, B, name):
    """Divisor-n residual covariance of A after regressing out B (centered)."""
    S_A = cross_moment(A, A)
    if B.shape[1] == 0:
        return S_A
    S_AB = cross_moment(A, B)
    S_B = cross_moment(B, B)
    return S_A - S_AB @ solve_moment(S_B, S_AB.T, name)


def compute_moments(data):
    """All sample moments for a Dataset, with divisor n throughout."""
    Y, X = data.Y, data.X
    D, S = data.Yd, data.Ys
    n = data.n
    XS = np.hstack([X, S])
    S_X = cross_moment(X, X)
    if np.linalg.cond(S_X) > 1.0 / (np.finfo(float).eps * 1e3):
        raise SingularMoment("S_X")
    return Moments(
        n=n, p=data.p, r=data.r, k=data.k,
        intercept_mode=data.intercept_mode,
        logdet_W=data.transform.logdet_W,
        xbar=X.mean(axis=0), ybar=Y.mean(axis=0),
        dbar=D.mean(axis=0), sbar=S.mean(axis=0),
        S_X=S_X,
        S_Y=cross_moment(Y, Y),
        S_YX=cross_moment(Y, X),
        S_Y_X=residual_cov(Y, X, "S_X"),
        S_D=cross_moment(D, D),
        S_S=cross_moment(S, S),
        T_S=S.T @ S / n,
        S_DX=cross_moment(D, X),
        S_DS=cross_moment(D, S),
        S_SX=cross_moment(S, X),
        S_X_S=residual_cov(X, S, "S_S"),
        S_D_S=residual_cov(D, S, "S_S"),
        S_D_XS=residual_cov(D, XS, "S_(X,S)"),
    )
