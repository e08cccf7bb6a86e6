"""Maximum-likelihood estimators for constrained multivariate regression.

Five families, all returning an EnvelopeFit:

  um   unconstrained multivariate regression of Y on X,
  cm   coefficients constrained to span(U),
  em   envelope reduction of the unconstrained model,
  ecm  envelope reduction applied inside the constrained coordinates,
  secm ecm with a learned diagonal rescaling of the constrained coordinates.

Each fit carries the coefficient matrix, the reconstructed response
covariance, the maximized Gaussian log-likelihood, the free-parameter count,
and a plug-in estimate of avar(sqrt(n) vec(beta_hat)).  Sample moments use
divisor n throughout.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (NonPositiveDefinite, SingularDesign, SingularMoment,
                     Unidentifiable)
from .linalg import (OptimizerOptions, canonicalize, complete_basis,
                     envelope_objective, minimize_envelope_objective)
from . import kernels
from .model import compute_moments, solve_moment

_LOG2PI = np.log(2.0 * np.pi)
_PINV_CUT = 1e-10


@dataclass(frozen=True)
class EnvelopeFit:
    """Result of one estimator family on one dataset."""

    kind: str
    intercept_mode: str
    n: int
    p: int
    r: int
    k: int
    dim: object          # u or v; None for um/cm
    beta0: np.ndarray    # r-vector intercept of E(Y | X = x)
    beta: np.ndarray     # r x p
    Sigma: np.ndarray    # r x r reconstructed response covariance
    loglik: float
    n_params: int
    avar_beta: np.ndarray          # rp x rp, for sqrt(n) vec(beta_hat)
    alpha: np.ndarray = None       # k x p, raw-U coordinates (cm/ecm/secm)
    basis: np.ndarray = None       # envelope basis (em/ecm/secm)
    basis0: np.ndarray = None
    Omega: np.ndarray = None
    Omega0: np.ndarray = None
    Lambda: np.ndarray = None      # k-vector of scales, first entry 1 (secm)
    phi: np.ndarray = None         # k x (r-k) regression of Y_D on Y_S
    avar_alpha: np.ndarray = None  # kp x kp, raw-U coordinates

    @property
    def bic(self):
        return -2.0 * self.loglik + np.log(self.n) * self.n_params


def _logdet_pd(M, name):
    M = np.asarray(M, dtype=float)
    if M.shape[0] == 0:
        return 0.0
    sign, logdet = np.linalg.slogdet(M)
    if sign <= 0:
        raise NonPositiveDefinite(f"{name} has non-positive determinant")
    return float(logdet)


def _sym_pinv(M):
    """Moore-Penrose inverse of a symmetric matrix, eigencutoff 1e-10*max."""
    if M.shape[0] == 0:
        return M
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    cut = _PINV_CUT * max(np.abs(vals).max(), np.finfo(float).tiny)
    inv = np.where(np.abs(vals) > cut, 1.0 / np.where(vals == 0, 1, vals), 0.0)
    return (vecs * inv) @ vecs.T


def _const(m):
    """Additive log-likelihood constant shared by the constrained models."""
    return m.n * m.logdet_W - 0.5 * m.n * m.r * (1.0 + _LOG2PI)


def _intercept_count(m):
    """Intercept parameters: k in span(U), plus r-k free under model3."""
    return m.k if m.intercept_mode == "model2" else m.r


def _envelope_avar(S_X, basis, basis0, Omega, Omega0, eta):
    """Plug-in avar of sqrt(n) vec of an envelope coefficient estimator.

    First term is the oracle variance on the envelope; the second is the
    cost of estimating the envelope itself, with a pseudo-inverse because
    the inner matrix is singular exactly when some directions are free.
    """
    amb = basis.shape[0]
    u = basis.shape[1]
    S_X_inv = _sym_pinv(S_X)
    term1 = np.kron(S_X_inv, basis @ Omega @ basis.T)
    if u == 0 or basis0.shape[1] == 0:
        return term1
    Om_inv = _sym_pinv(Omega)
    Om0_inv = _sym_pinv(Omega0)
    M = (np.kron(eta @ S_X @ eta.T, Om0_inv)
         + np.kron(Omega, Om0_inv) + np.kron(Om_inv, Omega0)
         - 2.0 * np.eye(u * (amb - u)))
    K = np.kron(eta.T, basis0)
    return term1 + K @ _sym_pinv(M) @ K.T


def _alpha_cm(m):
    resid = m.S_DX - m.S_DS @ solve_moment(m.S_S, m.S_SX, "S_S")
    return solve_moment(m.S_X_S, resid.T, "S_X|S").T


def _phi_hat(m, alpha):
    if m.r == m.k:
        return np.zeros((m.k, 0))
    return solve_moment(m.S_S, (m.S_DS - alpha @ m.S_SX.T).T, "S_S").T


def _assemble_sigma(U, U0, Sigma_D_S, phi, Sigma_S):
    """Response covariance from the constrained-coordinate decomposition."""
    Sigma_DS = phi @ Sigma_S
    Sigma_D = Sigma_D_S + Sigma_DS @ phi.T
    cross = U @ Sigma_DS @ U0.T
    Sigma = U @ Sigma_D @ U.T + cross + cross.T + U0 @ Sigma_S @ U0.T
    return 0.5 * (Sigma + Sigma.T)


def _constrained_intercept(data, m, alpha, phi):
    U, U0 = data.U, data.transform.U0
    if m.intercept_mode == "model2":
        alpha0 = m.dbar - alpha @ m.xbar - phi @ m.sbar
        return U @ alpha0
    return U @ (m.dbar - alpha @ m.xbar) + U0 @ m.sbar


def fit_um(data, moments=None):
    """Unconstrained MLE: row-wise least squares with joint covariance."""
    try:
        m = moments or compute_moments(data)
    except SingularMoment as exc:
        raise SingularDesign(str(exc)) from None
    if m.n <= m.p + 1:
        raise SingularDesign(f"n={m.n} too small for p={m.p} predictors")
    beta = solve_moment(m.S_X, m.S_YX.T, "S_X").T
    Sigma = m.S_Y_X
    loglik = -0.5 * m.n * m.r * (1.0 + _LOG2PI) \
        - 0.5 * m.n * _logdet_pd(Sigma, "S_Y|X")
    return EnvelopeFit(
        kind="um", intercept_mode=m.intercept_mode,
        n=m.n, p=m.p, r=m.r, k=m.k, dim=None,
        beta0=m.ybar - beta @ m.xbar, beta=beta, Sigma=Sigma,
        loglik=loglik,
        n_params=m.r + m.p * m.r + m.r * (m.r + 1) // 2,
        avar_beta=np.kron(_sym_pinv(m.S_X), Sigma))


def fit_cm(data, moments=None):
    """MLE with span(beta) constrained to span(U)."""
    m = moments or compute_moments(data)
    alpha = _alpha_cm(m)
    phi = _phi_hat(m, alpha)
    Sigma_D_S = m.S_D_XS
    U, U0 = data.U, data.transform.U0
    Sigma = _assemble_sigma(U, U0, Sigma_D_S, phi, m.sigma_S)
    loglik = _const(m) - 0.5 * m.n * (
        _logdet_pd(m.sigma_S, "Sigma_S")
        + _logdet_pd(Sigma_D_S, "S_D|(X,S)"))
    S_X_inv = _sym_pinv(m.S_X)
    return EnvelopeFit(
        kind="cm", intercept_mode=m.intercept_mode,
        n=m.n, p=m.p, r=m.r, k=m.k, dim=None,
        beta0=_constrained_intercept(data, m, alpha, phi),
        beta=U @ alpha, Sigma=Sigma, loglik=loglik,
        n_params=_intercept_count(m) + m.k * m.p + m.r * (m.r + 1) // 2,
        avar_beta=np.kron(S_X_inv, U @ Sigma_D_S @ U.T),
        alpha=alpha, phi=phi,
        avar_alpha=np.kron(S_X_inv, Sigma_D_S))


def fit_em(data, u, opts=None, moments=None):
    """Envelope MLE of the unconstrained model at fixed dimension u."""
    m = moments or compute_moments(data)
    um = fit_um(data, moments=m)
    r = m.r
    if not 0 <= u <= r:
        raise Unidentifiable(f"u={u} outside [0, {r}]")
    S_Y_inv = np.linalg.inv(m.S_Y)
    basis = minimize_envelope_objective(m.S_Y_X, S_Y_inv, u, opts)
    basis0 = complete_basis(basis) if u < r else np.empty((r, 0))
    Omega = basis.T @ m.S_Y_X @ basis
    Omega0 = basis0.T @ m.S_Y @ basis0
    beta = basis @ (basis.T @ um.beta)
    Sigma = basis @ Omega @ basis.T + basis0 @ Omega0 @ basis0.T
    loglik = -0.5 * m.n * r * (1.0 + _LOG2PI) - 0.5 * m.n * (
        _logdet_pd(m.S_Y, "S_Y")
        + _logdet_pd(basis.T @ m.S_Y_X @ basis, "G'S_Y|X G")
        + _logdet_pd(basis.T @ S_Y_inv @ basis, "G'S_Y^-1 G"))
    if u == 0:
        avar = np.zeros((r * m.p, r * m.p))
    else:
        avar = _envelope_avar(m.S_X, basis, basis0, Omega, Omega0,
                              basis.T @ um.beta)
    return EnvelopeFit(
        kind="em", intercept_mode=m.intercept_mode,
        n=m.n, p=m.p, r=r, k=m.k, dim=u,
        beta0=m.ybar - beta @ m.xbar, beta=beta,
        Sigma=0.5 * (Sigma + Sigma.T), loglik=loglik,
        n_params=r + m.p * u + r * (r + 1) // 2,
        avar_beta=avar, basis=basis, basis0=basis0,
        Omega=Omega, Omega0=Omega0)


def fit_ecm(data, u, opts=None, moments=None):
    """Envelope reduction inside the constrained coordinates."""
    m = moments or compute_moments(data)
    k = m.k
    if not 0 <= u <= k:
        raise Unidentifiable(f"u={u} outside [0, {k}]")
    alpha_cm = _alpha_cm(m)
    S_D_S_inv = np.linalg.inv(m.S_D_S)
    basis = minimize_envelope_objective(m.S_D_XS, S_D_S_inv, u, opts)
    basis0 = complete_basis(basis) if u < k else np.empty((k, 0))
    Omega = basis.T @ m.S_D_XS @ basis
    Omega0 = basis0.T @ m.S_D_S @ basis0
    alpha = basis @ (basis.T @ alpha_cm)
    phi = _phi_hat(m, alpha)
    Sigma_D_S = basis @ Omega @ basis.T + basis0 @ Omega0 @ basis0.T
    U, U0 = data.U, data.transform.U0
    Sigma = _assemble_sigma(U, U0, Sigma_D_S, phi, m.sigma_S)
    loglik = _const(m) - 0.5 * m.n * (
        _logdet_pd(m.sigma_S, "Sigma_S")
        + _logdet_pd(m.S_D_S, "S_D|S")
        + _logdet_pd(basis.T @ m.S_D_XS @ basis, "G'S_D|(X,S) G")
        + _logdet_pd(basis.T @ S_D_S_inv @ basis, "G'S_D|S^-1 G"))
    if u == 0:
        avar_alpha = np.zeros((k * m.p, k * m.p))
    else:
        avar_alpha = _envelope_avar(m.S_X, basis, basis0, Omega, Omega0,
                                    basis.T @ alpha_cm)
    IU = np.kron(np.eye(m.p), U)
    return EnvelopeFit(
        kind="ecm", intercept_mode=m.intercept_mode,
        n=m.n, p=m.p, r=m.r, k=k, dim=u,
        beta0=_constrained_intercept(data, m, alpha, phi),
        beta=U @ alpha, Sigma=Sigma, loglik=loglik,
        n_params=_intercept_count(m) + m.p * u + m.r * (m.r + 1) // 2,
        avar_beta=IU @ avar_alpha @ IU.T,
        alpha=alpha, basis=basis, basis0=basis0,
        Omega=Omega, Omega0=Omega0, phi=phi, avar_alpha=avar_alpha)


def _golden_min(f, x0, step=0.5, tol=1e-10, max_expand=100):
    """Bracketed golden-section minimization of a 1-D function around x0."""
    b, fb = x0, f(x0)
    a, c = x0 - step, x0 + step
    fa, fc = f(a), f(c)
    for _ in range(max_expand):  # walk downhill until bracketed
        if fa < fb:
            c, fc = b, fb
            b, fb = a, fa
            a = b - 2.0 * (c - b)
            fa = f(a)
        elif fc < fb:
            a, fa = b, fb
            b, fb = c, fc
            c = b + 2.0 * (b - a)
            fc = f(c)
        else:
            break
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    lo, hi = a, c
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = f(x2)
    return 0.5 * (lo + hi)


def _descend(M1, M2, G, tol=1e-8, max_sweeps=500, max_inner=40,
             inner_tol=1e-12):
    """Warm-started coordinate descent on a fixed objective; returns f."""
    f = envelope_objective(G, M1, M2)
    for _ in range(max_sweeps):
        kernels.sweep(M1, M2, G, max_inner, inner_tol)
        f_new = envelope_objective(G, M1, M2)
        if f - f_new <= tol * max(1.0, abs(f)):
            return min(f, f_new)
        f = f_new
    return f


def _minimize_scaled(S1, S2, v, opts=None):
    """Joint minimization over scales and basis for the scaled envelope.

    Alternates a basis block (coordinate descent at fixed scales) with
    per-element golden-section searches on the log scales.  Returns
    (scales, basis, objective).
    """
    opts = opts or OptimizerOptions()
    k = S1.shape[0]

    def mats(la):
        s = np.exp(la)
        M1 = S1 * np.outer(s, s)
        M2 = np.linalg.inv(S2 * np.outer(s, s))
        return 0.5 * (M1 + M1.T), 0.5 * (M2 + M2.T)

    def run(loga0):
        loga = loga0.copy()
        G = np.array(minimize_envelope_objective(*mats(loga), v, opts),
                     order="C")
        f = envelope_objective(G, *mats(loga))
        for _ in range(200):
            for j in range(1, k):
                def fj(x, j=j):
                    la = loga.copy()
                    la[j] = x
                    return envelope_objective(G, *mats(la))
                loga[j] = _golden_min(fj, loga[j])
            M1, M2 = mats(loga)
            f_new = _descend(M1, M2, G, tol=opts.tol,
                             max_sweeps=opts.max_sweeps,
                             max_inner=opts.max_inner,
                             inner_tol=opts.inner_tol)
            # warm-started descent can track a stale branch once the
            # scales move far; a fresh multi-start escapes it when better
            G_fresh = np.array(minimize_envelope_objective(M1, M2, v, opts),
                               order="C")
            f_fresh = envelope_objective(G_fresh, M1, M2)
            if f_fresh < f_new:
                G[...] = G_fresh
                f_new = f_fresh
            if f - f_new <= 1e-8 * max(1.0, abs(f)):
                return loga, G, min(f, f_new)
            f = f_new
        return loga, G, f

    # scale starts: identity plus standardizations by either moment's
    # diagonal (the joint landscape has local minima in the scales)
    starts = [np.zeros(k)]
    for Smat in (S2, S1):
        la = -0.5 * np.log(np.diag(Smat))
        starts.append(la - la[0])
    best = None
    for loga0 in starts:
        loga, G, f = run(loga0)
        if best is None or f < best[2]:
            best = (loga, G, f)
    loga, G, f = best
    return np.exp(loga), canonicalize(G), f


def _vech(M):
    k = M.shape[0]
    idx = np.tril_indices(k)
    return M[idx]


def _duplication(k):
    """D with vec(S) = D vech(S) for symmetric k x k S."""
    D = np.zeros((k * k, k * (k + 1) // 2))
    # column order must match _vech (np.tril_indices ordering)
    for col, (i, j) in enumerate(zip(*np.tril_indices(k))):
        D[j * k + i, col] = 1.0
        D[i * k + j, col] = 1.0
    return D


def _inv_sqrt_sym(M):
    vals, vecs = np.linalg.eigh(M)
    return (vecs / np.sqrt(vals)) @ vecs.T


def sandwich_avar_alpha(S_X, basis, basis0, Omega, Omega0, eta, scales=None):
    """avar(sqrt(n) vec alpha_hat) by the reduced-parameter sandwich.

    The structured parameters psi are (vec eta, log scales, tangent
    coordinates of the basis, vech Omega, vech Omega0); h(psi) maps them to
    the unstructured (vec alpha, vech Sigma_D_S).  The sandwich
    H (H'JH)^+ H' with J the Gaussian information for the unstructured
    parameters gives the asymptotic variance; the vec(alpha) block is
    returned.  With scales=None the scaling is pinned to identity, which
    serves as an independent check of the closed-form envelope variance.
    """
    k, v = basis.shape
    p = eta.shape[1]
    use_scales = scales is not None
    lam = np.ones(k) if scales is None else np.asarray(scales, dtype=float)

    n_eta = v * p
    n_lam = (k - 1) if use_scales else 0
    n_t = (k - v) * v
    n_om = v * (v + 1) // 2
    n_om0 = (k - v) * (k - v + 1) // 2

    def h(psi):
        pos = 0
        eta_ = psi[pos:pos + n_eta].reshape(v, p, order="F"); pos += n_eta
        lam_ = lam.copy()
        if use_scales:
            lam_[1:] = np.exp(psi[pos:pos + n_lam]); pos += n_lam
        T = psi[pos:pos + n_t].reshape(k - v, v, order="F"); pos += n_t
        Om = np.zeros((v, v))
        Om[np.tril_indices(v)] = psi[pos:pos + n_om]; pos += n_om
        Om = Om + np.tril(Om, -1).T
        Om0 = np.zeros((k - v, k - v))
        Om0[np.tril_indices(k - v)] = psi[pos:pos + n_om0]; pos += n_om0
        Om0 = Om0 + np.tril(Om0, -1).T
        # polar retraction keeps (Th, Th0) an exact orthogonal pair
        Th = (basis + basis0 @ T) @ _inv_sqrt_sym(np.eye(v) + T.T @ T)
        Th0 = (basis0 - basis @ T.T) @ _inv_sqrt_sym(np.eye(k - v) + T @ T.T)
        Linv = 1.0 / lam_
        alpha = (Linv[:, None] * Th) @ eta_
        Sig = (Th @ Om @ Th.T + Th0 @ Om0 @ Th0.T) * np.outer(Linv, Linv)
        return np.concatenate([alpha.reshape(-1, order="F"), _vech(Sig)])

    psi0 = np.concatenate([
        eta.reshape(-1, order="F"),
        np.log(lam[1:]) if use_scales else np.empty(0),
        np.zeros(n_t), _vech(Omega), _vech(Omega0)])
    n_psi = psi0.size
    h0 = h(psi0)
    H = np.empty((h0.size, n_psi))
    for i in range(n_psi):
        step = 1e-6 * max(1.0, abs(psi0[i]))
        up = psi0.copy(); up[i] += step
        dn = psi0.copy(); dn[i] -= step
        H[:, i] = (h(up) - h(dn)) / (2.0 * step)

    Linv = 1.0 / lam
    Sig0 = (basis @ Omega @ basis.T + basis0 @ Omega0 @ basis0.T) \
        * np.outer(Linv, Linv)
    Sig0_inv = np.linalg.inv(Sig0)
    D = _duplication(k)
    J = np.zeros((k * p + k * (k + 1) // 2,) * 2)
    J[:k * p, :k * p] = np.kron(S_X, Sig0_inv)
    J[k * p:, k * p:] = 0.5 * D.T @ np.kron(Sig0_inv, Sig0_inv) @ D
    V = H @ _sym_pinv(H.T @ J @ H) @ H.T
    return V[:k * p, :k * p]


def fit_secm(data, v, opts=None, moments=None):
    """Scaled constrained-envelope MLE at fixed dimension v."""
    m = moments or compute_moments(data)
    k = m.k
    if not 1 <= v <= k:
        raise Unidentifiable(f"v={v} outside [1, {k}]")
    if m.p * (k - v) < k - 1:
        raise Unidentifiable(
            f"p(k-v)={m.p * (k - v)} < k-1={k - 1}: scales not identifiable")
    alpha_cm = _alpha_cm(m)
    scales, basis, _ = _minimize_scaled(m.S_D_XS, m.S_D_S, v, opts)
    Lam = scales
    basis0 = complete_basis(basis) if v < k else np.empty((k, 0))
    LSL = m.S_D_XS * np.outer(Lam, Lam)
    LS2L = m.S_D_S * np.outer(Lam, Lam)
    Omega = basis.T @ LSL @ basis
    Omega0 = basis0.T @ LS2L @ basis0
    eta = basis.T @ (Lam[:, None] * alpha_cm)
    alpha = (basis / Lam[:, None]) @ eta
    phi = _phi_hat(m, alpha)
    Sigma_D_S = (basis @ Omega @ basis.T + basis0 @ Omega0 @ basis0.T) \
        / np.outer(Lam, Lam)
    U, U0 = data.U, data.transform.U0
    Sigma = _assemble_sigma(U, U0, Sigma_D_S, phi, m.sigma_S)
    inv_scaled = np.linalg.inv(m.S_D_S) / np.outer(Lam, Lam)
    loglik = _const(m) - 0.5 * m.n * (
        _logdet_pd(m.sigma_S, "Sigma_S")
        + _logdet_pd(m.S_D_S, "S_D|S")
        + _logdet_pd(basis.T @ LSL @ basis, "G'LS_D|(X,S)LG")
        + _logdet_pd(basis.T @ inv_scaled @ basis, "G'L^-1 S_D|S^-1 L^-1 G"))
    if k == 1 or v == k:
        avar_alpha = sandwich_avar_alpha(m.S_X, basis, basis0,
                                         Omega, Omega0, eta)
    else:
        avar_alpha = sandwich_avar_alpha(m.S_X, basis, basis0,
                                         Omega, Omega0, eta, scales=Lam)
    IU = np.kron(np.eye(m.p), U)
    return EnvelopeFit(
        kind="secm", intercept_mode=m.intercept_mode,
        n=m.n, p=m.p, r=m.r, k=k, dim=v,
        beta0=_constrained_intercept(data, m, alpha, phi),
        beta=U @ alpha, Sigma=Sigma, loglik=loglik,
        n_params=_intercept_count(m) + k - 1 + m.p * v
        + m.r * (m.r + 1) // 2,
        avar_beta=IU @ avar_alpha @ IU.T,
        alpha=alpha, basis=basis, basis0=basis0,
        Omega=Omega, Omega0=Omega0, Lambda=Lam, phi=phi,
        avar_alpha=avar_alpha)
