"""Shared synthetic-data builders for the test suite."""

import numpy as np
import pytest

from envcore.linalg import complete_basis
from envcore.model import Dataset


def orthonormal(rng, r, u):
    Q, R = np.linalg.qr(rng.standard_normal((r, u)))
    return Q * np.sign(np.diag(R))


def make_um_data(seed=0, n=200, r=4, p=2):
    """Unstructured multivariate regression data."""
    rng = np.random.default_rng(seed)
    beta0 = rng.standard_normal(r)
    beta = rng.standard_normal((r, p))
    A = rng.standard_normal((r, 2 * r))
    Sigma = A @ A.T / (2 * r)
    X = rng.standard_normal((n, p))
    Y = beta0 + X @ beta.T + rng.multivariate_normal(np.zeros(r), Sigma, n)
    return Y, X, beta0, beta, Sigma


def make_ecm_data(seed=0, n=600, r=6, k=4, p=2, u=2, scales=None,
                  intercept_mode="model2", snr=1.0):
    """Data satisfying the constrained-envelope structure exactly.

    The coefficient span lies inside span(U); within the constrained
    coordinates the regression loads on a u-dimensional reducing subspace
    of the conditional covariance.  Optional per-coordinate scales produce
    data where the envelope only appears after rescaling.
    """
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((r, k))
    U0 = complete_basis(np.linalg.qr(U)[0] * np.sign(np.diag(np.linalg.qr(U)[1])))
    Phi = orthonormal(rng, k, u)
    Phi0 = complete_basis(Phi) if u < k else np.empty((k, 0))
    Omega = np.diag(np.linspace(1.0, 2.0, u)) if u else np.empty((0, 0))
    Omega0 = np.diag(np.linspace(4.0, 9.0, k - u))
    Sigma_D_XS = Phi @ Omega @ Phi.T + Phi0 @ Omega0 @ Phi0.T
    if scales is not None:
        L = np.diag(1.0 / np.asarray(scales))
        Sigma_D_XS = L @ Sigma_D_XS @ L
        # with scales, the envelope holds for the rescaled coordinates
    eta = snr * rng.standard_normal((u, p))
    alpha = Phi @ eta
    if scales is not None:
        alpha = np.diag(1.0 / np.asarray(scales)) @ alpha
    phi = 0.5 * rng.standard_normal((k, r - k))
    X = rng.standard_normal((n, p))
    S = rng.standard_normal((n, r - k))
    D = X @ alpha.T + S @ phi.T \
        + rng.multivariate_normal(np.zeros(k), Sigma_D_XS, n)
    Y = D @ U.T + S @ U0.T
    data = Dataset(Y=Y, X=X, U=U, intercept_mode=intercept_mode)
    truth = dict(U=U, U0=U0, Phi=Phi, Omega=Omega, Omega0=Omega0,
                 Sigma_D_XS=Sigma_D_XS, eta=eta, alpha=alpha, phi=phi,
                 beta=U @ alpha)
    return data, truth


def make_em_data(seed=0, n=800, r=5, p=2, u=2):
    """Data following the marginal envelope model exactly."""
    rng = np.random.default_rng(seed)
    Gamma = orthonormal(rng, r, u)
    Gamma0 = complete_basis(Gamma)
    Omega = np.diag(np.linspace(1.0, 2.0, u))
    Omega0 = np.diag(np.linspace(5.0, 10.0, r - u))
    Sigma = Gamma @ Omega @ Gamma.T + Gamma0 @ Omega0 @ Gamma0.T
    eta = rng.standard_normal((u, p))
    beta = Gamma @ eta
    X = rng.standard_normal((n, p))
    Y = X @ beta.T + rng.multivariate_normal(np.zeros(r), Sigma, n)
    truth = dict(Gamma=Gamma, Gamma0=Gamma0, Omega=Omega, Omega0=Omega0,
                 Sigma=Sigma, eta=eta, beta=beta)
    return Y, X, truth


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
