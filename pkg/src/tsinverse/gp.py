"""Gaussian process surrogate with a constant mean and power-exponential kernel.

The model is y(x) = mu + Z(x) where Z is a zero-mean stationary process with
correlation

    R(x, x') = exp( -sum_k theta_k |x_k - x'_k|^p_k ),

p_k = 2 by default.  mu and the process variance are profiled out of the
likelihood, so fitting reduces to minimizing

    n * log(sigma2_hat(theta)) + log det(R(theta) + delta I)

over theta on a log scale, where delta is a small nugget escalated tenfold on
factorization failure.  Prediction is the usual linear predictor with variance
s^2(x) = sigma2 * (1 - r(x)^T (R + delta I)^{-1} r(x)), clamped at zero.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .design import latin_hypercube

__all__ = [
    "GaussianProcessSurrogate",
    "GPFitError",
    "correlation_matrix",
    "profile_objective",
]

THETA_BOUNDS = (1e-3, 1e3)
DEFAULT_NUGGET = 1e-8
MAX_NUGGET = 1e-4
# relative floor keeping the fitted variance positive; absolute fallback for
# constant responses where sd(y) = 0
VARIANCE_FLOOR_REL = 1e-12
VARIANCE_FLOOR_ABS = 1e-24


class GPFitError(RuntimeError):
    """Correlation matrix could not be factorized even at the maximum nugget."""


def _as_theta(theta, d: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 0:
        theta = np.full(d, float(theta))
    if theta.shape != (d,):
        raise ValueError(f"theta must have length {d}, got shape {theta.shape}")
    if np.any(theta <= 0):
        raise ValueError(f"theta must be positive, got {theta}")
    return theta


def _as_power(power, d: int) -> np.ndarray:
    p = np.asarray(power, dtype=float)
    if p.ndim == 0:
        p = np.full(d, float(p))
    if p.shape != (d,):
        raise ValueError(f"power must be a scalar or length-{d}, got shape {p.shape}")
    if np.any(p <= 0) or np.any(p > 2):
        raise ValueError(f"power entries must lie in (0, 2], got {p}")
    return p


def correlation_matrix(A: np.ndarray, B: np.ndarray, theta, power=2.0) -> np.ndarray:
    """Cross-correlation matrix between row sets A (q, d) and B (n, d)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    d = A.shape[1]
    theta = _as_theta(theta, d)
    p = _as_power(power, d)
    diff = np.abs(A[:, None, :] - B[None, :, :])
    return np.exp(-np.einsum("qnk,k->qn", diff**p, theta))


def _chol_with_nugget(R: np.ndarray, nugget: float, max_nugget: float):
    """Lower Cholesky factor of R + delta I, escalating delta tenfold as needed."""
    n = R.shape[0]
    delta = nugget
    eye = np.eye(n)
    while True:
        try:
            L = cholesky(R + delta * eye, lower=True)
            return L, delta
        except LinAlgError:
            delta *= 10.0
            if delta > max_nugget * (1.0 + 1e-12):
                raise GPFitError(
                    f"correlation matrix not positive definite even with nugget {max_nugget}"
                ) from None


def _profile(X, y, theta, power, nugget, max_nugget):
    """Profile out mu and sigma2 at fixed theta.

    Returns (objective, mu_hat, sigma2_hat, L, delta) where L is the lower
    Cholesky factor of R + delta I.
    """
    n = X.shape[0]
    R = correlation_matrix(X, X, theta, power)
    L, delta = _chol_with_nugget(R, nugget, max_nugget)
    a = solve_triangular(L, y, lower=True)
    b = solve_triangular(L, np.ones(n), lower=True)
    mu = float(b @ a) / float(b @ b)
    resid = a - mu * b
    sigma2 = float(resid @ resid) / n
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    objective = n * np.log(max(sigma2, 1e-300)) + logdet
    return objective, mu, sigma2, L, delta


def profile_objective(X, y, theta, power=2.0, nugget=DEFAULT_NUGGET, max_nugget=MAX_NUGGET):
    """Concentrated log-likelihood objective at fixed theta (lower is better).

    Returns (objective, mu_hat, sigma2_hat, nugget_used).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    objective, mu, sigma2, _, delta = _profile(X, y, theta, power, nugget, max_nugget)
    return objective, mu, sigma2, delta


class GaussianProcessSurrogate(RegressorMixin, BaseEstimator):
    """Interpolating GP with profiled constant mean and power-exponential kernel.

    Parameters
    ----------
    power : float or array-like
        Kernel exponents p_k in (0, 2]; 2 gives the Gaussian kernel.
    n_starts : int
        Multistart count for the log-scale L-BFGS-B search over theta.
    theta_bounds : (float, float)
        Box for every theta_k.
    nugget, max_nugget : float
        Initial diagonal jitter and the escalation cap.
    random_state : None, int or Generator
        Seeds the multistart locations only.
    """

    def __init__(
        self,
        power=2.0,
        n_starts: int = 20,
        theta_bounds=THETA_BOUNDS,
        nugget: float = DEFAULT_NUGGET,
        max_nugget: float = MAX_NUGGET,
        random_state=None,
    ):
        self.power = power
        self.n_starts = n_starts
        self.theta_bounds = theta_bounds
        self.nugget = nugget
        self.max_nugget = max_nugget
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        y = y.astype(float)
        n, d = X.shape
        lo, hi = self.theta_bounds
        if not (0 < lo < hi):
            raise ValueError(f"invalid theta bounds {self.theta_bounds}")
        if self.n_starts < 1:
            raise ValueError(f"need at least one start, got {self.n_starts}")
        power = _as_power(self.power, d)
        rng = np.random.default_rng(self.random_state)

        zlo, zhi = np.log(lo), np.log(hi)
        starts = zlo + (zhi - zlo) * latin_hypercube(self.n_starts, d, rng=rng, variant="random")

        def objective(z):
            value, _, _, _, _ = _profile(X, y, np.exp(z), power, self.nugget, self.max_nugget)
            return value

        best_fun = np.inf
        best_z = starts[0]
        for z0 in starts:
            res = minimize(
                objective,
                z0,
                method="L-BFGS-B",
                bounds=[(zlo, zhi)] * d,
            )
            if np.isfinite(res.fun) and res.fun < best_fun:
                best_fun = float(res.fun)
                best_z = res.x

        theta = np.exp(best_z)
        objective_value, mu, sigma2, L, delta = _profile(
            X, y, theta, power, self.nugget, self.max_nugget
        )
        sd = float(np.std(y))
        sigma2 = max(sigma2, VARIANCE_FLOOR_REL * sd * sd, VARIANCE_FLOOR_ABS)

        resid = y - mu
        tmp = solve_triangular(L, resid, lower=True)
        alpha = solve_triangular(L.T, tmp, lower=False)

        self.X_train_ = X
        self.y_train_ = y
        self.theta_ = theta
        self.power_ = power
        self.mu_ = mu
        self.sigma2_ = sigma2
        self.nugget_ = delta
        self.objective_ = objective_value
        self.L_ = L
        self.alpha_ = alpha
        self.n_features_in_ = d
        return self

    def predict(self, X, return_std: bool = False):
        check_is_fitted(self, "theta_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        r = correlation_matrix(X, self.X_train_, self.theta_, self.power_)
        mean = self.mu_ + r @ self.alpha_
        if not return_std:
            return mean
        v = solve_triangular(self.L_, r.T, lower=True)
        s2 = self.sigma2_ * np.clip(1.0 - np.sum(v * v, axis=0), 0.0, None)
        return mean, np.sqrt(s2)

    def to_dict(self) -> dict:
        """Fit summary for audit: hyperparameters, profiled estimates, data."""
        check_is_fitted(self, "theta_")
        return {
            "mu": self.mu_,
            "sigma2": self.sigma2_,
            "theta": self.theta_.tolist(),
            "power": self.power_.tolist(),
            "nugget": self.nugget_,
            "objective": self.objective_,
            "X": self.X_train_.tolist(),
            "y": self.y_train_.tolist(),
        }

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
