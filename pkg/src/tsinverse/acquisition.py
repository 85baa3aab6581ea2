"""Expected improvement and its maximization over the unit cube.

Improvement is measured against the best (smallest) objective value observed
so far.  For a Gaussian predictive distribution EI has the closed form

    EI(x) = (ymin - yhat) * Phi(u) + s * phi(u),   u = (ymin - yhat) / s,

degenerating to max(ymin - yhat, 0) when s = 0.  For surrogates that expose
posterior draws instead of a Gaussian, EI is the Monte Carlo average
mean_k max(ymin - y*_k, 0).

The maximizer screens a space-filling candidate set; surrogates with a
Gaussian predictive additionally get local ascents started from the best
candidates.  Exact ties are broken by the smaller predicted value, then by
lexicographically smallest x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .design import latin_hypercube

__all__ = [
    "expected_improvement",
    "expected_improvement_from_draws",
    "select_candidate",
    "maximize_expected_improvement",
    "AcquisitionResult",
]

DUPLICATE_TOL = 1e-9


def expected_improvement(mean, std, best: float):
    """Closed-form EI for minimization, elementwise over predictions."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise ValueError("predictive standard deviations must be nonnegative")
    diff = best - mean
    out = np.maximum(diff, 0.0)
    pos = std > 0
    if np.any(pos):
        u = diff[pos] / std[pos]
        out = np.asarray(out, dtype=float)
        out[pos] = diff[pos] * norm.cdf(u) + std[pos] * norm.pdf(u)
    return np.maximum(out, 0.0)


def expected_improvement_from_draws(draws, best: float):
    """Monte Carlo EI from posterior draws.

    ``draws`` has shape (K,) for one point or (K, Q) for Q points; the result
    is a scalar or a length-Q vector accordingly.
    """
    draws = np.asarray(draws, dtype=float)
    imp = np.maximum(best - draws, 0.0)
    out = imp.mean(axis=0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AcquisitionResult:
    x: np.ndarray
    ei: float
    predicted: float


def select_candidate(
    points: np.ndarray,
    ei: np.ndarray,
    predicted: np.ndarray,
    avoid: np.ndarray | None = None,
    avoid_tol: float = DUPLICATE_TOL,
) -> int:
    """Index of the winning candidate.

    Order by EI descending, then predicted value ascending, then lexicographic
    x.  Points within ``avoid_tol`` (max-norm) of a row of ``avoid`` are
    passed over; if every point is excluded the overall winner is returned
    anyway so the caller always gets a candidate.
    """
    points = np.asarray(points, dtype=float)
    ei = np.asarray(ei, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    keys = [points[:, k] for k in range(points.shape[1] - 1, -1, -1)]
    keys.append(predicted)
    keys.append(-ei)
    order = np.lexsort(keys)
    if avoid is None or len(avoid) == 0:
        return int(order[0])
    avoid = np.atleast_2d(np.asarray(avoid, dtype=float))
    for idx in order:
        gap = np.max(np.abs(avoid - points[idx]), axis=1).min()
        if gap > avoid_tol:
            return int(idx)
    return int(order[0])


def maximize_expected_improvement(
    model,
    best: float,
    dim: int,
    n_candidates: int | None = None,
    n_multistart: int = 10,
    rng=None,
    candidates: np.ndarray | None = None,
    candidate_draws: np.ndarray | None = None,
    avoid: np.ndarray | None = None,
    avoid_tol: float = DUPLICATE_TOL,
) -> AcquisitionResult:
    """Maximize EI over [0, 1]^dim for a fitted surrogate.

    ``model`` must offer either ``predict(X, return_std=True)`` (Gaussian
    predictive; candidate screening plus ``n_multistart`` L-BFGS-B ascents) or
    ``predict_draws(X)`` (draw-based EI on the candidates alone).  A candidate
    set and, for the draw-based path, its draws may be passed in to reuse
    values computed elsewhere; otherwise ``n_candidates`` points (default
    1000 * dim) are sampled as a random Latin hypercube.
    """
    rng = np.random.default_rng(rng)
    if candidates is None:
        if n_candidates is None:
            n_candidates = 1000 * dim
        candidates = latin_hypercube(n_candidates, dim, rng=rng, variant="random")
    else:
        candidates = np.atleast_2d(np.asarray(candidates, dtype=float))

    gaussian = candidate_draws is None and not hasattr(model, "predict_draws")
    if gaussian:
        mean, std = model.predict(candidates, return_std=True)
        ei = expected_improvement(mean, std, best)
        predicted = mean
    else:
        if candidate_draws is None:
            candidate_draws = model.predict_draws(candidates)
        ei = expected_improvement_from_draws(candidate_draws, best)
        predicted = candidate_draws.mean(axis=0)

    points = candidates
    if gaussian and n_multistart > 0:

        def neg_ei(x):
            m, s = model.predict(x.reshape(1, -1), return_std=True)
            return -float(expected_improvement(m, s, best)[0])

        n_starts = min(n_multistart, len(candidates))
        start_idx = select_top(ei, predicted, candidates, n_starts)
        extra = []
        for idx in start_idx:
            res = minimize(
                neg_ei,
                candidates[idx],
                method="L-BFGS-B",
                bounds=[(0.0, 1.0)] * dim,
            )
            extra.append(np.clip(res.x, 0.0, 1.0))
        if extra:
            extra = np.asarray(extra)
            m, s = model.predict(extra, return_std=True)
            points = np.vstack([candidates, extra])
            ei = np.concatenate([ei, expected_improvement(m, s, best)])
            predicted = np.concatenate([predicted, m])

    winner = select_candidate(points, ei, predicted, avoid=avoid, avoid_tol=avoid_tol)
    return AcquisitionResult(
        x=points[winner].copy(), ei=float(ei[winner]), predicted=float(predicted[winner])
    )


def select_top(ei, predicted, points, k: int) -> np.ndarray:
    """Indices of the k best points by the same ordering as selection."""
    keys = [points[:, j] for j in range(points.shape[1] - 1, -1, -1)]
    keys.append(np.asarray(predicted, dtype=float))
    keys.append(-np.asarray(ei, dtype=float))
    return np.lexsort(keys)[:k]
