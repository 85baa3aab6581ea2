"""Latin hypercube designs on the unit cube."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import pdist

__all__ = ["latin_hypercube"]


def _one_design(n: int, d: int, rng: np.random.Generator, midpoint: bool) -> np.ndarray:
    sample = np.empty((n, d), dtype=float)
    for k in range(d):
        perm = rng.permutation(n)
        if midpoint:
            offsets = 0.5
        else:
            offsets = rng.uniform(size=n)
        sample[:, k] = (perm + offsets) / n
    return sample


def min_pairwise_distance(points: np.ndarray) -> float:
    if points.shape[0] < 2:
        return np.inf
    return float(pdist(points).min())


def latin_hypercube(
    n: int,
    d: int,
    seed=None,
    variant: str = "maximin",
    n_restarts: int = 100,
    midpoint: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Sample an n-point Latin hypercube design in [0, 1]^d.

    Every column has exactly one point in each stratum [i/n, (i+1)/n).  The
    "maximin" variant draws ``n_restarts`` designs and keeps the one with the
    largest minimum pairwise Euclidean distance (first winner on ties), with
    the first restart identical to what ``variant="random"`` would return for
    the same seed.  ``midpoint=True`` centers points in their cells instead of
    jittering them.

    Pass either ``seed`` (anything ``np.random.default_rng`` accepts) or an
    existing generator ``rng`` to draw from.
    """
    if n < 1:
        raise ValueError(f"design size must be >= 1, got n={n}")
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got d={d}")
    if variant not in ("random", "maximin"):
        raise ValueError(f"unknown variant {variant!r}; use 'random' or 'maximin'")
    if rng is None:
        rng = np.random.default_rng(seed)

    if variant == "random" or n == 1:
        return _one_design(n, d, rng, midpoint)

    if n_restarts < 1:
        raise ValueError(f"need at least one restart, got {n_restarts}")
    best = None
    best_score = -np.inf
    for _ in range(n_restarts):
        cand = _one_design(n, d, rng, midpoint)
        score = min_pairwise_distance(cand)
        if score > best_score:
            best, best_score = cand, score
    return best
