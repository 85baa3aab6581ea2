"""Sum-of-trees regression with full posterior sampling.

The response is min-max transformed to [-0.5, 0.5] and modeled as a sum of m
regression trees plus Gaussian noise.  Leaf means carry a N(0, 1/(4 k^2 m))
prior so the ensemble spans the transformed data range; tree shapes follow the
usual depth-penalizing prior alpha * (1 + depth)^(-beta) with uniform rules
over 100 equally spaced cutpoints per dimension; the noise variance gets a
scaled inverse chi-square prior whose scale is anchored so that
P(sigma_eps <= sigma_frac * sd(y~)) = sigma_quantile.

Sampling is Metropolis-within-Gibbs backfitting: per iteration each tree in
turn proposes one structure move (grow 0.25 / prune 0.25 / change 0.40 /
swap 0.10) scored by the integrated likelihood with leaf means marginalized
out, then redraws its leaf values from their conjugate normals; the noise
variance is redrawn once per sweep.  Every leaf always holds at least one
training point.  Retained draws are noise-free ensemble predictions.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.stats import chi2
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ._treekernels import LEAF, gather_eval, predict_points, run_iteration

__all__ = ["BartRegressor", "sigma_prior_scale", "quantiles_from_draws"]

# substitute spread for the noise-prior anchor when the response is constant
DEGENERATE_SD = 1e-6


def sigma_prior_scale(sd: float, df: float, quantile: float, frac: float) -> float:
    """Scale lambda of the nu*lambda/chi2_nu noise prior.

    Solves P(sigma_eps <= frac * sd) = quantile for lambda, where
    sigma_eps^2 ~ df * lambda / chi2_df.
    """
    if not 0 < quantile < 1:
        raise ValueError(f"quantile must be in (0, 1), got {quantile}")
    if df <= 0 or frac <= 0:
        raise ValueError(f"need positive df and frac, got df={df}, frac={frac}")
    if sd <= 0:
        sd = DEGENERATE_SD
    q0 = frac * sd
    return q0 * q0 * chi2.ppf(1.0 - quantile, df) / df


def quantiles_from_draws(draws: np.ndarray, probs) -> np.ndarray:
    """Linear-interpolation quantiles over the draw axis (axis 0)."""
    return np.quantile(np.asarray(draws, dtype=float), probs, axis=0, method="linear")


class BartRegressor(RegressorMixin, BaseEstimator):
    """Bayesian sum-of-trees regressor on the unit cube.

    Parameters
    ----------
    n_trees : int
        Ensemble size m.
    n_iter, burn_in, thin : int
        Chain length, discarded prefix, and retention stride; the number of
        retained draws is ceil((n_iter - burn_in) / thin).
    k : float
        Leaf-mean prior tightness; the prior sd is 1 / (2 k sqrt(m)).
    sigma_df, sigma_quantile, sigma_frac : float
        Noise-variance prior: df, and the anchor
        P(sigma_eps <= sigma_frac * sd(y~)) = sigma_quantile.
    n_cutpoints : int
        Equally spaced interior cutpoints per dimension on [0, 1].
    split_alpha, split_beta : float
        Depth prior alpha * (1 + depth)^(-beta).
    move_probs : tuple of four floats
        Probabilities of grow, prune, change, swap; must sum to 1.
    store_ensembles : bool
        Keep a compact copy of every retained ensemble so ``predict`` works at
        arbitrary points; turn off to save memory when only ``eval_X``
        predictions are needed.
    random_state : None, int or Generator
        Seeds the chain; a given seed reproduces every draw bit for bit.
    """

    def __init__(
        self,
        n_trees: int = 200,
        n_iter: int = 2000,
        burn_in: int = 500,
        thin: int = 1,
        k: float = 1.0,
        sigma_df: float = 3.0,
        sigma_quantile: float = 0.90,
        sigma_frac: float = 0.20,
        n_cutpoints: int = 100,
        split_alpha: float = 0.95,
        split_beta: float = 2.0,
        move_probs=(0.25, 0.25, 0.40, 0.10),
        store_ensembles: bool = True,
        random_state=None,
    ):
        self.n_trees = n_trees
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.k = k
        self.sigma_df = sigma_df
        self.sigma_quantile = sigma_quantile
        self.sigma_frac = sigma_frac
        self.n_cutpoints = n_cutpoints
        self.split_alpha = split_alpha
        self.split_beta = split_beta
        self.move_probs = move_probs
        self.store_ensembles = store_ensembles
        self.random_state = random_state

    def _check_params(self):
        if self.n_trees < 1:
            raise ValueError(f"need at least one tree, got {self.n_trees}")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError(
                f"burn_in must satisfy 0 <= burn_in < n_iter, got {self.burn_in}/{self.n_iter}"
            )
        if self.thin < 1:
            raise ValueError(f"thin must be >= 1, got {self.thin}")
        if self.n_cutpoints < 1:
            raise ValueError(f"need at least one cutpoint, got {self.n_cutpoints}")
        if not 0 < self.split_alpha < 1:
            raise ValueError(f"split_alpha must be in (0, 1), got {self.split_alpha}")
        if self.k <= 0:
            raise ValueError(f"k must be positive, got {self.k}")
        probs = np.asarray(self.move_probs, dtype=float)
        if probs.shape != (4,) or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(
                f"move_probs must be four nonnegative numbers summing to 1, got {self.move_probs}"
            )
        return probs

    def _check_box(self, X, name):
        if X.size and (X.min() < 0.0 or X.max() > 1.0):
            raise ValueError(f"{name} must lie in the unit cube [0, 1]^d")

    def fit(self, X, y, eval_X=None):
        """Run the chain.  If ``eval_X`` is given, per-draw ensemble
        predictions there are accumulated during sampling into
        ``eval_draws_`` (original response scale)."""
        probs = self._check_params()
        X, y = check_X_y(X, y, y_numeric=True)
        y = y.astype(float)
        self._check_box(X, "X")
        n, d = X.shape
        m = int(self.n_trees)

        if eval_X is not None:
            eval_X = check_array(eval_X)
            if eval_X.shape[1] != d:
                raise ValueError(
                    f"eval_X has {eval_X.shape[1]} features, expected {d}"
                )
            self._check_box(eval_X, "eval_X")
            Xeval = np.ascontiguousarray(eval_X, dtype=float)
        else:
            Xeval = np.empty((0, d), dtype=float)
        n_eval = Xeval.shape[0]

        # response transform to [-0.5, 0.5]
        y_min = float(y.min())
        y_range = float(y.max() - y.min())
        scale = y_range if y_range > 0 else 1.0
        ytil = (y - y_min) / scale - 0.5
        sd_til = float(np.std(ytil, ddof=1)) if n > 1 else 0.0

        sigma_mu2 = 1.0 / (4.0 * self.k * self.k * m)
        lam = sigma_prior_scale(sd_til, self.sigma_df, self.sigma_quantile, self.sigma_frac)
        nu = float(self.sigma_df)
        cutvals = np.arange(1, self.n_cutpoints + 1, dtype=float) / (self.n_cutpoints + 1)

        cap = 2 * n + 2
        var = np.full((m, cap), LEAF, dtype=np.int64)
        cutidx = np.zeros((m, cap), dtype=np.int64)
        left = np.full((m, cap), -1, dtype=np.int64)
        right = np.full((m, cap), -1, dtype=np.int64)
        parent = np.full((m, cap), -1, dtype=np.int64)
        depth = np.zeros((m, cap), dtype=np.int64)
        inuse = np.zeros((m, cap), dtype=np.uint8)
        leafval = np.zeros((m, cap), dtype=float)
        cutlo = np.zeros((m, cap, d), dtype=np.int64)
        cuthi = np.zeros((m, cap, d), dtype=np.int64)
        nobs = np.zeros((m, cap), dtype=np.int64)
        freelist = np.zeros((m, cap), dtype=np.int64)
        nfree = np.zeros(m, dtype=np.int64)
        nalloc = np.ones(m, dtype=np.int64)
        inuse[:, 0] = 1
        cuthi[:, 0, :] = self.n_cutpoints
        nobs[:, 0] = n
        assign_train = np.zeros((m, n), dtype=np.int64)
        assign_eval = np.zeros((m, n_eval), dtype=np.int64)
        total_fit = np.zeros(n, dtype=float)

        partial = np.empty(n, dtype=float)
        resid = np.empty(n, dtype=float)
        slot_cnt = np.zeros(cap, dtype=np.int64)
        slot_sum = np.zeros(cap, dtype=float)
        tmp_cnt = np.zeros(cap, dtype=np.int64)
        tmp_sum = np.zeros(cap, dtype=float)
        tmp_assign = np.zeros(n, dtype=np.int64)
        sub_nodes = np.zeros(cap, dtype=np.int64)
        in_sub = np.zeros(cap, dtype=np.uint8)
        stack = np.zeros(cap + 2, dtype=np.int64)
        dims_buf = np.zeros(d, dtype=np.int64)
        cand_buf = np.zeros(cap, dtype=np.int64)
        new_lo_buf = np.zeros((cap, d), dtype=np.int64)
        new_hi_buf = np.zeros((cap, d), dtype=np.int64)

        rng = np.random.default_rng(self.random_state)
        sigma2 = max(float(np.var(ytil)), 1e-12)
        p_grow_cum = float(probs[0])
        p_prune_cum = float(probs[0] + probs[1])
        p_change_cum = float(probs[0] + probs[1] + probs[2])

        retained = range(self.burn_in + 1, self.n_iter + 1, self.thin)
        n_draws = len(retained)
        retain_next = iter(retained)
        next_keep = next(retain_next)

        sigma_til = np.empty(n_draws, dtype=float)
        eval_til = np.empty((n_draws, n_eval), dtype=float)
        eval_buf = np.empty(n_eval, dtype=float)
        ensembles = [] if self.store_ensembles else None

        kk = 0
        for it in range(1, self.n_iter + 1):
            sigma2 = run_iteration(
                rng, X, ytil, Xeval, cutvals, sigma2, sigma_mu2, nu, lam,
                p_grow_cum, p_prune_cum, p_change_cum,
                float(self.split_alpha), float(self.split_beta),
                var, cutidx, left, right, parent, depth, inuse, leafval,
                cutlo, cuthi, nobs, freelist, nfree, nalloc,
                assign_train, assign_eval, total_fit,
                partial, resid, slot_cnt, slot_sum, tmp_cnt, tmp_sum,
                tmp_assign, sub_nodes, in_sub, stack, dims_buf, cand_buf,
                new_lo_buf, new_hi_buf,
            )
            if it == next_keep:
                sigma_til[kk] = np.sqrt(sigma2)
                if n_eval:
                    gather_eval(leafval, assign_eval, eval_buf)
                    eval_til[kk] = eval_buf
                if ensembles is not None:
                    sel = np.flatnonzero(inuse.ravel())
                    ensembles.append(
                        {
                            "slots": sel.copy(),
                            "var": var.ravel()[sel].copy(),
                            "cutidx": cutidx.ravel()[sel].copy(),
                            "left": left.ravel()[sel].copy(),
                            "right": right.ravel()[sel].copy(),
                            "leafval": leafval.ravel()[sel].copy(),
                        }
                    )
                kk += 1
                next_keep = next(retain_next, -1)

        self.X_train_ = X
        self.y_train_ = y
        self.n_features_in_ = d
        self.y_min_ = y_min
        self.y_range_ = y_range
        self.y_scale_ = scale
        self.transformed_sd_ = sd_til
        self.leaf_prior_sd_ = float(np.sqrt(sigma_mu2))
        self.sigma_lambda_ = lam
        self.sigma_nu_ = nu
        self.cutvals_ = cutvals
        self.n_draws_ = n_draws
        self.capacity_ = cap
        self.sigma_draws_ = sigma_til * scale
        self.eval_X_ = Xeval if n_eval else None
        self.eval_draws_ = (eval_til + 0.5) * scale + y_min if n_eval else None
        self.ensembles_ = ensembles
        return self

    def _draw_matrix(self, X) -> np.ndarray:
        check_is_fitted(self, "n_draws_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        if self.ensembles_ is None:
            raise ValueError(
                "ensembles were not stored (store_ensembles=False); predictions are "
                "only available at the eval_X points supplied to fit"
            )
        X = np.ascontiguousarray(X, dtype=float)
        m = self.n_trees
        cap = self.capacity_
        draws = np.empty((self.n_draws_, X.shape[0]), dtype=float)
        var = np.full(m * cap, LEAF, dtype=np.int64)
        cutidx = np.zeros(m * cap, dtype=np.int64)
        left = np.zeros(m * cap, dtype=np.int64)
        right = np.zeros(m * cap, dtype=np.int64)
        leafval = np.zeros(m * cap, dtype=float)
        for kk, snap in enumerate(self.ensembles_):
            sel = snap["slots"]
            var[sel] = snap["var"]
            cutidx[sel] = snap["cutidx"]
            left[sel] = snap["left"]
            right[sel] = snap["right"]
            leafval[sel] = snap["leafval"]
            predict_points(
                var.reshape(m, cap), cutidx.reshape(m, cap), left.reshape(m, cap),
                right.reshape(m, cap), leafval.reshape(m, cap), X, self.cutvals_,
                draws[kk],
            )
            var[sel] = LEAF
        return (draws + 0.5) * self.y_scale_ + self.y_min_

    def predict_draws(self, X) -> np.ndarray:
        """Per-draw ensemble predictions, shape (n_draws, len(X))."""
        return self._draw_matrix(X)

    def predict(self, X) -> np.ndarray:
        """Posterior mean prediction (average of the retained draws)."""
        return self._draw_matrix(X).mean(axis=0)

    def predict_interval(self, X, lower: float = 0.05, upper: float = 0.95):
        """Posterior mean and central credible band from the retained draws."""
        draws = self._draw_matrix(X)
        qs = quantiles_from_draws(draws, [lower, upper])
        return draws.mean(axis=0), qs[0], qs[1]

    def dump_diagnostics(self, path) -> None:
        """JSON dump of chain settings and the per-draw noise sd."""
        check_is_fitted(self, "n_draws_")
        doc = {
            "n_trees": self.n_trees,
            "n_iter": self.n_iter,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "n_draws": self.n_draws_,
            "k": self.k,
            "leaf_prior_sd": self.leaf_prior_sd_,
            "sigma_df": self.sigma_nu_,
            "sigma_lambda": self.sigma_lambda_,
            "move_probs": list(np.asarray(self.move_probs, dtype=float)),
            "sigma_draws": self.sigma_draws_.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2)
