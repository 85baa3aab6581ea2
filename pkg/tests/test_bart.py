"""Sum-of-trees regressor: priors, chain mechanics, and recovery checks."""

import numpy as np
import pytest
from scipy.stats import chi2
from sklearn.exceptions import NotFittedError

from tsinverse import BartRegressor, latin_hypercube, quantiles_from_draws, sigma_prior_scale
from tsinverse._treekernels import LEAF

FAST = dict(n_trees=25, n_iter=200, burn_in=60, random_state=0)


def step_data(n=60, seed=0):
    rng = np.random.default_rng(seed)
    X = latin_hypercube(n, 1, rng=rng, variant="random")
    y = np.where(X[:, 0] < 0.5, -1.0, 1.0)
    return X, y


class TestSigmaPrior:
    def test_frozen_scale(self):
        # q0^2 * chi2.ppf(0.10, 3) / 3 at q0 = 0.2
        got = sigma_prior_scale(1.0, 3.0, 0.90, 0.20)
        assert got == pytest.approx(0.007791658322069114, rel=1e-12)

    @pytest.mark.parametrize("sd", [0.3, 1.7, 42.0])
    def test_anchor_probability(self, sd):
        lam = sigma_prior_scale(sd, 3.0, 0.90, 0.20)
        q0 = 0.20 * sd
        # sigma^2 ~ nu * lam / chi2_nu, so P(sigma <= q0) = P(chi2 >= nu lam / q0^2)
        assert chi2.sf(3.0 * lam / (q0 * q0), 3.0) == pytest.approx(0.90, abs=1e-12)

    def test_degenerate_sd_substituted(self):
        assert sigma_prior_scale(0.0, 3.0, 0.90, 0.20) == sigma_prior_scale(
            1e-6, 3.0, 0.90, 0.20
        )
        assert sigma_prior_scale(-1.0, 3.0, 0.90, 0.20) > 0

    @pytest.mark.parametrize(
        "args",
        [(1.0, 3.0, 0.0, 0.2), (1.0, 3.0, 1.0, 0.2), (1.0, 0.0, 0.9, 0.2), (1.0, 3.0, 0.9, 0.0)],
    )
    def test_invalid_arguments(self, args):
        with pytest.raises(ValueError):
            sigma_prior_scale(*args)


def test_quantiles_match_numpy():
    rng = np.random.default_rng(2)
    draws = rng.normal(size=(500, 4))
    got = quantiles_from_draws(draws, [0.05, 0.5, 0.95])
    want = np.quantile(draws, [0.05, 0.5, 0.95], axis=0)
    assert np.array_equal(got, want)


class TestChainMechanics:
    def test_draw_count_follows_retention_schedule(self):
        X, y = step_data(20)
        model = BartRegressor(n_trees=10, n_iter=100, burn_in=30, thin=7, random_state=0)
        model.fit(X, y)
        assert model.n_draws_ == len(range(31, 101, 7))
        assert model.sigma_draws_.shape == (model.n_draws_,)
        assert np.all(model.sigma_draws_ > 0)

    def test_same_seed_reproduces_bitwise(self):
        X, y = step_data(30)
        grid = np.linspace(0, 1, 17)[:, None]
        a = BartRegressor(**FAST).fit(X, y, eval_X=grid)
        b = BartRegressor(**FAST).fit(X, y, eval_X=grid)
        assert np.array_equal(a.sigma_draws_, b.sigma_draws_)
        assert np.array_equal(a.eval_draws_, b.eval_draws_)
        assert np.array_equal(a.predict(grid), b.predict(grid))

    def test_different_seed_differs(self):
        X, y = step_data(30)
        a = BartRegressor(**dict(FAST, random_state=0)).fit(X, y)
        b = BartRegressor(**dict(FAST, random_state=1)).fit(X, y)
        assert not np.array_equal(a.sigma_draws_, b.sigma_draws_)

    def test_eval_draws_equal_predict_draws_exactly(self):
        # the in-chain accumulator and the snapshot replay must agree bitwise
        X, y = step_data(40)
        grid = np.linspace(0, 1, 23)[:, None]
        model = BartRegressor(**FAST).fit(X, y, eval_X=grid)
        assert np.array_equal(model.eval_draws_, model.predict_draws(grid))

    def test_trees_actually_split(self):
        X, y = step_data(50)
        model = BartRegressor(**FAST).fit(X, y)
        assert any(np.any(snap["var"] != LEAF) for snap in model.ensembles_)

    def test_store_ensembles_false_blocks_free_prediction(self):
        X, y = step_data(20)
        grid = np.linspace(0, 1, 5)[:, None]
        model = BartRegressor(store_ensembles=False, **FAST).fit(X, y, eval_X=grid)
        assert model.eval_draws_.shape == (model.n_draws_, 5)
        with pytest.raises(ValueError, match="store_ensembles"):
            model.predict(grid)

    def test_leaf_prior_sd_formula(self):
        X, y = step_data(15)
        model = BartRegressor(**dict(FAST, n_trees=16, k=2.0)).fit(X, y)
        assert model.leaf_prior_sd_ == pytest.approx(1.0 / (2.0 * 2.0 * 4.0), rel=1e-15)

    def test_single_point_chain_runs(self):
        model = BartRegressor(n_trees=5, n_iter=30, burn_in=10, random_state=0)
        model.fit(np.array([[0.5]]), np.array([1.0]))
        assert model.predict(np.array([[0.2]])).shape == (1,)


class TestRecovery:
    def test_constant_response(self):
        rng = np.random.default_rng(3)
        X = latin_hypercube(25, 2, rng=rng, variant="random")
        y = np.full(25, 3.7)
        model = BartRegressor(n_trees=50, n_iter=300, burn_in=100, random_state=1)
        model.fit(X, y)
        pred = model.predict(rng.random((40, 2)))
        assert np.max(np.abs(pred - 3.7)) <= 0.05

    def test_step_function(self):
        X, y = step_data(60, seed=4)
        model = BartRegressor(n_trees=50, n_iter=400, burn_in=150, random_state=2)
        model.fit(X, y)
        pred = model.predict(np.array([[0.25], [0.75]]))
        assert pred[0] == pytest.approx(-1.0, abs=0.25)
        assert pred[1] == pytest.approx(1.0, abs=0.25)

    def test_interval_brackets_mean_prediction(self):
        X, y = step_data(40, seed=5)
        model = BartRegressor(**FAST).fit(X, y)
        grid = np.linspace(0, 1, 9)[:, None]
        mean, lo, hi = model.predict_interval(grid)
        assert mean.shape == lo.shape == hi.shape == (9,)
        assert np.all(lo <= hi)
        draws = model.predict_draws(grid)
        assert np.array_equal(mean, draws.mean(axis=0))


class TestValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_trees": 0},
            {"burn_in": 200, "n_iter": 200},
            {"thin": 0},
            {"k": 0.0},
            {"n_cutpoints": 0},
            {"split_alpha": 1.0},
            {"move_probs": (0.5, 0.5, 0.0, 0.5)},
            {"move_probs": (1.0, 0.0, 0.0)},
        ],
    )
    def test_bad_parameters(self, kwargs):
        X, y = step_data(10)
        with pytest.raises(ValueError):
            BartRegressor(**dict(FAST, **kwargs)).fit(X, y)

    def test_unit_cube_enforced(self):
        X, y = step_data(10)
        bad = X.copy()
        bad[0, 0] = 1.2
        with pytest.raises(ValueError, match="unit cube"):
            BartRegressor(**FAST).fit(bad, y)
        with pytest.raises(ValueError, match="unit cube"):
            BartRegressor(**FAST).fit(X, y, eval_X=np.array([[-0.1]]))

    def test_predict_before_fit(self):
        with pytest.raises(NotFittedError):
            BartRegressor().predict(np.array([[0.5]]))

    def test_feature_count_checked(self):
        X, y = step_data(10)
        model = BartRegressor(**FAST).fit(X, y)
        with pytest.raises(ValueError):
            model.predict(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            BartRegressor(**FAST).fit(X, y, eval_X=np.zeros((2, 3)))

    def test_dump_diagnostics(self, tmp_path):
        import json

        X, y = step_data(12)
        model = BartRegressor(**FAST).fit(X, y)
        path = tmp_path / "chain.json"
        model.dump_diagnostics(path)
        doc = json.loads(path.read_text())
        assert doc["n_draws"] == model.n_draws_
        assert len(doc["sigma_draws"]) == model.n_draws_
