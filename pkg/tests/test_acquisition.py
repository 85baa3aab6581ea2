"""Expected improvement: closed form, draw-based estimate, and maximization."""

import numpy as np
import pytest

from tsinverse import (
    GaussianProcessSurrogate,
    expected_improvement,
    expected_improvement_from_draws,
    maximize_expected_improvement,
)
from tsinverse.acquisition import DUPLICATE_TOL, select_candidate

# frozen high-precision closed-form values, (mean, std, best) -> EI
EI_SPOTS = [
    (0.0, 1.0, 0.0, 0.3989422804014326779399),
    (1.3, 0.7, 1.0, 0.1545204339315511024374),
    (-0.4, 0.25, 0.1, 0.5021226756542074093875),
]


class TestClosedForm:
    @pytest.mark.parametrize("mean, std, best, expected", EI_SPOTS)
    def test_frozen_values(self, mean, std, best, expected):
        assert expected_improvement(mean, std, best) == pytest.approx(expected, rel=1e-12)

    def test_zero_std_degenerates_to_clamp(self):
        assert expected_improvement(0.2, 0.0, 1.0) == pytest.approx(0.8, rel=1e-15)
        assert expected_improvement(1.5, 0.0, 1.0) == 0.0

    def test_vectorized_matches_scalar(self):
        mean = np.array([0.0, 1.3, -0.4, 2.0])
        std = np.array([1.0, 0.7, 0.25, 0.0])
        best = 0.1
        got = expected_improvement(mean, std, best)
        want = [float(expected_improvement(m, s, best)) for m, s in zip(mean, std)]
        assert np.allclose(got, want, rtol=1e-14)

    def test_nonnegative_everywhere(self):
        rng = np.random.default_rng(0)
        ei = expected_improvement(rng.normal(size=200), rng.random(200), -3.0)
        assert np.all(ei >= 0)

    def test_monotone_in_best(self):
        lo = expected_improvement(0.0, 1.0, -1.0)
        hi = expected_improvement(0.0, 1.0, 1.0)
        assert hi > lo

    def test_negative_std_rejected(self):
        with pytest.raises(ValueError):
            expected_improvement(0.0, -0.1, 0.0)


class TestDrawBased:
    def test_hand_computed(self):
        draws = np.array([1.0, 3.0, -1.0, 2.0])
        # improvements over best = 2: 1, 0, 3, 0 -> mean 1
        assert expected_improvement_from_draws(draws, 2.0) == pytest.approx(1.0, rel=1e-15)

    def test_matrix_of_points(self):
        draws = np.array([[1.0, 5.0], [3.0, 1.0]])
        got = expected_improvement_from_draws(draws, 2.0)
        assert np.allclose(got, [0.5, 0.5], rtol=1e-15)

    def test_converges_to_closed_form(self):
        rng = np.random.default_rng(1)
        draws = 0.3 + 0.8 * rng.standard_normal(400_000)
        mc = expected_improvement_from_draws(draws, 0.5)
        exact = float(expected_improvement(0.3, 0.8, 0.5))
        assert mc == pytest.approx(exact, abs=5e-3)


class TestSelectCandidate:
    def test_highest_ei_wins(self):
        pts = np.array([[0.1], [0.2], [0.3]])
        idx = select_candidate(pts, np.array([1.0, 3.0, 2.0]), np.zeros(3))
        assert idx == 1

    def test_tie_broken_by_predicted_then_position(self):
        pts = np.array([[0.9], [0.4], [0.2]])
        ei = np.array([1.0, 1.0, 1.0])
        assert select_candidate(pts, ei, np.array([2.0, 1.0, 3.0])) == 1
        # full tie: lexicographically smallest x
        assert select_candidate(pts, ei, np.ones(3)) == 2

    def test_lexicographic_uses_leading_column_first(self):
        pts = np.array([[0.5, 0.1], [0.4, 0.9]])
        idx = select_candidate(pts, np.ones(2), np.ones(2))
        assert idx == 1

    def test_avoid_skips_near_duplicates(self):
        pts = np.array([[0.5], [0.6]])
        ei = np.array([2.0, 1.0])
        idx = select_candidate(pts, ei, np.zeros(2), avoid=np.array([[0.5 + 1e-12]]))
        assert idx == 1

    def test_avoid_falls_back_when_everything_excluded(self):
        pts = np.array([[0.5], [0.6]])
        ei = np.array([2.0, 1.0])
        idx = select_candidate(pts, ei, np.zeros(2), avoid=pts.copy())
        assert idx == 0

    def test_avoid_tolerance_is_strict(self):
        pts = np.array([[0.5], [0.6]])
        ei = np.array([2.0, 1.0])
        # a gap just above the tolerance is allowed
        avoid = np.array([[0.5 + 5 * DUPLICATE_TOL]])
        assert select_candidate(pts, ei, np.zeros(2), avoid=avoid) == 0


class FixedDrawModel:
    """Surrogate stub exposing draws that favor one known candidate."""

    def __init__(self, draws):
        self.draws = np.asarray(draws, dtype=float)

    def predict_draws(self, X):
        return self.draws


class TestMaximize:
    def _fitted_gp(self):
        X = np.linspace(0.05, 0.95, 9)[:, None]
        y = (X[:, 0] - 0.62) ** 2
        return GaussianProcessSurrogate(random_state=0).fit(X, y), X, y

    def test_gaussian_path_beats_candidate_screen(self):
        gp, X, y = self._fitted_gp()
        cands = np.linspace(0.0, 1.0, 64)[:, None]
        mean, std = gp.predict(cands, return_std=True)
        screen_best = expected_improvement(mean, std, y.min()).max()
        res = maximize_expected_improvement(
            gp, float(y.min()), 1, candidates=cands, n_multistart=5
        )
        assert res.ei >= screen_best - 1e-12
        assert 0.0 <= res.x[0] <= 1.0

    def test_gaussian_path_result_is_consistent(self):
        gp, X, y = self._fitted_gp()
        res = maximize_expected_improvement(
            gp, float(y.min()), 1, n_candidates=200, rng=np.random.default_rng(0)
        )
        mean, std = gp.predict(res.x.reshape(1, -1), return_std=True)
        assert res.ei == pytest.approx(
            float(expected_improvement(mean, std, float(y.min()))[0]), rel=1e-9
        )
        assert res.predicted == pytest.approx(float(mean[0]), rel=1e-9)

    def test_draw_path_picks_best_candidate(self):
        cands = np.array([[0.1], [0.5], [0.9]])
        # column 1 has all its mass far below best -> greatest improvement
        draws = np.array([[1.0, -2.0, 0.5], [1.2, -1.8, 0.7]])
        model = FixedDrawModel(draws)
        res = maximize_expected_improvement(model, 0.0, 1, candidates=cands)
        assert res.x[0] == 0.5
        assert res.ei == pytest.approx(1.9, rel=1e-15)
        assert res.predicted == pytest.approx(-1.9, rel=1e-15)

    def test_precomputed_draws_bypass_model(self):
        cands = np.array([[0.2], [0.8]])
        draws = np.array([[0.0, -1.0]])
        sentinel = FixedDrawModel(np.array([[99.0, 99.0]]))
        res = maximize_expected_improvement(
            sentinel, 0.0, 1, candidates=cands, candidate_draws=draws
        )
        assert res.x[0] == 0.8

    def test_avoid_excludes_training_points(self):
        cands = np.array([[0.3], [0.7]])
        draws = np.array([[-5.0, -1.0]])
        model = FixedDrawModel(draws)
        res = maximize_expected_improvement(
            model, 0.0, 1, candidates=cands, avoid=np.array([[0.3]])
        )
        assert res.x[0] == 0.7
