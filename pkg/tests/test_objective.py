"""Scalarization: RMS distance and the floored log objective."""

import numpy as np
import pytest

from tsinverse import TimeGrid, TimeSeries, log_objective, rms_distance
from tsinverse.objective import LOG_FLOOR

# frozen high-precision references on the default grid with target x0 = 0.5
RMS_AT_0 = 0.7015543383719097207419
RMS_AT_025 = 0.4070774897421676811421
LN_00004 = -7.824046010856292117238
LN_FLOOR = -27.63102111592854820822


class TestRmsDistance:
    def test_frozen_values(self, sim1, target1):
        assert rms_distance(sim1([0.0]), target1) == pytest.approx(RMS_AT_0, abs=1e-12)
        assert rms_distance(sim1([0.25]), target1) == pytest.approx(RMS_AT_025, abs=1e-12)

    def test_zero_at_the_target_input(self, sim1, target1):
        assert rms_distance(sim1([0.5]), target1) == 0.0

    def test_accepts_bare_series_target(self, sim1, target1):
        w = rms_distance(sim1([0.2]), target1.series)
        assert w == rms_distance(sim1([0.2]), target1)

    def test_hand_computed_small_case(self):
        grid = TimeGrid(count=4)
        a = TimeSeries(grid, [1.0, 2.0, 3.0, 4.0])
        b = TimeSeries(grid, [1.0, 2.0, 3.0, 2.0])
        # single discrepancy of 2 over 4 points: sqrt(4 / 4) = 1
        assert rms_distance(a, b) == pytest.approx(1.0, rel=1e-15)

    def test_grid_mismatch_rejected(self, target1):
        other = TimeSeries(TimeGrid(count=51), np.zeros(51))
        with pytest.raises(ValueError, match="grid"):
            rms_distance(other, target1)

    def test_wrong_target_type(self, sim1):
        with pytest.raises(TypeError):
            rms_distance(sim1([0.1]), np.zeros(101))


class TestLogObjective:
    def test_frozen_value(self):
        assert log_objective(0.0004) == pytest.approx(LN_00004, rel=1e-15)

    def test_floor_applies_at_and_below(self):
        assert log_objective(0.0) == pytest.approx(LN_FLOOR, rel=1e-15)
        assert log_objective(1e-13) == pytest.approx(LN_FLOOR, rel=1e-15)
        assert log_objective(LOG_FLOOR) == pytest.approx(LN_FLOOR, rel=1e-15)

    def test_above_floor_is_plain_log(self):
        assert log_objective(2.5) == pytest.approx(np.log(2.5), rel=1e-15)

    def test_custom_floor(self):
        assert log_objective(0.0, floor=1e-6) == pytest.approx(np.log(1e-6), rel=1e-15)

    @pytest.mark.parametrize("bad", [-0.1, np.nan, np.inf])
    def test_rejects_bad_distance(self, bad):
        with pytest.raises(ValueError):
            log_objective(bad)

    def test_rejects_bad_floor(self):
        with pytest.raises(ValueError):
            log_objective(0.5, floor=0.0)
