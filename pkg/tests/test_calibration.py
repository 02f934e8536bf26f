import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.exceptions.lab import BoundsError
from app.services.calibration import CalibrationServices

positive_strategy = st.floats(min_value=0.01, max_value=100.0, allow_nan=False, allow_infinity=False)


class TestLinearConstant:
    def test_max_ratio(self):
        assert CalibrationServices.fit_linear_constant([1.0, 3.0, 2.0], [1.0, 1.0, 4.0]) == 3.0

    def test_zero_over_zero_is_free(self):
        assert CalibrationServices.fit_linear_constant([0.0, 1.0], [0.0, 2.0]) == 0.5

    def test_positive_over_zero_is_unbounded(self):
        assert math.isinf(CalibrationServices.fit_linear_constant([1.0], [0.0]))

    def test_rejects_mismatched_sides(self):
        with pytest.raises(BoundsError):
            CalibrationServices.fit_linear_constant([1.0, 2.0], [1.0])

    def test_rejects_negative_sides(self):
        with pytest.raises(BoundsError):
            CalibrationServices.fit_linear_constant([-1.0], [1.0])


class TestHoldout:
    def test_margin_scales_the_constant(self):
        passed, worst = CalibrationServices.check_holdout([3.0], [1.0], constant=2.0, margin=2.0)
        assert passed
        assert worst == pytest.approx(0.75)

    def test_violation_is_reported(self):
        passed, worst = CalibrationServices.check_holdout([5.0], [1.0], constant=2.0, margin=2.0)
        assert not passed
        assert worst == pytest.approx(1.25)

    def test_all_zero_holdout_passes(self):
        assert CalibrationServices.holdout_ratio([0.0, 0.0], [0.0, 1.0], 0.0, 2.0) == 0.0


class TestMonotoneConstant:
    @given(target=positive_strategy)
    @settings(max_examples=30, deadline=None)
    def test_least_constant_of_linear_ratio(self, target):
        constant = CalibrationServices.fit_monotone_constant(lambda c: target / c)
        assert target / constant <= 1.0
        assert constant == pytest.approx(target, rel=1e-8)

    def test_exponential_bound(self):
        # lhs = e^t, rhs = e^{C t} on t in [0, 2]: least C is 1
        t = np.linspace(0.0, 2.0, 21)

        def ratio(c):
            return CalibrationServices.holdout_ratio(np.exp(t), np.exp(c * t), 1.0, 1.0)

        assert CalibrationServices.fit_monotone_constant(ratio) == pytest.approx(1.0, rel=1e-8)

    def test_satisfied_at_lower_bracket(self):
        assert CalibrationServices.fit_monotone_constant(lambda c: 0.5, lower=1e-3) == 1e-3

    def test_unreachable_bound(self):
        with pytest.raises(BoundsError):
            CalibrationServices.fit_monotone_constant(lambda c: 2.0, max_doublings=10)
