import logging
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from app.exceptions.lab import BoundsError

logger = logging.getLogger(__name__)

ZERO = 1e-300


def _ratios(lhs: Sequence[float], rhs: Sequence[float]) -> np.ndarray:
    lhs = np.asarray(lhs, dtype=float).ravel()
    rhs = np.asarray(rhs, dtype=float).ravel()
    if lhs.shape != rhs.shape:
        raise BoundsError("calibration", f"{lhs.size} left sides for {rhs.size} right sides")
    if np.any(rhs < 0) or np.any(lhs < 0):
        raise BoundsError("calibration", "bound sides must be nonnegative")
    # 0 <= 0 holds for any constant
    both_zero = (lhs <= ZERO) & (rhs <= ZERO)
    safe = np.where(rhs > ZERO, rhs, 1.0)
    return np.where(both_zero, 0.0, np.where(rhs > ZERO, lhs / safe, np.inf))


class CalibrationServices:
    """Constants of inequalities: fitted on calibration data, asserted on holdout data."""

    @staticmethod
    def fit_linear_constant(lhs: Sequence[float], rhs: Sequence[float]) -> float:
        """Least C with lhs <= C rhs on every calibration sample."""
        ratios = _ratios(lhs, rhs)
        return float(ratios.max()) if ratios.size else 0.0

    @staticmethod
    def holdout_ratio(lhs: Sequence[float], rhs: Sequence[float], constant: float, margin: float) -> float:
        """max lhs / (margin C rhs); the inequality holds on the holdout set iff this is <= 1."""
        ratios = _ratios(lhs, rhs)
        if not ratios.size or ratios.max() == 0.0:
            return 0.0
        scale = margin * constant
        if scale <= 0:
            return float("inf")
        return float(ratios.max() / scale)

    @staticmethod
    def fit_monotone_constant(
        ratio: Callable[[float], float], lower: float = 1e-8, upper: float = 1.0, max_doublings: int = 200
    ) -> float:
        """Least C with ratio(C) <= 1 for a ratio nonincreasing in C."""
        if ratio(lower) <= 1.0:
            return lower
        for _ in range(max_doublings):
            if ratio(upper) <= 1.0:
                break
            lower, upper = upper, 2.0 * upper
        else:
            raise BoundsError("fit_monotone_constant", f"no constant below {upper:.3g} satisfies the bound")
        if ratio(upper) == 1.0:
            return upper
        root = brentq(lambda c: min(ratio(c), 1e300) - 1.0, lower, upper, xtol=1e-12 * upper, rtol=1e-12)
        # brentq may stop a hair below the crossing
        for candidate in (root, root * (1.0 + 1e-9)):
            if ratio(candidate) <= 1.0:
                return float(candidate)
        return float(upper)

    @staticmethod
    def check_holdout(
        lhs: Sequence[float], rhs: Sequence[float], constant: float, margin: float
    ) -> Tuple[bool, float]:
        worst = CalibrationServices.holdout_ratio(lhs, rhs, constant, margin)
        return worst <= 1.0, worst
