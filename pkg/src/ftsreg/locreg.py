"""Local regularity estimation from presmoothed curves.

At a point ``t`` the mean squared increments ``theta(u, v)`` are measured on
the triple ``t1 < t2 = t < t3`` with ``t3 - t1 = Delta``.  Their log-ratio
gives the local Hölder exponent and the ratio to ``Delta^{2H}`` the Hölder
constant.  For smooth paths the same statistics are recomputed on derivative
estimates until the exponent drops below ``1 - (log lam)^{-2}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DomainInterval, FunctionalSample
from .errors import ConfigError, DegenerateIncrementsError
from .presmooth import (
    MAX_DERIVATIVE_ORDER,
    PresmoothedSample,
    cv_bandwidth,
    presmooth,
    presmooth_derivative,
)

__all__ = [
    "ThetaTriple",
    "RegularityEstimate",
    "theta_hat",
    "delta_rule",
    "theta_triple",
    "estimate_H",
    "estimate_L2",
    "estimate_regularity",
    "estimate_alpha",
    "H_FLOOR",
]

H_FLOOR = 0.01
H_CEIL = 1.0
DEFAULT_GAMMA = 1.0 / 3.0


@dataclass(frozen=True)
class ThetaTriple:
    """Points ``t1 < t2 < t3`` and the increment statistics ``theta(t1,t3)``, ``theta(t1,t2)``."""

    t1: float
    t2: float
    t3: float
    theta_13: float
    theta_12: float
    shifted: bool = False

    @property
    def delta(self) -> float:
        return self.t3 - self.t1


@dataclass(frozen=True)
class RegularityEstimate:
    """Regularity at ``t``: ``alpha_hat = delta_order + H_hat``.

    ``H_hat`` is clamped to ``[0.01, 1]``; ``raw_H`` keeps the unclamped
    log-ratio.  ``shifted`` marks a triple moved inside the domain near the
    boundary and ``saturated`` an order search that stopped at ``max_order``.
    """

    t: float
    delta_window: float
    H_hat: float
    L2_hat: float
    delta_order: int = 0
    raw_H: float = math.nan
    shifted: bool = False
    saturated: bool = False
    presmoothing_bandwidth: float = math.nan

    @property
    def alpha_hat(self) -> float:
        return self.delta_order + self.H_hat


def _mean_square(diff: np.ndarray, centered: bool) -> float:
    if centered:
        diff = diff - diff.mean()
    return float(np.mean(diff * diff))


def theta_hat(presmoothed: PresmoothedSample, u: float, v: float, centered: bool = False) -> float:
    """Mean squared increment ``(1/N) sum_n (X~_n(v) - X~_n(u))^2``.

    With ``centered=True`` the empirical mean increment is subtracted first,
    which removes the contribution of a non-constant mean function.
    """
    return _mean_square(presmoothed.evaluate(v) - presmoothed.evaluate(u), centered)


def delta_rule(lambda_hat: float, gamma: float = DEFAULT_GAMMA) -> float:
    """Spacing ``Delta = exp(-(log lam)^gamma)``; needs ``lam > e``."""
    if not lambda_hat > math.e:
        raise ConfigError(f"delta rule requires lambda > e, got {lambda_hat}")
    if not gamma > 0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    return math.exp(-math.log(lambda_hat) ** gamma)


def _triple_points(t: float, delta: float, domain: DomainInterval):
    if not 0 < delta <= domain.length:
        raise ConfigError(f"Delta={delta} must lie in (0, {domain.length}]")
    t1, t3 = t - delta / 2, t + delta / 2
    shifted = False
    if t1 < domain.lo:
        t1, t3, shifted = domain.lo, domain.lo + delta, True
    elif t3 > domain.hi:
        t1, t3, shifted = domain.hi - delta, domain.hi, True
    t2 = t if not shifted else (t1 + t3) / 2
    return t1, t2, t3, shifted


def theta_triple(
    presmoothed: PresmoothedSample, t: float, delta: float, centered: bool = False
) -> ThetaTriple:
    t1, t2, t3, shifted = _triple_points(float(t), float(delta), presmoothed.sample.domain)
    x1 = presmoothed.evaluate(t1)
    th13 = _mean_square(presmoothed.evaluate(t3) - x1, centered)
    th12 = _mean_square(presmoothed.evaluate(t2) - x1, centered)
    return ThetaTriple(t1, t2, t3, th13, th12, shifted)


def _raw_H(triple: ThetaTriple) -> float:
    if not (triple.theta_12 > 0 and triple.theta_13 > 0):
        raise DegenerateIncrementsError(
            f"vanishing increments on ({triple.t1}, {triple.t2}, {triple.t3})"
        )
    # a single ratio keeps the estimate exactly invariant under binary rescaling of Y
    return math.log(triple.theta_13 / triple.theta_12) / (2 * math.log(2))


def _clamp(h: float) -> float:
    return min(max(h, H_FLOOR), H_CEIL)


def estimate_H(
    presmoothed: PresmoothedSample, t: float, delta: float, centered: bool = False
) -> float:
    """Clamped log-ratio estimate of the local Hölder exponent."""
    return _clamp(_raw_H(theta_triple(presmoothed, t, delta, centered)))


def estimate_L2(
    presmoothed: PresmoothedSample, t: float, delta: float, H_hat: float, centered: bool = False
) -> float:
    """``theta(t1, t3) / Delta^{2 H}``."""
    triple = theta_triple(presmoothed, t, delta, centered)
    _raw_H(triple)
    return triple.theta_13 / triple.delta ** (2 * H_hat)


def _estimate_at(ps: PresmoothedSample, t: float, delta: float, centered: bool):
    triple = theta_triple(ps, t, delta, centered)
    raw = _raw_H(triple)
    h = _clamp(raw)
    return h, triple.theta_13 / triple.delta ** (2 * h), raw, triple.shifted


def _cv_window(t: float, delta: float, domain: DomainInterval):
    return max(domain.lo, t - delta), min(domain.hi, t + delta)


def estimate_regularity(
    sample: FunctionalSample,
    t: float,
    gamma: float = DEFAULT_GAMMA,
    b: Optional[float] = None,
    seed=0,
    centered: bool = True,
) -> RegularityEstimate:
    """``(H_hat, L2_hat)`` at ``t`` from level presmoothing (no order search).

    ``b`` defaults to the CV bandwidth on design points within ``Delta`` of
    ``t``.  Increments are centered by default; see :func:`theta_hat`.
    """
    delta = delta_rule(sample.lambda_hat, gamma)
    if b is None:
        b = cv_bandwidth(sample, seed=seed, window=_cv_window(t, delta, sample.domain))
    h, l2, raw, shifted = _estimate_at(presmooth(sample, b), t, delta, centered)
    return RegularityEstimate(float(t), delta, h, l2, 0, raw, shifted, False, float(b))


def estimate_alpha(
    sample: FunctionalSample,
    t: float,
    gamma: float = DEFAULT_GAMMA,
    max_order: int = 3,
    seed=0,
    centered: bool = True,
) -> RegularityEstimate:
    """Regularity including the number of derivatives.

    Starts from level presmoothing (order 0); while the exponent at the
    current order is at least ``1 - (log lam)^{-2}`` and the order is below
    ``max_order``, the order is increased and the exponent recomputed from
    derivative estimates of that order (local polynomials of one degree more,
    bandwidth chosen by CV of that polynomial fit).
    """
    if not 0 <= max_order <= MAX_DERIVATIVE_ORDER:
        raise ConfigError(f"max_order must be in 0..{MAX_DERIVATIVE_ORDER}")
    lam = sample.lambda_hat
    delta = delta_rule(lam, gamma)
    threshold = 1.0 - math.log(lam) ** -2
    window = _cv_window(t, delta, sample.domain)
    b = cv_bandwidth(sample, seed=seed, window=window)
    h, l2, raw, shifted = _estimate_at(presmooth(sample, b), t, delta, centered)
    d = 0
    while h >= threshold and d < max_order:
        d += 1
        b = cv_bandwidth(sample, seed=seed, degree=d + 1, window=window)
        h, l2, raw, shifted = _estimate_at(presmooth_derivative(sample, d, b), t, delta, centered)
    saturated = d == max_order and h >= threshold
    return RegularityEstimate(float(t), delta, h, l2, d, raw, shifted, saturated, float(b))
