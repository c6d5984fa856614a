"""Adaptive Nadaraya-Watson estimation of the mean function.

For each candidate bandwidth ``h`` the pointwise quadratic risk of
``mu_hat(t; h)`` is bounded by a bias term driven by the local regularity, a
noise term driven by ``sigma^2(t)`` and a dependence penalty divided by the
number ``P_N`` of curves observed near ``t``.  The selected bandwidth
minimises that bound over a grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Optional

import numpy as np

from .core import (
    BandwidthGrid,
    Design,
    FunctionalSample,
    WindowWeights,
    _check_bandwidth,
    default_bandwidth_grid,
    gather,
    window_weights,
)
from .errors import ConfigError, EmptyWindowError, NoFeasibleBandwidthError
from .locreg import RegularityEstimate, estimate_regularity
from .presmooth import PresmoothedSample, cv_bandwidth, presmooth, sigma2_hat

__all__ = [
    "RiskProfile",
    "MeanEstimate",
    "mu_hat",
    "dbar_from_values",
    "dbar_mu",
    "default_lag_cap",
    "risk_bound_mu",
    "select_h_mu",
    "common_design_mode",
    "sigma_clt_hat",
    "s_mu_hat",
    "mu_hat_adaptive",
    "presmoothing_bandwidth_for",
    "INTERPOLATION",
    "SMOOTHING",
]

INTERPOLATION = "interpolation"
SMOOTHING = "smoothing"


def default_lag_cap(n: int) -> int:
    """``floor(10 log10 N)``, at most ``N - 1``."""
    return max(0, min(n - 1, int(math.floor(10 * math.log10(n)))))


def _lag_limit(n: int, lag_cap: Optional[int], full: bool) -> int:
    if full:
        return n - 1
    if lag_cap is None:
        return default_lag_cap(n)
    return max(0, min(n - 1, int(lag_cap)))


def mu_hat(sample: FunctionalSample, t: float, h: float, weights: Optional[WindowWeights] = None):
    """``(mu_hat_N(t; h), P_N(t; h))``: average of curve estimates over observed curves."""
    ww = weights if weights is not None else window_weights(sample, t, h)
    p = ww.p_n
    if p == 0:
        raise EmptyWindowError(f"no curve is observed within h={h} of t={t}")
    x = ww.estimates(sample.flat_values)
    return float(np.sum(ww.pi * x) / p), p


def _lagged_products(u: np.ndarray, max_lag: int) -> np.ndarray:
    """``sum_n u_n u_{n+l}`` for ``l = 0..max_lag``."""
    if u.size == 0:
        return np.zeros(max_lag + 1)
    full = np.correlate(u, u, mode="full")[u.size - 1 :]
    out = np.zeros(max_lag + 1)
    k = min(max_lag + 1, full.size)
    out[:k] = full[:k]
    return out


def dbar_from_values(x: np.ndarray, lag_cap: Optional[int] = None, full: bool = False) -> float:
    """Variance plus twice the absolute lagged cross-products of the centered values.

    The lag-``l`` inner sum runs over ``n = 1..N-l-1`` and is divided by
    ``N - l``, mirroring the empirical dependence coefficient literally.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    c = x - x.mean()
    total = float(np.mean(c * c))
    max_lag = _lag_limit(n, lag_cap, full)
    if max_lag < 1:
        return total
    # dropping the last centered value turns the truncated inner sums into plain autocorrelations
    sums = _lagged_products(c[:-1], max_lag)[1:]
    lags = np.arange(1, max_lag + 1)
    return total + float(np.sum(2.0 * np.abs(sums) / (n - lags)))


def dbar_mu(presmoothed: PresmoothedSample, t: float, lag_cap: Optional[int] = None, full: bool = False) -> float:
    """Empirical dependence bound at ``t`` from the presmoothed curves."""
    return dbar_from_values(presmoothed.evaluate(t), lag_cap, full)


@dataclass(frozen=True)
class RiskRow:
    bias: float
    stochastic: float
    penalty: float
    total: float
    p_n: int


def _risk_row(ww: WindowWeights, h: float, H: float, L2: float, sigma2: float, dbar: float, penalty: bool = True) -> RiskRow:
    p = ww.p_n
    if p == 0:
        return RiskRow(math.inf, math.inf, math.inf, math.inf, 0)
    pi = ww.pi
    c = ww.weight_sum()
    b = ww.bias_factor(2.0 * H)
    mw = ww.max_weight()
    big_b = np.sum(pi * c * b) / p
    big_v = np.sum(pi * c * mw) / (p * p)
    bias = float(L2 * h ** (2.0 * H) * big_b)
    stoch = float(sigma2 * big_v)
    pen = float(dbar / p) if penalty else 0.0
    return RiskRow(bias, stoch, pen, bias + stoch + pen, p)


def risk_bound_mu(
    sample: FunctionalSample,
    t: float,
    h: float,
    H_hat: float,
    L2_hat: float,
    sigma2_hat: float,
    dbar: float,
) -> RiskRow:
    """Bias, stochastic and penalty terms of the mean risk bound at ``(t, h)``.

    Infeasible ``h`` (``P_N = 0``) gives ``inf`` in every column.
    """
    h = _check_bandwidth(h)
    return _risk_row(window_weights(sample, t, h), h, H_hat, L2_hat, sigma2_hat, dbar)


@dataclass(frozen=True, eq=False)
class RiskProfile:
    """Per-bandwidth risk decomposition at ``t`` and its argmin.

    ``regime`` and ``window_points`` are filled in common-design mode only.
    """

    t: float
    h: np.ndarray
    bias: np.ndarray
    stochastic: np.ndarray
    penalty: np.ndarray
    total: np.ndarray
    p_n: np.ndarray
    argmin_h: float
    H_hat: float
    L2_hat: float
    sigma2_hat: float
    dbar: float = 0.0
    admissible: Optional[np.ndarray] = None
    regime: Optional[str] = None
    window_points: Optional[int] = None

    @property
    def argmin_index(self) -> int:
        return int(np.flatnonzero(self.h == self.argmin_h)[0])

    def rows(self):
        """``(h, bias, stochastic, penalty, total, P_N)`` tuples in grid order."""
        return list(
            zip(
                self.h.tolist(),
                self.bias.tolist(),
                self.stochastic.tolist(),
                self.penalty.tolist(),
                self.total.tolist(),
                self.p_n.tolist(),
            )
        )


def _grid_values(grid) -> np.ndarray:
    vals = grid.values if isinstance(grid, BandwidthGrid) else BandwidthGrid(grid).values
    return np.asarray(vals, dtype=float)


def _scan(sample, t, hs, H, L2, sigma2, dbar, penalty=True):
    wide = gather(sample, t, float(hs.max()))
    rows = [_risk_row(window_weights(sample, t, h, wide), h, H, L2, sigma2, dbar, penalty) for h in hs]
    cols = {
        name: np.array([getattr(r, name) for r in rows], dtype=float)
        for name in ("bias", "stochastic", "penalty", "total")
    }
    cols["p_n"] = np.array([r.p_n for r in rows], dtype=np.int64)
    return cols


def _argmin(total: np.ndarray) -> int:
    if not np.any(np.isfinite(total)):
        raise NoFeasibleBandwidthError("no bandwidth of the grid has a non-empty window")
    return int(np.argmin(total))


def select_h_mu(
    sample: FunctionalSample,
    t: float,
    grid,
    reg: RegularityEstimate,
    sigma2: float,
    dbar: float,
) -> RiskProfile:
    """Risk profile over ``grid``; the argmin takes the smallest ``h`` on ties."""
    hs = _grid_values(grid)
    cols = _scan(sample, t, hs, reg.H_hat, reg.L2_hat, sigma2, dbar)
    k = _argmin(cols["total"])
    return RiskProfile(
        float(t), hs, cols["bias"], cols["stochastic"], cols["penalty"], cols["total"],
        cols["p_n"], float(hs[k]), reg.H_hat, reg.L2_hat, float(sigma2), float(dbar),
    )


def common_design_mode(
    sample: FunctionalSample,
    t: float,
    grid,
    reg: RegularityEstimate,
    sigma2: float,
) -> RiskProfile:
    """Bias plus noise minimisation over bandwidths where every curve is observed.

    The penalty column is zero.  ``regime`` is ``"interpolation"`` when the
    selected window puts positive weight on exactly one design point and
    ``"smoothing"`` otherwise.
    """
    if sample.design is not Design.COMMON:
        raise ConfigError("common-design mode requires a common-design sample")
    hs = _grid_values(grid)
    cols = _scan(sample, t, hs, reg.H_hat, reg.L2_hat, sigma2, 0.0, penalty=False)
    admissible = cols["p_n"] == sample.n_curves
    total = np.where(admissible, cols["total"], np.inf)
    k = _argmin(total)
    h = float(hs[k])
    times = sample.curves[0].times
    points = int(np.count_nonzero(np.abs(times - t) < h))
    regime = INTERPOLATION if points == 1 else SMOOTHING
    return RiskProfile(
        float(t), hs, cols["bias"], cols["stochastic"], cols["penalty"], total,
        cols["p_n"], h, reg.H_hat, reg.L2_hat, float(sigma2), 0.0, admissible, regime, points,
    )


def sigma_clt_hat(ww: WindowWeights, sigma2: float) -> float:
    """``sigma^2(t) P_N^{-1} sum_n pi_n sum_i W_{n,i}^2``."""
    p = ww.p_n
    if p == 0:
        return math.nan
    return float(sigma2 * np.sum(ww.pi * ww.weight_sq_sum()) / p)


def s_mu_hat(x: np.ndarray, pi: np.ndarray, lag_cap: Optional[int] = None) -> float:
    """Long-run variance plug-in ``gamma(0) + 2 sum_l p_l gamma(l)``, floored at 0.

    ``gamma(l)`` are signed empirical autocovariances of the presmoothed
    values, ``p_l = sum_i pi_i pi_{i+l} / P_N``, and the lag sum is truncated
    at ``lag_cap`` (default ``floor(10 log10 N)``): summing signed
    autocovariances of centered data over every lag would cancel to about 0.
    """
    x = np.asarray(x, dtype=float)
    pi = np.asarray(pi, dtype=float)
    n = x.size
    p = pi.sum()
    if p == 0:
        return math.nan
    c = x - x.mean()
    max_lag = _lag_limit(n, lag_cap, False)
    lags = np.arange(1, max_lag + 1)
    gam = _lagged_products(c, max_lag)
    p_l = _lagged_products(pi, max_lag)[1:] / p
    total = gam[0] / n + 2.0 * float(np.sum(p_l * gam[1:] / (n - lags)))
    return max(float(total), 0.0)


@dataclass(frozen=True, eq=False)
class MeanEstimate:
    """Adaptive mean estimate at ``t`` with CLT-based interval.

    ``qq_*`` fields hold the undersmoothed estimate at ``h = h_star^{1.1}``
    and its standard error, used to standardise residuals.
    """

    t: float
    value: float
    h_star: float
    P_N: int
    Sigma_hat: float
    S_mu_hat: float
    ci_lo: float
    ci_hi: float
    ci_level: float = 0.95
    regime: Optional[str] = None
    profile: Optional[RiskProfile] = field(default=None, repr=False)
    regularity: Optional[RegularityEstimate] = field(default=None, repr=False)
    sigma2_hat: float = math.nan
    qq_h: float = math.nan
    qq_value: float = math.nan
    qq_scale: float = math.nan

    @property
    def std_error(self) -> float:
        return math.sqrt((self.Sigma_hat + self.S_mu_hat) / self.P_N)


def presmoothing_bandwidth_for(sample: FunctionalSample, reg: RegularityEstimate, seed=0) -> float:
    """Bandwidth recorded in ``reg``, or the local CV choice when it is missing."""
    b = reg.presmoothing_bandwidth
    if math.isfinite(b) and b > 0:
        return float(b)
    d = reg.delta_window
    dom = sample.domain
    return cv_bandwidth(sample, seed=seed, window=(max(dom.lo, reg.t - d), min(dom.hi, reg.t + d)))


def _z(level: float) -> float:
    if not 0 < level < 1:
        raise ConfigError(f"confidence level must lie in (0, 1), got {level}")
    return NormalDist().inv_cdf(0.5 + level / 2)


def mu_hat_adaptive(
    sample: FunctionalSample,
    t: float,
    reg: Optional[RegularityEstimate] = None,
    grid=None,
    ci_level: float = 0.95,
    common_design: Optional[bool] = None,
    lag_cap: Optional[int] = None,
    full_lags: bool = False,
    qq: bool = False,
    seed=0,
) -> MeanEstimate:
    """Mean at ``t`` with the risk-minimising bandwidth and a CLT interval.

    ``common_design`` defaults to the sample's design kind.  Missing ``reg``
    and ``grid`` are estimated from the sample.
    """
    t = float(t)
    if reg is None:
        reg = estimate_regularity(sample, t, seed=seed)
    if grid is None:
        grid = default_bandwidth_grid(sample.n_curves, sample.lambda_hat, sample.domain)
    common = sample.design is Design.COMMON if common_design is None else bool(common_design)
    ps = presmooth(sample, presmoothing_bandwidth_for(sample, reg, seed))
    x_tilde = ps.evaluate(t)
    s2 = sigma2_hat(sample, t)
    if common:
        profile = common_design_mode(sample, t, grid, reg, s2)
    else:
        profile = select_h_mu(sample, t, grid, reg, s2, dbar_from_values(x_tilde, lag_cap, full_lags))
    h = profile.argmin_h
    ww = window_weights(sample, t, h)
    value, p = mu_hat(sample, t, h, ww)
    big_sigma = sigma_clt_hat(ww, s2)
    big_s = s_mu_hat(x_tilde, ww.pi, lag_cap)
    half = _z(ci_level) * math.sqrt((big_sigma + big_s) / p)
    qq_h = qq_value = qq_scale = math.nan
    if qq:
        qq_h = h**1.1
        ww_q = window_weights(sample, t, qq_h)
        if ww_q.p_n > 0:
            qq_value, pq = mu_hat(sample, t, qq_h, ww_q)
            var_q = sigma_clt_hat(ww_q, s2) + s_mu_hat(x_tilde, ww_q.pi, lag_cap)
            qq_scale = math.sqrt(var_q / pq)
    return MeanEstimate(
        t, value, h, p, big_sigma, big_s, value - half, value + half, ci_level,
        profile.regime, profile, reg, s2, qq_h, qq_value, qq_scale,
    )
