"""Adaptive lag-``l`` cross-product and autocovariance estimation.

``gamma_hat(s, t; h)`` averages products ``X_hat_n(s; h) X_hat_{n+l}(t; h)``
over the pairs of curves observed near ``s`` and ``t`` respectively.  A single
bandwidth serves both coordinates and is chosen by minimising a risk bound
made of two bias terms, three noise terms and a dependence penalty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Design, FunctionalSample, WindowWeights, _check_bandwidth, default_bandwidth_grid, gather, window_weights
from .errors import ConfigError, EmptyWindowError
from .locreg import RegularityEstimate, estimate_regularity
from .mean import (
    MeanEstimate,
    _argmin,
    _grid_values,
    dbar_from_values,
    mu_hat_adaptive,
    presmoothing_bandwidth_for,
)
from .presmooth import PresmoothedSample, presmooth, sigma2_hat

__all__ = [
    "GammaRiskRow",
    "GammaRiskProfile",
    "AutocovEstimate",
    "p_n_ell",
    "gamma_hat",
    "dbar_gamma",
    "nu2_hat",
    "risk_bound_gamma",
    "select_h_gamma",
    "gamma_hat_adaptive",
]

GAMMA_COLUMNS = ("bias_s", "bias_t", "noise_s", "noise_t", "noise_cross", "penalty", "total")


def _check_lag(n: int, lag: int) -> int:
    lag = int(lag)
    if not 0 <= lag < n:
        raise ConfigError(f"lag must satisfy 0 <= lag < N={n}, got {lag}")
    return lag


def _pair_weights(ww_s: WindowWeights, ww_t: WindowWeights, lag: int):
    n = ww_s.n_curves
    a = ww_s.pi[: n - lag] * ww_t.pi[lag:]
    return a, int(a.sum())


def p_n_ell(sample: FunctionalSample, s: float, t: float, h: float, lag: int) -> int:
    """Number of pairs ``(n, n + l)`` with curve ``n`` observed near ``s`` and ``n + l`` near ``t``."""
    lag = _check_lag(sample.n_curves, lag)
    _, p = _pair_weights(window_weights(sample, s, h), window_weights(sample, t, h), lag)
    return p


def gamma_hat(sample: FunctionalSample, s: float, t: float, lag: int, h: float):
    """``(gamma_hat_{N,l}(s, t; h), P_{N,l})``."""
    lag = _check_lag(sample.n_curves, lag)
    return _gamma_from_weights(sample, window_weights(sample, s, h), window_weights(sample, t, h), lag)


def _gamma_from_weights(sample, ww_s, ww_t, lag):
    n = sample.n_curves
    a, p = _pair_weights(ww_s, ww_t, lag)
    if p == 0:
        raise EmptyWindowError(f"no pair of curves is observed near (s={ww_s.t}, t={ww_t.t}) at h={ww_s.h}")
    xs = ww_s.estimates(sample.flat_values)[: n - lag]
    xt = ww_t.estimates(sample.flat_values)[lag:]
    return float(np.sum(a * xs * xt) / p), p


def dbar_gamma(
    presmoothed_s: PresmoothedSample,
    s: float,
    t: float,
    lag: int,
    presmoothed_t: Optional[PresmoothedSample] = None,
    lag_cap: Optional[int] = None,
    full: bool = False,
) -> float:
    """Dependence bound built from ``Z_n = X~_n(s) X~_{n+l}(t)``, mirroring the mean case."""
    ps_t = presmoothed_s if presmoothed_t is None else presmoothed_t
    n = presmoothed_s.n_curves
    lag = _check_lag(n, lag)
    if n - lag < 2:
        raise ConfigError("dbar_gamma needs N >= lag + 2")
    z = presmoothed_s.evaluate(s)[: n - lag] * ps_t.evaluate(t)[lag:]
    return dbar_from_values(z, lag_cap, full)


def nu2_hat(presmoothed: PresmoothedSample, u: float, centered: bool = False) -> float:
    """Second moment of ``X~_n(u)`` across curves (variance when ``centered``)."""
    x = presmoothed.evaluate(u)
    if centered:
        x = x - x.mean()
    return float(np.mean(x * x))


@dataclass(frozen=True)
class GammaRiskRow:
    bias_s: float
    bias_t: float
    noise_s: float
    noise_t: float
    noise_cross: float
    penalty: float
    total: float
    p_n: int


_INFEASIBLE = GammaRiskRow(*([math.inf] * 7), 0)


def _gamma_row(ww_s, ww_t, lag, h, reg_s, reg_t, sigma2_s, sigma2_t, nu2_s, nu2_t, dbar, verbatim, penalty=True):
    n = ww_s.n_curves
    a, p = _pair_weights(ww_s, ww_t, lag)
    if p == 0:
        return _INFEASIBLE
    w = a / p
    b_s = ww_s.bias_factor(2.0 * reg_s.H_hat)[: n - lag]
    b_t = ww_t.bias_factor(2.0 * reg_t.H_hat)[lag:]
    mw_s = ww_s.max_weight()[: n - lag]
    mw_t_lag = ww_t.max_weight()[lag:]
    mw_first = ww_t.max_weight()[: n - lag] if verbatim else mw_s
    big_b_s = np.sum(w * b_s)
    big_b_t = np.sum(w * b_t)
    v0 = np.sum(w * mw_first) / p
    vl = np.sum(w * mw_t_lag) / p
    vc = np.sum(w * mw_s * mw_t_lag) / p
    bias_s = float(3.0 * nu2_t * reg_s.L2_hat * h ** (2.0 * reg_s.H_hat) * big_b_s)
    bias_t = float(3.0 * nu2_s * reg_t.L2_hat * h ** (2.0 * reg_t.H_hat) * big_b_t)
    noise_s = float(3.0 * sigma2_s * nu2_t * v0)
    noise_t = float(3.0 * sigma2_t * nu2_s * vl)
    noise_cross = float(3.0 * sigma2_s * sigma2_t * vc)
    pen = float(dbar / p) if penalty else 0.0
    total = bias_s + bias_t + noise_s + noise_t + noise_cross + pen
    return GammaRiskRow(bias_s, bias_t, noise_s, noise_t, noise_cross, pen, total, p)


def risk_bound_gamma(
    sample: FunctionalSample,
    s: float,
    t: float,
    lag: int,
    h: float,
    reg_s: RegularityEstimate,
    reg_t: RegularityEstimate,
    sigma2_s: float,
    sigma2_t: float,
    nu2_s: float,
    nu2_t: float,
    dbar: float,
    verbatim: bool = False,
) -> GammaRiskRow:
    """One row of the cross-product risk bound.

    The noise term attached to ``sigma^2(s)`` uses the maximal weights at
    ``s``; ``verbatim=True`` takes them at ``t`` instead.
    """
    lag = _check_lag(sample.n_curves, lag)
    h = _check_bandwidth(h)
    return _gamma_row(
        window_weights(sample, s, h), window_weights(sample, t, h), lag, h,
        reg_s, reg_t, sigma2_s, sigma2_t, nu2_s, nu2_t, dbar, verbatim,
    )


@dataclass(frozen=True, eq=False)
class GammaRiskProfile:
    """Per-bandwidth cross-product risk decomposition and its argmin."""

    s: float
    t: float
    lag: int
    h: np.ndarray
    columns: dict
    p_n: np.ndarray
    argmin_h: float
    admissible: Optional[np.ndarray] = None

    def __getattr__(self, name):
        cols = self.__dict__.get("columns", {})
        if name in cols:
            return cols[name]
        raise AttributeError(name)

    def rows(self):
        """``(h, bias_s, bias_t, noise_s, noise_t, noise_cross, penalty, total, P)`` per grid point."""
        cols = [self.columns[c].tolist() for c in GAMMA_COLUMNS]
        return list(zip(self.h.tolist(), *cols, self.p_n.tolist()))


def select_h_gamma(
    sample: FunctionalSample,
    s: float,
    t: float,
    lag: int,
    grid,
    reg_s: RegularityEstimate,
    reg_t: RegularityEstimate,
    sigma2_s: float,
    sigma2_t: float,
    nu2_s: float,
    nu2_t: float,
    dbar: float,
    verbatim: bool = False,
    common_design: bool = False,
) -> GammaRiskProfile:
    """Risk profile over ``grid`` and its argmin (smallest ``h`` on ties).

    In common-design mode the penalty is dropped and only bandwidths for
    which every pair is observed are admissible.
    """
    lag = _check_lag(sample.n_curves, lag)
    hs = _grid_values(grid)
    hmax = float(hs.max())
    wide_s, wide_t = gather(sample, s, hmax), gather(sample, t, hmax)
    rows = [
        _gamma_row(
            window_weights(sample, s, h, wide_s), window_weights(sample, t, h, wide_t), lag, h,
            reg_s, reg_t, sigma2_s, sigma2_t, nu2_s, nu2_t, dbar, verbatim, not common_design,
        )
        for h in hs
    ]
    cols = {c: np.array([getattr(r, c) for r in rows], dtype=float) for c in GAMMA_COLUMNS}
    p_n = np.array([r.p_n for r in rows], dtype=np.int64)
    admissible = None
    total = cols["total"]
    if common_design:
        admissible = p_n == sample.n_curves - lag
        total = np.where(admissible, total, np.inf)
        cols["total"] = total
    k = _argmin(total)
    return GammaRiskProfile(float(s), float(t), lag, hs, cols, p_n, float(hs[k]), admissible)


@dataclass(frozen=True, eq=False)
class AutocovEstimate:
    """Adaptive cross-product ``gamma_value`` and autocovariance ``Gamma_value``."""

    s: float
    t: float
    lag: int
    gamma_value: float
    Gamma_value: float
    h_star: float
    P_N_ell: int
    mu_s: float = math.nan
    mu_t: float = math.nan
    nu2_centered: bool = False
    verbatim: bool = False
    profile: Optional[GammaRiskProfile] = field(default=None, repr=False)


def gamma_hat_adaptive(
    sample: FunctionalSample,
    s: float,
    t: float,
    lag: int = 1,
    grid=None,
    reg_s: Optional[RegularityEstimate] = None,
    reg_t: Optional[RegularityEstimate] = None,
    mean_s: Optional[MeanEstimate] = None,
    mean_t: Optional[MeanEstimate] = None,
    nu2_centered: bool = False,
    verbatim: bool = False,
    common_design: Optional[bool] = None,
    lag_cap: Optional[int] = None,
    full_lags: bool = False,
    with_mean: bool = True,
    seed=0,
) -> AutocovEstimate:
    """Cross-product at the risk-minimising bandwidth, plus ``Gamma = gamma - mu(s) mu(t)``.

    The means are adaptive estimates with their own bandwidths; pass
    ``with_mean=False`` to skip them (``Gamma_value`` is then NaN).
    """
    s, t = float(s), float(t)
    lag = _check_lag(sample.n_curves, lag)
    if reg_s is None:
        reg_s = estimate_regularity(sample, s, seed=seed)
    if reg_t is None:
        reg_t = reg_s if t == s else estimate_regularity(sample, t, seed=seed)
    if grid is None:
        grid = default_bandwidth_grid(sample.n_curves, sample.lambda_hat, sample.domain)
    common = sample.design is Design.COMMON if common_design is None else bool(common_design)
    ps_s = presmooth(sample, presmoothing_bandwidth_for(sample, reg_s, seed))
    ps_t = presmooth(sample, presmoothing_bandwidth_for(sample, reg_t, seed))
    nu_s = nu2_hat(ps_s, s, nu2_centered)
    nu_t = nu2_hat(ps_t, t, nu2_centered)
    dbar = 0.0 if common else dbar_gamma(ps_s, s, t, lag, ps_t, lag_cap, full_lags)
    profile = select_h_gamma(
        sample, s, t, lag, grid, reg_s, reg_t, sigma2_hat(sample, s), sigma2_hat(sample, t),
        nu_s, nu_t, dbar, verbatim, common,
    )
    h = profile.argmin_h
    value, p = gamma_hat(sample, s, t, lag, h)
    mu_s = mu_t = math.nan
    big_gamma = math.nan
    if with_mean:
        if mean_s is None:
            mean_s = mu_hat_adaptive(sample, s, reg_s, grid, common_design=common, lag_cap=lag_cap, full_lags=full_lags)
        if mean_t is None:
            mean_t = mean_s if t == s else mu_hat_adaptive(
                sample, t, reg_t, grid, common_design=common, lag_cap=lag_cap, full_lags=full_lags
            )
        mu_s, mu_t = mean_s.value, mean_t.value
        big_gamma = value - mu_s * mu_t
    return AutocovEstimate(s, t, lag, value, big_gamma, h, p, mu_s, mu_t, nu2_centered, verbatim, profile)
