"""Shared domain types, the Epanechnikov kernel and Nadaraya-Watson window bookkeeping.

Curves are stored both as a tuple of :class:`ObservedCurve` objects and as
flat, curve-major arrays.  All window queries go through :func:`gather`, which
locates the design points with ``|T - t| <= h`` for every curve at once by a
binary search on a globally sorted key array, then applies the exact
inequality elementwise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, InvalidBandwidthError

__all__ = [
    "DomainInterval",
    "Design",
    "ObservedCurve",
    "FunctionalSample",
    "BandwidthGrid",
    "Window",
    "WindowWeights",
    "epanechnikov",
    "nw_weights",
    "pi_indicator",
    "default_bandwidth_grid",
    "geometric_grid",
    "gather",
    "window_weights",
    "segment_max",
    "segment_sum",
]

UNIT_INTERVAL_LO = 0.0
UNIT_INTERVAL_HI = 1.0


@dataclass(frozen=True)
class DomainInterval:
    """Half-open domain ``(lo, hi]``."""

    lo: float = UNIT_INTERVAL_LO
    hi: float = UNIT_INTERVAL_HI

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
            raise ConfigError(f"domain requires lo < hi, got ({self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x > self.lo) & (x <= self.hi)


class Design(str, enum.Enum):
    INDEPENDENT = "independent"
    COMMON = "common"


def _frozen_array(x, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float).ravel()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ObservedCurve:
    """Design points ``T_{n,i}`` and noisy values ``Y_{n,i}`` of one curve."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = _frozen_array(self.times, "times")
        values = _frozen_array(self.values, "values")
        if times.size != values.size:
            raise DataError(f"times and values differ in length ({times.size} vs {values.size})")
        if times.size < 2:
            raise DataError("a curve needs at least two design points")
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(values)):
            raise DataError("curve contains non-finite entries")
        if np.any(np.diff(times) <= 0):
            raise DataError("curve times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True, eq=False)
class FunctionalSample:
    """``N`` curves in time order, their design kind and the domain."""

    curves: tuple
    design: Design = Design.INDEPENDENT
    domain: DomainInterval = field(default_factory=DomainInterval)

    def __post_init__(self):
        curves = tuple(self.curves)
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "design", Design(self.design))
        if len(curves) < 2:
            raise DataError("a functional sample needs at least two curves")
        dom = self.domain
        for c in curves:
            if c.times[0] <= dom.lo or c.times[-1] > dom.hi:
                raise DataError(f"design points must lie in ({dom.lo}, {dom.hi}]")
        if self.design is Design.COMMON:
            ref = curves[0].times
            for c in curves[1:]:
                if c.times.size != ref.size or not np.array_equal(c.times, ref):
                    raise DataError("common design requires identical design points for all curves")

    @classmethod
    def from_arrays(
        cls,
        times: Sequence[Iterable[float]],
        values: Sequence[Iterable[float]],
        design: Design | str = Design.INDEPENDENT,
        domain: Optional[DomainInterval] = None,
    ) -> "FunctionalSample":
        curves = tuple(ObservedCurve(t, y) for t, y in zip(times, values))
        return cls(curves, Design(design), domain or DomainInterval())

    @classmethod
    def from_flat(cls, times, values, offsets, design=Design.INDEPENDENT, domain=None):
        offsets = np.asarray(offsets, dtype=np.int64)
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        curves = tuple(
            ObservedCurve(times[a:b], values[a:b]) for a, b in zip(offsets[:-1], offsets[1:])
        )
        return cls(curves, Design(design), domain or DomainInterval())

    @property
    def n_curves(self) -> int:
        return len(self.curves)

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.array([c.size for c in self.curves], dtype=np.int64)

    @property
    def lambda_hat(self) -> float:
        """Average number of design points per curve."""
        return float(self.sizes.mean())

    @cached_property
    def offsets(self) -> np.ndarray:
        off = np.zeros(self.n_curves + 1, dtype=np.int64)
        np.cumsum(self.sizes, out=off[1:])
        return off

    @cached_property
    def flat_times(self) -> np.ndarray:
        return np.concatenate([c.times for c in self.curves])

    @cached_property
    def flat_values(self) -> np.ndarray:
        return np.concatenate([c.values for c in self.curves])

    @cached_property
    def flat_curve(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_curves), self.sizes)

    @cached_property
    def _stride(self) -> float:
        return 2.0 * self.domain.length + 1.0

    @cached_property
    def _keys(self) -> np.ndarray:
        return self.flat_curve * self._stride + (self.flat_times - self.domain.lo)

    def with_values(self, values) -> "FunctionalSample":
        """Same design, new flat value vector (curve-major order)."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.flat_values.shape:
            raise DataError("value vector does not match the design")
        return FunctionalSample.from_flat(
            self.flat_times, values, self.offsets, self.design, self.domain
        )

    def subset(self, index) -> "FunctionalSample":
        """Curves selected by ``index`` (order kept as given)."""
        curves = tuple(self.curves[i] for i in index)
        return FunctionalSample(curves, self.design, self.domain)

    def searchsorted(self, x: float, side: str = "left", curves=None) -> np.ndarray:
        """Per-curve insertion index of ``x`` into each curve's times (local index)."""
        ids = np.arange(self.n_curves) if curves is None else np.asarray(curves)
        q = ids * self._stride + (x - self.domain.lo)
        pos = np.searchsorted(self._keys, q, side=side)
        return pos - self.offsets[ids]


@dataclass(frozen=True, eq=False)
class BandwidthGrid:
    """Strictly increasing grid of positive bandwidths."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen_array(self.values, "values")
        if v.size < 1:
            raise ConfigError("bandwidth grid is empty")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise InvalidBandwidthError("bandwidths must be finite and positive")
        if np.any(np.diff(v) <= 0):
            raise ConfigError("bandwidth grid must be strictly increasing")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return int(self.values.size)

    def __iter__(self):
        return iter(self.values.tolist())


def epanechnikov(u):
    """Epanechnikov kernel ``0.75 (1 - u^2)`` on ``|u| <= 1``, zero outside.

    NaN input propagates to NaN output.
    """
    u = np.asarray(u, dtype=float)
    out = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    out = np.where(np.isnan(u), np.nan, out)
    return out if out.ndim else float(out)


def _check_bandwidth(h: float) -> float:
    h = float(h)
    if not h > 0 or not math.isfinite(h):
        raise InvalidBandwidthError(f"bandwidth must be positive and finite, got {h}")
    return h


def nw_weights(t: float, h: float, times) -> np.ndarray:
    """Nadaraya-Watson weights of one curve at ``t`` (``0/0 = 0``)."""
    h = _check_bandwidth(h)
    times = np.asarray(times, dtype=float)
    k = epanechnikov((times - t) / h)
    k = np.atleast_1d(k)
    denom = k.sum()
    if denom == 0:
        return np.zeros_like(k)
    return k / denom


def pi_indicator(t: float, h: float, curve: ObservedCurve | np.ndarray) -> int:
    """1 if the curve has a design point within distance ``h`` of ``t``."""
    h = _check_bandwidth(h)
    times = curve.times if isinstance(curve, ObservedCurve) else np.asarray(curve, dtype=float)
    return int(np.any(np.abs(times - t) <= h))


def geometric_grid(lo: float, hi: float, count: int) -> BandwidthGrid:
    if count < 2:
        raise ConfigError("a bandwidth grid needs at least two points")
    if not 0 < lo < hi:
        raise ConfigError(f"grid bounds must satisfy 0 < lo < hi, got {lo}, {hi}")
    return BandwidthGrid(np.geomspace(lo, hi, count))


def default_bandwidth_grid(
    n_curves: int, lambda_hat: float, domain: Optional[DomainInterval] = None, count: int = 51
) -> BandwidthGrid:
    """Geometric grid from ``log(N lam)/(N lam)`` to a quarter of the domain."""
    domain = domain or DomainInterval()
    if count < 2:
        raise ConfigError("count must be at least 2")
    if n_curves < 2 or lambda_hat < 2:
        raise ConfigError("default grid needs N >= 2 and lambda >= 2")
    n_lam = n_curves * lambda_hat
    h_max = 0.25 * domain.length
    h_min = math.log(n_lam) / n_lam
    if h_min >= h_max / 2:
        h_min = h_max / 2
    return geometric_grid(h_min, h_max, count)


@dataclass(frozen=True, eq=False)
class Window:
    """Design points with ``|T - t| <= h``; arrays are aligned and curve-major."""

    t: float
    h: float
    curve: np.ndarray
    index: np.ndarray
    dist: np.ndarray
    n_curves: int

    def restrict(self, h: float) -> "Window":
        keep = np.abs(self.dist) <= h
        return Window(self.t, h, self.curve[keep], self.index[keep], self.dist[keep], self.n_curves)


def _ragged_arange(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    shift = np.repeat(starts - (np.cumsum(counts) - counts), counts)
    return np.arange(total, dtype=np.int64) + shift


def gather(sample: FunctionalSample, t: float, h: float, curves=None) -> Window:
    """All design points within ``h`` of ``t``, for every (or selected) curve.

    When ``curves`` is given, the returned ``curve`` ids are positions in that
    selection and ``n_curves`` is its length.
    """
    h = _check_bandwidth(h)
    ids = np.arange(sample.n_curves) if curves is None else np.asarray(curves, dtype=np.int64)
    dom = sample.domain
    stride = sample._stride
    margin = 1e-9 * (1.0 + stride * sample.n_curves)
    base = ids * stride
    lo_q = base + max(t - h - dom.lo, 0.0) - margin
    hi_q = base + min(t + h - dom.lo, dom.length) + margin
    keys = sample._keys
    starts = np.searchsorted(keys, lo_q, side="left")
    ends = np.searchsorted(keys, hi_q, side="right")
    counts = np.maximum(ends - starts, 0)
    idx = _ragged_arange(starts, counts)
    local = np.repeat(np.arange(ids.size), counts)
    dist = sample.flat_times[idx] - t
    keep = np.abs(dist) <= h
    return Window(float(t), h, local[keep], idx[keep], dist[keep], int(ids.size))


def segment_sum(values: np.ndarray, segment: np.ndarray, n: int) -> np.ndarray:
    """Per-segment float sums (``bincount`` returns integers for empty input)."""
    return np.bincount(segment, values, minlength=n).astype(float, copy=False)


def segment_max(values: np.ndarray, segment: np.ndarray, n: int) -> np.ndarray:
    """Per-segment maximum, zero for empty segments (values assumed >= 0)."""
    out = np.zeros(n)
    if values.size:
        np.maximum.at(out, segment, values)
    return out


@dataclass(frozen=True, eq=False)
class WindowWeights:
    """Nadaraya-Watson weights ``W_{n,i}(t;h)`` for every curve at one ``(t, h)``."""

    window: Window
    weight: np.ndarray
    pi: np.ndarray

    @property
    def t(self) -> float:
        return self.window.t

    @property
    def h(self) -> float:
        return self.window.h

    @property
    def curve(self) -> np.ndarray:
        return self.window.curve

    @property
    def n_curves(self) -> int:
        return self.window.n_curves

    @property
    def p_n(self) -> int:
        return int(self.pi.sum())

    def estimates(self, flat_values: np.ndarray) -> np.ndarray:
        """``X_hat_n(t;h) = sum_i W_{n,i} Y_{n,i}`` per curve (0 outside windows)."""
        prod = self.weight * flat_values[self.window.index]
        return segment_sum(prod, self.curve, self.n_curves)

    def weight_sum(self) -> np.ndarray:
        """``c_n = sum_i |W_{n,i}|`` per curve."""
        return segment_sum(np.abs(self.weight), self.curve, self.n_curves)

    def max_weight(self) -> np.ndarray:
        return segment_max(np.abs(self.weight), self.curve, self.n_curves)

    def weight_sq_sum(self) -> np.ndarray:
        return segment_sum(self.weight * self.weight, self.curve, self.n_curves)

    def bias_factor(self, alpha: float) -> np.ndarray:
        """``b_n(t;h,alpha) = sum_i |(T_{n,i}-t)/h|^alpha |W_{n,i}|``."""
        u = np.abs(self.window.dist / self.h)
        return segment_sum(np.power(u, alpha) * np.abs(self.weight), self.curve, self.n_curves)

    def n_positive(self) -> np.ndarray:
        """Number of design points with strictly positive weight, per curve."""
        return np.bincount(self.curve, self.weight > 0, minlength=self.n_curves).astype(np.int64)


def window_weights(
    sample: FunctionalSample, t: float, h: float, window: Optional[Window] = None
) -> WindowWeights:
    """NW weights at ``(t, h)``; ``window`` may be a pre-gathered wider window."""
    h = _check_bandwidth(h)
    if window is None:
        window = gather(sample, t, h)
    elif window.h != h:
        if window.h < h:
            raise ValueError("pre-gathered window is narrower than h")
        window = window.restrict(h)
    n = window.n_curves
    k = epanechnikov(window.dist / h)
    k = np.atleast_1d(k)
    denom = segment_sum(k, window.curve, n)
    d_pt = denom[window.curve]
    safe = np.where(d_pt > 0, d_pt, 1.0)
    weight = np.where(d_pt > 0, k / safe, 0.0)
    pi = (np.bincount(window.curve, minlength=n) > 0).astype(np.int64)
    return WindowWeights(window, weight, pi)
