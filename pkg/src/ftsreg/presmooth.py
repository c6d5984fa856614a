"""Linear presmoothing of all curves with one shared bandwidth.

The level smoother is Nadaraya-Watson with the Epanechnikov kernel.  The
``d``-th derivative is estimated by a local polynomial of degree ``d + 1``
fitted in the rescaled variable ``z = (T - u) / b``.  Bandwidths are chosen
by leave-one-observation-out cross-validation pooled over a subsample of
curves, so that every curve is smoothed with the same linear operator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    BandwidthGrid,
    FunctionalSample,
    _check_bandwidth,
    _ragged_arange,
    epanechnikov,
    gather,
    geometric_grid,
    segment_sum,
    window_weights,
)
from .errors import ConfigError, DataError, NoFeasibleBandwidthError

__all__ = [
    "PresmoothedSample",
    "presmooth",
    "presmooth_derivative",
    "nearest_values",
    "cv_profile",
    "cv_bandwidth",
    "presmoothing_grid",
    "write_cv_profile",
    "sigma2_hat",
]

MAX_DERIVATIVE_ORDER = 3
MAX_DOUBLINGS = 3


def nearest_values(sample: FunctionalSample, u: float, curves=None) -> np.ndarray:
    """Value at the design point closest to ``u`` (left one on ties), per curve."""
    ids = np.arange(sample.n_curves) if curves is None else np.asarray(curves, dtype=np.int64)
    sizes = sample.sizes[ids]
    pos = sample.searchsorted(u, "left", ids)
    right = np.minimum(pos, sizes - 1)
    left = np.maximum(pos - 1, 0)
    base = sample.offsets[ids]
    t = sample.flat_times
    use_right = np.abs(t[base + right] - u) < np.abs(t[base + left] - u)
    return sample.flat_values[base + np.where(use_right, right, left)]


def _level_estimates(sample: FunctionalSample, u: float, b: float) -> np.ndarray:
    ww = window_weights(sample, u, b)
    est = ww.estimates(sample.flat_values)
    empty = np.flatnonzero(ww.weight_sum() == 0)
    if empty.size:
        est[empty] = nearest_values(sample, u, empty)
    return est


def _powers(z: np.ndarray, count: int) -> list:
    out = [np.ones_like(z)]
    for _ in range(1, count):
        out.append(out[-1] * z)
    return out


def _batched_solve(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve each system; rows whose Gram matrix is numerically singular become NaN.

    With at least ``p`` distinct points of positive kernel weight the Gram
    matrix is positive definite, so failures only come from extreme clustering.
    """
    try:
        sol = np.linalg.solve(gram, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        sol = np.full(rhs.shape, np.nan)
        for i in range(gram.shape[0]):
            try:
                sol[i] = np.linalg.solve(gram[i], rhs[i])
            except np.linalg.LinAlgError:
                pass
    bad = ~np.all(np.isfinite(sol), axis=1)
    sol[bad] = np.nan
    return sol


def _poly_fit(sample: FunctionalSample, u: float, b: float, degree: int, curves, values):
    """Local polynomial coefficients per selected curve; NaN rows mark singular fits."""
    win = gather(sample, u, b, curves)
    n = win.n_curves
    z = win.dist / b
    k = np.atleast_1d(epanechnikov(z))
    y = values[win.index]
    p = degree + 1
    pos = k > 0
    npos = np.bincount(win.curve, pos, minlength=n)
    zpow = _powers(z, 2 * p - 1)
    moments = np.stack([segment_sum(k * zpow[m], win.curve, n) for m in range(2 * p - 1)], axis=1)
    gram = np.empty((n, p, p))
    for i in range(p):
        for j in range(p):
            gram[:, i, j] = moments[:, i + j]
    rhs = np.stack([segment_sum(k * zpow[m] * y, win.curve, n) for m in range(p)], axis=1)
    coef = np.full((n, p), np.nan)
    ok = npos >= p
    idx = np.flatnonzero(ok)
    if idx.size:
        coef[idx] = _batched_solve(gram[idx], rhs[idx])
    return coef


@dataclass(frozen=True, eq=False)
class PresmoothedSample:
    """Presmoothed curves ``X~_n`` (``order = 0``) or their ``order``-th derivatives.

    ``evaluate(u)`` returns one value per curve.  Empty level windows fall back
    to the nearest design point; singular derivative fits double the bandwidth
    for the affected curves up to three times.
    """

    sample: FunctionalSample
    bandwidth_b: float
    order: int = 0

    @property
    def n_curves(self) -> int:
        return self.sample.n_curves

    def evaluate(self, u: float) -> np.ndarray:
        u = float(u)
        if self.order == 0:
            return _level_estimates(self.sample, u, self.bandwidth_b)
        return self._derivative(u)

    def __call__(self, u: float) -> np.ndarray:
        return self.evaluate(u)

    def _derivative(self, u: float) -> np.ndarray:
        d = self.order
        values = self.sample.flat_values
        out = np.full(self.n_curves, np.nan)
        todo = np.arange(self.n_curves)
        b = self.bandwidth_b
        for attempt in range(MAX_DOUBLINGS + 1):
            coef = _poly_fit(self.sample, u, b, d + 1, todo, values)
            good = np.isfinite(coef[:, d])
            out[todo[good]] = math.factorial(d) * coef[good, d] / b**d
            todo = todo[~good]
            if todo.size == 0:
                return out
            b *= 2.0
        raise DataError(
            f"derivative fit of order {d} at u={u} is singular for {todo.size} curve(s) "
            f"even after {MAX_DOUBLINGS} bandwidth doublings"
        )


def presmooth(sample: FunctionalSample, b: float) -> PresmoothedSample:
    """Nadaraya-Watson smoothing of every curve with the shared bandwidth ``b``."""
    return PresmoothedSample(sample, _check_bandwidth(b), 0)


def presmooth_derivative(sample: FunctionalSample, d: int, b: float) -> PresmoothedSample:
    """``d``-th derivative estimates from local polynomials of degree ``d + 1``."""
    if not 1 <= int(d) <= MAX_DERIVATIVE_ORDER:
        raise ConfigError(f"derivative order must be in 1..{MAX_DERIVATIVE_ORDER}, got {d}")
    return PresmoothedSample(sample, _check_bandwidth(b), int(d))


def sigma2_hat(sample: FunctionalSample, t: float) -> float:
    """Noise variance at ``t`` from half squared differences of neighbouring observations.

    For each curve the pair ``(i, i+1)`` is used, where ``i`` is the last design
    point strictly left of ``t`` (so a design point at ``t`` picks its left
    gap); the pair is clipped to the first or last two points outside the
    observed range.
    """
    k = sample.searchsorted(float(t), "left")
    i = np.clip(k - 1, 0, sample.sizes - 2)
    idx = sample.offsets[:-1] + i
    y = sample.flat_values
    diff = y[idx] - y[idx + 1]
    return float(np.mean(0.5 * diff * diff))


def presmoothing_grid(sample: FunctionalSample, count: int = 20) -> BandwidthGrid:
    """Candidate presmoothing bandwidths between ``1/lam`` and ``40/lam`` (times the domain length)."""
    length = sample.domain.length
    lam = sample.lambda_hat
    hi = min(0.25 * length, 40.0 * length / lam)
    lo = min(length / lam, hi / 2)
    return geometric_grid(lo, hi, count)


def _neighbour_pairs(sample: FunctionalSample, targets: np.ndarray, radius: float):
    """Ragged list of same-curve neighbours within ``radius`` of each target (self excluded)."""
    keys = sample._keys
    margin = 1e-9 * (1.0 + sample._stride * sample.n_curves)
    starts = np.searchsorted(keys, keys[targets] - radius - margin, side="left")
    ends = np.searchsorted(keys, keys[targets] + radius + margin, side="right")
    counts = ends - starts
    nb = _ragged_arange(starts, counts)
    owner = np.repeat(np.arange(targets.size), counts)
    dist = sample.flat_times[nb] - sample.flat_times[targets[owner]]
    keep = (np.abs(dist) <= radius) & (nb != targets[owner])
    same = sample.flat_curve[nb] == sample.flat_curve[targets[owner]]
    keep &= same
    return owner[keep], nb[keep], dist[keep]


def _loo_predictions(sample, targets, owner, nb, dist, b, degree):
    """Leave-one-out predictions at ``targets``; NaN where the fit is degenerate."""
    m = targets.size
    sel = np.abs(dist) <= b
    o, j, z = owner[sel], nb[sel], dist[sel] / b
    k = np.atleast_1d(epanechnikov(z))
    y = sample.flat_values[j]
    if degree == 0:
        den = segment_sum(k, o, m)
        num = segment_sum(k * y, o, m)
        out = np.full(m, np.nan)
        ok = den > 0
        out[ok] = num[ok] / den[ok]
        return out
    p = degree + 1
    zpow = _powers(z, 2 * p - 1)
    mom = np.stack([segment_sum(k * zp, o, m) for zp in zpow], axis=1)
    gram = np.empty((m, p, p))
    for a in range(p):
        for c in range(p):
            gram[:, a, c] = mom[:, a + c]
    rhs = np.stack([segment_sum(k * zpow[q] * y, o, m) for q in range(p)], axis=1)
    npos = segment_sum(k > 0, o, m)
    out = np.full(m, np.nan)
    ok = npos >= p
    idx = np.flatnonzero(ok)
    if idx.size:
        out[idx] = _batched_solve(gram[idx], rhs[idx])[:, 0]
    return out


def _nearest_other(sample: FunctionalSample, targets: np.ndarray) -> np.ndarray:
    """Value of the adjacent design point closest to each target (left one on ties)."""
    first = sample.offsets[sample.flat_curve[targets]]
    last = sample.offsets[sample.flat_curve[targets] + 1] - 1
    left = np.maximum(targets - 1, first)
    right = np.minimum(targets + 1, last)
    t = sample.flat_times
    gap_l = np.where(left < targets, t[targets] - t[left], np.inf)
    gap_r = np.where(right > targets, t[right] - t[targets], np.inf)
    return sample.flat_values[np.where(gap_r < gap_l, right, left)]


def cv_profile(
    sample: FunctionalSample,
    candidates: BandwidthGrid,
    subsample: Optional[int] = None,
    seed=0,
    degree: int = 0,
    window: Optional[tuple[float, float]] = None,
):
    """Leave-one-observation-out CV error for every candidate bandwidth.

    Errors are pooled over a random subsample of ``min(N, 50)`` curves (by
    default) and, when ``window = (lo, hi)`` is given, over design points in
    that interval only.  Points whose leave-one-out fit is degenerate are
    predicted by their nearest neighbour.  Candidates for which every point is
    degenerate get an infinite error.

    Returns ``(bandwidths, errors)``.
    """
    bvals = np.asarray(candidates.values if isinstance(candidates, BandwidthGrid) else candidates, float)
    n = sample.n_curves
    size = min(n, 50) if subsample is None else min(int(subsample), n)
    if size < 1:
        raise ConfigError("subsample must be at least 1")
    rng = np.random.default_rng(seed)
    curves = np.sort(rng.choice(n, size=size, replace=False)) if size < n else np.arange(n)
    targets = np.concatenate(
        [np.arange(sample.offsets[c], sample.offsets[c + 1]) for c in curves]
    )
    if window is not None:
        t = sample.flat_times[targets]
        targets = targets[(t >= window[0]) & (t <= window[1])]
    errors = np.full(bvals.size, np.inf)
    if targets.size == 0:
        return bvals, errors
    owner, nb, dist = _neighbour_pairs(sample, targets, float(bvals.max()))
    fallback = _nearest_other(sample, targets)
    y = sample.flat_values[targets]
    for q, b in enumerate(bvals):
        pred = _loo_predictions(sample, targets, owner, nb, dist, b, degree)
        bad = np.isnan(pred)
        if bad.all():
            continue
        pred = np.where(bad, fallback, pred)
        ok = np.isfinite(pred)
        errors[q] = float(np.mean((y[ok] - pred[ok]) ** 2))
    return bvals, errors


def cv_bandwidth(
    sample: FunctionalSample,
    candidates: Optional[BandwidthGrid] = None,
    subsample: Optional[int] = None,
    seed=0,
    degree: int = 0,
    window: Optional[tuple[float, float]] = None,
) -> float:
    """CV-optimal shared bandwidth; ties go to the smaller candidate."""
    if candidates is None:
        candidates = presmoothing_grid(sample)
    bvals, errors = cv_profile(sample, candidates, subsample, seed, degree, window)
    if not np.any(np.isfinite(errors)):
        raise NoFeasibleBandwidthError("every candidate bandwidth leaves all CV windows empty")
    return float(bvals[int(np.argmin(errors))])


def write_cv_profile(path, bandwidths, errors) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["b", "cv_error"])
        for b, e in zip(np.asarray(bandwidths).tolist(), np.asarray(errors).tolist()):
            w.writerow([repr(b), repr(e)])
