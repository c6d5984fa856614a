"""Generators for functional time series and their noisy discrete observation.

The latent curves live on an equispaced grid ``j / G`` (``j = 1..G``) of the
unit interval.  Innovations are multifractional Brownian motions sampled
exactly on that grid from a Cholesky factor of their covariance matrix; the
factor is cached per Hurst function and grid size.  Observations at arbitrary
design points are obtained by linear interpolation of the latent grid.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import gamma as gamma_fn

from .core import Design, DomainInterval, FunctionalSample
from .errors import ConfigError, DataError, NumericalError

__all__ = [
    "HurstFunction",
    "MeanFunction",
    "Model",
    "SimConfig",
    "LatentPaths",
    "make_rng",
    "replication_rngs",
    "latent_grid",
    "quadrature_weights",
    "mfbm_cov",
    "mfbm_cov_matrix",
    "sample_gaussian_paths",
    "sample_mfbm",
    "far_operator",
    "far1_generate",
    "far1_stream",
    "farch1_generate",
    "product_generate",
    "integrate_paths",
    "observe",
    "simulate_sample",
]

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Counter-based (Philox) generator from an int, a SeedSequence or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def replication_rngs(seed: int, replication: int, streams: int = 2) -> list[np.random.Generator]:
    """Independent streams for one replication, derived from ``(seed, replication)`` only."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(replication)])
    return [make_rng(child) for child in ss.spawn(streams)]


@dataclass(frozen=True)
class HurstFunction:
    """Hurst exponent ``t -> H(t)`` with values in ``(0, 1)``.

    ``kind`` is ``"constant"`` (uses ``value``) or ``"logistic"``:
    ``lo + (hi - lo) / (1 + exp(-k (t - t0)))``.
    """

    kind: str = "constant"
    value: float = 0.5
    lo: float = 0.2
    hi: float = 0.8
    k: float = 15.0
    t0: float = 0.5

    def __post_init__(self):
        if self.kind == "constant":
            if not 0 < self.value < 1:
                raise ConfigError(f"Hurst exponent must lie in (0, 1), got {self.value}")
        elif self.kind == "logistic":
            if not (0 < self.lo < 1 and 0 < self.hi < 1):
                raise ConfigError("logistic Hurst bounds must lie in (0, 1)")
        else:
            raise ConfigError(f"unknown Hurst function kind {self.kind!r}")

    @classmethod
    def constant(cls, value: float) -> "HurstFunction":
        return cls("constant", value=float(value))

    @classmethod
    def logistic(cls, lo=0.2, hi=0.8, k=15.0, t0=0.5) -> "HurstFunction":
        return cls("logistic", lo=float(lo), hi=float(hi), k=float(k), t0=float(t0))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            out = np.full_like(t, self.value)
        else:
            out = self.lo + (self.hi - self.lo) / (1.0 + np.exp(-self.k * (t - self.t0)))
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class MeanFunction:
    """``"sine"``: ``4 sin(3 pi t / 2)``; ``"zero"``; ``"constant"``: ``value``."""

    kind: str = "sine"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sine", "zero", "constant"):
            raise ConfigError(f"unknown mean function {self.kind!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "sine":
            out = 4.0 * np.sin(1.5 * np.pi * t)
        elif self.kind == "zero":
            out = np.zeros_like(t)
        else:
            out = np.full_like(t, self.value)
        return out if out.ndim else float(out)


class Model(str, enum.Enum):
    FAR1_MFBM_CONST_H = "far1_mfbm_const_h"
    FAR1_MFBM_LOGISTIC_H = "far1_mfbm_logistic_h"


@dataclass(frozen=True)
class SimConfig:
    """FAR(1) simulation setup with MfBm innovations.

    ``hurst`` defaults to ``H = 0.5`` for the constant model and to the
    logistic preset otherwise.  ``operator_norm`` selects how the kernel
    ``psi(u, s) = kappa exp(-(u + 2 s)^2)`` is scaled: ``"sup"`` uses the
    max-row-sum (sup-norm operator norm) of the discretised operator,
    ``"spectral"`` its largest singular value.
    """

    N: int
    lam: int
    model: Model = Model.FAR1_MFBM_LOGISTIC_H
    mu: MeanFunction = field(default_factory=MeanFunction)
    psi_norm: float = 0.5
    L: float = 2.0
    sigma: float = 0.25
    burn_in: int = 100
    eval_grid_size: int = 1024
    seed: int = 0
    hurst: Optional[HurstFunction] = None
    operator_norm: str = "spectral"
    design: Design = Design.INDEPENDENT

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        object.__setattr__(self, "design", Design(self.design))
        if self.N < 2:
            raise ConfigError("N must be at least 2")
        if self.lam < 2:
            raise ConfigError("lambda must be at least 2")
        if not 0 <= self.psi_norm < 1:
            raise ConfigError("psi_norm must lie in [0, 1)")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be non-negative")
        if self.eval_grid_size < 2:
            raise ConfigError("eval_grid_size must be at least 2")
        if self.sigma < 0 or self.L < 0:
            raise ConfigError("sigma and L must be non-negative")
        if self.operator_norm not in ("sup", "spectral"):
            raise ConfigError("operator_norm must be 'sup' or 'spectral'")
        if self.hurst is None:
            h = (
                HurstFunction.constant(0.5)
                if self.model is Model.FAR1_MFBM_CONST_H
                else HurstFunction.logistic()
            )
            object.__setattr__(self, "hurst", h)

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class LatentPaths:
    """Latent curves on an equispaced grid of ``(0, 1]``; ``paths`` is ``N x G``."""

    grid: np.ndarray
    paths: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        paths = np.atleast_2d(np.asarray(self.paths, dtype=float))
        if paths.shape[1] != grid.size:
            raise DataError("paths must have one column per grid point")
        if not np.all(np.isfinite(paths)):
            raise NumericalError("latent paths contain non-finite values")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "paths", paths)

    @property
    def n_curves(self) -> int:
        return self.paths.shape[0]


def latent_grid(size: int) -> np.ndarray:
    return np.arange(1, size + 1, dtype=float) / size


def quadrature_weights(grid: np.ndarray) -> np.ndarray:
    """Trapezoid weights on ``[0, grid[-1]]``; the value at 0 is taken from ``grid[0]``."""
    grid = np.asarray(grid, dtype=float)
    w = np.empty_like(grid)
    gaps = np.diff(grid)
    w[0] = grid[0] + gaps[0] / 2
    w[1:-1] = (gaps[:-1] + gaps[1:]) / 2
    w[-1] = gaps[-1] / 2
    return w


def _mfbm_constant(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    num = np.sqrt(gamma_fn(2 * x + 1) * gamma_fn(2 * y + 1) * np.sin(np.pi * x) * np.sin(np.pi * y))
    den = 2.0 * gamma_fn(x + y + 1) * np.sin(np.pi * (x + y) / 2)
    return num / den


def _hurst_values(H, t) -> np.ndarray:
    if isinstance(H, (int, float)):
        vals = np.full_like(np.asarray(t, dtype=float), float(H))
    else:
        vals = np.asarray(H(t), dtype=float)
    if np.any(~((vals > 0) & (vals < 1))):
        raise ConfigError("Hurst exponent must lie in (0, 1)")
    return vals


def mfbm_cov(u, v, H):
    """Covariance ``E[xi(u) xi(v)]`` of a multifractional Brownian motion."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(u < 0) or np.any(v < 0):
        raise ConfigError("MfBm covariance needs u, v >= 0")
    hu = _hurst_values(H, u)
    hv = _hurst_values(H, v)
    s = hu + hv
    out = _mfbm_constant(hu, hv) * (u**s + v**s - np.abs(v - u) ** s)
    return out if out.ndim else float(out)


def mfbm_cov_matrix(grid, H) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    c = mfbm_cov(grid[:, None], grid[None, :], H)
    return 0.5 * (c + c.T)


def _cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    scale = float(np.mean(np.diag(cov))) or 1.0
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(cov.shape[0])
    for jitter in (1e-12, 1e-11, 1e-10, 1e-9, 1e-8):
        try:
            return np.linalg.cholesky(cov + jitter * scale * eye)
        except np.linalg.LinAlgError:
            continue
    min_eig = float(np.linalg.eigvalsh(cov)[0])
    raise NumericalError(f"covariance is not positive semi-definite (smallest eigenvalue {min_eig:.3e})")


MAX_DENSE_GRID = 4096


def sample_gaussian_paths(cov: Callable, grid, count: int, seed: SeedLike) -> np.ndarray:
    """``count`` i.i.d. centred Gaussian vectors with covariance ``cov(u, v)`` on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    if grid.size > MAX_DENSE_GRID:
        raise ConfigError(f"grid of {grid.size} points exceeds the dense limit {MAX_DENSE_GRID}")
    if count < 0:
        raise ConfigError("count must be non-negative")
    if count == 0:
        return np.zeros((0, grid.size))
    c = np.asarray(cov(grid[:, None], grid[None, :]), dtype=float)
    factor = _cholesky_with_jitter(0.5 * (c + c.T))
    z = make_rng(seed).standard_normal((count, grid.size))
    return z @ factor.T


@lru_cache(maxsize=16)
def _mfbm_factor(hurst: HurstFunction, size: int) -> np.ndarray:
    factor = _cholesky_with_jitter(mfbm_cov_matrix(latent_grid(size), hurst))
    factor.setflags(write=False)
    return factor


def sample_mfbm(hurst: HurstFunction, size: int, count: int, rng) -> np.ndarray:
    """MfBm paths on ``latent_grid(size)`` (the value at 0 is identically 0)."""
    if count == 0:
        return np.zeros((0, size))
    factor = _mfbm_factor(hurst, size)
    z = make_rng(rng).standard_normal((count, size))
    return z @ factor.T


def far_operator(size: int, psi_norm: float, norm: str = "sup") -> np.ndarray:
    """Discretised integral operator ``(A x)_i = sum_j psi(u_i, s_j) w_j x_j``."""
    return _far_operator(int(size), float(psi_norm), norm).copy()


@lru_cache(maxsize=8)
def _far_operator(size: int, psi_norm: float, norm: str) -> np.ndarray:
    grid = latent_grid(size)
    w = quadrature_weights(grid)
    base = np.exp(-((grid[:, None] + 2.0 * grid[None, :]) ** 2)) * w[None, :]
    if psi_norm == 0:
        return np.zeros_like(base)
    if norm == "sup":
        current = float(np.abs(base).sum(axis=1).max())
    elif norm == "spectral":
        current = float(np.linalg.norm(base, 2))
    else:
        raise ConfigError(f"unknown operator norm {norm!r}")
    return base * (psi_norm / current)


@lru_cache(maxsize=8)
def _far_factors(size: int, psi_norm: float, norm: str):
    # low-rank split A = U @ B; the smooth kernel has rapidly decaying singular values
    a = _far_operator(size, psi_norm, norm)
    if psi_norm == 0:
        return np.zeros((size, 0)), np.zeros((0, size))
    u, s, vt = np.linalg.svd(a)
    r = int(np.sum(s > s[0] * 1e-15))
    return u[:, :r].copy(), (s[:r, None] * vt[:r]).copy()


def far1_stream(cfg: SimConfig, rng, total: int, chunk: int = 2048):
    """Yield successive blocks of the stationary FAR(1) series after burn-in."""
    rng = make_rng(rng)
    size = cfg.eval_grid_size
    grid = latent_grid(size)
    mu = np.asarray(cfg.mu(grid), dtype=float)
    U, B = _far_factors(size, cfg.psi_norm, cfg.operator_norm)
    BU = B @ U
    state = np.zeros(B.shape[0])
    remaining_burn = cfg.burn_in
    produced = 0
    while produced < total:
        if remaining_burn > 0:
            m = min(chunk, remaining_burn)
        else:
            m = min(chunk, total - produced)
        xi = cfg.L * sample_mfbm(cfg.hurst, size, m, rng)
        bxi = xi @ B.T
        coeff = np.empty((m, B.shape[0]))
        for i in range(m):
            coeff[i] = state
            state = BU @ state + bxi[i]
        block = xi + coeff @ U.T if B.shape[0] else xi
        if remaining_burn > 0:
            remaining_burn -= m
            continue
        produced += m
        yield block + mu


def far1_generate(cfg: SimConfig, rng: SeedLike = None) -> LatentPaths:
    """``N`` consecutive curves of ``X_n = mu + Psi(X_{n-1} - mu) + L xi_n``."""
    rng = make_rng(cfg.seed if rng is None else rng)
    blocks = list(far1_stream(cfg, rng, cfg.N))
    return LatentPaths(latent_grid(cfg.eval_grid_size), np.vstack(blocks))


def farch1_generate(
    N: int,
    grid,
    c: Callable,
    beta: Callable,
    xi_sampler: Callable,
    burn_in: int = 100,
    seed: SeedLike = None,
) -> LatentPaths:
    """Functional ARCH(1): ``Y_n = xi_n sigma_n``, ``sigma_n^2 = c + int beta(s,.) Y_{n-1}^2``.

    ``xi_sampler(count, rng)`` returns a ``count x len(grid)`` matrix.
    """
    grid = np.asarray(grid, dtype=float)
    rng = make_rng(seed)
    c_vals = np.asarray(c(grid), dtype=float) * np.ones_like(grid)
    if np.any(c_vals <= 0):
        raise ConfigError("c(t) must be positive")
    w = quadrature_weights(grid)
    # kernel[i, j] = beta(s_j, t_i) w_j
    kernel = np.asarray(beta(grid[None, :], grid[:, None]), dtype=float) * np.ones((grid.size, grid.size))
    if np.any(kernel < 0):
        raise ConfigError("beta must be non-negative")
    kernel = kernel * w[None, :]
    xi = np.asarray(xi_sampler(burn_in + N, rng), dtype=float)
    out = np.empty((burn_in + N, grid.size))
    prev_sq = np.zeros(grid.size)
    for n in range(burn_in + N):
        sig2 = c_vals + kernel @ prev_sq
        out[n] = xi[n] * np.sqrt(sig2)
        prev_sq = out[n] ** 2
    return LatentPaths(grid, out[burn_in:])


def product_generate(U_series, Y_paths: LatentPaths) -> LatentPaths:
    """``X_n(t) = U_n Y_n(t)``."""
    u = np.asarray(U_series, dtype=float).ravel()
    if u.size != Y_paths.n_curves:
        raise DataError(f"U series has {u.size} values for {Y_paths.n_curves} curves")
    return LatentPaths(Y_paths.grid, u[:, None] * Y_paths.paths)


def integrate_paths(paths: LatentPaths, start: float = 0.0) -> LatentPaths:
    """``eta(t) = int_start^t x(u) du`` by the trapezoid rule (``x(0) = 0`` assumed).

    Applying it ``d`` times turns a process of regularity ``H`` into one of
    regularity ``d + H``.
    """
    grid = paths.grid
    x = paths.paths
    knots = np.concatenate([[0.0], grid])
    vals = np.hstack([np.zeros((x.shape[0], 1)), x])
    steps = 0.5 * (vals[:, 1:] + vals[:, :-1]) * np.diff(knots)[None, :]
    cum = np.cumsum(steps, axis=1)
    if start > 0:
        cum = cum - np.array([np.interp(start, grid, row) for row in cum])[:, None]
    return LatentPaths(grid, cum)


def _interpolate(paths: LatentPaths, curve: np.ndarray, times: np.ndarray) -> np.ndarray:
    grid = paths.grid
    g = grid.size
    right = np.clip(np.searchsorted(grid, times), 1, g - 1)
    left = right - 1
    frac = np.clip((times - grid[left]) / (grid[right] - grid[left]), 0.0, 1.0)
    p = paths.paths
    a = p[curve, left]
    # this form returns a constant path exactly
    return a + frac * (p[curve, right] - a)


def observe(
    paths: LatentPaths,
    design: Design | str,
    lam: int,
    sigma: Union[float, Callable] = 0.25,
    seed: SeedLike = None,
) -> FunctionalSample:
    """Noisy discrete observation of latent curves on ``(0, 1]``.

    Independent design: ``M_n`` uniform on ``ceil(0.8 lam)..floor(1.2 lam)``
    and ``T`` uniform on ``(0, 1]``.  Common design: ``T_i = i / lam``.
    """
    design = Design(design)
    lam = int(lam)
    if lam < 2:
        raise ConfigError("lambda must be at least 2")
    if lam > 4 * paths.grid.size:
        warnings.warn(
            f"lambda={lam} exceeds 4x the latent grid size {paths.grid.size}; "
            "interpolation error dominates",
            RuntimeWarning,
            stacklevel=2,
        )
    rng = make_rng(seed)
    n = paths.n_curves
    if design is Design.COMMON:
        sizes = np.full(n, lam, dtype=np.int64)
        base = np.arange(1, lam + 1, dtype=float) / lam
        times = np.tile(base, n)
        curve = np.repeat(np.arange(n), lam)
    else:
        lo, hi = max(2, math.ceil(0.8 * lam)), max(2, math.floor(1.2 * lam))
        sizes = rng.integers(lo, hi + 1, size=n).astype(np.int64)
        curve = np.repeat(np.arange(n), sizes)
        raw = 1.0 - rng.random(curve.size)
        order = np.lexsort((raw, curve))
        times = raw[order]
    x = _interpolate(paths, curve, times)
    if callable(sigma):
        sd = np.asarray(sigma(times), dtype=float) * np.ones_like(times)
    else:
        sd = float(sigma)
    eps = rng.standard_normal(times.size)
    y = x + sd * eps
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    return FunctionalSample.from_flat(times, y, offsets, design, DomainInterval())


def simulate_sample(cfg: SimConfig, seed: SeedLike = None) -> tuple[FunctionalSample, LatentPaths]:
    """Latent FAR(1) paths and their observation, from independent streams."""
    ss = np.random.SeedSequence(cfg.seed if seed is None else seed)
    latent_rng, obs_rng = (make_rng(s) for s in ss.spawn(2))
    paths = far1_generate(cfg, latent_rng)
    return observe(paths, cfg.design, cfg.lam, cfg.sigma, obs_rng), paths
