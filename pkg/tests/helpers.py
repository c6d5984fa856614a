"""Sample builders shared by the test modules."""

import numpy as np

from ftsreg.core import Design, FunctionalSample


def sample_from(times, values, design="independent"):
    return FunctionalSample.from_arrays(times, values, design)


def random_sample(rng, n_curves=20, lam=30, design="independent", noise=0.1, fn=None):
    """Small sample with sine-shaped curves; independent or common design."""
    fn = fn or (lambda t: np.sin(2 * np.pi * t))
    times, values = [], []
    common = np.arange(1, lam + 1) / lam
    for _ in range(n_curves):
        if design == "common":
            t = common
        else:
            m = int(rng.integers(max(2, lam // 2), lam + lam // 2 + 1))
            t = np.sort(rng.uniform(0, 1, m))
            t = np.unique(np.clip(t, 1e-9, 1.0))
        amp = rng.normal(1.0, 0.3)
        values.append(amp * fn(t) + noise * rng.standard_normal(t.size))
        times.append(t)
    return FunctionalSample.from_arrays(times, values, Design(design))


def brownian_sample(rng, n_curves=200, lam=200, hurst=0.5, noise=0.0, common=True, scale=1.0):
    """fBm-like curves from exact Cholesky sampling on the design grid."""
    t = np.arange(1, lam + 1) / lam
    u, v = np.meshgrid(t, t, indexing="ij")
    cov = 0.5 * (u ** (2 * hurst) + v ** (2 * hurst) - np.abs(u - v) ** (2 * hurst))
    chol = np.linalg.cholesky(cov + 1e-12 * np.eye(lam))
    paths = scale * rng.standard_normal((n_curves, lam)) @ chol.T
    paths = paths + noise * rng.standard_normal(paths.shape)
    return FunctionalSample.from_arrays([t] * n_curves, list(paths), "common" if common else "independent")
