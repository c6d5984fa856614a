"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line (repeated in the terminal
summary) and then asserts, so a failing criterion stays visible.
"""

import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ftsreg.harness import ExperimentSpec, gamma_truth_oracle, run_experiment
from ftsreg.locreg import RegularityEstimate, estimate_alpha
from ftsreg.mean import mu_hat_adaptive
from ftsreg.simulate import (
    HurstFunction,
    LatentPaths,
    MeanFunction,
    SimConfig,
    integrate_paths,
    latent_grid,
    observe,
    replication_rngs,
    sample_mfbm,
)

import conftest

pytestmark = pytest.mark.slow

TESTS = Path(__file__).parent


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        line = f"[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}"
        conftest.ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def in_band(x, centre, lo=0.75, hi=1.30):
    return centre * lo <= x <= centre * hi


# --- 1. mean estimator, two sample sizes ------------------------------------------------------


def test_criterion_1_mean_bias_sd(report):
    checks = []
    for N, ref_bias, bias_tol, ref_sd in ((150, 0.0056, 3 * 0.2079 / 10, 0.2079), (1000, 0.0, 0.03, 0.0883)):
        spec = ExperimentSpec(SimConfig(N=N, lam=40), replications=100, points=(0.2,),
                              tasks=("mean",), full_lags=True)
        row = run_experiment(spec).table.find("mean", 0.2)
        ok = abs(row.bias - ref_bias) <= bias_tol and in_band(row.sd, ref_sd) and row.n_failed == 0
        checks.append(ok)
        report(1, ok, f"(N,lam)=({N},40) t=0.2 bias={row.bias:.4f} (ref {ref_bias}, tol {bias_tol:.4f}) "
                      f"sd={row.sd:.4f} (band {0.75 * ref_sd:.4f}..{1.3 * ref_sd:.4f}) "
                      f"coverage={row.coverage:.2f} failed={row.n_failed}")
    assert all(checks)


# --- 2. lag-1 cross-product ---------------------------------------------------------------------


def test_criterion_2_autocov_bias_sd(report):
    cfg = SimConfig(N=150, lam=40, mu=MeanFunction("zero"))
    spec = ExperimentSpec(cfg, replications=100, pairs=((0.2, 0.4),), lag=1, tasks=("autocov",))
    truths = gamma_truth_oracle(cfg, spec.pairs, 1, spec.gamma_truth_n)
    row = run_experiment(spec, truths=truths).table.find("autocov", (0.2, 0.4))
    tol = 3 * 0.3359 / 10
    ok = abs(row.bias - 0.0019) <= tol and in_band(row.sd, 0.3359) and row.n_failed == 0
    report(2, ok, f"(s,t)=(0.2,0.4) truth={row.truth:.4f} bias={row.bias:.4f} (ref 0.0019, tol {tol:.4f}) "
                  f"sd={row.sd:.4f} (band {0.75 * 0.3359:.4f}..{1.3 * 0.3359:.4f}) failed={row.n_failed}")
    assert ok


# --- 3. regularity consistency --------------------------------------------------------------------


def test_criterion_3_regularity(report):
    points = (0.2, 0.4, 0.7, 0.8)
    runs = {}
    for N, lam in ((1000, 1000), (150, 40)):
        spec = ExperimentSpec(SimConfig(N=N, lam=lam), replications=100, points=points, tasks=("locreg",))
        runs[N] = run_experiment(spec)
    hurst = runs[1000].spec.sim.hurst
    oks = []
    for t in points:
        big = runs[1000].values("locreg", t)
        small = runs[150].values("locreg", t)
        iqr_big = float(np.subtract(*np.percentile(big, [75, 25])))
        iqr_small = float(np.subtract(*np.percentile(small, [75, 25])))
        med = float(np.median(big))
        ok = abs(med - hurst(t)) <= 0.10 and iqr_big < iqr_small and big.size == 100
        oks.append(ok)
        report(3, ok, f"t={t} H={hurst(t):.3f} median={med:.3f} IQR(1000,1000)={iqr_big:.3f} "
                      f"IQR(150,40)={iqr_small:.3f} n={big.size}")
    assert all(oks)


# --- 4. order detection ------------------------------------------------------------------------------


def test_criterion_4_order_detection(report):
    hurst = HurstFunction.constant(0.4)
    orders0, orders1 = [], []
    for r in range(100):
        rng_latent, rng_obs = replication_rngs(7, r)
        paths = LatentPaths(latent_grid(1024), sample_mfbm(hurst, 1024, 400, rng_latent))
        orders0.append(estimate_alpha(observe(paths, "independent", 1000, 0.0, rng_obs), 0.5, seed=r).delta_order)
        smooth = integrate_paths(paths)
        orders1.append(estimate_alpha(observe(smooth, "independent", 1000, 0.0, rng_obs), 0.5, seed=r).delta_order)
    f0 = float(np.mean(np.array(orders0) == 0))
    f1 = float(np.mean(np.array(orders1) == 1))
    ok0 = report(4, f0 >= 0.95, f"fBm H=0.4: order 0 in {f0:.0%} of 100 (need >= 95%)")
    ok1 = report(4, f1 >= 0.90, f"integrated fBm: order 1 in {f1:.0%} of 100 (need >= 90%)")
    assert ok0 and ok1


# --- 5. asymptotic normality ----------------------------------------------------------------------------


def test_criterion_5_clt(report):
    spec = ExperimentSpec(SimConfig(N=1000, lam=40), replications=200, points=(0.2,), tasks=("clt",),
                          full_lags=True)
    row = run_experiment(spec).table.find("clt", 0.2)
    ok = row.ks <= 0.12 and row.n_failed == 0
    report(5, ok, f"KS={row.ks:.4f} (need <= 0.12) mean z={row.bias:.3f} sd z={row.sd:.3f} "
                  f"n={row.n_ok} failed={row.n_failed}")
    assert ok


# --- 6 and 7. exact property suites and brute-force oracles -------------------------------------------------

PROPERTY_TESTS = [
    "test_core.py::test_nw_weights_normalised",
    "test_locreg.py::test_theta_symmetric_and_nonnegative",
    "test_locreg.py::test_h_scale_invariant_exactly_for_binary_scalings",
    "test_locreg.py::test_h_scale_invariant",
    "test_locreg.py::test_h_shift_invariant",
    "test_mean.py::test_mu_hat_shift_equivariant",
    "test_mean.py::test_mu_hat_shift_equivariant_exact_single_points",
    "test_autocov.py::test_gamma_sign_flip_exact",
    "test_autocov.py::test_gamma_binary_scaling_exact",
    "test_autocov.py::test_gamma_scaling",
    "test_mean.py::test_risk_row_sum_identity",
    "test_autocov.py::test_risk_nonnegative_and_row_sum",
    "test_mean.py::test_argmin_invariant_under_binary_scaling",
    "test_mean.py::test_argmin_invariant_under_scaling",
    "test_simulate.py::test_mfbm_cov_matrix_psd",
    "test_simulate.py::test_mfbm_cov_matches_fbm_closed_form",
    "test_simulate.py::test_far1_seed_determinism",
    "test_harness.py::test_deterministic_across_workers",
]


def run_pytest(node_ids):
    args = [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *[str(TESTS / n) for n in node_ids]]
    proc = subprocess.run(args, cwd=TESTS.parent, capture_output=True, text=True)
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()
    return proc.returncode == 0, tail


def test_criterion_6_property_suites(report):
    ok, tail = run_pytest(PROPERTY_TESTS)
    report(6, ok, f"{len(PROPERTY_TESTS)} property tests: {tail}")
    assert ok


def test_criterion_7_brute_force_oracles(report):
    ok, tail = run_pytest(["test_oracles.py"])
    report(7, ok, f"bit-exact risk bounds and argmins on N <= 3, M <= 3: {tail}")
    assert ok


# --- 8. interpolation versus smoothing under a common design ----------------------------------------------------


def test_criterion_8_regime_switch(report):
    hurst, L, sigma, lam = HurstFunction.constant(0.3), 1.0, 2.24, 288
    points = np.arange(58, 231, 8) / lam
    shares = {}
    for N in (300, 50):
        rng_latent, rng_obs = replication_rngs(21, N)
        paths = LatentPaths(latent_grid(1024), L * sample_mfbm(hurst, 1024, N, rng_latent))
        sample = observe(paths, "common", lam, sigma, rng_obs)
        regimes = [
            mu_hat_adaptive(sample, t, RegularityEstimate(t, 0.2, 0.3, L * L)).regime for t in points
        ]
        shares[N] = float(np.mean(np.array(regimes) == "interpolation"))
    ok_sparse = report(8, shares[300] >= 0.8,
                       f"N=300 lam=288: one-point windows at {shares[300]:.0%} of {points.size} points (need >= 80%)")
    ok_dense = report(8, 1 - shares[50] >= 0.8,
                      f"N=50 lam=288: multi-point windows at {1 - shares[50]:.0%} of {points.size} points (need >= 80%)")
    assert ok_sparse and ok_dense
