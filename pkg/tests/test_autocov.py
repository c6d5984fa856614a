import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from ftsreg.autocov import (
    dbar_gamma,
    gamma_hat,
    gamma_hat_adaptive,
    nu2_hat,
    p_n_ell,
    risk_bound_gamma,
    select_h_gamma,
)
from ftsreg.core import BandwidthGrid, default_bandwidth_grid, window_weights
from ftsreg.errors import ConfigError, EmptyWindowError
from ftsreg.locreg import RegularityEstimate
from ftsreg.presmooth import presmooth

from helpers import random_sample, sample_from


def reg(t=0.5, H=0.5, L2=1.0):
    return RegularityEstimate(t, 0.2, H, L2, presmoothing_bandwidth=0.05)


def risk(sample, s, t, lag, h, H=0.5, L2=1.0, s2=1.0, nu2=1.0, dbar=0.0, verbatim=False):
    return risk_bound_gamma(sample, s, t, lag, h, reg(s, H, L2), reg(t, H, L2), s2, s2, nu2, nu2, dbar, verbatim)


# --- pair counts ----------------------------------------------------------------------


def test_p_n_ell_all_populated(rng):
    s = random_sample(rng, n_curves=7, lam=20, design="common")
    for lag in (0, 1, 3, 6):
        assert p_n_ell(s, 0.3, 0.6, 1.0, lag) == 7 - lag


def test_p_n_ell_none():
    s = sample_from([[0.1, 0.2]] * 4, [[0, 0]] * 4, "common")
    assert p_n_ell(s, 0.7, 0.8, 0.05, 1) == 0


def test_p_n_ell_hand_case():
    # near s: curves 0, 2; near t: curves 1, 2 -> lag-1 pairs (0,1) only
    s = sample_from(
        [[0.2, 0.9], [0.8, 0.95], [0.2, 0.8]],
        [[0, 0], [0, 0], [0, 0]],
    )
    assert p_n_ell(s, 0.2, 0.8, 0.05, 1) == 1


# --- cross-product estimator --------------------------------------------------------------


def test_gamma_constant_curves(rng):
    s = random_sample(rng, n_curves=6, lam=15, design="common")
    s = s.with_values(np.full(s.flat_values.size, 1.5))
    value, p = gamma_hat(s, 0.3, 0.7, 1, 0.2)
    assert value == pytest.approx(2.25, abs=1e-13) and p == 5


def test_gamma_hand_case():
    s = sample_from([[0.25, 0.75]] * 3, [[1, 2], [3, 4], [5, 6]], "common")
    # lag 1 pairs: 1*4 + 3*6 = 22 over 2 pairs; lag 0 at (0.25, 0.75): (2 + 12 + 30) / 3
    assert gamma_hat(s, 0.25, 0.75, 1, 0.125) == (11.0, 2)
    assert gamma_hat(s, 0.25, 0.75, 0, 0.125)[0] == pytest.approx(44 / 3)


def test_gamma_empty_window():
    s = sample_from([[0.1, 0.2]] * 4, [[0, 0]] * 4, "common")
    with pytest.raises(EmptyWindowError):
        gamma_hat(s, 0.7, 0.8, 1, 0.05)


@given(st.integers(0, 2**32 - 1), st.integers(0, 3), st.floats(0.1, 0.9), st.floats(0.1, 0.9))
def test_gamma_sign_flip_exact(seed, lag, s_, t_):
    s = random_sample(np.random.default_rng(seed), n_curves=8, lam=12)
    assume(p_n_ell(s, s_, t_, 0.2, lag) > 0)
    a, _ = gamma_hat(s, s_, t_, lag, 0.2)
    b, _ = gamma_hat(s.with_values(-s.flat_values), s_, t_, lag, 0.2)
    assert a == b


@given(st.integers(0, 2**32 - 1), st.integers(-10, 10))
def test_gamma_binary_scaling_exact(seed, k):
    s = random_sample(np.random.default_rng(seed), n_curves=8, lam=12)
    assume(p_n_ell(s, 0.4, 0.6, 0.2, 1) > 0)
    c = 2.0**k
    a, _ = gamma_hat(s, 0.4, 0.6, 1, 0.2)
    b, _ = gamma_hat(s.with_values(s.flat_values * c), 0.4, 0.6, 1, 0.2)
    assert b == a * c * c


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_gamma_scaling(seed, c):
    s = random_sample(np.random.default_rng(seed), n_curves=8, lam=12)
    assume(p_n_ell(s, 0.4, 0.6, 0.2, 1) > 0)
    a, _ = gamma_hat(s, 0.4, 0.6, 1, 0.2)
    b, _ = gamma_hat(s.with_values(s.flat_values * c), 0.4, 0.6, 1, 0.2)
    assert b == pytest.approx(a * c * c, rel=1e-12, abs=1e-300)


def test_lag_validation(rng):
    s = random_sample(rng, n_curves=4, lam=10)
    for bad in (-1, 4, 10):
        with pytest.raises(ConfigError):
            gamma_hat(s, 0.5, 0.5, bad, 0.2)
        with pytest.raises(ConfigError):
            p_n_ell(s, 0.5, 0.5, 0.2, bad)


def test_largest_admissible_lag(rng):
    s = random_sample(rng, n_curves=5, lam=30, design="common")
    value, p = gamma_hat(s, 0.5, 0.5, 3, 0.3)
    assert p == 2 and math.isfinite(value)
    ps = presmooth(s, 0.1)
    assert math.isfinite(dbar_gamma(ps, 0.5, 0.5, 3))
    with pytest.raises(ConfigError):
        dbar_gamma(ps, 0.5, 0.5, 4)


# --- moments and dependence -------------------------------------------------------------------


def test_nu2_and_dbar_constant_curves():
    s = sample_from([[0.25, 0.75]] * 5, [[2, 2]] * 5, "common")
    ps = presmooth(s, 0.1)
    assert nu2_hat(ps, 0.5) == 4.0 and nu2_hat(ps, 0.5, centered=True) == 0.0
    assert dbar_gamma(ps, 0.3, 0.6, 1) == 0.0


# --- risk bound -------------------------------------------------------------------------------


def test_risk_single_pair_window():
    # only pair (0, 1) is observed, each with one point at the centre
    s = sample_from([[0.5, 0.9], [0.1, 0.5], [0.1, 0.2]], [[0, 0]] * 3)
    r = risk(s, 0.5, 0.5, 1, 0.05, s2=1.0, nu2=1.0)
    assert r.p_n == 1
    assert (r.noise_s, r.noise_t, r.noise_cross) == (3.0, 3.0, 3.0)
    assert r.bias_s == r.bias_t == 0.0


@pytest.mark.parametrize("H", [0.25, 0.5, 0.9])
def test_risk_bias_hand_instance(H):
    h = 0.125
    s = sample_from([[0.4375, 0.9], [0.1, 0.5625]], [[0, 0], [0, 0]])
    r = risk(s, 0.5, 0.5, 1, h, H=H, L2=2.0, nu2=0.5)
    expected = 3.0 * 0.5 * 2.0 * h ** (2 * H) * 0.5 ** (2 * H)
    assert r.bias_s == pytest.approx(expected, rel=1e-15)
    assert r.bias_t == pytest.approx(expected, rel=1e-15)


def test_risk_bias_bounded_by_full_window(rng):
    s = random_sample(rng, n_curves=6, lam=12)
    for h in (0.05, 0.2, 0.5):
        r = risk(s, 0.4, 0.6, 1, h, H=0.4, L2=1.5, nu2=2.0)
        if r.p_n:
            bound = 3.0 * 2.0 * 1.5 * h ** 0.8
            assert r.bias_s <= bound * (1 + 1e-12) and r.bias_t <= bound * (1 + 1e-12)


def test_risk_infeasible():
    s = sample_from([[0.1, 0.2]] * 4, [[0, 0]] * 4, "common")
    r = risk(s, 0.7, 0.8, 1, 0.05)
    assert r.total == math.inf and r.p_n == 0


@given(st.integers(0, 2**32 - 1), st.integers(0, 3), st.floats(0.05, 0.95), st.floats(0.05, 0.95),
       st.floats(0.005, 0.5), st.floats(0.01, 1.0), st.floats(0, 5), st.floats(0, 3), st.floats(0, 3),
       st.booleans())
def test_risk_nonnegative_and_row_sum(seed, lag, s_, t_, h, H, L2, s2, dbar, verbatim):
    s = random_sample(np.random.default_rng(seed), n_curves=6, lam=10)
    r = risk(s, s_, t_, lag, h, H, L2, s2, 1.3, dbar, verbatim)
    if r.p_n:
        parts = (r.bias_s, r.bias_t, r.noise_s, r.noise_t, r.noise_cross, r.penalty)
        assert min(parts) >= 0
        assert r.total == r.bias_s + r.bias_t + r.noise_s + r.noise_t + r.noise_cross + r.penalty


def test_verbatim_only_changes_first_noise_term(rng):
    s = random_sample(rng, n_curves=8, lam=15)
    a = risk(s, 0.3, 0.7, 1, 0.2)
    b = risk(s, 0.3, 0.7, 1, 0.2, verbatim=True)
    assert (a.bias_s, a.bias_t, a.noise_t, a.noise_cross, a.penalty) == (
        b.bias_s, b.bias_t, b.noise_t, b.noise_cross, b.penalty)


# --- selection and adaptive estimate -------------------------------------------------------------


def test_select_single_point_grid(rng):
    s = random_sample(rng, n_curves=10, lam=20)
    prof = select_h_gamma(s, 0.4, 0.6, 1, BandwidthGrid([0.2]), reg(0.4), reg(0.6), 0.1, 0.1, 1, 1, 0.3)
    assert prof.argmin_h == 0.2 and len(prof.rows()) == 1 and len(prof.rows()[0]) == 9


def test_select_common_mode_admissibility(rng):
    s = random_sample(rng, n_curves=10, lam=20, design="common")
    grid = default_bandwidth_grid(10, 20, count=9)
    prof = select_h_gamma(s, 0.4, 0.6, 2, grid, reg(0.4), reg(0.6), 0.1, 0.1, 1, 1, 0.3, common_design=True)
    assert not prof.penalty.any()
    assert (prof.admissible == (prof.p_n == 8)).all()
    assert prof.p_n[prof.h == prof.argmin_h][0] == 8


def test_adaptive_autocov_fields(rng):
    s = random_sample(rng, n_curves=60, lam=30, noise=0.2)
    e = gamma_hat_adaptive(s, 0.4, 0.6, 1)
    assert e.profile.argmin_h == e.h_star and e.P_N_ell >= 1
    assert e.Gamma_value == pytest.approx(e.gamma_value - e.mu_s * e.mu_t)
    skip = gamma_hat_adaptive(s, 0.4, 0.6, 1, with_mean=False)
    assert math.isnan(skip.Gamma_value) and skip.gamma_value == e.gamma_value
