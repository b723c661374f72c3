import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from whrtcert.emulation import (
    EmulationParams,
    growth_rate,
    lambda_for_horizon,
    solve_phi,
    t_max,
    t_max_branch,
    t_tilde_max,
    u_value,
)


def travel_time(gamma, Lam, lo, hi):
    """Time the phi-ODE needs from hi down to lo, by quadrature of 1/|phi'|."""
    val, _ = quad(lambda p: 1.0 / (2 * Lam * p + gamma * (p * p + 1)), lo, hi, limit=200)
    return val


def tmax_oracle(gamma, Lam):
    return travel_time(gamma, Lam, 0.0, np.inf)


@pytest.mark.parametrize("gamma,Lam", [(5.77, 2.75), (2.38, 2.25), (2.0, 1.0), (2.0, 0.001),
                                       (2.0, 2.0), (1.0, 3.0), (0.5, 7.0), (10.0, 0.1)])
def test_t_max_matches_quadrature(gamma, Lam):
    assert t_max(gamma, Lam) == pytest.approx(tmax_oracle(gamma, Lam), rel=1e-8)


@pytest.mark.parametrize("gamma,Lam,branch", [(5.77, 2.75, "arctan"), (2.0, 0.001, "arctan"),
                                              (2.0, 2.0, "equal"), (1.0, 3.0, "arctanh")])
def test_branch(gamma, Lam, branch):
    assert t_max_branch(gamma, Lam) == branch


def test_equal_case_value():
    assert t_max(2.0, 2.0) == 0.5


def test_continuous_across_equal_case():
    for Lam in (0.3, 1.0, 2.0):
        lo, hi = t_max(Lam * (1 - 1e-7), Lam), t_max(Lam * (1 + 1e-7), Lam)
        assert lo == pytest.approx(1 / Lam, rel=1e-6)
        assert hi == pytest.approx(1 / Lam, rel=1e-6)


def test_small_lambda_limit():
    # Lambda -> 0 gives pi / (2 gamma)
    assert t_max(2.0, 1e-9) == pytest.approx(math.pi / 4, rel=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 20), st.floats(0.05, 20))
def test_t_max_decreasing_in_gamma(gamma, Lam):
    assert t_max(gamma * 1.01, Lam) < t_max(gamma, Lam)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_t_max_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        t_max(bad, 1.0)
    with pytest.raises(ValueError):
        t_max(1.0, bad)


@pytest.mark.parametrize("gamma,Lam", [(5.77, 2.75), (2.0, 2.0), (1.0, 3.0), (2.0, 0.001)])
@pytest.mark.parametrize("lam", [0.01, 0.2, 0.5, 0.9])
def test_t_tilde_matches_quadrature(gamma, Lam, lam):
    got = t_tilde_max(lam, gamma, Lam)
    assert got == pytest.approx(travel_time(gamma, Lam, lam, 1 / lam), rel=1e-8)
    assert got < t_max(gamma, Lam)


def test_t_tilde_limits():
    assert t_tilde_max(1 - 1e-12, 2.0, 1.0) == pytest.approx(0.0, abs=1e-10)
    assert t_tilde_max(1e-12, 2.0, 1.0) == pytest.approx(t_max(2.0, 1.0), rel=1e-9)


@pytest.mark.parametrize("lam", [0.0, 1.0, -0.1, 1.5])
def test_t_tilde_rejects_lambda(lam):
    with pytest.raises(ValueError):
        t_tilde_max(lam, 2.0, 1.0)


@pytest.mark.parametrize("gamma,Lam", [(5.77, 2.75), (2.0, 1.0), (1.0, 3.0)])
def test_phi_reaches_lambda_at_t_tilde(gamma, Lam):
    lam = 0.3
    T = t_tilde_max(lam, gamma, Lam)
    taus, phis = solve_phi(lam, gamma, Lam, T, T / 4000)
    assert taus[-1] == pytest.approx(T)
    assert phis[-1] == pytest.approx(lam, rel=1e-8)
    assert np.all(np.diff(phis) < 0)


def test_lambda_for_horizon_inverts():
    for d in (0.05, 0.2, 0.6):
        lam = lambda_for_horizon(d, 2.0, 1.0)
        assert t_tilde_max(lam, 2.0, 1.0) == pytest.approx(d, rel=1e-10)
    with pytest.raises(ValueError):
        lambda_for_horizon(t_max(2.0, 1.0), 2.0, 1.0)


def test_growth_rate_and_params():
    p = EmulationParams(gamma=2.0, L=2.0, Lambda=1.0, epsilon=-2.0)
    assert p.rate == growth_rate(-2.0, 2.0, 1.0) == 2.0
    assert EmulationParams(5.77, 2.0, 2.75, 1.5).rate == -1.5
    with pytest.raises(ValueError):
        EmulationParams(gamma=-1.0, L=2.0, Lambda=1.0, epsilon=0.0)


def test_u_value():
    assert u_value(1.0, 2.0, 3.0, 0.5) == 1.0 + 3.0 * 0.5 * 4.0
