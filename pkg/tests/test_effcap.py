import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crharq.effcap import (
    Variant,
    char_poly,
    effcap_vs_theta_curve,
    effective_capacity,
    spectral_oracle,
    weighted_transition_matrix,
)
from crharq.harq import steady_state
from crharq.numerics import BracketError

P4 = [0.45864232, 0.33982596, 0.27601688, 0.23459621]
N_BITS, T = 200, 1e-4


@pytest.mark.parametrize("variant", list(Variant))
def test_single_attempt_is_deterministic_service(variant):
    for theta in (1e-8, 1e-3, 1.0, 50.0):
        res = effective_capacity([0.9], N_BITS, T, theta, variant)
        assert res.eff_cap_bps == pytest.approx(N_BITS / T, rel=1e-12)
        assert res.log_chi_star == pytest.approx(-theta * N_BITS, rel=1e-12)


def test_root_is_a_zero_of_the_polynomial():
    for variant in Variant:
        for theta in (1e-5, 1e-3, 1e-2):
            res = effective_capacity(P4, N_BITS, T, theta, variant)
            scale = max(res.chi_star ** 4, 1e-300)
            assert abs(char_poly(res.chi_star, P4, N_BITS, theta, variant)) <= 1e-11 * scale


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(0.0, 0.999), min_size=1, max_size=8),
    st.sampled_from([1e-5, 1e-4, 1e-3, 1e-2]),
)
def test_root_matches_spectral_radius(p, theta):
    chi = effective_capacity(p, N_BITS, T, theta).chi_star
    assert chi == pytest.approx(spectral_oracle(p, N_BITS, theta), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8), st.floats(1e-6, 1.0))
def test_renewal_rate_between_floor_and_mean(p, theta):
    M = len(p)
    rate = effective_capacity(p, N_BITS, T, theta).eff_cap_bps
    mean = steady_state(p)[0] * N_BITS / T
    assert N_BITS / (T * M) * (1 - 1e-9) <= rate <= mean * (1 + 1e-9)


def test_limits_renewal():
    mean = steady_state(P4)[0] * N_BITS / T
    small = effective_capacity(P4, N_BITS, T, 1e-6).eff_cap_bps
    assert abs(small - mean) / mean <= 5e-3
    big = effective_capacity(P4, N_BITS, T, 5.0).eff_cap_bps
    assert abs(big - N_BITS / (4 * T)) / (N_BITS / (4 * T)) <= 1e-2


def test_verbatim_exceeds_mean_rate_at_small_theta():
    # the verbatim constant term leaves branch mass below one, so theta -> 0 diverges
    mean = steady_state(P4)[0] * N_BITS / T
    assert effective_capacity(P4, N_BITS, T, 1e-6, Variant.PAPER_VERBATIM).eff_cap_bps > 10 * mean


def test_underflow_does_not_break_the_root():
    res = effective_capacity(P4, N_BITS, T, 100.0)  # e^{-theta n} = e^{-20000}
    assert res.chi_star == 0.0
    assert math.isfinite(res.log_chi_star)
    assert res.eff_cap_bps == pytest.approx(N_BITS / (4 * T), rel=1e-3)


def test_curve_is_nonincreasing_and_validated():
    grid = np.logspace(-6, 0, 25)
    curve = effcap_vs_theta_curve(P4, N_BITS, T, grid)
    rates = [c.eff_cap_bps for c in curve]
    assert all(b <= a for a, b in zip(rates, rates[1:]))
    with pytest.raises(ValueError):
        effcap_vs_theta_curve(P4, N_BITS, T, [1e-3, 1e-4])
    with pytest.raises(ValueError):
        effcap_vs_theta_curve(P4, N_BITS, T, [])


def test_bcu_and_bps_units():
    res = effective_capacity(P4, N_BITS, T, 1e-4, B=1e6)
    assert res.eff_cap_bcu == pytest.approx(res.eff_cap_bps / 1e6)


def test_bad_inputs():
    with pytest.raises(ValueError):
        effective_capacity(P4, N_BITS, T, 0.0)
    with pytest.raises(ValueError):
        effective_capacity([1.2], N_BITS, T, 1e-3)
    with pytest.raises(BracketError):
        effective_capacity([1.0, 0.0], N_BITS, T, 1e-3, Variant.PAPER_VERBATIM)


def test_weighted_matrix_scales_returns_only():
    phi = weighted_transition_matrix([0.5, 0.25], 10, 0.1)
    assert phi[0].tolist() == pytest.approx([0.5 * math.exp(-1.0), math.exp(-1.0)])
    assert phi[1, 0] == 0.5
