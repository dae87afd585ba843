import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kickedchain.hamiltonian import ChainConfig
from kickedchain.spectral_stats import POISSON_MEAN_R, gap_ratios, mean_r_over_ensemble


def test_equal_spacing():
    res = gap_ratios([-math.pi / 2, 0.0, math.pi / 2, math.pi])
    np.testing.assert_allclose(res.r_values, 1.0)
    assert res.dim == 4 and len(res.r_values) == 4


def test_four_phase_hand_example():
    res = gap_ratios([0.0, 0.1, 0.3, 0.7])
    wrap = 2 * math.pi - 0.7
    np.testing.assert_allclose(res.r_values, [0.5, 0.5, 0.4 / wrap, 0.1 / wrap], rtol=1e-12)
    np.testing.assert_allclose(res.r_values[2:], [0.07164, 0.01791], atol=5e-6)


def test_too_few_phases():
    with pytest.raises(ValueError):
        gap_ratios([0.0, 1.0])


def test_degenerate_gaps_are_excluded():
    res = gap_ratios([0.0, 1e-14, 1.0, 2.0, 3.0])
    assert res.excluded == 2
    assert len(res.r_values) == 3
    assert np.all((res.r_values > 0) & (res.r_values <= 1))


def test_poisson_mean_from_iid_phases():
    rng = np.random.default_rng(20240601)
    means = [gap_ratios(np.sort(rng.uniform(-math.pi, math.pi, 2000))).mean_r for _ in range(200)]
    assert abs(np.mean(means) - POISSON_MEAN_R) <= 0.005


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-math.pi, math.pi, allow_nan=False), min_size=3, max_size=40, unique=True),
    st.floats(-10, 10, allow_nan=False),
)
def test_ratios_bounded_and_shift_invariant(phases, shift):
    phi = np.sort(np.array(phases))
    if np.any(np.diff(phi) < 1e-9) or 2 * math.pi - (phi[-1] - phi[0]) < 1e-9:
        return
    res = gap_ratios(phi)
    assert np.all((res.r_values >= 0) & (res.r_values <= 1))
    shifted = np.sort(np.mod(phi + shift + math.pi, 2 * math.pi) - math.pi)
    moved = gap_ratios(shifted)
    # same multiset of ratios up to rotation of the circle
    np.testing.assert_allclose(np.sort(moved.r_values), np.sort(res.r_values), atol=1e-7)


def test_ensemble_without_disorder_has_zero_spread():
    cfg = ChainConfig(8, 1.5, 1.5, theta=0.0, tau=0.4)
    mean, err = mean_r_over_ensemble([(cfg, k) for k in range(4)], master_seed=3)
    assert err == 0.0
    assert 0 < mean < 1


def test_ensemble_needs_two_samples():
    with pytest.raises(ValueError):
        mean_r_over_ensemble([(ChainConfig(8, 1.5, 1.5), 0)])
