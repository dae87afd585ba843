import math

import numpy as np
import pytest

from kickedchain.analysis import (
    AlgebraicModel,
    CollapseError,
    GrowthFitError,
    LogPowerModel,
    ScalingDataset,
    TimeSeries,
    collapse_quality,
    compare_growth_models,
    compare_models,
    default_window,
    fit_collapse,
    fit_log_power,
)
from kickedchain.dynamics import log_time_grid
from synthetic import collapse_dataset

T = log_time_grid().astype(float)


def test_quality_near_one_at_planted_point():
    qs = [collapse_quality(collapse_dataset(seed=s), 0.25, 0.9) for s in range(10)]
    assert 0.6 < np.mean(qs) < 1.4


def test_quality_far_worse_at_wrong_tau():
    data = collapse_dataset(seed=1)
    assert collapse_quality(data, 0.75, 0.9) > 20 * collapse_quality(data, 0.25, 0.9)


def test_noiseless_master_curve_collapses_almost_perfectly():
    data = collapse_dataset(noiseless=True)
    assert collapse_quality(data, 0.25, 0.9) < 0.1


def test_quality_symmetric_under_size_relabelling():
    data = collapse_dataset(seed=2)
    shuffled = ScalingDataset({k: data.curves[k] for k in reversed(data.sizes)})
    assert collapse_quality(shuffled, 0.3, 1.1) == pytest.approx(collapse_quality(data, 0.3, 1.1), rel=1e-12)


def test_no_overlap_is_an_error():
    data = collapse_dataset()
    with pytest.raises(CollapseError, match="do not overlap"):
        # tau_c far outside the data: each size lands on a disjoint stretch of x
        collapse_quality(data, 5.0, 0.05)


def test_degenerate_inputs_rejected():
    tau = np.linspace(0.1, 0.5, 6)
    y = np.linspace(0.4, 0.5, 6)
    dy = np.full(6, 0.01)
    with pytest.raises(CollapseError):
        ScalingDataset({8: (tau, y, dy), 10: (tau, y, dy), 12: (tau, y, dy)}).validate()
    with pytest.raises(CollapseError):
        ScalingDataset.from_arrays([8] * 6 + [10] * 6, list(tau) * 2, list(y) * 2, list(dy) * 2)
    with pytest.raises(CollapseError):
        ScalingDataset.from_arrays([8, 10, 12] * 4, [0.1] * 12, [0.4] * 12, [0.01] * 12)
    with pytest.raises(CollapseError):
        collapse_quality(collapse_dataset(), 0.25, 0.0)


@pytest.mark.parametrize("seed", range(3))
def test_fit_recovers_planted_parameters(seed):
    res = fit_collapse(collapse_dataset(seed=seed), (0.05, 0.6), (0.3, 3.0))
    assert abs(res.tau_c - 0.25) <= 0.02
    assert abs(res.nu - 0.9) <= 0.1
    assert not res.on_boundary
    grid_min = min(q for kind, _, _, q in res.trace if kind == "grid")
    assert res.quality <= grid_min


def test_fit_flags_boundary_minimum():
    res = fit_collapse(collapse_dataset(tau_c=0.25), (0.3, 0.6), (0.3, 3.0))
    assert res.on_boundary
    assert not res.clean


def test_fit_needs_grid_and_box():
    data = collapse_dataset()
    with pytest.raises(CollapseError):
        fit_collapse(data, (0.3, 0.3), (0.5, 2.0))
    with pytest.raises(ValueError):
        fit_collapse(data, (0.1, 0.5), (0.5, 2.0), grid_size=11)


def test_log_cubed_series():
    fit = fit_log_power(TimeSeries(T, 0.7 * np.log(T) ** 3), (10, 1e6))
    assert fit.gamma == pytest.approx(3.0, abs=0.01)
    assert abs(fit.d) < 1e-6
    assert fit.c == pytest.approx(0.7, rel=1e-6)


def test_plain_log_growth_has_unit_exponent():
    for subleading in (True, False):
        fit = fit_log_power(TimeSeries(T, 0.5 * np.log(T)), (10, 1e6), subleading=subleading)
        assert fit.gamma == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize("gamma", [1, 2, 3, 4])
def test_exponent_recovered_to_three_figures(gamma):
    fit = fit_log_power(TimeSeries(T, 0.3 * np.log(T) ** gamma), (10, 1e6))
    assert fit.gamma == pytest.approx(gamma, rel=5e-4)


def test_with_subleading_term():
    x = np.log(T)
    fit = fit_log_power(TimeSeries(T, 0.2 * x**2.5 + 0.8 * x**1.5), (10, 1e6))
    assert fit.gamma == pytest.approx(2.5, abs=1e-4)
    assert fit.d == pytest.approx(0.8, abs=1e-3)


def test_constant_series_rejected():
    with pytest.raises(GrowthFitError):
        fit_log_power(TimeSeries(T, np.full_like(T, 0.4)), (10, 1e6))


def test_short_window_rejected():
    with pytest.raises(GrowthFitError, match="at least 10"):
        fit_log_power(TimeSeries(T, np.log(T) ** 2), (10, 15))
    with pytest.raises(GrowthFitError):
        fit_log_power(TimeSeries(T, np.log(T + 1) ** 2), (1, 1e6))


def test_failed_fit_carries_linearized_start():
    t = T[T >= 10]
    s = np.log(t) ** 2 * np.where(np.arange(len(t)) % 2, 1.0, 1e-3)
    try:
        fit_log_power(TimeSeries(t, s), (10, 1e6))
    except GrowthFitError as exc:
        assert exc.linearized is None or "gamma" in exc.linearized


def test_model_comparison_prefers_generating_form():
    log_data = TimeSeries(T, 0.7 * np.log(T) ** 3)
    res = compare_growth_models(log_data, (10, 1e6))
    assert res.preferred == LogPowerModel().name and res.ratio > 1.5

    alg = compare_growth_models(TimeSeries(T, T**0.3), (10, 1e6))
    assert alg.preferred == "algebraic" and alg.ratio < 1 / 1.5


def test_model_comparison_swap_symmetry():
    rng = np.random.default_rng(4)
    s = TimeSeries(T, 0.1 * np.log(T) ** 2.2 * (1 + 0.01 * rng.normal(size=len(T))))
    ab = compare_models(s, (10, 1e5), LogPowerModel(), AlgebraicModel())
    ba = compare_models(s, (10, 1e5), AlgebraicModel(), LogPowerModel())
    assert ab.first.residual == ba.second.residual
    assert ab.second.residual == ba.first.residual


def test_default_window_stops_at_saturation():
    s = np.minimum(0.2 * np.log(T) ** 2, 2.0)
    lo, hi = default_window(TimeSeries(T, s))
    assert lo == 10
    # 0.2 (ln t)^2 = 1.9 at t = exp(sqrt(9.5))
    assert hi == pytest.approx(math.exp(math.sqrt(9.5)), rel=0.15)
