import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hawkesnp import (
    ConfigError,
    EventSeries,
    estimate_G_marked,
    estimate_g,
    mark_bin_probabilities,
    negative_time_g,
    smoothing_kernel,
)
from hawkesnp.condlaw import (
    CondLawEstimate,
    _trapz_cumulative,
    event_count_primitive,
    primitive,
)
from hawkesnp.oracle import marked_oracle_condlaw_table
from hawkesnp import ExponentialKernel, ExponentialMarks, HawkesModel, MarkSpec
from hawkesnp import ConstantMark, PiecewiseConstantMark, SimConfig, simulate


def unmarked(times, horizon):
    return EventSeries(
        times=tuple(np.asarray(t, dtype=float) for t in times),
        marks=(None,) * len(times),
        horizon=horizon,
    )


# ---------------------------------------------------------------------------
# Smoothing kernels


@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_smoothing_kernel_moments(order):
    k = smoothing_kernel(order)
    assert k.moment(0) == pytest.approx(1.0, abs=1e-9)
    for n in range(1, order + 1):
        assert k.moment(n) == pytest.approx(0.0, abs=1e-9)


def test_rectangle_kernel_values():
    k = smoothing_kernel(0)
    assert k(0.0) == 1.0
    assert k(0.999) == 1.0
    assert k(1.0) == 0.0
    assert k(-0.01) == 0.0


# ---------------------------------------------------------------------------
# The estimator


def test_single_event_self_pair_excluded():
    s = unmarked([[50.0]], horizon=200.0)
    est = estimate_g(s, 0, 0, h=1.0, t_max=10.0)
    lam = 1.0 / 200.0
    assert np.allclose(est.values, -lam)
    assert est.count == 1


def test_poisson_cross_density_within_band():
    rng = np.random.default_rng(42)
    t_hor = 2e5
    a = np.sort(rng.uniform(0, t_hor, 20000))
    b = np.sort(rng.uniform(0, t_hor, 20000))
    s = unmarked([a, b], horizon=t_hor)
    est = estimate_g(s, 0, 1, h=1.0, t_max=20.0)
    lam_a = 20000 / t_hor
    band = 4.0 * math.sqrt(lam_a / (est.count * est.h))
    assert np.max(np.abs(est.values)) < band


def test_outer_partition_linearity_exact():
    rng = np.random.default_rng(5)
    ti = np.sort(rng.uniform(0, 1000, 500))
    tj = np.sort(rng.uniform(0, 1000, 300))
    s_full = unmarked([ti, tj], horizon=1000.0)
    s_a = unmarked([ti, tj[::2]], horizon=1000.0)
    s_b = unmarked([ti, tj[1::2]], horizon=1000.0)
    full = estimate_g(s_full, 0, 1, 2.0, 50.0)
    ea = estimate_g(s_a, 0, 1, 2.0, 50.0)
    eb = estimate_g(s_b, 0, 1, 2.0, 50.0)
    lam = 500 / 1000.0
    merged = (ea.count * (ea.values + lam) + eb.count * (eb.values + lam)) / (
        ea.count + eb.count
    ) - lam
    assert np.array_equal(merged, full.values)


def test_estimator_window_errors(exp1d_series_1e5):
    with pytest.raises(ConfigError):
        estimate_g(exp1d_series_1e5, 0, 0, h=-1.0, t_max=10.0)
    with pytest.raises(ConfigError):
        estimate_g(exp1d_series_1e5, 0, 0, h=1.0, t_max=exp1d_series_1e5.horizon)


def test_estimate_vs_oracle_smoothed(exp1d_series_1e5):
    # The window average of the analytic g, compared pointwise.  The band is
    # the Poisson-local sigma, which ignores Hawkes overdispersion, so it is
    # taken at 5 sigma across the ~60 grid points.
    est = estimate_g(exp1d_series_1e5, 0, 0, h=0.5, t_max=30.0)
    t = est.t
    smoothed = 0.15 * (np.exp(-0.1 * t) - np.exp(-0.1 * (t + est.h))) / (0.1 * est.h)
    band = 5.0 * math.sqrt(0.15 / (est.count * est.h))
    assert np.max(np.abs(est.values - smoothed)) < band


def test_positivity_band(exp1d_series_1e5):
    est = estimate_g(exp1d_series_1e5, 0, 0, h=0.5, t_max=30.0)
    band = 4.0 * math.sqrt(0.15 / (est.count * est.h))
    assert np.min(est.values) > -band


def test_primitive_matches_oracle_mass(exp1d_series_1e5):
    est = estimate_g(exp1d_series_1e5, 0, 0, h=0.5, t_max=30.0)
    oracle_mass = 1.5 * (1 - math.exp(-0.1 * 30.0))
    assert est.primitive[-1] == pytest.approx(oracle_mass, rel=0.01)
    grid, prim = event_count_primitive(exp1d_series_1e5, 0, 0, 30.0)
    assert prim[-1] == pytest.approx(oracle_mass, rel=0.05)


def test_primitive_trivial_cases():
    t = np.linspace(0, 10, 21)
    zeros = np.zeros_like(t)
    e0 = CondLawEstimate(0, 0, None, t, zeros, _trapz_cumulative(zeros, 0.5), 0.1, 1.0, 5)
    assert np.all(primitive(e0) == 0.0)
    const = np.full_like(t, 0.7)
    e1 = CondLawEstimate(0, 0, None, t, const, _trapz_cumulative(const, 0.5), 0.1, 1.0, 5)
    assert np.max(np.abs(primitive(e1) - 0.7 * t)) < 1e-10


@given(st.lists(st.floats(min_value=-5, max_value=5), min_size=2, max_size=40))
@settings(max_examples=40)
def test_primitive_trapezoid_identity(values):
    values = np.asarray(values)
    delta = 0.25
    prim = _trapz_cumulative(values, delta)
    diffs = np.diff(prim)
    expect = 0.5 * (values[1:] + values[:-1]) * delta
    assert np.max(np.abs(diffs - expect)) < 1e-10


# ---------------------------------------------------------------------------
# Marked estimation


def marked_series(seed=101, horizon=2e5):
    spec = MarkSpec(
        distribution=ExponentialMarks(1.0),
        influences=(ConstantMark(1.0),),
    )
    m = HawkesModel(
        baselines=(0.05,),
        kernels=((ExponentialKernel(0.1, 0.2),),),
        marks=(spec,),
    )
    return simulate(m, SimConfig(horizon=horizon, seed=seed))


def test_single_bin_reduces_to_unmarked():
    s = marked_series()
    bins = mark_bin_probabilities(s, [np.array([-np.inf, np.inf])])
    marked = estimate_G_marked(s, 0, 0, bins, h=0.5, t_max=20.0)
    plain = estimate_g(s, 0, 0, h=0.5, t_max=20.0)
    assert len(marked) == 1
    assert np.array_equal(marked[0].values, plain.values)
    assert np.array_equal(marked[0].primitive, plain.primitive)


def test_marks_independent_of_dynamics_bins_agree():
    # Marks never modulate anything here, so per-bin estimates differ only by
    # sampling noise: 4 sigma pointwise against the pooled estimate.
    s = marked_series()
    edges = np.array([0.0, 0.4, 1.0, 2.0, np.inf])
    bins = mark_bin_probabilities(s, [edges])
    per_bin = estimate_G_marked(s, 0, 0, bins, h=1.0, t_max=20.0)
    pooled = estimate_g(s, 0, 0, h=1.0, t_max=20.0)
    for est in per_bin:
        assert not est.degenerate
        sigma = np.sqrt(np.maximum(pooled.values + pooled.rate, 0.0) / (est.count * est.h))
        assert np.all(np.abs(est.values - pooled.values) < 4 * sigma + 1e-3)


def test_empty_bin_degenerate_flag():
    s = marked_series()
    edges = np.array([0.0, 1.0, 1000.0, 2000.0])
    bins = mark_bin_probabilities(s, [edges])
    per_bin = estimate_G_marked(s, 0, 0, bins, h=0.5, t_max=20.0)
    assert per_bin[2].degenerate
    assert per_bin[2].count == 0


def test_marked_levels_scale_g(tmp_path):
    # 2D model where the mark scales excitation of component 1: the per-bin
    # G^{12}_l from data must match the DM-dimensional oracle within noise.
    edges = (0.0, 0.7, 1.5, np.inf)
    dist = ExponentialMarks(1.0)
    lo = [-np.inf, 0.7, 1.5, np.inf]
    levels = tuple(
        dist.mean_in(lo[k], lo[k + 1]) / dist.prob_in(lo[k], lo[k + 1]) for k in range(3)
    )
    spec = MarkSpec(
        distribution=dist,
        influences=(PiecewiseConstantMark(edges, levels), ConstantMark(1.0)),
    )
    model = HawkesModel(
        baselines=(0.05, 0.1),
        kernels=(
            (ExponentialKernel(0.08, 0.2), ExponentialKernel(0.08, 0.2)),
            (ExponentialKernel(0.24, 0.9), ExponentialKernel(0.24, 0.4)),
        ),
        marks=(None, spec),
    )
    s = simulate(model, SimConfig(horizon=3e5, seed=303))
    bins = mark_bin_probabilities(s, [None, np.asarray(edges)])
    table, grid, _ = marked_oracle_condlaw_table(model, 100.0, 0.01, 20.0)
    ests = estimate_G_marked(s, 0, 1, bins, h=1.0, t_max=20.0)
    for l, est in enumerate(ests):
        truth = table.est(0, 1, l)
        smoothed = np.array(
            [
                np.mean(np.interp(np.linspace(tt, tt + est.h, 33), truth.t, truth.values))
                for tt in est.t
            ]
        )
        sigma = np.sqrt((np.abs(smoothed) + est.rate) / (est.count * est.h))
        assert np.all(np.abs(est.values - smoothed) < 5 * sigma + 2e-3)


# ---------------------------------------------------------------------------
# Negative-lag reflection


def test_negative_time_symmetric_auto(exp1d_series_1e5):
    est = estimate_g(exp1d_series_1e5, 0, 0, h=0.5, t_max=20.0)
    lam = est.rate
    neg = negative_time_g(est, lam, lam)
    assert np.allclose(neg.values, est.values[1:][::-1])
    assert np.all(neg.t < 0)


def test_negative_time_equal_rates_transpose():
    rng = np.random.default_rng(12)
    a = np.sort(rng.uniform(0, 5e4, 5000))
    b = np.sort(rng.uniform(0, 5e4, 5000))
    s = unmarked([a, b], horizon=5e4)
    est_ji = estimate_g(s, 1, 0, h=1.0, t_max=15.0)
    neg = negative_time_g(est_ji, lam_i=0.1, lam_j=0.1)
    assert np.allclose(neg.values, est_ji.values[1:][::-1])


def test_negative_time_oracle_identity():
    m = HawkesModel(
        baselines=(0.05, 0.1),
        kernels=(
            (ExponentialKernel(0.08, 0.2), ExponentialKernel(0.08, 0.2)),
            (ExponentialKernel(0.24, 0.9), ExponentialKernel(0.24, 0.4)),
        ),
    )
    from hawkesnp import oracle_g

    grid = oracle_g(m, t_max=100.0, step=0.01)
    lam = grid.rates
    n = 1000
    t = grid.t[: n + 1]
    # Build a (j, i) estimate from oracle values and reflect it to (i, j).
    i, j = 0, 1
    vals_ji = grid.g_pos[j, i, : n + 1]
    est_ji = CondLawEstimate(
        j, i, None, t, vals_ji, _trapz_cumulative(vals_ji, grid.step), lam[j], 0.0, 0
    )
    neg = negative_time_g(est_ji, lam_i=lam[i], lam_j=lam[j])
    expect = grid.g_neg[i, j, 1 : n + 1][::-1]
    assert np.max(np.abs(neg.values - expect)) < 1e-8


def test_negative_time_zero_rate_error(exp1d_series_1e5):
    est = estimate_g(exp1d_series_1e5, 0, 0, h=0.5, t_max=20.0)
    with pytest.raises(ConfigError):
        negative_time_g(est, 0.1, 0.0)


def test_variance_halves_when_j_doubles(exp1d_model):
    # Fixed h: the estimator variance scales as 1/J within Monte-Carlo error.
    h, t_max, seeds = 1.0, 15.0, 40
    variances = []
    for horizon in (5e4, 1e5):
        samples = []
        for k in range(seeds):
            s = simulate(exp1d_model, SimConfig(horizon=horizon, seed=600 + k))
            samples.append(estimate_g(s, 0, 0, h=h, t_max=t_max).values)
        variances.append(np.var(np.asarray(samples), axis=0, ddof=1).mean())
    ratio = variances[0] / variances[1]
    assert ratio == pytest.approx(2.0, rel=0.3)


def test_marked_estimator_requires_marks(exp1d_series_1e5):
    from hawkesnp.events import MarkBins

    edges = (np.array([0.0, 1.0, 2.0]),)
    bins = MarkBins(edges=edges, probs=(np.array([0.5, 0.5]),), counts=((1, 1),), clamped=(0,))
    with pytest.raises(ConfigError, match="not marked"):
        estimate_G_marked(exp1d_series_1e5, 0, 0, bins, h=0.5, t_max=20.0)
