import math

import numpy as np
import pytest

from hawkesnp import (
    DivergenceError,
    ExponentialKernel,
    ExponentialMarks,
    HawkesModel,
    IdentityMark,
    ConstantMark,
    MarkSpec,
    PiecewiseLinearKernel,
    SimConfig,
    StabilityError,
    ZeroKernel,
    save_events,
    simulate,
)
from hawkesnp.gof import rescale


def test_poisson_count_within_4_sigma():
    m = HawkesModel(baselines=(0.1,), kernels=((ZeroKernel(),),))
    s = simulate(m, SimConfig(horizon=1e6, seed=2))
    n = s.counts()[0]
    assert abs(n - 1e5) < 4 * math.sqrt(1e5)


def test_hawkes_rate_within_4_sigma(exp1d_series_1e5):
    # Rate 0.1 forced by Lambda = mu / (1 - ||phi||); count variance inflated
    # by (1 - ||phi||)^{-2} relative to Poisson.
    n = exp1d_series_1e5.counts()[0]
    t = exp1d_series_1e5.horizon
    sigma = math.sqrt(0.1 * t) / (1 - 0.5)
    assert abs(n - 0.1 * t) < 4 * sigma


def test_determinism_same_seed_byte_identical(tmp_path, exp1d_model):
    cfg = SimConfig(horizon=2e4, seed=99)
    a = simulate(exp1d_model, cfg)
    b = simulate(exp1d_model, cfg)
    pa, pb = tmp_path / "a.hev", tmp_path / "b.hev"
    save_events(a, pa)
    save_events(b, pb)
    assert pa.read_bytes() == pb.read_bytes()
    c = simulate(exp1d_model, SimConfig(horizon=2e4, seed=100))
    assert not np.array_equal(a.times[0], c.times[0])


def test_burn_in_discarded_and_shifted(exp1d_model):
    s = simulate(exp1d_model, SimConfig(horizon=1e4, seed=5, burn_in=500.0))
    assert s.horizon == 1e4
    assert s.times[0][0] >= 0.0
    assert s.times[0][-1] <= 1e4


def test_unstable_unrectified_raises():
    m = HawkesModel(baselines=(0.1,), kernels=((ExponentialKernel(0.3, 0.2),),))
    with pytest.raises(StabilityError):
        simulate(m, SimConfig(horizon=100.0, seed=1))


def test_event_cap_divergence():
    m = HawkesModel(baselines=(5.0,), kernels=((ZeroKernel(),),))
    with pytest.raises(DivergenceError):
        simulate(m, SimConfig(horizon=1e4, seed=1, max_events=100))


def test_bound_dominates_non_monotone_kernels():
    tri = PiecewiseLinearKernel(((0.5, 0.0), (1.0, 1.2), (1.5, 0.0)))
    m = HawkesModel(baselines=(0.1,), kernels=((tri,),))
    s = simulate(m, SimConfig(horizon=5e3, seed=7, check_bound=True))
    assert s.counts()[0] > 0


def test_rectified_intensity_nonnegative():
    neg = PiecewiseLinearKernel(((0.0, -0.2), (1.0, -0.2), (1.5, 0.3), (2.0, 0.0)))
    m = HawkesModel(baselines=(0.1,), kernels=((neg,),), rectified=True)
    s, lams = simulate(
        m, SimConfig(horizon=2e4, seed=11, check_bound=True), return_intensities=True
    )
    assert min(lams[0]) >= 0.0


def test_marked_simulation_factors():
    spec = MarkSpec(
        distribution=ExponentialMarks(1.0),
        influences=(IdentityMark(1.0), ConstantMark(1.0)),
    )
    m = HawkesModel(
        baselines=(0.05, 0.1),
        kernels=(
            (ExponentialKernel(0.08, 0.2), ExponentialKernel(0.08, 0.2)),
            (ExponentialKernel(0.24, 0.9), ExponentialKernel(0.24, 0.4)),
        ),
        marks=(None, spec),
    )
    s = simulate(m, SimConfig(horizon=2e4, seed=13))
    assert s.marks[0] is None
    assert s.marks[1] is not None and s.marks[1].size == s.counts()[1]
    assert np.mean(s.marks[1]) == pytest.approx(1.0, abs=4 / math.sqrt(s.counts()[1]))


def test_thinning_ks_at_desk_scale(exp1d_model):
    # ~1e4 events rescaled through the true model must look unit exponential.
    s = simulate(exp1d_model, SimConfig(horizon=1e5, seed=17))
    rep = rescale(s, exp1d_model)
    assert rep.sets[0].ks_pvalue > 0.01
