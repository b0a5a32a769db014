import math

import numpy as np
import pytest

from hawkesnp import ConfigError, EventSeries, SimConfig, contrast, select_bandwidth, simulate
from hawkesnp.bandwidth import contrast_blocks, default_h_grid, pick_bandwidth


def poisson_series(rate, horizon, seed):
    rng = np.random.default_rng(seed)
    n = rng.poisson(rate * horizon)
    t = np.sort(rng.uniform(0, horizon, n))
    return EventSeries(times=(t,), marks=(None,), horizon=horizon)


def test_poisson_contrast_variance_trend():
    # g = 0: the contrast is pure variance, decreasing in h with a 1/h trend
    # where the variance term dominates (small h; at large h the O(1/J)
    # plug-in-rate covariances are comparable to the vanishing signal).
    s = poisson_series(0.1, 1e6, seed=8)  # J = 1e5
    grid = np.array([0.05, 0.1, 0.2, 0.4, 0.8])
    vals = np.array([contrast(s, 0, 0, float(h), 20.0, 10) for h in grid])
    assert np.all(vals > 0)
    assert np.all(np.diff(vals) < 0)
    slope = np.polyfit(np.log(grid[:3]), np.log(vals[:3]), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.35)


def test_block_permutation_bit_identical(exp1d_series_1e5):
    vals = contrast_blocks(exp1d_series_1e5, 0, 0, 0.5, 25.0, 10)
    perm = np.random.default_rng(0).permutation(len(vals))
    assert math.fsum(vals) / len(vals) == math.fsum(vals[perm]) / len(vals)


def test_contrast_requires_blocks_shorter_than_tmax(exp1d_series_1e5):
    with pytest.raises(ConfigError):
        contrast(exp1d_series_1e5, 0, 0, 0.5, 25.0, n_blocks=100000)
    with pytest.raises(ConfigError):
        contrast(exp1d_series_1e5, 0, 0, 0.5, 25.0, n_blocks=1)


def test_single_element_grid(exp1d_series_1e5):
    scan = select_bandwidth(exp1d_series_1e5, 0, 0, grid=[0.5], t_max=25.0)
    assert scan.h_star == 0.5


def test_pick_bandwidth_tie_breaks_small():
    assert pick_bandwidth([0.1, 0.2, 0.4], [1.0, 1.0, 2.0]) == 0.1


def test_synthetic_mise_argmin_matches_analytic():
    # Inject M(h) = C2^2 h^2 + C1/(J h); the analytic minimizer is
    # (C1 / (2 C2^2 J))^(1/3); selection must land on the nearest grid point.
    c1, c2, j = 2.0, 0.7, 1e4
    grid = np.geomspace(0.01, 3.0, 40)
    values = c2 ** 2 * grid ** 2 + c1 / (j * grid)
    h_star = (c1 / (2 * c2 ** 2 * j)) ** (1.0 / 3.0)
    picked = pick_bandwidth(grid, values)
    nearest = grid[np.argmin(np.abs(np.log(grid) - math.log(h_star)))]
    assert picked == nearest


def test_default_h_grid_shape(exp1d_series_1e5):
    grid = default_h_grid(exp1d_series_1e5, 0, t_max=25.0)
    assert len(grid) == 16
    assert np.all(np.diff(grid) > 0)
    assert grid[-1] == pytest.approx(25.0 / 4.0)


def test_contrast_u_shape_and_argmin(exp1d_model):
    # Fig.-2-style check at J ~ 1e4: interior minimum of the scan.
    s = simulate(exp1d_model, SimConfig(horizon=1e5, seed=11))
    grid = 0.1 * 2.0 ** (0.5 * np.arange(13))
    scan = select_bandwidth(s, 0, 0, grid=grid, t_max=25.0)
    k = int(np.where(scan.grid == scan.h_star)[0][0])
    assert 0 < k < len(grid) - 1


def test_all_events_in_one_block_errors():
    # Every conditioning event in a single block leaves nothing to average.
    t = np.linspace(1.0, 9.0, 30)
    s = EventSeries(times=(t,), marks=(None,), horizon=1000.0)
    with pytest.warns(UserWarning):
        with pytest.raises(ConfigError, match="block"):
            contrast(s, 0, 0, h=1.0, t_max=50.0, n_blocks=4)


def test_r_stability_two_vs_ten(exp1d_model):
    # Selected bandwidth moves at most one grid step between R=2 and R=10.
    s = simulate(exp1d_model, SimConfig(horizon=5e5, seed=12))
    grid = 0.1 * 2.0 ** (0.5 * np.arange(13))
    h2 = select_bandwidth(s, 0, 0, grid=grid, t_max=25.0, n_blocks=2).h_star
    h10 = select_bandwidth(s, 0, 0, grid=grid, t_max=25.0, n_blocks=10).h_star
    k2 = int(np.where(grid == h2)[0][0])
    k10 = int(np.where(grid == h10)[0][0])
    assert abs(k2 - k10) <= 1
