"""Data-driven bandwidth selection by a cross-validated contrast.

The contrast M*(h) estimates the h-dependent part of the integrated squared
error of the conditional-law estimator: the observation window splits into R
equal blocks; for each block the density is re-estimated from conditioning
events *outside* the block and scored against the event pairs *inside* it.
Minimizing the average over blocks tracks the MISE minimizer.

Edge policy matches the estimator: only conditioning events at least
t_max + h before the horizon enter, both in the leave-block-out averages and
in the in-block empirical sums, with all counts taken over that eligible set.
The block average uses exact summation, so permuting block order cannot
change the result even in the last bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .condlaw import SmoothingKernel, _grid, _kernel_sums, pair_lags, smoothing_kernel
from .errors import ConfigError
from .events import EventSeries

__all__ = ["BandwidthScan", "contrast", "contrast_blocks", "select_bandwidth", "default_h_grid", "pick_bandwidth"]


@dataclass(frozen=True)
class BandwidthScan:
    """Contrast values over a candidate grid and the selected minimizer."""

    grid: np.ndarray
    values: np.ndarray
    h_star: float

    def __post_init__(self):
        for name in ("grid", "values"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def contrast_blocks(
    series: EventSeries,
    i: int,
    j: int,
    h: float,
    t_max: float,
    n_blocks: int = 10,
    kernel: SmoothingKernel = None,
    delta: float = None,
) -> np.ndarray:
    """Per-block contrast values C_(r)(h); their mean is M*(h).

    Blocks with no eligible conditioning events are dropped with a warning
    (an error if that leaves none).
    """
    if n_blocks < 2:
        raise ConfigError("cross-validation needs at least 2 blocks")
    if series.horizon / n_blocks <= t_max:
        raise ConfigError("blocks shorter than t_max: reduce n_blocks or t_max")
    kernel = kernel or smoothing_kernel(0)
    # The quadratic term (a grid trapezoid) and the empirical term (exact
    # lags against the interpolant) must share a grid fine enough that the
    # discretization mismatch stays negligible even at large h.
    delta = delta or min(h, t_max / 50.0) / 2.0

    pairs = pair_lags(series, i, j, t_max, h)
    n_eligible = len(pairs.eligible)
    if n_eligible == 0:
        raise ConfigError("no eligible conditioning events")
    lam_i = float(series.times[i].size) / series.horizon
    grid = _grid(t_max, delta)

    tj = series.times[j]
    scale = n_blocks / series.horizon
    block_elig = np.minimum((tj[pairs.eligible] * scale).astype(int), n_blocks - 1)
    block_pair = np.minimum((tj[pairs.outer] * scale).astype(int), n_blocks - 1)
    per_block = np.bincount(block_elig, minlength=n_blocks)

    sums = _kernel_sums(pairs, grid, h, kernel, group_of=block_pair, n_groups=n_blocks)
    total = sums.sum(axis=0)

    # Pairs entering the in-block empirical term: strictly positive lags up to t_max.
    keep = (pairs.lags > 0) & (pairs.lags <= t_max)
    inner_lags = pairs.lags[keep]
    inner_block = block_pair[keep]
    order = np.argsort(inner_block, kind="stable")
    inner_lags = inner_lags[order]
    inner_block = inner_block[order]
    bounds = np.searchsorted(inner_block, np.arange(n_blocks + 1))

    dgrid = float(grid[1] - grid[0])
    values = []
    for r in range(n_blocks):
        n_r = int(per_block[r])
        if n_r == 0:
            warnings.warn(f"cross-validation block {r + 1} has no conditioning events")
            continue
        lo_count = n_eligible - n_r
        if lo_count == 0:
            warnings.warn(f"all conditioning events fall in block {r + 1}")
            continue
        g_r = (total - sums[r]) / (lo_count * h) - lam_i
        integrand = g_r * g_r + 2.0 * lam_i * g_r
        quad = dgrid * (integrand.sum() - 0.5 * (integrand[0] + integrand[-1]))
        seg = inner_lags[bounds[r] : bounds[r + 1]]
        inner = np.interp(seg, grid, g_r).sum() if seg.size else 0.0
        values.append(float(quad) - 2.0 / n_r * float(inner))
    if not values:
        raise ConfigError("every cross-validation block is empty")
    return np.asarray(values)


def contrast(
    series: EventSeries,
    i: int,
    j: int,
    h: float,
    t_max: float,
    n_blocks: int = 10,
    kernel: SmoothingKernel = None,
    delta: float = None,
) -> float:
    """The cross-validated contrast M*(h) (block average, exact summation)."""
    vals = contrast_blocks(series, i, j, h, t_max, n_blocks, kernel=kernel, delta=delta)
    return math.fsum(vals) / len(vals)


def default_h_grid(series: EventSeries, j: int, t_max: float, n_points: int = 16) -> np.ndarray:
    """Geometric candidate grid from (median inter-event time)/4 to t_max/4."""
    gaps = np.diff(series.times[j])
    if gaps.size == 0:
        raise ConfigError(f"component {j + 1} has too few events for a bandwidth grid")
    lo = float(np.median(gaps)) / 4.0
    hi = t_max / 4.0
    if not 0 < lo < hi:
        lo = hi / 256.0
    return np.geomspace(lo, hi, n_points)


def pick_bandwidth(grid, values) -> float:
    """Argmin over the grid; ties resolve toward the smaller bandwidth."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.size == 0:
        raise ConfigError("empty bandwidth grid")
    return float(grid[int(np.argmin(values))])


def select_bandwidth(
    series: EventSeries,
    i: int,
    j: int,
    grid=None,
    t_max: float = None,
    n_blocks: int = 10,
    kernel: SmoothingKernel = None,
) -> BandwidthScan:
    """Evaluate the contrast over a bandwidth grid and pick its minimizer."""
    if t_max is None:
        raise ConfigError("select_bandwidth requires t_max")
    if grid is None:
        grid = default_h_grid(series, j, t_max)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ConfigError("empty bandwidth grid")
    if not np.all(np.diff(grid) > 0):
        raise ConfigError("bandwidth grid must be strictly increasing")
    values = np.array(
        [contrast(series, i, j, float(h), t_max, n_blocks, kernel=kernel) for h in grid]
    )
    return BandwidthScan(grid=grid, values=values, h_star=pick_bandwidth(grid, values))
