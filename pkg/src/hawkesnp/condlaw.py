"""Kernel-smoothed empirical estimation of conditional-law densities.

For components (i, j), bandwidth h and a smoothing kernel K supported on
[0, 1), the raw estimator accumulates K((u - t^j_n - t) / h) / (J h) over
pairs of a conditioning event t^j_n (component j) and a target event u
(component i); the returned values subtract the empirical mean rate, so they
estimate the centered density g^{ij}(t) on a uniform grid over [0, t_max].

Conventions baked in here and relied on elsewhere:
  * self-pairs (u = t^j_n with i = j) are excluded -- they form the Dirac
    at zero, not the density part;
  * conditioning events within t_max + h of the horizon are dropped from the
    outer sum (edge bias), with the normalizing count J adjusted;
  * the outer count J is the number of component-j events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .events import EventSeries, MarkBins, empirical_rates

__all__ = [
    "SmoothingKernel",
    "smoothing_kernel",
    "CondLawEstimate",
    "CondLawTable",
    "PairLags",
    "pair_lags",
    "estimate_g",
    "estimate_G_marked",
    "estimate_all",
    "negative_time_g",
    "primitive",
    "event_count_primitive",
    "write_estimate_csv",
]


# ---------------------------------------------------------------------------
# Smoothing kernels


@dataclass(frozen=True)
class SmoothingKernel:
    """Polynomial kernel on [0, 1) of the given order.

    Order l means the first l moments vanish: integral of u^n K(u) du = 0 for
    1 <= n <= l, with total mass 1 and finite square integral.  One-sided
    support keeps every evaluation at nonnegative lags.
    """

    order: int
    coefficients: tuple

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        inside = (u >= 0.0) & (u < 1.0)
        if np.any(inside):
            acc = np.zeros(int(np.count_nonzero(inside)))
            ui = u[inside]
            for c in reversed(self.coefficients):
                acc = acc * ui + c
            out[inside] = acc
        return out if out.ndim else float(out)

    def moment(self, n):
        """Exact integral of u^n K(u) du over [0, 1)."""
        return math.fsum(c / (n + k + 1) for k, c in enumerate(self.coefficients))


def smoothing_kernel(order: int = 0) -> SmoothingKernel:
    """Polynomial kernel of the requested order on [0, 1).

    Order 0 is the rectangle K = 1_{[0,1)}; higher orders solve the Hilbert
    moment system for the minimal-degree polynomial.
    """
    if order < 0:
        raise ConfigError("kernel order must be >= 0")
    n = order + 1
    hil = np.array([[1.0 / (r + c + 1) for c in range(n)] for r in range(n)])
    rhs = np.zeros(n)
    rhs[0] = 1.0
    coeff = np.linalg.solve(hil, rhs)
    return SmoothingKernel(order=order, coefficients=tuple(float(c) for c in coeff))


# ---------------------------------------------------------------------------
# Estimates


@dataclass(frozen=True)
class CondLawEstimate:
    """Sampled estimate of g^{ij} (or a marked G^{ij}_l) with its primitive.

    ``values[k]`` is the double sum with the smoothing window anchored at
    grid point t[k]; ``primitive`` is its trapezoid cumulative integral on
    the same grid.  ``count`` is the number of conditioning events actually
    averaged (after edge exclusion); ``degenerate`` flags an empty outer set.

    ``offset`` is h times the smoothing kernel's first moment: the window
    average anchored at t[k] is a second-order-accurate estimate of the
    density at t[k] + offset, so interpolation (``value_at``/``primitive_at``)
    places the samples there.  Arguments left of the first shifted abscissa
    clamp to the first value.
    """

    i: int
    j: int
    bin: object
    t: np.ndarray
    values: np.ndarray
    primitive: np.ndarray
    rate: float
    h: float
    count: int
    degenerate: bool = False
    offset: float = 0.0

    def __post_init__(self):
        for name in ("t", "values", "primitive"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def delta(self):
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else 0.0

    def value_at(self, at):
        out = np.interp(np.asarray(at, dtype=float) - self.offset, self.t, self.values)
        return out if np.ndim(out) else float(out)

    def primitive_at(self, at):
        """Integral over [0, at] of the abscissa-shifted step/linear interpolant."""
        at = np.asarray(at, dtype=float)
        if self.offset == 0.0:
            out = np.interp(at, self.t, self.primitive)
        else:
            head = self.values[0] * np.clip(at, 0.0, self.offset)
            out = head + np.interp(
                np.maximum(at - self.offset, 0.0), self.t, self.primitive
            )
        return out if np.ndim(out) else float(out)


def _trapz_cumulative(values, delta):
    if len(values) < 2:
        return np.zeros_like(values)
    mids = 0.5 * (values[1:] + values[:-1]) * delta
    return np.concatenate([[0.0], np.cumsum(mids)])


@dataclass(frozen=True)
class PairLags:
    """Sorted target-minus-conditioning lags for one component pair.

    ``lags`` are the values u - t^j_n in [0, t_max + h], sorted ascending;
    ``outer`` maps each lag to the index of its conditioning event in the
    full component-j series; ``eligible`` indexes the conditioning events
    that pass the edge rule.
    """

    lags: np.ndarray
    outer: np.ndarray
    eligible: np.ndarray


def pair_lags(series: EventSeries, i: int, j: int, t_max: float, h: float) -> PairLags:
    """Enumerate estimator pairs for components (i, j)."""
    tj = series.times[j]
    ti = series.times[i]
    cutoff = series.horizon - (t_max + h)
    eligible = np.nonzero(tj <= cutoff)[0]
    tn = tj[eligible]
    side = "right" if i == j else "left"
    left = np.searchsorted(ti, tn, side=side)
    right = np.searchsorted(ti, tn + (t_max + h), side="right")
    counts = right - left
    total = int(np.sum(counts))
    outer = np.repeat(np.arange(len(tn)), counts)
    # Flatten the per-outer ranges of target indices.
    idx = np.concatenate([np.arange(a, b) for a, b in zip(left, right)]) if total else np.empty(0, int)
    lag = ti[idx] - tn[outer]
    order = np.argsort(lag, kind="stable")
    return PairLags(lags=lag[order], outer=eligible[outer[order]], eligible=eligible)


def _grid(t_max, delta):
    # The last grid point must not pass t_max: pair enumeration only covers
    # lags up to t_max + h.
    n = max(1, int(math.floor(t_max / delta + 1e-9)))
    return delta * np.arange(n + 1)


def _kernel_sums(pairs: PairLags, grid, h, kernel, group_of=None, n_groups=1):
    """Sum of K((lag - t)/h) per grid point, optionally split by outer group."""
    sums = np.zeros((n_groups, len(grid)))
    lags = pairs.lags
    lo = np.searchsorted(lags, grid, side="left")
    hi = np.searchsorted(lags, grid + h, side="left")
    for k, t in enumerate(grid):
        a, b = lo[k], hi[k]
        if a == b:
            continue
        kv = kernel((lags[a:b] - t) / h)
        if group_of is None:
            sums[0, k] = math.fsum(kv)
        else:
            sums[:, k] += np.bincount(group_of[a:b], weights=kv, minlength=n_groups)
    return sums


def _check_window(series, h, t_max):
    if h <= 0:
        raise ConfigError("bandwidth h must be positive")
    if t_max <= 0:
        raise ConfigError("t_max must be positive")
    if t_max + h > series.horizon:
        raise ConfigError("t_max + h exceeds the observation window")


def estimate_g(
    series: EventSeries,
    i: int,
    j: int,
    h: float,
    t_max: float,
    kernel: SmoothingKernel = None,
    delta: float = None,
    pairs: PairLags = None,
) -> CondLawEstimate:
    """Centered conditional-law density estimate for the pair (i, j).

    The grid step defaults to h / 2 (estimates are only meaningful at
    bandwidth resolution).  ``pairs`` may carry precomputed lags.
    """
    _check_window(series, h, t_max)
    if series.times[j].size == 0:
        raise ConfigError(f"component {j + 1} has no events")
    kernel = kernel or smoothing_kernel(0)
    delta = delta or h / 2.0
    if pairs is None:
        pairs = pair_lags(series, i, j, t_max, h)
    lam_i = float(series.times[i].size) / series.horizon
    grid = _grid(t_max, delta)
    count = len(pairs.eligible)
    if count == 0:
        z = np.zeros_like(grid)
        return CondLawEstimate(i, j, None, grid, z, z.copy(), lam_i, h, 0, degenerate=True)
    sums = _kernel_sums(pairs, grid, h, kernel)[0]
    values = sums / (count * h) - lam_i
    return CondLawEstimate(
        i=i, j=j, bin=None, t=grid, values=values,
        primitive=_trapz_cumulative(values, float(grid[1] - grid[0])),
        rate=lam_i, h=h, count=count, offset=h * kernel.moment(1),
    )


def estimate_G_marked(
    series: EventSeries,
    i: int,
    j: int,
    bins: MarkBins,
    h: float,
    t_max: float,
    kernel: SmoothingKernel = None,
    delta: float = None,
    pairs: PairLags = None,
):
    """Per-mark-bin conditional-law estimates G^{ij}_l for the pair (i, j).

    Same estimator as ``estimate_g`` with the outer sum restricted to
    conditioning events whose mark falls in bin l, normalized by the
    restricted count.  Empty bins come back with ``degenerate=True``.
    """
    _check_window(series, h, t_max)
    if series.times[j].size == 0:
        raise ConfigError(f"component {j + 1} has no events")
    n_bins = bins.n_bins(j)
    if n_bins == 1:
        est = estimate_g(series, i, j, h, t_max, kernel=kernel, delta=delta, pairs=pairs)
        return [CondLawEstimate(
            i=i, j=j, bin=0, t=est.t, values=est.values, primitive=est.primitive,
            rate=est.rate, h=h, count=est.count, degenerate=est.degenerate,
            offset=est.offset,
        )]
    if series.marks[j] is None:
        raise ConfigError(f"component {j + 1} is not marked")
    kernel = kernel or smoothing_kernel(0)
    delta = delta or h / 2.0
    if pairs is None:
        pairs = pair_lags(series, i, j, t_max, h)
    lam_i = float(series.times[i].size) / series.horizon
    grid = _grid(t_max, delta)
    eligible_bins = bins.bin_of(j, series.marks[j][pairs.eligible])
    counts = np.bincount(eligible_bins, minlength=n_bins)
    bin_of_outer = bins.bin_of(j, series.marks[j][pairs.outer])
    sums = _kernel_sums(pairs, grid, h, kernel, group_of=bin_of_outer, n_groups=n_bins)
    out = []
    dgrid = float(grid[1] - grid[0])
    offset = h * kernel.moment(1)
    for l in range(n_bins):
        if counts[l] == 0:
            z = np.zeros_like(grid)
            out.append(CondLawEstimate(i, j, l, grid, z, z.copy(), lam_i, h, 0,
                                       degenerate=True, offset=offset))
            continue
        values = sums[l] / (counts[l] * h) - lam_i
        out.append(CondLawEstimate(
            i=i, j=j, bin=l, t=grid, values=values,
            primitive=_trapz_cumulative(values, dgrid),
            rate=lam_i, h=h, count=int(counts[l]), offset=offset,
        ))
    return out


def negative_time_g(est: CondLawEstimate, lam_i: float, lam_j: float) -> CondLawEstimate:
    """Estimate of g^{ij} on [-t_max, 0) from the (j, i) estimate.

    Uses g^{ij}(-t) = (Lambda^i / Lambda^j) g^{ji}(t).  The input must be the
    estimate for the transposed pair (j, i).
    """
    if lam_j == 0:
        raise ConfigError("negative-time reflection undefined for a zero-rate component")
    ratio = lam_i / lam_j
    t_neg = -est.t[1:][::-1]
    values = ratio * est.values[1:][::-1]
    prim = _trapz_cumulative(values, est.delta)
    return CondLawEstimate(
        i=est.j, j=est.i, bin=est.bin, t=t_neg, values=values, primitive=prim,
        rate=lam_i, h=est.h, count=est.count, degenerate=est.degenerate,
    )


def primitive(est: CondLawEstimate) -> np.ndarray:
    """Trapezoid cumulative integral of the estimate on its grid."""
    return est.primitive


def event_count_primitive(series: EventSeries, i: int, j: int, t_max: float, grid=None):
    """Exact (smoothing-free) primitive: cross-pair counts minus the rate ramp.

    Returns the grid and (pair count with lag <= t) / J' - Lambda^i t, the
    event-count estimate of the primitive of g^{ij}.
    """
    if grid is None:
        grid = np.linspace(0.0, t_max, 101)
    grid = np.asarray(grid, dtype=float)
    pairs = pair_lags(series, i, j, t_max, 0.0)
    lam_i = float(series.times[i].size) / series.horizon
    count = len(pairs.eligible)
    if count == 0:
        raise ConfigError("no eligible conditioning events")
    cum = np.searchsorted(pairs.lags, grid, side="right") / count
    return grid, cum - lam_i * grid


# ---------------------------------------------------------------------------
# The table consumed by the Wiener-Hopf solver


@dataclass(frozen=True)
class CondLawTable:
    """All conditional-law estimates keyed (target i, conditioning j, bin l).

    ``rates`` is the empirical rate vector, ``t_max`` the shared horizon A of
    the estimates, ``bins`` the mark binning (trivial bins for unmarked
    components).  ``probs(j)`` returns the bin probabilities p^j_l.
    """

    dimension: int
    t_max: float
    rates: np.ndarray
    bins: MarkBins
    estimates: dict = field(compare=False)

    def n_bins(self, j):
        return self.bins.n_bins(j)

    def probs(self, j):
        p = self.bins.probs[j]
        return np.array([1.0]) if p is None else np.asarray(p, dtype=float)

    def est(self, i, j, l) -> CondLawEstimate:
        return self.estimates[(i, j, l)]

    def value(self, i, j, l, at):
        return self.est(i, j, l).value_at(at)

    def prim(self, i, j, l, at):
        return self.est(i, j, l).primitive_at(at)


def estimate_all(
    series: EventSeries,
    h,
    t_max: float,
    bins: MarkBins = None,
    kernel: SmoothingKernel = None,
    delta: float = None,
) -> CondLawTable:
    """Estimate every (i, j, l) conditional law needed by the solver.

    ``h`` is either a scalar bandwidth or a (D, D) array-like of per-pair
    bandwidths.  A single grid per pair is used for all bins.
    """
    d = series.dimension
    bins = bins or MarkBins.trivial(d)
    h_mat = np.asarray(h, dtype=float)
    if h_mat.ndim == 0:
        h_mat = np.full((d, d), float(h_mat))
    rates = empirical_rates(series)
    estimates = {}
    for j in range(d):
        for i in range(d):
            ests = estimate_G_marked(
                series, i, j, bins, float(h_mat[i, j]), t_max, kernel=kernel, delta=delta
            )
            for l, e in enumerate(ests):
                estimates[(i, j, l)] = e
    return CondLawTable(
        dimension=d, t_max=float(t_max), rates=rates, bins=bins, estimates=estimates
    )


def write_estimate_csv(est: CondLawEstimate, path):
    """Dump one estimate as CSV columns t, value, primitive."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,value,primitive\n")
        for t, v, p in zip(est.t, est.values, est.primitive):
            fh.write(f"{t:.17g},{v:.17g},{p:.17g}\n")
