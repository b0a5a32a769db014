"""Goodness of fit by time rescaling.

Under a correct model, the integrals tau_k = int_{t_{k-1}}^{t_k} lambda(u) du
of the (per-component) intensity between consecutive events are iid unit
exponentials.  This module reconstructs intensities from a model -- either a
known HawkesModel or an estimated NystromSolution -- integrates them exactly
between events with the closed-form kernel primitives, and tests the rescaled
inter-event times against Exp(1).

Clamping: with ``clamp`` the intensity is floored at zero, which requires
finite-support piecewise-linear kernels so the flooring can be integrated
exactly (the unclamped intensity is then piecewise linear between events).
Kernels with infinite support are truncated at their effective support
(relative tail mass ``mass_tol``), the one approximation in the integrator.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import kolmogorov

from .errors import ConfigError
from .events import EventSeries
from .model import (
    ConstantMark,
    HawkesModel,
    PiecewiseConstantMark,
    PiecewiseLinearKernel,
    SampledKernel,
    ZeroKernel,
)
from .whsolver import NystromSolution, resample

__all__ = [
    "IntensityModel",
    "ResidualSet",
    "ResidualReport",
    "from_hawkes",
    "from_solution",
    "reconstruct_intensity",
    "rescale",
    "qq_uniform_deviation",
]

_MIN_EVENTS_FOR_KS = 100


@dataclass(frozen=True)
class IntensityModel:
    """Everything needed to evaluate and integrate conditional intensities.

    ``kernels[j][k]`` excites component j from events of component k;
    ``mark_functions[j][k]`` maps a component-k mark to its multiplier (None
    for unit factors).  ``clamp`` floors the intensity at zero.
    """

    baselines: tuple
    kernels: tuple
    mark_functions: tuple
    clamp: bool = False
    mass_tol: float = 1e-6

    @property
    def dimension(self):
        return len(self.baselines)


def from_hawkes(model: HawkesModel) -> IntensityModel:
    """Intensity view of a known model (clamped when the model is rectified)."""
    d = model.dimension
    fns = tuple(
        tuple(
            None if isinstance(model.mark_function(j, k), ConstantMark)
            and model.mark_function(j, k).value == 1.0
            else model.mark_function(j, k)
            for k in range(d)
        )
        for j in range(d)
    )
    return IntensityModel(
        baselines=tuple(model.baselines),
        kernels=tuple(tuple(row) for row in model.kernels),
        mark_functions=fns,
        clamp=model.rectified,
    )


def from_solution(sol: NystromSolution, grid_size: int = 257, clamp: bool = False) -> IntensityModel:
    """Intensity view of an estimated solution.

    Kernels are the Nystrom resample on a uniform grid over [0, A]; mark
    multipliers come from the estimated per-bin levels (undefined levels fall
    back to 1); baselines are mu_hat = (I - ||phi_hat||) Lambda_hat.  When
    the estimate is unstable a warning is issued and the intensity proceeds
    clamped at zero.
    """
    table = sol.table
    d = sol.dimension
    grid = np.linspace(0.0, table.t_max, grid_size)
    phi = resample(sol, grid)
    step = grid[1] - grid[0]
    kernels = tuple(
        tuple(SampledKernel(0.0, float(step), tuple(phi[j, k])) for k in range(d))
        for j in range(d)
    )
    fns = []
    for j in range(d):
        row = []
        for k in range(d):
            edges = table.bins.edges[k]
            if edges is None:
                row.append(None)
                continue
            levels = np.asarray(sol.mark_levels(j, k), dtype=float)
            levels = np.where(np.isfinite(levels), np.maximum(levels, 0.0), 1.0)
            row.append(PiecewiseConstantMark(tuple(edges), tuple(levels)))
        fns.append(tuple(row))
    if not sol.stable:
        warnings.warn(
            f"estimated kernels are unstable (rho = {sol.rho:.4g}); intensities clamped"
        )
        clamp = True
    return IntensityModel(
        baselines=tuple(float(m) for m in sol.mu_hat),
        kernels=kernels,
        mark_functions=tuple(fns),
        clamp=clamp,
    )


# ---------------------------------------------------------------------------
# The sweep


def _clamped_linear_integral(y1, y2, w):
    """Integral of max(linear, 0) on a segment of width w with end values y1, y2."""
    if y1 >= 0.0 and y2 >= 0.0:
        return 0.5 * (y1 + y2) * w
    if y1 <= 0.0 and y2 <= 0.0:
        return 0.0
    t_cross = w * y1 / (y1 - y2)
    if y1 > 0.0:
        return 0.5 * y1 * t_cross
    return 0.5 * y2 * (w - t_cross)


class _Sweep:
    """Single pass over the merged event stream computing taus and intensities."""

    def __init__(self, series: EventSeries, model: IntensityModel):
        d = model.dimension
        if series.dimension != d:
            raise ConfigError("series and model dimensions differ")
        self.series = series
        self.model = model
        self.d = d
        self.mu = np.asarray(model.baselines, dtype=float)
        if model.clamp:
            for row in model.kernels:
                for k in row:
                    if not isinstance(k, (PiecewiseLinearKernel, SampledKernel, ZeroKernel)):
                        raise ConfigError(
                            "clamped integration requires finite-support piecewise-linear kernels"
                        )
        # Mark multipliers per source component, precomputed per event.
        self.fmat = []
        for k in range(d):
            nk = series.times[k].size
            mat = np.ones((d, nk))
            for j in range(d):
                f = model.mark_functions[j][k]
                if f is not None:
                    if series.marks[k] is None:
                        raise ConfigError(f"model expects marks on component {k + 1}")
                    mat[j] = f(series.marks[k])
            self.fmat.append(mat)
        self.win = np.zeros(d)
        for k in range(d):
            w = 0.0
            for j in range(d):
                kern = model.kernels[j][k]
                if isinstance(kern, ZeroKernel):
                    continue
                w = max(w, kern.effective_support(model.mass_tol))
            self.win[k] = min(w, series.horizon)
        # Knot offsets per source component for the clamped breakpoint scan.
        self.knots = []
        if model.clamp:
            for k in range(d):
                offs = set()
                for j in range(d):
                    kern = model.kernels[j][k]
                    if isinstance(kern, SampledKernel):
                        kern = kern._pl
                    if isinstance(kern, PiecewiseLinearKernel):
                        offs.update(t for t, _v in kern.knots)
                self.knots.append(np.array(sorted(offs)))

    def _lambda_at(self, t, heads, counts, exclude_at_t=True):
        """Intensity vector at time t (left limit) given the window state."""
        lam = self.mu.copy()
        for k in range(self.d):
            lo, hi = heads[k], counts[k]
            if lo == hi:
                continue
            tk = self.series.times[k][lo:hi]
            if exclude_at_t and tk.size and tk[-1] >= t:
                hi -= int(np.sum(tk >= t))
                tk = self.series.times[k][lo:hi]
                if tk.size == 0:
                    continue
            lags = t - tk
            fm = self.fmat[k][:, lo:hi]
            for j in range(self.d):
                kern = self.model.kernels[j][k]
                if isinstance(kern, ZeroKernel):
                    continue
                lam[j] += float(np.dot(kern(lags), fm[j]))
        if self.model.clamp:
            np.maximum(lam, 0.0, out=lam)
        return lam

    def run(self, want_lambdas):
        d = self.d
        series = self.series
        comp_ids = np.concatenate(
            [np.full(series.times[j].size, j, dtype=int) for j in range(d)]
        )
        all_t = np.concatenate([series.times[j] for j in range(d)])
        order = np.lexsort((comp_ids, all_t))
        heads = [0] * d
        counts = [0] * d
        integral = np.zeros(d)
        last_integral = np.zeros(d)
        seen = [0] * d
        taus = [[] for _ in range(d)]
        lams = [[] for _ in range(d)] if want_lambdas else None
        t_prev = 0.0
        for idx in order:
            c = int(comp_ids[idx])
            t_now = float(all_t[idx])
            if t_now > t_prev:
                self._advance(t_prev, t_now, heads, counts, integral)
                t_prev = t_now
            if want_lambdas:
                lam = self._lambda_at(t_now, heads, counts)
                lams[c].append(lam[c])
            if seen[c] > 0:
                taus[c].append(integral[c] - last_integral[c])
            last_integral[c] = integral[c]
            seen[c] += 1
            counts[c] += 1
        return (
            [np.asarray(x) for x in taus],
            None if lams is None else [np.asarray(x) for x in lams],
        )

    def _advance(self, t_a, t_b, heads, counts, integral):
        """Accumulate int_{t_a}^{t_b} lambda_j for all j into ``integral``."""
        d = self.d
        if self.model.clamp:
            self._advance_clamped(t_a, t_b, heads, counts, integral)
            return
        integral += self.mu * (t_b - t_a)
        for k in range(d):
            # Trim on the segment start: an event may still cover part of
            # (t_a, t_b) even when it is out of range at t_b.
            while heads[k] < counts[k] and self.series.times[k][heads[k]] < t_a - self.win[k]:
                heads[k] += 1
            lo, hi = heads[k], counts[k]
            if lo == hi:
                continue
            tk = self.series.times[k][lo:hi]
            fm = self.fmat[k][:, lo:hi]
            a = t_a - tk
            b = t_b - tk
            for j in range(d):
                kern = self.model.kernels[j][k]
                if isinstance(kern, ZeroKernel):
                    continue
                integral[j] += float(np.dot(kern.integral(a, b), fm[j]))

    def _advance_clamped(self, t_a, t_b, heads, counts, integral):
        d = self.d
        pts = [t_a, t_b]
        for k in range(d):
            while heads[k] < counts[k] and self.series.times[k][heads[k]] < t_a - self.win[k]:
                heads[k] += 1
            lo, hi = heads[k], counts[k]
            if lo == hi or self.knots[k].size == 0:
                continue
            tk = self.series.times[k][lo:hi]
            cand = (tk[:, None] + self.knots[k][None, :]).ravel()
            pts.append(cand[(cand > t_a) & (cand < t_b)])
        pts = np.unique(np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in pts]))
        lam_prev = self._lambda_pl(pts[0], heads, counts)
        for n in range(1, len(pts)):
            lam_now = self._lambda_pl(pts[n], heads, counts)
            w = pts[n] - pts[n - 1]
            for j in range(d):
                integral[j] += _clamped_linear_integral(lam_prev[j], lam_now[j], w)
            lam_prev = lam_now

    def _lambda_pl(self, t, heads, counts):
        """Unclamped intensity at t (events strictly before t contribute)."""
        lam = self.mu.copy()
        for k in range(self.d):
            lo, hi = heads[k], counts[k]
            if lo == hi:
                continue
            tk = self.series.times[k][lo:hi]
            lags = t - tk
            fm = self.fmat[k][:, lo:hi]
            for j in range(self.d):
                kern = self.model.kernels[j][k]
                if isinstance(kern, ZeroKernel):
                    continue
                lam[j] += float(np.dot(kern(lags), fm[j]))
        return lam


# ---------------------------------------------------------------------------
# Public operations


def _as_intensity_model(model) -> IntensityModel:
    if isinstance(model, IntensityModel):
        return model
    if isinstance(model, HawkesModel):
        return from_hawkes(model)
    if isinstance(model, NystromSolution):
        return from_solution(model)
    raise ConfigError("expected a HawkesModel, NystromSolution, or IntensityModel")


def reconstruct_intensity(series: EventSeries, model) -> list:
    """Intensity (left limit) at each component's own event times."""
    imodel = _as_intensity_model(model)
    _, lams = _Sweep(series, imodel).run(want_lambdas=True)
    return lams


@dataclass(frozen=True)
class ResidualSet:
    """Rescaled inter-event times of one component with test summaries.

    ``ks_stat``/``ks_pvalue`` are NaN with ``refused=True`` below 100 events
    (the asymptotic test has no power there); Q-Q pairs are emitted
    regardless.  ``n_zero`` counts nonpositive taus (intensity identically
    zero across an inter-event interval).
    """

    component: int
    taus: np.ndarray
    ks_stat: float
    ks_pvalue: float
    refused: bool
    qq_theoretical: np.ndarray
    qq_empirical: np.ndarray
    n_zero: int

    @property
    def mean(self):
        return float(np.mean(self.taus)) if self.taus.size else float("nan")


@dataclass(frozen=True)
class ResidualReport:
    sets: tuple

    def to_text(self):
        lines = []
        for s in self.sets:
            if s.refused:
                verdict = "KS refused (fewer than 100 events)"
            else:
                verdict = f"KS stat {s.ks_stat:.4f} p-value {s.ks_pvalue:.4g}"
            lines.append(
                f"component {s.component + 1}: n={s.taus.size} mean_tau={s.mean:.4f} "
                f"zero_taus={s.n_zero} {verdict}"
            )
        return "\n".join(lines)


def _residual_set(component, taus) -> ResidualSet:
    taus = np.asarray(taus, dtype=float)
    n = taus.size
    srt = np.sort(taus)
    theo = -np.log1p(-(np.arange(1, n + 1) - 0.5) / n) if n else np.empty(0)
    n_zero = int(np.sum(taus <= 0.0))
    if n < _MIN_EVENTS_FOR_KS:
        return ResidualSet(component, taus, float("nan"), float("nan"), True, theo, srt, n_zero)
    emp_cdf = np.arange(1, n + 1) / n
    model_cdf = -np.expm1(-srt)
    d_stat = float(np.max(np.maximum(np.abs(emp_cdf - model_cdf),
                                     np.abs(emp_cdf - 1.0 / n - model_cdf))))
    p = float(kolmogorov(math.sqrt(n) * d_stat))
    return ResidualSet(component, taus, d_stat, p, False, theo, srt, n_zero)


def rescale(series: EventSeries, model, tail: int = None) -> ResidualReport:
    """Rescaled inter-event times with KS tests and Q-Q pairs per component.

    ``tail`` keeps only the last so-many inter-event times of each component
    (the full post-burn-in series by default).
    """
    imodel = _as_intensity_model(model)
    taus, _ = _Sweep(series, imodel).run(want_lambdas=False)
    sets = []
    for j in range(series.dimension):
        tj = taus[j]
        if tail is not None and tj.size > tail:
            tj = tj[-tail:]
        sets.append(_residual_set(j, tj))
    return ResidualReport(sets=tuple(sets))


def qq_uniform_deviation(rset: ResidualSet) -> float:
    """Max Q-Q deviation measured on the unit probability scale.

    max_k | (1 - exp(-tau_(k))) - (k - 1/2) / n |: the exponential-quantile
    mismatch mapped through the Exp(1) CDF, so tail order statistics do not
    dominate the diagnostic.
    """
    n = rset.qq_empirical.size
    if n == 0:
        return float("nan")
    emp_u = -np.expm1(-rset.qq_empirical)
    theo_u = (np.arange(1, n + 1) - 0.5) / n
    return float(np.max(np.abs(emp_u - theo_u)))
