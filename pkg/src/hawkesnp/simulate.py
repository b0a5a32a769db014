"""Event-stream generation by Ogata-style thinning.

Candidate jump times are drawn from an exponential clock at the dominating
rate B, then accepted with probability lambda_total / B.  For monotone
decreasing kernels B is the usual left-limit intensity sum; for non-monotone
kernels each past event contributes the *remaining maximum* of its kernel
over the future, so the bound dominates the true intensity between any two
candidates (it is refreshed at every candidate).

Randomness comes from numpy's Philox counter-based bit generator seeded with
``SimConfig.seed``: the same (model, config) pair always reproduces the same
event stream byte for byte.

Exponential kernels use the O(1) state recursion; every other shape keeps a
sliding window of recent source events whose length is the kernel's effective
support at ``SimConfig.window_tol`` relative tail mass (exact for kernels
with finite support).
"""

from __future__ import annotations

import math
import warnings
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DivergenceError, StabilityError
from .events import EventSeries
from .model import (
    ConstantMark,
    ExponentialKernel,
    HawkesModel,
    IdentityMark,
    PiecewiseConstantMark,
    ZeroKernel,
    norm_matrix,
)

__all__ = ["SimConfig", "simulate"]

_CHUNK = 1 << 14


@dataclass(frozen=True)
class SimConfig:
    """Simulation horizon, seed, and the discarded stationarization prefix.

    ``burn_in=None`` defaults to 10x the largest effective kernel support.
    The simulator runs on [0, burn_in + horizon], drops the prefix, and
    shifts times so the output series lives on [0, horizon].
    """

    horizon: float
    seed: int = 0
    burn_in: float = None
    max_events: int = 20_000_000
    window_tol: float = 1e-3
    check_bound: bool = False

    def __post_init__(self):
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if self.burn_in is not None and self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")


class _RngBuffer:
    """Chunked draws from a Philox generator (cheaper than per-call numpy)."""

    def __init__(self, seed):
        self.gen = np.random.Generator(np.random.Philox(seed))
        self._exp = self.gen.standard_exponential(_CHUNK)
        self._uni = self.gen.random(_CHUNK)
        self._ie = 0
        self._iu = 0

    def expovariate(self):
        if self._ie == _CHUNK:
            self._exp = self.gen.standard_exponential(_CHUNK)
            self._ie = 0
        v = self._exp[self._ie]
        self._ie += 1
        return v

    def uniform(self):
        if self._iu == _CHUNK:
            self._uni = self.gen.random(_CHUNK)
            self._iu = 0
        v = self._uni[self._iu]
        self._iu += 1
        return v


class _WindowBuffer:
    """Growable per-component store of recent event times and mark factors."""

    def __init__(self, dim, cap=1024):
        self.times = np.empty(cap, dtype=float)
        self.fvals = np.empty((dim, cap), dtype=float)
        self.lo = 0
        self.hi = 0

    def append(self, t, fv):
        if self.hi == self.times.size:
            self._compact_or_grow()
        self.times[self.hi] = t
        self.fvals[:, self.hi] = fv
        self.hi += 1

    def _compact_or_grow(self):
        n = self.hi - self.lo
        if self.lo > self.times.size // 2:
            self.times[:n] = self.times[self.lo : self.hi]
            self.fvals[:, :n] = self.fvals[:, self.lo : self.hi]
        else:
            cap = max(2 * self.times.size, n + 1)
            new_t = np.empty(cap, dtype=float)
            new_f = np.empty((self.fvals.shape[0], cap), dtype=float)
            new_t[:n] = self.times[self.lo : self.hi]
            new_f[:, :n] = self.fvals[:, self.lo : self.hi]
            self.times, self.fvals = new_t, new_f
        self.lo, self.hi = 0, n

    def trim(self, cutoff):
        lo = self.lo
        t = self.times
        while lo < self.hi and t[lo] < cutoff:
            lo += 1
        self.lo = lo

    def view(self):
        return self.times[self.lo : self.hi], self.fvals[:, self.lo : self.hi]


def _scalar_mark_fn(f):
    """Plain-float evaluation of a mark function (hot-loop friendly)."""
    if isinstance(f, ConstantMark):
        v = f.value
        return lambda x: v
    if isinstance(f, IdentityMark):
        s = f.scale
        return lambda x: s * x
    if isinstance(f, PiecewiseConstantMark):
        edges = list(f.edges)[1:-1]
        levels = list(f.levels)
        last = len(levels) - 1
        return lambda x: levels[min(bisect_right(edges, x), last)]
    return lambda x: float(f(x))


def simulate(model: HawkesModel, config: SimConfig, return_intensities: bool = False):
    """Draw one realization of the model on [0, horizon].

    Returns an EventSeries; with ``return_intensities`` also returns, per
    component, the true intensity (left limit) at each accepted event of that
    component, aligned with the output times.

    Raises StabilityError for an unrectified model with spectral radius >= 1
    (rectified models only warn) and DivergenceError past ``max_events``.
    """
    d = model.dimension
    rho = norm_matrix(model).rho
    if rho >= 1:
        if model.rectified:
            warnings.warn(f"rectified model with spectral radius {rho:.4g} >= 1")
        else:
            raise StabilityError(rho)

    burn = config.burn_in
    if burn is None:
        burn = 10.0 * model.max_effective_support(1e-2)
    t_end = burn + config.horizon

    rng = _RngBuffer(config.seed)
    mu = [float(m) for m in model.baselines]
    mu_pos_sum = sum(max(m, 0.0) for m in mu)

    # Per source component j: list of exponential pairs and window pairs.
    exp_pairs = [[] for _ in range(d)]  # (i, alpha, decay)
    win_pairs = [[] for _ in range(d)]  # (i, kernel)
    win_len = [0.0] * d
    for i in range(d):
        for j in range(d):
            k = model.kernels[i][j]
            if isinstance(k, ZeroKernel):
                continue
            if isinstance(k, ExponentialKernel):
                exp_pairs[j].append((i, k.amplitude, k.decay))
            else:
                win_pairs[j].append((i, k, k.is_nonincreasing()))
                win_len[j] = max(win_len[j], min(k.effective_support(config.window_tol), t_end))

    exp_state = [[0.0] * d for _ in range(d)]  # exp_state[i][j]
    windows = [_WindowBuffer(d) if win_pairs[j] else None for j in range(d)]
    mark_dists = [model.marks[j].distribution if model.marks[j] is not None else None for j in range(d)]
    mark_fns = [[_scalar_mark_fn(model.mark_function(i, j)) for i in range(d)] for j in range(d)]

    out_times = [[] for _ in range(d)]
    out_marks = [[] for _ in range(d)]
    out_lams = [[] for _ in range(d)] if return_intensities else None

    lam = [0.0] * d

    def refresh(t):
        """True intensities lam[.] at time t (left limit) and the dominating bound."""
        bound = mu_pos_sum
        for i in range(d):
            lam[i] = mu[i]
        for j in range(d):
            for (i, alpha, _dec) in exp_pairs[j]:
                s = exp_state[i][j]
                lam[i] += s
                if alpha > 0:
                    bound += s
            if windows[j] is not None:
                wb = windows[j]
                wb.trim(t - win_len[j])
                ts, fv = wb.view()
                if ts.size:
                    lags = t - ts
                    for (i, kern, noninc) in win_pairs[j]:
                        f = fv[i]
                        contrib = float(np.dot(kern(lags), f))
                        lam[i] += contrib
                        # A nonincreasing positive kernel is its own envelope.
                        if noninc:
                            bound += contrib
                        else:
                            bound += float(np.dot(kern.envelope(lags), f))
        if model.rectified:
            for i in range(d):
                if lam[i] < 0.0:
                    lam[i] = 0.0
        return bound

    def decay_states(dt):
        for j in range(d):
            for (i, _alpha, dec) in exp_pairs[j]:
                exp_state[i][j] *= math.exp(-dec * dt)

    t = 0.0
    bound = refresh(0.0)
    n_total = 0
    while True:
        if bound <= 0.0:
            break
        dt = rng.expovariate() / bound
        t_cand = t + dt
        if t_cand > t_end:
            break
        decay_states(dt)
        b_at_cand = refresh(t_cand)
        lam_tot = math.fsum(lam)
        if config.check_bound and lam_tot > bound * (1.0 + 1e-9) + 1e-12:
            raise AssertionError(
                f"dominating bound violated: lambda {lam_tot} > bound {bound} at t={t_cand}"
            )
        u = rng.uniform() * bound
        t = t_cand
        if u < lam_tot:
            acc = 0.0
            comp = d - 1
            for i in range(d):
                acc += lam[i]
                if u < acc:
                    comp = i
                    break
            n_total += 1
            if n_total > config.max_events:
                raise DivergenceError(
                    f"event cap {config.max_events} exceeded (spectral radius {rho:.4g})"
                )
            out_times[comp].append(t)
            if out_lams is not None:
                out_lams[comp].append(lam[comp])
            if mark_dists[comp] is not None:
                xi = float(mark_dists[comp].sample(rng.gen))
                out_marks[comp].append(xi)
                fv = [float(mark_fns[comp][i](xi)) for i in range(d)]
            else:
                fv = None
            for (i, alpha, _dec) in exp_pairs[comp]:
                exp_state[i][comp] += alpha * (fv[i] if fv is not None else 1.0)
            if windows[comp] is not None:
                windows[comp].append(
                    t, np.array(fv) if fv is not None else np.ones(d)
                )
            bound = refresh(t)
        else:
            bound = b_at_cand

    times, marks, lams = [], [], []
    for j in range(d):
        tj = np.asarray(out_times[j], dtype=float)
        keep = tj > burn
        times.append(tj[keep] - burn)
        if mark_dists[j] is not None:
            marks.append(np.asarray(out_marks[j], dtype=float)[keep])
        else:
            marks.append(None)
        if out_lams is not None:
            lams.append(np.asarray(out_lams[j], dtype=float)[keep])
    series = EventSeries(times=tuple(times), marks=tuple(marks), horizon=config.horizon)
    if return_intensities:
        return series, lams
    return series
