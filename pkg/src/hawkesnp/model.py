"""Hawkes model objects: kernels, mark laws, baselines, and analytic summaries.

A model couples a baseline rate vector ``mu`` with a D x D matrix of causal
kernels; component intensities are linear in past jumps, optionally modulated
by per-event marks and clamped at zero for inhibitory (rectified) models.
All objects here are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NormDivergenceError, NumericalError, StabilityError

__all__ = [
    "KernelShape",
    "ExponentialKernel",
    "PowerLawKernel",
    "PiecewiseLinearKernel",
    "SampledKernel",
    "ZeroKernel",
    "MarkDistribution",
    "ExponentialMarks",
    "EmpiricalMarks",
    "MarkFunction",
    "ConstantMark",
    "IdentityMark",
    "PiecewiseConstantMark",
    "MarkSpec",
    "HawkesModel",
    "NormMatrix",
    "kernel_norm",
    "spectral_radius",
    "norm_matrix",
    "mean_rate",
]


# ---------------------------------------------------------------------------
# Kernel shapes


class KernelShape:
    """A causal excitation kernel phi(t) with support contained in [0, inf).

    Subclasses implement vectorized evaluation, exact interval integrals,
    and a nonincreasing majorant of the positive part (used by the thinning
    simulator to build dominating intensities).
    """

    def __call__(self, t):
        raise NotImplementedError

    def norm(self) -> float:
        """Signed L1 mass, integral of phi over [0, inf)."""
        raise NotImplementedError

    def integral(self, a, b):
        """Exact integral of phi over [a, b] (vectorized in a, b)."""
        raise NotImplementedError

    def support(self) -> float:
        """Upper end of the support; may be inf."""
        raise NotImplementedError

    def effective_support(self, mass_tol: float = 1e-3) -> float:
        """Smallest A such that the tail |mass| beyond A is <= mass_tol of the total."""
        raise NotImplementedError

    def envelope(self, t):
        """Nonincreasing majorant of max(phi, 0) over [t, inf), evaluated at t."""
        raise NotImplementedError

    def is_nonnegative(self) -> bool:
        raise NotImplementedError

    def is_nonincreasing(self) -> bool:
        """True when the kernel coincides with its own positive envelope."""
        return False

    def scaled(self, c: float) -> "KernelShape":
        """The kernel c * phi."""
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialKernel(KernelShape):
    """phi(t) = amplitude * exp(-decay * t) for t >= 0."""

    amplitude: float
    decay: float

    def __post_init__(self):
        if not self.decay > 0:
            raise ConfigError("exponential kernel requires decay > 0")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where(t >= 0, self.amplitude * np.exp(-self.decay * np.maximum(t, 0.0)), 0.0)
        return out if out.ndim else float(out)

    def norm(self):
        return self.amplitude / self.decay

    def integral(self, a, b):
        a = np.maximum(np.asarray(a, dtype=float), 0.0)
        b = np.maximum(np.asarray(b, dtype=float), 0.0)
        out = (self.amplitude / self.decay) * (np.exp(-self.decay * a) - np.exp(-self.decay * b))
        return out if out.ndim else float(out)

    def support(self):
        return math.inf

    def effective_support(self, mass_tol=1e-3):
        return math.log(1.0 / mass_tol) / self.decay

    def envelope(self, t):
        if self.amplitude <= 0:
            out = np.zeros_like(np.asarray(t, dtype=float))
            return out if out.ndim else 0.0
        return self(t)

    def is_nonnegative(self):
        return self.amplitude >= 0

    def is_nonincreasing(self):
        return self.amplitude >= 0

    def scaled(self, c):
        return ExponentialKernel(c * self.amplitude, self.decay)


@dataclass(frozen=True)
class PowerLawKernel(KernelShape):
    """phi(t) = amplitude * (offset + t) ** (-exponent) for t >= 0.

    The L1 norm diverges unless exponent > 1.
    """

    amplitude: float
    offset: float
    exponent: float

    def __post_init__(self):
        if not self.offset > 0:
            raise ConfigError("power-law kernel requires offset > 0")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        base = self.offset + np.maximum(t, 0.0)
        if self.exponent == 1.5:
            vals = self.amplitude / (base * np.sqrt(base))
        else:
            vals = self.amplitude * base ** (-self.exponent)
        out = np.where(t >= 0, vals, 0.0)
        return out if out.ndim else float(out)

    def norm(self):
        if self.exponent <= 1:
            raise NormDivergenceError(
                f"power-law kernel with exponent {self.exponent} <= 1 has divergent L1 norm"
            )
        return self.amplitude * self.offset ** (1.0 - self.exponent) / (self.exponent - 1.0)

    def integral(self, a, b):
        if self.exponent == 1.0:
            f = lambda x: self.amplitude * np.log(self.offset + np.maximum(x, 0.0))
        else:
            c = self.amplitude / (1.0 - self.exponent)
            f = lambda x: c * (self.offset + np.maximum(x, 0.0)) ** (1.0 - self.exponent)
        out = f(np.asarray(b, dtype=float)) - f(np.asarray(a, dtype=float))
        return out if np.ndim(out) else float(out)

    def support(self):
        return math.inf

    def effective_support(self, mass_tol=1e-3):
        if self.exponent <= 1:
            raise NormDivergenceError("effective support undefined for divergent power law")
        return self.offset * (mass_tol ** (-1.0 / (self.exponent - 1.0)) - 1.0)

    def envelope(self, t):
        if self.amplitude <= 0:
            out = np.zeros_like(np.asarray(t, dtype=float))
            return out if out.ndim else 0.0
        return self(t)

    def is_nonnegative(self):
        return self.amplitude >= 0

    def is_nonincreasing(self):
        return self.amplitude >= 0

    def scaled(self, c):
        return PowerLawKernel(c * self.amplitude, self.offset, self.exponent)


@dataclass(frozen=True)
class PiecewiseLinearKernel(KernelShape):
    """Linear interpolation between knots (t_k, v_k); zero outside [t_0, t_last].

    Knots must be strictly increasing in t with t_0 >= 0 (causality).
    """

    knots: tuple

    def __post_init__(self):
        knots = tuple((float(t), float(v)) for t, v in self.knots)
        object.__setattr__(self, "knots", knots)
        ts = np.array([t for t, _ in knots])
        vs = np.array([v for _, v in knots])
        if len(ts) < 2:
            raise ConfigError("piecewise-linear kernel needs at least two knots")
        if not np.all(np.diff(ts) > 0):
            raise ConfigError("piecewise-linear knots must be strictly increasing in t")
        if ts[0] < 0:
            raise ConfigError("piecewise-linear kernel support must lie in [0, inf)")
        if not np.all(np.isfinite(vs)):
            raise ConfigError("piecewise-linear knot values must be finite")
        object.__setattr__(self, "_ts", ts)
        object.__setattr__(self, "_vs", vs)
        # Step-function majorant: on [t_k, t_{k+1}) the future positive max is
        # bounded by the suffix max of clipped knot values from index k on.
        suffix = np.maximum.accumulate(np.maximum(vs, 0.0)[::-1])[::-1]
        object.__setattr__(self, "_env", suffix)
        seg = 0.5 * (vs[1:] + vs[:-1]) * np.diff(ts)
        object.__setattr__(self, "_prefix", np.concatenate([[0.0], np.cumsum(seg)]))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self._ts, self._vs, left=0.0, right=0.0)
        inside = (t >= self._ts[0]) & (t <= self._ts[-1])
        out = np.where(inside, out, 0.0)
        return out if out.ndim else float(out)

    def norm(self):
        return float(self._prefix[-1])

    def _primitive(self, x):
        """Exact integral of phi over [t_0, clip(x)]."""
        x = np.clip(np.asarray(x, dtype=float), self._ts[0], self._ts[-1])
        idx = np.clip(np.searchsorted(self._ts, x, side="right") - 1, 0, len(self._ts) - 2)
        t0 = self._ts[idx]
        v0 = self._vs[idx]
        slope = (self._vs[idx + 1] - v0) / (self._ts[idx + 1] - t0)
        dx = x - t0
        return self._prefix[idx] + v0 * dx + 0.5 * slope * dx * dx

    def integral(self, a, b):
        out = self._primitive(b) - self._primitive(a)
        return out if np.ndim(out) else float(out)

    def support(self):
        return float(self._ts[-1])

    def effective_support(self, mass_tol=1e-3):
        return self.support()

    def envelope(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self._ts, t, side="right") - 1, 0, len(self._ts) - 1)
        out = np.where(t >= self._ts[-1], 0.0, self._env[idx])
        out = np.where(t < self._ts[0], self._env[0], out)
        return out if out.ndim else float(out)

    def is_nonnegative(self):
        return bool(np.all(self._vs >= 0))

    def is_nonincreasing(self):
        return bool(np.all(self._vs >= 0) and np.all(np.diff(self._vs) <= 0) and self._ts[0] == 0.0)

    def scaled(self, c):
        return PiecewiseLinearKernel(tuple((t, c * v) for t, v in self.knots))


@dataclass(frozen=True)
class SampledKernel(KernelShape):
    """Kernel given by values on a uniform grid, linearly interpolated.

    ``start`` is the time of the first sample; zero outside the grid range.
    """

    start: float
    step: float
    values: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if not self.step > 0:
            raise ConfigError("sampled kernel requires step > 0")
        if self.start < 0:
            raise ConfigError("sampled kernel support must lie in [0, inf)")
        if not np.all(np.isfinite(vals)):
            raise ConfigError("sampled kernel values must be finite")
        if len(vals) < 2:
            raise ConfigError("sampled kernel needs at least two values")
        object.__setattr__(self, "values", tuple(float(v) for v in vals))
        ts = self.start + self.step * np.arange(len(vals))
        object.__setattr__(self, "_pl", PiecewiseLinearKernel(tuple(zip(ts, vals))))

    def __call__(self, t):
        return self._pl(t)

    def norm(self):
        return self._pl.norm()

    def integral(self, a, b):
        return self._pl.integral(a, b)

    def support(self):
        return self._pl.support()

    def effective_support(self, mass_tol=1e-3):
        return self._pl.support()

    def envelope(self, t):
        return self._pl.envelope(t)

    def is_nonnegative(self):
        return self._pl.is_nonnegative()

    def is_nonincreasing(self):
        return self._pl.is_nonincreasing()

    def scaled(self, c):
        return SampledKernel(self.start, self.step, tuple(c * v for v in self.values))


@dataclass(frozen=True)
class ZeroKernel(KernelShape):
    """The identically-zero kernel."""

    def __call__(self, t):
        out = np.zeros_like(np.asarray(t, dtype=float))
        return out if out.ndim else 0.0

    def norm(self):
        return 0.0

    def integral(self, a, b):
        out = np.zeros(np.broadcast(np.asarray(a), np.asarray(b)).shape)
        return out if out.ndim else 0.0

    def support(self):
        return 0.0

    def effective_support(self, mass_tol=1e-3):
        return 0.0

    def envelope(self, t):
        out = np.zeros_like(np.asarray(t, dtype=float))
        return out if out.ndim else 0.0

    def is_nonnegative(self):
        return True

    def is_nonincreasing(self):
        return True

    def scaled(self, c):
        return ZeroKernel()


# ---------------------------------------------------------------------------
# Mark distributions and mark functions


class MarkDistribution:
    """Law of the iid marks attached to one component's events."""

    def prob_in(self, a: float, b: float) -> float:
        raise NotImplementedError

    def mean_in(self, a: float, b: float) -> float:
        """E[xi * 1{a < xi <= b}]."""
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def sample(self, rng, size=None):
        raise NotImplementedError

    def expect(self, f: "MarkFunction") -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialMarks(MarkDistribution):
    """Exponential mark law with the given mean, supported on [0, inf)."""

    mean_value: float

    def __post_init__(self):
        if not self.mean_value > 0:
            raise ConfigError("exponential mark law requires a positive mean")

    def _cdf(self, x):
        return -np.expm1(-np.maximum(x, 0.0) / self.mean_value)

    def prob_in(self, a, b):
        return float(self._cdf(b) - self._cdf(a))

    def mean_in(self, a, b):
        m = self.mean_value

        def g(x):
            if x == math.inf:
                return 0.0
            x = max(x, 0.0)
            return (x + m) * math.exp(-x / m)

        return g(a) - g(b)

    def mean(self):
        return self.mean_value

    def sample(self, rng, size=None):
        return rng.exponential(self.mean_value, size=size)

    def expect(self, f):
        return f.expect_under(self)


@dataclass(frozen=True)
class EmpiricalMarks(MarkDistribution):
    """Resamples uniformly from an observed sample of marks."""

    sample_values: tuple

    def __post_init__(self):
        vals = np.asarray(self.sample_values, dtype=float)
        if vals.size == 0:
            raise ConfigError("empirical mark law needs a nonempty sample")
        object.__setattr__(self, "sample_values", tuple(float(v) for v in vals))
        object.__setattr__(self, "_arr", vals)

    def prob_in(self, a, b):
        return float(np.mean((self._arr > a) & (self._arr <= b)))

    def mean_in(self, a, b):
        sel = (self._arr > a) & (self._arr <= b)
        return float(np.sum(self._arr[sel])) / self._arr.size

    def mean(self):
        return float(np.mean(self._arr))

    def sample(self, rng, size=None):
        idx = rng.integers(0, self._arr.size, size=size)
        return self._arr[idx]

    def expect(self, f):
        return float(np.mean(f(self._arr)))


class MarkFunction:
    """Positive function f(xi) modulating the excitation of a marked event.

    The normalization convention E[f(xi)] = 1 is enforced when a MarkSpec is
    built; ``rescaled`` returns the function divided by the given factor.
    """

    def __call__(self, x):
        raise NotImplementedError

    def expect_under(self, dist: MarkDistribution) -> float:
        raise NotImplementedError

    def rescaled(self, factor: float) -> "MarkFunction":
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantMark(MarkFunction):
    value: float = 1.0

    def __call__(self, x):
        out = np.full_like(np.asarray(x, dtype=float), self.value)
        return out if out.ndim else float(self.value)

    def expect_under(self, dist):
        return self.value

    def rescaled(self, factor):
        return ConstantMark(self.value / factor)


@dataclass(frozen=True)
class IdentityMark(MarkFunction):
    """f(xi) = scale * xi; the scale absorbs the E[f] = 1 normalization."""

    scale: float = 1.0

    def __call__(self, x):
        out = self.scale * np.asarray(x, dtype=float)
        return out if out.ndim else float(out)

    def expect_under(self, dist):
        return self.scale * dist.mean()

    def rescaled(self, factor):
        return IdentityMark(self.scale / factor)


@dataclass(frozen=True)
class PiecewiseConstantMark(MarkFunction):
    """Constant level per mark bin; marks outside the edges clamp to end bins.

    ``edges`` has one more entry than ``levels``; levels must be >= 0.
    """

    edges: tuple
    levels: tuple

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        levels = np.asarray(self.levels, dtype=float)
        if len(edges) != len(levels) + 1:
            raise ConfigError("piecewise-constant mark function needs len(edges) == len(levels) + 1")
        if not np.all(np.diff(edges) > 0):
            raise ConfigError("mark bin edges must be strictly increasing")
        if np.any(levels < 0):
            raise ConfigError("mark function levels must be >= 0")
        object.__setattr__(self, "edges", tuple(float(e) for e in edges))
        object.__setattr__(self, "levels", tuple(float(v) for v in levels))
        object.__setattr__(self, "_edges", edges)
        object.__setattr__(self, "_levels", levels)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(self._edges, x, side="right") - 1, 0, len(self._levels) - 1)
        out = self._levels[idx]
        return out if out.ndim else float(out)

    def expect_under(self, dist):
        edges = list(self._edges)
        # Clamping sends the tails into the end bins.
        lo = [-math.inf] + edges[1:-1] + [math.inf]
        total = 0.0
        for k in range(len(self._levels)):
            total += self._levels[k] * dist.prob_in(lo[k], lo[k + 1])
        return total

    def rescaled(self, factor):
        return PiecewiseConstantMark(self.edges, tuple(v / factor for v in self._levels))


@dataclass(frozen=True)
class MarkSpec:
    """Mark law of one component plus its column of mark functions.

    ``influences[i]`` is f^{i,j} for this component j.  Functions are rescaled
    at construction so that E[f(xi)] = 1 under ``distribution``; the applied
    factors are recorded in ``normalization_factors``.
    """

    distribution: MarkDistribution
    influences: tuple
    normalization_factors: tuple = field(default=(), compare=False)

    def __post_init__(self):
        fixed = []
        factors = []
        for f in self.influences:
            e = f.expect_under(self.distribution)
            if not e > 0:
                raise ConfigError("mark function has nonpositive expectation; cannot normalize")
            if abs(e - 1.0) > 1e-6:
                f = f.rescaled(e)
                factors.append(e)
            else:
                factors.append(1.0)
            fixed.append(f)
        object.__setattr__(self, "influences", tuple(fixed))
        object.__setattr__(self, "normalization_factors", tuple(factors))


# ---------------------------------------------------------------------------
# The model


@dataclass(frozen=True)
class HawkesModel:
    """Baselines, kernel matrix, optional marks, and the rectifier flag.

    ``kernels[i][j]`` maps past events of component j onto the intensity of
    component i.  ``marks[j]`` is a MarkSpec (or None for an unmarked
    component) whose influences are indexed by the target component i.
    With ``rectified`` the intensity is (mu + sum) clamped at zero, which
    permits negative kernel values and negative baselines.
    """

    baselines: tuple
    kernels: tuple
    marks: tuple = None
    rectified: bool = False

    def __post_init__(self):
        mu = tuple(float(m) for m in self.baselines)
        d = len(mu)
        if d < 1:
            raise ConfigError("model dimension must be >= 1")
        kernels = tuple(tuple(row) for row in self.kernels)
        if len(kernels) != d or any(len(row) != d for row in kernels):
            raise ConfigError("kernel matrix must be D x D")
        marks = self.marks if self.marks is not None else (None,) * d
        marks = tuple(marks)
        if len(marks) != d:
            raise ConfigError("marks must have one entry per component")
        for spec in marks:
            if spec is not None and len(spec.influences) != d:
                raise ConfigError("mark influences must have one entry per target component")
        if not self.rectified:
            if any(m < 0 for m in mu):
                raise ConfigError("negative baselines require rectified=True")
            for row in kernels:
                for k in row:
                    if not k.is_nonnegative():
                        raise ConfigError("negative-valued kernels require rectified=True")
        object.__setattr__(self, "baselines", mu)
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "marks", marks)

    @property
    def dimension(self):
        return len(self.baselines)

    def kernel(self, i, j) -> KernelShape:
        return self.kernels[i][j]

    def mark_function(self, i, j) -> MarkFunction:
        spec = self.marks[j]
        if spec is None:
            return ConstantMark(1.0)
        return spec.influences[i]

    def is_marked(self, j) -> bool:
        return self.marks[j] is not None

    def max_effective_support(self, mass_tol=1e-3) -> float:
        return max(
            (k.effective_support(mass_tol) for row in self.kernels for k in row),
            default=0.0,
        )


@dataclass(frozen=True)
class NormMatrix:
    """Matrix of signed kernel L1 norms together with its spectral radius."""

    matrix: np.ndarray
    rho: float

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


# ---------------------------------------------------------------------------
# Operations


def kernel_norm(kernel: KernelShape) -> float:
    """Signed integral of the kernel over [0, inf).

    Closed form for exponential and power-law shapes, exact piecewise
    integration for piecewise-linear shapes, trapezoid rule (exact for the
    interpolant) for sampled shapes.
    """
    return float(kernel.norm())


def spectral_radius(matrix, tol: float = 1e-10, max_iter: int = 100_000) -> float:
    """Largest eigenvalue modulus by power iteration with a deterministic start.

    For entrywise nonnegative matrices the iteration runs on ``matrix + I``
    (the identity shift makes periodic patterns, e.g. circular dependence,
    primitive without moving the dominant eigenvector) and 1 is subtracted
    from the converged value.  Matrices with negative entries are iterated
    directly and may legitimately fail to converge, which raises.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError("spectral_radius expects a square matrix")
    if not np.all(np.isfinite(a)):
        raise ConfigError("spectral_radius expects finite entries")
    n = a.shape[0]
    if n == 1:
        return abs(float(a[0, 0]))
    shift = 1.0 if np.all(a >= 0) else 0.0
    b = a + shift * np.eye(n)
    x = np.ones(n) / math.sqrt(n)
    for _ in range(max_iter):
        y = b @ x
        lam = float(np.linalg.norm(y))
        if lam == 0.0:
            return 0.0
        # Eigenpair residual; the +/- form tolerates a negative dominant value.
        res = min(float(np.linalg.norm(y - lam * x)), float(np.linalg.norm(y + lam * x)))
        x = y / lam
        if res <= tol * max(1.0, lam):
            return abs(lam - shift)
    raise NumericalError(
        "power iteration did not converge; the dominant eigenvalue may be complex"
    )


def norm_matrix(model: HawkesModel) -> NormMatrix:
    """Norm matrix ||phi^{ij}|| of a model and its spectral radius."""
    d = model.dimension
    m = np.array([[kernel_norm(model.kernels[i][j]) for j in range(d)] for i in range(d)])
    return NormMatrix(m, spectral_radius(m))


def mean_rate(model: HawkesModel) -> np.ndarray:
    """Stationary mean event rates Lambda = (I - ||Phi||)^{-1} mu.

    Raises StabilityError (carrying the spectral radius) when the model has
    no stationary regime.
    """
    nm = norm_matrix(model)
    if nm.rho >= 1:
        raise StabilityError(nm.rho)
    d = model.dimension
    rhs = np.asarray(model.baselines, dtype=float)
    return np.linalg.solve(np.eye(d) - nm.matrix, rhs)
