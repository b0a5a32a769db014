"""Ground-truth second-order statistics computed from a known model.

This is the independent reference path for every estimator: the conditional
law density g is built from the model's kernel matrix by summing the Neumann
series Psi = sum_k Phi^{(*k)} with discrete trapezoid convolutions, entirely
bypassing simulation and the Wiener-Hopf solver.

For t != 0 (dropping the Dirac terms),

    g(t) = Psi(t) + Sigma Psi^T(-t) Sigma^{-1} + (Psi * Sigma Psi~^T)(t) Sigma^{-1}

with Sigma = diag(Lambda) and Psi~(t) = Psi(-t).  Both signs of t are
computed directly, so the symmetry Lambda^i g^{ji}(t) = Lambda^j g^{ij}(-t)
is a genuine numerical check rather than a definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.fft import irfft, rfft

from .errors import ConfigError, NumericalError
from .model import (
    ConstantMark,
    HawkesModel,
    PiecewiseConstantMark,
    mean_rate,
    spectral_radius,
)

__all__ = [
    "OracleGrid",
    "neumann_psi",
    "oracle_g",
    "marked_equivalent",
    "ExpansionMap",
    "psi_identity_residual",
    "oracle_condlaw_table",
    "marked_oracle_condlaw_table",
]


@dataclass(frozen=True)
class OracleGrid:
    """Psi and g sampled on a uniform grid t_k = k * step, k = 0..n-1.

    ``g_pos[i, j, k]`` holds g^{ij}(t_k); ``g_neg[i, j, k]`` holds
    g^{ij}(-t_k).  ``rates`` is the stationary rate vector used for the
    symmetry terms.
    """

    step: float
    t: np.ndarray
    psi: np.ndarray
    g_pos: np.ndarray
    g_neg: np.ndarray
    rates: np.ndarray

    def value(self, i, j, at):
        """Linear interpolation of g^{ij} at signed lags ``at``."""
        at = np.asarray(at, dtype=float)
        pos = np.interp(np.abs(at), self.t, self.g_pos[i, j], right=0.0)
        neg = np.interp(np.abs(at), self.t, self.g_neg[i, j], right=0.0)
        out = np.where(at >= 0, pos, neg)
        return out if out.ndim else float(out)


def _trap_conv(fa, fb, a, b, step, n, nfft):
    """Trapezoid-corrected causal convolution from precomputed rffts."""
    full = irfft(fa * fb, nfft)[:n] * step
    return full - 0.5 * step * (a[0] * b + b[0] * a)


def neumann_psi(phi: np.ndarray, step: float, tol: float = 1e-10, max_iter: int = 5000):
    """Total response Psi = sum_{k>=1} Phi^{(*k)} on the sampling grid of phi.

    ``phi`` has shape (D, D, N).  Iterates Psi <- Phi + Phi * Psi with
    discrete trapezoid matrix convolution until the sup change is below
    ``tol``; convergence is geometric in the spectral radius.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 3 or phi.shape[0] != phi.shape[1]:
        raise ConfigError("phi must have shape (D, D, N)")
    d, _, n = phi.shape
    # The series only sums to an L1 function under the stability hypothesis;
    # on a finite grid the iteration would still converge pointwise, so the
    # divergent case must be rejected explicitly.
    norms = np.trapezoid(phi, dx=step, axis=-1)
    rho = spectral_radius(np.abs(norms))
    if rho >= 1:
        raise NumericalError(
            f"Neumann series diverges: sampled-kernel spectral radius {rho:.4g} >= 1"
        )
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    fphi = rfft(phi, nfft, axis=-1)
    psi = phi.copy()
    for _ in range(max_iter):
        fpsi = rfft(psi, nfft, axis=-1)
        conv = irfft(np.einsum("ikf,kjf->ijf", fphi, fpsi), nfft, axis=-1)[..., :n] * step
        conv -= 0.5 * step * (
            np.einsum("ik,kjt->ijt", phi[:, :, 0], psi)
            + np.einsum("ikt,kj->ijt", phi, psi[:, :, 0])
        )
        new = phi + conv
        change = float(np.max(np.abs(new - psi)))
        psi = new
        if change < tol:
            return psi
    raise NumericalError(
        f"Neumann iteration did not converge within {max_iter} steps "
        "(spectral radius likely >= 1)"
    )


def psi_identity_residual(phi, psi, step):
    """Sup norm of Phi + Phi * Psi - Psi (zero when Psi solves the identity)."""
    d, _, n = phi.shape
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    fphi = rfft(phi, nfft, axis=-1)
    fpsi = rfft(psi, nfft, axis=-1)
    conv = irfft(np.einsum("ikf,kjf->ijf", fphi, fpsi), nfft, axis=-1)[..., :n] * step
    conv -= 0.5 * step * (
        np.einsum("ik,kjt->ijt", phi[:, :, 0], psi)
        + np.einsum("ikt,kj->ijt", phi, psi[:, :, 0])
    )
    return float(np.max(np.abs(phi + conv - psi)))


def oracle_g(model: HawkesModel, t_max: float, step: float, tol: float = 1e-10) -> OracleGrid:
    """Sample the conditional-law density g of a stable model on [-t_max, t_max].

    The grid must be long enough for Psi to have decayed at t_max; halving
    ``step`` should change the result at the trapezoid order O(step^2).
    """
    if not (t_max > 0 and step > 0):
        raise ConfigError("t_max and step must be positive")
    d = model.dimension
    n = int(np.floor(t_max / step)) + 1
    t = step * np.arange(n)
    phi = np.empty((d, d, n))
    for i in range(d):
        for j in range(d):
            phi[i, j] = model.kernels[i][j](t)
    rates = mean_rate(model)
    psi = neumann_psi(phi, step, tol=tol)

    # Cross-correlation X^{ij}(tau) = sum_a Lambda_a int psi_ia(u) psi_ja(u - tau) du,
    # evaluated for both signs of tau by FFT correlation with trapezoid ends.
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    fpsi = rfft(psi, nfft, axis=-1)
    lam = rates
    x_pos = np.empty((d, d, n))
    x_neg = np.empty((d, d, n))
    for i in range(d):
        for j in range(d):
            spec = np.zeros(fpsi.shape[-1], dtype=complex)
            for a in range(d):
                spec += lam[a] * fpsi[i, a] * np.conj(fpsi[j, a])
            corr = irfft(spec, nfft)
            pos = corr[:n] * step
            neg = corr[np.arange(0, -n, -1)] * step
            # Trapezoid endpoint correction at u = max(0, tau); far end decayed.
            pos -= 0.5 * step * np.einsum("a,at,a->t", lam, psi[i, :, :], psi[j, :, 0])
            neg -= 0.5 * step * np.einsum("a,a,at->t", lam, psi[i, :, 0], psi[j, :, :])
            x_pos[i, j] = pos
            x_neg[i, j] = neg

    g_pos = psi + x_pos / lam[None, :, None]
    # Index 0 of the negative branch is the 0- limit; g may jump at the origin.
    g_neg = (lam[:, None, None] / lam[None, :, None]) * np.swapaxes(psi, 0, 1) + (
        x_neg / lam[None, :, None]
    )
    return OracleGrid(step=step, t=t, psi=psi, g_pos=g_pos, g_neg=g_neg, rates=rates)


def _oracle_estimate(i, j, l, t, values, rate):
    from .condlaw import CondLawEstimate, _trapz_cumulative

    return CondLawEstimate(
        i=i, j=j, bin=l, t=t, values=values,
        primitive=_trapz_cumulative(values, float(t[1] - t[0])),
        rate=float(rate), h=0.0, count=0,
    )


def oracle_condlaw_table(grid: OracleGrid, t_max: float):
    """Exact-g conditional-law table (unmarked) for oracle-fed solver runs."""
    from .condlaw import CondLawTable
    from .events import MarkBins

    if t_max > grid.t[-1]:
        raise ConfigError("oracle grid shorter than requested t_max")
    d = grid.g_pos.shape[0]
    n = int(np.floor(t_max / grid.step + 1e-9))
    t = grid.t[: n + 1]
    estimates = {}
    for i in range(d):
        for j in range(d):
            estimates[(i, j, 0)] = _oracle_estimate(
                i, j, 0, t, grid.g_pos[i, j, : n + 1], grid.rates[i]
            )
    return CondLawTable(
        dimension=d, t_max=float(t[-1]), rates=grid.rates,
        bins=MarkBins.trivial(d), estimates=estimates,
    )


def marked_oracle_condlaw_table(model: HawkesModel, t_or: float, step: float, t_max: float):
    """Exact marked table G^{ij}_l from the DM-dimensional expansion.

    Returns (table, expanded_grid, emap); bin probabilities come from the
    model's mark law, rates from the marked model itself.
    """
    from .condlaw import CondLawTable
    from .events import MarkBins

    expanded, emap = marked_equivalent(model)
    grid = oracle_g(expanded, t_or, step)
    gtab = emap.project_g(grid)
    d = model.dimension
    rates = np.array([sum(grid.rates[r] for r in emap.members[j]) for j in range(d)])
    n = int(np.floor(t_max / step + 1e-9))
    t = grid.t[: n + 1]
    edges, probs, counts, clamped = [], [], [], []
    for j in range(d):
        spec = model.marks[j]
        if spec is None or len(emap.members[j]) == 1:
            edges.append(None)
            probs.append(None)
            counts.append(None)
            clamped.append(0)
            continue
        e = None
        for f in spec.influences:
            if isinstance(f, PiecewiseConstantMark):
                e = np.asarray(f.edges)
                break
        edges.append(e)
        probs.append(np.asarray(emap.probs[j]))
        counts.append(None)
        clamped.append(0)
    bins = MarkBins(edges=tuple(edges), probs=tuple(probs), counts=tuple(counts), clamped=tuple(clamped))
    estimates = {}
    for (i, j, l), (pos, _neg) in gtab.items():
        estimates[(i, j, l)] = _oracle_estimate(i, j, l, t, pos[: n + 1], rates[i])
    return (
        CondLawTable(dimension=d, t_max=float(t[-1]), rates=rates, bins=bins, estimates=estimates),
        grid,
        emap,
    )


@dataclass(frozen=True)
class ExpansionMap:
    """Bookkeeping for the DM-dimensional unmarked equivalent of a marked model.

    ``index[(j, l)]`` is the expanded component of original component j and
    mark bin l; ``members[j]`` lists the expanded components of j in bin
    order; ``probs[j]`` are the corresponding bin probabilities.
    """

    index: dict
    members: tuple
    probs: tuple

    def project_g(self, grid: OracleGrid):
        """Collapse the expanded g into the marked table G^{ij}_l.

        Returns dict ``(i, j, l) -> (pos, neg)`` arrays on ``grid.t``:
        G^{ij}_l(t) = sum_m g_exp^{(i,m),(j,l)}(t).
        """
        out = {}
        d = len(self.members)
        for i in range(d):
            rows = self.members[i]
            for j in range(d):
                for l, col in enumerate(self.members[j]):
                    pos = sum(grid.g_pos[r, col] for r in rows)
                    neg = sum(grid.g_neg[r, col] for r in rows)
                    out[(i, j, l)] = (pos, neg)
        return out


def marked_equivalent(model: HawkesModel):
    """Unmarked Hawkes model of dimension sum_j M^j equivalent to a marked one.

    Requires every mark function to be piecewise constant on its component's
    bins (constant functions count as a single bin).  Component j expands
    into sub-components (j, l) with baseline mu^j p^j_l and kernels
    phi_exp[(i,l),(k,m)] = p^i_l f^{ik}_m phi^{ik}.

    Returns (expanded_model, ExpansionMap).
    """
    d = model.dimension
    bins = []
    levels = []  # levels[j][i][m] = f^{ij}_m
    for j in range(d):
        spec = model.marks[j]
        if spec is None:
            bins.append(1)
            levels.append([[1.0]] * d)
            continue
        edges = None
        for f in spec.influences:
            if isinstance(f, PiecewiseConstantMark):
                if edges is None:
                    edges = f.edges
                elif f.edges != edges:
                    raise ConfigError(
                        "mark functions of one component must share the same bins"
                    )
            elif not isinstance(f, ConstantMark):
                raise ConfigError(
                    "marked_equivalent requires piecewise-constant mark functions"
                )
        if edges is None:
            bins.append(1)
            levels.append([[1.0]] * d)
            continue
        m = len(edges) - 1
        bins.append(m)
        lv = []
        for i in range(d):
            f = spec.influences[i]
            if isinstance(f, ConstantMark):
                lv.append([f.value] * m)
            else:
                lv.append(list(f.levels))
        levels.append(lv)

    probs = []
    for j in range(d):
        spec = model.marks[j]
        if spec is None or bins[j] == 1:
            probs.append([1.0])
            continue
        edges = None
        for f in spec.influences:
            if isinstance(f, PiecewiseConstantMark):
                edges = list(f.edges)
                break
        # End bins absorb the tails (clamping convention).
        lo = [-np.inf] + edges[1:-1] + [np.inf]
        probs.append([spec.distribution.prob_in(lo[k], lo[k + 1]) for k in range(bins[j])])

    index = {}
    members = []
    pos = 0
    for j in range(d):
        mem = []
        for l in range(bins[j]):
            index[(j, l)] = pos
            mem.append(pos)
            pos += 1
        members.append(tuple(mem))
    dim_exp = pos

    mu_exp = np.empty(dim_exp)
    kernels_exp = [[None] * dim_exp for _ in range(dim_exp)]
    for j in range(d):
        for l in range(bins[j]):
            r = index[(j, l)]
            mu_exp[r] = model.baselines[j] * probs[j][l]
            for k in range(d):
                base = model.kernels[j][k]
                for m in range(bins[k]):
                    c = index[(k, m)]
                    kernels_exp[r][c] = base.scaled(probs[j][l] * levels[k][j][m])

    expanded = HawkesModel(
        baselines=tuple(mu_exp),
        kernels=tuple(tuple(row) for row in kernels_exp),
        marks=None,
        rectified=model.rectified,
    )
    emap = ExpansionMap(
        index=index,
        members=tuple(members),
        probs=tuple(tuple(p) for p in probs),
    )
    return expanded, emap
