"""Nystrom discretization and solution of the marked Wiener-Hopf systems.

For each target component i the unknown vector stacks phi^{ik}_m(s_q) over
source components k, mark bins m, and Gauss-Legendre nodes s_q on [0, A].
Row (j, l, q) discretizes the integral equation at t = s_q with the kernel

    K_{l,m}^{jk}(u) = p^k_m [ G^{kj}_l(u) 1_{u>0}
                              + (Lam^k / Lam^j) G^{jk}_m(-u) 1_{u<0} ],

split on the diagonal: the regular part (phi(s) - phi(t)) K(t - s) is
discretized by the quadrature (the coincident node drops out exactly), while
the companion term phi(t) * int_0^A K(t - s) ds is evaluated from the
estimated primitives through

    int_0^A K(t - s) ds = p^k_m [ P^{kj}_l(t) + (Lam^k/Lam^j) P^{jk}_m(A - t) ].

The system matrix involves only the conditional-law table (never the target
index i), so one LU factorization serves all D right-hand sides.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import lapack, lu_factor, lu_solve

from .condlaw import CondLawTable
from .errors import ConfigError, IllConditionedError, NumericalError
from .model import spectral_radius

__all__ = [
    "Quadrature",
    "gauss_nodes",
    "WHSystem",
    "assemble",
    "solve",
    "solve_all",
    "finalize",
    "NystromSolution",
    "resample",
    "select_Q",
    "QSelection",
]


@dataclass(frozen=True)
class Quadrature:
    """Gauss-Legendre nodes and weights mapped onto [0, interval]."""

    count: int
    interval: float
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for name in ("nodes", "weights"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def gauss_nodes(count: int, interval: float) -> Quadrature:
    """Gauss-Legendre rule with ``count`` points on [0, interval].

    Nodes and weights come from numpy's Legendre companion-matrix
    eigenvalue routine with a Newton refinement step (``leggauss``),
    then affinely mapped from [-1, 1]; the rule integrates polynomials
    up to degree 2*count - 1 exactly.
    """
    if count < 1:
        raise ConfigError("quadrature count must be >= 1")
    if not interval > 0:
        raise ConfigError("quadrature interval must be positive")
    x, w = leggauss(count)
    half = 0.5 * interval
    return Quadrature(count=count, interval=float(interval),
                      nodes=half * (x + 1.0), weights=half * w)


# ---------------------------------------------------------------------------
# Assembly


def _blocks(table: CondLawTable):
    """Column/row block order: components outer, mark bins inner."""
    blocks = []
    prob = []
    for k in range(table.dimension):
        p = table.probs(k)
        for m in range(table.n_bins(k)):
            blocks.append((k, m))
            prob.append(float(p[m]))
    return blocks, np.asarray(prob)


def _kernel_block(table, quad, j, l, k, m, p_km, lags):
    """K_{l,m}^{jk} evaluated at a lag array (any shape, no zero handling)."""
    lam = table.rates
    out = np.zeros_like(lags)
    pos = lags > 0
    if np.any(pos):
        out[pos] = p_km * table.value(k, j, l, lags[pos])
    neg = lags < 0
    if np.any(neg):
        out[neg] = p_km * (lam[k] / lam[j]) * table.value(j, k, m, -lags[neg])
    # lag == 0 entries are left at zero; callers exclude or cancel them.
    return out


def _companion_term(table, quad, j, l, k, m, p_km, at):
    """int_0^A K_{l,m}^{jk}(t - s) ds via the primitive identity, at times t."""
    lam = table.rates
    a = table.t_max
    return p_km * (
        table.prim(k, j, l, at) + (lam[k] / lam[j]) * table.prim(j, k, m, a - at)
    )


def build_matrix(table: CondLawTable, quad: Quadrature):
    """Dense system matrix shared by every target component.

    Returns (matrix, blocks) where blocks lists the (component, bin) pairs in
    stacking order; the matrix has size (Q * n_blocks)^2.
    """
    if not math.isclose(quad.interval, table.t_max, rel_tol=1e-12):
        raise ConfigError("quadrature interval must equal the table horizon A = t_max")
    if np.any(table.rates <= 0):
        raise ConfigError("every component needs a positive empirical rate")
    blocks, probs = _blocks(table)
    q = quad.count
    n = len(blocks) * q
    s = quad.nodes
    lags = s[:, None] - s[None, :]
    mat = np.zeros((n, n))
    for rb, (j, l) in enumerate(blocks):
        rows = slice(rb * q, (rb + 1) * q)
        for cb, (k, m) in enumerate(blocks):
            cols = slice(cb * q, (cb + 1) * q)
            kv = _kernel_block(table, quad, j, l, k, m, probs[cb], lags)
            np.fill_diagonal(kv, 0.0)
            w = kv * quad.weights[None, :]
            diag = _companion_term(table, quad, j, l, k, m, probs[cb], s) - w.sum(axis=1)
            block = w
            block[np.arange(q), np.arange(q)] += diag
            if rb == cb:
                block[np.arange(q), np.arange(q)] += 1.0
            mat[rows, cols] = block
    return mat, blocks


@dataclass(frozen=True)
class WHSystem:
    """Assembled dense system for one target component."""

    target: int
    matrix: np.ndarray
    rhs: np.ndarray
    blocks: tuple
    quad: Quadrature


def assemble(i: int, table: CondLawTable, quad: Quadrature) -> WHSystem:
    """Assemble the Nystrom system for target component i."""
    mat, blocks = build_matrix(table, quad)
    rhs = assemble_rhs(i, table, quad, blocks)
    return WHSystem(target=i, matrix=mat, rhs=rhs, blocks=tuple(blocks), quad=quad)


def assemble_rhs(i: int, table: CondLawTable, quad: Quadrature, blocks) -> np.ndarray:
    rhs = np.empty(len(blocks) * quad.count)
    for rb, (j, l) in enumerate(blocks):
        rhs[rb * quad.count : (rb + 1) * quad.count] = table.value(i, j, l, quad.nodes)
    return rhs


def _lu_with_cond(matrix):
    anorm = np.linalg.norm(matrix, 1)
    with warnings.catch_warnings():
        # Exact singularity surfaces through the rcond check below.
        warnings.simplefilter("ignore")
        lu, piv = lu_factor(matrix)
    if anorm == 0.0:
        return (lu, piv), 0.0
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0:
        raise NumericalError(f"condition estimation failed (info={info})")
    return (lu, piv), float(rcond)


def solve(system: WHSystem, rcond_min: float = 1e-12):
    """Dense LU solve with partial pivoting; returns (values, rcond).

    Raises IllConditionedError when the reciprocal condition estimate falls
    below ``rcond_min``.
    """
    lu, rcond = _lu_with_cond(system.matrix)
    if rcond < rcond_min:
        raise IllConditionedError(rcond)
    return lu_solve(lu, system.rhs), rcond


# ---------------------------------------------------------------------------
# Finalized solution


@dataclass(frozen=True)
class NystromSolution:
    """Kernel estimates at the quadrature nodes plus derived summaries.

    ``node_values[i, b, q]`` holds phi^{i,(k,m)} at node q for block b;
    ``combined[i, j, q]`` the probability-weighted combination over the bins
    of component j; ``norms`` the signed quadrature integrals; ``f_levels``
    the per-bin mark levels (NaN where the combined norm vanishes);
    ``mu_hat`` the implied baselines (I - ||phi||) Lambda.  ``stable`` is the
    spectral-radius diagnostic of |norms| (strict upper bound on the signed
    radius, always computable).
    """

    table: CondLawTable
    quad: Quadrature
    blocks: tuple
    node_values: np.ndarray
    combined: np.ndarray
    bin_norms: np.ndarray
    norms: np.ndarray
    f_levels: dict
    rho: float
    stable: bool
    rcond: float
    mu_hat: np.ndarray

    @property
    def dimension(self):
        return self.table.dimension

    def mark_levels(self, i, j):
        return self.f_levels[(i, j)]


def finalize(node_values, table: CondLawTable, quad: Quadrature, blocks, rcond=float("nan")) -> NystromSolution:
    """Combine per-bin node values into kernels, norms, mark levels, and diagnostics."""
    d = table.dimension
    q = quad.count
    blocks = list(blocks)
    node_values = np.asarray(node_values, dtype=float)
    _, probs = _blocks(table)

    combined = np.zeros((d, d, q))
    bin_norms = np.empty((d, len(blocks)))
    for b, (k, m) in enumerate(blocks):
        for i in range(d):
            combined[i, k] += probs[b] * node_values[i, b]
            bin_norms[i, b] = float(np.dot(quad.weights, node_values[i, b]))
    norms = np.empty((d, d))
    for i in range(d):
        for k in range(d):
            norms[i, k] = float(np.dot(quad.weights, combined[i, k]))

    scale = max(float(np.max(np.abs(norms))), 1.0)
    f_levels = {}
    for j in range(d):
        mem = [b for b, (k, _m) in enumerate(blocks) if k == j]
        for i in range(d):
            denom = norms[i, j]
            if abs(denom) < 1e-12 * scale:
                f_levels[(i, j)] = np.full(len(mem), np.nan)
            else:
                f_levels[(i, j)] = np.array([bin_norms[i, b] / denom for b in mem])

    rho = spectral_radius(np.abs(norms))
    lam = np.asarray(table.rates, dtype=float)
    mu_hat = (np.eye(d) - norms) @ lam
    return NystromSolution(
        table=table, quad=quad, blocks=tuple(blocks), node_values=node_values,
        combined=combined, bin_norms=bin_norms, norms=norms, f_levels=f_levels,
        rho=rho, stable=bool(rho < 1.0), rcond=rcond, mu_hat=mu_hat,
    )


def solve_all(table: CondLawTable, quad: Quadrature, rcond_min: float = 1e-12) -> NystromSolution:
    """Assemble once, factor once, solve all D targets, and finalize."""
    mat, blocks = build_matrix(table, quad)
    lu, rcond = _lu_with_cond(mat)
    if rcond < rcond_min:
        raise IllConditionedError(rcond)
    d = table.dimension
    q = quad.count
    node_values = np.empty((d, len(blocks), q))
    for i in range(d):
        x = lu_solve(lu, assemble_rhs(i, table, quad, blocks))
        node_values[i] = x.reshape(len(blocks), q)
    return finalize(node_values, table, quad, blocks, rcond=rcond)


# ---------------------------------------------------------------------------
# Resampling (Nystrom natural interpolation)


def resample(sol: NystromSolution, grid) -> np.ndarray:
    """Combined kernels phi^{ij} on an arbitrary grid inside [0, A].

    Off the nodes this solves, per grid time t, the small linear system the
    Nystrom equations induce on {phi^{ik}_m(t)}; at times that coincide with
    quadrature nodes the stored node values are returned unchanged.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    table, quad = sol.table, sol.quad
    if np.any(grid < 0) or np.any(grid > table.t_max):
        raise ConfigError("resample grid must lie inside [0, A]")
    blocks = list(sol.blocks)
    _, probs = _blocks(table)
    d = table.dimension
    nb = len(blocks)
    nt = len(grid)
    q = quad.count

    cmat = np.zeros((nt, nb, nb))
    rhs = np.zeros((nt, nb, d))
    for rb, (j, l) in enumerate(blocks):
        for i in range(d):
            rhs[:, rb, i] = table.value(i, j, l, grid)
        for cb, (k, m) in enumerate(blocks):
            lags = grid[:, None] - quad.nodes[None, :]
            kv = _kernel_block(table, quad, j, l, k, m, probs[cb], lags)
            kw = kv * quad.weights[None, :]
            cmat[:, rb, cb] = (
                _companion_term(table, quad, j, l, k, m, probs[cb], grid) - kw.sum(axis=1)
            )
            if rb == cb:
                cmat[:, rb, cb] += 1.0
            for i in range(d):
                rhs[:, rb, i] -= kw @ sol.node_values[i, cb]
    x = np.linalg.solve(cmat, rhs)  # (nt, nb, d)

    # Exact node hits return the stored node values bit for bit.
    node_pos = {float(s): qi for qi, s in enumerate(quad.nodes)}
    for ti, t in enumerate(grid):
        qi = node_pos.get(float(t))
        if qi is not None:
            for b in range(nb):
                x[ti, b, :] = sol.node_values[:, b, qi]

    out = np.zeros((d, d, nt))
    for b, (k, m) in enumerate(blocks):
        for i in range(d):
            out[i, k] += probs[b] * x[:, b, i]
    return out


# ---------------------------------------------------------------------------
# Quadrature-count selection


@dataclass(frozen=True)
class QSelection:
    """Outcome of the doubling scan over quadrature counts."""

    chosen: int
    history: tuple  # (Q, R_Q) pairs
    solution: NystromSolution = field(compare=False)
    degenerate: bool = False
    capped: bool = False


def select_Q(
    pipeline,
    q0: int = 20,
    threshold: float = 0.01,
    q_cap: int = 128,
    grid_size: int = 257,
) -> QSelection:
    """Double Q until the relative L2 variation R_Q of the kernels is small.

    ``pipeline`` maps a quadrature count to a NystromSolution.  R_Q compares
    the Q- and 2Q-solutions resampled on a common uniform grid, stacked over
    all (i, j) pairs; the scan stops at R_Q < threshold or at ``q_cap``
    (returned with ``capped=True`` and a warning).  An identically-zero
    estimate cannot be compared in relative terms and returns Q0 with
    ``degenerate=True``.
    """
    if q0 < 4:
        raise ConfigError("starting quadrature count must be >= 4")
    sol = pipeline(q0)
    grid = np.linspace(0.0, sol.table.t_max, grid_size)
    cur = resample(sol, grid)
    history = []
    q = q0
    while True:
        denom = float(np.linalg.norm(cur))
        if denom == 0.0:
            return QSelection(chosen=q0, history=tuple(history), solution=sol, degenerate=True)
        sol2 = pipeline(2 * q)
        nxt = resample(sol2, grid)
        r_q = float(np.linalg.norm(nxt - cur)) / denom
        history.append((q, r_q))
        if r_q < threshold:
            return QSelection(chosen=q, history=tuple(history), solution=sol)
        if 2 * q >= q_cap:
            warnings.warn(
                f"Q selection hit the cap {q_cap} with R_Q = {r_q:.3g} >= {threshold}"
            )
            return QSelection(chosen=2 * q, history=tuple(history), solution=sol2, capped=True)
        sol, cur, q = sol2, nxt, 2 * q
