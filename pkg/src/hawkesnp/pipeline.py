"""End-to-end estimation: rates, bins, conditional laws, bandwidth, solve.

``run_estimation`` wires the full procedure for a single event series:

  1. empirical rates;
  2. mark-bin probabilities (trivial bins when unmarked or disabled);
  3. conditional-law estimates for every (target, conditioning, bin) triple,
     selecting the bandwidth per component pair by cross-validation when not
     fixed;
  4. Nystrom assembly and LU solution of the Wiener-Hopf systems, doubling
     the quadrature count until the relative kernel variation is small when
     Q is not fixed;
  5. combined kernels, norms, mark levels, and the stability diagnostic.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bandwidth import select_bandwidth
from .condlaw import CondLawTable, estimate_G_marked, smoothing_kernel
from .errors import ConfigError
from .events import EventSeries, MarkBins, empirical_rates, mark_bin_probabilities, uniform_mark_edges
from .whsolver import NystromSolution, QSelection, gauss_nodes, select_Q, solve_all

__all__ = ["EstimationConfig", "EstimationResult", "build_bins", "estimate_table", "run_estimation", "default_threads"]


def default_threads():
    env = os.environ.get("HAWKESNP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"HAWKESNP_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


@dataclass(frozen=True)
class EstimationConfig:
    """Resolved knobs of one estimation run.

    ``h`` and ``q`` may be None for data-driven selection.  ``bins`` is
    None (ignore marks), "auto" (20 uniform bins over the observed range of
    each marked component), or a sequence with per-component edge arrays
    (None entries for unmarked components).
    """

    t_max: float
    h: float = None
    q: int = None
    bins: object = None
    n_bins_auto: int = 20
    kernel_order: int = 0
    n_blocks: int = 10
    h_grid: object = None
    q0: int = 20
    rq_threshold: float = 0.01
    q_cap: int = 128
    rcond_min: float = 1e-12
    threads: int = 1


@dataclass(frozen=True)
class EstimationResult:
    solution: NystromSolution
    table: CondLawTable
    h_matrix: np.ndarray
    scans: dict = field(default_factory=dict)
    q_selection: QSelection = None

    @property
    def q(self):
        return self.solution.quad.count


def build_bins(series: EventSeries, spec, n_auto: int = 20) -> MarkBins:
    """Resolve a bins specification into MarkBins."""
    d = series.dimension
    if spec is None:
        return MarkBins.trivial(d)
    if isinstance(spec, str):
        if spec != "auto":
            raise ConfigError(f"unknown bins spec {spec!r}")
        edges = [
            uniform_mark_edges(series, j, n_auto) if series.is_marked(j) else None
            for j in range(d)
        ]
        return mark_bin_probabilities(series, edges)
    return mark_bin_probabilities(series, list(spec))


def estimate_table(
    series: EventSeries,
    t_max: float,
    h,
    bins: MarkBins,
    kernel_order: int = 0,
    threads: int = 1,
) -> CondLawTable:
    """Conditional-law table with a per-pair bandwidth matrix ``h``."""
    d = series.dimension
    h_mat = np.asarray(h, dtype=float)
    if h_mat.ndim == 0:
        h_mat = np.full((d, d), float(h_mat))
    kern = smoothing_kernel(kernel_order)
    rates = empirical_rates(series)
    jobs = [(i, j) for j in range(d) for i in range(d)]

    def one(pair):
        i, j = pair
        return pair, estimate_G_marked(series, i, j, bins, float(h_mat[i, j]), t_max, kernel=kern)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = dict(pool.map(one, jobs))
    else:
        results = dict(map(one, jobs))
    estimates = {}
    for (i, j), ests in results.items():
        for l, e in enumerate(ests):
            estimates[(i, j, l)] = e
    return CondLawTable(
        dimension=d, t_max=float(t_max), rates=rates, bins=bins, estimates=estimates
    )


def run_estimation(series: EventSeries, cfg: EstimationConfig) -> EstimationResult:
    """The full pipeline from events to a finalized kernel estimate."""
    d = series.dimension
    bins = build_bins(series, cfg.bins, cfg.n_bins_auto)
    kern = smoothing_kernel(cfg.kernel_order)

    scans = {}
    if cfg.h is None:
        h_mat = np.empty((d, d))
        for i in range(d):
            for j in range(d):
                scan = select_bandwidth(
                    series, i, j,
                    grid=cfg.h_grid, t_max=cfg.t_max,
                    n_blocks=cfg.n_blocks, kernel=kern,
                )
                scans[(i, j)] = scan
                h_mat[i, j] = scan.h_star
    else:
        h_mat = np.full((d, d), float(cfg.h))

    table = estimate_table(
        series, cfg.t_max, h_mat, bins,
        kernel_order=cfg.kernel_order, threads=cfg.threads,
    )

    q_sel = None
    if cfg.q is None:
        q_sel = select_Q(
            lambda q: solve_all(table, gauss_nodes(q, cfg.t_max), rcond_min=cfg.rcond_min),
            q0=cfg.q0, threshold=cfg.rq_threshold, q_cap=cfg.q_cap,
        )
        solution = q_sel.solution
    else:
        solution = solve_all(table, gauss_nodes(cfg.q, cfg.t_max), rcond_min=cfg.rcond_min)
    return EstimationResult(
        solution=solution, table=table, h_matrix=h_mat, scans=scans, q_selection=q_sel
    )
