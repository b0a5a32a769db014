"""Event-stream data model, file persistence, and first-order statistics.

The on-disk format (extension ``.hev``) is UTF-8 text:

    #dim D
    #horizon T
    #marked m_1 ... m_D          (0 or 1 per component)
    component_id<TAB>time[<TAB>mark]
    ...

Component ids are 1-based.  Rows may be globally interleaved but must be
sorted in time within each component; times carry 17 significant digits so a
save/load round trip is loss-free.  The canonical form written by
``save_events`` orders rows globally by time (ties by component id).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EventFormatError

__all__ = [
    "EventSeries",
    "MarkBins",
    "load_events",
    "save_events",
    "empirical_rates",
    "mark_bin_probabilities",
    "uniform_mark_edges",
    "load_csv",
]

_FLOAT_FMT = "%.17g"


def _readonly(arr):
    arr = np.asarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EventSeries:
    """Sorted event times (and optional marks) per component on a window [0, T].

    ``times[j]`` is strictly increasing; ``marks[j]`` is either None or an
    array aligned with ``times[j]``.  Instances are immutable and safe to
    share across threads.
    """

    times: tuple
    marks: tuple
    horizon: float

    def __post_init__(self):
        times = tuple(_readonly(t) for t in self.times)
        marks = tuple(None if m is None else _readonly(m) for m in self.marks)
        if len(times) != len(marks):
            raise ConfigError("times and marks must have one entry per component")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        for j, t in enumerate(times):
            if t.size and (t[0] < 0 or t[-1] > self.horizon):
                raise EventFormatError(f"component {j + 1} has times outside [0, T]")
            if t.size > 1 and not np.all(np.diff(t) > 0):
                raise EventFormatError(f"component {j + 1} times are not strictly increasing")
            if marks[j] is not None and marks[j].size != t.size:
                raise ConfigError(f"component {j + 1} marks misaligned with times")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dimension(self):
        return len(self.times)

    def counts(self):
        return np.array([t.size for t in self.times])

    def is_marked(self, j):
        return self.marks[j] is not None


@dataclass(frozen=True)
class MarkBins:
    """Per-component mark bin edges and their empirical probabilities.

    Unmarked components carry ``None`` entries.  ``clamped[j]`` counts marks
    that fell outside the edge range and were assigned to an end bin.
    """

    edges: tuple
    probs: tuple
    counts: tuple
    clamped: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "edges", tuple(None if e is None else _readonly(e) for e in self.edges)
        )
        object.__setattr__(
            self, "probs", tuple(None if p is None else _readonly(p) for p in self.probs)
        )

    def n_bins(self, j):
        return 1 if self.edges[j] is None else len(self.edges[j]) - 1

    def bin_of(self, j, marks):
        """Bin index for each mark of component j, clamped to the end bins."""
        if self.edges[j] is None:
            return np.zeros(len(marks), dtype=int)
        e = self.edges[j]
        return np.clip(np.searchsorted(e, marks, side="right") - 1, 0, len(e) - 2)

    @staticmethod
    def trivial(dimension):
        """One all-covering bin per component (the unmarked reduction)."""
        return MarkBins(
            edges=(None,) * dimension,
            probs=(None,) * dimension,
            counts=(None,) * dimension,
            clamped=(0,) * dimension,
        )


# ---------------------------------------------------------------------------
# File I/O


def load_events(path) -> EventSeries:
    """Parse and validate a ``.hev`` file."""
    dim = None
    horizon = None
    marked = None
    rows_t = None
    rows_m = None
    last_time = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if not parts:
                    raise EventFormatError("empty header line", line=lineno)
                key = parts[0]
                try:
                    if key == "dim":
                        dim = int(parts[1])
                        if dim < 1:
                            raise ValueError
                    elif key == "horizon":
                        horizon = float(parts[1])
                    elif key == "marked":
                        marked = [bool(int(x)) for x in parts[1:]]
                    else:
                        raise EventFormatError(f"unknown header key '{key}'", line=lineno)
                except (ValueError, IndexError):
                    raise EventFormatError(f"malformed header '{line}'", line=lineno) from None
                continue
            if dim is None or horizon is None:
                raise EventFormatError("data row before #dim/#horizon headers", line=lineno)
            if rows_t is None:
                if marked is None:
                    marked = [False] * dim
                if len(marked) != dim:
                    raise EventFormatError("#marked must list one flag per component")
                rows_t = [[] for _ in range(dim)]
                rows_m = [[] for _ in range(dim)]
                last_time = [None] * dim
            parts = line.split("\t")
            try:
                comp = int(parts[0]) - 1
                t = float(parts[1])
            except (ValueError, IndexError):
                raise EventFormatError(f"malformed row '{line}'", line=lineno) from None
            if not 0 <= comp < dim:
                raise EventFormatError(f"component id {comp + 1} out of range", line=lineno)
            if marked[comp]:
                if len(parts) < 3:
                    raise EventFormatError("missing mark on marked component", line=lineno)
                rows_m[comp].append(float(parts[2]))
            elif len(parts) > 2 and parts[2] != "":
                raise EventFormatError("mark present on unmarked component", line=lineno)
            prev = last_time[comp]
            if prev is not None and t <= prev:
                kind = "duplicate" if t == prev else "non-monotone"
                raise EventFormatError(
                    f"{kind} time {t!r} in component {comp + 1}", line=lineno
                )
            last_time[comp] = t
            rows_t[comp].append(t)
    if dim is None or horizon is None:
        raise EventFormatError("missing #dim or #horizon header")
    if rows_t is None:
        if marked is None:
            marked = [False] * dim
        rows_t = [[] for _ in range(dim)]
        rows_m = [[] for _ in range(dim)]
    times = tuple(np.asarray(t, dtype=float) for t in rows_t)
    marks = tuple(
        np.asarray(rows_m[j], dtype=float) if marked[j] else None for j in range(dim)
    )
    return EventSeries(times=times, marks=marks, horizon=horizon)


def save_events(series: EventSeries, path) -> None:
    """Write the canonical ``.hev`` form (rows globally sorted by time)."""
    d = series.dimension
    comp_ids = np.concatenate(
        [np.full(series.times[j].size, j, dtype=int) for j in range(d)]
    ) if d else np.empty(0, dtype=int)
    all_t = np.concatenate([series.times[j] for j in range(d)]) if d else np.empty(0)
    order = np.lexsort((comp_ids, all_t))
    offsets = np.zeros(d, dtype=int)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#dim {d}\n")
        fh.write("#horizon " + _FLOAT_FMT % series.horizon + "\n")
        fh.write("#marked " + " ".join("1" if series.is_marked(j) else "0" for j in range(d)) + "\n")
        for idx in order:
            j = int(comp_ids[idx])
            k = offsets[j]
            offsets[j] += 1
            t = series.times[j][k]
            if series.marks[j] is not None:
                fh.write(f"{j + 1}\t{_FLOAT_FMT % t}\t{_FLOAT_FMT % series.marks[j][k]}\n")
            else:
                fh.write(f"{j + 1}\t{_FLOAT_FMT % t}\n")


# ---------------------------------------------------------------------------
# First-order statistics


def empirical_rates(series: EventSeries) -> np.ndarray:
    """Per-component mean rate J^i / T."""
    if not series.horizon > 0:
        raise ConfigError("horizon must be positive")
    rates = series.counts() / series.horizon
    for j, r in enumerate(rates):
        if r == 0:
            warnings.warn(f"component {j + 1} has no events (degenerate rate 0)")
    return rates


def mark_bin_probabilities(series: EventSeries, edges, out_of_range: str = "clamp") -> MarkBins:
    """Empirical probabilities p^j_l of marks falling in each interval.

    ``edges`` is a sequence with one entry per component: an increasing array
    of bin edges for marked components, None for unmarked ones.  Marks outside
    the edge range are clamped into the end bins (reported in ``clamped``)
    unless ``out_of_range='error'``.
    """
    if len(edges) != series.dimension:
        raise ConfigError("edges must have one entry per component")
    all_edges, all_probs, all_counts, all_clamped = [], [], [], []
    for j in range(series.dimension):
        e = edges[j]
        if e is None:
            all_edges.append(None)
            all_probs.append(None)
            all_counts.append(None)
            all_clamped.append(0)
            continue
        if series.marks[j] is None:
            raise ConfigError(f"component {j + 1} has no marks to bin")
        e = np.asarray(e, dtype=float)
        if len(e) < 2 or not np.all(np.diff(e) > 0):
            raise ConfigError("bin edges must be strictly increasing with >= 2 entries")
        m = series.marks[j]
        outside = int(np.sum((m < e[0]) | (m > e[-1])))
        if outside and out_of_range == "error":
            raise ConfigError(f"{outside} marks of component {j + 1} fall outside the bins")
        idx = np.clip(np.searchsorted(e, m, side="right") - 1, 0, len(e) - 2)
        counts = np.bincount(idx, minlength=len(e) - 1).astype(float)
        total = m.size
        probs = counts / total if total else np.full(len(e) - 1, np.nan)
        all_edges.append(e)
        all_probs.append(probs)
        all_counts.append(counts.astype(int))
        all_clamped.append(outside)
    return MarkBins(
        edges=tuple(all_edges),
        probs=tuple(all_probs),
        counts=tuple(None if c is None else tuple(int(x) for x in c) for c in all_counts),
        clamped=tuple(all_clamped),
    )


def uniform_mark_edges(series: EventSeries, j: int, n_bins: int = 20) -> np.ndarray:
    """Uniform bin edges spanning the observed mark range of component j."""
    m = series.marks[j]
    if m is None or m.size == 0:
        raise ConfigError(f"component {j + 1} has no marks")
    lo, hi = float(np.min(m)), float(np.max(m))
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n_bins + 1)


# ---------------------------------------------------------------------------
# External-catalog ingestion


def load_csv(
    path,
    time_col,
    mark_col=None,
    component_col=None,
    horizon=None,
    dedupe=False,
) -> EventSeries:
    """Convert a CSV catalog (e.g. timestamp + magnitude columns) to an EventSeries.

    Columns are named (header row required).  Without a component column all
    rows form a single component.  Rows are sorted in time per component;
    exact duplicate times are an error unless ``dedupe`` drops them (count
    reported via a warning).
    """
    comps = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                t = float(row[time_col])
            except (KeyError, ValueError):
                raise EventFormatError(f"bad time value in column '{time_col}'", line=lineno) from None
            key = row[component_col].strip() if component_col else "1"
            mark = None
            if mark_col is not None:
                try:
                    mark = float(row[mark_col])
                except (KeyError, ValueError):
                    raise EventFormatError(
                        f"bad mark value in column '{mark_col}'", line=lineno
                    ) from None
            comps.setdefault(key, []).append((t, mark))
    if not comps:
        raise EventFormatError("CSV contains no data rows")
    keys = sorted(comps)
    times, marks = [], []
    dropped = 0
    for key in keys:
        rows = sorted(comps[key], key=lambda r: r[0])
        t = np.array([r[0] for r in rows])
        m = np.array([r[1] for r in rows]) if mark_col is not None else None
        if t.size > 1:
            keep = np.concatenate([[True], np.diff(t) > 0])
            if not np.all(keep):
                if not dedupe:
                    raise EventFormatError(
                        f"duplicate timestamps in component '{key}'; rerun with dedupe"
                    )
                dropped += int(np.sum(~keep))
                t = t[keep]
                if m is not None:
                    m = m[keep]
        times.append(t)
        marks.append(m)
    if dropped:
        warnings.warn(f"dropped {dropped} duplicate-time rows during CSV import")
    t0 = min((t[0] for t in times if t.size), default=0.0)
    shifted = tuple(t - t0 for t in times)
    if horizon is None:
        horizon = max((t[-1] for t in shifted if t.size), default=1.0)
        horizon = float(horizon) if horizon > 0 else 1.0
    return EventSeries(times=shifted, marks=tuple(marks), horizon=horizon)
