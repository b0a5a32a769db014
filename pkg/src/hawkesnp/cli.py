"""Command-line front end: simulate, estimate, bandwidth, oracle, gof, import-csv.

Model configuration grammar (line oriented, '#' comments, blank lines free):

    dim D
    baseline I VALUE              # one line per component, 1-based
    rectified 0|1                 # optional, default 0

    kernel I J                    # section per (i, j) pair; omitted pairs are zero
      type exponential            # amplitude, decay
      amplitude 0.1
      decay 0.2
    kernel I J
      type powerlaw               # amplitude, offset, exponent
      ...
    kernel I J
      type piecewise_linear
      knot T V                    # repeated, strictly increasing T
    kernel I J
      type sampled
      start 0.0
      step 0.1
      values V1 V2 ...
    kernel I J
      type zero

    mark J                        # component J carries marks
      type exponential
      mean 1.0
    mark J
      type empirical
      file marks.txt              # one mark per line, relative to the config
    markfn I J                    # mark function f^{IJ}; default 'one'
      type identity | one | piecewise_constant
      edges E0 E1 ...             # piecewise_constant only
      levels L1 L2 ...

Every command writes a JSON manifest next to its outputs recording the
resolved configuration, input digests, seed, and tool version; identical
manifests reproduce identical output bytes.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .bandwidth import select_bandwidth
from .condlaw import write_estimate_csv
from .errors import ConfigError, HawkesError
from .events import load_csv, load_events, save_events
from .gof import IntensityModel, from_hawkes, qq_uniform_deviation, rescale
from .model import (
    ConstantMark,
    EmpiricalMarks,
    ExponentialKernel,
    ExponentialMarks,
    HawkesModel,
    IdentityMark,
    MarkSpec,
    PiecewiseConstantMark,
    PiecewiseLinearKernel,
    PowerLawKernel,
    SampledKernel,
    ZeroKernel,
)
from .oracle import oracle_g
from .pipeline import EstimationConfig, default_threads, run_estimation
from .simulate import SimConfig, simulate
from .whsolver import resample

__all__ = ["main", "load_model_config"]


# ---------------------------------------------------------------------------
# Model config parsing


def _parse_sections(path):
    """Split a config file into top-level pairs and (header, body) sections."""
    top = []
    sections = []
    current = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            key = parts[0]
            if key in ("kernel", "mark", "markfn"):
                current = (key, parts[1:], lineno, [])
                sections.append(current)
            elif key in ("dim", "baseline", "rectified"):
                current = None
                top.append((key, parts[1:], lineno))
            else:
                if current is None:
                    raise ConfigError(f"{path}:{lineno}: unexpected key '{key}' outside a section")
                current[3].append((key, parts[1:], lineno))
    return top, sections


def _section_dict(body, path):
    out = {}
    for key, args, lineno in body:
        if key == "knot":
            out.setdefault("knot", []).append((args, lineno))
        else:
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
            out[key] = (args, lineno)
    return out


def _build_kernel(body, path, lineno):
    d = _section_dict(body, path)
    if "type" not in d:
        raise ConfigError(f"{path}:{lineno}: kernel section missing 'type'")
    ktype = d["type"][0][0]

    def num(key):
        if key not in d:
            raise ConfigError(f"{path}:{lineno}: kernel type '{ktype}' needs '{key}'")
        return float(d[key][0][0])

    if ktype == "zero":
        return ZeroKernel()
    if ktype == "exponential":
        return ExponentialKernel(amplitude=num("amplitude"), decay=num("decay"))
    if ktype == "powerlaw":
        return PowerLawKernel(amplitude=num("amplitude"), offset=num("offset"), exponent=num("exponent"))
    if ktype == "piecewise_linear":
        knots = [(float(a[0]), float(a[1])) for a, _ln in d.get("knot", [])]
        if not knots:
            raise ConfigError(f"{path}:{lineno}: piecewise_linear kernel needs 'knot' lines")
        return PiecewiseLinearKernel(tuple(knots))
    if ktype == "sampled":
        if "values" not in d:
            raise ConfigError(f"{path}:{lineno}: sampled kernel needs 'values'")
        vals = tuple(float(v) for v in d["values"][0])
        return SampledKernel(start=num("start"), step=num("step"), values=vals)
    raise ConfigError(f"{path}:{lineno}: unknown kernel type '{ktype}'")


def _build_mark_dist(body, path, lineno, base_dir):
    d = _section_dict(body, path)
    if "type" not in d:
        raise ConfigError(f"{path}:{lineno}: mark section missing 'type'")
    mtype = d["type"][0][0]
    if mtype == "exponential":
        if "mean" not in d:
            raise ConfigError(f"{path}:{lineno}: exponential marks need 'mean'")
        return ExponentialMarks(float(d["mean"][0][0]))
    if mtype == "empirical":
        if "values" in d:
            return EmpiricalMarks(tuple(float(v) for v in d["values"][0]))
        if "file" not in d:
            raise ConfigError(f"{path}:{lineno}: empirical marks need 'file' or 'values'")
        sample_path = os.path.join(base_dir, d["file"][0][0])
        vals = np.loadtxt(sample_path, ndmin=1)
        return EmpiricalMarks(tuple(float(v) for v in vals))
    raise ConfigError(f"{path}:{lineno}: unknown mark type '{mtype}'")


def _build_mark_fn(body, path, lineno):
    d = _section_dict(body, path)
    if "type" not in d:
        raise ConfigError(f"{path}:{lineno}: markfn section missing 'type'")
    ftype = d["type"][0][0]
    if ftype == "one":
        return ConstantMark(1.0)
    if ftype == "identity":
        return IdentityMark(1.0)
    if ftype == "piecewise_constant":
        if "edges" not in d or "levels" not in d:
            raise ConfigError(f"{path}:{lineno}: piecewise_constant markfn needs 'edges' and 'levels'")
        edges = tuple(float(v) for v in d["edges"][0])
        levels = tuple(float(v) for v in d["levels"][0])
        return PiecewiseConstantMark(edges, levels)
    raise ConfigError(f"{path}:{lineno}: unknown markfn type '{ftype}'")


def load_model_config(path) -> HawkesModel:
    """Parse a model configuration file into a HawkesModel."""
    top, sections = _parse_sections(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    dim = None
    baselines = {}
    rectified = False
    for key, args, lineno in top:
        try:
            if key == "dim":
                dim = int(args[0])
            elif key == "baseline":
                baselines[int(args[0]) - 1] = float(args[1])
            elif key == "rectified":
                rectified = bool(int(args[0]))
        except (ValueError, IndexError):
            raise ConfigError(f"{path}:{lineno}: malformed '{key}' line") from None
    if dim is None or dim < 1:
        raise ConfigError(f"{path}: missing or invalid 'dim'")
    mu = []
    for i in range(dim):
        if i not in baselines:
            raise ConfigError(f"{path}: missing baseline for component {i + 1}")
        mu.append(baselines[i])

    kernels = [[ZeroKernel() for _ in range(dim)] for _ in range(dim)]
    mark_dists = {}
    mark_fns = {}
    for key, args, lineno, body in sections:
        try:
            idx = [int(a) - 1 for a in args]
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: section indices must be integers") from None
        if key == "kernel":
            if len(idx) != 2 or not all(0 <= v < dim for v in idx):
                raise ConfigError(f"{path}:{lineno}: kernel needs indices I J in 1..{dim}")
            kernels[idx[0]][idx[1]] = _build_kernel(body, path, lineno)
        elif key == "mark":
            if len(idx) != 1 or not 0 <= idx[0] < dim:
                raise ConfigError(f"{path}:{lineno}: mark needs a component index in 1..{dim}")
            mark_dists[idx[0]] = _build_mark_dist(body, path, lineno, base_dir)
        else:
            if len(idx) != 2 or not all(0 <= v < dim for v in idx):
                raise ConfigError(f"{path}:{lineno}: markfn needs indices I J in 1..{dim}")
            mark_fns[(idx[0], idx[1])] = _build_mark_fn(body, path, lineno)

    marks = []
    for j in range(dim):
        if j not in mark_dists:
            for (i, jj) in mark_fns:
                if jj == j:
                    raise ConfigError(f"{path}: markfn given for unmarked component {j + 1}")
            marks.append(None)
            continue
        influences = tuple(
            mark_fns.get((i, j), ConstantMark(1.0)) for i in range(dim)
        )
        marks.append(MarkSpec(distribution=mark_dists[j], influences=influences))
    return HawkesModel(
        baselines=tuple(mu),
        kernels=tuple(tuple(row) for row in kernels),
        marks=tuple(marks),
        rectified=rectified,
    )


# ---------------------------------------------------------------------------
# Manifests and small helpers


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path, command, config, inputs, outputs):
    doc = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {os.path.basename(p): _digest(p) for p in inputs},
        "outputs": sorted(os.path.basename(p) for p in outputs),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x):
    return "%.17g" % float(x)


def _load_bins_spec(spec, series):
    if spec is None or spec == "none":
        return None
    if spec == "auto":
        return "auto"
    if spec.startswith("edges="):
        body = spec[len("edges="):]
        if ":" in body:
            parts = body.split(":")
            if len(parts) != 3:
                raise ConfigError("bins spec edges=LO:STEP:HI needs three fields")
            lo, step, hi = (float(p) for p in parts)
            if step <= 0 or hi <= lo:
                raise ConfigError("bins spec needs step > 0 and hi > lo")
            n = int(round((hi - lo) / step))
            edges = lo + step * np.arange(n + 1)
        else:
            edges = np.array([float(p) for p in body.split(",")])
        return [edges if series.is_marked(j) else None for j in range(series.dimension)]
    raise ConfigError(f"unknown bins spec {spec!r}")


# ---------------------------------------------------------------------------
# Commands


def _cmd_simulate(args):
    model = load_model_config(args.model)
    cfg = SimConfig(horizon=args.horizon, seed=args.seed,
                    burn_in=args.burn_in, max_events=args.max_events)
    series = simulate(model, cfg)
    save_events(series, args.out)
    _write_manifest(
        args.out + ".manifest.json", "simulate",
        {
            "model": os.path.basename(args.model),
            "horizon": args.horizon,
            "seed": args.seed,
            "burn_in": cfg.burn_in if cfg.burn_in is not None else "auto",
            "max_events": args.max_events,
        },
        [args.model], [args.out],
    )
    counts = " ".join(str(c) for c in series.counts())
    print(f"simulated {int(series.counts().sum())} events (per component: {counts}) -> {args.out}")
    return 0


def _cmd_estimate(args):
    series = load_events(args.events)
    bins_spec = _load_bins_spec(args.bins, series)
    h = None if args.h == "auto" else float(args.h)
    q = None if args.Q == "auto" else int(args.Q)
    cfg = EstimationConfig(
        t_max=args.tmax, h=h, q=q, bins=bins_spec,
        kernel_order=args.kernel_order, n_blocks=args.blocks,
        q0=args.q0, threads=args.threads or default_threads(),
    )
    result = run_estimation(series, cfg)
    sol = result.solution
    os.makedirs(args.out, exist_ok=True)
    outputs = []

    grid = np.linspace(0.0, args.tmax, args.grid)
    phi = resample(sol, grid)
    d = series.dimension
    for i in range(d):
        for j in range(d):
            path = os.path.join(args.out, f"kernel_{i + 1}_{j + 1}.csv")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("t,phi\n")
                for t, v in zip(grid, phi[i, j]):
                    fh.write(f"{_fmt(t)},{_fmt(v)}\n")
            outputs.append(path)
    for (i, j, l), est in sorted(result.table.estimates.items()):
        path = os.path.join(args.out, f"g_{i + 1}_{j + 1}_{l + 1}.csv")
        write_estimate_csv(est, path)
        outputs.append(path)
    for (i, j), scan in sorted(result.scans.items()):
        path = os.path.join(args.out, f"mstar_{i + 1}_{j + 1}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("h,contrast\n")
            for hv, mv in zip(scan.grid, scan.values):
                fh.write(f"{_fmt(hv)},{_fmt(mv)}\n")
        outputs.append(path)

    summary = {
        "rates": [float(x) for x in result.table.rates],
        "mu_hat": [float(x) for x in sol.mu_hat],
        "norms": [[float(x) for x in row] for row in sol.norms],
        "rho": sol.rho,
        "stable": sol.stable,
        "rcond": sol.rcond,
        "q": sol.quad.count,
        "t_max": args.tmax,
        "h": [[float(x) for x in row] for row in result.h_matrix],
        "kernel_order": args.kernel_order,
        "bins": {
            str(j + 1): {
                "edges": [float(x) for x in result.table.bins.edges[j]],
                "probs": [float(x) for x in result.table.bins.probs[j]],
            }
            for j in range(d)
            if result.table.bins.edges[j] is not None
        },
        "mark_levels": {
            f"{i + 1},{j + 1}": [float(x) for x in sol.mark_levels(i, j)]
            for i in range(d)
            for j in range(d)
            if result.table.bins.edges[j] is not None
        },
        "r_q_history": list(map(list, result.q_selection.history)) if result.q_selection else None,
    }
    spath = os.path.join(args.out, "summary.json")
    with open(spath, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(spath)
    _write_manifest(
        os.path.join(args.out, "manifest.json"), "estimate",
        {
            "events": os.path.basename(args.events),
            "h": args.h, "Q": args.Q, "tmax": args.tmax,
            "bins": args.bins, "grid": args.grid,
            "kernel_order": args.kernel_order, "blocks": args.blocks,
            "resolved_h": [[float(x) for x in row] for row in result.h_matrix],
            "resolved_q": sol.quad.count,
        },
        [args.events], outputs,
    )
    if not sol.stable:
        print(f"warning: estimated model is unstable (rho = {sol.rho:.4g})", file=sys.stderr)
    print(f"estimated {d}x{d} kernels (Q={sol.quad.count}, rho={sol.rho:.4g}) -> {args.out}")
    return 0


def _cmd_bandwidth(args):
    series = load_events(args.events)
    grid = None
    if args.h_grid:
        grid = np.array([float(v) for v in args.h_grid.split(",")])
    scan = select_bandwidth(
        series, args.i - 1, args.j - 1, grid=grid,
        t_max=args.tmax, n_blocks=args.blocks,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("h,contrast\n")
        for hv, mv in zip(scan.grid, scan.values):
            fh.write(f"{_fmt(hv)},{_fmt(mv)}\n")
    _write_manifest(
        args.out + ".manifest.json", "bandwidth",
        {
            "events": os.path.basename(args.events), "i": args.i, "j": args.j,
            "tmax": args.tmax, "blocks": args.blocks,
            "h_grid": args.h_grid, "h_star": scan.h_star,
        },
        [args.events], [args.out],
    )
    print(f"h* = {_fmt(scan.h_star)}")
    return 0


def _cmd_oracle(args):
    model = load_model_config(args.model)
    grid = oracle_g(model, t_max=args.tmax, step=args.step)
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    d = model.dimension
    for i in range(d):
        for j in range(d):
            path = os.path.join(args.out, f"oracle_g_{i + 1}_{j + 1}.csv")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("t,g\n")
                for k in range(len(grid.t) - 1, 0, -1):
                    fh.write(f"{_fmt(-grid.t[k])},{_fmt(grid.g_neg[i, j, k])}\n")
                for k in range(len(grid.t)):
                    fh.write(f"{_fmt(grid.t[k])},{_fmt(grid.g_pos[i, j, k])}\n")
            outputs.append(path)
    _write_manifest(
        os.path.join(args.out, "manifest.json"), "oracle",
        {"model": os.path.basename(args.model), "tmax": args.tmax, "step": args.step},
        [args.model], outputs,
    )
    print(f"oracle g on [-{args.tmax}, {args.tmax}] -> {args.out}")
    return 0


def _load_estimate_dir(path):
    """Rebuild an IntensityModel from an estimate output bundle."""
    with open(os.path.join(path, "summary.json"), "r", encoding="utf-8") as fh:
        summary = json.load(fh)
    d = len(summary["rates"])
    kernels = []
    for i in range(d):
        row = []
        for j in range(d):
            data = np.loadtxt(
                os.path.join(path, f"kernel_{i + 1}_{j + 1}.csv"),
                delimiter=",", skiprows=1,
            )
            t, v = data[:, 0], data[:, 1]
            row.append(SampledKernel(float(t[0]), float(t[1] - t[0]), tuple(v)))
        kernels.append(tuple(row))
    fns = []
    for i in range(d):
        row = []
        for j in range(d):
            key = f"{i + 1},{j + 1}"
            if key in summary.get("mark_levels", {}):
                edges = tuple(summary["bins"][str(j + 1)]["edges"])
                levels = np.asarray(summary["mark_levels"][key], dtype=float)
                levels = np.where(np.isfinite(levels), np.maximum(levels, 0.0), 1.0)
                row.append(PiecewiseConstantMark(edges, tuple(levels)))
            else:
                row.append(None)
        fns.append(tuple(row))
    return IntensityModel(
        baselines=tuple(float(x) for x in summary["mu_hat"]),
        kernels=tuple(kernels),
        mark_functions=tuple(fns),
        clamp=False,
    )


def _cmd_gof(args):
    series = load_events(args.events)
    if (args.estimate is None) == (args.model is None):
        raise ConfigError("gof needs exactly one of --estimate DIR or --model CONFIG")
    if args.model is not None:
        imodel = from_hawkes(load_model_config(args.model))
        source = args.model
    else:
        imodel = _load_estimate_dir(args.estimate)
        source = os.path.join(args.estimate, "summary.json")
    if args.clamp:
        imodel = IntensityModel(
            baselines=imodel.baselines, kernels=imodel.kernels,
            mark_functions=imodel.mark_functions, clamp=True,
        )
    report = rescale(series, imodel, tail=args.tail)
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for rset in report.sets:
        path = os.path.join(args.out, f"qq_{rset.component + 1}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("theoretical,empirical\n")
            for a, b in zip(rset.qq_theoretical, rset.qq_empirical):
                fh.write(f"{_fmt(a)},{_fmt(b)}\n")
        outputs.append(path)
    rpath = os.path.join(args.out, "report.txt")
    with open(rpath, "w", encoding="utf-8") as fh:
        fh.write(report.to_text() + "\n")
        for rset in report.sets:
            fh.write(
                f"component {rset.component + 1}: max Q-Q deviation "
                f"(probability scale) = {qq_uniform_deviation(rset):.4f}\n"
            )
    outputs.append(rpath)
    _write_manifest(
        os.path.join(args.out, "manifest.json"), "gof",
        {
            "events": os.path.basename(args.events),
            "source": os.path.basename(source),
            "tail": args.tail, "clamp": bool(args.clamp),
        },
        [args.events, source], outputs,
    )
    print(report.to_text())
    return 0


def _cmd_import_csv(args):
    series = load_csv(
        args.csv, time_col=args.time_col, mark_col=args.mark_col,
        component_col=args.component_col, horizon=args.horizon, dedupe=args.dedupe,
    )
    save_events(series, args.out)
    _write_manifest(
        args.out + ".manifest.json", "import-csv",
        {
            "csv": os.path.basename(args.csv), "time_col": args.time_col,
            "mark_col": args.mark_col, "component_col": args.component_col,
            "horizon": args.horizon, "dedupe": bool(args.dedupe),
        },
        [args.csv], [args.out],
    )
    print(f"imported {int(series.counts().sum())} events -> {args.out}")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="hawkesnp",
        description="Simulation and nonparametric kernel estimation of marked Hawkes processes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a model by thinning")
    p.add_argument("model", help="model configuration file")
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn-in", type=float, default=None, dest="burn_in")
    p.add_argument("--max-events", type=int, default=20_000_000, dest="max_events")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="nonparametric kernel estimation")
    p.add_argument("--events", required=True)
    p.add_argument("--h", default="auto", help="bandwidth, or 'auto' for cross-validation")
    p.add_argument("--Q", default="auto", help="quadrature points, or 'auto' for R_Q doubling")
    p.add_argument("--tmax", type=float, required=True, help="kernel support bound A")
    p.add_argument("--bins", default="auto",
                   help="'none', 'auto', 'edges=LO:STEP:HI', or 'edges=e0,e1,...'")
    p.add_argument("--grid", type=int, default=200, help="output resample points")
    p.add_argument("--kernel-order", type=int, default=0, dest="kernel_order")
    p.add_argument("--blocks", type=int, default=10)
    p.add_argument("--q0", type=int, default=20)
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap; default HAWKESNP_THREADS or the CPU count")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("bandwidth", help="cross-validated bandwidth scan")
    p.add_argument("--events", required=True)
    p.add_argument("--i", type=int, default=1)
    p.add_argument("--j", type=int, default=1)
    p.add_argument("--tmax", type=float, required=True)
    p.add_argument("--blocks", type=int, default=10)
    p.add_argument("--h-grid", default=None, dest="h_grid", help="comma-separated candidates")
    p.add_argument("--out", required=True, help="output CSV of (h, contrast)")
    p.set_defaults(func=_cmd_bandwidth)

    p = sub.add_parser("oracle", help="ground-truth conditional law of a known model")
    p.add_argument("model")
    p.add_argument("--tmax", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("gof", help="time-rescaling goodness of fit")
    p.add_argument("--events", required=True)
    p.add_argument("--estimate", default=None, help="estimate output directory")
    p.add_argument("--model", default=None, help="true-model configuration file")
    p.add_argument("--tail", type=int, default=None,
                   help="use only the last N inter-event times per component")
    p.add_argument("--clamp", action="store_true", help="floor intensities at zero")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_gof)

    p = sub.add_parser("import-csv", help="convert a CSV catalog to .hev")
    p.add_argument("--csv", required=True)
    p.add_argument("--time-col", required=True, dest="time_col")
    p.add_argument("--mark-col", default=None, dest="mark_col")
    p.add_argument("--component-col", default=None, dest="component_col")
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--dedupe", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_import_csv)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HawkesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
