"""Command-line front end: run configurations and write reports.

Verbs::

    patchdyn run <config> [--dry-run]
    patchdyn validate <config>
    patchdyn compare <run_a> <run_b>
    patchdyn table <name> <config> [<config> ...]

Relative output paths are resolved against ``$PATCHDYN_OUTPUT_ROOT`` when
set. Exit codes: 0 success, 1 comparison not grid independent, 2 bad
configuration, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .cpi import Trajectory, run
from .errors import (
    ConfigParseError,
    ConfigValidationError,
    GridMismatch,
    MacroInstability,
    MicroSolveError,
    PatchDynError,
)
from .gaptooth import CoarseField
from .problems import INDEPENDENCE_THRESHOLD, grid_independence

OUTPUT_ROOT_ENV = "PATCHDYN_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_NOT_INDEPENDENT = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _num(x) -> str:
    """Lossless text form of a float (17 significant digits)."""
    x = float(x)
    if np.isnan(x):
        return "nan"
    return format(x, ".17g")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return None if np.isnan(x) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def output_dir(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def hbm_reference() -> dict:
    """Static external reference values (not recomputed by this package)."""
    text = resources.files("patchdyn").joinpath("data/hbm_reference.json").read_text()
    return json.loads(text)


# ---------------------------------------------------------------------------
# reports


def probe_rows(cfg: RunConfig, problem, traj: Trajectory):
    U = traj.final
    t = traj.times[-1]
    rows = []
    hbm = None
    if cfg.problem == "cdr-const" and cfg.lam == 0.0:
        ref = hbm_reference()
        for row in ref["rows"]:
            if row["grid"] == [cfg.scheme.n_xi + 1, cfg.scheme.n_eta + 1]:
                hbm = {tuple(p): (v, e) for p, v, e in zip(ref["probes"], row["values"], row["percent_errors"])}
    for xi, eta in cfg.probes:
        i = int(np.argmin(np.abs(U.xi - xi)))
        j = int(np.argmin(np.abs(U.eta - eta)))
        x, y = problem.mapping.forward(U.xi[i], U.eta[j])
        value = U.values[i, j]
        exact = float(problem.exact(U.xi[i], U.eta[j], t)) if problem.exact else float("nan")
        pct = abs(value - exact) / abs(exact) * 100 if problem.exact and abs(exact) >= 1e-12 else float("nan")
        ref_v, ref_e = hbm.get((xi, eta), (float("nan"), float("nan"))) if hbm else (float("nan"), float("nan"))
        rows.append([float(xi), float(eta), float(x), float(y), float(value), exact, pct, float(ref_v), float(ref_e)])
    return rows


PROBE_HEADER = ["xi", "eta", "x", "y", "value", "exact", "percent_error", "hbm_value", "hbm_percent_error"]


def contour_rows(problem, U: CoarseField, t: float):
    XI, ETA = np.meshgrid(U.xi, U.eta, indexing="ij")
    X, Y = problem.mapping.forward(XI, ETA)
    exact = problem.exact_field(U, t) if problem.exact else np.full(U.values.shape, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        pct = np.where(np.abs(exact) >= 1e-12, np.abs(U.values - exact) / np.abs(exact) * 100, np.nan)
    return [
        [float(a), float(b), float(c), float(d), float(e)]
        for a, b, c, d, e in zip(X.ravel(), Y.ravel(), U.values.ravel(), exact.ravel(), pct.ravel())
    ]


def snapshot_record(cfg: RunConfig, traj: Trajectory) -> dict:
    # json writes floats with their shortest round-trip repr, so this is lossless
    first = traj.fields[0]
    return {
        "problem": cfg.problem,
        "lambda": cfg.lam,
        "xi": first.xi.tolist(),
        "eta": first.eta.tolist(),
        "periodic": list(first.periodic),
        "times": [float(t) for t in traj.times],
        "values": [f.values.tolist() for f in traj.fields],
    }


def load_snapshots(path) -> Trajectory:
    """Read a ``snapshots.json`` (or the run directory holding it)."""
    p = Path(path)
    if p.is_dir():
        p = p / "snapshots.json"
    data = json.loads(p.read_text())
    xi = np.array([float(v) for v in data["xi"]])
    eta = np.array([float(v) for v in data["eta"]])
    periodic = tuple(data.get("periodic", (False, False)))
    fields = [CoarseField(np.array([[float(v) for v in row] for row in vals]), xi, eta, periodic) for vals in data["values"]]
    times = [float(t) for t in data["times"]]
    empty = np.array([])
    return Trajectory(times, fields, empty, empty, fields[-1])


def run_and_report(cfg: RunConfig, stream=None) -> dict:
    """Run one configuration and write its report files; returns the summary."""
    problem = cfg.build_problem()
    traj = run(cfg.scheme, problem, snapshot_times=cfg.snapshot_times, error_times=cfg.error_times or None)
    out = output_dir(cfg.output)
    out.mkdir(parents=True, exist_ok=True)

    error_rows = []
    for t, e in zip(traj.step_times, traj.step_errors):
        if np.isfinite(e) and (not cfg.error_times or any(abs(t - s) < 1e-9 for s in cfg.error_times)):
            error_rows.append([float(t), float(e)])
    summary = {
        "label": cfg.label,
        "problem": cfg.problem,
        "lambda": cfg.lam,
        "grid": [cfg.scheme.n_xi + 1, cfg.scheme.n_eta + 1],
        "Nt": cfg.scheme.Nt,
        "mode": traj.meta["mode"],
        "max_percent_error": traj.max_error,
        "final_max_percent_error": traj.final_max_error,
        "errors_at": [{"t": t, "max_percent_error": e} for t, e in error_rows] if cfg.error_times else [],
    }
    files = {}
    files["config.json"] = _dump_json(cfg.resolved())
    files["snapshots.json"] = json.dumps(snapshot_record(cfg, traj), indent=1, sort_keys=True) + "\n"
    if "json" in cfg.formats:
        files["summary.json"] = _dump_json(summary)
    if "csv" in cfg.formats:
        files["errors.csv"] = _csv(error_rows, ["t", "max_percent_error"])
        if cfg.probes:
            files["probes.csv"] = _csv(probe_rows(cfg, problem, traj), PROBE_HEADER)
    if cfg.probes and "json" in cfg.formats:
        files["probes.json"] = _dump_json(
            {"rows": [dict(zip(PROBE_HEADER, r)) for r in probe_rows(cfg, problem, traj)],
             "hbm_label": hbm_reference()["label"]}
        )
    if cfg.emit_contour:
        for t, f in zip(traj.times, traj.fields):
            files[f"contour_t{t:.6f}.csv"] = _csv(contour_rows(problem, f, t), ["x", "y", "value", "exact", "percent_error"])
    for name, text in files.items():
        (out / name).write_text(text)
    print(f"{cfg.problem}: max % error {traj.max_error:.6g} (final {traj.final_max_error:.6g}); wrote {out}", file=stream)
    return summary


def build_table(name: str, configs, stream=None) -> Path:
    """Run several configurations and collect their max errors in one table."""
    rows = []
    first_out = None
    for cfg in configs:
        s = run_and_report(cfg, stream=stream)
        rows.append([s["label"] or cfg.problem, cfg.problem, float(cfg.lam), s["grid"][0], s["grid"][1], s["Nt"], float(s["max_percent_error"]), float(s["final_max_percent_error"])])
        first_out = first_out or output_dir(cfg.output).parent
    path = first_out / f"{name}.csv"
    path.write_text(_csv(rows, ["label", "problem", "lambda", "n_xi_nodes", "n_eta_nodes", "Nt", "max_percent_error", "final_max_percent_error"]))
    print(f"table {name}: {len(rows)} rows -> {path}", file=stream)
    return path


def compare_runs(path_a, path_b, stream=None) -> tuple:
    """Grid-independence rate of change between two saved runs (coarse, fine)."""
    a, b = load_snapshots(path_a), load_snapshots(path_b)
    coarse, fine = (a, b) if a.fields[0].values.size <= b.fields[0].values.size else (b, a)
    if coarse.fields[0].values.shape == fine.fields[0].values.shape:
        rate = 0.0
        for fa, fb in zip(coarse.fields, fine.fields):
            keep = np.abs(fb.values) >= 1e-12
            if np.any(keep):
                rate = max(rate, float(np.max(np.abs(fb.values[keep] - fa.values[keep]) / np.abs(fb.values[keep]) * 100)))
    else:
        rate = grid_independence(coarse, fine)
    ok = rate <= INDEPENDENCE_THRESHOLD
    print(f"max rate of change {rate:.6g}% -> {'PASS' if ok else 'FAIL'} (threshold {INDEPENDENCE_THRESHOLD}%)", file=stream)
    return rate, ok


# ---------------------------------------------------------------------------
# entry point


def _error_record(kind: str, exc: BaseException) -> str:
    record = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    for attr in ("line", "key", "patch", "step"):
        if getattr(exc, attr, None) is not None:
            record[attr] = getattr(exc, attr)
    return json.dumps(_jsonable(record), sort_keys=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="patchdyn", description="Patch dynamics runs and reports.")
    sub = parser.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("run", help="run one configuration and write its report")
    p.add_argument("config")
    p.add_argument("--dry-run", action="store_true", help="validate and print the resolved parameters only")
    p = sub.add_parser("validate", help="check a configuration without running it")
    p.add_argument("config")
    p = sub.add_parser("compare", help="grid-independence check between two saved runs")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p = sub.add_parser("table", help="run several configurations and tabulate their errors")
    p.add_argument("name")
    p.add_argument("configs", nargs="+")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb in ("run", "validate"):
            cfg = load_config(args.config)
            if args.verb == "validate" or args.dry_run:
                print(_dump_json(cfg.resolved()), end="")
                return EXIT_OK
            run_and_report(cfg)
        elif args.verb == "table":
            build_table(args.name, [load_config(c) for c in args.configs])
        elif args.verb == "compare":
            _, ok = compare_runs(args.run_a, args.run_b)
            return EXIT_OK if ok else EXIT_NOT_INDEPENDENT
    except (ConfigParseError, ConfigValidationError, GridMismatch, KeyError) as exc:
        print(_error_record("config", exc), file=sys.stderr)
        return EXIT_CONFIG
    except (MacroInstability, MicroSolveError, PatchDynError, FloatingPointError) as exc:
        print(_error_record("numerical", exc), file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, json.JSONDecodeError) as exc:
        print(_error_record("io", exc), file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
