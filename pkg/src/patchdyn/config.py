"""Run configuration files.

A configuration is an INI-style file with two sections::

    [run]
    problem = cdr-const
    lambda = 0.1
    output = runs/cdr-const-l01
    snapshot_times = 0.5, 1.0
    formats = csv, json
    emit_contour = yes

    [scheme]
    n_xi = 10
    n_eta = 10
    Nt = 2000

Every key is optional except ``problem``; missing scheme keys take the
per-problem defaults below. Unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cpi import SchemeConfig
from .errors import ConfigParseError, ConfigValidationError
from .gaptooth import GapToothStepper
from .microsim import stability_number
from .problems import REGISTRY, make_problem

PROBLEM_DEFAULTS = {
    "cdr-const": dict(n_xi=10, n_eta=10, Nt=2000, tau=1e-6, h_xi=0.001, h_eta=0.001, nx=10, ny=10, nt=2, k=0, solver="adi"),
    "cdr-var": dict(n_xi=10, n_eta=10, Nt=2000, tau=1e-6, h_xi=0.001, h_eta=0.001, nx=10, ny=10, nt=2, k=0, solver="adi"),
    # nt = 1600 rather than 1500 keeps the explicit micro scheme inside its
    # two-dimensional stability bound on the innermost ring of patches
    "annulus": dict(n_xi=16, n_eta=10, Nt=500, tau=1e-6, h_xi=0.001, h_eta=0.001, nx=20, ny=20, nt=1600, k=0, solver="explicit"),
}

FORMATS = ("csv", "json")

_INT = {"n_xi", "n_eta", "Nt", "k", "nx", "ny", "nt", "upwind_points"}
_FLOAT = {"T", "tau", "h_xi", "h_eta", "upwind_r"}
_STR = {"solver", "restriction", "mode"}
SCHEME_KEYS = _INT | _FLOAT | _STR | {"bc_type", "h", "robin_weights"}
RUN_KEYS = {"problem", "lambda", "output", "snapshot_times", "error_times", "probes", "formats", "emit_contour", "label"}


@dataclass
class RunConfig:
    """A fully resolved run: problem choice, scheme and report options."""

    problem: str
    scheme: SchemeConfig
    lam: float = 0.0
    output: str = "runs/out"
    snapshot_times: tuple = ()
    error_times: tuple = ()
    probes: tuple = ()
    formats: tuple = FORMATS
    emit_contour: bool = False
    label: str = ""
    source: str = field(default="", compare=False)

    def build_problem(self):
        return make_problem(self.problem, self.lam)

    def resolved(self) -> dict:
        return {
            "problem": self.problem,
            "lambda": self.lam,
            "output": self.output,
            "snapshot_times": list(self.snapshot_times),
            "error_times": list(self.error_times),
            "probes": [list(p) for p in self.probes],
            "formats": list(self.formats),
            "emit_contour": self.emit_contour,
            "label": self.label,
            "scheme": self.scheme.to_dict(),
        }


def _key_line(text: str, section: str, key: str):
    current = None
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"\[(.+)\]$", stripped)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and re.match(rf"{re.escape(key)}\s*[=:]", stripped, re.IGNORECASE):
            return n
    return None


def _floats(raw: str):
    return tuple(float(v) for v in re.split(r"[,\s]+", raw.strip()) if v)


def _probes(raw: str):
    out = []
    for chunk in raw.split(";"):
        if chunk.strip():
            pair = _floats(chunk)
            if len(pair) != 2:
                raise ValueError(f"probe {chunk.strip()!r} needs two coordinates")
            out.append(pair)
    return tuple(out)


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse configuration text; see the module docstring for the schema.

    Raises:
        ConfigParseError: malformed text, unknown section/key or bad value.
        ConfigValidationError: a scheme invariant is violated.
    """
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigParseError(f"{source}: malformed configuration", line=line) from None
    except configparser.Error as exc:
        raise ConfigParseError(f"{source}: {exc}", line=getattr(exc, "lineno", None)) from None

    for section in parser.sections():
        if section not in ("run", "scheme"):
            raise ConfigParseError(f"{source}: unknown section [{section}]")
    run = dict(parser["run"]) if parser.has_section("run") else {}
    scheme = dict(parser["scheme"]) if parser.has_section("scheme") else {}
    for section, raw, allowed in (("run", run, RUN_KEYS), ("scheme", scheme, SCHEME_KEYS)):
        for key in raw:
            if key not in allowed:
                raise ConfigParseError(f"{source}: unknown key in [{section}]", line=_key_line(text, section, key), key=key)

    if "problem" not in run:
        raise ConfigParseError(f"{source}: [run] needs a problem", key="problem")
    problem = run["problem"].strip()
    if problem not in REGISTRY:
        raise ConfigValidationError(f"unknown problem {problem!r}; choose from {sorted(REGISTRY)}")

    def convert(section, key, fn):
        raw = (run if section == "run" else scheme)[key]
        try:
            return fn(raw)
        except ValueError as exc:
            raise ConfigParseError(f"{source}: bad value {raw!r}: {exc}", line=_key_line(text, section, key), key=key) from None

    values = dict(PROBLEM_DEFAULTS[problem])
    if "h" in scheme:
        values["h_xi"] = values["h_eta"] = convert("scheme", "h", float)
    for key in scheme:
        if key in _INT:
            values[key] = convert("scheme", key, int)
        elif key in _FLOAT:
            values[key] = convert("scheme", key, float)
        elif key in _STR:
            values[key] = scheme[key].strip().lower()
    bc = scheme.get("bc_type", "neumann").strip().lower()
    if bc == "robin":
        if "robin_weights" not in scheme:
            raise ConfigParseError(f"{source}: robin bc_type needs robin_weights = w_value, w_slope", key="robin_weights")
        w = convert("scheme", "robin_weights", _floats)
        if len(w) != 2:
            raise ConfigParseError(f"{source}: robin_weights needs two numbers", key="robin_weights")
        values["bc_type"] = ("robin", w[0], w[1])
    else:
        values["bc_type"] = bc

    cfg = RunConfig(
        problem=problem,
        scheme=SchemeConfig(**values),
        lam=convert("run", "lambda", float) if "lambda" in run else 0.0,
        output=run.get("output", f"runs/{problem}").strip(),
        snapshot_times=convert("run", "snapshot_times", _floats) if "snapshot_times" in run else (),
        error_times=convert("run", "error_times", _floats) if "error_times" in run else (),
        probes=convert("run", "probes", _probes) if "probes" in run else (),
        formats=tuple(f.strip().lower() for f in run.get("formats", "csv, json").split(",") if f.strip()),
        emit_contour=convert("run", "emit_contour", _bool) if "emit_contour" in run else False,
        label=run.get("label", "").strip(),
        source=source,
    )
    return validate_run(cfg)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def validate_run(cfg: RunConfig) -> RunConfig:
    """Check every invariant before any computation is started."""
    bad = [f for f in cfg.formats if f not in FORMATS]
    if bad:
        raise ConfigValidationError(f"unknown report format(s) {bad}; choose from {list(FORMATS)}")
    try:
        problem = cfg.build_problem()
    except ValueError as exc:
        raise ConfigValidationError(str(exc)) from None
    s = cfg.scheme
    s.validate(problem.domain)
    dt = s.dt
    for name, times in (("snapshot", cfg.snapshot_times), ("error", cfg.error_times)):
        for t in times:
            n = round(t / dt)
            if not (0 <= t <= s.T) or abs(n * dt - t) > 1e-9 * max(1.0, t):
                raise ConfigValidationError(f"{name} time {t} is not a macro step time in [0, {s.T}] (dt = {dt:g})")
    U = problem.initial_field(s.n_xi, s.n_eta)
    for probe in cfg.probes:
        i = np.flatnonzero(np.isclose(U.xi, probe[0], atol=1e-9))
        j = np.flatnonzero(np.isclose(U.eta, probe[1], atol=1e-9))
        if i.size == 0 or j.size == 0:
            raise ConfigValidationError(f"probe {probe} is not a coarse node")
    if s.solver == "explicit":
        check_micro_stability(problem, s, U)
    return cfg


def check_micro_stability(problem, scheme: SchemeConfig, U=None) -> float:
    """Largest explicit stability number over all patches; raises above 0.5."""
    if U is None:
        U = problem.initial_field(scheme.n_xi, scheme.n_eta)
    stepper = GapToothStepper(problem, replace(scheme, mode="direct"), U, mode="direct")
    xi, eta = stepper.node_xi, stepper.node_eta
    axis = getattr(problem, "invariant_axis", None)
    if axis is not None:
        key = stepper.jj if axis == 0 else stepper.ii
        _, reps = np.unique(key, return_index=True)
        xi, eta = xi[reps], eta[reps]
    evo = problem.coefficients(xi, eta, 0.0).evolution_form()
    number = stability_number(evo, scheme.micro)
    if not math.isfinite(number) or number > 0.5:
        raise ConfigValidationError(
            f"explicit micro stability number {number:.4f} exceeds 0.5; raise nt or coarsen nx/ny"
        )
    return number


__all__ = [
    "FORMATS",
    "PROBLEM_DEFAULTS",
    "RunConfig",
    "check_micro_stability",
    "load_config",
    "parse_config",
    "validate_run",
]
