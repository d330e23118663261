"""Coarse projective integration on top of the gap-tooth stepper."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigValidationError, MacroInstability, ShapeMismatch
from .gaptooth import CoarseField, GapToothStepper
from .microsim import SOLVERS, MicroGrid

EXACT_FLOOR = 1e-12
DIVERGENCE_FACTOR = 10.0


@dataclass
class SchemeConfig:
    """Every numerical parameter of a patch-dynamics run.

    Attributes:
        n_xi, n_eta: coarse intervals per axis (nodes are ``n + 1``).
        Nt: number of macro steps over ``[0, T]``.
        T: final time.
        tau: gap-tooth horizon.
        k: gap-tooth repeats before the derivative estimate.
        h_xi, h_eta: patch extents.
        nx, ny, nt: micro intervals in each patch and micro time steps per horizon.
        solver: ``"adi"`` or ``"explicit"``.
        upwind_points: 2, 3 or 4; ``upwind_r`` weights the 4-point stencil.
        bc_type: ``"neumann"``, ``"dirichlet"`` or ``("robin", w1, w2)``.
        restriction: ``"trapezoid"`` or ``"simpson"``.
        mode: gap-tooth mode, ``"auto"``, ``"direct"`` or ``"linear"``.
    """

    n_xi: int = 10
    n_eta: int = 10
    Nt: int = 1000
    T: float = 1.0
    tau: float = 1e-6
    k: int = 0
    h_xi: float = 0.001
    h_eta: float = 0.001
    nx: int = 10
    ny: int = 10
    nt: int = 2
    solver: str = "adi"
    upwind_points: int = 2
    upwind_r: float = 0.5
    bc_type: object = "neumann"
    restriction: str = "trapezoid"
    mode: str = "auto"

    @property
    def dt(self) -> float:
        return self.T / self.Nt

    @property
    def micro(self) -> MicroGrid:
        return MicroGrid(self.nx, self.ny, self.nt, self.h_xi, self.h_eta, self.tau)

    def validate(self, domain=None) -> "SchemeConfig":
        """Check the scheme invariants; ``domain`` enables the patch-overlap check.

        Raises:
            ConfigValidationError: naming the violated invariant.
        """
        def fail(msg):
            raise ConfigValidationError(msg)

        for name in ("n_xi", "n_eta", "Nt", "nx", "ny", "nt"):
            if int(getattr(self, name)) < 1:
                fail(f"{name} must be a positive integer")
        if self.n_xi < 2 or self.n_eta < 2:
            fail("the coarse grid needs at least 2 intervals per axis")
        if self.k < 0:
            fail("k must be >= 0")
        for name in ("T", "tau", "h_xi", "h_eta"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                fail(f"{name} must be positive and finite")
        # relative margin so that dt = tau spelled as T / Nt is still caught
        if not (self.k + 1) * self.tau < self.dt * (1 - 1e-12):
            fail(f"(k+1)*tau = {(self.k + 1) * self.tau:g} must be below dt = {self.dt:g}")
        if self.solver not in SOLVERS:
            fail(f"solver must be one of {sorted(SOLVERS)}")
        if self.upwind_points not in (2, 3, 4):
            fail("upwind_points must be 2, 3 or 4")
        if self.restriction not in ("trapezoid", "simpson"):
            fail("restriction must be 'trapezoid' or 'simpson'")
        if self.restriction == "simpson" and (self.nx % 2 or self.ny % 2):
            fail("simpson restriction needs even nx and ny")
        if self.mode not in ("auto", "direct", "linear"):
            fail("mode must be 'auto', 'direct' or 'linear'")
        bc = self.bc_type
        if isinstance(bc, str):
            if bc not in ("neumann", "dirichlet"):
                fail(f"unknown bc_type {bc!r}")
        elif not (len(bc) == 3 and bc[0] == "robin"):
            fail(f"unknown bc_type {bc!r}")
        if domain is not None:
            (a, b), (c, d) = domain
            dxi = (b - a) / self.n_xi
            deta = (d - c) / self.n_eta
            if self.h_xi > dxi * (1 + 1e-12):
                fail(f"h_xi = {self.h_xi:g} exceeds the coarse spacing {dxi:g}: patches overlap")
            if self.h_eta > deta * (1 + 1e-12):
                fail(f"h_eta = {self.h_eta:g} exceeds the coarse spacing {deta:g}: patches overlap")
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        if not isinstance(self.bc_type, str):
            out["bc_type"] = list(self.bc_type)
        return out


def _derivative_mask(U: CoarseField) -> np.ndarray:
    mask = U.interior_mask()
    if U.periodic[0]:
        mask[-1, :] = mask[0, :]
    if U.periodic[1]:
        mask[:, -1] = mask[:, 0]
    return mask


def estimate_derivative(U_k: CoarseField, U_k1: CoarseField, tau: float) -> np.ndarray:
    """``(U_k1 - U_k) / tau`` at patch nodes; boundary nodes are set to zero."""
    if not U_k.shares_grid(U_k1):
        raise ShapeMismatch("derivative estimate needs two fields on the same grid")
    mask = _derivative_mask(U_k)
    return np.where(mask, (U_k1.values - U_k.values) / tau, 0.0)


def projective_step(U: CoarseField, cfg: SchemeConfig, problem, t_n: float, stepper=None) -> CoarseField:
    """One macro step from ``t_n`` to ``t_n + dt``.

    Runs ``k + 1`` gap-tooth steps, estimates the coarse derivative from the
    last two and extrapolates with forward Euler over the rest of the step.
    """
    if stepper is None:
        stepper = GapToothStepper(problem, cfg, U, mode=cfg.mode)
    states = [U]
    for m in range(cfg.k + 1):
        states.append(stepper.step(states[-1], t_n + m * cfg.tau))
    slope = estimate_derivative(states[-2], states[-1], cfg.tau)
    base = states[-2].values
    values = base + (cfg.dt - cfg.k * cfg.tau) * slope
    out = U.with_values(values).sync_periodic()
    return problem.apply_boundary(out, t_n + cfg.dt)


def percentage_error(U: CoarseField, exact: np.ndarray) -> np.ndarray:
    """Nodewise ``|U - exact| / |exact| * 100``; NaN where excluded.

    Excluded are non-interior nodes and nodes with ``|exact| < 1e-12``.
    """
    mask = U.interior_mask() & (np.abs(exact) >= EXACT_FLOOR)
    out = np.full(U.values.shape, np.nan)
    out[mask] = np.abs(U.values[mask] - exact[mask]) / np.abs(exact[mask]) * 100.0
    return out


def _max_or_nan(a) -> float:
    return float(np.nanmax(a)) if np.any(np.isfinite(a)) else float("nan")


@dataclass
class Trajectory:
    """Result of :func:`run`.

    ``times``/``fields`` hold the requested snapshots (always including
    ``t = 0`` and the final time). ``step_times``/``step_errors`` hold the
    max interior percentage error after each macro step where it was
    evaluated (NaN elsewhere).
    """

    times: list
    fields: list
    step_times: np.ndarray
    step_errors: np.ndarray
    final: CoarseField
    final_error: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return _max_or_nan(self.step_errors)

    @property
    def final_max_error(self) -> float:
        return float("nan") if self.final_error is None else _max_or_nan(self.final_error)

    def error_at(self, t: float, tol: float = 1e-9) -> float:
        hits = np.flatnonzero(np.abs(self.step_times - t) <= tol)
        if hits.size == 0:
            raise KeyError(f"no macro step at t={t}")
        return float(self.step_errors[hits[0]])

    def snapshot(self, t: float, tol: float = 1e-9) -> CoarseField:
        for ts, f in zip(self.times, self.fields):
            if abs(ts - t) <= tol:
                return f
        raise KeyError(f"no snapshot at t={t}")


def _aligned_steps(times, dt, Nt, what):
    steps = set()
    for t in times or ():
        n = round(t / dt)
        if abs(n * dt - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= n <= Nt:
            raise ConfigValidationError(f"{what} time {t} is not a macro step time (dt={dt:g})")
        steps.add(int(n))
    return steps


def run(
    cfg: SchemeConfig,
    problem,
    snapshot_times=None,
    error_times=None,
    initial: Optional[CoarseField] = None,
    callback: Optional[Callable] = None,
) -> Trajectory:
    """Integrate ``problem`` over ``Nt`` macro steps.

    Args:
        cfg: scheme parameters (validated against the problem domain here).
        problem: a :class:`~patchdyn.problems.ProblemSpec`.
        snapshot_times: extra times at which to keep the coarse field.
        error_times: times at which to evaluate the exact-solution error;
            ``None`` evaluates it after every step.
        initial: optional starting field (defaults to the sampled IC).
        callback: called as ``callback(n, t, U)`` after each step.

    Raises:
        MacroInstability: when the field blows past 10x its initial maximum
            or stops being finite.
        MicroSolveError: with the failing step index attached.
    """
    cfg.validate(problem.domain)
    dt, Nt = cfg.dt, cfg.Nt
    U = initial if initial is not None else problem.initial_field(cfg.n_xi, cfg.n_eta)
    snap_steps = _aligned_steps(snapshot_times, dt, Nt, "snapshot") | {0, Nt}
    err_steps = None if error_times is None else _aligned_steps(error_times, dt, Nt, "error") | {Nt}
    has_exact = problem.exact is not None

    stepper = GapToothStepper(problem, cfg, U, mode=cfg.mode)
    limit = DIVERGENCE_FACTOR * float(np.max(np.abs(U.values)))

    times, fields = [], []
    if 0 in snap_steps:
        times.append(0.0)
        fields.append(U)
    step_times = dt * np.arange(1, Nt + 1)
    step_errors = np.full(Nt, np.nan)
    final_error = None

    for n in range(Nt):
        t_n = n * dt
        try:
            U = projective_step(U, cfg, problem, t_n, stepper)
        except Exception as exc:
            if hasattr(exc, "step") and exc.step is None:
                exc.step = n
            raise
        peak = float(np.max(np.abs(U.values)))
        if not math.isfinite(peak) or (limit > 0 and peak > limit):
            raise MacroInstability(
                f"coarse field diverged at step {n + 1} (t={step_times[n]:.6g}): "
                f"max|U| = {peak:.3e} exceeds {limit:.3e}"
            )
        t1 = step_times[n]
        if has_exact and (err_steps is None or n + 1 in err_steps):
            pct = percentage_error(U, problem.exact_field(U, t1))
            step_errors[n] = _max_or_nan(pct)
            if n + 1 == Nt:
                final_error = pct
        if n + 1 in snap_steps:
            times.append(float(t1))
            fields.append(U)
        if callback is not None:
            callback(n, t1, U)

    meta = {"problem": problem.name, "mode": stepper.mode, "config": cfg.to_dict()}
    return Trajectory(times, fields, step_times, step_errors, U, final_error, meta)
