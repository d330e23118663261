"""Micro integrators for the transformed PDE inside one gap-tooth patch.

Fields on a patch have shape ``(..., nx + 1, ny + 1)``: the second-to-last
axis runs along ``xi``, the last along ``eta``. Any leading axes are a batch
of independent patches integrated together; a single patch is a batch of
one. Edge profiles have shape ``(..., ny + 1)`` for the west/east edges and
``(..., nx + 1)`` for the south/north edges.

The evolution form used throughout is

    u_t = A u_xixi + B u_xieta + C u_etaeta - W u_xi - V u_eta + K u + G

(see :meth:`patchdyn.geometry.TransformedCoefficients.evolution_form`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InsufficientStencil, MixedTermUnsupported, StabilityViolation
from .geometry import TransformedCoefficients

EDGES = ("W", "E", "S", "N")


@dataclass(frozen=True)
class MicroGrid:
    """Patch discretisation: ``(nx+1) x (ny+1)`` nodes and ``nt`` steps over ``tau``."""

    nx: int
    ny: int
    nt: int
    h_xi: float
    h_eta: float
    tau: float

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"micro grid needs nx, ny >= 2, got {self.nx}, {self.ny}")
        if self.nt < 1:
            raise ValueError(f"micro grid needs nt >= 1, got {self.nt}")
        if self.h_xi <= 0 or self.h_eta <= 0 or self.tau <= 0:
            raise ValueError("patch extents and horizon must be positive")

    @property
    def dxi(self) -> float:
        return self.h_xi / self.nx

    @property
    def deta(self) -> float:
        return self.h_eta / self.ny

    @property
    def dt(self) -> float:
        return self.tau / self.nt

    def offsets(self):
        """Node offsets from the patch centre along ``xi`` and ``eta``."""
        oxi = np.linspace(-0.5 * self.h_xi, 0.5 * self.h_xi, self.nx + 1)
        oeta = np.linspace(-0.5 * self.h_eta, 0.5 * self.h_eta, self.ny + 1)
        return oxi, oeta


@dataclass(frozen=True)
class Upwind:
    """Upwind stencil for convective terms: 2, 3 or 4 points (``r`` for 4)."""

    points: int = 2
    r: float = 0.5

    def __post_init__(self):
        if self.points not in (2, 3, 4):
            raise ValueError(f"upwind stencil must use 2, 3 or 4 points, got {self.points}")


@dataclass
class EdgeCondition:
    """``value_weight * u + slope_weight * du/dn = profile`` along one edge.

    ``du/dn`` is the derivative along the coordinate normal to the edge
    (``xi`` for west/east, ``eta`` for south/north), not the outward normal.
    """

    value_weight: float
    slope_weight: float
    profile: np.ndarray

    def __post_init__(self):
        if self.value_weight == 0 and self.slope_weight == 0:
            raise ValueError("edge condition needs a non-zero weight")
        self.profile = np.asarray(self.profile, dtype=float)

    @classmethod
    def dirichlet(cls, values):
        return cls(1.0, 0.0, values)

    @classmethod
    def neumann(cls, slopes):
        return cls(0.0, 1.0, slopes)

    @classmethod
    def robin(cls, w_value, w_slope, profile):
        return cls(float(w_value), float(w_slope), profile)

    @property
    def kind(self) -> str:
        if self.slope_weight == 0:
            return "dirichlet"
        if self.value_weight == 0:
            return "neumann"
        return "robin"


@dataclass
class PatchProblem:
    """Everything needed to integrate one batch of patches over ``tau``.

    ``coeffs(t)`` returns :class:`TransformedCoefficients` sampled on the
    patch nodes at time ``t``. When ``steady_operator`` is true only ``g``
    may depend on time, and the integrators reuse the operator. ``source(t)``,
    if given, returns ``g / l`` alone and saves resampling the operator.
    """

    initial: np.ndarray
    edges: dict
    coeffs: Callable[[float], TransformedCoefficients]
    t0: float = 0.0
    steady_operator: bool = False
    upwind: Upwind = field(default_factory=Upwind)
    source: Callable[[float], np.ndarray] | None = None


# ---------------------------------------------------------------------------
# upwind differences


def upwind_stencil(values, i: int, delta: float, velocity_sign: float, scheme: Upwind = Upwind()) -> float:
    """One-sided derivative of ``values`` at node ``i``.

    ``velocity_sign > 0`` means transport towards increasing index, so the
    stencil reaches backwards. Raises :class:`InsufficientStencil` when the
    window lacks the upstream nodes.
    """
    u = np.asarray(values, dtype=float)
    n = u.size
    s = 1 if velocity_sign >= 0 else -1

    def at(k):
        idx = i - s * k
        if idx < 0 or idx >= n:
            raise InsufficientStencil(f"{scheme.points}-point upwind at node {i} of {n} needs node {idx}")
        return u[idx]

    if scheme.points == 2:
        return s * (at(0) - at(1)) / delta
    if scheme.points == 3:
        return s * (3 * at(0) - 4 * at(1) + at(2)) / (2 * delta)
    central = s * (at(-1) - at(1)) / (2 * delta)
    return central + s * scheme.r / (3 * delta) * (at(2) - 3 * at(1) + 3 * at(0) - at(-1))


def _shift(u, k):
    """``out[..., j] = u[..., j - k]`` with zero fill (last axis)."""
    out = np.zeros_like(u)
    if k > 0:
        out[..., k:] = u[..., :-k]
    elif k < 0:
        out[..., :k] = u[..., -k:]
    else:
        out[...] = u
    return out


def _high_order_correction(u, vel, delta, scheme: Upwind):
    """``-vel * (D_high u - D_2 u)`` along the last axis, zero where the
    wider stencil does not fit (those nodes keep the 2-point value)."""
    if scheme.points == 2:
        return np.zeros_like(u)
    n = u.shape[-1] - 1
    idx = np.arange(n + 1)
    um1, um2, up1, up2 = _shift(u, 1), _shift(u, 2), _shift(u, -1), _shift(u, -2)
    pos = vel >= 0
    d2 = np.where(pos, u - um1, up1 - u) / delta
    if scheme.points == 3:
        d_pos = (3 * u - 4 * um1 + um2) / (2 * delta)
        d_neg = -(3 * u - 4 * up1 + up2) / (2 * delta)
        ok_pos = (idx >= 2) & (idx <= n - 1)
        ok_neg = (idx >= 1) & (idx <= n - 2)
    else:
        central = (up1 - um1) / (2 * delta)
        d_pos = central + scheme.r / (3 * delta) * (um2 - 3 * um1 + 3 * u - up1)
        d_neg = central - scheme.r / (3 * delta) * (up2 - 3 * up1 + 3 * u - um1)
        ok_pos = (idx >= 2) & (idx <= n - 1)
        ok_neg = (idx >= 1) & (idx <= n - 2)
    dh = np.where(pos, d_pos, d_neg)
    ok = np.where(pos, ok_pos, ok_neg)
    return np.where(ok, -vel * (dh - d2), 0.0)


# ---------------------------------------------------------------------------
# one-dimensional operators along the last axis


@dataclass
class _LineOperator:
    lo: np.ndarray
    di: np.ndarray
    up: np.ndarray
    const: np.ndarray
    vel: np.ndarray
    delta: float

    def apply(self, u):
        return self.lo * _shift(u, 1) + self.di * u + self.up * _shift(u, -1) + self.const


def _line_operator(A, vel, K_half, delta, low: EdgeCondition, high: EdgeCondition) -> _LineOperator:
    """Tridiagonal ``A u'' - vel u' + K_half u`` with 2-point upwinding.

    Non-Dirichlet ends use a ghost node eliminated through the imposed
    derivative; the convective term there uses that derivative directly.
    Dirichlet end rows are left zero (those nodes are held fixed).
    """
    d2 = delta * delta
    pos = np.maximum(vel, 0.0)
    neg = np.maximum(-vel, 0.0)
    lo = A / d2 + pos / delta
    up = A / d2 + neg / delta
    di = -2.0 * A / d2 - (pos + neg) / delta + K_half
    const = np.zeros_like(di)

    for end, cond in ((0, low), (-1, high)):
        if cond.kind == "dirichlet":
            lo[..., end] = up[..., end] = di[..., end] = 0.0
            continue
        s0 = cond.profile / cond.slope_weight
        s1 = -cond.value_weight / cond.slope_weight
        a_end = A[..., end]
        v_end = vel[..., end]
        if end == 0:
            factor = -(2.0 * a_end / delta + v_end)
            lo[..., 0] = 0.0
            up[..., 0] = 2.0 * a_end / d2
        else:
            factor = 2.0 * a_end / delta - v_end
            up[..., -1] = 0.0
            lo[..., -1] = 2.0 * a_end / d2
        di[..., end] = -2.0 * a_end / d2 + factor * s1 + K_half[..., end]
        const[..., end] = factor * s0
    return _LineOperator(lo, di, up, const, vel, delta)


class _TridiagonalFactor:
    """Thomas factorisation of ``I - s L`` for many lines at once."""

    def __init__(self, op: _LineOperator, s: float):
        m_lo = np.moveaxis(-s * op.lo, -1, 0)
        m_di = np.moveaxis(1.0 - s * op.di, -1, 0)
        m_up = np.moveaxis(-s * op.up, -1, 0)
        n = m_di.shape[0]
        cp = np.empty_like(m_di)
        inv = np.empty_like(m_di)
        inv[0] = 1.0 / m_di[0]
        cp[0] = m_up[0] * inv[0]
        for k in range(1, n):
            inv[k] = 1.0 / (m_di[k] - m_lo[k] * cp[k - 1])
            cp[k] = m_up[k] * inv[k]
        self.m_lo, self.cp, self.inv = m_lo, cp, inv

    def solve(self, rhs):
        r = np.moveaxis(rhs, -1, 0)
        n = r.shape[0]
        x = np.empty_like(r)
        x[0] = r[0] * self.inv[0]
        for k in range(1, n):
            x[k] = (r[k] - self.m_lo[k] * x[k - 1]) * self.inv[k]
        for k in range(n - 2, -1, -1):
            x[k] -= self.cp[k] * x[k + 1]
        return np.moveaxis(x, 0, -1)


def _swap(a):
    return np.swapaxes(a, -1, -2)


class _PatchOperator:
    """Split operator ``L_xi + L_eta`` (+ mixed term) on a batch of patches."""

    def __init__(self, evo, grid: MicroGrid, edges, scheme: Upwind, field_shape):
        self.grid = grid
        self.scheme = scheme
        self.edges = edges
        shape = np.broadcast_shapes(
            field_shape, *(np.shape(evo[k]) for k in ("A", "B", "C", "W", "V", "K"))
        )
        full = lambda a: np.broadcast_to(a, shape).astype(float, copy=True)  # noqa: E731
        A, C, W, V, K, B = (full(evo[k]) for k in ("A", "C", "W", "V", "K", "B"))
        self.A, self.C, self.B = A, C, B
        # xi lines: move xi to the last axis
        self.op_xi = _line_operator(_swap(A), _swap(W), 0.5 * _swap(K), grid.dxi, edges["W"], edges["E"])
        self.op_eta = _line_operator(C, V, 0.5 * K, grid.deta, edges["S"], edges["N"])
        self.const_xi = _swap(self.op_xi.const)

        fixed = np.zeros(shape, dtype=bool)
        values = np.zeros(shape)
        for name, sl in (("W", np.s_[..., 0, :]), ("E", np.s_[..., -1, :]), ("S", np.s_[..., :, 0]), ("N", np.s_[..., :, -1])):
            cond = edges[name]
            if cond.kind == "dirichlet":
                fixed[sl] = True
                values[sl] = np.broadcast_to(cond.profile / cond.value_weight, values[sl].shape)
        self.fixed = fixed
        self.fixed_values = values
        self.has_mixed = bool(np.any(np.abs(B) > 0))

    def apply_xi(self, u):
        v = _swap(u)
        out = self.op_xi.apply(v) + _high_order_correction(v, self.op_xi.vel, self.op_xi.delta, self.scheme)
        return _swap(out)

    def apply_eta(self, u):
        return self.op_eta.apply(u) + _high_order_correction(u, self.op_eta.vel, self.op_eta.delta, self.scheme)

    def correction_xi(self, u):
        return _swap(_high_order_correction(_swap(u), self.op_xi.vel, self.op_xi.delta, self.scheme))

    def correction_eta(self, u):
        return _high_order_correction(u, self.op_eta.vel, self.op_eta.delta, self.scheme)

    def _edge_slope(self, cond: EdgeCondition, boundary_values):
        return (cond.profile - cond.value_weight * boundary_values) / cond.slope_weight

    def apply_mixed(self, u):
        if not self.has_mixed:
            return np.zeros_like(u)
        g = self.grid
        uxy = np.zeros_like(u)
        uxy[..., 1:-1, 1:-1] = (
            u[..., 2:, 2:] - u[..., 2:, :-2] - u[..., :-2, 2:] + u[..., :-2, :-2]
        ) / (4.0 * g.dxi * g.deta)
        # on edges with an imposed normal derivative, differentiate it tangentially
        for name, sl, tangential in (
            ("S", np.s_[..., :, 0], g.dxi),
            ("N", np.s_[..., :, -1], g.dxi),
            ("W", np.s_[..., 0, :], g.deta),
            ("E", np.s_[..., -1, :], g.deta),
        ):
            cond = self.edges[name]
            if cond.kind == "dirichlet":
                continue
            slope = self._edge_slope(cond, u[sl])
            uxy[sl] = np.gradient(slope, tangential, axis=-1)
        return np.where(self.fixed, 0.0, self.B * uxy)

    def enforce(self, u):
        return np.where(self.fixed, self.fixed_values, u)


def _build_operator(p: PatchProblem, grid: MicroGrid, t: float, adi: bool):
    tc = p.coeffs(t)
    if adi and np.any(np.abs(tc.b) > 1e-12):
        raise MixedTermUnsupported(
            f"ADI micro solver needs b == 0 on the patch, found |b| = {np.max(np.abs(tc.b)):.3e}"
        )
    evo = tc.evolution_form()
    return _PatchOperator(evo, grid, p.edges, p.upwind, np.shape(p.initial)), evo


def _source(p: PatchProblem, t, shape, fixed):
    if p.source is not None:
        g = p.source(t)
    else:
        g = p.coeffs(t).evolution_form()["G"]
    return np.where(fixed, 0.0, np.broadcast_to(g, shape))


def stability_number(evo, grid: MicroGrid) -> float:
    """Two-dimensional diffusion number ``dt * (|A|/dxi^2 + |C|/deta^2 + |B|/(2 dxi deta))``.

    Forward Euler with central differences keeps every nodal weight
    non-negative (and so stays stable) while this is at most 0.5.
    """
    number = grid.dt * (
        np.abs(evo["A"]) / grid.dxi**2
        + np.abs(evo["C"]) / grid.deta**2
        + np.abs(evo["B"]) / (2.0 * grid.dxi * grid.deta)
    )
    return float(np.max(number))


def step_adi(p: PatchProblem, grid: MicroGrid) -> np.ndarray:
    """Peaceman-Rachford ADI over ``nt`` steps of size ``tau/nt``.

    Coefficients and source are sampled at each step's half time; the source
    and reaction are split evenly between the two half-steps. Convection
    beyond 2-point upwind enters through a lagged explicit correction.
    """
    dt = grid.dt
    s = 0.5 * dt
    u = np.array(p.initial, dtype=float)
    op = None
    fxi = feta = None
    for m in range(grid.nt):
        t_half = p.t0 + (m + 0.5) * dt
        if op is None or not p.steady_operator:
            op, _ = _build_operator(p, grid, t_half, adi=True)
            u = np.broadcast_to(u, op.fixed.shape).copy()
            fxi = _TridiagonalFactor(op.op_xi, s)
            feta = _TridiagonalFactor(op.op_eta, s)
            if m == 0:
                u = op.enforce(u)
        G = _source(p, t_half, u.shape, op.fixed)

        # the implicit direction's edge terms are known and go to the right side
        rhs = u + s * (op.apply_eta(u) + G + op.correction_xi(u) + op.const_xi)
        rhs = op.enforce(rhs)
        u_star = _swap(fxi.solve(_swap(rhs)))

        rhs = u_star + s * (op.apply_xi(u_star) + G + op.correction_eta(u_star) + op.op_eta.const)
        rhs = op.enforce(rhs)
        u = feta.solve(rhs)
    return u


def step_explicit(p: PatchProblem, grid: MicroGrid) -> np.ndarray:
    """Forward Euler in time, central differences in space, over ``nt`` steps."""
    dt = grid.dt
    u = np.array(p.initial, dtype=float)
    op = None
    for m in range(grid.nt):
        t = p.t0 + m * dt
        if op is None or not p.steady_operator:
            op, evo = _build_operator(p, grid, t, adi=False)
            number = stability_number(evo, grid)
            if number > 0.5:
                raise StabilityViolation(number)
            u = np.broadcast_to(u, op.fixed.shape).copy()
            if m == 0:
                u = op.enforce(u)
        G = _source(p, t, u.shape, op.fixed)
        u = u + dt * (op.apply_xi(u) + op.apply_eta(u) + op.apply_mixed(u) + G)
    return u


SOLVERS = {"adi": step_adi, "explicit": step_explicit}
