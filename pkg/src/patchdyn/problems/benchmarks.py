"""Benchmark problems posed on the computational rectangle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import InvalidStretch
from ..gaptooth import CoarseField
from ..geometry import Mapping, PhysicalCoefficients, from_cdr, identity_map, polar_map, stretched_map, transform_coefficients
from .special import annulus_exact

SIDES = ("xi_lo", "xi_hi", "eta_lo", "eta_hi")


@dataclass
class ProblemSpec:
    """A linear evolution problem on ``domain = ((a, b), (c, d))``.

    ``initial(xi, eta)``, ``boundary[side](xi, eta, t)`` and ``exact(xi, eta, t)``
    are vectorised and take computational coordinates. Sides of a periodic
    axis need no boundary function.

    ``steady_operator`` says the operator coefficients do not depend on time;
    ``source_free`` says ``phi`` vanishes identically; ``invariant_axis``
    (0 or 1) marks an axis along which the coefficients do not vary.
    """

    name: str
    mapping: Mapping
    physical: PhysicalCoefficients
    initial: Callable
    boundary: dict
    domain: tuple
    T: float = 1.0
    exact: Optional[Callable] = None
    periodic: tuple = (False, False)
    steady_operator: bool = True
    source_free: bool = False
    invariant_axis: Optional[int] = None
    extent: tuple = (1.0, 1.0)
    meta: dict = field(default_factory=dict)

    def coefficients(self, xi, eta, t):
        return transform_coefficients(self.mapping, self.physical, xi, eta, t)

    def source(self, xi, eta, t):
        x, y = self.mapping.forward(xi, eta)
        return self.physical.phi(x, y, t) / self.physical.l

    def initial_field(self, n_xi: int, n_eta: int) -> CoarseField:
        U = CoarseField.on_domain(self.domain, n_xi, n_eta, self.periodic)
        XI, ETA = np.meshgrid(U.xi, U.eta, indexing="ij")
        U = U.with_values(self.initial(XI, ETA)).sync_periodic()
        return self.apply_boundary(U, 0.0)

    def apply_boundary(self, U: CoarseField, t: float) -> CoarseField:
        """Overwrite the non-periodic boundary nodes with the boundary data at ``t``."""
        v = U.values.copy()
        if not self.periodic[0]:
            v[0, :] = self.boundary["xi_lo"](U.xi[0], U.eta, t)
            v[-1, :] = self.boundary["xi_hi"](U.xi[-1], U.eta, t)
        if not self.periodic[1]:
            v[:, 0] = self.boundary["eta_lo"](U.xi, U.eta[0], t)
            v[:, -1] = self.boundary["eta_hi"](U.xi, U.eta[-1], t)
        return U.with_values(v)

    def exact_field(self, U: CoarseField, t: float):
        if self.exact is None:
            return None
        XI, ETA = np.meshgrid(U.xi, U.eta, indexing="ij")
        return np.broadcast_to(self.exact(XI, ETA, t), XI.shape).astype(float)

    def check_compatibility(self, n: int = 33, tol: float = 1e-10) -> float:
        """Max mismatch between ``initial`` and ``boundary`` at ``t = 0``."""
        (a, b), (c, d) = self.domain
        xs = np.linspace(a, b, n)
        ys = np.linspace(c, d, n)
        worst = 0.0
        checks = []
        if not self.periodic[0]:
            checks += [("xi_lo", np.full(n, a), ys), ("xi_hi", np.full(n, b), ys)]
        if not self.periodic[1]:
            checks += [("eta_lo", xs, np.full(n, c)), ("eta_hi", xs, np.full(n, d))]
        for side, X, Y in checks:
            diff = np.abs(self.boundary[side](X, Y, 0.0) - self.initial(X, Y))
            worst = max(worst, float(np.max(diff)))
        if worst > tol:
            raise ValueError(f"{self.name}: initial and boundary data disagree by {worst:.3e}")
        return worst


# ---------------------------------------------------------------------------
# convection-dominated CDR on a stretched grid


def _check_lambda(lam):
    if not (0.0 <= lam < 1.0):
        raise InvalidStretch(f"stretching parameter must lie in [0, 1), got {lam}")


def cdr_exact(x, y, t):
    return np.exp(x + y + t)


def stretched_cdr_fields(lam, xi, eta):
    """Closed-form computational coefficients for the constant-diffusivity CDR.

    Returns ``(v_xi, v_eta, D_xi, D_eta)`` for ``u_t + v_xi u_xi + v_eta u_eta
    = D_xi u_xixi + D_eta u_etaeta + S_c``.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)

    def parts(s):
        js = 1.0 + lam * np.cos(np.pi * s)
        x = s + lam / np.pi * np.sin(np.pi * s)
        v = 10.0 * x / js - lam * np.pi * np.sin(np.pi * s) / js**3
        return v, 1.0 / js**2

    v_xi, d_xi = parts(xi)
    v_eta, d_eta = parts(eta)
    return v_xi, v_eta, d_xi, d_eta


def _cdr_problem(name, lam, diffusivity, source, meta):
    _check_lambda(lam)
    mapping = identity_map() if lam == 0 else stretched_map(lam)
    physical = from_cdr(diffusivity, diffusivity, lambda x, y, t: 10.0 * x, lambda x, y, t: 10.0 * y, source)
    fwd = mapping.forward

    def exact(xi, eta, t):
        x, y = fwd(xi, eta)
        return cdr_exact(x, y, t)

    def initial(xi, eta):
        return exact(xi, eta, 0.0)

    boundary = {side: exact for side in SIDES}
    return ProblemSpec(
        name=name,
        mapping=mapping,
        physical=physical,
        initial=initial,
        boundary=boundary,
        domain=((0.0, 1.0), (0.0, 1.0)),
        T=1.0,
        exact=exact,
        steady_operator=True,
        source_free=False,
        extent=(1.0, 1.0),
        meta=dict(meta, lam=lam),
    )


def problem1_constant(lam: float = 0.0) -> ProblemSpec:
    """``u_t + 10x u_x + 10y u_y = u_xx + u_yy + (10x + 10y - 1) e^{x+y+t}`` on the unit square."""
    return _cdr_problem(
        "cdr-const",
        lam,
        1.0,
        lambda x, y, t: (10.0 * x + 10.0 * y - 1.0) * np.exp(x + y + t),
        {"diffusivity": "constant"},
    )


def problem1_variable(lam: float = 0.0) -> ProblemSpec:
    """Same convection and exact solution with diffusivity ``1 + x``."""
    return _cdr_problem(
        "cdr-var",
        lam,
        lambda x, y, t: 1.0 + x,
        lambda x, y, t: (8.0 * x + 10.0 * y - 1.0) * np.exp(x + y + t),
        {"diffusivity": "1+x"},
    )


# ---------------------------------------------------------------------------
# annulus diffusion


def annulus_initial(theta, r):
    return (r - 1.0) * (2.0 - r) * np.sin(theta)


def problem2_annulus(D: float = 1.0) -> ProblemSpec:
    """Diffusion in ``1 < r < 2`` with ``xi = theta`` periodic and ``eta = r``.

    Zero data on both circles; initial field ``(r-1)(2-r) sin(theta)``.
    """
    if D != 1.0:
        exact = None
    else:
        def exact(theta, r, t):
            if t == 0:
                return annulus_initial(theta, r)
            return annulus_exact(r, theta, t, warn=False)

    zero = lambda xi, eta, t: np.zeros(np.broadcast(xi, eta).shape)  # noqa: E731
    return ProblemSpec(
        name="annulus",
        mapping=polar_map(),
        physical=from_cdr(D, D, 0.0, 0.0, 0.0),
        initial=annulus_initial,
        boundary={"eta_lo": zero, "eta_hi": zero},
        domain=((0.0, 2.0 * math.pi), (1.0, 2.0)),
        T=1.0,
        exact=exact,
        periodic=(True, False),
        steady_operator=True,
        source_free=True,
        invariant_axis=0,
        extent=(4.0, 4.0),
        meta={"D": D},
    )


# ---------------------------------------------------------------------------
# small problems used as scheme checks


def zero_problem() -> ProblemSpec:
    """Pure diffusion with zero data everywhere: the solution stays zero."""
    zero = lambda xi, eta, t=0.0: np.zeros(np.broadcast(xi, eta).shape)  # noqa: E731
    return ProblemSpec(
        name="zero",
        mapping=identity_map(),
        physical=from_cdr(1.0, 1.0, 0.0, 0.0, 0.0),
        initial=zero,
        boundary={side: zero for side in SIDES},
        domain=((0.0, 1.0), (0.0, 1.0)),
        exact=zero,
        source_free=True,
    )


def steady_linear_problem() -> ProblemSpec:
    """``u_t = u_xx + u_yy`` with the time-independent solution ``u = x + y``."""
    def exact(xi, eta, t=0.0):
        return np.asarray(xi, float) + np.asarray(eta, float)

    return ProblemSpec(
        name="steady-linear",
        mapping=identity_map(),
        physical=from_cdr(1.0, 1.0, 0.0, 0.0, 0.0),
        initial=lambda xi, eta: exact(xi, eta),
        boundary={side: exact for side in SIDES},
        domain=((0.0, 1.0), (0.0, 1.0)),
        exact=exact,
        source_free=True,
    )


def homogeneous_diffusion_problem(initial) -> ProblemSpec:
    """Unit-square diffusion with zero boundary data and a caller-supplied start."""
    zero = lambda xi, eta, t: np.zeros(np.broadcast(xi, eta).shape)  # noqa: E731
    return ProblemSpec(
        name="homogeneous-diffusion",
        mapping=identity_map(),
        physical=from_cdr(1.0, 1.0, 0.0, 0.0, 0.0),
        initial=initial,
        boundary={side: zero for side in SIDES},
        domain=((0.0, 1.0), (0.0, 1.0)),
        source_free=True,
    )
