"""Coordinate mappings and transformed PDE coefficients.

A mapping sends computational coordinates ``(xi, eta)`` to physical
coordinates ``(x, y)``. The physical operator is written as

    l u_t + alpha u_xx + beta u_yy + gamma u_x + nu u_y + omega u = phi

and, under a static mapping, becomes

    l u_t + a u_xixi + b u_xieta + c u_etaeta + d u_xi + e u_eta + f u = g.

All callables here are vectorised: they accept numpy arrays (or scalars) of
matching shape and return arrays of that shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DerivativeMismatch, NonPositiveJacobian

JACOBIAN_FLOOR = 1e-14


@dataclass(frozen=True)
class Mapping:
    """Static, invertible map from the computational to the physical plane.

    Attributes:
        kind: one of ``"identity"``, ``"stretched"``, ``"polar"``, ``"user"``.
        forward: ``(xi, eta) -> (x, y)``.
        inverse_metrics: ``(xi, eta) -> (x_xi, x_eta, y_xi, y_eta)``.
        second_derivs: ``(xi, eta) -> (x_xixi, x_xieta, x_etaeta,
            y_xixi, y_xieta, y_etaeta)``.
        params: parameters of the mapping kind (e.g. ``{"lam": 0.1}``).
    """

    kind: str
    forward: Callable
    inverse_metrics: Callable
    second_derivs: Callable
    params: dict = field(default_factory=dict)

    @property
    def orthogonal(self) -> bool:
        return self.kind in ("identity", "stretched", "polar")


def identity_map() -> Mapping:
    def forward(xi, eta):
        return np.asarray(xi, dtype=float) + 0.0, np.asarray(eta, dtype=float) + 0.0

    def metrics(xi, eta):
        one = np.ones(np.broadcast(xi, eta).shape)
        zero = np.zeros_like(one)
        return one, zero, zero.copy(), one.copy()

    def second(xi, eta):
        zero = np.zeros(np.broadcast(xi, eta).shape)
        return tuple(zero.copy() for _ in range(6))

    return Mapping("identity", forward, metrics, second)


def stretched_map(lam: float) -> Mapping:
    """Boundary-clustering map ``x = xi + (lam/pi) sin(pi xi)``, same in ``eta``.

    Grid lines crowd towards ``x = 1`` and ``y = 1`` for ``lam > 0``.
    """
    lam = float(lam)

    def stretch(s):
        s = np.asarray(s, dtype=float)
        return s + lam / np.pi * np.sin(np.pi * s)

    def forward(xi, eta):
        xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
        return stretch(xi), stretch(eta)

    def metrics(xi, eta):
        xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
        zero = np.zeros(xi.shape)
        return 1.0 + lam * np.cos(np.pi * xi), zero, zero.copy(), 1.0 + lam * np.cos(np.pi * eta)

    def second(xi, eta):
        xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
        zero = np.zeros(xi.shape)
        return (
            -lam * np.pi * np.sin(np.pi * xi),
            zero,
            zero.copy(),
            zero.copy(),
            zero.copy(),
            -lam * np.pi * np.sin(np.pi * eta),
        )

    return Mapping("stretched", forward, metrics, second, {"lam": lam})


def polar_map() -> Mapping:
    """Annulus map with ``xi = theta`` and ``eta = r``.

    The angle is measured clockwise (``y = -r sin(theta)``) so that the
    Jacobian is ``+r`` with the axis order ``(theta, r)``.
    """

    def forward(theta, r):
        theta, r = np.broadcast_arrays(np.asarray(theta, float), np.asarray(r, float))
        return r * np.cos(theta), -r * np.sin(theta)

    def metrics(theta, r):
        theta, r = np.broadcast_arrays(np.asarray(theta, float), np.asarray(r, float))
        s, c = np.sin(theta), np.cos(theta)
        return -r * s, c, -r * c, -s

    def second(theta, r):
        theta, r = np.broadcast_arrays(np.asarray(theta, float), np.asarray(r, float))
        s, c = np.sin(theta), np.cos(theta)
        zero = np.zeros(theta.shape)
        return -r * c, -s, zero, r * s, -c, zero.copy()

    return Mapping("polar", forward, metrics, second)


def user_map(forward, inverse_metrics, second_derivs, **params) -> Mapping:
    return Mapping("user", forward, inverse_metrics, second_derivs, dict(params))


def jacobian(m: Mapping, xi, eta):
    """``J = x_xi y_eta - y_xi x_eta``; raises if any value is not positive."""
    x_xi, x_eta, y_xi, y_eta = m.inverse_metrics(xi, eta)
    jac = x_xi * y_eta - y_xi * x_eta
    if np.any(jac <= JACOBIAN_FLOOR):
        bad = float(np.min(jac))
        raise NonPositiveJacobian(f"Jacobian {bad:.3e} <= {JACOBIAN_FLOOR} for mapping {m.kind!r}")
    return jac


@dataclass(frozen=True)
class PhysicalCoefficients:
    """Coefficient fields of the physical operator.

    Each field is a vectorised callable ``(x, y, t) -> array``. ``l`` is the
    constant multiplier of ``u_t``.
    """

    alpha: Callable
    beta: Callable
    gamma: Callable
    nu: Callable
    omega: Callable
    phi: Callable
    l: float = 1.0
    time_dependent: bool = False

    def __post_init__(self):
        if self.l == 0:
            raise ValueError("the time-derivative multiplier l must be non-zero")


def _const(value):
    def fn(x, y, t):
        return np.full(np.broadcast(x, y).shape, float(value))

    return fn


def _as_field(value):
    return value if callable(value) else _const(value)


def from_cdr(diff_x, diff_y, vel_x, vel_y, source, reaction=0.0, time_dependent=False):
    """Physical coefficients for ``u_t + v.grad(u) = D_x u_xx + D_y u_yy - k u + S``.

    Diffusion moves to the left-hand side with a minus sign, convection keeps
    its sign and the source stays on the right. Scalars are accepted for
    constant fields.
    """
    dx, dy = _as_field(diff_x), _as_field(diff_y)
    return PhysicalCoefficients(
        alpha=lambda x, y, t: -dx(x, y, t),
        beta=lambda x, y, t: -dy(x, y, t),
        gamma=_as_field(vel_x),
        nu=_as_field(vel_y),
        omega=_as_field(reaction),
        phi=_as_field(source),
        l=1.0,
        time_dependent=time_dependent,
    )


@dataclass
class TransformedCoefficients:
    """Pointwise coefficients of the computational-domain operator."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    e: np.ndarray
    f: np.ndarray
    g: np.ndarray
    R: np.ndarray
    S: np.ndarray
    l: float = 1.0

    def evolution_form(self):
        """Coefficients of ``u_t = A u_xixi + B u_xieta + C u_etaeta
        - W u_xi - V u_eta + K u + G``, returned as a dict."""
        l = self.l
        return {
            "A": -self.a / l,
            "B": -self.b / l,
            "C": -self.c / l,
            "W": self.d / l,
            "V": self.e / l,
            "K": -self.f / l,
            "G": self.g / l,
        }


def transform_coefficients(m: Mapping, p: PhysicalCoefficients, xi, eta, t) -> TransformedCoefficients:
    """Evaluate ``a..g`` (and the intermediate ``R``, ``S``) at ``(xi, eta, t)``."""
    xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
    jac = jacobian(m, xi, eta)
    x_xi, x_eta, y_xi, y_eta = m.inverse_metrics(xi, eta)
    x_aa, x_ab, x_bb, y_aa, y_ab, y_bb = m.second_derivs(xi, eta)
    x, y = m.forward(xi, eta)

    a_hat = p.alpha(x, y, t)
    c_hat = p.beta(x, y, t)
    d_hat = p.gamma(x, y, t)
    e_hat = p.nu(x, y, t)

    q_xx = c_hat * x_eta**2 + a_hat * y_eta**2
    q_xy = a_hat * y_eta * y_xi + c_hat * x_eta * x_xi
    q_yy = c_hat * x_xi**2 + a_hat * y_xi**2
    tx = q_xx * x_aa - 2.0 * q_xy * x_ab + q_yy * x_bb
    ty = q_xx * y_aa - 2.0 * q_xy * y_ab + q_yy * y_bb
    jac2 = jac * jac
    jac3 = jac2 * jac
    R = (-y_eta * tx + x_eta * ty) / jac3
    S = (y_xi * tx - x_xi * ty) / jac3

    return TransformedCoefficients(
        a=q_xx / jac2,
        b=-2.0 * q_xy / jac2,
        c=q_yy / jac2,
        d=(d_hat * y_eta - e_hat * x_eta) / jac + R,
        e=(-d_hat * y_xi + e_hat * x_xi) / jac + S,
        f=np.broadcast_to(p.omega(x, y, t), xi.shape).astype(float),
        g=np.broadcast_to(p.phi(x, y, t), xi.shape).astype(float),
        R=R,
        S=S,
        l=p.l,
    )


@dataclass
class DerivativeReport:
    max_metric_error: float
    max_second_error: float

    @property
    def max_error(self) -> float:
        return max(self.max_metric_error, self.max_second_error)


def verify_mapping_derivatives(m: Mapping, samples, h: float = 1e-5, tol: float = 1e-6) -> DerivativeReport:
    """Check the declared derivatives of ``m`` against central differences.

    First derivatives are compared with differences of ``forward``; second
    derivatives with differences of the declared first derivatives, which
    keeps the rounding error at ``eps/h`` instead of ``eps/h**2``.
    """
    pts = np.asarray(samples, dtype=float).reshape(-1, 2)
    xi, eta = pts[:, 0], pts[:, 1]

    xp, yp = m.forward(xi + h, eta)
    xm, ym = m.forward(xi - h, eta)
    xq, yq = m.forward(xi, eta + h)
    xr, yr = m.forward(xi, eta - h)
    fd_metrics = (
        (xp - xm) / (2 * h),
        (xq - xr) / (2 * h),
        (yp - ym) / (2 * h),
        (yq - yr) / (2 * h),
    )
    declared = m.inverse_metrics(xi, eta)
    metric_err = max(float(np.max(np.abs(a - b))) for a, b in zip(fd_metrics, declared))

    mp = m.inverse_metrics(xi + h, eta)
    mm = m.inverse_metrics(xi - h, eta)
    mq = m.inverse_metrics(xi, eta + h)
    mr = m.inverse_metrics(xi, eta - h)
    # metrics order: x_xi, x_eta, y_xi, y_eta
    fd_second = (
        (mp[0] - mm[0]) / (2 * h),
        0.5 * ((mq[0] - mr[0]) + (mp[1] - mm[1])) / (2 * h),
        (mq[1] - mr[1]) / (2 * h),
        (mp[2] - mm[2]) / (2 * h),
        0.5 * ((mq[2] - mr[2]) + (mp[3] - mm[3])) / (2 * h),
        (mq[3] - mr[3]) / (2 * h),
    )
    declared2 = m.second_derivs(xi, eta)
    second_err = max(float(np.max(np.abs(a - b))) for a, b in zip(fd_second, declared2))

    report = DerivativeReport(metric_err, second_err)
    if report.max_error > tol:
        raise DerivativeMismatch(
            f"mapping {m.kind!r}: derivative discrepancy {report.max_error:.3e} > {tol}"
        )
    return report
