"""Bessel machinery for the annulus benchmark.

The radial eigenfunctions of diffusion in ``1 <= r <= 2`` with zero data on
both circles are cross products ``Z(z) = J1(mu) Y1(z) - Y1(mu) J1(z)``,
where ``mu`` solves ``J1(mu) Y1(2 mu) - Y1(mu) J1(2 mu) = 0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

from ..errors import DomainError, RootBracketFailure, SeriesTruncationWarning

INNER, OUTER = 1.0, 2.0


def bessel_j1(x):
    return special.j1(x)


def bessel_y1(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("Y1 is only defined for x > 0")
    out = special.y1(x)
    return out if out.ndim else float(out)


def cross_product(mu):
    """``J1(mu) Y1(2 mu) - Y1(mu) J1(2 mu)``."""
    mu = np.asarray(mu, dtype=float)
    return bessel_j1(mu) * bessel_y1(OUTER * mu) - bessel_y1(mu) * bessel_j1(OUTER * mu)


def cross_product_roots(m_max: int, step: float = 0.01):
    """First ``m_max`` positive roots of :func:`cross_product`.

    Roots are bracketed by a sign-change scan over ``(0.1, m_max*pi + 10)``
    and refined by Brent's method.
    """
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    return list(_roots(int(m_max), float(step)))


@lru_cache(maxsize=None)
def _roots(m_max, step):
    grid = np.arange(0.1, m_max * math.pi + 10.0, step)
    vals = cross_product(grid)
    change = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
    if change.size < m_max:
        raise RootBracketFailure(f"found {change.size} sign changes, wanted {m_max}")
    roots = []
    for k in change[:m_max]:
        roots.append(optimize.brentq(cross_product, grid[k], grid[k + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return tuple(roots)


def radial_mode(mu, r):
    """``Z1(mu r) = J1(mu) Y1(mu r) - Y1(mu) J1(mu r)``."""
    r = np.asarray(r, dtype=float)
    return bessel_j1(mu) * bessel_y1(mu * r) - bessel_y1(mu) * bessel_j1(mu * r)


@dataclass(frozen=True)
class BesselMode:
    m: int
    mu: float
    B: float
    projection: float

    @property
    def amplitude(self) -> float:
        """Series coefficient ``(pi^2/2) * projection * B``."""
        return 0.5 * math.pi**2 * self.projection * self.B


@lru_cache(maxsize=None)
def _mode(m: int) -> BesselMode:
    # roots are found in batches so that growing m_max does not rescan each time
    batch = max(16, 1 << (m - 1).bit_length())
    mu = _roots(batch, 0.01)[m - 1]
    j_in, j_out = special.j1(mu), special.j1(OUTER * mu)
    B = mu**2 * j_out**2 / (j_in**2 - j_out**2)
    proj, _ = integrate.quad(
        lambda s: s * (s - 1.0) * (2.0 - s) * radial_mode(mu, s),
        INNER,
        OUTER,
        epsabs=1e-13,
        epsrel=1e-13,
        limit=400,
    )
    return BesselMode(m, mu, B, proj)


def annulus_modes(m_max: int):
    """The first ``m_max`` series modes (root, normalisation, projection)."""
    return tuple(_mode(m) for m in range(1, int(m_max) + 1))


def modes_needed(t: float, cap: int = 200) -> int:
    """Smallest mode count whose first omitted decay factor is below ``e^-40``."""
    if t <= 0:
        return cap
    # mu_m ~ m*pi for the unit-width annulus
    m = int(math.ceil(math.sqrt(40.0 / t) / math.pi)) + 2
    return max(10, min(cap, m))


def annulus_exact(r, theta, t, m_max: int | None = None, warn: bool = True):
    """Series solution for the annulus benchmark at ``(r, theta, t)``.

    ``m_max=None`` picks the mode count from ``t``. A
    :class:`SeriesTruncationWarning` is issued when the last retained term
    is not negligible against the partial sum.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(r < INNER - 1e-12) or np.any(r > OUTER + 1e-12):
        raise DomainError("annulus solution is defined for 1 <= r <= 2")
    if m_max is None:
        m_max = modes_needed(t)
    # the radial factor only needs the distinct radii
    radii, where = np.unique(r, return_inverse=True)
    radial = np.zeros(radii.shape)
    last = np.zeros(radii.shape)
    for mode in annulus_modes(int(m_max)):
        last = mode.amplitude * radial_mode(mode.mu, radii) * math.exp(-mode.mu**2 * t)
        radial = radial + last
    if warn:
        scale = np.max(np.abs(radial))
        if scale > 0 and np.max(np.abs(last)) > 1e-12 * scale:
            warnings.warn(
                f"annulus series truncated at {m_max} modes: last term "
                f"{np.max(np.abs(last)):.2e} vs sum {scale:.2e}",
                SeriesTruncationWarning,
                stacklevel=2,
            )
    return radial[where.reshape(r.shape)] * np.sin(theta)
