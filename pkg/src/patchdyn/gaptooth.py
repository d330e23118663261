"""One gap-tooth step: patch conditions, lifting, micro evolution, restriction.

Coarse values live on an equidistant ``(N_xi + 1) x (N_eta + 1)`` grid in
the computational plane. A patch of size ``h_xi x h_eta`` sits on every
interior node. Along a periodic axis node ``N`` is the same point as node
``0``; every node ``0..N-1`` then carries a patch.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import IndexOutOfRange, MicroSolveError, PatchDynError, ShapeMismatch
from .microsim import SOLVERS, EdgeCondition, MicroGrid, PatchProblem, Upwind


@dataclass
class CoarseField:
    """Macro values ``U[i, j]`` at ``(xi[i], eta[j])``.

    ``periodic`` flags each axis; a non-periodic axis takes its end values
    from the problem's boundary data.
    """

    values: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    periodic: tuple = (False, False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        if self.values.shape != (self.xi.size, self.eta.size):
            raise ShapeMismatch(
                f"values {self.values.shape} do not match nodes ({self.xi.size}, {self.eta.size})"
            )

    @classmethod
    def on_domain(cls, domain, n_xi, n_eta, periodic=(False, False), values=None):
        (a, b), (c, d) = domain
        xi = np.linspace(a, b, n_xi + 1)
        eta = np.linspace(c, d, n_eta + 1)
        if values is None:
            values = np.zeros((n_xi + 1, n_eta + 1))
        return cls(values, xi, eta, tuple(periodic))

    @property
    def n_xi(self) -> int:
        return self.xi.size - 1

    @property
    def n_eta(self) -> int:
        return self.eta.size - 1

    @property
    def dxi(self) -> float:
        return (self.xi[-1] - self.xi[0]) / self.n_xi

    @property
    def deta(self) -> float:
        return (self.eta[-1] - self.eta[0]) / self.n_eta

    def interior_indices(self, axis):
        n = self.n_xi if axis == 0 else self.n_eta
        return np.arange(0, n) if self.periodic[axis] else np.arange(1, n)

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.values.shape, dtype=bool)
        ii, jj = self.interior_indices(0), self.interior_indices(1)
        mask[np.ix_(ii, jj)] = True
        return mask

    def with_values(self, values) -> "CoarseField":
        return replace(self, values=np.array(values, dtype=float))

    def sync_periodic(self) -> "CoarseField":
        v = self.values.copy()
        if self.periodic[0]:
            v[-1, :] = v[0, :]
        if self.periodic[1]:
            v[:, -1] = v[:, 0]
        return self.with_values(v)

    def shares_grid(self, other: "CoarseField") -> bool:
        return (
            self.values.shape == other.values.shape
            and np.array_equal(self.xi, other.xi)
            and np.array_equal(self.eta, other.eta)
        )


# ---------------------------------------------------------------------------
# Lagrange stencil


def _lagrange(nodes, x):
    """Quadratic Lagrange basis on three ``nodes`` (``(..., 3)``) at ``x`` (``(..., m)``).

    Returns ``(L, dL)`` with shape ``(..., m, 3)``.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.asarray(x, dtype=float)
    n0, n1, n2 = (nodes[..., k, None] for k in range(3))
    d0 = (n0 - n1) * (n0 - n2)
    d1 = (n1 - n0) * (n1 - n2)
    d2 = (n2 - n0) * (n2 - n1)
    L = np.stack([(x - n1) * (x - n2) / d0, (x - n0) * (x - n2) / d1, (x - n0) * (x - n1) / d2], axis=-1)
    dL = np.stack([(2 * x - n1 - n2) / d0, (2 * x - n0 - n2) / d1, (2 * x - n0 - n1) / d2], axis=-1)
    return L, dL


@dataclass
class StencilPoly:
    """Tensor-product quadratic interpolant through a 3x3 block of coarse values.

    Arrays may carry leading batch axes: ``values`` is ``(..., 3, 3)`` and the
    abscissae are ``(..., 3)``.
    """

    values: np.ndarray
    xi_nodes: np.ndarray
    eta_nodes: np.ndarray

    @property
    def center(self):
        return self.xi_nodes[..., 1], self.eta_nodes[..., 1]

    def _eval(self, xi_pts, eta_pts, dxi=False, deta=False):
        Lx, dLx = _lagrange(self.xi_nodes, xi_pts)
        Ly, dLy = _lagrange(self.eta_nodes, eta_pts)
        bx = dLx if dxi else Lx
        by = dLy if deta else Ly
        return np.einsum("...ap,...pq,...bq->...ab", bx, self.values, by)

    def evaluate(self, xi_pts, eta_pts):
        """Tensor evaluation on ``xi_pts (..., mx)`` x ``eta_pts (..., my)``."""
        return self._eval(xi_pts, eta_pts)

    def d_xi(self, xi_pts, eta_pts):
        return self._eval(xi_pts, eta_pts, dxi=True)

    def d_eta(self, xi_pts, eta_pts):
        return self._eval(xi_pts, eta_pts, deta=True)

    def derivatives(self):
        """Central-difference derivatives at the centre node.

        These coincide with the derivatives of the interpolant there:
        ``(U_xi, U_eta, U_xixi, U_xieta, U_etaeta)``.
        """
        v = self.values
        hx = self.xi_nodes[..., 1] - self.xi_nodes[..., 0]
        hy = self.eta_nodes[..., 1] - self.eta_nodes[..., 0]
        u_x = (v[..., 2, 1] - v[..., 0, 1]) / (2 * hx)
        u_y = (v[..., 1, 2] - v[..., 1, 0]) / (2 * hy)
        u_xx = (v[..., 2, 1] - 2 * v[..., 1, 1] + v[..., 0, 1]) / hx**2
        u_yy = (v[..., 1, 2] - 2 * v[..., 1, 1] + v[..., 1, 0]) / hy**2
        u_xy = (v[..., 2, 2] - v[..., 2, 0] - v[..., 0, 2] + v[..., 0, 0]) / (4 * hx * hy)
        return u_x, u_y, u_xx, u_xy, u_yy


def _stencil_indices(n, periodic, idx, spacing, nodes):
    """Neighbour indices and contiguous abscissae along one axis."""
    idx = np.asarray(idx)
    offsets = np.array([-1, 0, 1])
    if periodic:
        neigh = (idx[..., None] + offsets) % n
        absc = nodes[idx][..., None] + offsets * spacing
    else:
        neigh = idx[..., None] + offsets
        absc = nodes[neigh]
    return neigh, absc


def build_stencils(U: CoarseField, ii, jj) -> StencilPoly:
    """Batched 3x3 stencils centred at ``(ii[k], jj[k])``."""
    ii = np.asarray(ii)
    jj = np.asarray(jj)
    for axis, idx in ((0, ii), (1, jj)):
        n = U.n_xi if axis == 0 else U.n_eta
        lo = 0 if U.periodic[axis] else 1
        if np.any(idx < lo) or np.any(idx > n - 1):
            raise IndexOutOfRange(f"patch index outside {lo}..{n - 1} on axis {axis}")
    ni, ax = _stencil_indices(U.n_xi, U.periodic[0], ii, U.dxi, U.xi)
    nj, ay = _stencil_indices(U.n_eta, U.periodic[1], jj, U.deta, U.eta)
    vals = U.values[ni[..., :, None], nj[..., None, :]]
    return StencilPoly(vals, ax, ay)


def build_stencil(U: CoarseField, i: int, j: int) -> StencilPoly:
    """The 3x3 stencil around coarse node ``(i, j)``."""
    return build_stencils(U, np.asarray(i), np.asarray(j))


def _edge_points(s: StencilPoly, grid: MicroGrid):
    xc, yc = s.center
    oxi, oeta = grid.offsets()
    xi_nodes = xc[..., None] + oxi
    eta_nodes = yc[..., None] + oeta
    west = xc[..., None] - 0.5 * grid.h_xi
    east = xc[..., None] + 0.5 * grid.h_xi
    south = yc[..., None] - 0.5 * grid.h_eta
    north = yc[..., None] + 0.5 * grid.h_eta
    return xi_nodes, eta_nodes, west, east, south, north


def neumann_edge_slopes(s: StencilPoly, grid: MicroGrid) -> dict:
    """Normal slopes of the interpolant sampled at the micro boundary nodes.

    ``W``/``E`` hold ``dP/dxi`` along ``eta``; ``S``/``N`` hold ``dP/deta``
    along ``xi``.
    """
    xi_n, eta_n, west, east, south, north = _edge_points(s, grid)
    return {
        "W": s.d_xi(west, eta_n)[..., 0, :],
        "E": s.d_xi(east, eta_n)[..., 0, :],
        "S": s.d_eta(xi_n, south)[..., :, 0],
        "N": s.d_eta(xi_n, north)[..., :, 0],
    }


def dirichlet_edge_values(s: StencilPoly, grid: MicroGrid) -> dict:
    """Interpolant values sampled at the micro boundary nodes of each edge."""
    xi_n, eta_n, west, east, south, north = _edge_points(s, grid)
    return {
        "W": s.evaluate(west, eta_n)[..., 0, :],
        "E": s.evaluate(east, eta_n)[..., 0, :],
        "S": s.evaluate(xi_n, south)[..., :, 0],
        "N": s.evaluate(xi_n, north)[..., :, 0],
    }


def edge_conditions(s: StencilPoly, grid: MicroGrid, bc="neumann") -> dict:
    """Patch edge conditions of the requested type from the interpolant.

    ``bc`` is ``"neumann"``, ``"dirichlet"`` or ``("robin", w_value, w_slope)``.
    """
    if bc == "neumann":
        return {k: EdgeCondition.neumann(v) for k, v in neumann_edge_slopes(s, grid).items()}
    if bc == "dirichlet":
        return {k: EdgeCondition.dirichlet(v) for k, v in dirichlet_edge_values(s, grid).items()}
    if isinstance(bc, (tuple, list)) and bc[0] == "robin":
        w1, w2 = float(bc[1]), float(bc[2])
        vals = dirichlet_edge_values(s, grid)
        slopes = neumann_edge_slopes(s, grid)
        return {k: EdgeCondition.robin(w1, w2, w1 * vals[k] + w2 * slopes[k]) for k in vals}
    raise ValueError(f"unknown patch boundary condition {bc!r}")


def lift(s: StencilPoly, grid: MicroGrid) -> np.ndarray:
    """Quadratic Taylor field whose exact patch average is the centre value."""
    u_x, u_y, u_xx, u_xy, u_yy = s.derivatives()
    c0 = s.values[..., 1, 1] - grid.h_xi**2 / 24.0 * u_xx - grid.h_eta**2 / 24.0 * u_yy
    oxi, oeta = grid.offsets()
    X = oxi[:, None]
    Y = oeta[None, :]
    e = lambda a: np.asarray(a)[..., None, None]  # noqa: E731
    return (
        e(c0)
        + e(u_x) * X
        + e(u_y) * Y
        + 0.5 * (e(u_xx) * X**2 + 2.0 * e(u_xy) * X * Y + e(u_yy) * Y**2)
    )


def _weights(n, rule):
    if rule == "trapezoid":
        w = np.ones(n + 1)
        w[0] = w[-1] = 0.5
        return w / n
    if rule == "simpson":
        if n % 2:
            raise ValueError("Simpson restriction needs an even number of micro intervals")
        w = np.ones(n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return w / (3.0 * n)
    raise ValueError(f"unknown quadrature rule {rule!r}")


def restrict(u, rule: str = "trapezoid"):
    """Patch average of ``u`` (``(..., nx+1, ny+1)``) by a composite rule."""
    u = np.asarray(u, dtype=float)
    wx = _weights(u.shape[-2] - 1, rule)
    wy = _weights(u.shape[-1] - 1, rule)
    return np.einsum("...ij,i,j->...", u, wx, wy)


# ---------------------------------------------------------------------------
# the step


class GapToothStepper:
    """Gap-tooth stepper for one problem/configuration pair.

    Patch layout, node coordinates and (for steady operators) coefficient
    arrays are computed once and reused. ``mode`` selects how patches are
    evolved:

    * ``"direct"``: every patch is integrated by the micro solver each step.
    * ``"linear"``: for source-free problems with a steady operator the
      restricted result is a fixed linear combination of the nine stencil
      values; those weights are obtained once by running the micro solver on
      the nine unit stencils and then reused.
    * ``"auto"``: ``"linear"`` when the problem allows it, else ``"direct"``.
    """

    def __init__(self, problem, cfg, template: CoarseField, mode: str = "auto"):
        self.problem = problem
        self.cfg = cfg
        self.grid = MicroGrid(cfg.nx, cfg.ny, cfg.nt, cfg.h_xi, cfg.h_eta, cfg.tau)
        self.solver = SOLVERS[cfg.solver]
        self.upwind = Upwind(cfg.upwind_points, cfg.upwind_r)
        self.bc = cfg.bc_type
        self.rule = getattr(cfg, "restriction", "trapezoid")
        self.template = template
        ii, jj = template.interior_indices(0), template.interior_indices(1)
        I, J = np.meshgrid(ii, jj, indexing="ij")
        self.ii, self.jj = I.ravel(), J.ravel()

        linear_ok = problem.source_free and problem.steady_operator
        if mode == "auto":
            mode = "linear" if linear_ok else "direct"
        if mode == "linear" and not linear_ok:
            raise ValueError(f"problem {problem.name!r} is not eligible for linear-response mode")
        if mode not in ("direct", "linear"):
            raise ValueError(f"unknown gap-tooth mode {mode!r}")
        self.mode = mode
        self._coeff_cache = None
        self._weights = None

        proto = build_stencils(template, self.ii, self.jj)
        xc, yc = proto.center
        oxi, oeta = self.grid.offsets()
        self.node_xi = np.broadcast_to(xc[:, None, None] + oxi[:, None], (xc.size, oxi.size, oeta.size))
        self.node_eta = np.broadcast_to(yc[:, None, None] + oeta[None, :], (xc.size, oxi.size, oeta.size))

    # coefficient sampling -------------------------------------------------

    def _coeffs_on(self, xi, eta):
        problem = self.problem
        if not problem.steady_operator:
            return lambda t: problem.coefficients(xi, eta, t)
        cached = []

        def coeffs(t):
            if not cached:
                cached.append(problem.coefficients(xi, eta, t))
            return cached[0]

        return coeffs

    def _patch_coeffs(self):
        if self._coeff_cache is None:
            xi, eta = self.node_xi, self.node_eta
            coeffs = self._coeffs_on(xi, eta)
            source = None
            if self.problem.steady_operator:
                def source(t):
                    return self.problem.source(xi, eta, t)
            self._coeff_cache = (coeffs, source)
        return self._coeff_cache

    # evolution ----------------------------------------------------------------

    def _evolve(self, stencils: StencilPoly, coeffs, source, t):
        p = PatchProblem(
            initial=lift(stencils, self.grid),
            edges=edge_conditions(stencils, self.grid, self.bc),
            coeffs=coeffs,
            t0=t,
            steady_operator=self.problem.steady_operator,
            upwind=self.upwind,
            source=source,
        )
        return restrict(self.solver(p, self.grid), self.rule)

    def _response_weights(self):
        """Weights ``w[k, p, q]`` with ``U_new[k] - U[k] = sum_pq w[k,p,q] S[k,p,q]``."""
        if self._weights is not None:
            return self._weights
        ii, jj = self.ii, self.jj
        reps = np.arange(ii.size)
        inverse = reps
        axis = getattr(self.problem, "invariant_axis", None)
        if axis is not None:
            # coefficients do not vary along ``axis``: one patch per line suffices
            key = jj if axis == 0 else ii
            _, reps, inverse = np.unique(key, return_index=True, return_inverse=True)
        proto = build_stencils(self.template, ii[reps], jj[reps])
        xi, eta = self.node_xi[reps], self.node_eta[reps]
        coeffs = self._coeffs_on(xi, eta)
        w = np.empty((reps.size, 3, 3))
        for p in range(3):
            for q in range(3):
                unit = np.zeros((reps.size, 3, 3))
                unit[:, p, q] = 1.0
                s = StencilPoly(unit, proto.xi_nodes, proto.eta_nodes)
                w[:, p, q] = self._evolve(s, coeffs, None, 0.0)
        w[:, 1, 1] -= 1.0
        self._weights = w[inverse]
        return self._weights

    def step(self, U: CoarseField, t: float) -> CoarseField:
        """Advance ``U`` from ``t`` to ``t + tau``."""
        if not U.shares_grid(self.template):
            raise ShapeMismatch("coarse field does not match the stepper's grid")
        stencils = build_stencils(U, self.ii, self.jj)
        try:
            if self.mode == "linear":
                w = self._response_weights()
                new = U.values[self.ii, self.jj] + np.einsum("kpq,kpq->k", w, stencils.values)
            else:
                coeffs, source = self._patch_coeffs()
                new = self._evolve(stencils, coeffs, source, t)
        except PatchDynError as exc:
            raise MicroSolveError(f"micro solve failed at t={t:.6g}: {exc}") from exc
        if not np.all(np.isfinite(new)):
            bad = int(np.flatnonzero(~np.isfinite(new))[0])
            raise MicroSolveError(
                f"non-finite patch result at t={t:.6g}",
                patch=(int(self.ii[bad]), int(self.jj[bad])),
            )
        values = U.values.copy()
        values[self.ii, self.jj] = new
        out = U.with_values(values).sync_periodic()
        return self.problem.apply_boundary(out, t + self.cfg.tau)


def gap_tooth_step(U: CoarseField, cfg, problem, t_n: float, m: int = 0, stepper=None) -> CoarseField:
    """One gap-tooth step from ``t_n + m tau`` to ``t_n + (m + 1) tau``."""
    if stepper is None:
        stepper = GapToothStepper(problem, cfg, U, mode="direct")
    return stepper.step(U, t_n + m * cfg.tau)
