"""Peclet diagnostic and the grid-independence check."""

from __future__ import annotations

import numpy as np

from ..errors import GridMismatch

INDEPENDENCE_THRESHOLD = 0.1  # percent


def peclet_field(problem, x, y, t: float = 0.0):
    """Local Peclet number ``max(|v_x| L / D_x, |v_y| H / D_y)`` and its dominance mask.

    ``L, H`` are the physical extents stored on the problem. Purely a
    diagnostic; the solvers never look at it.

    Returns:
        ``(pe, mask)`` where ``mask`` flags convection-dominated points
        (``pe > 1``).
    """
    p = problem.physical
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    length, height = problem.extent
    dx = -np.asarray(p.alpha(x, y, t), dtype=float)
    dy = -np.asarray(p.beta(x, y, t), dtype=float)
    vx = np.abs(np.asarray(p.gamma(x, y, t), dtype=float))
    vy = np.abs(np.asarray(p.nu(x, y, t), dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        pe_x = np.where(vx == 0, 0.0, vx * length / dx)
        pe_y = np.where(vy == 0, 0.0, vy * height / dy)
    pe = np.broadcast_to(np.maximum(pe_x, pe_y), np.broadcast(x, y).shape)
    return pe, pe > 1.0


def _is_refinement(coarse, fine) -> bool:
    for c, f in ((coarse.xi, fine.xi), (coarse.eta, fine.eta)):
        if f.size != 2 * (c.size - 1) + 1 or not np.allclose(f[::2], c, rtol=0, atol=1e-12):
            return False
    return True


def grid_independence(coarse, fine, time_tol: float = 1e-9) -> float:
    """Max percentage change between a run and its 2x refinement.

    Both arguments expose ``times`` and ``fields`` (lists of coarse fields).
    The comparison covers every shared node at every shared snapshot time;
    nodes where the fine value is below ``1e-12`` in magnitude are skipped.

    Raises:
        GridMismatch: if ``fine`` is not a 2x refinement of ``coarse`` or the
            runs share no snapshot time.
    """
    pairs = []
    for tc, fc in zip(coarse.times, coarse.fields):
        for tf, ff in zip(fine.times, fine.fields):
            if abs(tc - tf) <= time_tol:
                pairs.append((fc, ff))
                break
    if not pairs:
        raise GridMismatch("the two runs share no snapshot time")
    worst = 0.0
    for fc, ff in pairs:
        if not _is_refinement(fc, ff):
            raise GridMismatch(
                f"grid {ff.values.shape} is not a 2x refinement of {fc.values.shape}"
            )
        tf = ff.values[::2, ::2]
        keep = np.abs(tf) >= 1e-12
        if np.any(keep):
            change = np.abs(tf[keep] - fc.values[keep]) / np.abs(tf[keep]) * 100.0
            worst = max(worst, float(change.max()))
    return worst
