"""Benchmark problems, analytical solutions and diagnostics."""

from .benchmarks import (
    ProblemSpec,
    annulus_initial,
    cdr_exact,
    homogeneous_diffusion_problem,
    problem1_constant,
    problem1_variable,
    problem2_annulus,
    steady_linear_problem,
    stretched_cdr_fields,
    zero_problem,
)
from .diagnostics import INDEPENDENCE_THRESHOLD, grid_independence, peclet_field
from .special import (
    BesselMode,
    annulus_exact,
    annulus_modes,
    bessel_j1,
    bessel_y1,
    cross_product,
    cross_product_roots,
    radial_mode,
)

REGISTRY = {
    "cdr-const": problem1_constant,
    "cdr-var": problem1_variable,
    "annulus": problem2_annulus,
}


def make_problem(name: str, lam: float = 0.0) -> ProblemSpec:
    """Build a registered problem; ``lam`` applies to the stretched-grid problems."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(REGISTRY)}") from None
    if name == "annulus":
        return factory()
    return factory(lam)


__all__ = [
    "BesselMode",
    "INDEPENDENCE_THRESHOLD",
    "ProblemSpec",
    "REGISTRY",
    "annulus_exact",
    "annulus_initial",
    "annulus_modes",
    "bessel_j1",
    "bessel_y1",
    "cdr_exact",
    "cross_product",
    "cross_product_roots",
    "grid_independence",
    "homogeneous_diffusion_problem",
    "make_problem",
    "peclet_field",
    "problem1_constant",
    "problem1_variable",
    "problem2_annulus",
    "radial_mode",
    "steady_linear_problem",
    "stretched_cdr_fields",
    "zero_problem",
]
