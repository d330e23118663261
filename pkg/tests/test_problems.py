import math
import warnings

import mpmath
import numpy as np
import pytest

from patchdyn.errors import DomainError, GridMismatch, InvalidStretch, SeriesTruncationWarning
from patchdyn.gaptooth import CoarseField
from patchdyn.problems import (
    annulus_exact,
    annulus_initial,
    annulus_modes,
    bessel_j1,
    bessel_y1,
    cross_product,
    cross_product_roots,
    grid_independence,
    make_problem,
    peclet_field,
    problem1_constant,
    problem1_variable,
    problem2_annulus,
    radial_mode,
    stretched_cdr_fields,
)

RNG = np.random.default_rng(2024)

# mpmath (30 digits) sign scan + bisection on the cross product
CROSS_ROOTS = [
    3.196578380810635,
    6.312349510373263,
    9.444464925482273,
    12.58120281010411,
    15.71985426942974,
    18.85947662013839,
    21.99965802121733,
    25.14019040687956,
    28.28095745833175,
    31.42188909815751,
]
# ascending power series for J1, bisected in 30-digit arithmetic
J1_FIRST_ZERO = 3.831705970207512


# -- Bessel functions ----------------------------------------------------------------


def test_j1_at_origin():
    assert bessel_j1(0.0) == 0.0


def test_j1_first_zero_matches_series_oracle():
    assert abs(bessel_j1(J1_FIRST_ZERO)) < 1e-15
    assert bessel_j1(J1_FIRST_ZERO - 1e-6) > 0 > bessel_j1(J1_FIRST_ZERO + 1e-6)


def test_bessel_against_mpmath():
    x = np.concatenate([RNG.uniform(1e-3, 50, 200), [0.5, 1.0, 10.0, 50.0]])
    j_ref = np.array([float(mpmath.besselj(1, v)) for v in x])
    y_ref = np.array([float(mpmath.bessely(1, v)) for v in x])
    j, y = bessel_j1(x), bessel_y1(x)
    # relative where the value is away from a zero, absolute near one
    assert np.all(np.abs(j - j_ref) <= 1e-12 * np.maximum(np.abs(j_ref), 1e-3))
    assert np.all(np.abs(y - y_ref) <= 1e-12 * np.maximum(np.abs(y_ref), 1e-3))


def test_wronskian_identity():
    # J1' = J0 - J1/x and Y1' = Y0 - Y1/x, with J0, Y0 from mpmath
    x = RNG.uniform(0.5, 40, 100)
    j0 = np.array([float(mpmath.besselj(0, v)) for v in x])
    y0 = np.array([float(mpmath.bessely(0, v)) for v in x])
    j1, y1 = bessel_j1(x), bessel_y1(x)
    w = j1 * (y0 - y1 / x) - (j0 - j1 / x) * y1
    assert np.allclose(w, 2 / (math.pi * x), rtol=1e-11, atol=0)


def test_y1_domain():
    with pytest.raises(DomainError):
        bessel_y1(0.0)
    with pytest.raises(DomainError):
        bessel_y1(np.array([1.0, -2.0]))


# -- cross-product roots ---------------------------------------------------------------


def test_roots_match_mpmath_oracle():
    roots = cross_product_roots(10)
    assert np.allclose(roots, CROSS_ROOTS, rtol=1e-13, atol=0)


def test_roots_are_zeros_of_cross_product():
    roots = np.array(cross_product_roots(40))
    assert np.max(np.abs(cross_product(roots))) < 1e-10
    assert np.all(np.diff(roots) > 0)


def test_roots_approach_pi_spacing():
    roots = np.array(cross_product_roots(30))
    assert np.all(np.abs(np.diff(roots)[4:] - math.pi) < 0.1)


def test_roots_reject_zero_count():
    with pytest.raises(ValueError):
        cross_product_roots(0)


def test_radial_mode_vanishes_on_both_circles():
    for mu in CROSS_ROOTS[:5]:
        assert abs(radial_mode(mu, 1.0)) < 1e-15
        assert abs(radial_mode(mu, 2.0)) < 1e-12


# -- annulus series -----------------------------------------------------------------


def test_series_reconstructs_initial_field():
    r = np.linspace(1, 2, 200)
    theta = RNG.uniform(0, 2 * math.pi, 200)
    u = annulus_exact(r, theta, 0.0, m_max=20, warn=False)
    assert np.max(np.abs(u - annulus_initial(theta, r))) < 1e-3


def test_series_is_zero_on_boundaries_and_axis():
    theta = RNG.uniform(0, 2 * math.pi, 30)
    assert np.max(np.abs(annulus_exact(np.ones(30), theta, 0.1, warn=False))) < 1e-12
    assert np.max(np.abs(annulus_exact(np.full(30, 2.0), theta, 0.1, warn=False))) < 1e-12
    assert np.all(annulus_exact(np.linspace(1, 2, 9), np.zeros(9), 0.3, warn=False) == 0.0)


@pytest.mark.parametrize("t", [0.25, 1.0])
def test_series_converges_beyond_ten_modes(t):
    r = np.linspace(1, 2, 41)
    ref = annulus_exact(r, np.full(41, 0.7), t, m_max=10, warn=False)
    for m in (12, 20, 40):
        assert np.max(np.abs(annulus_exact(r, np.full(41, 0.7), t, m_max=m, warn=False) - ref)) < 1e-12


def test_truncation_warning():
    with pytest.warns(SeriesTruncationWarning):
        annulus_exact(np.array([1.5]), np.array([1.0]), 0.0, m_max=5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        annulus_exact(np.array([1.5]), np.array([1.0]), 1.0)


def test_series_rejects_points_outside_annulus():
    with pytest.raises(DomainError):
        annulus_exact(np.array([0.9]), np.array([0.0]), 0.5)


def test_late_time_decay_rate():
    t = np.linspace(0.3, 1.0, 15)
    u = np.array([annulus_exact(np.array([1.5]), np.array([math.pi / 2]), s, warn=False)[0] for s in t])
    slope = np.polyfit(t, np.log(u), 1)[0]
    mu1 = CROSS_ROOTS[0]
    assert slope == pytest.approx(-(mu1**2), rel=0.05)


def test_mode_amplitudes_decay():
    amps = np.abs([m.amplitude for m in annulus_modes(12)])
    # a polynomial start has algebraically decaying coefficients
    assert amps[0] > 0.2 and amps[-1] < 1e-2 * amps[0]


# -- problem definitions ---------------------------------------------------------------


def test_annulus_problem_definition():
    p = problem2_annulus()
    U = p.initial_field(16, 10)
    assert U.values[4, 5] == pytest.approx(0.25, abs=1e-15)  # theta = pi/2, r = 1.5
    assert np.all(U.values[:, 0] == 0) and np.all(U.values[:, -1] == 0)
    evo = p.coefficients(np.array([0.3]), np.array([1.5]), 0.0).evolution_form()
    assert float(evo["A"][0]) == pytest.approx(4 / 9, rel=1e-13)
    assert p.check_compatibility() < 1e-12


def test_stretch_zero_reduces_to_uniform_problem():
    p = problem1_constant(0.0)
    assert p.mapping.kind == "identity"
    xi = RNG.random(20)
    v_xi, v_eta, d_xi, d_eta = stretched_cdr_fields(0.0, xi, xi)
    assert np.allclose(v_xi, 10 * xi, rtol=1e-15) and np.all(d_xi == 1.0)


@pytest.mark.parametrize("lam", [-0.1, 1.0, 1.5])
def test_invalid_stretch(lam):
    with pytest.raises(InvalidStretch):
        problem1_constant(lam)


def test_closed_form_fields_match_general_transform():
    lam = 0.4
    p = problem1_constant(lam)
    xi, eta = RNG.random(50), RNG.random(50)
    evo = p.coefficients(xi, eta, 0.0).evolution_form()
    v_xi, v_eta, d_xi, d_eta = stretched_cdr_fields(lam, xi, eta)
    assert np.allclose(evo["W"], v_xi, rtol=1e-12)
    assert np.allclose(evo["V"], v_eta, rtol=1e-12)
    assert np.allclose(evo["A"], d_xi, rtol=1e-12)
    assert np.allclose(evo["C"], d_eta, rtol=1e-12)


@pytest.mark.parametrize("factory", [problem1_constant, problem1_variable])
def test_manufactured_residual_in_physical_form(factory):
    p = factory(0.0)
    pc = p.physical
    x, y, t = RNG.random(1000), RNG.random(1000), RNG.random(1000)
    u = np.exp(x + y + t)  # every derivative equals u
    res = pc.l * u + (pc.alpha(x, y, t) + pc.beta(x, y, t) + pc.gamma(x, y, t) + pc.nu(x, y, t) + pc.omega(x, y, t)) * u - pc.phi(x, y, t)
    assert np.max(np.abs(res / u)) < 1e-10


@pytest.mark.parametrize("factory", [problem1_constant, problem1_variable])
@pytest.mark.parametrize("lam", [0.0, 0.3])
def test_manufactured_residual_in_computational_form(factory, lam):
    p = factory(lam)
    xi, eta, t = RNG.random(1000), RNG.random(1000), RNG.random(1000)
    x, y = p.mapping.forward(xi, eta)
    x_xi, _, _, y_eta = p.mapping.inverse_metrics(xi, eta)
    x_aa, _, _, _, _, y_bb = p.mapping.second_derivs(xi, eta)
    u = np.exp(x + y + t)
    u_xi, u_eta = u * x_xi, u * y_eta
    u_xixi, u_etaeta, u_xieta = u * (x_xi**2 + x_aa), u * (y_eta**2 + y_bb), u * x_xi * y_eta
    e = p.coefficients(xi, eta, t).evolution_form()
    rhs = e["A"] * u_xixi + e["B"] * u_xieta + e["C"] * u_etaeta - e["W"] * u_xi - e["V"] * u_eta + e["K"] * u
    rhs = rhs + p.source(xi, eta, t)
    assert np.max(np.abs((rhs - u) / u)) < 1e-10


@pytest.mark.parametrize("name", ["cdr-const", "cdr-var", "annulus"])
def test_initial_and_boundary_data_agree(name):
    assert make_problem(name, 0.2).check_compatibility() < 1e-10


def test_exact_value_at_far_probe():
    p = problem1_constant(0.0)
    assert p.exact(0.8, 0.8, 1.0) == pytest.approx(13.4637380350017, rel=1e-12)


def test_unknown_problem_name():
    with pytest.raises(KeyError):
        make_problem("burgers")


# -- diagnostics ------------------------------------------------------------------------


def test_peclet_values():
    p = problem1_constant(0.0)
    pe, dom = peclet_field(p, np.array([0.05, 0.5]), np.array([0.05, 0.2]))
    assert pe[0] == pytest.approx(0.5) and pe[1] == pytest.approx(5.0)
    assert list(dom) == [False, True]
    pe0, dom0 = peclet_field(problem2_annulus(), np.array([1.2]), np.array([0.3]))
    assert pe0[0] == 0 and not dom0[0]


def test_peclet_variable_diffusivity():
    pe, _ = peclet_field(problem1_variable(0.0), np.array([0.5]), np.array([0.5]))
    assert pe[0] == pytest.approx(5.0 / 1.5)


class _Run:
    def __init__(self, times, fields):
        self.times, self.fields = times, fields


def _fields(n, fn):
    U = CoarseField.on_domain(((0, 1), (0, 1)), n, n)
    XI, ETA = np.meshgrid(U.xi, U.eta, indexing="ij")
    return U.with_values(fn(XI, ETA))


def test_grid_independence_of_identical_profiles():
    fn = lambda x, y: 1 + x * y  # noqa: E731
    assert grid_independence(_Run([1.0], [_fields(4, fn)]), _Run([1.0], [_fields(8, fn)])) == 0.0


def test_grid_independence_measures_percentage_change():
    coarse = _Run([0.5, 1.0], [_fields(4, lambda x, y: 2 + 0 * x)] * 2)
    fine = _Run([0.5, 1.0], [_fields(8, lambda x, y: 2 + 0 * x), _fields(8, lambda x, y: 2.002 + 0 * x)])
    assert grid_independence(coarse, fine) == pytest.approx(100 * 0.002 / 2.002, rel=1e-12)


def test_grid_independence_rejects_mismatch():
    fn = lambda x, y: 1 + x  # noqa: E731
    with pytest.raises(GridMismatch):
        grid_independence(_Run([1.0], [_fields(4, fn)]), _Run([1.0], [_fields(6, fn)]))
    with pytest.raises(GridMismatch):
        grid_independence(_Run([1.0], [_fields(4, fn)]), _Run([0.5], [_fields(8, fn)]))
