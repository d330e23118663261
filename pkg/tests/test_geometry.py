import math

import numpy as np
import pytest

from patchdyn.errors import DerivativeMismatch, NonPositiveJacobian
from patchdyn.geometry import (
    PhysicalCoefficients,
    from_cdr,
    identity_map,
    jacobian,
    polar_map,
    stretched_map,
    transform_coefficients,
    user_map,
    verify_mapping_derivatives,
)

RNG = np.random.default_rng(20240611)


def test_identity_jacobian_is_one():
    xi, eta = RNG.random(50), RNG.random(50)
    assert np.all(jacobian(identity_map(), xi, eta) == 1.0)


def test_polar_jacobian_is_plus_r():
    theta = RNG.uniform(0, 2 * math.pi, 40)
    r = RNG.uniform(1, 2, 40)
    assert np.allclose(jacobian(polar_map(), theta, r), r, rtol=0, atol=1e-14)
    assert jacobian(polar_map(), 0.3, 1.5) == pytest.approx(1.5, abs=1e-14)


def test_polar_forward_is_a_rotation_of_radius():
    theta = RNG.uniform(0, 2 * math.pi, 20)
    r = RNG.uniform(1, 2, 20)
    x, y = polar_map().forward(theta, r)
    assert np.allclose(np.hypot(x, y), r)


def test_stretched_jacobian_at_centre():
    assert jacobian(stretched_map(0.1), 0.5, 0.5) == pytest.approx(1.0, abs=1e-15)


def test_stretched_jacobian_closed_form():
    lam = 0.37
    xi, eta = RNG.random(200), RNG.random(200)
    expected = (1 + lam * np.cos(np.pi * xi)) * (1 + lam * np.cos(np.pi * eta))
    assert np.allclose(jacobian(stretched_map(lam), xi, eta), expected, rtol=1e-15, atol=0)


def test_folded_map_is_rejected():
    flipped = user_map(
        lambda a, b: (-np.asarray(a, float), np.asarray(b, float)),
        lambda a, b: (-np.ones(np.shape(a)), np.zeros(np.shape(a)), np.zeros(np.shape(a)), np.ones(np.shape(a))),
        lambda a, b: tuple(np.zeros(np.shape(a)) for _ in range(6)),
    )
    with pytest.raises(NonPositiveJacobian):
        jacobian(flipped, np.array([0.2]), np.array([0.3]))


def test_identity_unit_diffusion_coefficients():
    p = from_cdr(1.0, 1.0, 0.0, 0.0, 0.0)
    tc = transform_coefficients(identity_map(), p, 0.3, 0.7, 0.0)
    # diffusion sits on the left with a minus sign: a = c = -1 in operator form
    got = [float(v) for v in (tc.a, tc.b, tc.c, tc.d, tc.e, tc.f, tc.g)]
    assert got == [-1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0]
    evo = tc.evolution_form()
    assert float(evo["A"]) == 1.0 and float(evo["C"]) == 1.0


def test_identity_coefficients_match_physical_fields():
    p = PhysicalCoefficients(
        alpha=lambda x, y, t: 1 + x * y,
        beta=lambda x, y, t: 2 + np.sin(x),
        gamma=lambda x, y, t: x - y + t,
        nu=lambda x, y, t: np.cos(y),
        omega=lambda x, y, t: x**2,
        phi=lambda x, y, t: np.exp(x + y + t),
    )
    xi, eta, t = RNG.random(120), RNG.random(120), 0.4
    tc = transform_coefficients(identity_map(), p, xi, eta, t)
    assert np.array_equal(tc.a, p.alpha(xi, eta, t))
    assert np.array_equal(tc.c, p.beta(xi, eta, t))
    assert np.array_equal(tc.d, p.gamma(xi, eta, t))
    assert np.array_equal(tc.e, p.nu(xi, eta, t))
    assert np.array_equal(tc.f, p.omega(xi, eta, t))
    assert np.array_equal(tc.g, p.phi(xi, eta, t))
    assert np.all(tc.b == 0) and np.all(tc.R == 0) and np.all(tc.S == 0)


def test_stretched_convection_matches_closed_form_velocity():
    lam = 0.1
    p = from_cdr(1.0, 1.0, lambda x, y, t: 10 * x, lambda x, y, t: 10 * y, 0.0)
    tc = transform_coefficients(stretched_map(lam), p, 0.5, 0.5, 0.0)
    # independent evaluation of the closed-form transformed velocity
    v_xi = 10 * (0.5 + lam / math.pi) / (1 + lam * math.cos(math.pi / 2)) - lam * math.pi * math.sin(math.pi / 2) / (
        1 + lam * math.cos(math.pi / 2)
    ) ** 3
    assert v_xi == pytest.approx(5.318310 - 0.314159, abs=1e-6)
    assert float(tc.d) == pytest.approx(v_xi, rel=1e-13)
    assert float(tc.e) == pytest.approx(v_xi, rel=1e-13)


def test_polar_coefficients_give_radial_laplacian():
    D = 1.7
    p = from_cdr(D, D, 0.0, 0.0, 0.0)
    theta = RNG.uniform(0, 2 * math.pi, 60)
    r = RNG.uniform(1, 2, 60)
    evo = transform_coefficients(polar_map(), p, theta, r, 0.0).evolution_form()
    # u_t = D (u_rr + u_r / r + u_thth / r^2)
    assert np.allclose(evo["A"], D / r**2, rtol=1e-13)
    assert np.allclose(evo["C"], D, rtol=1e-13)
    assert np.allclose(evo["B"], 0, atol=1e-13)
    assert np.allclose(-evo["W"], 0, atol=1e-13)
    assert np.allclose(-evo["V"], D / r, rtol=1e-13)


@pytest.mark.parametrize("mapping", [stretched_map(0.6), polar_map()], ids=["stretched", "polar"])
def test_orthogonal_maps_have_no_mixed_term(mapping):
    # isotropic diffusion, as in both benchmarks; anisotropy rotated into polar axes would couple them
    D = lambda x, y, t: 1 + x**2  # noqa: E731
    p = from_cdr(D, D, 1.0, 1.0, 0.0)
    xi = RNG.uniform(0.0, 1.0, 100)
    eta = RNG.uniform(1.0, 2.0, 100) if mapping.kind == "polar" else RNG.uniform(0, 1, 100)
    tc = transform_coefficients(mapping, p, xi, eta, 0.0)
    assert np.max(np.abs(tc.b)) < 1e-12


def test_sign_round_trip_on_manufactured_solution():
    # u = exp(x + y + t) solves u_t + 10x u_x + 10y u_y = u_xx + u_yy + S
    lam = 0.25
    p = from_cdr(1.0, 1.0, lambda x, y, t: 10 * x, lambda x, y, t: 10 * y, lambda x, y, t: (10 * x + 10 * y - 1) * np.exp(x + y + t))
    m = stretched_map(lam)
    xi, eta, t = RNG.random(100), RNG.random(100), RNG.random(100)
    x, y = m.forward(xi, eta)
    u = np.exp(x + y + t)
    x_xi, _, _, y_eta = m.inverse_metrics(xi, eta)
    x_aa, _, _, _, _, y_bb = m.second_derivs(xi, eta)
    u_xi, u_eta = u * x_xi, u * y_eta
    u_xixi = u * x_xi**2 + u * x_aa
    u_etaeta = u * y_eta**2 + u * y_bb
    tc = transform_coefficients(m, p, xi, eta, t)
    residual = tc.l * u + tc.a * u_xixi + tc.b * u * x_xi * y_eta + tc.c * u_etaeta + tc.d * u_xi + tc.e * u_eta + tc.f * u - tc.g
    assert np.max(np.abs(residual / u)) < 1e-10


def test_verify_identity_derivatives():
    samples = RNG.random((100, 2))
    rep = verify_mapping_derivatives(identity_map(), samples)
    assert rep.max_error < 1e-10  # eps / h rounding only


def test_verify_stretched_derivatives():
    samples = RNG.uniform(0.01, 0.99, (100, 2))
    assert verify_mapping_derivatives(stretched_map(0.3), samples, h=1e-5).max_error <= 1e-6


def test_verify_polar_derivatives():
    samples = np.column_stack([RNG.uniform(0.01, 2 * math.pi - 0.01, 100), RNG.uniform(1.01, 1.99, 100)])
    assert verify_mapping_derivatives(polar_map(), samples, h=1e-5).max_error <= 1e-6


def test_wrong_declared_derivative_is_caught():
    good = stretched_map(0.3)
    bad = user_map(
        good.forward,
        lambda a, b: tuple(v * 1.01 if k == 0 else v for k, v in enumerate(good.inverse_metrics(a, b))),
        good.second_derivs,
    )
    with pytest.raises(DerivativeMismatch):
        verify_mapping_derivatives(bad, RNG.uniform(0.1, 0.9, (10, 2)))


def test_zero_time_multiplier_rejected():
    with pytest.raises(ValueError):
        PhysicalCoefficients(*(lambda x, y, t: 0 * x for _ in range(6)), l=0.0)
