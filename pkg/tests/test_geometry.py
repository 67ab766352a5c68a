import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from sphectra.geometry import (
    Digon,
    DomainError,
    PolarPoint,
    Triangle,
    arccot,
    digon_eigenvalue_first,
    digon_spectrum,
    ground_state,
    octant_eigenfunction,
    octant_eigenfunction_grad,
    side_length,
    side_length_dbeta,
    side_length_dtheta,
    to_cartesian,
    to_polar,
)

angles = st.floats(0.05, math.pi - 0.05)


def _angle_at_b(alpha, beta):
    """Interior angle at B* = e_x from vector geometry alone."""
    A = np.array([0.0, 0.0, 1.0])
    B = np.array([1.0, 0.0, 0.0])
    C = to_cartesian(side_length(beta, alpha), alpha)

    def tangent(p, q):
        t = q - np.dot(p, q) * p
        return t / np.linalg.norm(t)

    return math.acos(np.clip(np.dot(tangent(B, A), tangent(B, C)), -1, 1))


@settings(max_examples=60, deadline=None)
@given(angles, angles)
def test_side_meets_b_at_angle_beta(alpha, beta):
    assert _angle_at_b(alpha, beta) == pytest.approx(beta, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(angles, angles)
def test_third_angle_matches_vector_geometry(alpha, beta):
    tri = Triangle(alpha, beta)
    A = np.array([0.0, 0.0, 1.0])
    B = np.array([1.0, 0.0, 0.0])
    C = to_cartesian(side_length(beta, alpha), alpha)

    def tangent(p, q):
        t = q - np.dot(p, q) * p
        return t / np.linalg.norm(t)

    gamma = math.acos(np.clip(np.dot(tangent(C, A), tangent(C, B)), -1, 1))
    assert tri.third_angle() == pytest.approx(gamma, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(angles, st.floats(0.01, math.pi - 0.01))
def test_side_length_derivatives(beta, theta):
    h = 1e-6
    fd_b = (side_length(beta + h, theta) - side_length(beta - h, theta)) / (2 * h)
    fd_t = (side_length(beta, theta + h) - side_length(beta, theta - h)) / (2 * h)
    assert side_length_dbeta(beta, theta) == pytest.approx(fd_b, rel=1e-6, abs=1e-8)
    assert side_length_dtheta(beta, theta) == pytest.approx(fd_t, rel=1e-6, abs=1e-8)


def test_side_length_limits():
    assert side_length(0.5 * math.pi, 1.0) == pytest.approx(0.5 * math.pi)
    assert side_length(1.0, 0.0) == pytest.approx(0.5 * math.pi)
    assert arccot(0.0) == pytest.approx(0.5 * math.pi)
    assert arccot(-1.0) == pytest.approx(0.75 * math.pi)


@pytest.mark.parametrize("bad", [0.0, math.pi, -1.0, 4.0, float("nan")])
def test_triangle_rejects_bad_angles(bad):
    with pytest.raises(DomainError):
        Triangle(bad, 1.0)
    with pytest.raises(DomainError):
        Triangle(1.0, bad)


def test_swap_and_contains():
    tri = Triangle(1.2, 1.9)
    assert tri.swap() == Triangle(1.9, 1.2)
    assert tri.contains(PolarPoint(0.5, 0.6))
    assert not tri.contains(PolarPoint(0.5, 1.3))
    assert not tri.contains(PolarPoint(side_length(1.9, 0.6) + 1e-3, 0.6))


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, math.pi - 0.01), st.floats(0.0, 2 * math.pi - 1e-9))
def test_polar_roundtrip(r, theta):
    r2, t2 = to_polar(3.0 * to_cartesian(r, theta))
    assert r2 == pytest.approx(r, abs=1e-12)
    assert t2 == pytest.approx(theta, abs=1e-9)


def test_octant_eigenfunctions_symbolic():
    r, t = sp.symbols("r t", positive=True)

    def lap(u):
        return sp.diff(sp.sin(r) * sp.diff(u, r), r) / sp.sin(r) + sp.diff(u, t, 2) / sp.sin(r) ** 2

    c = sp.cos(r)
    cases = [
        (sp.sin(r) ** 2 * c * sp.sin(2 * t), 12),
        ((3 * c**5 - 4 * c**3 + c) * sp.sin(2 * t), 30),
        (c * sp.sin(r) ** 4 * sp.sin(4 * t), 30),
    ]
    for u, lam in cases:
        assert sp.simplify(lap(u) + lam * u) == 0


@pytest.mark.parametrize("which", [0, 1, 2])
def test_octant_normalisation_and_gradient(which):
    f = ground_state if which == 0 else (lambda r, t: octant_eigenfunction(which, r, t))
    val, _ = integrate.dblquad(lambda r, t: f(r, t) ** 2 * math.sin(r), 0, math.pi / 2, 0, math.pi / 2, epsabs=1e-13)
    assert val == pytest.approx(1.0, abs=1e-10)
    r, t, h = 0.7, 0.4, 1e-6
    gr, gt = octant_eigenfunction_grad(which, r, t)
    assert gr == pytest.approx((f(r + h, t) - f(r - h, t)) / (2 * h), rel=1e-7)
    assert gt == pytest.approx((f(r, t + h) - f(r, t - h)) / (2 * h), rel=1e-7)


def test_octant_pair_orthogonal():
    val, _ = integrate.dblquad(
        lambda r, t: octant_eigenfunction(1, r, t) * octant_eigenfunction(2, r, t) * math.sin(r),
        0, math.pi / 2, 0, math.pi / 2, epsabs=1e-13,
    )
    assert abs(val) < 1e-10


@pytest.mark.parametrize("beta,lam", [(math.pi / 3, 12.0), (math.pi / 2, 6.0), (2 * math.pi / 3, 3.75), (math.pi, 2.0)])
def test_digon_first(beta, lam):
    assert digon_eigenvalue_first(Digon(beta)) == pytest.approx(lam, rel=1e-14)


def test_digon_spectrum_lune_pi_third():
    # nu = 3k + m: 3, 4, 5, 6 (twice), 7 (twice)
    nus = [3, 4, 5, 6, 6, 7, 7]
    assert digon_spectrum(math.pi / 3, 7) == pytest.approx([n * (n + 1) for n in nus])


def test_digon_hemisphere_multiplicities():
    # beta = pi: nu = k + m; nu = n appears n times, matching the odd-in-one-variable harmonics
    spec = digon_spectrum(math.pi, 6)
    assert spec == pytest.approx([2, 6, 6, 12, 12, 12])


def test_digon_validation():
    with pytest.raises(DomainError):
        Digon(0.0)
    with pytest.raises(DomainError):
        digon_eigenvalue_first(3.5)
    with pytest.raises(ValueError):
        digon_spectrum(1.0, 0)
