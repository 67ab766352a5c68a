import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphectra.asymptotics import (
    RATIONAL,
    ConeError,
    arc_cone,
    arc_exponent,
    bessel_i,
    bessel_i_scaled,
    excursion_exponent,
    exponent_ladder,
    heat_kernel,
    rationality_check,
    rationality_scan,
    reflection_quarter_plane,
    triangle_cone,
)
from sphectra.continuation import CurveSample, LevelCurve
from sphectra.eigensolve import SolverSettings
from sphectra.geometry import Triangle, to_cartesian

HALF_PI = 0.5 * math.pi
mpmath.mp.dps = 30


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 120.0), st.floats(1e-3, 700.0))
def test_scaled_bessel_matches_mpmath(nu, x):
    ref = mpmath.besseli(nu, x) * mpmath.exp(-x)
    if ref < mpmath.mpf("1e-290"):
        return
    assert bessel_i_scaled(nu, x) == pytest.approx(float(ref), rel=1e-12)


@pytest.mark.parametrize("nu,x", [(0.0, 1e-3), (50.0, 1e-3), (3.5, 1.0), (0.5, 30.0), (100.0, 699.0)])
def test_bessel_spot_values(nu, x):
    ref = float(mpmath.besseli(nu, x) * (1 if x < 600 else mpmath.exp(-x)))
    val = bessel_i(nu, x) if x < 600 else bessel_i_scaled(nu, x)
    assert val == pytest.approx(ref, rel=1e-12)


def test_bessel_at_zero():
    assert bessel_i(0.0, 0.0) == 1.0
    assert bessel_i(2.5, 0.0) == 0.0


def _unit(phi):
    return np.array([math.cos(phi), math.sin(phi)])


def _half_line(a, b, t):
    return (math.exp(-((a - b) ** 2) / (2 * t)) - math.exp(-((a + b) ** 2) / (2 * t))) / math.sqrt(2 * math.pi * t)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("x,y", [(_unit(0.3), _unit(1.1)), (1.5 * _unit(0.7), 0.6 * _unit(0.2))])
def test_quarter_plane_matches_reflection(x, y, t):
    p = heat_kernel(arc_cone(HALF_PI, 60), x, y, t, 60)
    ref = reflection_quarter_plane(x, y, t)
    assert p.value == pytest.approx(ref, rel=1e-10)
    assert p.tail < 1e-12 * ref


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_half_plane_matches_single_image(t):
    x, y = _unit(0.4), 1.3 * _unit(2.0)
    free = math.exp(-((x[0] - y[0]) ** 2) / (2 * t)) / math.sqrt(2 * math.pi * t)
    ref = free * _half_line(x[1], y[1], t)
    assert heat_kernel(arc_cone(math.pi, 80), x, y, t, 80).value == pytest.approx(ref, rel=1e-10)


def test_heat_kernel_symmetric_and_boundary():
    cone = arc_cone(1.0, 40)
    x, y = _unit(0.3), 2 * _unit(0.8)
    assert heat_kernel(cone, x, y, 0.7, 40).value == pytest.approx(heat_kernel(cone, y, x, 0.7, 40).value, rel=1e-14)
    assert heat_kernel(cone, np.array([1.0, 0.0]), y, 0.7, 40).value == 0.0
    with pytest.raises(ConeError):
        heat_kernel(cone, _unit(2.0), y, 0.7, 40)
    with pytest.raises(ConeError):
        heat_kernel(cone, x, y, 0.0, 40)
    with pytest.raises(ConeError):
        heat_kernel(cone, x, y, 1.0, 41)


def test_large_time_decay_rate():
    # quarter plane: p ~ t^(-1 - pi/beta) = t^-3
    cone = arc_cone(HALF_PI, 50)
    x, y = _unit(0.3), _unit(1.1)
    ts = np.array([10.0, 100.0])
    p = [heat_kernel(cone, x, y, t, 50).value for t in ts]
    slope = math.log(p[1] / p[0]) / math.log(ts[1] / ts[0])
    assert slope == pytest.approx(-3.0, rel=2e-2)


def test_octant_cone_matches_product_formula():
    spec = SolverSettings(n=16).spectrum(Triangle(HALF_PI, HALF_PI), k=8)
    cone = triangle_cone(spec.finest, spec.eigenvalues)
    x = to_cartesian(0.9, 0.5)
    y = 1.2 * to_cartesian(0.6, 1.0)
    t = 1.0
    ref = 1.0
    for a, b in zip(x, y):
        ref *= _half_line(a, b, t)
    # eigenfunctions interpolated from the mesh: accuracy is mesh order
    assert heat_kernel(cone, x, y, t, 8).value == pytest.approx(ref, rel=2e-2)


def test_exponents():
    assert excursion_exponent(12.0, 3) == -4.5
    assert excursion_exponent(4.0, 2) == -3.0
    assert arc_exponent(0.0) == pytest.approx(-3.0, abs=1e-14)
    assert arc_exponent(-math.cos(math.pi / 4)) == pytest.approx(-5.0, abs=1e-14)
    with pytest.raises(ValueError):
        arc_exponent(1.0)
    with pytest.raises(ValueError):
        excursion_exponent(0.0, 3)


def test_ladder_octant_and_arc():
    assert exponent_ladder([12.0, 30.0], 3, 3).values == pytest.approx([4.5, 5.5, 6.5])
    arc = exponent_ladder([4.0, 16.0], 2, 3)
    assert arc.values == pytest.approx([3.0, 4.0, 5.0])
    # 5 = 2 + 3 = 4 + 1 has two sources
    assert set(arc.entries[2].sources) == {(1, 3), (2, 1)}
    with pytest.raises(ValueError, match="insufficient"):
        exponent_ladder([12.0], 3, 3)


@pytest.mark.parametrize(
    "x,expected",
    [(0.5, Fraction(1, 2)), (4.5, Fraction(9, 2)), (355 / 113, Fraction(355, 113)), (1 / 997, Fraction(1, 997))],
)
def test_rational_values(x, expected):
    v = rationality_check(x, 1000, 1e-12)
    assert v.is_rational and v.best_rational == expected


def test_irrational_values():
    v = rationality_check(math.sqrt(30.45) + 1, 1000, 1e-9)
    assert v.verdict == "no_rational_q_le_1000"
    assert v.distance > 1e-9
    # pi is 3.14159292... -> 355/113 within 3e-7 but not 1e-9
    v = rationality_check(math.pi, 1000, 1e-9)
    assert not v.is_rational and v.best_rational == Fraction(355, 113)
    assert rationality_check(math.pi, 1000, 1e-6).is_rational


@settings(max_examples=100, deadline=None)
@given(st.integers(-500, 500), st.integers(1, 200))
def test_rationals_recovered(p, q):
    v = rationality_check(p / q, 1000, 1e-12)
    assert v.best_rational == Fraction(p, q)


def _curve(lam2, err2=0.0):
    return LevelCurve(12.0, math.pi / 3, [CurveSample(HALF_PI, HALF_PI, (12.0, lam2, lam2), (0.0, err2, err2))])


def test_scan_exact_octant_all_rational():
    rec = rationality_scan(_curve(30.0), d=3, depth=3)[0]
    assert [r["verdict"] for r in rec["ladder"]] == [RATIONAL] * 3
    assert rec["first_non_rational"] is None
    assert [r["best_rational"] for r in rec["ladder"]] == ["9/2", "11/2", "13/2"]


def test_scan_computed_octant_within_error_bar():
    # the computed lambda_2 is accurate to about 1e-6, so rationality is only
    # decidable at a tolerance above that
    spec = SolverSettings(n=32).spectrum(Triangle(HALF_PI, HALF_PI), k=3)
    rec = rationality_scan(_curve(float(spec.eigenvalues[1]), float(spec.errors[1])), d=3, depth=4, tol=1e-5)[0]
    assert all(r["verdict"] == RATIONAL for r in rec["ladder"])
    lam2_rows = [r for r in rec["ladder"] if r["j"] == 2]
    assert lam2_rows and all(r["uncertainty"] > 0 for r in lam2_rows)


@pytest.mark.parametrize("lam2,depth", [(29.3, 3), (30.45, 4)])
def test_scan_flags_lambda2_entry(lam2, depth):
    rec = rationality_scan(_curve(lam2, 1e-6), d=3, depth=depth)[0]
    verdicts = {(r["j"], r["k"]): r["verdict"] for r in rec["ladder"]}
    assert all(v == RATIONAL for (j, _), v in verdicts.items() if j == 1)
    assert verdicts[(2, 1)] == "no_rational_q_le_1000"
    assert rec["first_non_rational"] == [r["j"] for r in rec["ladder"]].index(2)
