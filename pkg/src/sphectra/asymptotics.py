"""Heat kernels of cones, their large-time exponent ladders, and rationality checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .eigensolve import Spectrum
from .geometry import side_length, to_polar

__all__ = [
    "ConeError",
    "bessel_i",
    "bessel_i_scaled",
    "ConeSpectrum",
    "arc_cone",
    "triangle_cone",
    "heat_kernel",
    "HeatKernelValue",
    "reflection_quarter_plane",
    "LadderEntry",
    "ExponentLadder",
    "exponent_ladder",
    "excursion_exponent",
    "arc_exponent",
    "RationalityVerdict",
    "rationality_check",
    "rationality_scan",
    "RATIONAL",
]

BESSEL_X_MAX = 700.0
RATIONAL = "rational_within_tol"


class ConeError(ValueError):
    pass


_RESCALE = 1e200
_LOG_RESCALE = math.log(_RESCALE)


def _bessel_series(nu: float, x: float, shift: float) -> float:
    """``exp(-shift) * I_nu(x)`` by direct summation of the power series.

    Terms follow the ratio recurrence ``t_{m+1} = t_m (x/2)^2 / ((m+1)(nu+m+1))``
    in linear space; a running logarithmic scale keeps them representable.
    """
    if nu < 0:
        raise ValueError(f"order must be >= 0, got {nu!r}")
    if not (0.0 <= x <= BESSEL_X_MAX):
        raise ValueError(f"argument out of range: {x!r} not in [0, {BESSEL_X_MAX}]")
    if x == 0.0:
        return math.exp(-shift) if nu == 0 else 0.0
    q = 0.25 * x * x
    log_scale = nu * math.log(0.5 * x) - math.lgamma(nu + 1.0)
    term, total = 1.0, 1.0
    m = 0
    # terms grow until m ~ x/2, then decrease monotonically
    while True:
        m += 1
        term *= q / (m * (nu + m))
        total += term
        if total > _RESCALE:
            term /= _RESCALE
            total /= _RESCALE
            log_scale += _LOG_RESCALE
        if m > 0.5 * x and term <= 1e-17 * total:
            break
    return total * math.exp(log_scale - shift) if log_scale - shift > -745 else _tiny(total, log_scale - shift)


def _tiny(total: float, log_factor: float) -> float:
    return math.exp(math.log(total) + log_factor)


def bessel_i(nu: float, x: float) -> float:
    """Modified Bessel function of the first kind ``I_nu(x)``, ``nu >= 0``."""
    return _bessel_series(float(nu), float(x), 0.0)


def bessel_i_scaled(nu: float, x: float) -> float:
    """``exp(-x) I_nu(x)``, without overflow for large ``x``."""
    return _bessel_series(float(nu), float(x), float(x))


@dataclass
class ConeSpectrum:
    """Dirichlet spectrum of a cone's spherical section.

    ``eigenfunction(j, directions)`` evaluates the L2-normalised ``j``-th
    (0-based) eigenfunction at unit directions and returns 0 outside the
    closed section.  ``contains(directions)`` tests strict interior points.
    """

    d: int
    eigenvalues: np.ndarray
    eigenfunction: Callable[[int, np.ndarray], np.ndarray] = field(repr=False)
    contains: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    on_boundary: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    def orders(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues + (0.5 * self.d - 1.0) ** 2)


def arc_cone(beta: float, count: int = 200) -> ConeSpectrum:
    """Planar wedge ``{0 < arg(x) < beta}``: modes ``sqrt(2/beta) sin(j pi phi/beta)``."""
    if not (0.0 < beta < 2.0 * math.pi):
        raise ConeError(f"opening {beta!r} not in (0, 2 pi)")
    j = np.arange(1, count + 1)
    lam = (j * math.pi / beta) ** 2

    def angle(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.mod(np.arctan2(x[:, 1], x[:, 0]), 2 * math.pi)

    def eig(k, x):
        phi = angle(x)
        out = math.sqrt(2.0 / beta) * np.sin((k + 1) * math.pi * phi / beta)
        return np.where(phi <= beta, out, 0.0)

    def contains(x):
        phi = angle(x)
        return (phi > 0) & (phi < beta) & (np.linalg.norm(np.atleast_2d(x), axis=1) > 0)

    def on_boundary(x):
        phi = angle(x)
        return np.isclose(phi, 0.0, atol=1e-14) | np.isclose(phi, beta, atol=1e-14) | np.isclose(phi, 2 * math.pi, atol=1e-14)

    return ConeSpectrum(d=2, eigenvalues=lam, eigenfunction=eig, contains=contains, on_boundary=on_boundary)


def triangle_cone(spectrum: Spectrum, eigenvalues: Sequence[float] | None = None) -> ConeSpectrum:
    """Cone over ``T(alpha, beta)`` from a mesh solution.

    Eigenfunctions are the M-orthonormal eigenvectors, interpolated
    bilinearly in mapped coordinates; ``eigenvalues`` (e.g. extrapolated
    values) override the mesh eigenvalues for the Bessel orders.
    """
    mesh = spectrum.mesh
    lam = np.asarray(spectrum.eigenvalues if eigenvalues is None else eigenvalues, dtype=float)

    def polar(x):
        return to_polar(np.atleast_2d(np.asarray(x, dtype=float)))

    def eig(k, x):
        r, th = polar(x)
        return mesh.interpolate(spectrum.nodal(k), r, th)

    def contains(x):
        r, th = polar(x)
        L = np.asarray(side_length(mesh.beta, np.clip(th, 0, math.pi)))
        return (th > 0) & (th < mesh.alpha) & (r > 0) & (r < L)

    def on_boundary(x):
        r, th = polar(x)
        L = np.asarray(side_length(mesh.beta, np.clip(th, 0, math.pi)))
        inside_closed = (th >= -1e-14) & (th <= mesh.alpha + 1e-14) & (r <= L + 1e-14)
        return inside_closed & ~contains(x)

    return ConeSpectrum(d=3, eigenvalues=lam, eigenfunction=eig, contains=contains, on_boundary=on_boundary)


@dataclass(frozen=True)
class HeatKernelValue:
    value: float
    tail: float  # magnitude of the last included term


def heat_kernel(cone: ConeSpectrum, x, y, t: float, J: int) -> HeatKernelValue:
    """Truncated Bessel-series heat kernel of Brownian motion killed on exiting the cone."""
    if t <= 0:
        raise ConeError(f"time must be positive, got {t!r}")
    if J < 1:
        raise ConeError("J must be >= 1")
    if J > len(cone.eigenvalues):
        raise ConeError(f"J={J} exceeds the {len(cone.eigenvalues)} available eigenpairs")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    for name, p in (("x", x), ("y", y)):
        if p.shape != (cone.d,):
            raise ConeError(f"{name} must be a point of R^{cone.d}")
        if not cone.contains(p)[0] and not cone.on_boundary(p)[0]:
            raise ConeError(f"point {name}={p.tolist()} outside the cone")
    rx, ry = float(np.linalg.norm(x)), float(np.linalg.norm(y))
    z = rx * ry / t
    orders = cone.orders()[:J]
    # exp(-(|x|^2+|y|^2)/2t) I(z) = exp(-(|x|-|y|)^2/2t) * exp(-z) I(z)
    pref = math.exp(-((rx - ry) ** 2) / (2 * t)) / (t * (rx * ry) ** (0.5 * cone.d - 1.0))
    total = 0.0
    term = 0.0
    for j in range(J):
        mx = float(cone.eigenfunction(j, x)[0])
        my = float(cone.eigenfunction(j, y)[0])
        term = pref * bessel_i_scaled(float(orders[j]), z) * mx * my
        total += term
    return HeatKernelValue(value=total, tail=abs(term))


def reflection_quarter_plane(x, y, t: float) -> float:
    """Quarter-plane heat kernel as a product of killed half-line kernels."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = 1.0
    for xi, yi in zip(x, y):
        out *= (math.exp(-((xi - yi) ** 2) / (2 * t)) - math.exp(-((xi + yi) ** 2) / (2 * t))) / math.sqrt(2 * math.pi * t)
    return out


def excursion_exponent(lambda1: float, d: int) -> float:
    """``-sqrt(lambda_1 + (d/2 - 1)^2) - 1``."""
    if not lambda1 > 0:
        raise ValueError("lambda1 must be positive")
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return -math.sqrt(lambda1 + (0.5 * d - 1.0) ** 2) - 1.0


def arc_exponent(r: float) -> float:
    """Exponent for a planar wedge of opening ``arccos(-r)``."""
    if not -1.0 < r < 1.0:
        raise ValueError(f"|r| must be < 1, got {r!r}")
    return -math.pi / math.acos(-r) - 1.0


@dataclass(frozen=True)
class RationalityVerdict:
    value: float
    best_rational: Fraction
    distance: float
    verdict: str

    @property
    def is_rational(self) -> bool:
        return self.verdict == RATIONAL


def rationality_check(x: float, q_max: int = 1000, tol: float = 1e-9) -> RationalityVerdict:
    """Closest fraction with denominator at most ``q_max`` and a tolerance verdict.

    A numerical statement only: ``no_rational_q_le_Q`` says no such fraction
    lies within ``tol`` of ``x``.
    """
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    if not tol > 0:
        raise ValueError("tol must be positive")
    # limit_denominator searches convergents and semiconvergents of the
    # continued fraction of x
    best = Fraction(x).limit_denominator(int(q_max))
    dist = abs(x - best.numerator / best.denominator)
    verdict = RATIONAL if dist <= tol else f"no_rational_q_le_{int(q_max)}"
    return RationalityVerdict(value=float(x), best_rational=best, distance=float(dist), verdict=verdict)


@dataclass(frozen=True)
class LadderEntry:
    value: float
    j: int  # 1-based eigenvalue index of the first source
    k: int
    sources: tuple[tuple[int, int], ...]
    verdict: RationalityVerdict | None = None


@dataclass
class ExponentLadder:
    """Candidate exponents ``sqrt(lambda_j + (d/2-1)^2) + k``, ascending."""

    d: int
    entries: list[LadderEntry]
    cutoff: float

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.entries])


def exponent_ladder(
    eigenvalues: Sequence[float],
    d: int,
    depth: int,
    dedup_tol: float = 1e-9,
    q_max: int | None = None,
    tol: float = 1e-9,
) -> ExponentLadder:
    """The first ``depth`` distinct candidate exponents.

    Only entries up to ``sqrt(lambda_max + (d/2-1)^2) + 1`` are certain to be
    complete; asking for more raises.  With ``q_max`` set, every entry
    carries a rationality verdict.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    lam = np.sort(np.asarray(eigenvalues, dtype=float))
    if lam.size == 0:
        raise ValueError("insufficient eigenvalues: none given")
    shift = (0.5 * d - 1.0) ** 2
    base = np.sqrt(lam + shift)
    cutoff = float(base[-1] + 1.0)
    cand = []
    for j, a in enumerate(base, start=1):
        k = 1
        while a + k <= cutoff + dedup_tol:
            cand.append((a + k, j, k))
            k += 1
    cand.sort()
    entries: list[LadderEntry] = []
    for v, j, k in cand:
        if entries and abs(v - entries[-1].value) <= dedup_tol:
            last = entries[-1]
            entries[-1] = LadderEntry(last.value, last.j, last.k, last.sources + ((j, k),))
        else:
            entries.append(LadderEntry(float(v), j, k, ((j, k),)))
    if len(entries) < depth:
        raise ValueError(
            f"insufficient eigenvalues for depth {depth}: only {len(entries)} entries certified below {cutoff:.6g}"
        )
    entries = entries[:depth]
    if q_max is not None:
        entries = [
            LadderEntry(e.value, e.j, e.k, e.sources, rationality_check(e.value, q_max, tol)) for e in entries
        ]
    return ExponentLadder(d=d, entries=entries, cutoff=cutoff)


def rationality_scan(curve, d: int = 3, depth: int = 3, q_max: int = 1000, tol: float = 1e-9) -> list[dict]:
    """Two-eigenvalue ladder report for every sample of a level curve.

    The ladder uses ``lambda_1 = c`` (exact on the level curve) and the
    computed ``lambda_2``.  Each record lists the entries with their verdicts
    and ``first_non_rational``, the 0-based ladder position where the
    verdict first becomes non-rational (``None`` if it never does).
    """
    report = []
    shift = (0.5 * d - 1.0) ** 2
    for s in curve.samples:
        lam1 = float(curve.c)
        lam2 = float(s.eigenvalues[1])
        err2 = float(s.errors[1]) if len(s.errors) > 1 else math.nan
        ladder = exponent_ladder([lam1, lam2], d, depth=depth, q_max=q_max, tol=tol) if lam2 >= lam1 else None
        rows = []
        first_bad = None
        if ladder is not None:
            # propagated uncertainty of entries derived from lambda_2
            e2 = 0.5 * err2 / math.sqrt(lam2 + shift) if math.isfinite(err2) else math.nan
            for pos, e in enumerate(ladder.entries):
                v = e.verdict
                if first_bad is None and not v.is_rational:
                    first_bad = pos
                rows.append(
                    {
                        "value": e.value,
                        "j": e.j,
                        "k": e.k,
                        "verdict": v.verdict,
                        "best_rational": f"{v.best_rational.numerator}/{v.best_rational.denominator}",
                        "distance": v.distance,
                        "uncertainty": e2 if e.j == 2 else 0.0,
                        "candidate": True,
                    }
                )
        report.append(
            {
                "alpha": s.alpha,
                "beta": s.beta,
                "lambda1": float(s.eigenvalues[0]),
                "lambda2": lam2,
                "lambda2_error": err2,
                "ladder": rows,
                "first_non_rational": first_bad,
            }
        )
    return report
