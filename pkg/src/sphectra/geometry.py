"""Closed-form geometry of spherical triangles with one side of length pi/2.

A triangle ``T(alpha, beta)`` has vertices ``A*``, ``B*`` at distance pi/2 and
angles ``alpha`` at ``A*`` and ``beta`` at ``B*``.  Points are described by polar
coordinates ``(r, theta)`` centred at ``A*``: ``r`` is the geodesic distance to
``A*`` and ``theta`` the angle measured from the arc ``A*B*``.  The third side
is the curve ``r = L_beta(theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "Triangle",
    "Digon",
    "PolarPoint",
    "arccot",
    "side_length",
    "side_length_dbeta",
    "side_length_dtheta",
    "triangle_distance",
    "ground_state",
    "octant_eigenfunction",
    "octant_eigenfunction_grad",
    "digon_eigenvalue_first",
    "digon_spectrum",
    "to_cartesian",
    "to_polar",
]

HALF_PI = 0.5 * math.pi


class DomainError(ValueError):
    """An angle or parameter lies outside its admissible range."""


def _check_open_angle(name: str, value: float) -> float:
    value = float(value)
    if not (0.0 < value < math.pi):
        raise DomainError(f"{name} out of range: {value!r} not in (0, pi)")
    return value


@dataclass(frozen=True)
class Triangle:
    """Spherical triangle ``T(alpha, beta)``; angles in radians."""

    alpha: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_open_angle("alpha", self.alpha))
        object.__setattr__(self, "beta", _check_open_angle("beta", self.beta))

    def swap(self) -> "Triangle":
        """The mirror image ``T(beta, alpha)``, isometric to ``self``."""
        return Triangle(self.beta, self.alpha)

    @property
    def angles(self) -> tuple[float, float]:
        return (self.alpha, self.beta)

    def third_angle(self) -> float:
        """Angle at the vertex ``C`` opposite the side ``A*B*``."""
        # law of cosines for angles; the sin*sin*cos(c) term vanishes for c = pi/2
        return math.acos(-math.cos(self.alpha) * math.cos(self.beta))

    def contains(self, p: "PolarPoint") -> bool:
        return 0.0 < p.theta < self.alpha and 0.0 < p.r < float(side_length(self.beta, p.theta))


@dataclass(frozen=True)
class Digon:
    """Spherical lune of opening ``beta``, seen as ``T(pi, beta)``."""

    beta: float

    def __post_init__(self):
        beta = float(self.beta)
        if not (0.0 < beta <= math.pi):
            raise DomainError(f"beta out of range: {beta!r} not in (0, pi]")
        object.__setattr__(self, "beta", beta)

    @property
    def alpha(self) -> float:
        return math.pi


@dataclass(frozen=True)
class PolarPoint:
    r: float
    theta: float


def arccot(x):
    """Inverse cotangent with values in ``(0, pi)``."""
    return HALF_PI - np.arctan(x)


def _cot(beta):
    return np.cos(beta) / np.sin(beta)


def _check_beta(beta):
    b = np.asarray(beta, dtype=float)
    if np.any(b <= 0.0) or np.any(b >= math.pi):
        raise DomainError(f"beta out of range: {beta!r} not in (0, pi)")
    return b


def side_length(beta, theta):
    """``L_beta(theta) = arccot(cot(beta) sin(theta))``.

    Vectorised over both arguments.  ``beta = pi`` is accepted for the digon
    limit only through :func:`_side_length_unchecked`.
    """
    b = _check_beta(beta)
    return arccot(_cot(b) * np.sin(theta))


def _side_length_unchecked(beta, theta):
    # beta == pi is the hemisphere-like limit; cot -> -inf, L -> pi.
    if np.isscalar(beta) and beta >= math.pi:
        return np.full_like(np.asarray(theta, dtype=float), math.pi)
    return arccot(_cot(beta) * np.sin(theta))


def side_length_dbeta(beta, theta):
    """Partial derivative of :func:`side_length` in ``beta``."""
    b = _check_beta(beta)
    s = np.sin(theta)
    c = _cot(b)
    return s / (np.sin(b) ** 2 * (1.0 + (c * s) ** 2))


def side_length_dtheta(beta, theta):
    """Partial derivative of :func:`side_length` in ``theta``."""
    b = np.asarray(beta, dtype=float)
    c = _cot(b)
    s = np.sin(theta)
    return -c * np.cos(theta) / (1.0 + (c * s) ** 2)


def triangle_distance(t1: Triangle, t2: Triangle) -> float:
    return max(abs(t1.alpha - t2.alpha), abs(t1.beta - t2.beta))


# Normalising constants of the explicit eigenfunctions of the octant T(pi/2, pi/2).
_N_GROUND = math.sqrt(105.0 / (2.0 * math.pi))
_N_U1 = math.sqrt(1155.0 / (8.0 * math.pi))
_N_U2 = math.sqrt(3465.0 / (32.0 * math.pi))


def ground_state(r, theta):
    """L2-normalised first eigenfunction (eigenvalue 12) of the octant.

    It is the restriction of the harmonic polynomial ``xyz``.
    """
    return _N_GROUND * np.sin(r) ** 2 * np.cos(r) * np.sin(2.0 * theta)


def octant_eigenfunction(which: int, r, theta):
    """The orthonormal pair spanning the eigenvalue-30 eigenspace of the octant.

    ``which`` selects ``u1`` (1) or ``u2`` (2).
    """
    if which == 1:
        c = np.cos(r)
        return _N_U1 * (3.0 * c**5 - 4.0 * c**3 + c) * np.sin(2.0 * theta)
    if which == 2:
        return _N_U2 * np.cos(r) * np.sin(r) ** 4 * np.sin(4.0 * theta)
    raise ValueError(f"which must be 1 or 2, got {which!r}")


def octant_eigenfunction_grad(which: int, r, theta):
    """``(d/dr, d/dtheta)`` of :func:`octant_eigenfunction` (or the ground state for 0)."""
    c, s = np.cos(r), np.sin(r)
    if which == 0:
        return (
            _N_GROUND * (2 * s * c * c - s**3) * np.sin(2 * theta),
            _N_GROUND * 2 * s * s * c * np.cos(2 * theta),
        )
    if which == 1:
        poly = 3 * c**5 - 4 * c**3 + c
        dpoly = -s * (15 * c**4 - 12 * c**2 + 1)
        return _N_U1 * dpoly * np.sin(2 * theta), 2 * _N_U1 * poly * np.cos(2 * theta)
    if which == 2:
        return (
            _N_U2 * (4 * c * c * s**3 - s**5) * np.sin(4 * theta),
            4 * _N_U2 * c * s**4 * np.cos(4 * theta),
        )
    raise ValueError(f"which must be 0, 1 or 2, got {which!r}")


def _digon_beta(d) -> float:
    beta = d.beta if isinstance(d, Digon) else float(d)
    if not (0.0 < beta <= math.pi):
        raise DomainError(f"beta out of range: {beta!r} not in (0, pi]")
    return beta


def digon_eigenvalue_first(d) -> float:
    """First Dirichlet eigenvalue ``(pi/beta)(pi/beta + 1)`` of a lune."""
    k = math.pi / _digon_beta(d)
    return k * (k + 1.0)


def digon_spectrum(d, count: int) -> list[float]:
    """The ``count`` smallest Dirichlet eigenvalues of a lune, with multiplicity.

    Eigenvalues are ``nu (nu + 1)`` with ``nu = k pi / beta + m``, ``k >= 1``,
    ``m >= 0``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    step = math.pi / _digon_beta(d)
    # nu(nu+1) is increasing in nu >= 0, so collecting all nu <= nu_max suffices
    # as soon as at least `count` of them exist.
    nu_max = step
    while True:
        nus = []
        k = 1
        while k * step <= nu_max:
            m = 0
            while k * step + m <= nu_max:
                nus.append(k * step + m)
                m += 1
            k += 1
        if len(nus) >= count:
            break
        nu_max += max(step, 1.0)
    nus.sort()
    return [nu * (nu + 1.0) for nu in nus[:count]]


def to_cartesian(r, theta):
    """Embed polar coordinates: ``A* = e_z`` and ``B* = e_x``."""
    sr = np.sin(r)
    return np.stack([sr * np.cos(theta), sr * np.sin(theta), np.cos(r)], axis=-1)


def to_polar(x):
    """Inverse of :func:`to_cartesian` for nonzero vectors (radius discarded)."""
    x = np.asarray(x, dtype=float)
    rho = np.linalg.norm(x, axis=-1)
    r = np.arccos(np.clip(x[..., 2] / rho, -1.0, 1.0))
    theta = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2.0 * math.pi)
    return r, theta
