"""Derivatives of eigenvalues with respect to the two angles of ``T(alpha, beta)``.

Two independent routes are provided:

* boundary integrals of squared normal derivatives of the eigenfunction on the
  sides that move when ``alpha`` or ``beta`` changes (:func:`hadamard_simple`,
  and :func:`hadamard_multiplet` for degenerate eigenvalues);
* a volume route that differentiates the assembled matrices of one logical
  mesh mapped onto nearby triangles (:func:`feynman_hellmann`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigensolve import (
    ExtrapolatedSpectrum,
    Spectrum,
    eigenspace_basis,
    richardson,
)
from .fem import DEGENERACY_MARGIN, MappedMesh, assemble, boundary_trace_derivatives, remap
from .geometry import Triangle, side_length_dbeta

__all__ = [
    "ShapeDerivativeError",
    "EigenDerivative",
    "MultipletDerivativeMatrix",
    "boundary_form",
    "hadamard_simple",
    "hadamard_multiplet",
    "hadamard_extrapolated",
    "multiplet_extrapolated",
    "feynman_hellmann",
    "feynman_hellmann_extrapolated",
    "finite_difference",
]

_GX, _GW = np.polynomial.legendre.leggauss(4)
_GX = 0.5 * (_GX + 1.0)
_GW = 0.5 * _GW


class ShapeDerivativeError(ValueError):
    pass


@dataclass(frozen=True)
class EigenDerivative:
    d_alpha: float
    d_beta: float
    method: str
    error_alpha: float = float("nan")
    error_beta: float = float("nan")

    def directional(self, direction) -> float:
        da, db = direction
        return da * self.d_alpha + db * self.d_beta


@dataclass(frozen=True)
class MultipletDerivativeMatrix:
    matrix: np.ndarray
    direction: tuple[float, float]
    eigenvalues: np.ndarray
    errors: np.ndarray | None = None


def _composite(nodes, values, fn):
    """Integrate ``fn(x, v(x))`` with ``v`` piecewise linear through ``(nodes, values)``.

    ``values`` may carry a trailing axis; the result then has that axis too.
    """
    a, b = nodes[:-1], nodes[1:]
    h = b - a
    x = a[:, None] + h[:, None] * _GX[None, :]  # (segments, gauss)
    va, vb = values[:-1], values[1:]
    t = _GX[None, :]
    if values.ndim == 1:
        v = va[:, None] * (1 - t) + vb[:, None] * t
    else:
        v = va[:, None, :] * (1 - t[..., None]) + vb[:, None, :] * t[..., None]
    f = fn(x, v)
    w = (h[:, None] * _GW[None, :])
    if f.ndim == 2:
        return float(np.sum(w * f))
    return np.einsum("sg,sg...->...", w, f)


def _side_integrals(mesh: MappedMesh, U: np.ndarray):
    """The two boundary quadratic forms for nodal field(s) ``U``.

    With a trailing axis of size m the bilinear matrices (m x m) are returned.
    Both forms are nonnegative; the derivative is ``-(da * A + db * B)``.
    """
    tr = boundary_trace_derivatives(mesh, U)
    beta = mesh.beta

    def outer(v):
        return v[..., :, None] * v[..., None, :] if v.ndim == 3 else v * v

    def f_alpha(r, g):
        w = 1.0 / np.sin(r)
        return (w[..., None, None] if g.ndim == 3 else w) * outer(g)

    A = _composite(tr.r, tr.dtheta_alpha_side, f_alpha)

    # on r = L(theta) only d_u carries information; rebuild both derivatives
    # from it at the quadrature points
    L_n = mesh.side(tr.theta)
    d_u = tr.dr_beta_side * (L_n[:, None] if tr.dr_beta_side.ndim == 2 else L_n)

    def f_beta(theta, du):
        L = mesh.side(theta)
        dL = mesh.side_dtheta(theta)
        sL = np.sin(L)
        weight = (1.0 + (dL / sL) ** 2) / L**2 * side_length_dbeta(beta, theta) * sL
        return (weight[..., None, None] if du.ndim == 3 else weight) * outer(du)

    B = _composite(tr.theta, d_u, f_beta)
    return A, B


def boundary_form(spectrum: Spectrum, index: int) -> tuple[float, float]:
    """``(A, B)`` with ``d lambda/d alpha = -A`` and ``d lambda/d beta = -B``."""
    u = spectrum.nodal(index)
    mnorm2 = float(spectrum.eigenvectors[:, index] @ (spectrum.problem.M @ spectrum.eigenvectors[:, index]))
    A, B = _side_integrals(spectrum.mesh, u)
    return A / mnorm2, B / mnorm2


def _require_triangle(spectrum: Spectrum):
    if spectrum.mesh.is_digon:
        raise ShapeDerivativeError("shape derivatives are not defined at the digon boundary")


def hadamard_simple(spectrum: Spectrum, which: int = 0) -> EigenDerivative:
    """Boundary-integral derivative of a simple eigenvalue on one mesh."""
    _require_triangle(spectrum)
    if len(spectrum.multiplet_of(which)) > 1:
        raise ShapeDerivativeError(f"eigenvalue {which} is not simple")
    A, B = boundary_form(spectrum, which)
    return EigenDerivative(d_alpha=-A, d_beta=-B, method="hadamard")


def hadamard_extrapolated(spec: ExtrapolatedSpectrum, which: int = 0) -> EigenDerivative:
    """:func:`hadamard_simple` on each mesh level, Richardson-extrapolated."""
    if len(next(g for g in spec.multiplets if which in g)) > 1:
        raise ShapeDerivativeError(f"eigenvalue {which} is not simple")
    _require_triangle(spec.finest)
    per_level = np.array([boundary_form(lv, which) for lv in spec.levels])
    val, err, _ = richardson(per_level[0], per_level[1], per_level[2])
    return EigenDerivative(
        d_alpha=-float(val[0]), d_beta=-float(val[1]), method="hadamard",
        error_alpha=float(err[0]), error_beta=float(err[1]),
    )


def _check_direction(direction):
    da, db = (float(x) for x in direction)
    if da == 0.0 and db == 0.0:
        raise ShapeDerivativeError("direction must be nonzero")
    return da, db


def hadamard_multiplet(spectrum: Spectrum, which, direction) -> MultipletDerivativeMatrix:
    """Derivative matrix of a degenerate eigenvalue along ``direction``.

    ``which`` is a multiplet position or a list of eigenpair indices.  The
    boundary form is polarised from its quadratic values on the M-orthonormal
    eigenspace basis.
    """
    _require_triangle(spectrum)
    da, db = _check_direction(direction)
    basis = eigenspace_basis(spectrum, which)
    m = basis.shape[1]
    G = basis.T @ (spectrum.problem.M @ basis)
    if np.max(np.abs(G - np.eye(m))) > 1e-10:
        raise ShapeDerivativeError("eigenspace basis is not M-orthonormal")
    mesh = spectrum.mesh
    ext = spectrum.problem.extend

    def q(vec):
        A, B = _side_integrals(mesh, ext(vec))
        return -(da * A + db * B)

    D = np.empty((m, m))
    for i in range(m):
        D[i, i] = q(basis[:, i])
        for j in range(i):
            D[i, j] = D[j, i] = 0.25 * (q(basis[:, i] + basis[:, j]) - q(basis[:, i] - basis[:, j]))
    ev = np.linalg.eigvalsh(D)
    return MultipletDerivativeMatrix(matrix=D, direction=(da, db), eigenvalues=ev)


def multiplet_extrapolated(spec: ExtrapolatedSpectrum, indices, direction) -> MultipletDerivativeMatrix:
    """Branch derivatives of a multiplet, extrapolated over the three meshes.

    On coarse meshes the multiplet is split; the eigenvalues of the derivative
    matrix are invariant under rotations within the eigenspace, so they are
    extrapolated directly.
    """
    indices = list(indices)
    mats = [hadamard_multiplet(lv, indices, direction) for lv in spec.levels]
    val, err, _ = richardson(*(m.eigenvalues for m in mats))
    fine = mats[-1]
    return MultipletDerivativeMatrix(matrix=fine.matrix, direction=fine.direction, eigenvalues=val, errors=err)


def _matrices(mesh: MappedMesh, alpha: float, beta: float):
    P = assemble(remap(mesh, alpha, beta))
    return P.K, P.M


def _fh_quotient(spectrum: Spectrum, which: int, da: float, db: float, h: float) -> float:
    mesh = spectrum.mesh
    a, b = mesh.alpha, mesh.beta
    Kp, Mp = _matrices(mesh, a + h * da, b + h * db)
    Km, Mm = _matrices(mesh, a - h * da, b - h * db)
    u = spectrum.eigenvectors[:, which]
    lam = spectrum.eigenvalues[which]
    dK = (Kp - Km) / (2.0 * h)
    dM = (Mp - Mm) / (2.0 * h)
    return float(u @ (dK @ u) - lam * (u @ (dM @ u))) / float(u @ (spectrum.problem.M @ u))


def feynman_hellmann(spectrum: Spectrum, which: int = 0, direction=(1.0, 0.0), h: float = 1e-4) -> float:
    """Directional derivative ``u^T (dK - lambda dM) u / u^T M u`` from matrix differences.

    Central differences at ``h``, ``h/2`` and ``h/4``.  Raises when the
    perturbed triangles leave the admissible range, or when the differences
    are above roundoff but do not shrink at second order.
    """
    _require_triangle(spectrum)
    da, db = _check_direction(direction)
    if len(spectrum.multiplet_of(which)) > 1:
        raise ShapeDerivativeError(f"eigenvalue {which} is not simple")
    a, b = spectrum.mesh.alpha, spectrum.mesh.beta
    for x, dx in ((a, da), (b, db)):
        if not (DEGENERACY_MARGIN < x - h * abs(dx) and x + h * abs(dx) < math.pi - DEGENERACY_MARGIN):
            raise ShapeDerivativeError(f"step h={h:g} leaves the admissible triangles")
    d = [_fh_quotient(spectrum, which, da, db, h / m) for m in (1.0, 2.0, 4.0)]
    diff1, diff2 = d[0] - d[1], d[1] - d[2]
    floor = 1e-7 * max(abs(d[2]), 1.0)
    if abs(diff1) > floor and not (2.5 < diff1 / diff2 < 6.5 if diff2 != 0 else False):
        raise ShapeDerivativeError(
            f"step h={h:g} outside the asymptotic range: estimates {d[0]:.10g}, {d[1]:.10g}, {d[2]:.10g}"
        )
    # one Richardson step on the two smallest steps
    return (4.0 * d[2] - d[1]) / 3.0


def feynman_hellmann_extrapolated(spec: ExtrapolatedSpectrum, which: int = 0, direction=(1.0, 0.0), h: float = 1e-4):
    """Feynman-Hellmann on each mesh level; returns ``(value, error)``."""
    vals = [feynman_hellmann(lv, which, direction, h) for lv in spec.levels]
    val, err, _ = richardson(*vals)
    return float(val), float(err)


def finite_difference(solve, triangle: Triangle, direction=(1.0, 0.0), h: float = 1e-3, which: int = 0):
    """Central difference of an eigenvalue along ``direction``.

    ``solve(triangle)`` must return an :class:`ExtrapolatedSpectrum`.  Returns
    ``(value, error)``; the error combines the eigenvalue error bars divided by
    the step with the discrepancy against the step ``2h``.
    """
    da, db = _check_direction(direction)

    def lam(t):
        s = solve(Triangle(triangle.alpha + t * da, triangle.beta + t * db))
        return s.eigenvalues[which], s.errors[which]

    (lp, ep), (lm, em) = lam(h), lam(-h)
    (lp2, _), (lm2, _) = lam(2 * h), lam(-2 * h)
    d1 = (lp - lm) / (2 * h)
    d2 = (lp2 - lm2) / (4 * h)
    value = (4 * d1 - d2) / 3
    error = (ep + em) / (2 * h) + abs(d1 - d2) / 3
    return float(value), float(error)
