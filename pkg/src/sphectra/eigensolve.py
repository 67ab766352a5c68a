"""Smallest eigenpairs of ``K x = lambda M x`` and three-mesh extrapolation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .fem import GeneralizedEigenproblem, MappedMesh, assemble, build_mesh
from .geometry import Digon, Triangle, side_length, to_cartesian

__all__ = [
    "SolverError",
    "Spectrum",
    "ExtrapolatedSpectrum",
    "solve_smallest",
    "solve_dense",
    "eigenspace_basis",
    "group_multiplets",
    "richardson",
    "extrapolated_spectrum",
    "DEFAULT_TOL",
    "MULTIPLET_RTOL",
    "SolverSettings",
]

DEFAULT_TOL = 1e-10
MULTIPLET_RTOL = 1e-6
MAX_RESTARTS = 500


class SolverError(RuntimeError):
    """Eigensolver failure; ``residuals`` holds the best residuals reached, if any."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


def group_multiplets(values, rtol: float = MULTIPLET_RTOL, errors=None) -> list[list[int]]:
    """Partition ascending eigenvalues into clusters of (numerically) equal values.

    Neighbours join a cluster when their gap is below ``rtol * |value|``.  With
    per-value ``errors`` the gap may also be absorbed by twice their sum.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return []
    groups = [[0]]
    for i in range(1, len(values)):
        gap = values[i] - values[i - 1]
        thresh = rtol * abs(values[i])
        if errors is not None:
            thresh = max(thresh, 2.0 * (errors[i] + errors[i - 1]))
        if gap < thresh:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


@dataclass
class Spectrum:
    """Eigenpairs on one mesh; eigenvectors are M-orthonormal interior vectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    problem: GeneralizedEigenproblem = field(repr=False)
    multiplets: list[list[int]] = field(default_factory=list)

    @property
    def mesh(self) -> MappedMesh:
        return self.problem.mesh

    def nodal(self, index: int) -> np.ndarray:
        """Full nodal vector (boundary zeros included) of eigenvector ``index``."""
        return self.problem.extend(self.eigenvectors[:, index])

    def multiplet_of(self, index: int) -> list[int]:
        for g in self.multiplets:
            if index in g:
                return g
        raise IndexError(index)


def _incenter_polar(mesh: MappedMesh) -> tuple[float, float]:
    if mesh.is_digon:
        return 0.5 * math.pi, 0.5 * mesh.alpha
    a, b = mesh.alpha, mesh.beta
    A = np.array([0.0, 0.0, 1.0])
    B = np.array([1.0, 0.0, 0.0])
    C = to_cartesian(float(side_length(b, a)), a)
    # spherical incenter: weights are the sines of the opposite sides
    sa = np.linalg.norm(np.cross(B, C))
    sb = np.linalg.norm(np.cross(A, C))
    sc = 1.0
    v = sa * A + sb * B + sc * C
    v /= np.linalg.norm(v)
    return math.acos(v[2]), math.atan2(v[1], v[0])


def _fix_signs(problem: GeneralizedEigenproblem, vecs: np.ndarray) -> np.ndarray:
    r_in, th_in = _incenter_polar(problem.mesh)
    R, TH = problem.mesh.polar_nodes()
    # distance on the sphere between the incenter and every interior node
    P = to_cartesian(R.ravel()[problem.dofs], TH.ravel()[problem.dofs])
    c = to_cartesian(r_in, th_in)
    node = int(np.argmax(P @ c))
    out = vecs.copy()
    for k in range(vecs.shape[1]):
        v = vecs[:, k]
        ref = v[node]
        if abs(ref) < 1e-8 * np.max(np.abs(v)):
            ref = v[np.argmax(np.abs(v))]
        if ref < 0:
            out[:, k] = -v
    return out


def _m_orthonormalize(vecs: np.ndarray, M) -> np.ndarray:
    G = vecs.T @ (M @ vecs)
    Lc = la.cholesky(0.5 * (G + G.T), lower=True)
    return la.solve_triangular(Lc, vecs.T, lower=True).T


def _residuals(problem, vals, vecs):
    res = problem.K @ vecs - (problem.M @ vecs) * vals[None, :]
    mnorm = np.sqrt(np.einsum("ik,ik->k", vecs, problem.M @ vecs))
    # normalise by lambda so the bound is relative
    return np.linalg.norm(res, axis=0) / (mnorm * np.maximum(np.abs(vals), 1.0))


def solve_smallest(problem: GeneralizedEigenproblem, k: int = 4, tol: float = DEFAULT_TOL) -> Spectrum:
    """The ``k`` smallest eigenpairs via shift-invert Lanczos at shift 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not (0.0 < tol <= 1e-4):
        raise ValueError(f"tol must be in (0, 1e-4], got {tol!r}")
    n = problem.size
    if k + 2 >= n:
        raise ValueError(f"k={k} too large for a problem of size {n}")
    ncv = min(n - 1, max(2 * k + 1, k + 2, 20))
    # deterministic start vector
    v0 = np.random.default_rng(0).standard_normal(n)
    try:
        vals, vecs = eigsh(
            problem.K, k=k, M=problem.M, sigma=0.0, which="LM", v0=v0, ncv=ncv,
            tol=tol * 1e-2, maxiter=MAX_RESTARTS * n,
        )
    except ArpackNoConvergence as exc:
        best = None
        if exc.eigenvalues is not None and len(exc.eigenvalues):
            best = _residuals(problem, exc.eigenvalues, exc.eigenvectors)
        raise SolverError(f"eigensolver did not converge ({exc})", residuals=best) from exc
    except RuntimeError as exc:  # factorisation failure inside splu
        raise SolverError(f"factorization of K failed: {exc}") from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    vecs = _m_orthonormalize(vecs, problem.M)
    vecs = _fix_signs(problem, vecs)
    res = _residuals(problem, vals, vecs)
    if np.any(res > tol):
        raise SolverError(f"residuals above tolerance {tol:g}: {res}", residuals=res)
    return Spectrum(
        eigenvalues=vals,
        eigenvectors=vecs,
        residuals=res,
        problem=problem,
        multiplets=group_multiplets(vals),
    )


def solve_dense(problem: GeneralizedEigenproblem, k: int) -> np.ndarray:
    """Reference eigenvalues from a dense generalized solver (small problems only)."""
    return la.eigh(problem.K.toarray(), problem.M.toarray(), eigvals_only=True, subset_by_index=[0, k - 1])


def eigenspace_basis(spectrum: Spectrum, which: int | list[int]) -> np.ndarray:
    """M-orthonormal basis of a multiplet.

    ``which`` is either the position of the multiplet in ``spectrum.multiplets``
    or an explicit list of eigenpair indices.
    """
    if isinstance(which, (list, tuple)):
        idx = list(which)
    else:
        if not 0 <= which < len(spectrum.multiplets):
            raise IndexError(f"multiplet index {which} out of range")
        idx = spectrum.multiplets[which]
    B = spectrum.eigenvectors[:, idx]
    B = _m_orthonormalize(B, spectrum.problem.M)
    return B


def richardson(coarse, mid, fine, order: float = 2.0):
    """Extrapolate values from meshes of size h, h/2, h/4.

    Returns ``(value, error, observed_order)``.  ``value`` uses the design
    ``order``; ``error`` is the disagreement of the two pairwise extrapolants.
    """
    coarse, mid, fine = (np.asarray(x, dtype=float) for x in (coarse, mid, fine))
    f = 2.0**order - 1.0
    r_fine = fine + (fine - mid) / f
    r_coarse = mid + (mid - coarse) / f
    err = np.abs(r_fine - r_coarse)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (coarse - mid) / (mid - fine)
        observed = np.where(ratio > 0, np.log2(np.abs(ratio)), np.nan)
    return r_fine, err, observed


def _coupled_pairs(raw: np.ndarray) -> list[tuple[int, int]]:
    """Adjacent eigenvalues whose finest-mesh gap is comparable to the mesh error.

    For such a pair the two values are not separately smooth in ``h**2``
    (the mesh splits a nearly degenerate eigenspace), so they are extrapolated
    jointly.  Pairs are chosen greedily from the bottom.
    """
    change = np.abs(raw[2] - raw[1])
    pairs = []
    i = 0
    while i + 1 < raw.shape[1]:
        gap = raw[2, i + 1] - raw[2, i]
        if gap < 4.0 * max(change[i], change[i + 1]):
            pairs.append((i, i + 1))
            i += 2
        else:
            i += 1
    return pairs


def _pair_extrapolation(lo: np.ndarray, hi: np.ndarray) -> tuple[float, float]:
    """Joint extrapolation of a nearly degenerate pair from meshes h, h/2, h/4.

    The mean is smooth in ``h**2``.  If the pair comes from a 2x2 block
    ``A + h**2 E``, the squared gap is a quadratic in ``h**2``, fitted
    exactly through the three levels.
    """
    mean = 0.5 * (lo + hi)
    mean_ex = mean[2] + (mean[2] - mean[1]) / 3.0
    gap2 = (hi - lo) ** 2
    coef = np.polyfit(np.array([1.0, 0.25, 0.0625]), gap2, 2)
    gap = math.sqrt(max(coef[-1], 0.0))
    return mean_ex - 0.5 * gap, mean_ex + 0.5 * gap


@dataclass
class ExtrapolatedSpectrum:
    """Eigenvalues extrapolated from three nested meshes (n, 2n, 4n)."""

    domain: Triangle | Digon
    eigenvalues: np.ndarray
    errors: np.ndarray
    observed_order: np.ndarray
    levels: list[Spectrum] = field(repr=False)
    multiplets: list[list[int]] = field(default_factory=list)

    @property
    def finest(self) -> Spectrum:
        return self.levels[-1]

    def raw(self) -> np.ndarray:
        """Per-level eigenvalues, shape (3, k)."""
        return np.array([s.eigenvalues for s in self.levels])


def extrapolated_spectrum(
    domain: Triangle | Digon,
    k: int = 4,
    n: int = 32,
    gamma: float = 2.0,
    tol: float = DEFAULT_TOL,
    rtol_multiplet: float = MULTIPLET_RTOL,
) -> ExtrapolatedSpectrum:
    levels = []
    for m in (n, 2 * n, 4 * n):
        problem = assemble(build_mesh(domain, m, m, gamma))
        levels.append(solve_smallest(problem, k, tol))
    vals, err, p = richardson(*(lv.eigenvalues for lv in levels))
    raw = np.array([lv.eigenvalues for lv in levels])
    for i, j in _coupled_pairs(raw):
        vals[i], vals[j] = _pair_extrapolation(raw[:, i], raw[:, j])
    # extrapolation can reorder values that were nearly equal on the meshes
    order = np.argsort(vals, kind="stable")
    vals, err, p = vals[order], err[order], p[order]
    for lv in levels:
        lv.eigenvalues = lv.eigenvalues[order]
        lv.eigenvectors = lv.eigenvectors[:, order]
        lv.residuals = lv.residuals[order]
    groups = group_multiplets(vals, rtol_multiplet)
    levels[-1].multiplets = groups
    return ExtrapolatedSpectrum(
        domain=domain, eigenvalues=vals, errors=err, observed_order=p, levels=levels, multiplets=groups
    )


@dataclass(frozen=True)
class SolverSettings:
    """Mesh and solver parameters shared by the higher-level pipelines.

    ``n`` is the coarsest resolution per direction; solves use ``n``, ``2n``
    and ``4n``.
    """

    n: int = 32
    gamma: float = 2.0
    tol: float = DEFAULT_TOL
    k: int = 3

    def spectrum(self, domain, k: int | None = None) -> ExtrapolatedSpectrum:
        return extrapolated_spectrum(domain, k=k or self.k, n=self.n, gamma=self.gamma, tol=self.tol)
