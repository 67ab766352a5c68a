"""Bilinear finite elements on a mapped tensor grid over ``T(alpha, beta)``.

The reference square ``(s, u) in [0, 1]^2`` is mapped onto the triangle by
``theta = alpha * s`` and ``r = u * L_beta(theta)``.  Shape functions are
bilinear in ``(s, u)``; the Dirichlet energy and the L2 form of the round
metric are pulled back exactly through this map and integrated with a 3x3
Gauss rule per element.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import Digon, DomainError, Triangle, _side_length_unchecked, side_length_dtheta

__all__ = [
    "MeshError",
    "MappedMesh",
    "GeneralizedEigenproblem",
    "build_mesh",
    "assemble",
    "graded_nodes",
    "symmetric_graded_nodes",
    "BoundaryTraces",
    "boundary_trace_derivatives",
    "write_matrix_market",
]

#: triangles closer than this to a degenerate angle are rejected
DEGENERACY_MARGIN = 1e-3

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(3)
_GAUSS_X = 0.5 * (_GAUSS_X + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W


class MeshError(ValueError):
    pass


def graded_nodes(n: int, gamma: float) -> np.ndarray:
    """``(i/n)**gamma`` for ``i = 0..n``: clustered toward 0."""
    return (np.arange(n + 1) / n) ** gamma


def symmetric_graded_nodes(n: int, gamma: float) -> np.ndarray:
    """Nodes on [0, 1] clustered toward both ends with exponent ``gamma``."""
    x = np.arange(n + 1) / n
    left = 0.5 * (2.0 * x) ** gamma
    right = 1.0 - 0.5 * (2.0 - 2.0 * x) ** gamma
    out = np.where(x <= 0.5, left, right)
    out[0], out[-1] = 0.0, 1.0
    return out


@dataclass(frozen=True)
class MappedMesh:
    alpha: float
    beta: float
    s: np.ndarray  # reference nodes along theta, length n_theta + 1
    u: np.ndarray  # reference nodes along r, length n_r + 1
    gamma: float
    is_digon: bool = False

    @property
    def n_theta(self) -> int:
        return len(self.s) - 1

    @property
    def n_r(self) -> int:
        return len(self.u) - 1

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.s), len(self.u))

    @property
    def n_nodes(self) -> int:
        return len(self.s) * len(self.u)

    def node_index(self, i, j):
        """Global index of node ``(s_i, u_j)``; s-major ordering."""
        return np.asarray(i) * len(self.u) + np.asarray(j)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[0, :] = mask[-1, :] = True
        mask[:, 0] = mask[:, -1] = True
        return mask.ravel()

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask())

    def side(self, theta):
        return _side_length_unchecked(self.beta, theta)

    def side_dtheta(self, theta):
        if self.beta >= math.pi:
            return np.zeros_like(np.asarray(theta, dtype=float))
        return side_length_dtheta(self.beta, theta)

    def polar_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """``(r, theta)`` arrays of shape ``self.shape``."""
        S, U = np.meshgrid(self.s, self.u, indexing="ij")
        theta = self.alpha * S
        return U * self.side(theta), theta

    def jacobian_determinants(self) -> np.ndarray:
        """Determinant of d(theta, r)/d(s, u) at every Gauss point (elements x 9)."""
        s_q, u_q, _, _, _ = self._quadrature_points()
        theta = self.alpha * s_q
        return self.alpha * self.side(theta) * np.ones_like(u_q)

    def _quadrature_points(self):
        hs = np.diff(self.s)
        hu = np.diff(self.u)
        HS, HU = np.meshgrid(hs, hu, indexing="ij")
        S0, U0 = np.meshgrid(self.s[:-1], self.u[:-1], indexing="ij")
        gx, gy = np.meshgrid(_GAUSS_X, _GAUSS_X, indexing="ij")
        gw = np.outer(_GAUSS_W, _GAUSS_W).ravel()
        gx, gy = gx.ravel(), gy.ravel()
        s_q = S0.ravel()[:, None] + HS.ravel()[:, None] * gx[None, :]
        u_q = U0.ravel()[:, None] + HU.ravel()[:, None] * gy[None, :]
        return s_q, u_q, HS.ravel(), HU.ravel(), (gx, gy, gw)

    def interpolate(self, values: np.ndarray, r, theta) -> np.ndarray:
        """Evaluate a nodal field (full node vector) at polar points by bilinear interpolation.

        Points outside the mapped domain evaluate to 0.
        """
        values = np.asarray(values, dtype=float).reshape(self.shape)
        r = np.atleast_1d(np.asarray(r, dtype=float))
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        s = theta / self.alpha
        L = self.side(np.clip(theta, 0.0, self.alpha))
        u = r / L
        inside = (s > 0) & (s < 1) & (u > 0) & (u < 1)
        out = np.zeros(np.broadcast(s, u).shape)
        s_in, u_in = s[inside], u[inside]
        i = np.clip(np.searchsorted(self.s, s_in) - 1, 0, self.n_theta - 1)
        j = np.clip(np.searchsorted(self.u, u_in) - 1, 0, self.n_r - 1)
        xi = (s_in - self.s[i]) / (self.s[i + 1] - self.s[i])
        eta = (u_in - self.u[j]) / (self.u[j + 1] - self.u[j])
        out[inside] = (
            values[i, j] * (1 - xi) * (1 - eta)
            + values[i + 1, j] * xi * (1 - eta)
            + values[i, j + 1] * (1 - xi) * eta
            + values[i + 1, j + 1] * xi * eta
        )
        return out


def _resolve_domain(domain) -> tuple[float, float, bool]:
    if isinstance(domain, Digon):
        return math.pi, domain.beta, True
    if isinstance(domain, Triangle):
        for name, angle in (("alpha", domain.alpha), ("beta", domain.beta)):
            if angle < DEGENERACY_MARGIN or angle > math.pi - DEGENERACY_MARGIN:
                raise DomainError(f"{name} out of range: {angle!r} is too close to a degenerate triangle")
        return domain.alpha, domain.beta, False
    raise TypeError(f"expected Triangle or Digon, got {type(domain).__name__}")


def build_mesh(domain: Triangle | Digon, n_theta: int = 64, n_r: int = 64, gamma: float = 2.0) -> MappedMesh:
    """Graded tensor mesh of a triangle or lune.

    ``u`` nodes are ``(j/n_r)**gamma`` (refined toward the pole ``r = 0``); ``s``
    nodes are refined symmetrically toward both ends.
    """
    if n_theta < 4 or n_r < 4:
        raise MeshError(f"resolution too small: n_theta={n_theta}, n_r={n_r} (need >= 4)")
    if not gamma >= 1.0:
        raise MeshError(f"invalid grading exponent {gamma!r} (need >= 1)")
    alpha, beta, is_digon = _resolve_domain(domain)
    return MappedMesh(
        alpha=alpha,
        beta=beta,
        s=symmetric_graded_nodes(n_theta, gamma),
        u=graded_nodes(n_r, gamma),
        gamma=float(gamma),
        is_digon=is_digon,
    )


def remap(mesh: MappedMesh, alpha: float, beta: float) -> MappedMesh:
    """Same logical grid mapped onto a different triangle."""
    return MappedMesh(alpha=alpha, beta=beta, s=mesh.s, u=mesh.u, gamma=mesh.gamma, is_digon=mesh.is_digon)


@dataclass(frozen=True)
class GeneralizedEigenproblem:
    """``K x = lambda M x`` restricted to interior degrees of freedom."""

    K: sp.csr_matrix
    M: sp.csr_matrix
    dofs: np.ndarray  # global node index of each interior unknown
    mesh: MappedMesh = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.dofs)

    def extend(self, x: np.ndarray) -> np.ndarray:
        """Interior vector(s) -> full nodal vector(s), zero on the boundary."""
        x = np.asarray(x)
        full = np.zeros((self.mesh.n_nodes,) + x.shape[1:], dtype=x.dtype)
        full[self.dofs] = x
        return full

    def restrict(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full)[self.dofs]


# local node order within an element: (0,0), (1,0), (0,1), (1,1) in (xi, eta)
_LOCAL_DI = np.array([0, 1, 0, 1])
_LOCAL_DJ = np.array([0, 0, 1, 1])


def _element_matrices(mesh: MappedMesh):
    s_q, u_q, hs, hu, (gx, gy, gw) = mesh._quadrature_points()
    theta = mesh.alpha * s_q
    L = mesh.side(theta)
    dL = mesh.side_dtheta(theta)
    r = u_q * L
    sin_r = np.sin(r)
    det = mesh.alpha * L
    if np.any(det <= 0.0):
        raise MeshError("singular element Jacobian")

    # shape functions and reference derivatives at the 9 Gauss points: (9, 4)
    fx = np.stack([1 - gx, gx, 1 - gx, gx], axis=1)
    fy = np.stack([1 - gy, 1 - gy, gy, gy], axis=1)
    N = fx * fy
    dNx = np.stack([-(1 - gy), 1 - gy, -gy, gy], axis=1)
    dNy = np.stack([-(1 - gx), -gx, 1 - gx, gx], axis=1)

    # physical derivatives, shapes (E, 9, 4)
    dNs = dNx[None, :, :] / hs[:, None, None]
    dNu = dNy[None, :, :] / hu[:, None, None]
    d_r = dNu / L[:, :, None]
    d_th = dNs / mesh.alpha - (u_q * dL / L)[:, :, None] * dNu

    w = gw[None, :] * (hs * hu)[:, None] * det * sin_r  # (E, 9)
    w_th = gw[None, :] * (hs * hu)[:, None] * det / sin_r
    Ke = np.einsum("eq,eqa,eqb->eab", w, d_r, d_r) + np.einsum("eq,eqa,eqb->eab", w_th, d_th, d_th)
    Me = np.einsum("eq,qa,qb->eab", w, N, N)
    return Ke, Me


def _connectivity(mesh: MappedMesh) -> np.ndarray:
    I, J = np.meshgrid(np.arange(mesh.n_theta), np.arange(mesh.n_r), indexing="ij")
    I, J = I.ravel(), J.ravel()
    return mesh.node_index(I[:, None] + _LOCAL_DI[None, :], J[:, None] + _LOCAL_DJ[None, :])


def assemble(mesh: MappedMesh) -> GeneralizedEigenproblem:
    """Stiffness and mass matrices with boundary unknowns eliminated."""
    Ke, Me = _element_matrices(mesh)
    conn = _connectivity(mesh)
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    n = mesh.n_nodes
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    dofs = mesh.interior
    K = K[dofs][:, dofs]
    M = M[dofs][:, dofs]
    # exact symmetry; element matrices are symmetric up to rounding in the einsum
    K = (0.5 * (K + K.T)).tocsr()
    M = (0.5 * (M + M.T)).tocsr()
    K.sort_indices()
    M.sort_indices()
    return GeneralizedEigenproblem(K=K, M=M, dofs=dofs, mesh=mesh)


def _one_sided_weights(x0: float, x1: float, x2: float) -> tuple[float, float, float]:
    """Weights of the 3-point derivative at ``x0`` from values at ``x0, x1, x2``."""
    d1, d2 = x1 - x0, x2 - x0
    w1 = d2 / (d1 * (d2 - d1))
    w2 = -d1 / (d2 * (d2 - d1))
    return -(w1 + w2), w1, w2


@dataclass(frozen=True)
class BoundaryTraces:
    """First derivatives of a nodal field on the two movable sides.

    ``alpha_side``: along ``theta = alpha``, sampled at the radial nodes ``r``.
    ``beta_side``: along ``r = L_beta(theta)``, sampled at the angular nodes.
    """

    r: np.ndarray
    dtheta_alpha_side: np.ndarray
    theta: np.ndarray
    dr_beta_side: np.ndarray
    dtheta_beta_side: np.ndarray


def boundary_trace_derivatives(mesh: MappedMesh, values: np.ndarray) -> BoundaryTraces:
    """One-sided second-order difference estimates of boundary derivatives.

    ``values`` is a full nodal vector (zero on the boundary).  Returned
    arrays are indexed by nodes along each side; vectors may carry a trailing
    axis of several fields.
    """
    if mesh.n_theta < 3 or mesh.n_r < 3:
        raise MeshError("mesh too coarse for boundary stencil")
    V = np.asarray(values, dtype=float)
    V = V.reshape(mesh.shape + V.shape[1:])
    # side theta = alpha is the line s = 1
    w0, w1, w2 = _one_sided_weights(mesh.s[-1], mesh.s[-2], mesh.s[-3])
    d_s = w0 * V[-1] + w1 * V[-2] + w2 * V[-3]
    r_nodes = mesh.u * mesh.side(mesh.alpha)
    # on s = 1 the field vanishes identically in u, so d_theta = d_s / alpha
    dth_a = d_s / mesh.alpha

    # side r = L(theta) is the line u = 1
    w0, w1, w2 = _one_sided_weights(mesh.u[-1], mesh.u[-2], mesh.u[-3])
    d_u = w0 * V[:, -1] + w1 * V[:, -2] + w2 * V[:, -3]
    theta_nodes = mesh.alpha * mesh.s
    L = mesh.side(theta_nodes)
    dL = mesh.side_dtheta(theta_nodes)
    extra = (slice(None),) + (None,) * (V.ndim - 2)
    dr_b = d_u / L[extra]
    dth_b = -(dL / L)[extra] * d_u
    return BoundaryTraces(
        r=r_nodes,
        dtheta_alpha_side=dth_a,
        theta=theta_nodes,
        dr_beta_side=dr_b,
        dtheta_beta_side=dth_b,
    )


def write_matrix_market(path, A: sp.spmatrix) -> None:
    """Dump the lower triangle of a symmetric matrix as MatrixMarket text."""
    C = sp.tril(A).tocoo()
    order = np.lexsort((C.row, C.col))
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {C.nnz}\n")
        for k in order:
            fh.write(f"{C.row[k] + 1} {C.col[k] + 1} {C.data[k]:.17g}\n")
