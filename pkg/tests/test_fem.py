import math

import numpy as np
import pytest
import scipy.io
import scipy.sparse.linalg as spla

from sphectra.fem import (
    MeshError,
    assemble,
    boundary_trace_derivatives,
    build_mesh,
    graded_nodes,
    remap,
    symmetric_graded_nodes,
    write_matrix_market,
)
from sphectra.geometry import Digon, DomainError, Triangle, ground_state, octant_eigenfunction_grad, side_length

OCTANT = Triangle(0.5 * math.pi, 0.5 * math.pi)


def _interpolant(mesh, f):
    r, t = mesh.polar_nodes()
    return f(r, t).ravel()


def test_node_layout():
    mesh = build_mesh(Triangle(1.0, 2.0), 6, 5, 2.0)
    assert mesh.shape == (7, 6)
    assert mesh.n_nodes == 42
    assert mesh.node_index(2, 3) == 2 * 6 + 3
    b = mesh.boundary_mask()
    assert b.sum() == 42 - 5 * 4
    assert np.array_equal(mesh.interior, np.flatnonzero(~b))


def test_graded_nodes():
    assert graded_nodes(4, 2.0) == pytest.approx([0, 1 / 16, 1 / 4, 9 / 16, 1])
    s = symmetric_graded_nodes(8, 3.0)
    assert s[0] == 0 and s[-1] == 1
    assert s == pytest.approx(1 - s[::-1])
    assert np.all(np.diff(s) > 0)


def test_polar_nodes_fill_triangle():
    tri = Triangle(1.2, 1.9)
    mesh = build_mesh(tri, 8, 8)
    r, t = mesh.polar_nodes()
    assert t.min() == 0 and t.max() == pytest.approx(1.2)
    assert np.all(r <= side_length(1.9, t) + 1e-14)
    assert r[:, -1] == pytest.approx(side_length(1.9, t[:, -1]))


def test_mass_and_stiffness_of_ground_state():
    mass, rq = [], []
    for n in (16, 32, 64):
        mesh = build_mesh(OCTANT, n, n)
        P = assemble(mesh)
        u = P.restrict(_interpolant(mesh, ground_state))
        m = u @ (P.M @ u)
        mass.append(abs(m - 1.0))
        rq.append(abs(u @ (P.K @ u) / m - 12.0))
    # the interpolant of the normalised eigenfunction: both forms converge at second order
    for errs in (mass, rq):
        assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5
    assert mass[-1] < 5e-3 and rq[-1] < 1e-2


def test_matrices_symmetric_positive():
    P = assemble(build_mesh(Triangle(0.9, 2.3), 10, 12))
    for A in (P.K, P.M):
        assert abs(A - A.T).max() < 1e-14 * abs(A).max()
    lo = spla.eigsh(P.M, k=1, which="SA", return_eigenvectors=False)[0]
    assert lo > 0


def test_remap_keeps_logical_grid():
    mesh = build_mesh(Triangle(1.0, 1.0), 8, 8)
    other = remap(mesh, 1.1, 0.9)
    assert np.array_equal(other.s, mesh.s) and np.array_equal(other.u, mesh.u)
    assert (other.alpha, other.beta) == (1.1, 0.9)


def test_digon_mesh():
    mesh = build_mesh(Digon(math.pi / 3), 8, 8)
    assert mesh.is_digon and mesh.alpha == pytest.approx(math.pi)


@pytest.mark.parametrize("bad", [Triangle(1e-4, 1.0), Triangle(1.0, math.pi - 1e-4)])
def test_degenerate_rejected(bad):
    with pytest.raises(DomainError, match="out of range"):
        build_mesh(bad, 8, 8)


def test_mesh_parameters_validated():
    with pytest.raises(MeshError):
        build_mesh(OCTANT, 3, 8)
    with pytest.raises(MeshError):
        build_mesh(OCTANT, 8, 8, gamma=0.5)
    with pytest.raises(TypeError):
        build_mesh((1.0, 1.0), 8, 8)


def test_boundary_traces_of_ground_state():
    errs = []
    for n in (32, 64):
        mesh = build_mesh(OCTANT, n, n)
        full = _interpolant(mesh, ground_state)
        tr = boundary_trace_derivatives(mesh, full)
        _, gt = octant_eigenfunction_grad(0, tr.r, 0.5 * math.pi)
        gr, _ = octant_eigenfunction_grad(0, 0.5 * math.pi, tr.theta)
        scale = max(np.max(np.abs(gt)), np.max(np.abs(gr)))
        errs.append(max(np.max(np.abs(tr.dtheta_alpha_side - gt)), np.max(np.abs(tr.dr_beta_side - gr))) / scale)
    assert errs[0] / errs[1] > 3.5
    assert errs[1] < 1e-2
    # stacked fields give the same traces
    tr2 = boundary_trace_derivatives(mesh, np.stack([full, 2 * full], axis=1))
    assert tr2.dr_beta_side[:, 1] == pytest.approx(2 * tr.dr_beta_side)


def test_interpolate_outside_is_zero():
    mesh = build_mesh(OCTANT, 64, 64)
    full = _interpolant(mesh, ground_state)
    inside = mesh.interpolate(full, np.array([0.7]), np.array([0.4]))
    assert inside[0] == pytest.approx(ground_state(0.7, 0.4), rel=2e-3)
    assert mesh.interpolate(full, np.array([0.7]), np.array([2.0]))[0] == 0.0


def test_matrix_market_roundtrip(tmp_path):
    P = assemble(build_mesh(Triangle(1.0, 1.4), 6, 6))
    path = tmp_path / "K.mtx"
    write_matrix_market(path, P.K)
    assert path.read_text().startswith("%%MatrixMarket matrix coordinate real symmetric")
    back = scipy.io.mmread(str(path)).tocsr()
    assert abs(back - P.K).max() == 0.0
