import numpy as np
import pytest

from starklap.operators import (
    CapSpec,
    GridField,
    GridSpec,
    build_A,
    build_hamiltonian,
    build_pf,
    cap_profile,
    ell_form,
    first_derivative,
    grid_geometry,
    inner,
    laplacian,
    norm,
)
from starklap.potential import make_potential


def _dense_laplacian(nx, ny, h):
    # direct loop over nodes, x-fastest ordering, zero Dirichlet outside
    n = nx * ny
    L = np.zeros((n, n))
    for j in range(ny):
        for i in range(nx):
            k = i + nx * j
            L[k, k] = -4.0 / h**2
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < nx and 0 <= jj < ny:
                    L[k, ii + nx * jj] = 1.0 / h**2
    return L


def test_laplacian_matches_dense_loop():
    g = GridSpec(2, ((0.0, 5.0), (0.0, 4.5)), 0.5)
    nx, ny = g.counts
    np.testing.assert_array_equal(laplacian(g).toarray(), _dense_laplacian(nx, ny, g.h))


def test_node_ordering_is_x_fastest():
    g = GridSpec(2, ((0.0, 5.0), (0.0, 4.5)), 0.5)
    p = g.flat_coords()
    assert p[0, 1] - p[0, 0] == pytest.approx(0.5)
    assert p[1, 1] == p[1, 0]
    assert p[1, g.counts[0]] - p[1, 0] == pytest.approx(0.5)


def test_first_derivative_antisymmetric(small_grid):
    for j in range(2):
        D = first_derivative(small_grid, j)
        assert abs(D + D.T).max() == 0.0


@pytest.mark.parametrize("order", [2, 4])
def test_laplacian_consistency_order(order):
    errs = []
    hs = (0.4, 0.2, 0.1)
    for h in hs:
        g = GridSpec(2, ((-4.0, 4.0), (-4.0, 4.0)), h, order)
        x, y = g.flat_coords()
        u = np.exp(-(x**2 + y**2))
        exact = (4 * (x**2 + y**2) - 4) * u
        inner_mask = (np.abs(x) < 3) & (np.abs(y) < 3)
        errs.append(np.max(np.abs((laplacian(g) @ u - exact)[inner_mask])))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope == pytest.approx(order, abs=0.3)


def test_hamiltonian_hermitian_without_cap(small_grid):
    H = build_hamiltonian(small_grid, make_potential("mixed"))
    assert H.hermitian
    assert H.hermiticity_defect() < 1e-15


def test_cap_makes_dissipative():
    g = GridSpec(2, ((-10.0, 20.0), (-10.0, 10.0)), 0.5, cap=CapSpec(4.0, 5.0))
    W = cap_profile(g)
    assert W.min() == 0.0 and W.max() > 0
    H = build_hamiltonian(g)
    assert not H.hermitian
    u = np.random.default_rng(0).normal(size=g.n_nodes) + 0j
    assert inner(g, u, H.matrix @ u).imag <= 0.0
    # the x+ face carries no layer by default
    p = g.flat_coords()
    assert np.all(W[(p[0] > 15) & (np.abs(p[1]) < 5)] == 0.0)


def test_per_face_width():
    cap = CapSpec(4.0, 5.0, face_widths=(("y+", 2.0),))
    g = GridSpec(2, ((-10.0, 20.0), (-10.0, 10.0)), 0.5, cap=cap)
    p = g.flat_coords()
    W = cap_profile(g)
    assert np.all(W[(p[1] > -6) & (p[1] < 8) & (p[0] > -6)] == 0.0)
    assert np.any(W[p[1] > 8.5] > 0)


def test_A_matches_dense_formula(small_grid):
    g = small_grid
    geo = grid_geometry(g)
    D = [first_derivative(g, j).toarray() for j in range(2)]
    dense = -1j * (np.diag(geo.grad_f[0]) @ D[0] + np.diag(geo.grad_f[1]) @ D[1]) - 0.5j * np.diag(geo.lap_f)
    np.testing.assert_allclose(build_A(g).matrix.toarray(), dense, atol=1e-15)
    np.testing.assert_allclose(build_pf(g).matrix.toarray(), dense + 0.5j * np.diag(geo.lap_f), atol=1e-15)


def test_ell_form_dense_and_real(small_grid, rng):
    g = small_grid
    u = rng.normal(size=g.n_nodes) + 1j * rng.normal(size=g.n_nodes)
    geo = grid_geometry(g)
    D = [first_derivative(g, j) @ u for j in range(2)]
    w = 1.0 / geo.f
    dense = sum(np.vdot(D[j], w * geo.ell[j, k] * D[k]) for j in range(2) for k in range(2)) * g.cell_volume
    assert abs(dense.imag) < 1e-10 * abs(dense)
    assert ell_form(g, u, w) == pytest.approx(dense.real, rel=1e-12)
    assert ell_form(g, u, w) >= 0.0


def test_gridfield_validation(small_grid):
    with pytest.raises(ValueError):
        GridField(small_grid, np.zeros(3))
    v = np.zeros(small_grid.n_nodes)
    v[0] = np.nan
    with pytest.raises(ValueError):
        GridField(small_grid, v)
    assert GridField(small_grid, np.ones(small_grid.n_nodes)).norm() == pytest.approx(norm(small_grid, np.ones(small_grid.n_nodes)))


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(2, ((0.0, 1.0), (0.0, 1.0)), 0.3)
    with pytest.raises(ValueError):
        GridSpec(2, ((0.0, 10.0), (0.0, 10.0)), 0.5, stencil_order=6)
    with pytest.raises(ValueError):
        GridSpec(2, ((0.0, 10.0), (0.0, 10.0)), 0.5, cap=CapSpec(6.0, 1.0))
