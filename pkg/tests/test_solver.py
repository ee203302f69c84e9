import numpy as np
import pytest

from starklap.experiments import resolvent_identity_residual
from starklap.operators import CapSpec, GridSpec, build_hamiltonian, norm
from starklap.potential import make_potential
from starklap.solver import ShiftedSystem, SolverError, solve_resolvent

GRID = GridSpec(2, ((-10.0, 20.0), (-10.0, 10.0)), 0.5)


def _psi(rng, n):
    return rng.normal(size=n) + 1j * rng.normal(size=n)


@pytest.mark.parametrize("method", ["direct-LU", "iterative"])
@pytest.mark.parametrize("gamma", [1.0, 0.25])
def test_resolvent_bound_cap_off(rng, method, gamma):
    H = build_hamiltonian(GRID, make_potential("mixed"))
    psi = _psi(rng, GRID.n_nodes)
    sol = solve_resolvent(H, complex(0.3, gamma), psi, tol=1e-9, method=method)
    assert sol.relative_residual <= 1e-9
    assert norm(GRID, sol.phi) <= norm(GRID, psi) / gamma * (1 + 1e-10)


def test_first_resolvent_identity(rng):
    H = build_hamiltonian(GRID, make_potential("mixed"))
    psi = _psi(rng, GRID.n_nodes)
    tol = 1e-10
    assert resolvent_identity_residual(H, complex(0.0, 0.5), complex(0.2, 0.25), psi, tol) <= 10 * tol


def test_conjugation_symmetry(rng):
    H = build_hamiltonian(GRID, make_potential("long_range"))
    psi = _psi(rng, GRID.n_nodes)
    tol = 1e-10
    z = complex(-0.4, 0.3)
    a = solve_resolvent(H, z, psi, tol=tol).phi
    b = solve_resolvent(H, z.conjugate(), psi.conj(), tol=tol).phi
    assert np.linalg.norm(a - b.conj()) <= tol * np.linalg.norm(a)


def test_zero_rhs_gives_zero():
    H = build_hamiltonian(GRID)
    sol = ShiftedSystem(H, 1j).solve(np.zeros(GRID.n_nodes))
    assert np.all(sol.phi == 0) and sol.relative_residual == 0.0


def test_real_parameter_needs_cap():
    H = build_hamiltonian(GRID)
    with pytest.raises(ValueError):
        ShiftedSystem(H, 0.5)
    capped = GridSpec(2, GRID.bounds, GRID.h, cap=CapSpec(4.0, 10.0))
    sol = solve_resolvent(build_hamiltonian(capped), 0.5, np.ones(capped.n_nodes))
    assert sol.relative_residual <= 1e-8


def test_unreachable_tolerance_raises(rng):
    H = build_hamiltonian(GRID)
    with pytest.raises(SolverError) as info:
        solve_resolvent(H, 0.1j, _psi(rng, GRID.n_nodes), tol=1e-30, method="iterative", maxiter=60)
    assert info.value.best_residual > 0
