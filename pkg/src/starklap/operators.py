"""Uniform truncated grids and sparse finite-difference operators.

Unknowns live on the interior nodes of a box; the box faces carry the zero
Dirichlet condition and are not unknowns, so every operator is a square matrix
on interior nodes and never references out-of-box values. Node ordering is
x-fastest: flat index ``i0 + n0 * (i1 + n1 * (...))``, which is numpy's C order
on arrays of shape ``(n_{d-1}, ..., n1, n0)``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import GeometryEval, eval_geometry
from .potential import PotentialSpec, eval_potential

__all__ = [
    "CapSpec",
    "GridSpec",
    "GridField",
    "SparseOperator",
    "grid_geometry",
    "first_derivative",
    "laplacian",
    "mult",
    "cap_profile",
    "build_hamiltonian",
    "build_pf",
    "build_A",
    "build_ptilde",
    "tensor_form",
    "ell_form",
    "inner",
    "norm",
]

AXIS_NAMES = ("x", "y", "z", "w")

_D1 = {
    2: {1: 0.5},
    4: {1: 2.0 / 3.0, 2: -1.0 / 12.0},
}
_D2 = {
    2: (-2.0, {1: 1.0}),
    4: (-2.5, {1: 4.0 / 3.0, 2: -1.0 / 12.0}),
}


@dataclass(frozen=True)
class CapSpec:
    """Absorbing layer ``W = strength * (depth / width)**power`` on the listed faces."""

    width: float
    strength: float
    power: float = 3.0
    faces: tuple = ("x-", "y-", "y+")
    face_widths: tuple = ()  # optional (face, width) overrides

    def width_of(self, face: str) -> float:
        return dict(self.face_widths).get(face, self.width)


@dataclass(frozen=True)
class GridSpec:
    d: int
    bounds: tuple
    h: float
    stencil_order: int = 2
    cap: Optional[CapSpec] = None

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if self.d < 2 or len(bounds) != self.d:
            raise ValueError("need d >= 2 and one interval per axis")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.stencil_order not in (2, 4):
            raise ValueError("stencil_order must be 2 or 4")
        for lo, hi in bounds:
            cells = (hi - lo) / self.h
            if abs(cells - round(cells)) > 1e-8 * max(1.0, cells):
                raise ValueError(f"interval [{lo}, {hi}] is not a multiple of h={self.h}")
            if round(cells) - 1 < 8:
                raise ValueError(f"interval [{lo}, {hi}] has fewer than 8 interior nodes")
        if self.cap is not None:
            for face in self.cap.faces:
                axis = AXIS_NAMES.index(face[0])
                lo, hi = bounds[axis]
                if not 0 < self.cap.width_of(face) < 0.5 * (hi - lo):
                    raise ValueError("cap width must be below half the box on each side")

    @property
    def counts(self) -> tuple:
        """Interior node count per axis, x first."""
        return tuple(int(round((hi - lo) / self.h)) - 1 for lo, hi in self.bounds)

    @property
    def array_shape(self) -> tuple:
        return tuple(reversed(self.counts))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.counts))

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def axis(self, k: int) -> np.ndarray:
        lo, _ = self.bounds[k]
        return lo + self.h * np.arange(1, self.counts[k] + 1)

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(d, *array_shape)``; ``coords()[0]`` is x."""
        axes = [self.axis(k) for k in reversed(range(self.d))]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(list(reversed(mesh)))

    def flat_coords(self) -> np.ndarray:
        return self.coords().reshape(self.d, -1)

    def with_h(self, h: float) -> "GridSpec":
        return GridSpec(self.d, self.bounds, h, self.stencil_order, self.cap)

    def without_cap(self) -> "GridSpec":
        return GridSpec(self.d, self.bounds, self.h, self.stencil_order, None)


@dataclass
class GridField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).reshape(-1)
        if self.values.size != self.grid.n_nodes:
            raise ValueError("field length does not match the node count")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field has non-finite entries")

    @property
    def array(self) -> np.ndarray:
        return self.values.reshape(self.grid.array_shape)

    def norm(self) -> float:
        return norm(self.grid, self.values)


@dataclass
class SparseOperator:
    matrix: sp.csr_matrix
    hermitian: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix, dtype=complex)

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        if isinstance(other, GridField):
            return GridField(other.grid, self.matrix @ other.values)
        if isinstance(other, SparseOperator):
            return SparseOperator(self.matrix @ other.matrix)
        return self.matrix @ other

    def hermiticity_defect(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        scale = max(abs(self.matrix).max(), 1e-300)
        return float(abs(diff).max() / scale) if diff.nnz else 0.0


def inner(grid: GridSpec, u, v) -> complex:
    """Grid quadrature of ``conj(u) * v``."""
    return complex(np.vdot(u, v) * grid.cell_volume)


def norm(grid: GridSpec, u) -> float:
    return float(np.sqrt(np.sum(np.abs(u) ** 2) * grid.cell_volume))


@functools.lru_cache(maxsize=8)
def grid_geometry(grid: GridSpec) -> GeometryEval:
    """Geometry of f at every interior node, flattened (cached per grid)."""
    return eval_geometry(grid.flat_coords())


def _band_1d(n: int, offsets: dict, center: float, antisymmetric: bool):
    diags = [np.full(n, center)]
    ks = [0]
    for k, c in offsets.items():
        if k >= n:
            continue
        diags += [np.full(n - k, c), np.full(n - k, -c if antisymmetric else c)]
        ks += [k, -k]
    return sp.diags(diags, ks, shape=(n, n), format="csr")


def _kron_axis(grid: GridSpec, axis: int, op1d):
    mats = []
    for k in reversed(range(grid.d)):
        mats.append(op1d if k == axis else sp.identity(grid.counts[k], format="csr"))
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


@functools.lru_cache(maxsize=32)
def first_derivative(grid: GridSpec, axis: int) -> sp.csr_matrix:
    """Centered first difference along ``axis`` (real, antisymmetric)."""
    op = _band_1d(grid.counts[axis], _D1[grid.stencil_order], 0.0, True) / grid.h
    return _kron_axis(grid, axis, op)


@functools.lru_cache(maxsize=8)
def laplacian(grid: GridSpec) -> sp.csr_matrix:
    center, offsets = _D2[grid.stencil_order]
    out = None
    for axis in range(grid.d):
        op = _band_1d(grid.counts[axis], offsets, center, False) / grid.h**2
        term = _kron_axis(grid, axis, op)
        out = term if out is None else out + term
    return out.tocsr()


def mult(values) -> sp.csr_matrix:
    values = np.asarray(values).reshape(-1)
    return sp.diags(values, 0, format="csr")


def cap_profile(grid: GridSpec) -> np.ndarray:
    """Nonnegative absorbing profile W at the nodes (zeros without a cap)."""
    W = np.zeros(grid.n_nodes)
    cap = grid.cap
    if cap is None:
        return W
    p = grid.flat_coords()
    for face in cap.faces:
        axis = AXIS_NAMES.index(face[0])
        lo, hi = grid.bounds[axis]
        dist = (p[axis] - lo) if face[1] == "-" else (hi - p[axis])
        width = cap.width_of(face)
        depth = np.clip(width - dist, 0.0, None) / width
        W += cap.strength * depth**cap.power
    return W


def build_hamiltonian(grid: GridSpec, spec: Optional[PotentialSpec] = None) -> SparseOperator:
    """H = -Lap/2 - x + q, minus i W when the grid carries a cap."""
    p = grid.flat_coords()
    diag = -p[0]
    if spec is not None and not spec.is_zero:
        diag = diag + eval_potential(spec, p).total
    H = -0.5 * laplacian(grid) + mult(diag)
    hermitian = grid.cap is None
    if not hermitian:
        H = H - 1j * mult(cap_profile(grid))
    return SparseOperator(H, hermitian=hermitian, meta={"kind": "H"})


@functools.lru_cache(maxsize=8)
def _pf_matrix(grid: GridSpec):
    geo = grid_geometry(grid)
    out = None
    for j in range(grid.d):
        term = mult(geo.grad_f[j]) @ first_derivative(grid, j)
        out = term if out is None else out + term
    return (-1j * out).tocsr()


def build_pf(grid: GridSpec) -> SparseOperator:
    """p^f = -i sum_j (d_j f) D_j."""
    return SparseOperator(_pf_matrix(grid), meta={"kind": "pf"})


def build_A(grid: GridSpec) -> SparseOperator:
    """A = p^f - (i/2) Lap f."""
    geo = grid_geometry(grid)
    return SparseOperator(_pf_matrix(grid) - 0.5j * mult(geo.lap_f), meta={"kind": "A"})


def build_ptilde(grid: GridSpec) -> list:
    """Components |grad f| p_j of p-tilde."""
    geo = grid_geometry(grid)
    weight = mult(np.sqrt(geo.grad_f_sq))
    return [SparseOperator(-1j * (weight @ first_derivative(grid, j)), meta={"kind": f"ptilde{j}"}) for j in range(grid.d)]


def gradient(grid: GridSpec, values) -> np.ndarray:
    """Centered differences D_j phi for every axis, shape ``(d, N)``."""
    values = np.asarray(values).reshape(-1)
    return np.stack([first_derivative(grid, j) @ values for j in range(grid.d)])


def tensor_form(grid: GridSpec, values, M) -> complex:
    """<p_j M_jk p_k>_phi = h^d sum conj(D_j phi) M_jk D_k phi."""
    g = gradient(grid, values)
    Mg = np.einsum("jk...,k...->j...", M, g)
    return complex(np.sum(np.conj(g) * Mg) * grid.cell_volume)


def ell_form(grid: GridSpec, values, weight) -> float:
    """<p_j w ell_jk p_k>_phi for a real pointwise weight w."""
    geo = grid_geometry(grid)
    w = np.broadcast_to(np.asarray(weight, dtype=float), (grid.n_nodes,))
    return float(tensor_form(grid, values, geo.ell * w).real)


def weight_on_grid(grid: GridSpec, func) -> np.ndarray:
    """Evaluate ``func(geometry)`` at the nodes."""
    return np.asarray(func(grid_geometry(grid)), dtype=float).reshape(-1)


def restrict_mask(grid: GridSpec, lower: Sequence[float], upper: Sequence[float]) -> np.ndarray:
    p = grid.flat_coords()
    mask = np.ones(grid.n_nodes, dtype=bool)
    for k in range(grid.d):
        mask &= (p[k] >= lower[k]) & (p[k] <= upper[k])
    return mask
