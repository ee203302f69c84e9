"""Residual-certified solves of (H - z) phi = psi."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .operators import GridField, SparseOperator

__all__ = ["SolveResult", "SolverError", "ShiftedSystem", "solve_resolvent", "DIRECT_MAX_NODES"]

log = logging.getLogger(__name__)

DIRECT_MAX_NODES = 300_000


class SolverError(RuntimeError):
    """Raised when a solve cannot meet its residual target."""

    def __init__(self, message: str, best_residual: float = float("nan")):
        super().__init__(message)
        self.best_residual = best_residual


@dataclass
class SolveResult:
    phi: np.ndarray
    relative_residual: float
    iterations: int
    method: str

    def field(self, grid) -> GridField:
        return GridField(grid, self.phi)


class ShiftedSystem:
    """H - z assembled and factorized once; reused for any number of right-hand sides."""

    def __init__(
        self,
        H: SparseOperator,
        z: complex,
        method: str = "auto",
        tol: float = 1e-8,
        maxiter: int = 10_000,
        restart: int = 60,
        drop_tol: float = 1e-5,
        fill_factor: float = 20.0,
    ):
        if H.hermitian and complex(z).imag == 0.0:
            raise ValueError("real spectral parameter needs Im z != 0 or an absorbing layer")
        self.z = complex(z)
        self.tol = tol
        self.maxiter = maxiter
        self.restart = restart
        n = H.shape[0]
        self.matrix = (H.matrix - self.z * sp.identity(n, dtype=complex, format="csr")).tocsc()
        if method == "auto":
            method = "direct-LU" if n <= DIRECT_MAX_NODES else "iterative"
        if method not in ("direct-LU", "iterative"):
            raise ValueError(f"unknown method {method!r}")
        if method == "iterative":
            try:
                self._ilu = spla.spilu(self.matrix, drop_tol=drop_tol, fill_factor=fill_factor)
            except RuntimeError as exc:
                # dropped entries can leave an exactly zero pivot; the full factor is the fallback
                log.warning("incomplete LU failed (%s); falling back to direct LU", exc)
                method = "direct-LU"
        self.method = method
        if method == "direct-LU":
            try:
                self._lu = spla.splu(self.matrix, permc_spec="COLAMD")
            except RuntimeError as exc:  # SuperLU reports the singular pivot in its message
                raise SolverError(f"factorization of H - ({self.z}) failed: {exc}") from exc

    def _residual(self, phi, psi, psi_norm):
        return float(np.linalg.norm(self.matrix @ phi - psi) / psi_norm)

    def solve(self, psi) -> SolveResult:
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        psi_norm = np.linalg.norm(psi)
        if psi_norm == 0.0:
            return SolveResult(np.zeros_like(psi), 0.0, 0, self.method)
        if self.method == "direct-LU":
            phi = self._lu.solve(psi)
            res = self._residual(phi, psi, psi_norm)
            steps = 0
            # a few rounds of iterative refinement if rounding left us short
            while res > self.tol and steps < 3:
                phi = phi + self._lu.solve(psi - self.matrix @ phi)
                res = self._residual(phi, psi, psi_norm)
                steps += 1
            if res > self.tol:
                raise SolverError(f"direct solve residual {res:.3e} above tol {self.tol:.1e}", res)
            return SolveResult(phi, res, 0, self.method)

        M = spla.LinearOperator(self.matrix.shape, self._ilu.solve, dtype=complex)
        count = [0]

        def callback(_):
            count[0] += 1

        phi, info = spla.gmres(
            self.matrix,
            psi,
            M=M,
            rtol=self.tol * 0.5,
            atol=0.0,
            restart=self.restart,
            maxiter=max(1, self.maxiter // self.restart),
            callback=callback,
            callback_type="pr_norm",
        )
        res = self._residual(phi, psi, psi_norm)
        if info != 0 or res > self.tol:
            raise SolverError(f"GMRES stopped after {count[0]} iterations at residual {res:.3e}", res)
        return SolveResult(phi, res, count[0], self.method)


def solve_resolvent(H: SparseOperator, z: complex, psi, tol: float = 1e-8, method: str = "auto", **kwargs) -> SolveResult:
    """phi = (H - z)^{-1} psi with ||(H - z) phi - psi|| <= tol ||psi||."""
    values = psi.values if isinstance(psi, GridField) else psi
    return ShiftedSystem(H, z, method=method, tol=tol, **kwargs).solve(values)
