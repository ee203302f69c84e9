"""Dyadic-shell norms of grid fields and the regularized weight theta."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import shell_index
from .operators import GridSpec, grid_geometry

__all__ = [
    "BesovReport",
    "besov_report",
    "grid_shells",
    "bstar_norm",
    "b_norm",
    "weighted_norm",
    "tail_slope",
    "theta_eval",
    "theta_derivs",
    "ThetaWeight",
    "theta_property_fit",
    "log_samples",
]


def grid_shells(grid: GridSpec) -> np.ndarray:
    return shell_index(grid_geometry(grid).f)


def _shell_mass(grid: GridSpec, values) -> np.ndarray:
    idx = grid_shells(grid)
    sq = np.bincount(idx, weights=np.abs(np.asarray(values).reshape(-1)) ** 2, minlength=int(idx.max()) + 1)
    return np.sqrt(sq * grid.cell_volume)


@dataclass
class BesovReport:
    shell_mass: np.ndarray
    B_norm: float
    Bstar_norm: float
    tail: np.ndarray
    weighted: dict = field(default_factory=dict)
    n_max: int = 0

    def to_dict(self) -> dict:
        return {
            "shell_mass": [float(v) for v in self.shell_mass],
            "B_norm": self.B_norm,
            "Bstar_norm": self.Bstar_norm,
            "tail": [float(v) for v in self.tail],
            "weighted": {str(k): float(v) for k, v in self.weighted.items()},
            "n_max": self.n_max,
        }

    def csv_rows(self) -> list:
        rows = [["n", "shell_mass", "tail", "B_term"]]
        for n, (m, t) in enumerate(zip(self.shell_mass, self.tail)):
            rows.append([n, float(m), float(t), float(2.0 ** (n / 2) * m)])
        return rows


def besov_report(grid: GridSpec, values, weights=(-0.5, 0.5)) -> BesovReport:
    mass = _shell_mass(grid, values)
    n = np.arange(mass.size)
    tail = 2.0 ** (-n / 2) * mass
    return BesovReport(
        shell_mass=mass,
        B_norm=float(np.sum(2.0 ** (n / 2) * mass)),
        Bstar_norm=float(tail.max()) if tail.size else 0.0,
        tail=tail,
        weighted={s: weighted_norm(grid, values, s) for s in weights},
        n_max=int(mass.size - 1),
    )


def bstar_norm(grid: GridSpec, values) -> float:
    mass = _shell_mass(grid, values)
    return float(np.max(2.0 ** (-np.arange(mass.size) / 2) * mass))


def b_norm(grid: GridSpec, values) -> float:
    mass = _shell_mass(grid, values)
    return float(np.sum(2.0 ** (np.arange(mass.size) / 2) * mass))


def weighted_norm(grid: GridSpec, values, s: float) -> float:
    """||f^s u|| in L^2."""
    f = grid_geometry(grid).f
    return float(np.sqrt(np.sum(np.abs(np.asarray(values).reshape(-1) * f**s) ** 2) * grid.cell_volume))


def tail_slope(tail, shells=None, last: int = 4) -> float:
    """Least-squares slope of log2(tail) against n; -inf-safe for vanishing tails.

    A flat sequence gives 0, a sequence halving per shell gives -1.
    """
    tail = np.asarray(tail, dtype=float)
    if shells is None:
        shells = np.arange(tail.size)[-last:]
    shells = np.asarray(shells)
    vals = tail[shells]
    if np.all(vals == 0.0):
        return 0.0
    vals = np.maximum(vals, np.max(vals) * 1e-300)
    return float(np.polyfit(shells, np.log2(vals), 1)[0])


# ---------------------------------------------------------------- theta


def theta_derivs(f, nu: int, delta: float, order: int = 2):
    """[theta, theta', ..., theta^(order)] with theta = (1 - (1 + f/2^nu)^-delta) / delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    f = np.asarray(f, dtype=float)
    scale = 2.0**nu
    base = 1.0 + f / scale
    out = [(1.0 - base**-delta) / delta]
    coef = 1.0
    for k in range(1, order + 1):
        # theta^(k) = (-1)^(k-1) (1+delta)...(k-1+delta) base^(-k-delta) / 2^(k nu)
        if k > 1:
            coef *= -(k - 1 + delta)
        out.append(coef * base ** (-k - delta) / scale**k)
    return out


def theta_eval(f, nu: int, delta: float):
    """(theta, theta', theta'') at f."""
    return tuple(theta_derivs(f, nu, delta, 2))


@dataclass(frozen=True)
class ThetaWeight:
    nu: int
    delta: float

    def __call__(self, f, order: int = 2):
        return theta_derivs(f, self.nu, self.delta, order)


def theta_property_fit(f, nu: int, delta: float) -> dict:
    """Fitted constants of the theta inequalities on the sample f (all should be finite, positive)."""
    f = np.asarray(f, dtype=float)
    th, th1, th2 = theta_derivs(f, nu, delta, 2)
    scale = 2.0**nu
    lower_theta = th * scale  # c <= theta 2^nu
    lower_d1 = th1 / (np.minimum(scale, f) ** delta * f ** (-1.0 - delta) * th)
    return {
        "c_theta": float(lower_theta.min()),
        "C_theta": float(th.max()),
        "theta_le_f_over_scale": bool(np.all(th <= f / scale * (1 + 1e-14))),
        "c_dtheta": float(lower_d1.min()),
        "dtheta_le_theta_over_f": bool(np.all(th1 <= th / f * (1 + 1e-14))),
        "d2_sign_ok": bool(np.all(-th2 >= 0.0)),
        "C_2": float(np.max(-th2 * f**2 / th)),
    }


def theta_bound(delta: float) -> float:
    return 1.0 / delta


def log_samples(lo: float = 1.0, hi: float = 1e4, n: int = 2000) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), n)
