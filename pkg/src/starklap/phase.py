"""Asymptotic complex phases a_z, a^sim and the factorization remainder q6."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import FarCalculus, cutoff_derivs, eval_geometry
from .potential import PotentialSpec, eval_potential

__all__ = [
    "PhaseParams",
    "PhaseFields",
    "BranchCutError",
    "eval_phase",
    "phase_fields",
    "eval_q6",
    "q6_closed_form",
    "select_l",
]


class BranchCutError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseParams:
    z: complex
    l: int
    sign: int = 1
    variant: str = "root"

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.variant not in ("root", "simple"):
            raise ValueError("variant must be 'root' or 'simple'")
        if self.l < 0:
            raise ValueError("l must be nonnegative")


@dataclass
class PhaseFields:
    a: np.ndarray
    grad_a: np.ndarray  # complex, shape (d, ...)
    df_a: np.ndarray  # derivative of a along grad f
    cutoff: np.ndarray
    w: Optional[np.ndarray]


def _components(spec, p):
    if spec is None or spec.is_zero:
        shape = p.shape[1:]
        return np.zeros(shape), np.zeros(p.shape), np.zeros(shape)
    comps = eval_potential(spec, p)
    return comps.q1, comps.grad_q1, comps.total


def phase_fields(params: PhaseParams, p, spec: Optional[PotentialSpec] = None, geo=None) -> PhaseFields:
    """a together with its gradient, all in closed form."""
    p = np.asarray(p, dtype=float)
    geo = eval_geometry(p) if geo is None else geo
    f, r = geo.f, geo.r
    cut = cutoff_derivs(f, params.l, order=1, bar=True)
    active = cut[0] > 0
    safe_r = np.where(r > 0, r, 1.0)
    rhat = p / safe_r
    s = params.sign
    imag_part = s * 0.25j * f / safe_r**2
    grad_imag = s * 0.25j * (geo.grad_f / safe_r**2 - 2.0 * f * rhat / safe_r**3)
    if params.variant == "root":
        q1, grad_q1, _ = _components(spec, p)
        w = 1.0 + (params.z - q1) / safe_r
        bad = active & (w.imag == 0.0) & (w.real <= 0.0)
        if np.any(bad):
            k = np.argwhere(bad)[0]
            pt = tuple(float(c) for c in p[(slice(None),) + tuple(k)])
            raise BranchCutError(f"square root branch cut hit at point {pt}")
        root = np.sqrt(w.astype(complex))
        grad_w = -grad_q1 / safe_r - (params.z - q1) * rhat / safe_r**2
        core = root + imag_part
        grad_core = grad_w / (2.0 * root) + grad_imag
    else:
        w = None
        core = f**2 / (2.0 * safe_r) + imag_part
        grad_core = f * geo.grad_f / safe_r - f**2 * rhat / (2.0 * safe_r**2) + grad_imag
    a = np.where(active, cut[0] * core, 0.0)
    grad_a = np.where(active, cut[1] * geo.grad_f * core + cut[0] * grad_core, 0.0)
    df_a = np.sum(geo.grad_f * grad_a, axis=0)
    return PhaseFields(a=a, grad_a=grad_a, df_a=df_a, cutoff=cut[0], w=w)


def eval_phase(params: PhaseParams, p, spec: Optional[PotentialSpec] = None):
    return phase_fields(params, p, spec).a


def select_l(zs, spec: Optional[PotentialSpec], points, threshold: float = 0.25, l_max: int = 12) -> int:
    """Smallest l with Re((r - q1 + z)/r) >= threshold on supp barchi_l for every z."""
    p = points.flat_coords() if hasattr(points, "flat_coords") else np.asarray(points, dtype=float).reshape(2, -1)
    geo = eval_geometry(p)
    q1, _, _ = _components(spec, p)
    r = np.where(geo.r > 0, geo.r, 1.0)
    for l in range(l_max + 1):
        supp = geo.f > 2.0**l
        if not np.any(supp):
            return l
        ok = all(np.min(np.real((r[supp] - q1[supp] + z) / r[supp])) >= threshold for z in zs)
        if ok:
            return l
    raise ValueError("no admissible l up to l_max")


def eval_q6(params: PhaseParams, spec: Optional[PotentialSpec], p) -> np.ndarray:
    """q6 = (p^f a r) + r a^2 - r + q - z + r (Lap f)^2 / 4 + d^f(r Lap f) / 2.

    Valid where f >= 2^(l+2), inside the far region; elsewhere returns nan.
    """
    p = np.asarray(p, dtype=float)
    d = p.shape[0]
    geo = eval_geometry(p)
    ph = phase_fields(params, p, spec, geo)
    _, _, q = _components(spec, p)
    valid = (geo.f >= 2.0 ** (params.l + 2)) & geo.in_far_region
    r = np.where(valid, geo.r, 1.0)
    fc = FarCalculus(np.where(valid, geo.f, 2.0), r, d)
    pf_ar = -1j * (ph.df_a * r + ph.a * fc.df_r)
    out = pf_ar + r * ph.a**2 - r + q - params.z + 0.25 * r * fc.lap_f**2 + 0.5 * fc.df_r_lap_f
    return np.where(valid, out, np.nan)


def q6_closed_form(z: complex, spec: Optional[PotentialSpec], p) -> np.ndarray:
    """Reduced form of q6 for the square-root phase, upper sign, where barchi_l = 1 and q3 = 0."""
    p = np.asarray(p, dtype=float)
    d = p.shape[0]
    geo = eval_geometry(p)
    f, r = geo.f, geo.r
    if spec is None or spec.is_zero:
        q1 = np.zeros_like(f)
        df_q1 = np.zeros_like(f)
        q2 = np.zeros_like(f)
    else:
        comps = eval_potential(spec, p)
        q1, q2 = comps.q1, comps.q2
        df_q1 = np.sum(geo.grad_f * comps.grad_q1, axis=0)
    root = np.sqrt((1.0 + (z - q1) / r).astype(complex))
    fc = FarCalculus(f, r, d)
    main = 0.25j * (z * f / r**2 + 2.0 * df_q1 - f * q1 / r**2) / root + 0.125 / r**2 - 3.0 / 16.0 * f**2 / r**3 + q2
    return main + 0.25 * r * fc.lap_f**2 + 0.5 * fc.df_r_lap_f
