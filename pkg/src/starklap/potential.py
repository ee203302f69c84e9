"""Admissible potentials q = q1 + q2 + q3 and their numerical validation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import chi_derivs, cutoff_derivs, escape_f, eval_geometry

__all__ = [
    "PotentialSpec",
    "PotentialComponents",
    "ConditionReport",
    "PotentialValidationError",
    "eval_potential",
    "validate_conditions",
    "make_potential",
    "FAMILIES",
]

# sup |chi'| of the cutoff profile, attained at s = 3/2
CHI_PRIME_MAX = float(-chi_derivs(1.5, 1)[1])


class PotentialValidationError(ValueError):
    pass


@dataclass
class PotentialComponents:
    q1: np.ndarray
    q2: np.ndarray
    q3: np.ndarray
    grad_q1: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.q1 + self.q2 + self.q3


@dataclass
class PotentialSpec:
    """Splitting of q into long-range, short-range and compact parts.

    ``q1`` maps points ``(d, ...)`` to ``(value, gradient)``; ``q2`` and ``q3``
    map points to values. Missing components are zero. ``q3`` is only
    evaluated inside the ball ``|p - q3_center| < q3_radius``.
    """

    q1: Optional[Callable] = None
    q2: Optional[Callable] = None
    q3: Optional[Callable] = None
    q3_center: tuple = (0.0, 0.0)
    q3_radius: float = 0.0
    rho: float = 1.0
    rho_tilde: float = 1.0
    C_decl: float = 1.0
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rho <= 0 or self.rho_tilde <= 0:
            raise ValueError("rho and rho_tilde must be positive")
        if self.q3 is not None and not (0.0 < self.q3_radius < math.inf):
            raise ValueError("q3 needs a bounded declared support radius")

    @property
    def beta_c(self) -> float:
        return min(0.5, self.rho, self.rho_tilde)

    @property
    def is_zero(self) -> bool:
        return self.q1 is None and self.q2 is None and self.q3 is None


def eval_potential(spec: PotentialSpec, p) -> PotentialComponents:
    p = np.asarray(p, dtype=float)
    shape = p.shape[1:]
    zero = np.zeros(shape)
    if spec.q1 is not None:
        q1, grad_q1 = spec.q1(p)
        q1 = np.broadcast_to(np.asarray(q1, dtype=float), shape).copy()
        grad_q1 = np.broadcast_to(np.asarray(grad_q1, dtype=float), p.shape).copy()
    else:
        q1, grad_q1 = zero.copy(), np.zeros(p.shape)
    q2 = np.broadcast_to(np.asarray(spec.q2(p), dtype=float), shape).copy() if spec.q2 is not None else zero.copy()
    q3 = zero.copy()
    if spec.q3 is not None:
        center = np.asarray(spec.q3_center, dtype=float).reshape((-1,) + (1,) * len(shape))
        inside = np.sum((p - center) ** 2, axis=0) < spec.q3_radius**2
        if np.any(inside):
            q3[inside] = np.asarray(spec.q3(p[:, inside]), dtype=float)
    return PotentialComponents(q1=q1, q2=q2, q3=q3, grad_q1=grad_q1)


# ---------------------------------------------------------------- builtins


def _long_range(c: float, rho: float):
    def q1(p):
        geo = eval_geometry(p)
        f = geo.f
        cut = cutoff_derivs(f, 1, order=1, bar=True)
        w = (1.0 + f**2) ** (-rho / 2.0)
        dw = -rho * f * (1.0 + f**2) ** (-rho / 2.0 - 1.0)
        x = p[0]
        val = c * x * w * cut[0]
        grad = c * x * (dw * cut[0] + w * cut[1]) * geo.grad_f
        grad[0] = grad[0] + c * w * cut[0]
        return val, grad

    return q1


def _short_range(c: float, rho: float):
    def q2(p):
        f = escape_f(p)
        return c * (1.0 + f**2) ** (-(1.0 + rho) / 2.0)

    return q2


def _bump(c: float, center, radius: float):
    center = np.asarray(center, dtype=float)

    def q3(p):
        cen = center.reshape((-1,) + (1,) * (p.ndim - 1))
        s = np.sum((p - cen) ** 2, axis=0) / radius**2
        out = np.zeros(p.shape[1:])
        inside = s < 1.0
        out[inside] = c * np.exp(-1.0 / (1.0 - s[inside]))
        return out

    return q3


def make_potential(family: str, d: int = 2, **params) -> PotentialSpec:
    """Builtin families: ``zero``, ``long_range``, ``short_range``, ``bump``, ``mixed``.

    ``mixed`` is the sum of the other three with coefficients ``c1``, ``c2``, ``c3``.
    """
    rho = float(params.pop("rho", 1.0))
    center = tuple(params.pop("center", (-6.0,) + (0.0,) * (d - 1)))
    radius = float(params.pop("radius", 2.0))
    if family == "zero":
        if params:
            raise ValueError(f"unexpected parameters for zero potential: {sorted(params)}")
        return PotentialSpec(name="zero", rho=rho, rho_tilde=rho, C_decl=0.0)
    if family == "long_range":
        c = float(params.pop("c", 1.0))
        c1, c2, c3 = c, 0.0, 0.0
    elif family == "short_range":
        c = float(params.pop("c", 1.0))
        c1, c2, c3 = 0.0, c, 0.0
    elif family == "bump":
        c = float(params.pop("c", 1.0))
        c1, c2, c3 = 0.0, 0.0, c
    elif family == "mixed":
        c1 = float(params.pop("c1", 0.5))
        c2 = float(params.pop("c2", 1.0))
        c3 = float(params.pop("c3", 1.0))
    else:
        raise ValueError(f"unknown potential family {family!r}")
    if params:
        raise ValueError(f"unexpected parameters for {family}: {sorted(params)}")
    if len(center) != d:
        raise ValueError("bump center must have d coordinates")
    # |q1| f^rho / r <= c1 and |q2| f^(1+rho) <= c2 exactly; the derivative
    # bounds pick up the cutoff slope, at most 2 sup|chi'| in f-units.
    C_decl = max(abs(c2), abs(c1) * (1.0 + rho + 2.0 * CHI_PRIME_MAX))
    return PotentialSpec(
        q1=_long_range(c1, rho) if c1 else None,
        q2=_short_range(c2, rho) if c2 else None,
        q3=_bump(c3, center, radius) if c3 else None,
        q3_center=center,
        q3_radius=radius if c3 else 0.0,
        rho=rho,
        rho_tilde=rho,
        C_decl=C_decl,
        name=family,
        params={"c1": c1, "c2": c2, "c3": c3, "rho": rho, "center": list(center), "radius": radius},
    )


FAMILIES = ("zero", "long_range", "short_range", "bump", "mixed")


# -------------------------------------------------------------- validation


@dataclass
class ConditionReport:
    C1: float
    C1_prime_one_sided: float
    C1_prime_two_sided: float
    C2: float
    C_tilde: float
    confining: dict
    flags: dict
    n_nodes: int

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        return {
            "C1": self.C1,
            "C1_prime_one_sided": self.C1_prime_one_sided,
            "C1_prime_two_sided": self.C1_prime_two_sided,
            "C2": self.C2,
            "C_tilde": self.C_tilde,
            "confining": {str(k): v for k, v in self.confining.items()},
            "flags": self.flags,
            "n_nodes": self.n_nodes,
            "passed": self.passed,
        }


def validate_conditions(
    spec: PotentialSpec,
    points,
    f_min: float = 4.0,
    mus=(-10.0, -20.0, -40.0, -80.0),
    f0s=(2.0, 4.0, 8.0),
) -> ConditionReport:
    """Fit the constants of the decay conditions on sampled points.

    ``points`` is either a grid (anything with a ``coords()`` method) or an
    array ``(d, ...)``. Suprema are taken over nodes with ``f >= f_min``.
    """
    p = points.coords() if hasattr(points, "coords") else np.asarray(points, dtype=float)
    p = p.reshape(p.shape[0], -1)
    comps = eval_potential(spec, p)
    q = comps.total
    bad = ~np.isfinite(q) | ~np.all(np.isfinite(comps.grad_q1), axis=0)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise PotentialValidationError(f"non-finite potential at node {k}: {tuple(p[:, k])}")
    geo = eval_geometry(p)
    f, r = geo.f, geo.r
    sel = f >= f_min
    rho, rho_t = spec.rho, spec.rho_tilde

    def sup(values):
        v = values[sel]
        return float(np.max(v)) if v.size else 0.0

    df_q1 = np.sum(geo.grad_f * comps.grad_q1, axis=0)
    tilde_q1 = np.sqrt(geo.grad_f_sq) * np.sqrt(np.sum(comps.grad_q1**2, axis=0))
    C1 = sup(np.abs(comps.q1) * f**rho / np.where(r > 0, r, 1.0))
    C1p_one = max(sup(df_q1 * f ** (1 + rho)), 0.0)
    C1p_two = sup(np.abs(df_q1) * f ** (1 + rho))
    C2 = sup(np.abs(comps.q2) * f ** (1 + rho))
    Ct = sup(tilde_q1 * f ** (1 + rho_t))

    confining = {}
    monotone = True
    x = p[0]
    for f0 in f0s:
        profile = []
        for mu in mus:
            mask = (x < mu) & (f <= f0)
            profile.append(float(np.min(-x[mask] + q[mask])) if np.any(mask) else math.inf)
        confining[f0] = profile
        monotone &= all(b >= a for a, b in zip(profile, profile[1:]))

    tol = 1e-12 * max(1.0, spec.C_decl)
    flags = {
        "C1": C1 <= spec.C_decl + tol,
        "C1_prime": C1p_one <= spec.C_decl + tol,
        "C2": C2 <= spec.C_decl + tol,
        "C_tilde": Ct <= spec.C_decl + tol,
        "confining_monotone": bool(monotone),
    }
    return ConditionReport(
        C1=C1,
        C1_prime_one_sided=C1p_one,
        C1_prime_two_sided=C1p_two,
        C2=C2,
        C_tilde=Ct,
        confining=confining,
        flags=flags,
        n_nodes=int(p.shape[1]),
    )
