"""Escape function f, smooth cutoffs and their derivatives.

Points are arrays whose leading axis holds the coordinates ``(x, y_2, ..., y_d)``;
every function here broadcasts over the trailing axes, so a single point is just
an array of shape ``(d,)`` and a grid is an array of shape ``(d, *grid_shape)``.

The far region is ``r + x >= 2``; there ``f**2 = r + x`` and the closed-form
derivative formulas are used. Elsewhere f is differentiated through the chain
rule of ``f = G(r + x)`` with ``G(s) = chi(s) + (1 - chi(s)) sqrt(s)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

__all__ = [
    "chi",
    "chi_derivs",
    "G_derivs",
    "GeometryEval",
    "eval_geometry",
    "escape_f",
    "shell_index",
    "chi_m",
    "barchi_m",
    "chi_mn",
    "cutoff_derivs",
    "FarCalculus",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = (u > 0.0) & (u < 1.0)
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (ui * (1.0 - ui)))
    return out


def _bump_integral(t):
    """int_0^t exp(-1/(u(1-u))) du for t in [0, 1/2], 64-point Gauss-Legendre."""
    t = np.asarray(t, dtype=float)
    u = t[..., None] * (_GL_NODES + 1.0) / 2.0
    return (_bump(u) * _GL_WEIGHTS).sum(axis=-1) * t / 2.0


_BUMP_MASS = 2.0 * float(_bump_integral(np.array(0.5)))


def chi(s):
    """Smooth nonincreasing cutoff: 1 for s <= 1, 0 for s >= 2."""
    s = np.asarray(s, dtype=float)
    t = np.clip(s - 1.0, 0.0, 1.0)
    lower = t <= 0.5
    cum = np.where(
        lower,
        _bump_integral(np.where(lower, t, 0.0)),
        _BUMP_MASS - _bump_integral(np.where(lower, 0.0, 1.0 - t)),
    )
    out = 1.0 - cum / _BUMP_MASS
    out = np.where(s <= 1.0, 1.0, np.where(s >= 2.0, 0.0, out))
    return out if out.ndim else float(out)


def chi_derivs(s, order: int = 3):
    """Return ``[chi, chi', ..., chi^(order)]`` evaluated at s (order <= 4)."""
    if order > 4:
        raise ValueError("chi derivatives are available up to order 4")
    s = np.asarray(s, dtype=float)
    t = s - 1.0
    inside = (t > 0.0) & (t < 1.0)
    ti = t[inside]
    u = ti * (1.0 - ti)
    du = 1.0 - 2.0 * ti
    # phi = -1/u, bump = exp(phi)
    p1 = du / u**2
    p2 = -2.0 / u**2 - 2.0 * du**2 / u**3
    p3 = 12.0 * du / u**3 + 6.0 * du**3 / u**4
    p4 = 24.0 / u**3 + 72.0 * du**2 / u**4 + 24.0 * du**4 / u**5
    b = np.exp(-1.0 / u) / _BUMP_MASS
    bump_derivs = [
        b,
        p1 * b,
        (p2 + p1**2) * b,
        (p3 + 3.0 * p1 * p2 + p1**3) * b,
        (p4 + 4.0 * p1 * p3 + 3.0 * p2**2 + 6.0 * p1**2 * p2 + p1**4) * b,
    ]
    out = [np.asarray(chi(s), dtype=float)]
    for k in range(1, order + 1):
        dk = np.zeros_like(s)
        dk[inside] = -bump_derivs[k - 1]
        out.append(dk)
    return out


def G_derivs(s, order: int = 3):
    """Derivatives of G(s) = chi(s) + (1 - chi(s)) sqrt(s) for s >= 0."""
    s = np.asarray(s, dtype=float)
    c = chi_derivs(s, order)
    sp = np.maximum(s, 0.5)
    root = [np.sqrt(sp)]
    coef = 0.5
    power = -0.5
    for _ in range(order):
        root.append(coef * sp**power)
        coef *= power
        power -= 1.0
    # Leibniz on (1 - chi) * sqrt(s); sqrt terms are irrelevant where chi == 1
    one_minus = [1.0 - c[0]] + [-ck for ck in c[1:]]
    out = []
    for k in range(order + 1):
        val = c[k].copy()
        for j in range(k + 1):
            val = val + comb(k, j) * one_minus[j] * root[k - j]
        out.append(np.where(s <= 1.0, (1.0 if k == 0 else 0.0), val))
    return out


def escape_f(p):
    """The escape function f at the point(s) p."""
    p = np.asarray(p, dtype=float)
    x = p[0]
    r = np.sqrt(np.sum(p**2, axis=0))
    s = r + x
    far = s >= 2.0
    return np.where(far, np.sqrt(np.maximum(s, 0.0)), G_derivs(s, 0)[0])


@dataclass
class GeometryEval:
    """Pointwise geometry of f. Vector fields carry the coordinate axis first."""

    f: np.ndarray
    r: np.ndarray
    grad_f: np.ndarray
    hess_f: np.ndarray
    lap_f: np.ndarray
    grad_f_sq: np.ndarray
    ell: np.ndarray
    in_far_region: np.ndarray
    df_r: np.ndarray

    @property
    def d(self) -> int:
        return self.grad_f.shape[0]


def _chain_rule_geometry(p, r, s):
    d = p.shape[0]
    G = G_derivs(s, 2)
    safe_r = np.where(r > 0, r, 1.0)
    rhat = np.where(r > 0, p / safe_r, 0.0)
    grad_s = rhat.copy()
    grad_s[0] = grad_s[0] + 1.0
    grad_f = G[1] * grad_s
    eye = np.eye(d).reshape((d, d) + (1,) * (p.ndim - 1))
    hess_r = (eye - rhat[:, None] * rhat[None, :]) / safe_r
    hess_f = G[2] * grad_s[:, None] * grad_s[None, :] + G[1] * hess_r
    hess_f = np.where(s <= 1.0, 0.0, hess_f)
    lap_f = np.where(s <= 1.0, 0.0, G[2] * 2.0 * s / safe_r + G[1] * (d - 1) / safe_r)
    return G[0], grad_f, hess_f, lap_f


def _far_geometry(p, r, s):
    d = p.shape[0]
    x = p[0]
    y = p[1:]
    f = np.sqrt(s)
    grad_f = np.empty_like(p)
    grad_f[0] = 0.5 * f / r
    grad_f[1:] = 0.5 * y / (f * r)
    hess_f = np.empty((d, d) + p.shape[1:])
    hess_f[0, 0] = 0.5 / (f * r) - 0.25 * f / r**2 - 0.5 * x**2 / (f * r**3)
    mixed = -0.25 * y / (f * r**2) - 0.5 * x * y / (f * r**3)
    hess_f[0, 1:] = mixed
    hess_f[1:, 0] = mixed
    eye = np.eye(d - 1).reshape((d - 1, d - 1) + (1,) * (p.ndim - 1))
    yy = y[:, None] * y[None, :]
    hess_f[1:, 1:] = 0.5 * eye / (f * r) - 0.25 * yy / (f**3 * r**2) - 0.5 * yy / (f * r**3)
    lap_f = 0.5 * (d - 2) / (f * r)
    return f, grad_f, hess_f, lap_f


def eval_geometry(p, branch: str = "auto") -> GeometryEval:
    """Evaluate f and its derivatives.

    ``branch`` selects ``"auto"`` (closed forms where ``r + x >= 2``),
    ``"chain"`` (chain rule everywhere) or ``"far"`` (closed forms everywhere;
    only meaningful in the far region).
    """
    p = np.asarray(p, dtype=float)
    if p.ndim == 0 or p.shape[0] < 2:
        raise ValueError("points need d >= 2 coordinates along the leading axis")
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite coordinates")
    d = p.shape[0]
    r = np.sqrt(np.sum(p**2, axis=0))
    s = r + p[0]
    far = s >= 2.0
    if branch == "chain":
        f, grad_f, hess_f, lap_f = _chain_rule_geometry(p, r, s)
    elif branch == "far":
        f, grad_f, hess_f, lap_f = _far_geometry(p, r, s)
    elif branch == "auto":
        f, grad_f, hess_f, lap_f = _chain_rule_geometry(p, r, s)
        if np.any(far):
            with np.errstate(divide="ignore", invalid="ignore"):
                ff, gf, hf, lf = _far_geometry(p, np.where(far, r, 1.0), np.where(far, s, 4.0))
            f = np.where(far, ff, f)
            grad_f = np.where(far, gf, grad_f)
            hess_f = np.where(far, hf, hess_f)
            lap_f = np.where(far, lf, lap_f)
    else:
        raise ValueError(f"unknown branch {branch!r}")
    grad_f_sq = np.sum(grad_f**2, axis=0)
    eye = np.eye(d).reshape((d, d) + (1,) * (p.ndim - 1))
    ell = grad_f_sq * eye - grad_f[:, None] * grad_f[None, :]
    safe_r = np.where(r > 0, r, 1.0)
    df_r = np.where(r > 0, np.sum(grad_f * p, axis=0) / safe_r, 0.0)
    return GeometryEval(
        f=np.asarray(f, dtype=float),
        r=r,
        grad_f=grad_f,
        hess_f=hess_f,
        lap_f=np.asarray(lap_f, dtype=float),
        grad_f_sq=grad_f_sq,
        ell=ell,
        in_far_region=far,
        df_r=df_r,
    )


def shell_index(f):
    """Dyadic shell n with 2**n <= f < 2**(n+1)."""
    f = np.asarray(f, dtype=float)
    n = np.floor(np.log2(f)).astype(int)
    # guard against rounding at exact powers of two
    n = np.where(2.0 ** (n + 1) <= f, n + 1, n)
    n = np.where(2.0**n > f, n - 1, n)
    return np.maximum(n, 0)


def chi_m(f, m: int):
    return chi(np.asarray(f, dtype=float) / 2.0**m)


def barchi_m(f, m: int):
    return 1.0 - chi_m(f, m)


def chi_mn(f, m: int, n: int):
    return barchi_m(f, m) * chi_m(f, n)


def cutoff_derivs(f, m: int, order: int = 3, bar: bool = True):
    """Derivatives in f of chi_m (or barchi_m when ``bar``) up to ``order``."""
    scale = 2.0**m
    c = chi_derivs(np.asarray(f, dtype=float) / scale, order)
    out = [c[k] / scale**k for k in range(order + 1)]
    if bar:
        out = [1.0 - out[0]] + [-ck for ck in out[1:]]
    return out


class FarCalculus:
    """Closed-form derived quantities of f valid in the far region ``r + x >= 2``.

    All of them are functions of (f, r) only, which keeps the Laplacians exact.
    """

    def __init__(self, f, r, d: int):
        self.f = np.asarray(f, dtype=float)
        self.r = np.asarray(r, dtype=float)
        self.d = d

    @property
    def grad_f_sq(self):
        return 0.5 / self.r

    @property
    def lap_f(self):
        return 0.5 * (self.d - 2) / (self.f * self.r)

    @property
    def df_r(self):
        """(grad f) . (grad r)."""
        return 0.5 * self.f / self.r

    @property
    def df_grad_f_sq(self):
        """Derivative of |grad f|^2 along grad f."""
        return -0.25 * self.f / self.r**3

    @property
    def lap_grad_f_sq(self):
        return 0.5 * (3 - self.d) / self.r**3

    @property
    def bilap_f(self):
        f, r, d = self.f, self.r, self.d
        return 0.5 * (d - 2) * (4 - d) * (0.5 / (f**3 * r**2) + 1.0 / (f * r**3))

    @property
    def df_r_lap_f(self):
        """Derivative of r * lap f along grad f."""
        return -0.25 * (self.d - 2) / (self.f**2 * self.r)
