"""Resolvent sweeps on truncated boxes: LAP and radiation quantities over a
Gamma ladder, Hoelder exponent fits, the outgoing/incoming tail test and the
B*_0-tail illustration."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .besov import besov_report, tail_slope, weighted_norm
from .operators import (
    GridSpec,
    build_A,
    build_hamiltonian,
    build_pf,
    ell_form,
    first_derivative,
    grid_geometry,
    norm,
)
from .phase import PhaseParams, phase_fields, select_l
from .potential import PotentialSpec
from .solver import ShiftedSystem, SolverError
from .verify import _compact_bump, wkb_state

__all__ = [
    "SourceSpec",
    "ExperimentConfig",
    "SweepResult",
    "source_field",
    "lap_sweep",
    "radiation_sweep",
    "box_sensitivity",
    "HoelderReport",
    "hoelder_estimate",
    "hoelder_estimates",
    "resolvent_identity_residual",
    "richardson_gamma",
    "SommerfeldReport",
    "sommerfeld_check",
    "wkb_sommerfeld_example",
    "rellich_illustration",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SourceSpec:
    """Compactly supported radial bump ``amplitude * b(|p - center| / radius)``."""

    center: tuple = (0.0, 0.0)
    radius: float = 3.0
    amplitude: float = 1.0

    @property
    def is_zero(self) -> bool:
        return self.amplitude == 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSpec
    potential: Optional[PotentialSpec] = None
    lam: float = 0.0
    gammas: tuple = (1.0, 0.5, 0.25, 0.125)
    sign: int = 1
    source: SourceSpec = SourceSpec()
    tol: float = 1e-8
    beta: float = 0.0
    phase_variant: str = "root"
    l: Optional[int] = None
    box_check_min_gamma: float = 0.25
    box_tolerance: float = 0.10
    plateau_factor: float = 2.0
    plateau_anchor: Optional[float] = 1.0
    method: str = "auto"

    def z(self, gamma: float) -> complex:
        return complex(self.lam, self.sign * gamma)


def source_field(grid: GridSpec, src: SourceSpec, beta: float = 0.0) -> np.ndarray:
    """Bump source; for beta > 0 it carries the factor f^-beta."""
    p = grid.flat_coords()
    c = np.asarray(src.center, dtype=float).reshape(-1, 1)
    if c.shape[0] != grid.d:
        c = np.vstack([c, np.zeros((grid.d - c.shape[0], 1))])
    rho = np.sqrt(np.sum((p - c) ** 2, axis=0)) / src.radius
    vals = src.amplitude * _compact_bump(rho)
    if beta:
        vals = vals * grid_geometry(grid).f ** (-beta)
    return vals.astype(complex)


# ------------------------------------------------------------------ sweeps


LAP_KEYS = ("phi_Bstar", "radial_L2", "pf_Bstar", "ell_form")
RAD_KEYS = ("rad_Bstar", "rad_wrong_Bstar", "rad_radial_L2", "rad_ell_form")


@dataclass
class SweepResult:
    kind: str
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def ratios(self, key: str) -> np.ndarray:
        return np.array([r[key + "_ratio"] for r in self.rows if r["usable"]])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rows": self.rows, "summary": self.summary, "warnings": self.warnings}

    def csv_rows(self) -> list:
        if not self.rows:
            return [["gamma"]]
        keys = [k for k in self.rows[0] if k != "z"]
        out = [["z_re", "z_im"] + keys]
        for r in self.rows:
            out.append([r["z"][0], r["z"][1]] + [r[k] for k in keys])
        return out


def _lap_quantities(grid, phi, geo, pf):
    f = geo.f
    radial = np.sqrt(np.clip(1.0 - grid.flat_coords()[0] / np.where(geo.r > 0, geo.r, 1.0), 0.0, None))
    return {
        "phi_Bstar": besov_report(grid, phi, ()).Bstar_norm,
        "radial_L2": weighted_norm(grid, radial * phi, -0.5),
        "pf_Bstar": besov_report(grid, pf @ phi, ()).Bstar_norm,
        "ell_form": ell_form(grid, phi, 1.0 / f),
    }


def _sweep(cfg: ExperimentConfig, beta: Optional[float]) -> SweepResult:
    grid = cfg.grid
    geo = grid_geometry(grid)
    H = build_hamiltonian(grid, cfg.potential)
    pf = build_pf(grid).matrix
    A = build_A(grid).matrix
    radiation = beta is not None
    b = beta if radiation else 0.0
    psi = source_field(grid, cfg.source, b)
    fb = geo.f**b
    src_B = besov_report(grid, fb * psi, ()).B_norm
    l = cfg.l
    if radiation and l is None:
        l = select_l([cfg.z(g) for g in cfg.gammas], cfg.potential, grid)
    result = SweepResult(kind="radiation" if radiation else "lap")
    for gamma in cfg.gammas:
        z = cfg.z(gamma)
        row = {"z": [z.real, z.imag], "gamma": float(gamma), "psi_B": src_B}
        try:
            sol = ShiftedSystem(H, z, method=cfg.method, tol=cfg.tol).solve(psi)
        except SolverError as exc:
            result.warnings.append(f"ladder truncated at gamma={gamma}: {exc}")
            log.warning("ladder truncated at gamma=%s: %s", gamma, exc)
            break
        phi = sol.phi
        row["residual"] = sol.relative_residual
        row["usable"] = bool(sol.relative_residual <= cfg.tol)
        row.update(_lap_quantities(grid, phi, geo, pf))
        if radiation:
            ph = phase_fields(PhaseParams(z, l, cfg.sign, cfg.phase_variant), grid.flat_coords(), cfg.potential, geo)
            Aphi = A @ phi
            right = Aphi - cfg.sign * ph.a * phi
            wrong = Aphi + cfg.sign * ph.a * phi
            radial = np.sqrt(np.clip(1.0 - grid.flat_coords()[0] / np.where(geo.r > 0, geo.r, 1.0), 0.0, None))
            rt = besov_report(grid, fb * right, ()).tail
            wt = besov_report(grid, fb * wrong, ()).tail
            row["rad_Bstar"] = float(rt.max()) if rt.size else 0.0
            row["rad_wrong_Bstar"] = float(wt.max()) if wt.size else 0.0
            # shell 0 holds the source near field; the sup over n >= 1 isolates the far behaviour
            row["rad_far_Bstar"] = float(rt[1:].max()) if rt.size > 1 else 0.0
            row["rad_wrong_far_Bstar"] = float(wt[1:].max()) if wt.size > 1 else 0.0
            row["rad_radial_L2"] = weighted_norm(grid, fb * radial * phi, -0.5)
            row["rad_ell_form"] = ell_form(grid, phi, geo.f ** (2 * b - 1))
        keys = LAP_KEYS + (RAD_KEYS if radiation else ())
        for k in keys:
            val = row[k]
            # the form is quadratic in phi, so its square root is the comparable scale
            scale = math.sqrt(max(val, 0.0)) if k.endswith("ell_form") else val
            row[k + "_ratio"] = scale / src_B if src_B > 0 else 0.0
        result.rows.append(row)
    result.summary = _plateau_summary(result, keys, cfg.plateau_factor, cfg.plateau_anchor)
    result.summary["l"] = l
    result.summary["excluded_rows"] = sum(1 for r in result.rows if not r["usable"])
    return result


def _plateau_summary(result: SweepResult, keys, factor: float, anchor: Optional[float] = None) -> dict:
    """Growth of each ratio over its value at the anchor Gamma, on rows with Gamma <= anchor."""
    rows = [r for r in result.rows if r["usable"]]
    gam = np.array([r["gamma"] for r in rows])
    if anchor is not None and gam.size and not np.any(np.isclose(gam, anchor)):
        result.warnings.append(f"plateau anchor {anchor} not on the ladder; using the largest Gamma")
        anchor = None
    sel = np.ones(gam.size, dtype=bool) if anchor is None else gam <= anchor * (1 + 1e-12)
    out = {"anchor": float(gam[sel][0]) if sel.any() else None}
    for k in keys:
        ratios = np.array([r[k + "_ratio"] for r in rows])[sel]
        if ratios.size == 0:
            out[k] = {"first": 0.0, "max": 0.0, "trend": 0.0, "plateau": False}
            continue
        first, peak = float(ratios[0]), float(ratios.max())
        plateau = bool(peak <= factor * first) if first > 0 else bool(peak == 0.0)
        g = gam[sel]
        trend = float(np.polyfit(np.log2(g), np.log2(np.maximum(ratios, 1e-300)), 1)[0]) if ratios.size > 1 and first > 0 else 0.0
        out[k] = {"first": first, "max": peak, "trend": trend, "plateau": plateau}
    return out


def lap_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Norms of phi = R(lam + i sign Gamma) psi over the Gamma ladder, as ratios to ||psi||_B."""
    return _sweep(cfg, None)


def radiation_sweep(cfg: ExperimentConfig, beta: Optional[float] = None) -> SweepResult:
    """Radiation-condition quantities with the matching phase, plus the opposite-sign column."""
    beta = cfg.beta if beta is None else beta
    bc = cfg.potential.beta_c if cfg.potential is not None and not cfg.potential.is_zero else 0.5
    if not 0.0 <= beta < bc:
        raise ValueError(f"beta={beta} outside [0, {bc})")
    res = _sweep(cfg, beta)
    rows = [r for r in res.rows if r["usable"]]
    if rows:
        last = rows[-1]
        res.summary["wrong_over_right_last"] = last["rad_wrong_Bstar"] / last["rad_Bstar"] if last["rad_Bstar"] > 0 else float("inf")
        far = last["rad_far_Bstar"]
        res.summary["far_wrong_over_right_last"] = last["rad_wrong_far_Bstar"] / far if far > 0 else float("inf")
    res.summary["beta"] = beta
    return res


def box_sensitivity(cfg: ExperimentConfig, sweep: SweepResult, keys=("phi_Bstar",)) -> dict:
    """Rerun the rows with Gamma >= the configured floor on a box with doubled transverse extent."""
    g = cfg.grid
    bounds = (g.bounds[0],) + tuple((2 * a, 2 * b) for a, b in g.bounds[1:])
    big = replace(cfg, grid=GridSpec(g.d, bounds, g.h, g.stencil_order, g.cap), gammas=tuple(r for r in cfg.gammas if r >= cfg.box_check_min_gamma))
    other = _sweep(big, sweep.summary.get("beta") if sweep.kind == "radiation" else None)
    changes = {}
    for r_small, r_big in zip(sweep.rows, other.rows):
        for k in keys:
            a, b = r_small[k + "_ratio"], r_big[k + "_ratio"]
            changes[f"{k}@{r_small['gamma']}"] = abs(a - b) / max(abs(a), 1e-300) if a else 0.0
    worst = max(changes.values()) if changes else 0.0
    return {"changes": changes, "worst": worst, "flag": bool(worst >= cfg.box_tolerance)}


# ------------------------------------------------------------------ Hoelder


@dataclass
class HoelderReport:
    k: int
    s: float
    dz: list
    diff: list
    epsilon: float
    band: tuple
    insufficient: bool
    identity_residual: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "s": self.s,
            "dz": self.dz,
            "diff": self.diff,
            "epsilon": self.epsilon,
            "band": list(self.band),
            "insufficient": self.insufficient,
            "identity_residual": self.identity_residual,
        }


def _ptilde_norm(grid, geo, u, s, k):
    if k == 0:
        return weighted_norm(grid, u, -s)
    w = geo.f ** (-s) * np.sqrt(geo.grad_f_sq)
    total = 0.0
    for j in range(grid.d):
        total += norm(grid, w * (first_derivative(grid, j) @ u)) ** 2
    return math.sqrt(total)


def _random_sources(grid, n, s, seed, radius=3.0, spread=6.0):
    rng = np.random.default_rng(seed)
    geo = grid_geometry(grid)
    out = []
    for _ in range(n):
        center = rng.uniform(-spread, spread, size=grid.d)
        vals = source_field(grid, SourceSpec(tuple(center), radius, 1.0))
        vals *= np.exp(1j * rng.uniform(0, 2 * np.pi))
        out.append(vals / weighted_norm(grid, vals, s))
    del geo
    return out


def resolvent_identity_residual(H, z1: complex, z2: complex, psi, tol: float = 1e-10) -> float:
    """|| R(z1)psi - R(z2)psi - (z1 - z2) R(z1) R(z2) psi || / ||R(z1)psi - R(z2)psi||."""
    S1 = ShiftedSystem(H, z1, tol=tol)
    S2 = ShiftedSystem(H, z2, tol=tol)
    u1 = S1.solve(psi).phi
    u2 = S2.solve(psi).phi
    path = (z1 - z2) * S1.solve(u2).phi
    diff = u1 - u2
    den = np.linalg.norm(diff)
    return float(np.linalg.norm(diff - path) / den) if den > 0 else 0.0


def hoelder_estimates(cfg: ExperimentConfig, ks: Sequence[int] = (0, 1), s: float = 1.0, n_sources: int = 4,
                      seed: int = 0, gammas: Sequence[float] = (0.5, 0.25, 0.125, 0.0625, 0.03125)) -> dict:
    """Fit eps in ||p~^k (R(z) - R(z')) psi||_{L2_-s} ~ |z - z'|^eps, z = lam + i Gamma, z' = lam + i Gamma/2.

    The sup over unit L2_s right-hand sides is sampled with seeded bumps. At most
    two factorizations are alive at a time, since the ladder halves.
    """
    if any(k not in (0, 1) for k in ks):
        raise ValueError("k must be 0 or 1")
    grid = cfg.grid
    geo = grid_geometry(grid)
    H = build_hamiltonian(grid, cfg.potential)
    sources = _random_sources(grid, n_sources, s, seed)
    dz, diffs = [], {k: [] for k in ks}
    id_res = float("nan")
    prev_gamma, prev_sols = None, None
    for g in gammas:
        try:
            if prev_gamma == g:
                sols1 = prev_sols
            else:
                S1 = ShiftedSystem(H, cfg.z(g), method=cfg.method, tol=cfg.tol)
                sols1 = [S1.solve(psi).phi for psi in sources]
                del S1
            S2 = ShiftedSystem(H, cfg.z(g / 2), method=cfg.method, tol=cfg.tol)
            sols2 = [S2.solve(psi).phi for psi in sources]
            if sources and math.isnan(id_res):
                # first resolvent identity: R(z)psi - R(z')psi = (z - z') R(z') R(z) psi
                path = (cfg.z(g) - cfg.z(g / 2)) * S2.solve(sols1[0]).phi
                delta = sols1[0] - sols2[0]
                den = np.linalg.norm(delta)
                id_res = float(np.linalg.norm(delta - path) / den) if den > 0 else 0.0
            del S2
        except SolverError as exc:
            log.warning("Hoelder pair at gamma=%s skipped: %s", g, exc)
            prev_gamma = None
            continue
        dz.append(g / 2)
        for k in ks:
            diffs[k].append(max((_ptilde_norm(grid, geo, a - b, s, k) for a, b in zip(sols1, sols2)), default=0.0))
        prev_gamma, prev_sols = g / 2, sols2
    return {k: _fit_hoelder(k, s, dz, diffs[k], 0.0 if math.isnan(id_res) else id_res) for k in ks}


def _fit_hoelder(k, s, dz, diff, id_res) -> HoelderReport:
    usable = [(a, b) for a, b in zip(dz, diff) if b > 0]
    if len(usable) < 3:
        return HoelderReport(k, s, list(dz), list(diff), float("nan"), (float("nan"), float("nan")), True, id_res)
    x = np.log([a for a, _ in usable])
    y = np.log([b for _, b in usable])
    fit = stats.linregress(x, y)
    tq = stats.t.ppf(0.975, len(x) - 2)
    band = (float(fit.slope - tq * fit.stderr), float(fit.slope + tq * fit.stderr))
    return HoelderReport(k, s, list(dz), list(diff), float(fit.slope), band, False, id_res)


def hoelder_estimate(cfg: ExperimentConfig, k: int = 0, **kwargs) -> HoelderReport:
    return hoelder_estimates(cfg, (k,), **kwargs)[k]


# ------------------------------------------------------------------ Sommerfeld


def richardson_gamma(fields: Sequence[np.ndarray], ratio: float = 2.0):
    """Extrapolate field values sampled at Gamma_0 / ratio^k to Gamma = 0.

    Returns the top-corner estimate and the relative change from the previous column.
    """
    table = [np.asarray(fields[0], dtype=complex)]
    prev_best = table[0]
    best = table[0]
    for k in range(1, len(fields)):
        row = [np.asarray(fields[k], dtype=complex)]
        for j in range(1, k + 1):
            fac = ratio**j
            row.append(row[j - 1] + (row[j - 1] - table[j - 1]) / (fac - 1.0))
        prev_best, best = row[-2], row[-1]
        table = row
    den = np.linalg.norm(best)
    change = float(np.linalg.norm(best - prev_best) / den) if den > 0 else 0.0
    return best, change


@dataclass
class SommerfeldReport:
    shells: list
    outgoing_tail: list
    incoming_tail: list
    outgoing_slope: float
    incoming_slope: float
    separation: float
    extrapolation_change: float
    converged: bool
    interior_residual: float
    direct_gap: float
    label: str = "extrapolated"

    @property
    def passed(self) -> bool:
        return self.outgoing_slope < 0 and self.separation >= 0.3

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def _tail_diagnostics(grid, geo, phi, lam, spec, beta, shells, variant="root"):
    p = grid.flat_coords()
    A = build_A(grid).matrix
    Aphi = A @ phi
    a_out = phase_fields(PhaseParams(complex(lam), 0, 1, variant), p, spec, geo).a
    a_in = phase_fields(PhaseParams(complex(lam), 0, -1, variant), p, spec, geo).a
    fb = geo.f**beta
    out_tail = besov_report(grid, fb * (Aphi - a_out * phi), ()).tail
    in_tail = besov_report(grid, fb * (Aphi + a_in * phi), ()).tail
    shells = [n for n in shells if n < min(out_tail.size, in_tail.size)]
    so = tail_slope(out_tail, shells)
    si = tail_slope(in_tail, shells)
    return shells, out_tail, in_tail, so, si


def sommerfeld_check(cfg: ExperimentConfig, shells: Sequence[int] = (1, 2, 3), extrap_tol: float = 1e-2,
                     interior_margin: float = 0.0) -> SommerfeldReport:
    """Outgoing versus incoming shell-tail slopes of the extrapolated real-parameter solution."""
    grid = cfg.grid
    geo = grid_geometry(grid)
    H = build_hamiltonian(grid, cfg.potential)
    psi = source_field(grid, cfg.source)
    if cfg.source.is_zero:
        zero = [0.0] * len(shells)
        return SommerfeldReport(list(shells), zero, zero, 0.0, 0.0, 0.0, 0.0, True, 0.0, 0.0)
    fields = [ShiftedSystem(H, cfg.z(g), method=cfg.method, tol=cfg.tol).solve(psi).phi for g in cfg.gammas]
    ratio = cfg.gammas[0] / cfg.gammas[1] if len(cfg.gammas) > 1 else 2.0
    phi, change = richardson_gamma(fields, ratio)
    direct_gap = float("nan")
    if grid.cap is not None:
        direct = ShiftedSystem(H, complex(cfg.lam), method=cfg.method, tol=cfg.tol).solve(psi).phi
        direct_gap = float(np.linalg.norm(direct - phi) / np.linalg.norm(direct))
    W_free = _interior_mask(grid, interior_margin)
    resid = (H.matrix @ phi - cfg.lam * phi - psi)[W_free]
    interior = float(np.linalg.norm(resid) / max(np.linalg.norm(psi), 1e-300))
    sh, out_t, in_t, so, si = _tail_diagnostics(grid, geo, phi, cfg.lam, cfg.potential, cfg.beta, shells)
    return SommerfeldReport(
        shells=list(sh),
        outgoing_tail=[float(out_t[n]) for n in sh],
        incoming_tail=[float(in_t[n]) for n in sh],
        outgoing_slope=so,
        incoming_slope=si,
        separation=si - so,
        extrapolation_change=change,
        converged=bool(change <= extrap_tol),
        interior_residual=interior,
        direct_gap=direct_gap,
    )


def _interior_mask(grid: GridSpec, margin: float) -> np.ndarray:
    from .operators import cap_profile

    mask = cap_profile(grid) == 0.0
    if margin > 0:
        p = grid.flat_coords()
        for k, (lo, hi) in enumerate(grid.bounds):
            mask &= (p[k] > lo + margin) & (p[k] < hi - margin)
    return mask


def wkb_sommerfeld_example(grid: GridSpec, lam: float = 0.0, beta: float = 0.0, shells: Sequence[int] = (1, 2),
                           f_ramp_lo=(1.5, 2.0), f_ramp_hi=(8.0, 8.5)) -> SommerfeldReport:
    """Feed the outgoing WKB state as the candidate solution, with psi := (H - lam) u."""
    geo = grid_geometry(grid)
    u = wkb_state(grid, None, 1, f_ramp_lo, f_ramp_hi)
    H = build_hamiltonian(grid.without_cap(), None)
    psi = H.matrix @ u - lam * u
    interior = float(np.linalg.norm(H.matrix @ u - lam * u - psi))
    sh, out_t, in_t, so, si = _tail_diagnostics(grid, geo, u, lam, None, beta, shells)
    return SommerfeldReport(
        shells=list(sh),
        outgoing_tail=[float(out_t[n]) for n in sh],
        incoming_tail=[float(in_t[n]) for n in sh],
        outgoing_slope=so,
        incoming_slope=si,
        separation=si - so,
        extrapolation_change=0.0,
        converged=True,
        interior_residual=interior,
        direct_gap=0.0,
        label="wkb",
    )


# ------------------------------------------------------------------ Rellich


def rellich_illustration(states: dict, last: int = 4) -> dict:
    """Tail diagnostics for named ``(grid, values, shells)`` states.

    An illustration only: a nonzero state whose tail stays above 10% of its
    shell median is consistent with it lying outside B*_0.
    """
    out = {"note": "illustration, not a verification", "states": {}}
    for name, (grid, values, shells) in states.items():
        tail = besov_report(grid, values, ()).tail
        shells = list(shells)[-last:] if shells is not None else list(range(tail.size))[-last:]
        vals = np.array([tail[n] for n in shells if n < tail.size])
        med = float(np.median(vals)) if vals.size else 0.0
        lower = float(vals.min()) if vals.size else 0.0
        out["states"][name] = {
            "shells": shells,
            "tail": [float(v) for v in vals],
            "median": med,
            "min_over_median": lower / med if med > 0 else 0.0,
            "nonvanishing": bool(med > 0 and lower >= 0.1 * med),
            "zero": bool(med == 0.0),
        }
    return out
