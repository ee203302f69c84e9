"""Command-line entry point.

Exit status: 0 when every configured check passes, 1 when a check fails,
2 for configuration errors, 3 for numerical failures (a failure record is
written next to any partial artifacts) and 4 for I/O errors.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import logging
import os
import sys
from pathlib import Path

COMMANDS = (
    "geometry-check",
    "potential-validate",
    "commutator-check",
    "factorization-check",
    "wkb-check",
    "solve",
    "lap-sweep",
    "radiation-sweep",
    "hoelder",
    "sommerfeld",
    "rellich",
    "besov-norms",
)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("starklap")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="starklap", description="Resolvent and radiation-condition checks for perturbed Stark Hamiltonians.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config_file", nargs="?", help="config path (same as --config)")
        p.add_argument("--config", dest="config", help="INI config file")
        p.add_argument("--out", help="output directory (default: $STARKLAP_OUT/<command>)")
        p.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread count")
        p.add_argument("--seed", type=int, default=None, help="overrides run.seed")
        p.add_argument("--verbose", action="store_true")
    sub.add_parser("config-reference", help="print every config key with its default")
    return parser


def _set_threads(n):
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


# ------------------------------------------------------------------ commands


def _fields(cfg):
    from .verify import random_test_fields

    run = cfg.values["run"]
    reg = run["field_region"]
    d = cfg.values["grid"]["d"]
    lo, hi = reg[:d], reg[d : 2 * d]
    return random_test_fields(run["n_fields"], lo, hi, run["field_radius"], run["k_max"], run["seed"])


def _refinement_svg(report, title):
    from .io import svg_plot

    return svg_plot({"residual": (report.hs, report.residual)}, title, "h", "relative residual", logx=True, logy=True)


def cmd_geometry_check(cfg, w):
    from .verify import geometry_check

    run = cfg.values["run"]
    rep = geometry_check(run["n_points"], cfg.values["grid"]["d"], run["seed"])
    w.csv("derivative_check.csv", rep.csv_rows())
    w.json("summary.json", rep.to_dict())
    # wall time goes to the manifest only, so the summary stays byte-reproducible
    return {"passed": rep.passed(), "seconds": rep.seconds}


def cmd_potential_validate(cfg, w):
    from .potential import validate_conditions

    spec = cfg.potential()
    rep = validate_conditions(spec, cfg.grid())
    w.json("conditions.json", {"report": rep.to_dict(), "C_decl": spec.C_decl, "potential": spec.params, "family": spec.name})
    return {"passed": rep.passed}


def _weight(cfg):
    from .verify import barchi_weight, lap_weight

    run = cfg.values["run"]
    if run["weight"] == "theta":
        return lap_weight(run["m"], run["nu"], run["delta"])
    return barchi_weight(run["m"])


def cmd_commutator_check(cfg, w):
    import numpy as np

    from .verify import commutator_identity_check, commutator_remainders, far_region_points
    from .geometry import eval_geometry

    run = cfg.values["run"]
    grid = cfg.grid()
    spec = cfg.potential()
    rep = commutator_identity_check(grid, spec, _weight(cfg), _fields(cfg), run["hs"])
    # sampled constants of the remainder bounds on {f >= 2^m}
    pts = far_region_points(run["n_points"], grid.d, run["seed"], s_min=4.0 ** run["m"], r_max=1e4)
    geo = eval_geometry(pts)
    q4, q5 = commutator_remainders(spec, pts, geo)
    rho = spec.rho if not spec.is_zero else np.inf
    c4 = float(np.max(np.abs(q4) * geo.f ** (1 + min(3.0, rho)) * geo.r))
    c5 = float(np.max(-q5 * geo.f ** (1 + min(6.0, rho))))
    slack = run["min_order_slack"]
    passed = rep.reliable and rep.convergence_order >= grid.stencil_order - slack
    rep.extra.update({"q4_constant": c4, "q5_lower_constant": max(c5, 0.0)})
    w.json("summary.json", rep.to_dict())
    w.csv("terms.csv", rep.term_rows())
    w.csv("refinement.csv", [["h", "residual"]] + [[h, r] for h, r in zip(rep.hs, rep.residual)])
    w.svg("refinement.svg", _refinement_svg(rep, "commutator identity residual"))
    return {"passed": bool(passed), "order": rep.convergence_order}


def cmd_factorization_check(cfg, w):
    from .phase import PhaseParams, select_l
    from .verify import factorization_check

    run, ph = cfg.values["run"], cfg.values["phase"]
    grid = cfg.grid()
    spec = cfg.potential()
    z = ph["z"]
    l = select_l([z], spec, grid) if ph["l"] == "auto" else int(ph["l"])
    m = max(run["m"], l + 2)
    params = PhaseParams(z, l, 1, ph["variant"])
    fields = _fields(cfg)
    rep = factorization_check(grid, spec, params, m, fields, run["hs"])
    abl = factorization_check(grid, spec, params, m, fields, run["hs"][:1], include_q6=False)
    ratio = abl.residual[0] / rep.residual[0] if rep.residual[0] > 0 else float("inf")
    rep.extra.update({"l": l, "m": m, "ablation_residual": abl.residual[0], "ablation_ratio": ratio})
    passed = rep.reliable and rep.convergence_order >= grid.stencil_order - run["min_order_slack"] and ratio >= run["ablation_factor"]
    w.json("summary.json", rep.to_dict())
    w.csv("refinement.csv", [["h", "residual"]] + [[h, r] for h, r in zip(rep.hs, rep.residual)])
    w.svg("refinement.svg", _refinement_svg(rep, "factorization residual"))
    return {"passed": bool(passed), "order": rep.convergence_order, "ablation_ratio": ratio}


def wkb_tail_report(h: float, order: int = 2):
    """Shell tails of the windowed WKB state on a coarse box covering f up to 33."""
    from .besov import besov_report
    from .operators import GridSpec
    from .verify import wkb_state

    grid = GridSpec(2, ((-3.0, 548.0), (-52.0, 52.0)), h, order)
    u = wkb_state(grid, None, 1, (1.5, 2.0), (32.0, 33.0))
    return besov_report(grid, u, ())


def cmd_wkb_check(cfg, w):
    from .verify import wkb_annihilation_check

    run = cfg.values["run"]
    grid = cfg.grid()
    rep = wkb_annihilation_check(grid, None, 1, run["hs"])
    tail = wkb_tail_report(run["tail_h"], grid.stencil_order)
    inner = [float(tail.tail[n]) for n in (1, 2, 3, 4)]
    bounded = min(inner) >= 0.5 * max(inner)
    rep.extra.update({"tail_shells_1_4": inner, "tail_bounded_below": bounded})
    passed = rep.reliable and rep.convergence_order >= grid.stencil_order - 0.2 and bounded
    w.json("summary.json", rep.to_dict())
    w.csv("tail.csv", tail.csv_rows())
    w.csv("refinement.csv", [["h", "residual"]] + [[h, r] for h, r in zip(rep.hs, rep.residual)])
    w.svg("refinement.svg", _refinement_svg(rep, "WKB annihilation residual"))
    return {"passed": bool(passed), "order": rep.convergence_order}


def cmd_solve(cfg, w):
    import numpy as np

    from .besov import besov_report
    from .experiments import source_field
    from .operators import build_hamiltonian, norm
    from .solver import solve_resolvent

    grid = cfg.grid()
    sw = cfg.values["sweep"]
    z = complex(sw["lam"], sw["sign"] * sw["gammas"][0])
    H = build_hamiltonian(grid, cfg.potential())
    psi = source_field(grid, cfg.source())
    tol = cfg.values["run"]["solver_tol"]
    sol = solve_resolvent(H, z, psi, tol=tol)
    rep = besov_report(grid, sol.phi)
    bound_ok = True
    if grid.cap is None and z.imag != 0:
        bound_ok = norm(grid, sol.phi) <= norm(grid, psi) / abs(z.imag) * (1 + 1e-10)
    w.csv("shells.csv", rep.csv_rows())
    w.json("summary.json", {"z": z, "residual": sol.relative_residual, "method": sol.method, "besov": rep.to_dict(), "l2_bound_ok": bound_ok,
                            "phi_l2": float(np.sqrt(np.sum(np.abs(sol.phi) ** 2) * grid.cell_volume))})
    return {"passed": bool(sol.relative_residual <= tol and bound_ok)}


def _sweep_outputs(w, res, title):
    from .io import svg_plot

    w.csv("sweep.csv", res.csv_rows())
    series = {}
    keys = [k for k in res.rows[0] if k.endswith("_ratio")] if res.rows else []
    for k in keys:
        series[k[: -len("_ratio")]] = ([r["gamma"] for r in res.rows], [r[k] for r in res.rows])
    w.svg("ratio_vs_gamma.svg", svg_plot(series, title, "Gamma", "ratio to ||psi||_B", logx=True, logy=True))


def cmd_lap_sweep(cfg, w):
    from .experiments import box_sensitivity, lap_sweep

    exp = cfg.experiment()
    res = lap_sweep(exp)
    box = box_sensitivity(exp, res) if cfg.values["sweep"]["box_check"] else {"flag": False, "skipped": True}
    res.summary["box_sensitivity"] = box
    w.json("summary.json", res.to_dict())
    _sweep_outputs(w, res, "LAP ratios")
    keys = ("phi_Bstar", "radial_L2", "pf_Bstar", "ell_form")
    passed = all(res.summary[k]["plateau"] for k in keys) and not box["flag"] and not res.warnings
    return {"passed": bool(passed)}


def cmd_radiation_sweep(cfg, w):
    from .experiments import box_sensitivity, radiation_sweep

    exp = cfg.experiment()
    res = radiation_sweep(exp)
    box = box_sensitivity(exp, res, ("rad_Bstar",)) if cfg.values["sweep"]["box_check"] else {"flag": False, "skipped": True}
    res.summary["box_sensitivity"] = box
    w.json("summary.json", res.to_dict())
    _sweep_outputs(w, res, "radiation ratios")
    wr = res.summary.get("wrong_over_right_last", 0.0)
    zero = all(r["rad_Bstar"] == 0.0 for r in res.rows)
    passed = res.summary["rad_Bstar"]["plateau"] and (zero or wr >= cfg.values["sweep"]["wrong_sign_factor"]) and not box["flag"]
    return {"passed": bool(passed), "wrong_over_right": wr, "far_wrong_over_right": res.summary.get("far_wrong_over_right_last", 0.0)}


def cmd_hoelder(cfg, w):
    from .experiments import hoelder_estimates
    from .io import svg_plot

    run = cfg.values["run"]
    exp = cfg.experiment()
    reps = hoelder_estimates(exp, (0, 1), run["s"], run["n_sources"], run["seed"], tuple(run["hoelder_gammas"]))
    rows = [["k", "dz", "difference"]]
    for k, rep in reps.items():
        rows += [[k, a, b] for a, b in zip(rep.dz, rep.diff)]
    w.csv("pairs.csv", rows)
    w.json("summary.json", {str(k): rep.to_dict() for k, rep in reps.items()})
    w.svg("hoelder.svg", svg_plot({f"k={k}": (rep.dz, rep.diff) for k, rep in reps.items()}, "resolvent differences", "|z - z'|", "difference", logx=True))
    tol = run["solver_tol"]
    passed = all(not r.insufficient and r.epsilon > 0 and r.band[0] > 0 and r.identity_residual <= 10 * tol for r in reps.values())
    return {"passed": bool(passed)}


def _wkb_example_grid(cfg):
    from .operators import GridSpec

    return GridSpec(2, ((-2.0, 38.0), (-14.0, 14.0)), cfg.values["run"]["wkb_h"], cfg.values["grid"]["stencil_order"])


def cmd_sommerfeld(cfg, w):
    from .experiments import sommerfeld_check, wkb_sommerfeld_example

    run = cfg.values["run"]
    exp = cfg.experiment()
    rep = sommerfeld_check(exp, run["shells"], run["extrap_tol"])
    wkb = wkb_sommerfeld_example(_wkb_example_grid(cfg), exp.lam, exp.beta, run["shells"])
    w.json("summary.json", {"extrapolated": rep.to_dict(), "wkb": wkb.to_dict()})
    rows = [["source", "shell", "outgoing_tail", "incoming_tail"]]
    for name, r in (("extrapolated", rep), ("wkb", wkb)):
        rows += [[name, n, a, b] for n, a, b in zip(r.shells, r.outgoing_tail, r.incoming_tail)]
    w.csv("tails.csv", rows)
    from .io import svg_plot

    w.svg("tails.svg", svg_plot({"outgoing": (rep.shells, rep.outgoing_tail), "incoming": (rep.shells, rep.incoming_tail)}, "shell tails", "shell n", "tail"))
    sep = run["separation"]
    zero = cfg.source().is_zero
    passed = (zero or (rep.passed and rep.separation >= sep and rep.converged)) and wkb.passed
    return {"passed": bool(passed), "separation": rep.separation}


def cmd_rellich(cfg, w):
    import numpy as np

    from .experiments import _interior_mask, rellich_illustration, source_field
    from .operators import build_hamiltonian
    from .solver import ShiftedSystem

    run = cfg.values["run"]
    grid = cfg.grid()
    exp = cfg.experiment()
    H = build_hamiltonian(grid, exp.potential)
    psi = source_field(grid, exp.source)
    z = complex(exp.lam) if grid.cap is not None else exp.z(min(exp.gammas))
    phi = ShiftedSystem(H, z, tol=exp.tol).solve(psi).phi
    phi = np.where(_interior_mask(grid, 0.0), phi, 0.0)
    tail_grid_rep = wkb_tail_report(run["tail_h"], grid.stencil_order)
    states = {
        "zero": (grid, np.zeros(grid.n_nodes, dtype=complex), run["shells"]),
        "resolvent": (grid, phi, run["shells"]),
    }
    out = rellich_illustration(states)
    wt = tail_grid_rep.tail
    shells = [1, 2, 3, 4]
    vals = np.array([wt[n] for n in shells])
    med = float(np.median(vals))
    out["states"]["wkb"] = {"shells": shells, "tail": vals.tolist(), "median": med, "min_over_median": float(vals.min() / med),
                            "nonvanishing": bool(vals.min() >= 0.1 * med), "zero": False}
    w.json("summary.json", out)
    rows = [["state", "shell", "tail"]]
    for name, st in out["states"].items():
        rows += [[name, n, t] for n, t in zip(st["shells"], st["tail"])]
    w.csv("tails.csv", rows)
    st = out["states"]
    passed = st["zero"]["zero"] and st["wkb"]["nonvanishing"] and (st["resolvent"]["nonvanishing"] or exp.source.is_zero)
    return {"passed": bool(passed)}


def cmd_besov_norms(cfg, w):
    from .besov import besov_report
    from .experiments import source_field
    from .io import svg_plot

    grid = cfg.grid()
    psi = source_field(grid, cfg.source(), cfg.values["run"]["beta"])
    rep = besov_report(grid, psi)
    w.csv("shells.csv", rep.csv_rows())
    w.json("summary.json", rep.to_dict())
    w.svg("tail.svg", svg_plot({"tail": (list(range(rep.tail.size)), rep.tail)}, "shell tails", "shell n", "2^(-n/2) ||F_n u||"))
    return {"passed": True}


HANDLERS = {name: globals()["cmd_" + name.replace("-", "_")] for name in COMMANDS}


# ------------------------------------------------------------------ main


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "config-reference":
        from .io import reference_config

        sys.stdout.write(reference_config())
        return EXIT_OK
    _set_threads(args.threads)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    from .io import ArtifactWriter, ConfigError, default_out_root, load_config, parse_config

    path = args.config or args.config_file
    try:
        cfg = load_config(path) if path else parse_config("[grid]\nh = 0.25\n")
        if args.seed is not None:
            cfg.set("run.seed", args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.out) if args.out else Path(default_out_root()) / args.command
    try:
        writer = ArtifactWriter(out_dir)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    from .phase import BranchCutError
    from .potential import PotentialValidationError
    from .solver import SolverError
    from .verify import SupportError

    started = _now()
    seed = cfg["run.seed"]
    try:
        status = HANDLERS[args.command](cfg, writer)
        code = EXIT_OK if status.get("passed") else EXIT_CHECK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, PotentialValidationError, SupportError, BranchCutError, FloatingPointError, ArithmeticError) as exc:
        status = {"passed": False, "failure": type(exc).__name__, "message": str(exc)}
        try:
            writer.json("failure.json", status)
            writer.manifest(cfg, args.command, seed, started, _now(), status)
        except OSError:
            pass
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        writer.manifest(cfg, args.command, seed, started, _now(), status)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.verbose or code != EXIT_OK:
        print(f"{args.command}: {'pass' if code == EXIT_OK else 'FAIL'} {status}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
