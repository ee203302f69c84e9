"""Run configuration and artifact writers (CSV, JSON, SVG, manifest)."""
from __future__ import annotations

import configparser
import csv
import hashlib
import io as _io
import json
import math
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "ConfigError",
    "RunConfig",
    "SCHEMA",
    "load_config",
    "parse_config",
    "reference_config",
    "ArtifactWriter",
    "to_jsonable",
    "svg_plot",
    "OUT_ENV",
]

OUT_ENV = "STARKLAP_OUT"


class ConfigError(ValueError):
    pass


REQUIRED = object()

# section -> key -> (type, default, help)
SCHEMA = {
    "grid": {
        "d": ("int", 2, "spatial dimension"),
        "bounds": ("bounds", "-40 60; -40 40", "box intervals, x first, separated by ';'"),
        "h": ("float", REQUIRED, "mesh width"),
        "stencil_order": ("int", 2, "2 or 4"),
        "cap": ("bool", False, "absorbing layer on/off"),
        "cap_width": ("float", 8.0, "layer width"),
        "cap_strength": ("float", 20.0, "layer strength"),
        "cap_power": ("float", 3.0, "profile exponent"),
        "cap_faces": ("words", "x- x+ y- y+", "faces carrying the layer"),
        "cap_x_plus_width": ("float", 0.0, "override width on the x+ face (0 = same as cap_width)"),
    },
    "potential": {
        "family": ("str", "zero", "zero, long_range, short_range, bump or mixed"),
        "rho": ("float", 1.0, "decay exponent"),
        "c": ("float", 1.0, "coefficient of single-term families"),
        "c1": ("float", 0.5, "mixed: long-range coefficient"),
        "c2": ("float", 1.0, "mixed: short-range coefficient"),
        "c3": ("float", 1.0, "mixed: bump coefficient"),
        "center": ("floats", "-6 0", "bump center"),
        "radius": ("float", 2.0, "bump radius"),
    },
    "source": {
        "center": ("floats", "0 0", "source bump center"),
        "radius": ("float", 3.0, "source bump radius"),
        "amplitude": ("float", 1.0, "0 gives the zero field"),
    },
    "sweep": {
        "lam": ("float", 0.0, "real part of z"),
        "gammas": ("floats", "1 0.5 0.25 0.125", "imaginary parts, descending"),
        "sign": ("int", 1, "+1 upper half plane, -1 lower"),
        "box_check": ("bool", True, "rerun on a transversally doubled box"),
        "box_check_min_gamma": ("float", 0.25, "smallest Gamma rerun for box sensitivity"),
        "plateau_factor": ("float", 2.0, "allowed growth over the anchor ratio"),
        "plateau_anchor": ("float", 1.0, "Gamma whose ratio anchors the plateau test (largest Gamma if absent)"),
        "wrong_sign_factor": ("float", 3.0, "required wrong/right ratio at the smallest Gamma"),
    },
    "phase": {
        "variant": ("str", "root", "root (square-root phase) or simple"),
        "l": ("str", "auto", "cutoff level or 'auto'"),
        "z": ("complex", "1j", "spectral parameter for the factorization check"),
    },
    "run": {
        "beta": ("float", 0.0, "radiation exponent"),
        "m": ("int", 2, "weight/cutoff level"),
        "weight": ("str", "barchi", "barchi or theta"),
        "nu": ("int", 0, "theta scale index"),
        "delta": ("float", 1.0, "theta exponent"),
        "hs": ("floats", "0.4 0.2 0.1", "refinement ladder"),
        "solver_tol": ("float", 1e-8, "relative residual target"),
        "n_fields": ("int", 2, "number of random test fields"),
        "field_region": ("floats", "8 -8 24 8", "test-field centers box: xlo ylo xhi yhi"),
        "field_radius": ("float", 5.0, "test-field bump radius"),
        "k_max": ("float", 0.5, "test-field modulation bound"),
        "min_order_slack": ("float", 0.3, "accepted order deficit"),
        "ablation_factor": ("float", 10.0, "required residual inflation without q6"),
        "n_points": ("int", 1000, "sample size for pointwise checks"),
        "n_sources": ("int", 4, "sampled right-hand sides"),
        "s": ("float", 1.0, "weight exponent"),
        "hoelder_gammas": ("floats", "0.5 0.25 0.125 0.0625 0.03125", "Gamma ladder for pairs"),
        "shells": ("ints", "1 2", "shells used for tail slopes"),
        "extrap_tol": ("float", 0.05, "allowed Richardson disagreement"),
        "separation": ("float", 0.3, "required slope separation"),
        "wkb_h": ("float", 0.05, "mesh width for WKB-sourced examples"),
        "tail_h": ("float", 0.5, "mesh width for the coarse tail grid"),
        "seed": ("int", 0, "random seed"),
    },
}


def _convert(kind, raw, where):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "str":
            return str(raw).strip()
        if kind == "words":
            return tuple(str(raw).split())
        if kind == "floats":
            return tuple(float(v) for v in str(raw).replace(",", " ").split())
        if kind == "ints":
            return tuple(int(v) for v in str(raw).replace(",", " ").split())
        if kind == "complex":
            return complex(str(raw).replace(" ", ""))
        if kind == "bounds":
            out = []
            for part in str(raw).split(";"):
                lo, hi = (float(v) for v in part.split())
                out.append((lo, hi))
            return tuple(out)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: cannot read {raw!r} as {kind}") from exc
    raise ConfigError(f"{where}: unknown type {kind}")


@dataclass
class RunConfig:
    values: dict
    explicit: set = field(default_factory=set)
    source_path: Optional[str] = None

    def __getitem__(self, key: str):
        section, name = key.split(".")
        return self.values[section][name]

    def set(self, key: str, value):
        section, name = key.split(".")
        self.values[section][name] = value
        self.explicit.add(key)

    def echo(self) -> dict:
        return to_jsonable(self.values)

    # -- builders

    def grid(self, h: Optional[float] = None):
        from .operators import CapSpec, GridSpec

        g = self.values["grid"]
        cap = None
        if g["cap"]:
            overrides = (("x+", g["cap_x_plus_width"]),) if g["cap_x_plus_width"] > 0 else ()
            cap = CapSpec(g["cap_width"], g["cap_strength"], g["cap_power"], tuple(g["cap_faces"]), overrides)
        return GridSpec(g["d"], g["bounds"], g["h"] if h is None else h, g["stencil_order"], cap)

    def potential(self):
        from .potential import make_potential

        p = self.values["potential"]
        d = self.values["grid"]["d"]
        fam = p["family"]
        kwargs = {"rho": p["rho"]}
        if fam in ("long_range", "short_range", "bump"):
            kwargs["c"] = p["c"]
        if fam == "mixed":
            kwargs.update(c1=p["c1"], c2=p["c2"], c3=p["c3"])
        if fam in ("bump", "mixed"):
            center = tuple(p["center"]) + (0.0,) * max(0, d - len(p["center"]))
            kwargs.update(center=center[:d], radius=p["radius"])
        if fam == "zero":
            kwargs = {}
        try:
            return make_potential(fam, d=d, **kwargs)
        except ValueError as exc:
            raise ConfigError(f"potential: {exc}") from exc

    def source(self):
        from .experiments import SourceSpec

        s = self.values["source"]
        return SourceSpec(tuple(s["center"]), s["radius"], s["amplitude"])

    def experiment(self, **overrides):
        from .experiments import ExperimentConfig

        sw, run = self.values["sweep"], self.values["run"]
        ph = self.values["phase"]
        kwargs = dict(
            grid=self.grid(),
            potential=self.potential(),
            lam=sw["lam"],
            gammas=tuple(sw["gammas"]),
            sign=sw["sign"],
            source=self.source(),
            tol=run["solver_tol"],
            beta=run["beta"],
            phase_variant=ph["variant"],
            l=None if ph["l"] == "auto" else int(ph["l"]),
            box_check_min_gamma=sw["box_check_min_gamma"],
            plateau_factor=sw["plateau_factor"],
            plateau_anchor=sw["plateau_anchor"],
        )
        kwargs.update(overrides)
        return ExperimentConfig(**kwargs)


def parse_config(text: str, source_path: Optional[str] = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values, explicit = {}, set()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (kind, default, _) in keys.items():
            where = f"{section}.{key}"
            if parser.has_option(section, key):
                values[section][key] = _convert(kind, parser[section][key], where)
                explicit.add(where)
            elif default is REQUIRED:
                raise ConfigError(f"missing required key {where}")
            else:
                values[section][key] = _convert(kind, default, where)
    g = values["grid"]
    if len(g["bounds"]) != g["d"]:
        raise ConfigError("grid.bounds must list one interval per dimension")
    if g["stencil_order"] not in (2, 4):
        raise ConfigError("grid.stencil_order must be 2 or 4")
    if values["sweep"]["sign"] not in (1, -1):
        raise ConfigError("sweep.sign must be 1 or -1")
    if values["run"]["weight"] not in ("barchi", "theta"):
        raise ConfigError("run.weight must be barchi or theta")
    return RunConfig(values, explicit, source_path)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    return parse_config(text, str(path))


def reference_config() -> str:
    """Every key with its default and meaning, as a commented config file."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (kind, default, helptext) in keys.items():
            shown = "<required>" if default is REQUIRED else default
            lines.append(f"# {helptext} ({kind})")
            lines.append(f"{key} = {shown}" if default is not REQUIRED else f"# {key} = {shown}")
        lines.append("")
    return "\n".join(lines)


# ------------------------------------------------------------------ serialization


def _num(v):
    v = float(v)
    if math.isnan(v) or math.isinf(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_num(obj.real), _num(obj.imag)]
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return str(obj)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (complex, np.complexfloating)):
        return repr(complex(v))
    return str(v)


class ArtifactWriter:
    """Writes artifacts under one directory and records their hashes."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.files = {}

    def _write(self, name: str, data: bytes) -> Path:
        path = self.out_dir / name
        path.write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()
        return path

    def csv(self, name: str, rows) -> Path:
        buf = _io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
        return self._write(name, buf.getvalue().encode("utf-8"))

    def json(self, name: str, obj) -> Path:
        text = json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"
        return self._write(name, text.encode("utf-8"))

    def svg(self, name: str, text: str) -> Path:
        return self._write(name, text.encode("utf-8"))

    def manifest(self, config: RunConfig, command: str, seed: int, started: str, finished: str, status: dict) -> Path:
        import scipy

        from . import __version__

        body = {
            "command": command,
            "config": config.echo(),
            "config_path": config.source_path,
            "seed": seed,
            "started": started,
            "finished": finished,
            "status": status,
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "starklap": __version__,
            },
            "files": [{"path": k, "sha256": v} for k, v in sorted(self.files.items())],
        }
        text = json.dumps(to_jsonable(body), sort_keys=True, indent=2) + "\n"
        path = self.out_dir / "manifest.json"
        path.write_text(text)
        return path


def default_out_root() -> str:
    return os.environ.get(OUT_ENV, "starklap-out")


# ------------------------------------------------------------------ SVG


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def svg_plot(series: dict, title: str, xlabel: str, ylabel: str, logx: bool = False, logy: bool = True,
             width: int = 640, height: int = 420) -> str:
    """Line plot of ``{label: (xs, ys)}``; non-positive values are dropped on log axes."""
    left, right, top, bottom = 70, 20, 40, 50
    pts = {}
    for label, (xs, ys) in series.items():
        keep = []
        for x, y in zip(xs, ys):
            x, y = float(x), float(y)
            if not (math.isfinite(x) and math.isfinite(y)):
                continue
            if (logx and x <= 0) or (logy and y <= 0):
                continue
            keep.append((math.log10(x) if logx else x, math.log10(y) if logy else y))
        pts[label] = keep
    allp = [p for v in pts.values() for p in v]
    if allp:
        x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
        y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = width - left - right, height - top - bottom

    def X(v):
        return left + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return top + (1 - (v - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15" font-family="sans-serif">{_esc(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        lx = _fmt(10**fx) if logx else _fmt(fx)
        ly = _fmt(10**fy) if logy else _fmt(fy)
        out.append(f'<text x="{X(fx):.1f}" y="{top + ph + 18}" text-anchor="middle" font-size="11" font-family="sans-serif">{lx}</text>')
        out.append(f'<text x="{left - 6}" y="{Y(fy) + 4:.1f}" text-anchor="end" font-size="11" font-family="sans-serif">{ly}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12" font-family="sans-serif">{_esc(xlabel)}{" (log)" if logx else ""}</text>')
    out.append(
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" font-family="sans-serif" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">{_esc(ylabel)}{" (log)" if logy else ""}</text>'
    )
    for i, (label, p) in enumerate(pts.items()):
        color = _COLORS[i % len(_COLORS)]
        if p:
            path = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in p)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.8"/>')
            for a, b in p:
                out.append(f'<circle cx="{X(a):.2f}" cy="{Y(b):.2f}" r="2.5" fill="{color}"/>')
        out.append(f'<text x="{left + 8}" y="{top + 16 + 14 * i}" font-size="11" font-family="sans-serif" fill="{color}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
