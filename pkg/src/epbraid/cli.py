"""Command-line front end: config ingestion, experiment runs, CSV/SVG emission.

Every run is driven by a JSON config validated against a published schema;
all physical quantities are dimensionless (rates in units of the damping
contrast, times in its inverse).  Data files are deterministic: fixed column
orders, fixed summation orders, shortest round-trip float formatting and no
wall-clock content (timing lives in the run manifest only).

Exit codes: 0 success, 2 configuration error, 3 invalid dressing, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .contour import CircularLoop, Schedule, chi_circ, loop_branch_state, loop_eigenvalues
from .dynamics import (
    braid_trace,
    braid_criteria,
    ep_encircle_check,
    instantaneous_frames,
    integrate_flow,
    transition_probabilities,
)
from .errors import (
    ConfigError,
    EpbraidError,
    InfeasibleTargetError,
    InvalidDressingError,
)
from .optomech import OptomechParams, invert_controls
from .robustness import NoiseModel, noise_averaged_error
from .synthesis import (
    MaskRanges,
    Protocol,
    loop_kinematics,
    radd_optimize,
    rms,
    satd_dressing_angle,
    satd_fields,
    td_correction,
    time_branch_state,
    uncorrected_protocol,
)

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["loop", "schedule"],
    "additionalProperties": False,
    "properties": {
        "loop": {
            "type": "object",
            "required": ["delta0", "omega0", "gamma0"],
            "additionalProperties": False,
            "properties": {
                "delta0": {"type": "number", "exclusiveMinimum": 0},
                "omega0": {"type": "number"},
                "gamma0": {"type": "number", "exclusiveMinimum": 0},
                "phi": {"type": "number"},
                "d": {"enum": [1, -1]},
            },
        },
        "schedule": {
            "type": "object",
            "required": ["t0"],
            "additionalProperties": False,
            "properties": {"t0": {"type": "number", "exclusiveMinimum": 0}},
        },
        "protocol_kind": {"enum": ["uncorrected", "td", "satd", "radd"]},
        "grid_size": {"type": "integer", "minimum": 256},
        "tol": {"type": "number", "minimum": 1e-13, "maximum": 1e-6},
        "noise": {
            "type": "object",
            "required": ["beta"],
            "additionalProperties": False,
            "properties": {
                "beta": {"type": "number", "minimum": 0},
                "quadrature_order": {"type": "integer", "minimum": 3},
            },
        },
        "radd_ranges": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "amplitude": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "width_fraction": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "exponents": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "n_amplitude": {"type": "integer", "minimum": 2},
                "n_width": {"type": "integer", "minimum": 2},
            },
        },
        "radd_mask": {
            "type": "object",
            "required": ["amplitude", "width", "exponent"],
            "additionalProperties": False,
            "properties": {
                "amplitude": {"type": "number", "minimum": 0},
                "width": {"type": "number", "exclusiveMinimum": 0},
                "exponent": {"type": "integer", "minimum": 1},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "loop_time": {"$ref": "#/definitions/axis"},
                "radius": {"$ref": "#/definitions/axis"},
            },
        },
        "protocol_kinds": {
            "type": "array",
            "items": {"enum": ["uncorrected", "td", "satd", "radd"]},
        },
        "pairs": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"enum": ["+", "-"]},
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "optomech": {
            "type": "object",
            "required": ["omega_mech", "gamma_mech", "g", "kappa", "kappa_in", "omega_laser"],
            "additionalProperties": False,
            "properties": {
                "omega_mech": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "gamma_mech": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "g": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "kappa": {"type": "number", "exclusiveMinimum": 0},
                "kappa_in": {"type": "number", "exclusiveMinimum": 0},
                "omega_laser": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "seed": {"type": "integer"},
    },
    "definitions": {
        "axis": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["min", "max", "n"],
                    "additionalProperties": False,
                    "properties": {
                        "min": {"type": "number"},
                        "max": {"type": "number"},
                        "n": {"type": "integer", "minimum": 1},
                    },
                },
                {"type": "array", "items": {"type": "number"}, "minItems": 1},
            ]
        }
    },
}


@dataclass
class RunConfig:
    loop: CircularLoop
    schedule: Schedule
    protocol_kind: str = "uncorrected"
    grid_size: int = 4096
    tol: float = 1e-10
    noise: Optional[NoiseModel] = None
    radd_ranges: Optional[MaskRanges] = None
    radd_mask: Optional[tuple] = None
    sweep: Optional[dict] = None
    protocol_kinds: Optional[list] = None
    pairs: Optional[list] = None
    optomech: Optional[OptomechParams] = None
    seed: int = 0
    raw: Optional[dict] = None


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    import jsonschema

    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {exc.message}") from exc

    loop_raw = dict(raw["loop"])
    loop = CircularLoop(
        delta0=loop_raw["delta0"],
        omega0=loop_raw["omega0"],
        gamma0=loop_raw["gamma0"],
        phi=loop_raw.get("phi", 0.0),
        d=loop_raw.get("d", 1),
    )
    schedule = Schedule(t0=raw["schedule"]["t0"], d=loop.d)
    noise = None
    if "noise" in raw:
        noise = NoiseModel(
            beta=raw["noise"]["beta"],
            quadrature_order=raw["noise"].get("quadrature_order", 15),
        )
    ranges = None
    if "radd_ranges" in raw:
        rr = raw["radd_ranges"]
        kwargs = {}
        if "amplitude" in rr:
            kwargs["amplitude"] = tuple(rr["amplitude"])
        if "width_fraction" in rr:
            kwargs["width_fraction"] = tuple(rr["width_fraction"])
        if "exponents" in rr:
            kwargs["exponents"] = tuple(rr["exponents"])
        if "n_amplitude" in rr:
            kwargs["n_amplitude"] = rr["n_amplitude"]
        if "n_width" in rr:
            kwargs["n_width"] = rr["n_width"]
        ranges = MaskRanges(**kwargs)
    mask = None
    if "radd_mask" in raw:
        mask = (
            raw["radd_mask"]["amplitude"],
            raw["radd_mask"]["width"],
            raw["radd_mask"]["exponent"],
        )
    om = None
    if "optomech" in raw:
        o = raw["optomech"]
        om = OptomechParams(
            omega_mech=tuple(o["omega_mech"]),
            gamma_mech=tuple(o["gamma_mech"]),
            g=tuple(o["g"]),
            kappa=o["kappa"],
            kappa_in=o["kappa_in"],
            omega_laser=o["omega_laser"],
        )
    return RunConfig(
        loop=loop,
        schedule=schedule,
        protocol_kind=raw.get("protocol_kind", "uncorrected"),
        grid_size=raw.get("grid_size", 4096),
        tol=raw.get("tol", 1e-10),
        noise=noise,
        radd_ranges=ranges,
        radd_mask=mask,
        sweep=raw.get("sweep"),
        protocol_kinds=raw.get("protocol_kinds"),
        pairs=raw.get("pairs"),
        optomech=om,
        seed=raw.get("seed", 0),
        raw=raw,
    )


def axis_values(spec) -> list:
    if isinstance(spec, dict):
        return [float(v) for v in np.linspace(spec["min"], spec["max"], spec["n"])]
    return [float(v) for v in spec]


def sweep_loop_times(cfg: RunConfig) -> list:
    if cfg.sweep and "loop_time" in cfg.sweep:
        return axis_values(cfg.sweep["loop_time"])
    return [cfg.schedule.t0]


def sweep_radii(cfg: RunConfig) -> list:
    if cfg.sweep and "radius" in cfg.sweep:
        return axis_values(cfg.sweep["radius"])
    return [cfg.loop.delta0]


def build_protocol(cfg: RunConfig, kind: Optional[str] = None, loop=None, schedule=None) -> Protocol:
    kind = kind or cfg.protocol_kind
    loop = loop or cfg.loop
    schedule = schedule or cfg.schedule
    grid = cfg.grid_size
    if kind == "uncorrected":
        return uncorrected_protocol(loop, schedule, grid)
    if kind == "td":
        return td_correction(loop, schedule, grid)
    if kind == "satd":
        dressing = satd_dressing_angle(loop, schedule, grid)
        return satd_fields(loop, schedule, dressing)
    if kind == "radd":
        if cfg.radd_mask is not None:
            from .synthesis import radd_dressing_angle

            dressing = radd_dressing_angle(loop, schedule, cfg.radd_mask, grid)
            return satd_fields(loop, schedule, dressing)
        result = radd_optimize(loop, schedule, cfg.radd_ranges, grid=min(grid, 2048))
        return result.protocol
    raise ConfigError(f"unknown protocol kind {kind!r}")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_manifest(outdir: Path, cfg: RunConfig, command: str, outputs: list, t_start: float):
    manifest = {
        "command": command,
        "config": cfg.raw,
        "library_version": __version__,
        "outputs": sorted(outputs),
        "wall_time_s": round(time.time() - t_start, 3),
    }
    (outdir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# subcommand implementations


def cmd_spectrum(cfg: RunConfig, outdir: Path) -> list:
    n = cfg.grid_size
    eps = np.linspace(0.0, 1.0, n + 1)
    branch = loop_branch_state(cfg.loop, n)
    lam = loop_eigenvalues(cfg.loop, eps, branch)
    delta, omega, _ = cfg.loop.coords(cfg.loop.d * eps)
    q = delta + 0.5j * cfg.loop.gamma0
    rad = q * q + omega * omega
    chi = branch.chi(eps)
    rows = [
        (eps[k], delta[k], omega[k], rad[k].real, rad[k].imag, chi[k], lam[k].real, lam[k].imag)
        for k in range(len(eps))
    ]
    write_csv(
        outdir / "spectrum.csv",
        ["eps", "delta", "omega", "rad_re", "rad_im", "chi", "lambda_plus_re", "lambda_plus_im"],
        rows,
    )
    return ["spectrum.csv"]


def cmd_contour(cfg: RunConfig, outdir: Path) -> list:
    n = cfg.grid_size
    eps = np.linspace(0.0, 1.0, n + 1)
    branch = loop_branch_state(cfg.loop, n)
    delta, omega, gamma = cfg.loop.coords(cfg.loop.d * eps)
    chi_closed = chi_circ(cfg.loop, eps)
    rows = [
        (eps[k], delta[k], omega[k], float(gamma[k]), branch.chi(eps[k]), chi_closed[k])
        for k in range(len(eps))
    ]
    write_csv(
        outdir / "contour.csv",
        ["eps", "delta", "omega", "gamma", "chi_detected", "chi_closed_form"],
        rows,
    )
    (outdir / "branch.json").write_text(
        json.dumps(
            {
                "chi0": branch.chi0,
                "crossings_eps": [float(x) for x in branch.crossings],
                "n_crossings": branch.n_crossings,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return ["contour.csv", "branch.json"]


def cmd_simulate(cfg: RunConfig, outdir: Path) -> list:
    protocol = build_protocol(cfg)
    n_out = min(cfg.grid_size, 1024)
    t_eval = np.linspace(0.0, cfg.schedule.t0, n_out + 1)
    flow = integrate_flow(protocol, cfg.schedule.t0, rtol=cfg.tol, t_eval=t_eval)
    frames = instantaneous_frames(cfg.loop, cfg.schedule, t_eval)
    probs = transition_probabilities(flow, frames)
    rows = []
    for k in range(len(t_eval)):
        m = flow.mats[k]
        rows.append(
            (
                t_eval[k],
                m[0, 0].real, m[0, 0].imag, m[0, 1].real, m[0, 1].imag,
                m[1, 0].real, m[1, 0].imag, m[1, 1].real, m[1, 1].imag,
                flow.log_scale[k],
                probs[("+", "+")][k], probs[("+", "-")][k],
                probs[("-", "+")][k], probs[("-", "-")][k],
            )
        )
    write_csv(
        outdir / "simulate.csv",
        [
            "t",
            "phi00_re", "phi00_im", "phi01_re", "phi01_im",
            "phi10_re", "phi10_im", "phi11_re", "phi11_im",
            "log_scale",
            "P_pp", "P_pm", "P_mp", "P_mm",
        ],
        rows,
    )
    return ["simulate.csv"]


def cmd_correct(cfg: RunConfig, outdir: Path, kind: str) -> list:
    loop_times = sweep_loop_times(cfg)
    outputs = []
    if len(loop_times) == 1 and loop_times[0] == cfg.schedule.t0:
        protocol = build_protocol(cfg, kind=kind)
        protocol.to_csv(outdir / "protocol.csv")
        outputs.append("protocol.csv")
        report = {
            "kind": protocol.kind,
            "rms_total": rms(protocol),
            "rms_correction": rms(protocol.correction) if protocol.correction else 0.0,
        }
        if kind in ("satd", "radd"):
            dressing = satd_dressing_angle(cfg.loop, cfg.schedule, cfg.grid_size)
            report["satd_n_crossings"] = dressing.n_crossings
            report["satd_valid"] = bool(dressing.valid)
        (outdir / "correction.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        outputs.append("correction.json")
    else:
        rows = []
        for t0 in loop_times:
            schedule = Schedule(t0=t0, d=cfg.loop.d)
            uc = uncorrected_protocol(cfg.loop, schedule, min(cfg.grid_size, 2048))
            protocol = build_protocol(cfg, kind=kind, schedule=schedule)
            rows.append(
                (
                    t0,
                    kind,
                    rms(uc),
                    rms(protocol),
                    rms(protocol.correction) if protocol.correction else 0.0,
                )
            )
        write_csv(
            outdir / "correction_sweep.csv",
            ["loop_time", "kind", "rms_uncorrected", "rms_total", "rms_correction"],
            rows,
        )
        outputs.append("correction_sweep.csv")
    return outputs


def cmd_validity_map(cfg: RunConfig, outdir: Path) -> list:
    rows = []
    for t0 in sweep_loop_times(cfg):
        schedule = Schedule(t0=t0, d=cfg.loop.d)
        dressing = satd_dressing_angle(cfg.loop, schedule, min(cfg.grid_size, 2048))
        rows.append(
            (
                t0,
                dressing.n_crossings,
                dressing.mu_end_over_pi_mod2(),
                dressing.valid,
            )
        )
    write_csv(
        outdir / "validity.csv",
        ["loop_time", "n_crossings", "mu_end_over_pi_mod2", "valid"],
        rows,
    )
    return ["validity.csv"]


def _robustness_cell(args):
    cfg_raw, t0, kind, pair = args
    cfg = _config_from_raw(cfg_raw)
    schedule = Schedule(t0=t0, d=cfg.loop.d)
    protocol = build_protocol(cfg, kind=kind, schedule=schedule)
    frames = instantaneous_frames(
        cfg.loop, schedule, np.array([0.0, t0])
    )
    noise = cfg.noise or NoiseModel(beta=0.05 * cfg.loop.gamma0)
    err = noise_averaged_error(protocol, frames, pair[0], pair[1], noise, rtol=cfg.tol)
    return (t0, kind, pair[0], pair[1], noise.beta, err)


def _config_from_raw(raw: dict) -> RunConfig:
    import tempfile

    with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
        json.dump(raw, fh)
        name = fh.name
    try:
        return load_config(name)
    finally:
        Path(name).unlink(missing_ok=True)


def cmd_robustness(cfg: RunConfig, outdir: Path, jobs: int = 1) -> list:
    kinds = cfg.protocol_kinds or ["td", "satd"]
    pairs = [tuple(p) for p in (cfg.pairs or [["-", "-"]])]
    cells = [
        (cfg.raw, t0, kind, pair)
        for t0 in sweep_loop_times(cfg)
        for kind in kinds
        for pair in pairs
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_robustness_cell, cells))
    else:
        rows = [_robustness_cell(c) for c in cells]
    write_csv(
        outdir / "robustness.csv",
        ["loop_time", "kind", "i", "j", "beta", "error"],
        rows,
    )
    return ["robustness.csv"]


def cmd_optimize_radd(cfg: RunConfig, outdir: Path, jobs: int = 1) -> list:
    result = radd_optimize(
        cfg.loop, cfg.schedule, cfg.radd_ranges, grid=min(cfg.grid_size, 2048), jobs=jobs
    )
    result.protocol.to_csv(outdir / "protocol.csv")
    (outdir / "radd.json").write_text(
        json.dumps(
            {
                "amplitude": result.amplitude,
                "width": result.width,
                "exponent": result.exponent,
                "rms_correction": result.rms,
                "rms_correction_satd": result.rms_satd,
                "n_candidates": result.n_candidates,
                "n_valid": result.n_valid,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    return ["protocol.csv", "radd.json"]


def cmd_encircle_check(cfg: RunConfig, outdir: Path) -> list:
    rows = []
    for radius in sweep_radii(cfg):
        loop = CircularLoop(
            delta0=radius,
            omega0=cfg.loop.omega0,
            gamma0=cfg.loop.gamma0,
            phi=cfg.loop.phi,
            d=cfg.loop.d,
        )
        for t0 in sweep_loop_times(cfg):
            schedule = Schedule(t0=t0, d=loop.d)
            try:
                protocol = build_protocol(cfg, kind=cfg.protocol_kind, loop=loop, schedule=schedule)
            except InvalidDressingError:
                rows.append((t0, radius, "", "", "", "invalid"))
                continue
            encircled = ep_encircle_check(protocol, grid=min(cfg.grid_size, 4096))
            n_trace = min(cfg.grid_size, 2048)
            grid2 = np.linspace(0.0, 2.0 * t0, 2 * n_trace + 1)

            def doubled(t, _p=protocol, _t0=t0):
                return _p.hamiltonian(t if t <= _t0 else t - _t0)

            trace = braid_trace(doubled, grid2)
            cond1, cond2 = braid_criteria(trace, t0)
            rows.append((t0, radius, int(encircled), int(cond1), int(cond2), "ok"))
    write_csv(
        outdir / "encircle.csv",
        ["loop_time", "radius", "encircled", "braid_cond1", "braid_cond2", "status"],
        rows,
    )
    return ["encircle.csv"]


def cmd_map_optomech(cfg: RunConfig, outdir: Path) -> list:
    if cfg.optomech is None:
        raise ConfigError("map-optomech requires an 'optomech' section in the config")
    protocol = build_protocol(cfg)
    result = invert_controls(protocol, cfg.optomech, strict=False)
    result.to_csv(outdir / "optomech_schedules.csv")
    return ["optomech_schedules.csv"]


PLOT_REQUIREMENTS = {
    "probability": {"t", "P_pp", "P_pm", "P_mp", "P_mm"},
    "fields": {"t", "fx_re", "fx_im", "fy_re", "fy_im", "fz_re", "fz_im"},
    "rms": {"loop_time", "rms_uncorrected", "rms_total", "rms_correction"},
    "validity": {"loop_time", "mu_end_over_pi_mod2", "valid"},
    "error": {"loop_time", "kind", "error"},
    "heatmap": {"loop_time", "radius", "encircled"},
}


def emit_plot(csv_path, kind: str, out_path) -> None:
    """Render one CSV into a standalone SVG; purely presentational."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "epbraid"

    if kind not in PLOT_REQUIREMENTS:
        raise ConfigError(f"unknown plot kind {kind!r}")
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = set(reader.fieldnames or [])
        missing = PLOT_REQUIREMENTS[kind] - header
        if missing:
            raise ConfigError(f"CSV lacks columns {sorted(missing)} for plot kind {kind!r}")
        rows = list(reader)

    def col(name, conv=float):
        return [conv(r[name]) for r in rows]

    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    if kind == "probability":
        for name, label in (("P_pp", "P++"), ("P_pm", "P+-"), ("P_mp", "P-+"), ("P_mm", "P--")):
            ax.plot(col("t"), col(name), label=label)
        ax.set_xlabel("t")
        ax.set_ylabel("population")
        ax.legend(fontsize=8)
    elif kind == "fields":
        t = col("t")
        for name in ("fx", "fy", "fz"):
            ax.plot(t, col(name + "_re"), label=name + " re")
            ax.plot(t, col(name + "_im"), "--", label=name + " im")
        ax.set_xlabel("t")
        ax.set_ylabel("field")
        ax.legend(fontsize=7, ncol=3)
    elif kind == "rms":
        t = col("loop_time")
        ax.plot(t, col("rms_uncorrected"), label="uncorrected")
        ax.plot(t, col("rms_total"), label="modified")
        ax.plot(t, col("rms_correction"), label="correction")
        ax.set_xlabel("loop time")
        ax.set_ylabel("rms amplitude")
        ax.set_yscale("log")
        ax.legend(fontsize=8)
    elif kind == "validity":
        t = col("loop_time")
        ax.step(t, col("mu_end_over_pi_mod2"), where="mid", label="mu(t0)/pi mod 2")
        ax.step(t, col("valid"), where="mid", label="valid")
        ax.set_xlabel("loop time")
        ax.legend(fontsize=8)
    elif kind == "error":
        series = {}
        for r in rows:
            key = (r["kind"], r["i"], r["j"])
            series.setdefault(key, []).append((float(r["loop_time"]), float(r["error"])))
        for key, pts in sorted(series.items()):
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], label="/".join(key))
        ax.set_xlabel("loop time")
        ax.set_ylabel("noise-averaged error")
        ax.set_yscale("log")
        ax.legend(fontsize=7)
    elif kind == "heatmap":
        xs = sorted({float(r["loop_time"]) for r in rows})
        ys = sorted({float(r["radius"]) for r in rows})
        grid = np.full((len(ys), len(xs)), np.nan)
        for r in rows:
            if r["status"] != "ok":
                continue
            xi = xs.index(float(r["loop_time"]))
            yi = ys.index(float(r["radius"]))
            grid[yi, xi] = float(r["encircled"])
        im = ax.imshow(
            grid,
            origin="lower",
            aspect="auto",
            extent=(min(xs), max(xs), min(ys), max(ys)),
            vmin=0,
            vmax=1,
        )
        fig.colorbar(im, ax=ax, label="degeneracy encircled")
        ax.set_xlabel("loop time")
        ax.set_ylabel("radius")
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epbraid",
        description="Synthesize and verify eigenvalue-braiding control protocols "
        "for a two-mode non-Hermitian system.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, needs_config=True):
        p = sub.add_parser(name, help=help_text)
        if needs_config:
            p.add_argument("--config", required=True, help="JSON run configuration")
            p.add_argument("--out", default="out", help="output directory")
            p.add_argument("--jobs", type=int, default=1, help="worker pool size for sweeps")
            p.add_argument("--seed", type=int, default=None, help="seed override")
            p.add_argument("--tol", type=float, default=None, help="integrator tolerance override")
        return p

    add("spectrum", "sheet-resolved spectrum along the configured loop")
    add("contour", "loop samples and branch-crossing bookkeeping")
    add("simulate", "integrate the configured protocol and export populations")
    p = add("correct", "synthesize a correction protocol (sweepable)")
    p.add_argument("kind", choices=["td", "satd", "radd"])
    add("validity-map", "dressed-angle validity across loop times")
    add("robustness", "noise-averaged fidelity errors across loop times")
    add("optimize-radd", "optimize the masked dressing for cheapest correction")
    add("encircle-check", "discriminant winding and strand swap/closure checks")
    add("map-optomech", "invert the configured protocol for drive schedules")
    p = add("emit-plot", "render a produced CSV as an SVG", needs_config=False)
    p.add_argument("--csv", required=True)
    p.add_argument("--kind", required=True, choices=sorted(PLOT_REQUIREMENTS))
    p.add_argument("--out", required=True, help="output SVG path")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    t_start = time.time()

    if args.command == "emit-plot":
        try:
            emit_plot(args.csv, args.kind, args.out)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        return 0

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.tol is not None:
        if not (1e-13 <= args.tol <= 1e-6):
            print("config error: tol outside [1e-13, 1e-6]", file=sys.stderr)
            return 2
        cfg.tol = args.tol
    if args.seed is not None:
        cfg.seed = args.seed

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    try:
        if args.command == "spectrum":
            outputs = cmd_spectrum(cfg, outdir)
        elif args.command == "contour":
            outputs = cmd_contour(cfg, outdir)
        elif args.command == "simulate":
            outputs = cmd_simulate(cfg, outdir)
        elif args.command == "correct":
            outputs = cmd_correct(cfg, outdir, args.kind)
        elif args.command == "validity-map":
            outputs = cmd_validity_map(cfg, outdir)
        elif args.command == "robustness":
            outputs = cmd_robustness(cfg, outdir, jobs=args.jobs)
        elif args.command == "optimize-radd":
            outputs = cmd_optimize_radd(cfg, outdir, jobs=args.jobs)
        elif args.command == "encircle-check":
            outputs = cmd_encircle_check(cfg, outdir)
        elif args.command == "map-optomech":
            outputs = cmd_map_optomech(cfg, outdir)
        else:  # pragma: no cover
            print(f"unknown command {args.command}", file=sys.stderr)
            return 2
    except InvalidDressingError as exc:
        print(f"invalid dressing: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (EpbraidError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4

    write_manifest(outdir, cfg, args.command, outputs, t_start)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
