"""Batch front end: ``robinfb --config run.json --out results/``.

Modes: ``solve1d``, ``sweep1d``, ``solve2d``, ``sweep2d`` and ``diagnose``.
Exit status is 0 on success, 2 for configuration errors, 3 for solver
errors and 4 for I/O errors; failures print a JSON error document.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import jsonschema
import numpy as np

from . import diagnostics as diag
from . import solver1d
from .core import GeometryError, ProblemSpec, face_pairs, phase_of
from .energy import CSV_HEADER, total_energy
from .serialize import label_raster, load_state, save_state, u_raster, write_csv, write_pgm
from .solver2d import SolverError, SolverParams, continuation, support_touches_margin

__all__ = ["config_schema", "run", "main", "ConfigError", "EXIT_CONFIG", "EXIT_SOLVER", "EXIT_IO"]

EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

log = logging.getLogger("robinfb")

_NUM = {"type": "number"}
_DISK = {
    "type": "object",
    "required": ["type", "center", "radius"],
    "properties": {
        "type": {"const": "disk"},
        "center": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "radius": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}
_RECT = {
    "type": "object",
    "required": ["type", "corner", "extents"],
    "properties": {
        "type": {"enum": ["rect", "rectangle"]},
        "corner": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "extents": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2, "maxItems": 2},
    },
    "additionalProperties": False,
}
_RANGE = {
    "oneOf": [
        {"type": "array", "items": _NUM, "minItems": 1},
        {
            "type": "object",
            "required": ["start", "stop", "step"],
            "properties": {"start": _NUM, "stop": _NUM, "step": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False,
        },
    ]
}

_DIAG_NAMES = [
    "free_boundary",
    "robin",
    "weiss",
    "blowup",
    "density",
    "holder",
    "noncollapse",
    "contact",
    "minimality",
    "flatten",
]


def config_schema() -> dict:
    """JSON schema of run configurations, with defaults."""
    d = SolverParams()
    return {
        "$schema": "http://json-schema.org/draft-07/schema#",
        "title": "robinfb run configuration",
        "type": "object",
        "required": ["mode"],
        "properties": {
            "mode": {"enum": ["solve1d", "sweep1d", "solve2d", "sweep2d", "diagnose"]},
            "out_dir": {"type": "string", "default": "out"},
            "spec": {
                "type": "object",
                "required": ["shapes_E1"],
                "properties": {
                    "box": {"type": "array", "items": _NUM, "minItems": 4, "maxItems": 4, "default": [0, 0, 1, 1]},
                    "resolution": {"type": "integer", "minimum": 8, "default": 64},
                    "shapes_E1": {"type": "array", "items": {"oneOf": [_DISK, _RECT]}},
                    "shapes_E2": {"type": "array", "items": {"oneOf": [_DISK, _RECT]}, "default": []},
                    "beta": {"type": "number", "minimum": 0, "default": 1.0},
                    "lambda": {"type": "number", "exclusiveMinimum": 0, "default": 1.0},
                    "g_value": {"type": "number", "exclusiveMinimum": 0, "default": 1.0},
                    "one_phase_mode": {"type": "boolean", "default": False},
                    "strip": {"type": "boolean", "default": False},
                },
                "additionalProperties": False,
            },
            "params": {
                "type": "object",
                "properties": {
                    "eps0": {"type": "number", "exclusiveMinimum": 0, "default": d.eps0},
                    "eps_factor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1, "default": d.eps_factor},
                    "eps_steps": {"type": "integer", "minimum": 1, "default": d.eps_steps},
                    "u_tol": {"type": "number", "exclusiveMinimum": 0, "default": d.u_tol},
                    "max_sweeps": {"type": "integer", "minimum": 1, "default": d.max_sweeps},
                    "seed": {"type": "integer", "default": d.seed},
                    "anneal": {"type": "boolean", "default": d.anneal},
                    "temperature": {"type": "number", "minimum": 0, "default": d.temperature},
                    "r_init": {"type": ["number", "null"], "default": d.r_init},
                    "init": {"enum": ["both", "nearest", "bridged"], "default": d.init},
                    "front_tol": {"type": "number", "minimum": 0, "default": d.front_tol},
                    "u_floor": {"type": "number", "minimum": 0, "default": d.u_floor},
                    "coarse_levels": {"type": "integer", "minimum": 0, "default": d.coarse_levels},
                },
                "additionalProperties": False,
            },
            "oned": {
                "type": "object",
                "properties": {
                    "beta": {"type": "number", "exclusiveMinimum": 0},
                    "eps": {"type": "number", "minimum": 0},
                    "betas": _RANGE,
                    "epss": _RANGE,
                    "n": {"type": "integer", "minimum": 64, "default": 4096},
                    "numeric": {"type": "boolean", "default": False},
                },
                "additionalProperties": False,
            },
            "sweep": {
                "type": "object",
                "required": ["param", "values"],
                "properties": {
                    "param": {"enum": ["beta", "lambda", "g_value", "resolution"]},
                    "values": _RANGE,
                },
                "additionalProperties": False,
            },
            "diagnostics": {
                "type": "object",
                "properties": {
                    "state": {"type": "string"},
                    "enable": {"type": "array", "items": {"enum": _DIAG_NAMES}, "default": _DIAG_NAMES},
                    "eps": {"type": "number", "minimum": 0, "default": 0.0},
                    "n_points": {"type": "integer", "minimum": 1, "default": 8},
                    "radii_cells": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 3, "default": [32, 16, 8]},
                    "holder_delta": {"type": "number", "exclusiveMinimum": 0, "default": 0.05},
                    "holder_exponent": {"type": "number", "exclusiveMinimum": 0, "maximum": 1, "default": 1.0 / 3.0},
                    "noncollapse_delta_cells": {"type": "number", "exclusiveMinimum": 0, "default": 2},
                    "window": {"type": "integer", "minimum": 2, "default": 8},
                    "n_windows": {"type": "integer", "minimum": 1, "default": 100},
                    "flatten_center": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                    "flatten_radius_cells": {"type": "number", "exclusiveMinimum": 0, "default": 16},
                    "seed": {"type": "integer", "default": 0},
                    "snap_points": {"type": "boolean", "default": True},
                },
                "additionalProperties": False,
            },
        },
        "additionalProperties": False,
        "allOf": [
            {"if": {"properties": {"mode": {"enum": ["solve2d", "sweep2d", "diagnose"]}}}, "then": {"required": ["spec"]}},
            {"if": {"properties": {"mode": {"const": "sweep2d"}}}, "then": {"required": ["sweep"]}},
            {"if": {"properties": {"mode": {"const": "solve1d"}}}, "then": {"required": ["oned"], "properties": {"oned": {"required": ["beta", "eps"]}}}},
            {"if": {"properties": {"mode": {"const": "sweep1d"}}}, "then": {"required": ["oned"], "properties": {"oned": {"required": ["betas", "epss"]}}}},
        ],
    }


class ConfigError(ValueError):
    def __init__(self, msg, field=None):
        super().__init__(msg)
        self.field = field


def _expand(r):
    if isinstance(r, list):
        return [float(v) for v in r]
    start, stop, step = float(r["start"]), float(r["stop"]), float(r["step"])
    if stop < start:
        raise ConfigError("range stop is below start", "range")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + k * step for k in range(n)]


def load_config(path) -> dict:
    with open(path) as fh:
        text = fh.read()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg}", f"<document>:{exc.lineno}:{exc.colno}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg) -> None:
    v = jsonschema.Draft7Validator(config_schema())
    errs = sorted(v.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errs:
        e = errs[0]
        field = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(e.message, field)


def _spec_from(cfg) -> ProblemSpec:
    spec = ProblemSpec.from_dict(cfg["spec"])
    try:
        spec.check()
    except GeometryError as exc:
        raise ConfigError(str(exc), "spec") from exc
    return spec


def _params_from(cfg) -> SolverParams:
    try:
        return SolverParams.from_dict(cfg.get("params", {}))
    except ValueError as exc:
        raise ConfigError(str(exc), "params") from exc


def _run_solve1d(cfg, out):
    o = cfg["oned"]
    rows = solver1d.sweep_rows([o["beta"]], [o["eps"]])
    write_csv(os.path.join(out, "summary.csv"), solver1d.SWEEP_COLUMNS, [[r[c] for c in solver1d.SWEEP_COLUMNS] for r in rows])
    if o.get("numeric", False):
        e, ell, tag = solver1d.solve_1d_numeric(o["beta"], o["eps"], o.get("n", 4096))
        write_csv(os.path.join(out, "numeric.csv"), ["beta", "eps", "n", "energy", "ell_hat", "winner"], [[o["beta"], o["eps"], o.get("n", 4096), e, ell, tag]])


def _run_sweep1d(cfg, out):
    o = cfg["oned"]
    betas = _expand(o["betas"])
    epss = _expand(o["epss"])
    if any(b <= 0 for b in betas):
        raise ConfigError("betas must be > 0", "oned/betas")
    rows = solver1d.sweep_rows(betas, epss)
    write_csv(os.path.join(out, "sweep1d.csv"), solver1d.SWEEP_COLUMNS, [[r[c] for c in solver1d.SWEEP_COLUMNS] for r in rows])
    write_csv(
        os.path.join(out, "threshold.csv"),
        ["beta", "eps0", "eps0_closed_form"],
        [[b, solver1d.interface_threshold(b), solver1d.threshold_closed_form(b)] for b in betas],
    )


def _write_solution(out, spec, state, trace, eps_final):
    save_state(os.path.join(out, "state.json"), state, spec)
    trace.to_csv(os.path.join(out, "trace.csv"))
    e = total_energy(state, spec.beta, spec.lam, eps_final)
    write_csv(os.path.join(out, "energy.csv"), CSV_HEADER, [e.csv_row()])
    write_pgm(os.path.join(out, "u.pgm"), u_raster(state))
    write_pgm(os.path.join(out, "labels.pgm"), label_raster(state))


def _run_solve2d(cfg, out):
    spec = _spec_from(cfg)
    params = _params_from(cfg)
    state, trace = continuation(spec, params)
    _write_solution(out, spec, state, trace, params.schedule()[-1])
    return state


def _sweep2d_point(args):
    spec_dict, params_dict, param, value = args
    d = copy.deepcopy(spec_dict)
    d[param] = int(value) if param == "resolution" else value
    spec = ProblemSpec.from_dict(d)
    params = SolverParams.from_dict(params_dict)
    state, trace = continuation(spec, params)
    eps = params.schedule()[-1]
    e = total_energy(state, spec.beta, spec.lam, eps)
    p = phase_of(state.labels).ravel()
    a, b, _ = face_pairs(state.grid)
    n_if = int(np.count_nonzero((p[a] * p[b]) == 2))
    return [value] + e.csv_row() + [n_if, "bridged" if n_if else "disjoint"]


def _run_sweep2d(cfg, out, workers):
    spec = _spec_from(cfg)
    _params_from(cfg)
    sw = cfg["sweep"]
    values = _expand(sw["values"])
    jobs = [(spec.to_dict(), cfg.get("params", {}), sw["param"], v) for v in values]
    for _, _, param, v in jobs:
        d = spec.to_dict()
        d[param] = int(v) if param == "resolution" else v
        try:
            ProblemSpec.from_dict(d).check()
        except GeometryError as exc:
            raise ConfigError(f"{param}={v}: {exc}", "sweep/values") from exc
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep2d_point, jobs))
    else:
        rows = [_sweep2d_point(j) for j in jobs]
    rows.sort(key=lambda r: values.index(r[0]))
    write_csv(os.path.join(out, "sweep2d.csv"), [sw["param"]] + CSV_HEADER + ["interface_faces", "configuration"], rows)


def run_diagnostics(state, spec: ProblemSpec, opts: dict) -> diag.DiagnosticsReport:
    """Evaluate the enabled diagnostics on ``state``."""
    enable = set(opts.get("enable", _DIAG_NAMES))
    lam, beta = spec.lam, spec.beta
    h = state.grid.h
    rep = diag.DiagnosticsReport()
    radii = [float(r) * h for r in opts.get("radii_cells", [32, 16, 8])]
    rng = np.random.default_rng(opts.get("seed", 0))
    pts = diag.free_boundary_points(state, margin=max(radii) + 2 * h, snap=opts.get("snap_points", True))
    npts = min(int(opts.get("n_points", 8)), len(pts))
    sample = pts[np.sort(rng.choice(len(pts), npts, replace=False))] if npts else pts[:0]

    if "free_boundary" in enable:
        rep.fb_residuals = diag.free_boundary_residual(state, lam).tolist()
    if "robin" in enable:
        rep.robin_residuals = diag.robin_residual(state, beta).tolist()
    if "weiss" in enable:
        fits = []
        for x0 in sample:
            c0, gamma, viol, W = diag.weiss_decay_fit(state, x0, radii, lam)
            rep.weiss.extend([(x0[0], x0[1], r, w) for r, w in zip(radii, W)])
            fits.append({"x": x0[0], "y": x0[1], "C0": c0, "gamma": gamma, "max_violation": viol})
        rep.weiss_fit = {"theta": diag.theta(lam), "points": fits}
    if "blowup" in enable:
        for x0 in sample:
            for r in radii:
                nu, err = diag.blow_up_error(state, x0, r, lam)
                rep.blowup_errors.append((x0[0], x0[1], r, nu[0], nu[1], err))
    if "density" in enable and len(sample):
        dens, grow, summary = diag.density_and_growth(state, lam, points=sample, radii=radii)
        rep.density_quotients, rep.growth, rep.growth_summary = dens, grow, summary
    if "holder" in enable:
        rep.holder_seminorm = diag.holder_seminorm(state, opts.get("holder_delta", 0.05), opts.get("holder_exponent", 1.0 / 3.0), seed=opts.get("seed", 0))
    if "noncollapse" in enable:
        rep.noncollapse_min = diag.non_collapsing_check(state, opts.get("noncollapse_delta_cells", 2) * h)
    if "contact" in enable:
        rep.contact_angles = diag.contact_angle(state)
    if "minimality" in enable:
        rep.interface_minimality = diag.interface_local_minimality_check(
            state, beta, opts.get("eps", 0.0), opts.get("window", 8), opts.get("n_windows", 100), opts.get("seed", 0)
        )
    if "flatten" in enable and "flatten_center" in opts:
        res = diag.conformal_flatten(state, tuple(opts["flatten_center"]), opts.get("flatten_radius_cells", 16) * h)
        rep.flatten_residual = res.identity_residual
    return rep


def _run_diagnose(cfg, out):
    spec = _spec_from(cfg)
    opts = dict(cfg.get("diagnostics", {}))
    if "state" in opts:
        state = load_state(opts["state"])
    else:
        params = _params_from(cfg)
        state, trace = continuation(spec, params)
        opts.setdefault("eps", params.schedule()[-1])
        _write_solution(out, spec, state, trace, params.schedule()[-1])
    rep = run_diagnostics(state, spec, opts)
    rep.to_json(os.path.join(out, "report.json"))
    rep.write_csvs(out)
    if not spec.strip and support_touches_margin(state):
        log.warning("positivity set reaches the margin ring")


def run(cfg: dict, out_dir: str | None = None, workers: int = 1) -> None:
    """Execute a validated configuration, writing artifacts to ``out_dir``."""
    validate_config(cfg)
    out = out_dir or cfg.get("out_dir", "out")
    os.makedirs(out, exist_ok=True)
    mode = cfg["mode"]
    if mode == "solve1d":
        _run_solve1d(cfg, out)
    elif mode == "sweep1d":
        _run_sweep1d(cfg, out)
    elif mode == "solve2d":
        _run_solve2d(cfg, out)
    elif mode == "sweep2d":
        _run_sweep2d(cfg, out, workers)
    else:
        _run_diagnose(cfg, out)


def _fail(code, kind, msg, field=None):
    doc = {"error": kind, "message": msg, "exit_code": code}
    if field is not None:
        doc["field"] = field
    print(json.dumps(doc, sort_keys=True))
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="robinfb", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="run configuration (JSON)")
    ap.add_argument("--out", help="output directory (overrides out_dir)")
    ap.add_argument("--workers", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--print-schema", action="store_true", help="print the configuration schema and exit")
    args = ap.parse_args(argv)
    logging.basicConfig(level=os.environ.get("ROBINFB_LOG_LEVEL", "WARNING").upper())

    if args.print_schema:
        print(json.dumps(config_schema(), indent=2))
        return 0
    if not args.config:
        return _fail(EXIT_CONFIG, "config", "--config is required", "--config")
    if args.workers < 1:
        return _fail(EXIT_CONFIG, "config", "--workers must be >= 1", "--workers")
    try:
        cfg = load_config(args.config)
        run(cfg, args.out, args.workers)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc), exc.field)
    except GeometryError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc), "spec")
    except SolverError as exc:
        return _fail(EXIT_SOLVER, "solver", str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, "io", str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
