"""Command-line front end.

    bimono simulate --preset dirac --out runs/dirac
    bimono blayer --format json
    bimono phase3 --spectral
    bimono sweep --config sweep.json

Every command takes one JSON document (``--config``) or a shipped preset
(``--preset``); ``--set key=value`` overrides single entries.  Output goes to
``--out``, else $BIMONO_OUT, else ./bimono-out.  Exit codes: 0 success, 1 a
numerical invariant was violated (diagnostics.json is written), 2 bad usage
or configuration.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from .io import write_csv, write_json

OUT_ENV = "BIMONO_OUT"


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ schema

def _num(lo=-math.inf, hi=math.inf, lo_open=False, hi_open=False, integer=False):
    def check(key, x):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {x!r}")
        if integer and int(x) != x:
            raise ConfigError(f"{key}: expected an integer, got {x!r}")
        if not math.isfinite(x):
            raise ConfigError(f"{key}: must be finite")
        if x < lo or x > hi or (lo_open and x == lo) or (hi_open and x == hi):
            raise ConfigError(f"{key}: {x!r} outside the allowed range")
        return int(x) if integer else float(x)
    return check


def _flag(key, x):
    if not isinstance(x, bool):
        raise ConfigError(f"{key}: expected true or false")
    return x


def _choice(*options):
    def check(key, x):
        if x not in options:
            raise ConfigError(f"{key}: expected one of {options}, got {x!r}")
        return x
    return check


def _num_list(lo=-math.inf, hi=math.inf, lo_open=False):
    item = _num(lo, hi, lo_open)

    def check(key, xs):
        if not isinstance(xs, list) or not xs:
            raise ConfigError(f"{key}: expected a non-empty list")
        return [item(f"{key}[{i}]", x) for i, x in enumerate(xs)]
    return check


EPS = _num(0.0, 0.1, lo_open=True, hi_open=True)

INITIAL_SCHEMA = {
    "section3": {"epsilon": EPS, "L0": _num(1.0)},
    "paper-phase1": {"v0": _num(0.0, lo_open=True), "mu": _num(0.0, lo_open=True),
                     "sigma": _num(0.0, lo_open=True), "dj": _num(0.0, 5.0, lo_open=True)},
    "dirac": {"epsilon": EPS, "a": _num(0.0, 1.0, True, True)},
    "steady": {"epsilon": EPS},
    "phase3-linear": {"epsilon": EPS, "Etilde": _num(0.0, 10.0, lo_open=True)},
}

SCHEMAS = {
    "simulate": {
        "run": {"n_cycles": _num(1, 100000, integer=True), "t_end": _num(0.0, lo_open=True),
                "phase4_duration": _num(0.0, lo_open=True), "rel_tol": _num(1e-14, 1e-6),
                "abs_tol": _num(1e-16, 1e-8), "sample_dt": _num(0.0, lo_open=True),
                "n_max": _num(2, 10 ** 6, integer=True)},
    },
    "lv": {"E": _num_list(0.0, 10.0, True), "epsilon": _num_list(0.0, 0.5, True)},
    "pde": {"epsilon_signal": _num(0.0, 0.5, True), "v0": _num(0.0, lo_open=True),
            "w0": _num(0.0, lo_open=True), "L_domain": _num(0.0, lo_open=True), "dj": _num(0.0, lo_open=True),
            "dt": _num(0.0, lo_open=True), "t_end": _num(0.0, lo_open=True), "mu": _num(0.0, lo_open=True),
            "sigma": _num(0.0, lo_open=True), "record_every": _num(1, integer=True)},
    "semigroup": {"sigma2": _num(1e-6, 1.0), "n_iter": _num(1, 100000, integer=True),
                  "x_max": _num(4.0, 60.0), "start": _choice("exp", "half-gaussian", "psi"),
                  "m0": _num(0.0, 1.0, hi_open=True)},
    "blayer": {"x_max": _num(12.0, 40.0), "panel": _num(0.05, 1.0), "order": _num(4, 32, integer=True),
               "tol": _num(1e-14, 1e-6), "max_iter": _num(1, 10 ** 6, integer=True)},
    "phase3": {"Etilde": _num(0.0, 10.0), "epsilon": _num(0.0, 0.5, True, True),
               "n_cycles": _num(1, 10000, integer=True), "full": _flag, "spectral": _flag},
    "phase4": {"start": _choice("exp", "psi"), "tau_end": _num(0.0, 1e4, lo_open=True),
               "x_max": _num(5.0, 200.0), "h": _num(1e-4, 0.5), "dt": _num(1e-5, 1.0)},
    "stability": {"theta": _num_list(0.0, 0.5, True), "N": _num(10, 5000, integer=True),
                  "verify_epsilon": _num(0.0, 0.05, lo_open=True), "n_beta": _num(8, 10 ** 5, integer=True)},
}

DEFAULTS = {
    "simulate": {"command": "simulate", "initial": {"preset": "section3"}, "run": {"n_cycles": 20}},
    "lv": {"E": [1.0], "epsilon": [0.01]},
    "pde": {"epsilon_signal": 0.0212616, "v0": 0.6, "w0": 0.6, "L_domain": 250.0, "dj": 0.5, "dt": 0.05,
            "t_end": 3000.0, "mu": 0.02, "sigma": 10.0, "record_every": 20},
    "semigroup": {"sigma2": 1e-3, "n_iter": 200, "x_max": 24.0, "start": "exp", "m0": 0.0},
    "blayer": {"x_max": 12.0, "panel": 0.5, "order": 16, "tol": 1e-10, "max_iter": 20000},
    "phase3": {"Etilde": 1e-3, "epsilon": 0.01, "n_cycles": 20, "full": True, "spectral": False},
    "phase4": {"start": "psi", "tau_end": 20.0, "x_max": 40.0, "h": 0.02, "dt": 0.01},
    "stability": {"theta": [1e-4, 2e-4, 1e-3], "N": 200, "n_beta": 1024},
}

COMMANDS = tuple(SCHEMAS) + ("sweep",)


def validate(command: str, cfg: dict) -> dict:
    """Fill defaults and check every entry; raises ConfigError."""
    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a JSON object")
    cfg = copy.deepcopy(cfg)
    given = cfg.pop("command", command)
    if given != command:
        raise ConfigError(f"configuration is for {given!r}, not {command!r}")
    if command == "simulate":
        return _validate_simulate(cfg)
    schema = SCHEMAS[command]
    out = dict(DEFAULTS[command])
    for key, value in cfg.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for {command}")
        out[key] = schema[key](key, value)
    return out


def _validate_simulate(cfg: dict) -> dict:
    unknown = set(cfg) - {"initial", "run"}
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} for simulate")
    initial = cfg.get("initial", DEFAULTS["simulate"]["initial"])
    if not isinstance(initial, dict) or "preset" not in initial:
        raise ConfigError("initial must be an object with a 'preset' entry")
    name = initial["preset"]
    if name not in INITIAL_SCHEMA:
        raise ConfigError(f"unknown initial preset {name!r}; choose from {sorted(INITIAL_SCHEMA)}")
    opts = {}
    for key, value in initial.items():
        if key == "preset":
            continue
        if key not in INITIAL_SCHEMA[name]:
            raise ConfigError(f"unknown option {key!r} for initial preset {name!r}")
        opts[key] = INITIAL_SCHEMA[name][key](f"initial.{key}", value)
    run = cfg.get("run", DEFAULTS["simulate"]["run"])
    if not isinstance(run, dict):
        raise ConfigError("run must be an object")
    run_out = {}
    for key, value in run.items():
        if key not in SCHEMAS["simulate"]["run"]:
            raise ConfigError(f"unknown key run.{key}")
        run_out[key] = SCHEMAS["simulate"]["run"][key](f"run.{key}", value)
    if not {"n_cycles", "t_end", "phase4_duration"} & set(run_out):
        raise ConfigError("run needs n_cycles, t_end or phase4_duration")
    return {"initial": {"preset": name, **opts}, "run": run_out}


# ------------------------------------------------------------------ config loading

def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("bimono.presets").iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("bimono.presets") / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(path.read_text())


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_override(cfg: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, text = item.split("=", 1)
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {p} is not an object")
    node[parts[-1]] = _parse_value(text)


def build_config(command: str, config_path: str | None, preset: str | None, overrides) -> dict:
    if config_path and preset:
        raise ConfigError("give either --config or --preset, not both")
    if config_path:
        try:
            cfg = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from None
    elif preset:
        cfg = load_preset(preset)
    else:
        cfg = DEFAULTS["simulate"] if command == "simulate" else {}
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        _apply_override(cfg, item)
    if command == "sweep":
        return _validate_sweep(cfg)
    return validate(command, cfg)


def _validate_sweep(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("sweep configuration must be a JSON object")
    command = cfg.get("sweep_command")
    if command not in SCHEMAS:
        raise ConfigError(f"sweep_command must be one of {sorted(SCHEMAS)}")
    base = cfg.get("base", {})
    vary = cfg.get("vary")
    if not isinstance(vary, dict) or not vary:
        raise ConfigError("vary must map dotted keys to lists of values")
    lengths = {len(v) for v in vary.values() if isinstance(v, list)}
    if len(lengths) != 1 or not all(isinstance(v, list) for v in vary.values()):
        raise ConfigError("all vary lists must have the same length")
    workers = cfg.get("workers", 1)
    _num(1, 64, integer=True)("workers", workers)
    runs = []
    for k in range(lengths.pop()):
        c = copy.deepcopy(base)
        for key, values in vary.items():
            _apply_override(c, f"{key}={json.dumps(values[k])}")
        runs.append(validate(command, c))
    return {"sweep_command": command, "runs": runs, "workers": int(workers)}


# ------------------------------------------------------------------ commands

class InvariantBreach(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


def cmd_simulate(cfg: dict, out: Path, fmt: str) -> dict:
    from .bdsim import CYCLE_COLUMNS, FullRun, classify_phases, initial_state, run_full
    from .core import SystemParams
    from .integrate import StepperConfig

    init = dict(cfg["initial"])
    run_cfg = dict(cfg["run"])
    try:
        params, state = initial_state(init.pop("preset"), **init)
    except ValueError as exc:
        raise ConfigError(f"initial: {exc}") from None
    if "n_max" in run_cfg:
        n = run_cfg.pop("n_max")
        if n < params.n_max:
            raise ConfigError(f"run.n_max must be at least {params.n_max} for this initial state")
        c = np.concatenate([state.c, np.zeros(n - params.n_max)])
        params = SystemParams(params.epsilon, total_mass=params.total_mass, n_max=n)
        state = type(state)(state.t, state.v, state.w, c)
    step_cfg = StepperConfig(abs_tol=run_cfg.pop("abs_tol", 1e-13), rel_tol=run_cfg.pop("rel_tol", 1e-11))
    run = run_full(params, state, cfg=step_cfg, **run_cfg)
    report = classify_phases(run.cycles, run.epsilon).as_dict() if len(run.cycles) >= 3 else None
    summary = {"config": cfg, "summary": run.summary(), "phases": report,
               "conservation_ok": run.conservation_ok()}
    cycles = [[getattr(c, k) for k in CYCLE_COLUMNS] for c in run.cycles]
    if fmt == "csv":
        write_csv(out / "cycles.csv", CYCLE_COLUMNS, cycles)
        write_csv(out / "trajectory.csv", FullRun.SAMPLE_COLUMNS, run.samples.tolist())
        if len(run.phase4_trace):
            write_csv(out / "phase4.csv", ("t", "l1_to_steady"), run.phase4_trace.tolist())
        write_json(out / "phases.json", summary)
    else:
        summary["cycles"] = [dict(zip(CYCLE_COLUMNS, row)) for row in cycles]
        summary["trajectory"] = {k: run.samples[:, i] for i, k in enumerate(FullRun.SAMPLE_COLUMNS)} \
            if len(run.samples) else {}
        write_json(out / "simulate.json", summary)
    if not run.conservation_ok():
        raise InvariantBreach("conservation tolerance exceeded", run.summary())
    return summary


def cmd_lv(cfg: dict, out: Path, fmt: str) -> dict:
    from .lv import CSV_COLUMNS, solve_cycle, stage_ratios

    records, ratios = [], []
    for eps in cfg["epsilon"]:
        for E in cfg["E"]:
            rec = solve_cycle(E, eps)
            records.append(rec)
            ratios.append({"E": E, "epsilon": eps, **stage_ratios(rec)})
    rows = [[r.row()[k] for k in CSV_COLUMNS] for r in records]
    result = {"config": cfg, "stage_ratios": ratios}
    if fmt == "csv":
        write_csv(out / "lv_cycles.csv", CSV_COLUMNS, rows)
    else:
        result["cycles"] = [dict(zip(CSV_COLUMNS, row)) for row in rows]
    write_json(out / "lv.json", result)
    return result


def cmd_pde(cfg: dict, out: Path, fmt: str) -> dict:
    from .pde import Grid1D, LVSignal, gaussian_profile, run_coupled

    grid = Grid1D(cfg["L_domain"], cfg["dj"], cfg["dt"])
    signal = LVSignal(cfg["epsilon_signal"], cfg["v0"], cfg["w0"], cfg["t_end"] + 10 * cfg["dt"])
    c0 = gaussian_profile(grid, cfg["mu"], cfg["sigma"])
    run = run_coupled(c0, signal, cfg["t_end"], grid, record_every=cfg["record_every"])
    result = {"config": cfg, "diagnostics": run.diagnostics()}
    cols = ("t", "eps", "moment", "growth", "transport", "min_value")
    rows = np.column_stack([run.times, run.eps, run.moment, run.growth, run.transport, run.undershoot])
    if fmt == "csv":
        write_csv(out / "pde.csv", cols, rows.tolist())
    else:
        result["series"] = {k: rows[:, i] for i, k in enumerate(cols)}
    write_json(out / "pde.json", result)
    if run.max_conservation_error > 1e-10:
        raise InvariantBreach("cluster number drifted", run.diagnostics())
    return result


def cmd_semigroup(cfg: dict, out: Path, fmt: str) -> dict:
    from .semigroup import ClusterProfile, PanelGrid, grid_for, iterate_profile, l1_distance, psi_fixed_point

    s2 = cfg["sigma2"]
    g = grid_for(s2, x_max=cfg["x_max"])
    grid = PanelGrid(x_max=g.x_max, panel=g.panel, order=g.order)
    if cfg["start"] == "exp":
        prof = ClusterProfile.from_function(lambda x: np.exp(-x), grid=grid)
    elif cfg["start"] == "psi":
        prof = ClusterProfile.from_function(psi_fixed_point, grid=grid)
    else:
        prof = ClusterProfile.half_gaussian(cfg["m0"], grid=grid)
    trace = []
    for n in range(cfg["n_iter"]):
        prof = iterate_profile(prof, s2)
        trace.append((n + 1, prof.m, l1_distance(prof), prof.L))
    cols = ("iteration", "m", "l1_to_psi", "L")
    result = {"config": cfg, "final_l1_to_psi": trace[-1][2], "final_m": prof.m, "length_ratio": prof.L}
    if fmt == "csv":
        write_csv(out / "semigroup.csv", cols, trace)
        write_csv(out / "profile.csv", ("x", "psi"), np.column_stack([prof.x, prof.psi]).tolist())
    else:
        result["trace"] = [dict(zip(cols, row)) for row in trace]
        result["profile"] = {"x": prof.x, "psi": prof.psi}
    write_json(out / "semigroup.json", result)
    return result


def cmd_blayer(cfg: dict, out: Path, fmt: str) -> dict:
    from .blayer import FAR_FIELD, a_terms, solve_stationary

    layer = solve_stationary(cfg["x_max"], cfg["panel"], cfg["order"], cfg["tol"], cfg["max_iter"])
    smooth, dirac = a_terms(layer.U, layer.M, layer.grid)
    result = {"config": cfg, "A": smooth + dirac, "A_smooth": smooth, "A_dirac": dirac, "M": layer.M,
              "U_at_xi_max": layer.U_far, "far_field": FAR_FIELD,
              "far_field_error": abs(layer.U_far - FAR_FIELD), "residual_U": layer.residual_U,
              "residual_M": layer.residual_M, "iterations": layer.iterations}
    if fmt == "csv":
        write_csv(out / "blayer.csv", ("xi", "U"), np.column_stack([layer.xi, layer.U]).tolist())
    else:
        result["profile"] = {"xi": layer.xi, "U": layer.U}
    write_json(out / "blayer.json", result)
    return result


def cmd_phase3(cfg: dict, out: Path, fmt: str) -> dict:
    from .phase34 import fit_decay_per_cycle, run_phase3_cycle, spectral_constants

    const = spectral_constants()
    result = {"config": cfg}
    if cfg["spectral"]:
        result["spectral"] = const.as_dict()
    run = run_phase3_cycle(cfg["Etilde"], cfg["epsilon"], n_cycles=cfg["n_cycles"], full=cfg["full"])
    rows = run.rows()
    cols = tuple(rows[0])
    eps = cfg["epsilon"]
    if cfg["Etilde"] > 0 and cfg["n_cycles"] >= 3:
        # slopes of log E per cycle; the prediction is -a eps
        result["model_log_slope"] = fit_decay_per_cycle(run.E_model)
        result["predicted_log_slope"] = -const.a * eps
        if run.E_full is not None and len(run.E_full) >= 3:
            result["full_log_slope"] = fit_decay_per_cycle(run.E_full)
    if fmt == "csv":
        write_csv(out / "phase3.csv", cols, [[r[k] for k in cols] for r in rows])
    else:
        result["cycles"] = rows
    write_json(out / "phase3.json", result)
    return result


def cmd_phase4(cfg: dict, out: Path, fmt: str) -> dict:
    from .phase34 import run_phase4
    from .semigroup import psi_fixed_point

    start = (lambda x: np.exp(-x)) if cfg["start"] == "exp" else psi_fixed_point
    run = run_phase4(start, cfg["tau_end"], x_max=cfg["x_max"], h=cfg["h"], dt=cfg["dt"])
    cols = ("tau", "boundary", "mass", "moment", "l1_to_exp")
    rows = np.column_stack([run.times, run.boundary, run.mass, run.moment, run.l1_to_exp])
    result = {"config": cfg, "final_l1_to_exp": float(run.l1_to_exp[-1]),
              "final_boundary": float(run.boundary[-1]), "max_mass_step_error": run.max_mass_step_error}
    if fmt == "csv":
        write_csv(out / "phase4.csv", cols, rows.tolist())
    else:
        result["series"] = {k: rows[:, i] for i, k in enumerate(cols)}
    write_json(out / "phase4.json", result)
    if run.max_mass_step_error > 1e-8:
        raise InvariantBreach("mass not conserved", result)
    return result


def cmd_stability(cfg: dict, out: Path, fmt: str) -> dict:
    from .stability import eigen_residual, first_order_abscissa, linearized_spectrum, verify_damping_timescale

    spec = linearized_spectrum(cfg["n_beta"])
    result = {"config": cfg, "lambda1": spec.lambda1, "re_lambda1": spec.lambda1.real,
              "r": spec.r, "r_abs": abs(spec.r),
              "band_min": float(spec.continuous_band.min()), "band_max": float(spec.continuous_band.max()),
              "eigen_checks": [eigen_residual(t, cfg["N"]) for t in cfg["theta"]],
              "first_order_abscissa": [first_order_abscissa(t, cfg["n_beta"]) for t in cfg["theta"]]}
    if "verify_epsilon" in cfg:
        rep = verify_damping_timescale(cfg["verify_epsilon"])
        result["damping"] = {"epsilon": rep.epsilon, "frequency": rep.frequency, "decay_rate": rep.decay_rate,
                             "predicted_rate": rep.predicted_rate, "decay_time": rep.decay_time,
                             "decay_time_times_eps2": rep.decay_time_over_inv_eps2}
    write_json(out / "stability.json", result)
    if fmt == "csv":
        rows = [[e["theta"], e["eigenvalue"].real, e["eigenvalue"].imag, e["prediction"].real,
                 e["prediction"].imag, e["eig_error"]] for e in result["eigen_checks"]]
        write_csv(out / "stability.csv", ("theta", "eig_re", "eig_im", "pred_re", "pred_im", "eig_error"), rows)
    if not spec.lambda1.real < 0:
        raise InvariantBreach("first-order correction does not damp", {"lambda1": spec.lambda1})
    return result


HANDLERS = {
    "simulate": cmd_simulate, "lv": cmd_lv, "pde": cmd_pde, "semigroup": cmd_semigroup,
    "blayer": cmd_blayer, "phase3": cmd_phase3, "phase4": cmd_phase4, "stability": cmd_stability,
}


def _run_one(args) -> tuple[int, str]:
    command, cfg, out, fmt = args
    try:
        HANDLERS[command](cfg, Path(out), fmt)
        return 0, ""
    except ConfigError as exc:
        return 2, str(exc)
    except InvariantBreach as exc:
        write_json(Path(out) / "diagnostics.json", {"error": str(exc), **exc.diagnostics})
        return 1, str(exc)


def cmd_sweep(cfg: dict, out: Path, fmt: str) -> dict:
    jobs = [(cfg["sweep_command"], run, str(out / f"run-{k:03d}"), fmt) for k, run in enumerate(cfg["runs"])]
    if cfg["workers"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    summary = {"sweep_command": cfg["sweep_command"],
               "runs": [{"dir": j[2], "config": j[1], "exit": r[0], "error": r[1]} for j, r in zip(jobs, results)]}
    write_json(out / "sweep.json", summary)
    if any(r[0] for r in results):
        raise InvariantBreach("at least one run violated an invariant", {"failed": [
            j[2] for j, r in zip(jobs, results) if r[0]]})
    return summary


# ------------------------------------------------------------------ entry point

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bimono", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--preset", help="shipped configuration (see `bimono presets`)")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./bimono-out)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config entry")
        if name == "phase3":
            p.add_argument("--spectral", action="store_true", help="report r_-, K0 and a")
        if name == "stability":
            p.add_argument("--verify", type=float, metavar="EPS", help="also run the full-system damping check")
    sub.add_parser("presets", help="list shipped presets")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "presets":
        for name in preset_names():
            print(name)
        return 0
    overrides = list(args.set or [])
    if getattr(args, "spectral", False):
        overrides.append("spectral=true")
    if getattr(args, "verify", None) is not None:
        overrides.append(f"verify_epsilon={args.verify!r}")
    try:
        cfg = build_config(args.command, args.config, args.preset, overrides)
    except ConfigError as exc:
        print(f"bimono {args.command}: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out or os.environ.get(OUT_ENV) or "bimono-out")
    if args.command == "sweep":
        try:
            cmd_sweep(cfg, out, args.format)
        except InvariantBreach as exc:
            print(f"bimono sweep: {exc}", file=sys.stderr)
            return 1
        return 0
    code, msg = _run_one((args.command, cfg, str(out), args.format))
    if code:
        print(f"bimono {args.command}: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
