"""Command-line front end: run scenarios from JSON configs, emit CSV traces.

Three subcommands:

``smio simulate --config cfg.json --out trace.csv``
    Run the full estimation pipeline on a configured scenario and write the
    trace as CSV plus a JSON summary next to it.

``smio analyze --config cfg.json [--rx X --ry Y]``
    Offline mode-distinguishability certificates for the configured mode
    family.  Condition (ii) needs no extra data; supplying both trajectory
    bounds also evaluates condition (i).

``smio benchmark``
    The built-in five-mode benchmark scenario with its persistent sparse
    attack, written to a default location.

Exit codes are stable: 0 ok; 1 usage; 2 bad config; 3 every mode hypothesis
eliminated mid-run; 4 detectability not certified.  Floats in the CSV are
printed with 17 significant digits so a parsed trace reproduces the recorded
thresholds and elimination flags bit-for-bit, and the same config and seed
always produce byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from .decomposition import (
    DecompositionError,
    decompose_mode,
    error_dynamics,
    synthesize_gains,
)
from .model import (
    AttackSignal,
    ModelError,
    ModeHypothesis,
    SystemModel,
    check_strong_detectability,
    enumerate_modes,
    validate,
)
from .modeguard import detectability_report
from .sim import (
    RunTrace,
    ScenarioConfig,
    SimulationError,
    benchmark_scenario,
    run_pipeline,
    sinusoid_attack,
)

__all__ = [
    "ConfigError",
    "load_scenario",
    "write_trace_csv",
    "write_summary",
    "cmd_simulate",
    "cmd_analyze",
    "cmd_benchmark",
    "main",
]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_FAULT = 3
EXIT_NOT_CERTIFIED = 4


class ConfigError(ValueError):
    """The scenario config file cannot be used as given."""


# --------------------------------------------------------------- config file

_TOP_KEYS = {"model", "modes", "scenario", "attack", "tuning"}
_MODEL_KEYS = {"A", "B", "C", "D", "G", "H", "eta_w", "eta_v", "delta_x0"}
_MODES_KEYS = {"t_a", "t_s", "rho"}
_SCENARIO_KEYS = {"true_mode", "horizon", "seed", "xhat0", "x0", "known_input"}
_ATTACK_KEYS = {"kind", "amplitude", "bias", "values"}
_TUNING_KEYS = {"k_inf_cutoff", "enum_budget", "R_x", "R_y"}


def _reject_unknown(block: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(block) - allowed)
    if unknown:
        names = ", ".join(repr(k) for k in unknown)
        raise ConfigError(
            f"unknown key {names} in {where} (allowed: {', '.join(sorted(allowed))})"
        )


def _require_dict(doc: dict, key: str, required: bool) -> dict | None:
    block = doc.get(key)
    if block is None:
        if required:
            raise ConfigError(f"config is missing the required '{key}' block")
        return None
    if not isinstance(block, dict):
        raise ConfigError(f"'{key}' must be an object, got {type(block).__name__}")
    return block


def _matrix(block: dict, key: str, where: str) -> np.ndarray:
    if key not in block:
        raise ConfigError(f"{where} is missing required matrix '{key}'")
    try:
        arr = np.array(block[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key} is not a numeric matrix: {exc}") from exc
    if arr.ndim != 2:
        raise ConfigError(f"{where}.{key} must be a 2-D matrix, got shape {arr.shape}")
    return arr


def _number(block: dict, key: str, where: str, default=None):
    if key not in block or block[key] is None:
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    return float(value)


def _integer(block: dict, key: str, where: str, default=None):
    if key not in block or block[key] is None:
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {value!r}")
    return value


def load_config_document(path) -> dict:
    """Parse the JSON config file, rejecting unknown top-level keys."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path} is not valid JSON: line {exc.lineno}, "
            f"column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must hold a JSON object at top level")
    _reject_unknown(doc, _TOP_KEYS, "the top-level config")
    return doc


def _build_model(doc: dict) -> SystemModel:
    block = _require_dict(doc, "model", required=True)
    _reject_unknown(block, _MODEL_KEYS, "the 'model' block")
    mats = {key: _matrix(block, key, "model") for key in ("A", "B", "C", "D", "G", "H")}
    model = SystemModel(
        **mats,
        eta_w=_number(block, "eta_w", "model", 0.0),
        eta_v=_number(block, "eta_v", "model", 0.0),
        delta_x0=_number(block, "delta_x0", "model", 0.0),
    )
    problems = validate(model)
    if problems:
        raise ConfigError("model block is ill-formed: " + "; ".join(problems))
    return model


def _build_modes(doc: dict, model: SystemModel) -> list[ModeHypothesis]:
    block = _require_dict(doc, "modes", required=True)
    _reject_unknown(block, _MODES_KEYS, "the 'modes' block")
    t_a = _integer(block, "t_a", "modes")
    t_s = _integer(block, "t_s", "modes")
    rho = _integer(block, "rho", "modes")
    for name, value in (("t_a", t_a), ("t_s", t_s), ("rho", rho)):
        if value is None:
            raise ConfigError(f"modes block is missing required key '{name}'")
    try:
        return enumerate_modes(t_a, t_s, rho, model.G, model.H)
    except ModelError as exc:
        raise ConfigError(f"modes block is unusable: {exc}") from exc


def _build_attack(
    doc: dict, modes: list[ModeHypothesis], true_mode: int, horizon: int
) -> AttackSignal | None:
    block = _require_dict(doc, "attack", required=False)
    if block is None:
        return None
    _reject_unknown(block, _ATTACK_KEYS, "the 'attack' block")
    kind = block.get("kind")
    if kind not in ("zero", "sinusoid", "explicit"):
        raise ConfigError(
            f"attack.kind must be 'zero', 'sinusoid' or 'explicit', got {kind!r}"
        )
    mode_star = next(m for m in modes if m.id == true_mode)
    if kind == "zero":
        _reject_unknown(block, {"kind"}, "a 'zero' attack block")
        return None
    if kind == "sinusoid":
        _reject_unknown(
            block, {"kind", "amplitude", "bias"}, "a 'sinusoid' attack block"
        )
        amplitude = _number(block, "amplitude", "attack", 5.0)
        bias = _number(block, "bias", "attack", 2.0)
        return sinusoid_attack(mode_star, horizon + 1, amplitude, bias)
    _reject_unknown(block, {"kind", "values"}, "an 'explicit' attack block")
    if "values" not in block:
        raise ConfigError("an 'explicit' attack block needs a 'values' array")
    try:
        values = np.array(block["values"], dtype=float)
        return AttackSignal(mode=mode_star, values=values)
    except (TypeError, ValueError, ModelError) as exc:
        raise ConfigError(f"attack.values is unusable: {exc}") from exc


def load_scenario(
    path,
    seed: int | None = None,
    horizon: int | None = None,
    k_inf_cutoff: int | None = None,
    enum_budget: int | None = None,
) -> ScenarioConfig:
    """Build a runnable scenario from a JSON config file.

    The keyword arguments are command-line overrides and win over the
    corresponding config values when given.
    """
    doc = load_config_document(path)
    model = _build_model(doc)
    modes = _build_modes(doc, model)

    scen = _require_dict(doc, "scenario", required=True)
    _reject_unknown(scen, _SCENARIO_KEYS, "the 'scenario' block")
    true_mode = _integer(scen, "true_mode", "scenario")
    if true_mode is None:
        raise ConfigError("scenario block is missing required key 'true_mode'")
    if horizon is None:
        horizon = _integer(scen, "horizon", "scenario", 100)
    if seed is None:
        seed = _integer(scen, "seed", "scenario", 0)

    tuning = _require_dict(doc, "tuning", required=False) or {}
    _reject_unknown(tuning, _TUNING_KEYS, "the 'tuning' block")
    if k_inf_cutoff is None:
        k_inf_cutoff = _integer(tuning, "k_inf_cutoff", "tuning", 25)
    if enum_budget is None:
        enum_budget = _integer(tuning, "enum_budget", "tuning", 16)

    if not any(m.id == true_mode for m in modes):
        raise ConfigError(
            f"scenario.true_mode {true_mode} is not one of the enumerated "
            f"mode ids 1..{len(modes)}"
        )
    attack = _build_attack(doc, modes, true_mode, horizon)

    try:
        return ScenarioConfig(
            model=model,
            modes=tuple(modes),
            true_mode=true_mode,
            horizon=horizon,
            attack=attack,
            known_input=scen.get("known_input"),
            noise_seed=seed,
            xhat0=scen.get("xhat0"),
            x0=scen.get("x0"),
            R_x=_number(tuning, "R_x", "tuning"),
            R_y=_number(tuning, "R_y", "tuning"),
            k_inf_cutoff=k_inf_cutoff,
            enum_budget=enum_budget,
        )
    except (SimulationError, ModelError) as exc:
        raise ConfigError(str(exc)) from exc


# ----------------------------------------------------------------- trace CSV


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def trace_header(n: int) -> list[str]:
    return (
        ["k", "mode_id", "r_norm", "delta_inf", "delta_tri", "delta_hat", "eliminated"]
        + [f"xhat_{i + 1}" for i in range(n)]
        + ["delta_x", "delta_d", "active_count"]
    )


def write_trace_csv(trace: RunTrace, path) -> None:
    """Write one row per (step, mode) plus a fused row per step.

    Residual columns are filled only on rows where the observer actually ran
    that step; an eliminated mode keeps emitting rows (flag 1, frozen
    estimate columns) so every stream spans the recorded horizon.  The fused
    row carries only the surviving-mode count — the global estimate is the
    union of the per-mode balls already present in the same step's rows.
    """
    n = trace.config.model.n
    mode_ids = sorted(trace.snapshots[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(trace_header(n))
        for k in range(len(trace.active_sets)):
            active = trace.active_sets[k]
            for q in mode_ids:
                rec = trace.records[k].get(q)
                snap = trace.snapshots[k][q]
                live = rec is not None and rec.k == k
                row = [str(k), str(q)]
                if live:
                    row += [
                        _fmt(rec.r_norm),
                        "" if rec.delta_inf is None else _fmt(rec.delta_inf),
                        _fmt(rec.delta_tri),
                        _fmt(rec.delta_hat),
                    ]
                else:
                    row += ["", "", "", ""]
                row.append("0" if q in active else "1")
                row += [_fmt(v) for v in snap.xhat_kk]
                row.append(_fmt(snap.delta_x))
                row.append("" if snap.delta_d is None else _fmt(snap.delta_d))
                row.append(str(len(active)))
                writer.writerow(row)
            fused = ["" for _ in range(7 + n + 2)]
            fused[0] = str(k)
            fused[1] = "fused"
            fused.append(str(len(active)))
            writer.writerow(fused)


def summary_document(trace: RunTrace) -> dict:
    cfg = trace.config
    return {
        "true_mode": cfg.true_mode,
        "horizon": cfg.horizon,
        "seed": cfg.noise_seed,
        "steps_recorded": trace.steps_recorded,
        "final_active": list(trace.final_active),
        "eliminated_at": {str(q): k for q, k in sorted(trace.eliminated_at.items())},
        "excluded": {str(q): why for q, why in sorted(trace.excluded.items())},
        "containment_violations": trace.containment_violations,
        "fault": trace.fault,
        "fault_step": trace.fault_step,
    }


def write_summary(trace: RunTrace, csv_path) -> Path:
    path = Path(csv_path).with_suffix(".summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary_document(trace), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# --------------------------------------------------------------- subcommands


def _run_and_write(cfg: ScenarioConfig, out) -> int:
    trace = run_pipeline(cfg)
    write_trace_csv(trace, out)
    summary_path = write_summary(trace, out)
    msg = (
        f"wrote {out} and {summary_path}: "
        f"{trace.steps_recorded} steps, final active modes {list(trace.final_active)}, "
        f"{trace.containment_violations} containment violations"
    )
    print(msg)
    if trace.fault is not None:
        print(f"fault: {trace.fault}", file=sys.stderr)
        return EXIT_FAULT
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_scenario(
        args.config,
        seed=args.seed,
        horizon=args.horizon,
        k_inf_cutoff=args.inf_cutoff,
        enum_budget=args.enum_budget,
    )
    return _run_and_write(cfg, args.out)


def cmd_benchmark(args: argparse.Namespace) -> int:
    cfg = benchmark_scenario(seed=args.seed, horizon=args.horizon)
    overrides = {}
    if args.inf_cutoff is not None:
        overrides["k_inf_cutoff"] = args.inf_cutoff
    if args.enum_budget is not None:
        overrides["enum_budget"] = args.enum_budget
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return _run_and_write(cfg, args.out)


def _json_safe(value):
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def cmd_analyze(args: argparse.Namespace) -> int:
    if (args.rx is None) != (args.ry is None):
        print(
            "smio analyze: error: --rx and --ry must be supplied together "
            "(condition (i) needs both trajectory bounds)",
            file=sys.stderr,
        )
        return EXIT_USAGE
    doc = load_config_document(args.config)
    model = _build_model(doc)
    modes = _build_modes(doc, model)
    tuning = _require_dict(doc, "tuning", required=False) or {}
    _reject_unknown(tuning, _TUNING_KEYS, "the 'tuning' block")
    R_x = args.rx if args.rx is not None else _number(tuning, "R_x", "tuning")
    R_y = args.ry if args.ry is not None else _number(tuning, "R_y", "tuning")
    if (R_x is None) != (R_y is None):
        raise ConfigError(
            "tuning must supply both R_x and R_y (or neither) for condition (i)"
        )

    entries = []
    excluded = {}
    for mode in modes:
        if not check_strong_detectability(model.A, mode.Gq, model.C, mode.Hq):
            excluded[mode.id] = "not strongly detectable"
            continue
        try:
            dec = decompose_mode(model, mode)
            gains = synthesize_gains(dec, model)
            dyn = error_dynamics(dec, gains, model)
        except DecompositionError as exc:
            excluded[mode.id] = f"{type(exc).__name__}: {exc}"
            continue
        entries.append((mode, dec, dyn))
    if not entries:
        raise ConfigError(
            "no usable mode hypothesis: "
            + "; ".join(f"mode {q}: {why}" for q, why in sorted(excluded.items()))
        )

    report = detectability_report(model, entries, R_x, R_y)
    doc_out = report.to_dict()
    doc_out["excluded"] = {str(q): why for q, why in sorted(excluded.items())}
    text = json.dumps(_json_safe(doc_out), indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out}: certified={report.certified}")
    else:
        sys.stdout.write(text)
    return EXIT_OK if report.certified else EXIT_NOT_CERTIFIED


# ---------------------------------------------------------------- arg parser


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the documented usage code is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.prog + ": error: " + message) from None

    def exit(self, status=0, message=None):
        if message:
            sys.stderr.write(message)
        raise SystemExit(status)


def _add_common(
    p: _Parser,
    *,
    out_default=None,
    out_required=False,
    seed_default=None,
    horizon_default=None,
) -> None:
    p.add_argument(
        "--out",
        default=out_default,
        required=out_required,
        help="output CSV path (a .summary.json lands next to it)",
    )
    p.add_argument(
        "--seed", type=int, default=seed_default, help="override the noise seed"
    )
    p.add_argument(
        "--horizon", type=int, default=horizon_default, help="override the horizon"
    )
    p.add_argument(
        "--inf-cutoff",
        type=int,
        default=None,
        help="last step with the enumerated threshold (default 25)",
    )
    p.add_argument(
        "--enum-budget",
        type=int,
        default=None,
        help="max free-sign bits for exact vertex enumeration (default 16)",
    )


def build_parser() -> _Parser:
    parser = _Parser(
        prog="smio",
        description=(
            "Set-valued state and input estimation for switched systems under "
            "sparse data-injection attacks"
        ),
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_sim = sub.add_parser(
        "simulate", help="run a configured scenario and write its trace"
    )
    p_sim.add_argument("--config", required=True, help="JSON scenario config")
    _add_common(p_sim, out_required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_an = sub.add_parser(
        "analyze", help="mode-distinguishability certificates for a config"
    )
    p_an.add_argument("--config", required=True, help="JSON scenario config")
    p_an.add_argument("--out", default=None, help="write the JSON report here")
    p_an.add_argument(
        "--rx", type=float, default=None, help="state trajectory bound for condition (i)"
    )
    p_an.add_argument(
        "--ry", type=float, default=None, help="output trajectory bound for condition (i)"
    )
    p_an.set_defaults(func=cmd_analyze)

    p_bm = sub.add_parser(
        "benchmark", help="run the built-in five-mode benchmark scenario"
    )
    _add_common(
        p_bm, out_default="smio_benchmark.csv", seed_default=0, horizon_default=200
    )
    p_bm.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, int):
            return exc.code
        print(exc.code, file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        print("smio: error: a command is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"smio {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"smio {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
