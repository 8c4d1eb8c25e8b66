"""``qpp``: batch command-line interface.

Subcommands ``simulate``, ``scan``, ``pareto``, ``lz`` and ``morris`` read a
JSON config (``--config``) and accept a flag for every config key; flags win.
Exit codes: 0 success, 2 configuration or validation error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any

import numpy as np

from qutrit_pareto import __version__
from qutrit_pareto.config import (
    SCHEMAS,
    ConfigError,
    load_file,
    model_from,
    physics_from,
    resolve,
)
from qutrit_pareto.dynamics import IntegrationError, TrackingError, adiabatic_pf_trajectory, evolve
from qutrit_pareto.lz import (
    DegenerateVelocityError,
    NoCrossingError,
    adiabatic_band,
    gamma_threshold,
    lz_robustness,
)
from qutrit_pareto.metrics import (
    AmplitudeScanConfig,
    ScanConfig,
    amplitude_scan,
    centred_width,
    detuning_scan,
    max_transient_pf,
)
from qutrit_pareto.pareto import (
    GAConfig,
    ObjectiveEvaluator,
    attach_amplitude_robustness,
    densify,
    load_run,
    optimize,
    save_run,
)
from qutrit_pareto.pulses import MODEL_NAMES, ArityError, PulseDomainError
from qutrit_pareto.sensitivity import (
    morris_study,
    output_functionals,
    write_ratio_table,
    write_records,
    write_scatter,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

MANIFEST = "manifest.json"
UNIT_NOTE = (
    "frequencies in GHz (cycles per ns), times in ns; the state obeys i dpsi/dt = 2*pi*(H/h) psi; "
    "detuning_sign sets whether +Delta or -Delta sits on |g>"
)
ASSUMPTIONS = {
    "max_pf_offset_GHz": 0.0,
    "amplitude_scan_offset": "amp_delta_GHz (default 0)",
    "ga_defaults": "population 96, 60 generations below 100 ns else 80, SBX eta 15 p 0.9, "
    "polynomial mutation eta 20 p 1/genes, hypervolume stagnation stop",
}
ALIASES = {"T_ns": ["--T"], "out_dir": ["--out"]}

log = logging.getLogger("qpp")


def write_manifest(out: Path, command: str, cfg: dict[str, Any], threads: int, extra: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "version": __version__,
        "config": cfg,
        "seed": cfg.get("seed"),
        "threads": threads,
        "units": UNIT_NOTE,
        "assumptions": ASSUMPTIONS,
        **(extra or {}),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2))


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _scan_config(cfg: dict[str, Any], threads: int) -> ScanConfig:
    try:
        return ScanConfig(
            cfg["scan_lo_GHz"], cfg["scan_hi_GHz"], cfg["scan_step_GHz"], cfg["scan_xtol_GHz"],
            cfg["rtol"], cfg["atol"], threads,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _amp_config(cfg: dict[str, Any], threads: int) -> AmplitudeScanConfig:
    try:
        return AmplitudeScanConfig(
            cfg["amp_lo_GHz"], cfg["amp_hi_GHz"], cfg["amp_points"], cfg["amp_log_spaced"],
            cfg["amp_delta_GHz"], cfg["amp_xtol_GHz"], cfg["rtol"], cfg["atol"], threads,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# --- commands -----------------------------------------------------------------


def cmd_simulate(cfg: dict[str, Any], threads: int) -> None:
    model = model_from(cfg)
    constants = physics_from(cfg)
    if cfg["n_points"] < 2:
        raise ConfigError("n_points must be at least 2")
    out = Path(cfg["out_dir"])
    write_manifest(out, "simulate", cfg, threads)
    traj = evolve(model, model.delta, constants, cfg["rtol"], cfg["atol"], cfg["n_points"])
    traj.to_csv(out / "trajectory.csv")
    t = traj.times
    _write_rows(
        out / "pulse_profile.csv",
        ["t_ns", "omega_GHz", "detuning_GHz"],
        zip(map(repr, t.tolist()), map(repr, model.envelope_at(t).tolist()), map(repr, model.detuning_at(t).tolist())),
    )
    summary: dict[str, Any] = {
        "model": model.name,
        "T_ns": model.T,
        "delta_GHz": model.delta,
        "max_pf": max_transient_pf(traj),
        "p_g_final": float(traj.final_populations[0]),
        "p_e_final": float(traj.final_populations[1]),
        "p_f_final": float(traj.final_populations[2]),
        "norm_drift": traj.norm_drift,
        "n_rhs": traj.n_rhs,
    }
    try:
        ad = adiabatic_pf_trajectory(model, model.delta, constants, cfg["n_points"])
        _write_rows(
            out / "adiabatic.csv",
            ["t_ns", "p_f_adiabatic", "energy_GHz"],
            zip(map(repr, ad.times.tolist()), map(repr, ad.p_f.tolist()), map(repr, ad.energies.tolist())),
        )
        summary["max_pf_adiabatic"] = ad.max_pf
    except TrackingError as exc:
        summary["max_pf_adiabatic"] = None
        summary["adiabatic_error"] = str(exc)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))


def cmd_scan(cfg: dict[str, Any], threads: int) -> None:
    model = model_from(cfg)
    constants = physics_from(cfg)
    axis = cfg["axis"]
    if axis == "detuning":
        sc = _scan_config(cfg, threads)
        run = lambda: detuning_scan(model, constants, sc)  # noqa: E731
    elif axis == "amplitude":
        ac = _amp_config(cfg, threads)
        run = lambda: amplitude_scan(model, constants, ac)  # noqa: E731
    else:
        raise ConfigError(f"key 'axis': expected 'detuning' or 'amplitude', got {axis!r}")
    out = Path(cfg["out_dir"])
    write_manifest(out, "scan", cfg, threads)
    curve = run()
    curve.to_csv(out / "scan.csv")
    extra = {"width_at_nominal_GHz": centred_width(curve, model.envelope.omega0)} if axis == "amplitude" else {}
    curve.write_sidecar(
        out / "scan.json",
        intervals_GHz=[[iv.start, iv.end, iv.qualified] for iv in curve.intervals()],
        model=model.name,
        T_ns=model.T,
        **extra,
    )


def _ga_config(cfg: dict[str, Any], T: float) -> GAConfig:
    fields = {
        k: cfg[k]
        for k in (
            "population", "crossover_prob", "eta_crossover", "mutation_prob",
            "eta_mutation", "stagnation_window", "stagnation_rtol",
        )
    }
    if cfg["generations"] is not None:
        fields["generations"] = cfg["generations"]
    try:
        return GAConfig.for_duration(T, **fields)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_pareto(cfg: dict[str, Any], threads: int) -> None:
    constants = physics_from(cfg)
    families = cfg["family"]
    durations = cfg["T_ns"]
    for fam in families:
        if fam not in MODEL_NAMES:
            raise ConfigError(f"key 'family': unknown model {fam!r}; expected one of {', '.join(MODEL_NAMES)}")
    if any(T <= 0 for T in durations):
        raise ConfigError("key 'T_ns': durations must be positive")
    if cfg["densify"] < 0 or cfg["densify_generations"] < 0:
        raise ConfigError("densify and densify_generations must be nonnegative")
    ga = {T: _ga_config(cfg, T) for T in durations}
    sc = _scan_config(cfg, threads)
    ac = _amp_config(cfg, threads)
    evaluator = ObjectiveEvaluator(constants, sc)
    out = Path(cfg["out_dir"])
    write_manifest(out, "pareto", cfg, threads)
    single = len(families) == 1 and len(durations) == 1
    for fam in families:
        for T in durations:
            run_dir = out if single else out / f"{fam}_{T:g}ns"
            log.info("pareto %s T=%g ns -> %s", fam, T, run_dir)
            archive = optimize(fam, T, ga[T], evaluator, cfg["seed"], threads)
            if cfg["densify"]:
                archive = densify(archive, cfg["densify"], evaluator, cfg["densify_generations"], threads)
            if cfg["amp_rob"]:
                attach_amplitude_robustness(archive, constants, ac)
            extra = {
                "version": __version__,
                "config": cfg,
                "threads": threads,
                "units": UNIT_NOTE,
                "assumptions": ASSUMPTIONS,
                "scan_config": asdict(sc),
            }
            save_run(archive, run_dir, extra)


def cmd_lz(cfg: dict[str, Any], threads: int) -> None:
    constants = physics_from(cfg)
    if not 0 < cfg["p_thresh"] < 1:
        raise ConfigError("p_thresh must lie in (0, 1)")
    if cfg["lz_step_GHz"] <= 0 or cfg["lz_xtol_GHz"] <= 0 or cfg["band_bins"] < 1:
        raise ConfigError("lz_step_GHz, lz_xtol_GHz and band_bins must be positive")
    has_pulse = cfg.get("model") is not None
    if not has_pulse and not cfg["archive_dirs"]:
        raise ConfigError("lz needs either pulse keys (model, T_ns, ...) or archive_dirs")
    model = model_from(cfg) if has_pulse else None
    archives = [load_run(d) for d in cfg["archive_dirs"]]
    out = Path(cfg["out_dir"])
    write_manifest(out, "lz", cfg, threads, {"band_construction": "raw points plus binned min/max envelope"})
    if model is not None:
        b = lz_robustness(model, constants, cfg["p_thresh"], cfg["lz_step_GHz"], cfg["lz_xtol_GHz"])
        bound = {
            "model": model.name,
            "T_ns": model.T,
            "delta_minus_GHz": b.delta_minus,
            "delta_plus_GHz": b.delta_plus,
            "width_GHz": b.width,
            "constrained": b.constrained,
            "unbounded": b.unbounded,
            "gamma_at_zero": b.gamma_zero,
            "gamma_threshold": gamma_threshold(cfg["p_thresh"]),
        }
        (out / "lz_bound.json").write_text(json.dumps(bound, indent=2))
    if archives:
        models = [m for a in archives for m in a.front_models()]
        band = adiabatic_band(models, constants)
        band.to_csv(out / "band.csv")
        rows = []
        for T in sorted({p.T for p in band.points}):
            env = band.envelope(T, cfg["band_bins"])
            for i in range(env.lower.size):
                if np.isfinite(env.lower[i]):
                    rows.append([repr(T), repr(env.edges[i]), repr(env.edges[i + 1]),
                                 repr(env.lower[i]), repr(env.upper[i])])
        _write_rows(
            out / "band_envelope.csv",
            ["T_ns", "det_rob_LZ_lo_GHz", "det_rob_LZ_hi_GHz", "max_pf_lower", "max_pf_upper"],
            rows,
        )


def cmd_morris(cfg: dict[str, Any], threads: int) -> None:
    constants = physics_from(cfg)
    if cfg["N"] < 2:
        raise ConfigError("key 'N': at least 2 base points are required")
    if not 0 < cfg["rel_step"] < 1:
        raise ConfigError("rel_step must lie in (0, 1)")
    outputs = cfg["outputs"]
    funcs = output_functionals(constants, _scan_config(cfg, threads), _amp_config(cfg, threads))
    bad = [o for o in outputs if o not in funcs]
    if bad:
        raise ConfigError(f"key 'outputs': unknown output(s) {bad}; expected {sorted(funcs)}")
    archives = [load_run(d) for d in cfg["archive_dirs"]]
    out = Path(cfg["out_dir"])
    write_manifest(out, "morris", cfg, threads)
    records = []
    for a in archives:
        records += morris_study(a, outputs, cfg["N"], constants, funcs, cfg["rel_step"], cfg["signed_step"], threads)
    write_records(records, out / "morris_records.csv")
    for o in outputs:
        write_ratio_table(records, o, out / f"ratio_table_{o}.csv")
        write_scatter(records, o, out / f"scatter_{o}.csv")


COMMANDS = {
    "simulate": cmd_simulate,
    "scan": cmd_scan,
    "pareto": cmd_pareto,
    "lz": cmd_lz,
    "morris": cmd_morris,
}


# --- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpp", description="Pareto-optimal qutrit pulse toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name, help=f"{name} command")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--threads", help="worker threads (falls back to QPP_THREADS, then 1)")
        p.add_argument("-v", "--verbose", action="store_true")
        for key, key_def in schema.items():
            flags = [f"--{key}"]
            if "_" in key:
                flags.append(f"--{key.replace('_', '-')}")
            flags += ALIASES.get(key, [])
            kwargs: dict[str, Any] = {"dest": key, "default": None, "help": key_def.help}
            if key_def.kind == "bool":
                kwargs.update(nargs="?", const="true")
            p.add_argument(*flags, **kwargs)
    return parser


def _threads(value: str | None) -> int:
    raw = value if value is not None else os.environ.get("QPP_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"threads must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"threads must be a positive integer, got {raw!r}")
    return n


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {k: getattr(args, k) for k in SCHEMAS[args.command]}
    try:
        threads = _threads(args.threads)
        cfg = resolve(args.command, load_file(args.config), overrides)
        COMMANDS[args.command](cfg, threads)
    except (ConfigError, PulseDomainError, ArityError) as exc:
        print(f"qpp: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, TrackingError, NoCrossingError, DegenerateVelocityError, ArithmeticError) as exc:
        print(f"qpp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
