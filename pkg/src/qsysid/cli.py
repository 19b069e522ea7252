"""Command-line surface: ``run``, ``fi-scan``, ``replay``, ``validate-config``.

``run`` writes four artifacts into the configured output directory:

* ``run.jsonl``            one header line, one line per iteration, one final line
* ``posterior_final.csv``  the final posterior population samples
* ``summary.csv``          per-iteration duration / uncertainty / compression
* ``pulses.csv``           rendered waveform segments per iteration

``replay`` recomputes every posterior from a run log and checks bitwise
agreement with the logged moments, which makes remote-hardware runs auditable.

Exit codes: 0 on target_met / max_iterations, 2 on stalled, 1 on any error.
The ``OBSID_THREADS`` environment variable caps worker parallelism.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import replay as replay_mod
from .backends import RemoteBackend, SimulatedBackend, TrueSystem
from .config import ConfigError, RunConfig, load_config
from .fisher import fi_scan
from .loop import STALLED, LoopAbortedError, LoopConfig, LoopResult, run_loop
from .model import ControlWaveform

SCHEMA_VERSION = 1


def worker_cap() -> int:
    """Worker parallelism cap from OBSID_THREADS (default: all cores)."""
    raw = os.environ.get("OBSID_THREADS", "")
    try:
        n = int(raw)
        return max(1, n)
    except ValueError:
        return os.cpu_count() or 1


def _segments_wire(pulse: ControlWaveform):
    return [[[d, v.real, v.imag] for d, v in ch] for ch in pulse.channels]


def write_run_artifacts(cfg: RunConfig, result: LoopResult, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    header = {
        "kind": "header",
        "schema_version": SCHEMA_VERSION,
        "model_family": cfg.model.family,
        "parameter_labels": list(cfg.model.parameter_labels),
        "prior_mean": cfg.prior.mean.tolist(),
        "prior_covariance": cfg.prior.covariance.tolist(),
        "convention": cfg.convention,
        "population_size": cfg.population_size,
        "seed": cfg.seed,
        "backend": cfg.backend.kind,
        "g_true": list(cfg.backend.g_true) if cfg.backend.g_true else None,
        "shots": cfg.backend.shots,
        "cost_kind": cfg.cost_kind,
        "families": [f.kind for f in cfg.families],
    }
    with open(out_dir / "run.jsonl", "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for it in result.iterations:
            line = {
                "kind": "iteration",
                "j": it.j,
                "family": it.pulse.family_tag,
                "variables": it.pulse.choice.variables.tolist(),
                "segments": _segments_wire(it.pulse.choice.rendered),
                "cost": it.pulse.cost,
                "m": it.measurement.m,
                "sigma": it.measurement.sigma,
                "sigma_used": it.sigma_used,
                "shots": it.measurement.shots,
                "posterior_mean": it.posterior.mean.tolist(),
                "posterior_covariance": it.posterior.covariance.tolist(),
                "lambda_maj": it.posterior.major_eigenvalue,
                "compression": it.compression,
                "duration": it.pulse.choice.rendered.duration,
                "duration_ratio": it.duration_ratio,
                "retained": it.retained,
            }
            fh.write(json.dumps(line) + "\n")
        fh.write(json.dumps({"kind": "final", "reason": result.reason}) + "\n")

    g_true = np.asarray(cfg.backend.g_true) if cfg.backend.g_true else None
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        head = ["j", "T", "lambda_maj", "compression"]
        if g_true is not None:
            head.append("abs_error")
        writer.writerow(head)
        for it in result.iterations:
            row = [
                it.j,
                repr(float(it.pulse.choice.rendered.duration)),
                repr(float(it.posterior.major_eigenvalue)),
                repr(float(it.compression)),
            ]
            if g_true is not None:
                row.append(repr(float(np.linalg.norm(it.posterior.mean - g_true))))
            writer.writerow(row)

    with open(out_dir / "pulses.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "channel", "segment", "duration_s", "re", "im"])
        for it in result.iterations:
            for q, ch in enumerate(it.pulse.choice.rendered.channels):
                for k, (d, v) in enumerate(ch):
                    writer.writerow([it.j, q, k, repr(float(d)), repr(float(v.real)), repr(float(v.imag))])

    with open(out_dir / "posterior_final.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(cfg.model.parameter_labels))
        if result.iterations:
            for row in result.iterations[-1].posterior_population:
                writer.writerow([repr(float(x)) for x in row])


def _make_backend(cfg: RunConfig):
    if cfg.backend.kind == "simulated":
        system = TrueSystem(
            g_true=np.asarray(cfg.backend.g_true, dtype=float),
            shots_per_measurement=cfg.backend.shots,
            seed=cfg.backend.seed,
        )
        return SimulatedBackend(system, cfg.model)
    return RemoteBackend(
        cfg.backend.host, cfg.backend.port, shots=cfg.backend.shots, timeout_s=cfg.backend.timeout_s
    )


def cmd_run(config_path: str) -> int:
    try:
        cfg = load_config(config_path)
    except (ConfigError, OSError) as exc:
        print(exc, file=sys.stderr)
        return 1
    backend = _make_backend(cfg)
    loop_cfg = LoopConfig(
        max_iterations=cfg.max_iterations,
        target_major_uncertainty=cfg.target_major_uncertainty,
        population_size=cfg.population_size,
        cost_kind=cfg.cost_kind,
        families=cfg.families,
        stall_window=cfg.stall_window,
        stall_ratio=cfg.stall_ratio,
        shots=cfg.backend.shots,
        optimizer=cfg.optimizer,
        convention=cfg.convention,
        grid_size=cfg.grid_size,
        precondition_diagonal=cfg.a_diagonal,
        mfi_alpha=cfg.alpha,
        mfi_beta=cfg.beta,
    )
    try:
        result = run_loop(cfg.model, cfg.prior, backend, loop_cfg, seed=cfg.seed)
    except LoopAbortedError as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        write_run_artifacts(cfg, exc.partial, cfg.output_directory)
        return 1
    write_run_artifacts(cfg, result, cfg.output_directory)
    for it in result.iterations:
        print(
            f"j={it.j} family={it.pulse.family_tag} T={it.pulse.choice.rendered.duration:.4g} "
            f"m={it.measurement.m:.4f} lambda_maj={it.posterior.major_eigenvalue:.4g} "
            f"compression={it.compression:.3f}"
        )
    print(f"terminated: {result.reason}")
    return 2 if result.reason == STALLED else 0


def cmd_fi_scan(config_path: str, t_min: float, t_max: float, points: int, out_path: str | None) -> int:
    try:
        cfg = load_config(config_path)
    except (ConfigError, OSError) as exc:
        print(exc, file=sys.stderr)
        return 1
    if points < 1 or (points > 1 and t_max <= t_min) or t_min <= 0:
        print("fi-scan needs 0 < T_min < T_max and points >= 1", file=sys.stderr)
        return 1
    grid = np.linspace(t_min, t_max, points) if points > 1 else np.array([t_min])
    g = cfg.prior.mean if cfg.backend.g_true is None else np.asarray(cfg.backend.g_true)
    rows = fi_scan(cfg.model, g, grid)
    target = Path(out_path) if out_path else cfg.output_directory / "fi_scan.csv"
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["T", "fi", "theta"])
        for T, fi, theta in rows:
            writer.writerow([repr(float(T)), repr(float(fi)), repr(float(theta))])
    print(f"wrote {len(rows)} rows to {target}")
    return 0


def cmd_replay(run_jsonl_path: str) -> int:
    try:
        report = replay_mod.replay_run(run_jsonl_path)
    except (OSError, ValueError) as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return 1
    if report.ok:
        print(f"replay ok: {report.iterations_checked} iterations verified")
        return 0
    print(
        f"replay mismatch at iteration {report.first_divergence}: {report.detail}",
        file=sys.stderr,
    )
    return 1


def cmd_validate_config(config_path: str) -> int:
    try:
        load_config(config_path)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    except OSError as exc:
        print(exc, file=sys.stderr)
        return 1
    print("config ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsysid",
        description="Closed-loop Bayesian calibration of small quantum-device Hamiltonians",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a calibration run from a config file")
    p_run.add_argument("config")

    p_scan = sub.add_parser("fi-scan", help="scan Fisher information over pulse duration")
    p_scan.add_argument("config")
    p_scan.add_argument("--t-min", type=float, required=True)
    p_scan.add_argument("--t-max", type=float, required=True)
    p_scan.add_argument("--points", type=int, required=True)
    p_scan.add_argument("--out", default=None)

    p_replay = sub.add_parser("replay", help="audit a run log by recomputing posteriors")
    p_replay.add_argument("run_jsonl")

    p_validate = sub.add_parser("validate-config", help="check a config file")
    p_validate.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "fi-scan":
        return cmd_fi_scan(args.config, args.t_min, args.t_max, args.points, args.out)
    if args.command == "replay":
        return cmd_replay(args.run_jsonl)
    return cmd_validate_config(args.config)


if __name__ == "__main__":
    sys.exit(main())
