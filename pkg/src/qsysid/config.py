"""Run configuration: a hand-editable TOML tree, validated exhaustively
(unknown keys are rejected, all problems reported at once)."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import ONE_QUBIT, TWO_QUBIT, ModelSpec
from .optimizer import COST_KINDS, DIFFERENTIAL_EVOLUTION, NELDER_MEAD, OptimizerConfig
from .params import CONVENTIONS, GaussianDensity
from .pulses import KINDS, PWC_AMPLITUDE, PulseFamily


class ConfigError(ValueError):
    """Carries every validation problem found in a config file."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))
        self.problems = problems


_SCHEMA = {
    "model": {"family"},
    "prior": {"mean", "sigma", "covariance"},
    "backend": {"kind", "g_true", "shots", "seed", "host", "port", "timeout_s"},
    "pulses": {"families", "n_segments", "duration_cap"},
    "cost": {"kind", "grid_size", "a_diagonal", "alpha", "beta", "likelihood_variance_convention"},
    "optimizer": {"restarts", "budget", "method"},
    "loop": {
        "max_iterations",
        "target_major_uncertainty",
        "population_size",
        "stall_window",
        "stall_ratio",
        "seed",
    },
    "output": {"directory"},
}


@dataclass(frozen=True)
class BackendConfig:
    kind: str
    g_true: tuple[float, ...] | None = None
    shots: int = 1000
    seed: int = 0
    host: str | None = None
    port: int | None = None
    timeout_s: float = 600.0


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    prior: GaussianDensity
    backend: BackendConfig
    families: tuple[PulseFamily, ...]
    cost_kind: str
    grid_size: int
    a_diagonal: tuple[float, ...] | None
    alpha: float
    beta: float
    convention: str
    optimizer: OptimizerConfig
    max_iterations: int
    target_major_uncertainty: float
    population_size: int
    stall_window: int
    stall_ratio: float
    seed: int
    output_directory: Path
    raw: dict = field(repr=False, default_factory=dict)


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        tree = tomllib.load(fh)
    return validate_config(tree, base_dir=Path(path).resolve().parent)


def validate_config(tree: dict, base_dir: Path | None = None) -> RunConfig:
    problems: list[str] = []

    for section, keys in tree.items():
        if section not in _SCHEMA:
            problems.append(f"unknown section [{section}]")
        elif isinstance(keys, dict):
            for key in keys:
                if key not in _SCHEMA[section]:
                    problems.append(f"unknown key {section}.{key}")

    def get(section, key, default=None):
        return tree.get(section, {}).get(key, default)

    family_name = get("model", "family")
    model = None
    if family_name not in (ONE_QUBIT, TWO_QUBIT):
        problems.append(f"model.family must be {ONE_QUBIT!r} or {TWO_QUBIT!r}, got {family_name!r}")
    else:
        model = ModelSpec.from_family(family_name)

    prior = None
    mean = get("prior", "mean")
    sigma = get("prior", "sigma")
    cov = get("prior", "covariance")
    if mean is None:
        problems.append("prior.mean is required")
    elif model is not None and len(mean) != model.n_params:
        problems.append(f"prior.mean has length {len(mean)}, model needs {model.n_params}")
    if sigma is None and cov is None:
        problems.append("one of prior.sigma or prior.covariance is required")
    if sigma is not None and cov is not None:
        problems.append("give prior.sigma or prior.covariance, not both")
    if model is not None and mean is not None and len(mean) == model.n_params:
        try:
            if cov is not None:
                prior = GaussianDensity(np.asarray(mean, float), np.asarray(cov, float))
            elif sigma is not None:
                if len(sigma) != model.n_params:
                    problems.append(f"prior.sigma has length {len(sigma)}, model needs {model.n_params}")
                else:
                    prior = GaussianDensity(np.asarray(mean, float), np.diag(np.square(sigma)))
        except ValueError as exc:
            problems.append(f"prior: {exc}")

    backend_kind = get("backend", "kind", "simulated")
    g_true = get("backend", "g_true")
    shots = get("backend", "shots", 1000)
    if backend_kind not in ("simulated", "remote"):
        problems.append(f"backend.kind must be 'simulated' or 'remote', got {backend_kind!r}")
    if backend_kind == "simulated":
        if g_true is None:
            problems.append("backend.g_true is required for the simulated backend")
        elif model is not None and len(g_true) != model.n_params:
            problems.append(f"backend.g_true has length {len(g_true)}, model needs {model.n_params}")
    if backend_kind == "remote":
        if get("backend", "host") is None or get("backend", "port") is None:
            problems.append("backend.host and backend.port are required for the remote backend")
        if g_true is not None:
            problems.append("backend.g_true is only meaningful for the simulated backend")
    if not isinstance(shots, int) or shots < 1:
        problems.append("backend.shots must be a positive integer")
    backend = BackendConfig(
        kind=backend_kind,
        g_true=tuple(g_true) if g_true is not None else None,
        shots=shots if isinstance(shots, int) and shots >= 1 else 1,
        seed=get("backend", "seed", 0),
        host=get("backend", "host"),
        port=get("backend", "port"),
        timeout_s=float(get("backend", "timeout_s", 600.0)),
    )

    family_names = get("pulses", "families", ["rabi"])
    n_segments = get("pulses", "n_segments", 10)
    duration_cap = float(get("pulses", "duration_cap", math.inf))
    families: list[PulseFamily] = []
    for name in family_names:
        if name not in KINDS:
            problems.append(f"pulses.families: unknown family {name!r}")
            continue
        channel_count = model.channel_count if (model is not None and name == PWC_AMPLITUDE) else 1
        if model is not None and model.channel_count == 2 and name != PWC_AMPLITUDE:
            problems.append(f"pulses.families: {name} is single-channel; the two-qubit model needs pwc_amplitude")
            continue
        try:
            families.append(
                PulseFamily(
                    kind=name,
                    n_segments=n_segments,
                    channel_count=channel_count,
                    duration_cap=duration_cap,
                )
            )
        except ValueError as exc:
            problems.append(f"pulses.families[{name}]: {exc}")
    if not families:
        problems.append("pulses.families must name at least one valid family")

    cost_kind = get("cost", "kind", "apc")
    if cost_kind not in COST_KINDS:
        problems.append(f"cost.kind must be one of {COST_KINDS}, got {cost_kind!r}")
    convention = get("cost", "likelihood_variance_convention", "paper")
    if convention not in CONVENTIONS:
        problems.append(f"cost.likelihood_variance_convention must be one of {CONVENTIONS}")
    a_diag = get("cost", "a_diagonal")
    if a_diag is not None and model is not None and len(a_diag) != model.n_params:
        problems.append(f"cost.a_diagonal has length {len(a_diag)}, model needs {model.n_params}")

    method = get("optimizer", "method")
    if method is not None and method not in (NELDER_MEAD, DIFFERENTIAL_EVOLUTION):
        problems.append(f"optimizer.method must be {NELDER_MEAD!r} or {DIFFERENTIAL_EVOLUTION!r}")
    try:
        optimizer = OptimizerConfig(
            restarts=get("optimizer", "restarts", 8),
            budget=get("optimizer", "budget", 300),
            method=method,
        )
    except ValueError as exc:
        problems.append(f"optimizer: {exc}")
        optimizer = OptimizerConfig()

    max_iterations = get("loop", "max_iterations", 8)
    population_size = get("loop", "population_size", 2000)
    stall_ratio = get("loop", "stall_ratio", 0.8)
    if not isinstance(max_iterations, int) or max_iterations < 1:
        problems.append("loop.max_iterations must be a positive integer")
    if not isinstance(population_size, int) or population_size < 100:
        problems.append("loop.population_size must be an integer >= 100")
    if not 0.0 < stall_ratio <= 1.0:
        problems.append("loop.stall_ratio must lie in (0, 1]")

    out_dir = Path(get("output", "directory", "qsysid-out"))
    if base_dir is not None and not out_dir.is_absolute():
        out_dir = base_dir / out_dir

    if problems:
        raise ConfigError(problems)

    return RunConfig(
        model=model,
        prior=prior,
        backend=backend,
        families=tuple(families),
        cost_kind=cost_kind,
        grid_size=get("cost", "grid_size", 64),
        a_diagonal=tuple(a_diag) if a_diag is not None else None,
        alpha=float(get("cost", "alpha", 1.0)),
        beta=float(get("cost", "beta", 0.05)),
        convention=convention,
        optimizer=optimizer,
        max_iterations=max_iterations,
        target_major_uncertainty=float(get("loop", "target_major_uncertainty", 0.0)),
        population_size=population_size,
        stall_window=get("loop", "stall_window", 3),
        stall_ratio=float(stall_ratio),
        seed=get("loop", "seed", 0),
        output_directory=out_dir,
        raw=tree,
    )
