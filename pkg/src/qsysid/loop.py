"""The closed-loop orchestrator: sample, optimize, measure, update, subsample,
report -- iterated until a target uncertainty, an iteration cap, or a stall.

Each iteration turns the running NLL record into a fresh particle population,
finds the most informative pulse for it, runs one experiment, appends the
measurement term to the record, and filters the population into a posterior.
The posterior moments seed the next iteration's proposal density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fisher import optimal_duration_hint
from .model import ONE_QUBIT, ControlWaveform, ModelSpec, batch_response_gradient
from .optimizer import OptimizedPulse, OptimizerConfig, optimize_pulse
from .params import (
    PAPER,
    SIGMA_FLOOR,
    CovarianceSummary,
    DegenerateLikelihoodError,
    FilterCollapseError,
    GaussianDensity,
    NllRecord,
    importance_sample_prior,
    normalized_likelihoods,
    rejection_subsample,
    weighted_moments,
)
from .pulses import PulseFamily

HEALTHY = "healthy"
STALLED = "stalled"

TARGET_MET = "target_met"
MAX_ITERATIONS = "max_iterations"


@dataclass(frozen=True)
class LoopConfig:
    max_iterations: int
    target_major_uncertainty: float = 0.0
    population_size: int = 2000
    cost_kind: str = "apc"
    families: tuple[PulseFamily, ...] = ()
    stall_window: int = 3
    stall_ratio: float = 0.8
    shots: int | None = None  # None: backend default
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    convention: str = PAPER
    grid_size: int = 64
    precondition_diagonal: tuple[float, ...] | None = None
    mfi_alpha: float = 1.0
    mfi_beta: float = 0.05
    collapse_fraction: float = 0.01  # below this retained fraction, inflate sigma and retry

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.population_size < 100:
            raise ValueError("population_size must be >= 100")
        if not 0.0 < self.stall_ratio <= 1.0:
            raise ValueError("stall_ratio must lie in (0, 1]")
        if not self.families:
            raise ValueError("at least one pulse family is required")


@dataclass(frozen=True)
class IterationOutput:
    j: int
    pulse: OptimizedPulse
    measurement: object  # MeasurementRecord
    sigma_used: float  # possibly inflated relative to the recorded sigma
    posterior: CovarianceSummary
    posterior_population: np.ndarray = field(repr=False)
    retained: int = 0
    compression: float = 1.0
    duration_ratio: float = 1.0


@dataclass(frozen=True)
class LoopResult:
    iterations: list[IterationOutput]
    reason: str
    prior_summary: CovarianceSummary
    record: NllRecord


class LoopAbortedError(RuntimeError):
    """Unrecoverable failure mid-run; carries the completed iterations."""

    def __init__(self, message: str, partial: LoopResult):
        super().__init__(message)
        self.partial = partial


def stall_diagnostic(
    history: list[CovarianceSummary], window: int = 3, ratio: float = 0.8
) -> str:
    """Stalled iff every per-iteration compression in the trailing window
    exceeds ``ratio``.  ``history`` includes the prior summary at index 0."""
    if len(history) < window + 1:
        return HEALTHY
    lams = [h.major_eigenvalue for h in history[-(window + 1):]]
    compressions = [b / a for a, b in zip(lams[:-1], lams[1:])]
    return STALLED if all(c > ratio for c in compressions) else HEALTHY


def projection_axes(
    population: np.ndarray,
    pulse: ControlWaveform,
    model: ModelSpec,
    g_true: np.ndarray | None = None,
) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Unit vectors for visualising high-dimensional posteriors.

    Returns ``(lambda_dev, lambda_grad)``: the deviation direction from the true
    parameters (simulation only; None without g_true or at zero deviation) and
    the population-mean information direction (None when gradients cancel).
    """
    G = np.atleast_2d(np.asarray(population, dtype=float))
    if G.shape[0] == 0:
        raise ValueError("population must be nonempty")
    grads = batch_response_gradient(model, G, pulse)
    norms = np.linalg.norm(grads, axis=1)
    nonzero = norms > 0
    lambda_grad = None
    if np.any(nonzero):
        mean_dir = np.mean(grads[nonzero] / norms[nonzero, None], axis=0)
        mn = np.linalg.norm(mean_dir)
        if mn > 0:
            lambda_grad = mean_dir / mn
    lambda_dev = None
    if g_true is not None:
        dev = np.mean(G, axis=0) - np.asarray(g_true, dtype=float)
        dn = np.linalg.norm(dev)
        if dn > 0:
            lambda_dev = dev / dn
    return lambda_dev, lambda_grad


def _proposal_from(summary: CovarianceSummary) -> GaussianDensity:
    cov = summary.covariance
    evals = np.linalg.eigvalsh(cov)
    if evals[0] <= 0.0:
        # rank-deficient sample covariance; regularize so the proposal is proper
        cov = cov + (1e-12 * max(np.trace(cov), 1e-30)) * np.eye(cov.shape[0])
    return GaussianDensity(mean=summary.mean, covariance=cov)


def _omega_estimate(model: ModelSpec, summary: CovarianceSummary) -> float:
    if model.family == ONE_QUBIT:
        return max(abs(float(summary.mean[1])), 1e-12)
    return 1.0


def iteration_seed(seed: int, j: int, stream: int) -> list[int]:
    return [seed, j, stream]


def run_loop(
    model: ModelSpec,
    prior: GaussianDensity,
    backend,
    config: LoopConfig,
    seed: int = 0,
) -> LoopResult:
    """Execute the full sample/optimize/measure/update/subsample sequence."""
    record = NllRecord(prior=prior, convention=config.convention)
    prior_summary = CovarianceSummary.of_gaussian(prior)
    history = [prior_summary]
    iterations: list[IterationOutput] = []
    shots = config.shots if config.shots is not None else backend.shots
    A = config.precondition_diagonal

    if prior_summary.major_eigenvalue <= config.target_major_uncertainty:
        return LoopResult(iterations, TARGET_MET, prior_summary, record)

    summary = prior_summary
    t_prev = optimal_duration_hint(prior.covariance) / 2.0
    reason = MAX_ITERATIONS
    for j in range(1, config.max_iterations + 1):
        proposal = _proposal_from(summary)
        sample_rng = np.random.default_rng(iteration_seed(seed, j, 0))
        population = importance_sample_prior(
            record, proposal, config.population_size, sample_rng, model
        )

        hint = optimal_duration_hint(proposal.covariance)
        opt_config = replace(config.optimizer, seed=(config.optimizer.seed * 1000003 + j) % 2**31)
        optimized = optimize_pulse(
            list(config.families),
            population,
            model,
            config.cost_kind,
            opt_config,
            t_prev,
            shots_planned=shots,
            duration_hint=hint,
            omega_estimate=_omega_estimate(model, summary),
            A=A,
            grid_size=config.grid_size,
            convention=config.convention,
            alpha=config.mfi_alpha,
            beta=config.mfi_beta,
        )
        pulse = optimized.choice.rendered

        measurement = backend.measure(pulse, shots)

        # posterior update, with one sigma-inflation retry on filter collapse
        subsample_rng = np.random.default_rng(iteration_seed(seed, j, 1))
        sigma_used = max(measurement.sigma, SIGMA_FLOOR)
        retained_pop = None
        for attempt in range(2):
            try:
                raw, normalized, _ = normalized_likelihoods(
                    population, pulse, measurement.m, sigma_used, model, config.convention
                )
                # samples whose likelihood underflowed to 0 can never be
                # retained; drop them up front (rejection_subsample requires
                # values in (0, 1])
                positive = raw > 0.0
                candidate = rejection_subsample(
                    population[positive], raw[positive], subsample_rng
                )
            except (FilterCollapseError, DegenerateLikelihoodError):
                candidate = None
            if candidate is not None and candidate.shape[0] >= config.collapse_fraction * population.shape[0]:
                retained_pop = candidate
                break
            if attempt == 0:
                sigma_used *= 2.0
                subsample_rng = np.random.default_rng(iteration_seed(seed, j, 2))
        if retained_pop is None:
            partial = LoopResult(iterations, "filter_collapse", prior_summary, record)
            raise LoopAbortedError(
                f"filter collapse at iteration {j} despite sigma inflation", partial
            )

        record = record.with_term(pulse, measurement.m, sigma_used)
        posterior = weighted_moments(population, normalized)

        compression = posterior.major_eigenvalue / summary.major_eigenvalue
        duration_ratio = pulse.duration / t_prev
        iterations.append(
            IterationOutput(
                j=j,
                pulse=optimized,
                measurement=measurement,
                sigma_used=sigma_used,
                posterior=posterior,
                posterior_population=retained_pop,
                retained=retained_pop.shape[0],
                compression=compression,
                duration_ratio=duration_ratio,
            )
        )
        history.append(posterior)
        summary = posterior
        t_prev = pulse.duration

        if posterior.major_eigenvalue <= config.target_major_uncertainty:
            reason = TARGET_MET
            break
        if stall_diagnostic(history, config.stall_window, config.stall_ratio) == STALLED:
            reason = STALLED
            break
    return LoopResult(iterations, reason, prior_summary, record)
