"""Derivative-free pulse search: multistart Nelder-Mead for small variable
counts, differential evolution for large ones, over the family's box bounds.
The duration variable is seeded near the covariance-derived hint and capped at
twice the previous iteration's duration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sopt

from .costs import (
    DegeneratePulseError,
    UndefinedReferenceDirectionError,
    apc_cost,
    maxpc_cost,
    mfi_cost,
)
from .model import ModelEvaluationError, ModelSpec, batch_response
from .params import PAPER, SIGMA_FLOOR, CovarianceSummary, weighted_moments
from .pulses import BANG_BANG, PWC_AMPLITUDE, RABI, RAMSEY, PulseChoice, PulseFamily, render

NELDER_MEAD = "nelder_mead"
DIFFERENTIAL_EVOLUTION = "differential_evolution"

COST_KINDS = ("apc", "maxpc", "mfi")


class OptimizationFailedError(RuntimeError):
    def __init__(self, diagnostics):
        super().__init__(f"every restart failed cost evaluation: {diagnostics}")
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 8
    budget: int = 300  # cost evaluations per restart
    method: str | None = None  # None = auto by variable count
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.budget < 50:
            raise ValueError("budget must be >= 50")
        if self.method not in (None, NELDER_MEAD, DIFFERENTIAL_EVOLUTION):
            raise ValueError(f"unknown optimizer method {self.method!r}")


@dataclass(frozen=True)
class OptimizedPulse:
    choice: PulseChoice
    cost: float
    family_tag: str
    evaluations_used: int


def planned_sigma_hat(p0: np.ndarray, shots_planned: int) -> float:
    """Anticipated measurement std for a pulse: binomial noise at the
    population-mean predicted response, floored like real records."""
    m_bar = float(np.mean(p0))
    return max(SIGMA_FLOOR, math.sqrt(max(m_bar * (1.0 - m_bar), 0.0) / shots_planned))


class _CostEvaluator:
    """Variables -> scalar cost, with failure-to-+inf and evaluation counting."""

    def __init__(
        self,
        family: PulseFamily,
        population: np.ndarray,
        model: ModelSpec,
        cost_kind: str,
        shots_planned: int,
        A,
        grid_size: int,
        convention: str,
        alpha: float,
        beta: float,
        omega_estimate: float,
        prior_summary: CovarianceSummary,
    ):
        self.family = family
        self.population = population
        self.model = model
        self.cost_kind = cost_kind
        self.shots_planned = shots_planned
        self.A = A
        self.grid_size = grid_size
        self.convention = convention
        self.alpha = alpha
        self.beta = beta
        self.omega_estimate = omega_estimate
        self.prior_summary = prior_summary
        self.evaluations = 0
        self.last_error: str | None = None

    def __call__(self, variables) -> float:
        self.evaluations += 1
        try:
            pulse = render(self.family, np.asarray(variables, dtype=float), self.omega_estimate)
            if self.cost_kind == "mfi":
                return mfi_cost(
                    self.population, pulse, self.model, self.prior_summary,
                    alpha=self.alpha, beta=self.beta,
                )
            p0 = batch_response(self.model, self.population, pulse)
            sigma_hat = planned_sigma_hat(p0, self.shots_planned)
            fn = apc_cost if self.cost_kind == "apc" else maxpc_cost
            report = fn(
                self.population, pulse, self.model, sigma_hat,
                A=self.A, grid_size=self.grid_size, convention=self.convention, p0=p0,
                detail=False,
            )
            return report.value
        except (
            ValueError,
            DegeneratePulseError,
            UndefinedReferenceDirectionError,
            ModelEvaluationError,
        ) as exc:
            self.last_error = f"{type(exc).__name__}: {exc}"
            return math.inf


def _hint_point(family: PulseFamily, bounds, duration_hint: float) -> np.ndarray:
    """Un-jittered seed: duration at the hint (clipped), unit amplitudes, zero phases."""
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    if family.kind in (RABI, RAMSEY):
        x = np.array([duration_hint])
    elif family.kind == BANG_BANG:
        n = family.n_segments
        n_dur = 2 * n - 1
        x = np.concatenate([np.full(n_dur, duration_hint / n_dur), np.zeros(n - 1)])
    elif family.kind == PWC_AMPLITUDE:
        x = np.concatenate([np.ones(len(bounds) - 1), [duration_hint]])
    else:  # phase_only
        x = np.concatenate([np.zeros(len(bounds) - 1), [duration_hint]])
    return np.clip(x, lo, hi)


def _restart_start(family, bounds, duration_hint, rng) -> np.ndarray:
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    x = lo + rng.random(len(bounds)) * (hi - lo)
    jittered_T = duration_hint * (0.7 + 0.6 * rng.random())
    if family.kind == BANG_BANG:
        n_dur = 2 * family.n_segments - 1
        x[:n_dur] = np.clip(jittered_T / n_dur, lo[:n_dur], hi[:n_dur])
    else:
        x[-1 if family.kind not in (RABI, RAMSEY) else 0] = np.clip(
            jittered_T, lo[-1], hi[-1]
        )
    return x


def _run_nelder_mead(evaluator, x0, bounds, budget):
    res = sopt.minimize(
        evaluator,
        x0,
        method="Nelder-Mead",
        bounds=bounds,
        options={"maxfev": budget, "xatol": 1e-10, "fatol": 1e-14},
    )
    return np.asarray(res.x), float(res.fun)

def _run_differential_evolution(evaluator, x0, bounds, budget, rng):
    nvars = len(bounds)
    npop = int(np.clip(budget // 10, 8, 40))
    maxiter = max(1, budget // npop - 1)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    init = lo + rng.random((npop, nvars)) * (hi - lo)
    init[0] = x0
    res = sopt.differential_evolution(
        evaluator,
        bounds=bounds,
        maxiter=maxiter,
        init=init,
        seed=int(rng.integers(2**31 - 1)),
        tol=0.0,
        polish=False,
        updating="deferred",
    )
    return np.asarray(res.x), float(res.fun)


def optimize_pulse(
    families: list[PulseFamily],
    population: np.ndarray,
    model: ModelSpec,
    cost_kind: str,
    config: OptimizerConfig,
    t_prev: float,
    shots_planned: int = 1000,
    duration_hint: float | None = None,
    omega_estimate: float = 1.0,
    A=None,
    grid_size: int = 64,
    convention: str = PAPER,
    alpha: float = 1.0,
    beta: float = 0.05,
) -> OptimizedPulse:
    """Minimize the chosen cost over every family's variable box and return the
    best pulse across families.  Duration is constrained to [t_prev/4, 2*t_prev]
    (and the family cap)."""
    if cost_kind not in COST_KINDS:
        raise ValueError(f"unknown cost kind {cost_kind!r}")
    if not t_prev > 0.0:
        raise ValueError("t_prev must be positive")
    population = np.atleast_2d(np.asarray(population, dtype=float))
    prior_summary = weighted_moments(
        population, np.full(population.shape[0], 1.0 / population.shape[0])
    )
    duration_bounds = (t_prev / 4.0, 2.0 * t_prev)
    hint = duration_hint if duration_hint is not None else t_prev

    best: OptimizedPulse | None = None
    failures = []
    total_evals = 0
    for fam_idx, family in enumerate(families):
        bounds = family.variable_bounds(duration_bounds)
        evaluator = _CostEvaluator(
            family, population, model, cost_kind, shots_planned, A, grid_size,
            convention, alpha, beta, omega_estimate, prior_summary,
        )
        method = config.method or (
            DIFFERENTIAL_EVOLUTION if len(bounds) >= 10 else NELDER_MEAD
        )
        fam_best_x = None
        fam_best_cost = math.inf
        # the un-jittered hint point is always a candidate
        hint_x = _hint_point(family, bounds, hint)
        hint_cost = evaluator(hint_x)
        if hint_cost < fam_best_cost:
            fam_best_x, fam_best_cost = hint_x, hint_cost
        for r in range(config.restarts):
            rng = np.random.default_rng([config.seed, fam_idx, r])
            x0 = _restart_start(family, bounds, hint, rng)
            if method == NELDER_MEAD:
                x, fun = _run_nelder_mead(evaluator, x0, bounds, config.budget)
            else:
                x, fun = _run_differential_evolution(evaluator, x0, bounds, config.budget, rng)
            x = np.clip(x, [b[0] for b in bounds], [b[1] for b in bounds])
            fun = evaluator(x)
            if fun < fam_best_cost:
                fam_best_x, fam_best_cost = x, fun
        total_evals += evaluator.evaluations
        if not math.isfinite(fam_best_cost):
            failures.append(f"{family.kind}: {evaluator.last_error}")
            continue
        choice = PulseChoice.make(family, fam_best_x, omega_estimate)
        candidate = OptimizedPulse(
            choice=choice,
            cost=fam_best_cost,
            family_tag=family.kind,
            evaluations_used=evaluator.evaluations,
        )
        if best is None or candidate.cost < best.cost:
            best = candidate
    if best is None:
        raise OptimizationFailedError(failures)
    return best
