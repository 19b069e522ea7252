"""Information-gain objectives for the pulse search.

* ``apc_cost``   trace of the anticipated posterior covariance: the posterior
  covariance conditioned on each hypothetical outcome m, averaged over the
  outcome likelihood Q(m) on a quadrature grid.
* ``maxpc_cost`` worst-case (over plausible outcomes) posterior covariance trace.
* ``mfi_cost``   population-averaged Fisher information, discounted when the
  directional derivative of the response flips sign across the population
  (an oscillatory response that would alias the measurement).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fisher import fisher_batch
from .model import ControlWaveform, ModelSpec, batch_response, response_gradient
from .params import PAPER, CovarianceSummary, residual_denominator


class DegeneratePulseError(RuntimeError):
    """Every hypothetical outcome's likelihood underflowed for this pulse."""


class UndefinedReferenceDirectionError(RuntimeError):
    """Directional derivative at the population mean vanishes; the oscillation
    penalty has no reference sign."""


@dataclass(frozen=True)
class OutcomeGrid:
    values: np.ndarray
    weights: np.ndarray  # trapezoid weights; sum equals the grid span


def outcome_grid(p0: np.ndarray, sigma_hat: float, grid_size: int = 64) -> OutcomeGrid:
    """Uniform grid covering the population's predicted responses +/- 3 sigma,
    clipped to [0, 1]."""
    lo = max(0.0, float(np.min(p0)) - 3.0 * sigma_hat)
    hi = min(1.0, float(np.max(p0)) + 3.0 * sigma_hat)
    if hi <= lo:
        lo, hi = max(0.0, lo - sigma_hat), min(1.0, hi + sigma_hat)
    values = np.linspace(lo, hi, grid_size)
    weights = np.full(grid_size, (hi - lo) / (grid_size - 1))
    weights[0] *= 0.5
    weights[-1] *= 0.5
    return OutcomeGrid(values=values, weights=weights)


@dataclass(frozen=True)
class CostReport:
    value: float
    per_outcome: list[tuple[float, float, float]] | None = None  # (m, Q(m), trace term)
    anticipated_covariance: np.ndarray | None = None


def _diagonal(A, p: int) -> np.ndarray:
    if A is None:
        return np.ones(p)
    A = np.asarray(A, dtype=float)
    if A.ndim == 2:
        return np.diag(A).copy()
    if A.shape != (p,):
        raise ValueError(f"preconditioner has shape {A.shape}, expected ({p},) or ({p},{p})")
    return A


def _outcome_weights(population, pulse, model, sigma_hat, grid_size, convention, p0=None):
    """Shared APC/MaxPC machinery: the (outcome, sample) likelihood table,
    normalised per outcome, plus the outcome likelihood Q."""
    G = np.atleast_2d(np.asarray(population, dtype=float))
    if G.shape[0] < 50:
        raise ValueError("population too small for outcome averaging (need >= 50)")
    if not sigma_hat > 0.0:
        raise ValueError("sigma_hat must be positive")
    if p0 is None:
        p0 = batch_response(model, G, pulse)
    grid = outcome_grid(p0, sigma_hat, grid_size)
    denom = residual_denominator(sigma_hat, convention)
    # (K, S) likelihood table; residuals are bounded by 1 so no max-shift needed
    raw = p0[None, :] - grid.values[:, None]
    np.multiply(raw, raw, out=raw)
    raw *= -1.0 / denom
    np.exp(raw, out=raw)
    N = raw.sum(axis=1)
    if not np.any(N > 0.0):
        raise DegeneratePulseError("outcome likelihoods underflowed across the whole grid")
    Z = float(np.dot(grid.weights, N))
    Q = N / Z
    safe_N = np.where(N > 0.0, N, 1.0)
    w_norm = raw / safe_N[:, None]
    return G, grid, Q, w_norm


def _outcome_traces(G, w_norm, a_diag):
    """tr(A Sigma(m_k)) per outcome from first/second weighted moments; avoids
    materialising the per-outcome covariance tensors."""
    m1 = w_norm @ G  # (K, p)
    m2 = w_norm @ (G * G)
    var = np.maximum(m2 - m1 * m1, 0.0)
    return var @ a_diag


def _outcome_covariances(G, w_norm):
    means = w_norm @ G
    dev = G[None, :, :] - means[:, None, :]
    return np.einsum("ks,ksi,ksj->kij", w_norm, dev, dev)


def apc_cost(
    population,
    pulse: ControlWaveform,
    model: ModelSpec,
    sigma_hat: float,
    A=None,
    grid_size: int = 64,
    convention: str = PAPER,
    p0=None,
    detail: bool = True,
) -> CostReport:
    """``detail=False`` skips the per-outcome covariance tensors and the
    anticipated-covariance report, returning only the scalar (the optimizer's
    hot path); the scalar is identical either way."""
    G, grid, Q, w_norm = _outcome_weights(
        population, pulse, model, sigma_hat, grid_size, convention, p0
    )
    a_diag = _diagonal(A, G.shape[1])
    if not detail:
        traces = _outcome_traces(G, w_norm, a_diag)
        return CostReport(value=float(np.sum(grid.weights * Q * traces)))
    cov = _outcome_covariances(G, w_norm)
    traces = np.einsum("i,kii->k", a_diag, cov)
    value = float(np.sum(grid.weights * Q * traces))
    xi = np.einsum("k,kij->ij", grid.weights * Q, cov)
    per_outcome = [
        (float(m), float(q), float(t)) for m, q, t in zip(grid.values, Q, traces)
    ]
    return CostReport(value=value, per_outcome=per_outcome, anticipated_covariance=xi)


def maxpc_cost(
    population,
    pulse: ControlWaveform,
    model: ModelSpec,
    sigma_hat: float,
    A=None,
    grid_size: int = 64,
    convention: str = PAPER,
    q_floor: float = 1e-6,
    p0=None,
    detail: bool = True,
) -> CostReport:
    G, grid, Q, w_norm = _outcome_weights(
        population, pulse, model, sigma_hat, grid_size, convention, p0
    )
    a_diag = _diagonal(A, G.shape[1])
    if detail:
        traces = np.einsum("i,kii->k", a_diag, _outcome_covariances(G, w_norm))
    else:
        traces = _outcome_traces(G, w_norm, a_diag)
    plausible = Q > q_floor
    if not np.any(plausible):
        raise DegeneratePulseError("no outcome exceeds the plausibility floor")
    value = float(np.max(traces[plausible]))
    per_outcome = [
        (float(m), float(q), float(t)) for m, q, t in zip(grid.values, Q, traces)
    ]
    return CostReport(value=value, per_outcome=per_outcome)


def mfi_cost(
    population,
    pulse: ControlWaveform,
    model: ModelSpec,
    prior_summary: CovarianceSummary,
    alpha: float = 1.0,
    beta: float = 0.05,
) -> float:
    """Negative mean Fisher information with an oscillation penalty.

    The penalty fraction M counts samples whose response gradient, projected on
    the prior major-uncertainty direction, points opposite to the projection at
    the population mean.
    """
    G = np.atleast_2d(np.asarray(population, dtype=float))
    fi, grad, _ = fisher_batch(model, G, pulse)
    mean_fi = float(np.mean(fi))
    gamma = prior_summary.major_eigenvector
    ref = float(np.dot(gamma, response_gradient(model, prior_summary.mean, pulse)))
    if ref == 0.0:
        raise UndefinedReferenceDirectionError(
            "zero directional derivative at the population mean"
        )
    ratios = (grad @ gamma) / ref
    M = float(np.mean(ratios < 0.0))
    return -mean_fi * (1.0 - alpha * max(M - beta, 0.0))
