"""Fisher information for the two-outcome return-probability measurement.

The measurement has outcomes {P0, 1 - P0}, so the information matrix is the
rank-1 outer product f (x) f with f = (P0 - P0^2)^{-1/2} grad P0.  The scalar
information is |f|^2 and the information direction is the unit gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ControlWaveform, ModelSpec, batch_response, batch_response_gradient
from .pulses import RABI, PulseFamily, PulseChoice, render

VARIANCE_CLAMP = 1e-12  # floor on P0 - P0^2 near deterministic responses


@dataclass(frozen=True)
class FisherResult:
    fim: np.ndarray
    fi: float
    direction: np.ndarray | None
    clamped: bool = False

    @property
    def direction_defined(self) -> bool:
        return self.direction is not None


def fisher_batch(model: ModelSpec, G: np.ndarray, pulse: ControlWaveform):
    """Per-sample scalar FI and gradients; returns (fi (S,), grad (S, p), clamped (S,))."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    p0 = batch_response(model, G, pulse)
    grad = batch_response_gradient(model, G, pulse)
    var = p0 - p0 * p0
    clamped = var < VARIANCE_CLAMP
    var = np.maximum(var, VARIANCE_CLAMP)
    fi = np.sum(grad * grad, axis=1) / var
    return fi, grad, clamped


def fisher(model: ModelSpec, g: np.ndarray, pulse: ControlWaveform) -> FisherResult:
    fi, grad, clamped = fisher_batch(model, np.asarray(g, dtype=float)[None, :], pulse)
    grad = grad[0]
    norm = float(np.linalg.norm(grad))
    if norm == 0.0:
        return FisherResult(
            fim=np.zeros((grad.shape[0], grad.shape[0])),
            fi=0.0,
            direction=None,
            clamped=bool(clamped[0]),
        )
    p0 = batch_response(model, np.asarray(g, dtype=float)[None, :], pulse)[0]
    var = max(p0 - p0 * p0, VARIANCE_CLAMP)
    f = grad / np.sqrt(var)
    return FisherResult(
        fim=np.outer(f, f), fi=float(fi[0]), direction=grad / norm, clamped=bool(clamped[0])
    )


def fi_scan(
    model: ModelSpec,
    g: np.ndarray,
    T_grid: np.ndarray,
    family: PulseFamily | None = None,
    omega_estimate: float = 1.0,
) -> list[tuple[float, float, float]]:
    """Scan scalar FI over pulse durations; returns (T, fi, theta = fi / T^2) rows.

    Defaults to the single-segment unit-amplitude family, whose information
    envelope grows quadratically in T with bounded oscillatory modulation.
    """
    T_grid = np.asarray(T_grid, dtype=float)
    if T_grid.ndim != 1 or np.any(T_grid <= 0) or np.any(np.diff(T_grid) <= 0):
        raise ValueError("T_grid must be ascending and positive")
    if family is None:
        family = PulseFamily(kind=RABI)
    rows = []
    for T in T_grid:
        if family.kind == RABI:
            variables = np.array([T])
        else:
            raise ValueError("fi_scan supports duration-only families (rabi)")
        pulse = render(family, variables, omega_estimate)
        res = fisher(model, g, pulse)
        rows.append((float(T), res.fi, res.fi / T**2))
    return rows


def optimal_duration_hint(covariance: np.ndarray) -> float:
    """Seed duration for the pulse search: trace of covariance^{-1/2} (reciprocal
    Hz, read as seconds with hbar = 1)."""
    cov = np.asarray(covariance, dtype=float)
    evals = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    if np.min(evals) <= 0.0:
        raise ValueError("covariance must be positive definite")
    return float(np.sum(1.0 / np.sqrt(evals)))
