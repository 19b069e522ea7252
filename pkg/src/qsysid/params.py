"""Parameter-space machinery: Gaussian priors, the running NLL record, particle
populations, importance/rejection sampling, and weighted sample moments.

A parameter vector is a plain 1-D float array of length p; a population is a
(S, p) array.  The posterior is represented exactly as (Gaussian prior + the
list of measurement terms) and re-evaluated on demand rather than stored as a
density estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg as sla

from .model import ControlWaveform, ModelSpec, batch_response

PAPER = "paper"
GAUSSIAN = "gaussian"
CONVENTIONS = (PAPER, GAUSSIAN)

SIGMA_FLOOR = 1e-3  # probability-scale floor; finite shots can report sigma-hat = 0


class ProposalMismatchError(RuntimeError):
    """Importance sampling acceptance collapsed; proposal is far from the target."""


class FilterCollapseError(RuntimeError):
    """Rejection subsampling retained no samples."""


class DegenerateLikelihoodError(RuntimeError):
    """All sample likelihoods underflowed to zero."""


def residual_denominator(sigma: float, convention: str = PAPER) -> float:
    """Denominator of the squared residual in the measurement NLL term.

    ``paper`` uses (2 sigma)^2 = 4 sigma^2; ``gaussian`` the standard 2 sigma^2.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown likelihood variance convention {convention!r}")
    return 4.0 * sigma**2 if convention == PAPER else 2.0 * sigma**2


@dataclass(frozen=True)
class GaussianDensity:
    """Multivariate Normal over model parameters (mean in Hz, covariance in Hz^2)."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        p = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (p, p):
            raise ValueError(f"inconsistent shapes: mean {mean.shape}, covariance {cov.shape}")
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise ValueError("non-finite prior moments")
        scale = max(np.max(np.abs(cov)), 1e-300)
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise ValueError("covariance is not symmetric")
        evals = np.linalg.eigvalsh(0.5 * (cov + cov.T))
        if np.min(evals) <= 0:
            raise ValueError(f"covariance not positive definite (min eigenvalue {np.min(evals)})")
        object.__setattr__(self, "_chol", np.linalg.cholesky(cov))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def log_pdf(self, G: np.ndarray) -> np.ndarray:
        """Log density, full normalization included; vectorized over rows."""
        G = np.atleast_2d(np.asarray(G, dtype=float))
        dev = G - self.mean
        y = sla.solve_triangular(self._chol, dev.T, lower=True)
        maha = np.sum(y * y, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(self._chol)))
        return -0.5 * (maha + logdet + self.dim * np.log(2.0 * np.pi))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        return self.mean + z @ self._chol.T


@dataclass(frozen=True)
class MeasurementTerm:
    pulse: ControlWaveform
    m: float
    sigma: float

    def __post_init__(self):
        if not 0.0 <= self.m <= 1.0:
            raise ValueError(f"outcome m = {self.m} outside [0, 1]")
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class NllRecord:
    """Exact posterior NLL: Gaussian prior plus one quadratic term per measurement."""

    prior: GaussianDensity
    terms: tuple[MeasurementTerm, ...] = ()
    convention: str = PAPER

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown likelihood variance convention {self.convention!r}")

    def with_term(self, pulse: ControlWaveform, m: float, sigma: float) -> "NllRecord":
        sigma = max(float(sigma), SIGMA_FLOOR)
        return replace(self, terms=self.terms + (MeasurementTerm(pulse, float(m), sigma),))


def nll_evaluate(record: NllRecord, g: np.ndarray, model: ModelSpec) -> float:
    return float(nll_batch(record, np.asarray(g, dtype=float)[None, :], model)[0])


def nll_batch(record: NllRecord, G: np.ndarray, model: ModelSpec) -> np.ndarray:
    """NLL of the record at each row of ``G`` (up to no additive fudging: the
    Gaussian normalization constant is included)."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    total = -record.prior.log_pdf(G)
    for term in record.terms:
        p0 = batch_response(model, G, term.pulse)
        total = total + (p0 - term.m) ** 2 / residual_denominator(term.sigma, record.convention)
    if not np.all(np.isfinite(total)):
        raise ValueError("non-finite NLL")
    return total


@dataclass(frozen=True)
class CovarianceSummary:
    """Weighted sample mean/covariance plus the major axis of the deviation matrix.

    ``major_eigenvalue`` is the largest eigenvalue of covariance^{1/2} (units Hz);
    ``major_eigenvector`` is the matching unit direction in parameter space.
    """

    mean: np.ndarray
    covariance: np.ndarray
    major_eigenvalue: float
    major_eigenvector: np.ndarray
    degenerate: bool = False

    @classmethod
    def of_gaussian(cls, density: GaussianDensity) -> "CovarianceSummary":
        return summarize_moments(density.mean, density.covariance)


def summarize_moments(mean: np.ndarray, covariance: np.ndarray) -> CovarianceSummary:
    cov = 0.5 * (covariance + covariance.T)
    evals, evecs = np.linalg.eigh(cov)
    lam_max = float(np.sqrt(max(evals[-1], 0.0)))
    degenerate = bool(evals[0] <= 0.0)
    return CovarianceSummary(
        mean=np.asarray(mean, dtype=float),
        covariance=cov,
        major_eigenvalue=lam_max,
        major_eigenvector=evecs[:, -1],
        degenerate=degenerate,
    )


def weighted_moments(population: np.ndarray, weights: np.ndarray) -> CovarianceSummary:
    """Weighted mean and covariance of a population; weights must sum to 1."""
    G = np.atleast_2d(np.asarray(population, dtype=float))
    w = np.asarray(weights, dtype=float)
    if w.shape != (G.shape[0],):
        raise ValueError("weights length must match population size")
    if abs(w.sum() - 1.0) > 1e-10:
        raise ValueError(f"weights sum to {w.sum()}, expected 1")
    mean = w @ G
    dev = G - mean
    cov = (dev * w[:, None]).T @ dev
    return summarize_moments(mean, cov)


def normalized_likelihoods(
    population: np.ndarray,
    pulse: ControlWaveform,
    m: float,
    sigma: float,
    model: ModelSpec,
    convention: str = PAPER,
):
    """Per-sample measurement likelihoods and their sample-normalised form.

    Returns ``(raw, normalized, N)`` with raw_s = exp(-(P0_s - m)^2 / denom),
    N = sum(raw), normalized = raw / N.
    """
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")
    p0 = batch_response(model, np.atleast_2d(population), pulse)
    raw = np.exp(-((p0 - m) ** 2) / residual_denominator(sigma, convention))
    N = float(raw.sum())
    if N <= 0.0:
        raise DegenerateLikelihoodError(
            "all likelihoods underflowed; no samples consistent with the outcome"
        )
    return raw, raw / N, N


def rejection_subsample(
    population: np.ndarray, likelihoods: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Retain each sample with probability equal to its likelihood (in (0, 1])."""
    G = np.atleast_2d(np.asarray(population, dtype=float))
    lk = np.asarray(likelihoods, dtype=float)
    if lk.shape != (G.shape[0],):
        raise ValueError("likelihood vector length must match population size")
    if np.any(lk <= 0.0) or np.any(lk > 1.0):
        raise ValueError("likelihoods must lie in (0, 1]")
    keep = rng.random(G.shape[0]) < lk
    if not np.any(keep):
        raise FilterCollapseError("rejection subsample retained zero samples")
    return G[keep]


def importance_sample_prior(
    record: NllRecord,
    proposal: GaussianDensity,
    target_size: int,
    rng: np.random.Generator,
    model: ModelSpec,
    batch_factor: int = 4,
    max_dead_batches: int = 100,
    min_acceptance: float = 1e-4,
) -> np.ndarray:
    """Sample a population from exp(-NLL) by importance-filtering Normal presamples.

    Presample batches of ``batch_factor * target_size`` points are drawn from the
    proposal; each point gets a score proportional to target/proposal density,
    normalized so the batch maximum is 1, and is retained with that probability.
    Batches repeat until ``target_size`` points have been collected.
    """
    if target_size < 100:
        raise ValueError("target_size must be at least 100")
    accepted: list[np.ndarray] = []
    n_accepted = 0
    batch = batch_factor * target_size
    low_batches = 0
    while n_accepted < target_size:
        presample = proposal.sample(rng, batch)
        log_target = -nll_batch(record, presample, model)
        log_ratio = log_target - proposal.log_pdf(presample)
        scores = np.exp(log_ratio - np.max(log_ratio))
        keep = rng.random(batch) < scores
        kept = presample[keep]
        rate = kept.shape[0] / batch
        if rate < min_acceptance:
            low_batches += 1
            if low_batches >= max_dead_batches:
                raise ProposalMismatchError(
                    f"acceptance below {min_acceptance} for {max_dead_batches} consecutive batches"
                )
        else:
            low_batches = 0
        accepted.append(kept)
        n_accepted += kept.shape[0]
    out = np.concatenate(accepted, axis=0)[:target_size]
    return out
