"""Audit a run log: rebuild every posterior from the logged prior, seeds and
(pulse, m, sigma) sequence, and require bitwise agreement with the logged
moments.  JSON serialization round-trips float64 exactly, so any divergence
means the log and the code disagree."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .loop import _proposal_from, iteration_seed
from .model import ControlWaveform, ModelSpec
from .params import (
    CovarianceSummary,
    GaussianDensity,
    NllRecord,
    importance_sample_prior,
    normalized_likelihoods,
    weighted_moments,
)


@dataclass(frozen=True)
class ReplayReport:
    ok: bool
    iterations_checked: int
    first_divergence: int | None = None
    detail: str = ""


def waveform_from_wire(segments) -> ControlWaveform:
    return ControlWaveform(
        channels=tuple(
            tuple((float(d), complex(re, im)) for d, re, im in ch) for ch in segments
        )
    )


def replay_run(run_jsonl_path) -> ReplayReport:
    with open(run_jsonl_path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines:
        return ReplayReport(ok=True, iterations_checked=0)
    header = lines[0]
    if header.get("kind") != "header":
        raise ValueError("run log does not start with a header line")
    model = ModelSpec.from_family(header["model_family"])
    prior = GaussianDensity(
        np.asarray(header["prior_mean"], float),
        np.asarray(header["prior_covariance"], float),
    )
    seed = header["seed"]
    population_size = header["population_size"]
    convention = header["convention"]

    record = NllRecord(prior=prior, convention=convention)
    summary = CovarianceSummary.of_gaussian(prior)
    checked = 0
    for line in lines[1:]:
        if line.get("kind") != "iteration":
            continue
        j = line["j"]
        proposal = _proposal_from(summary)
        rng = np.random.default_rng(iteration_seed(seed, j, 0))
        population = importance_sample_prior(record, proposal, population_size, rng, model)
        pulse = waveform_from_wire(line["segments"])
        _, normalized, _ = normalized_likelihoods(
            population, pulse, line["m"], line["sigma_used"], model, convention
        )
        posterior = weighted_moments(population, normalized)
        logged_mean = np.asarray(line["posterior_mean"], float)
        logged_cov = np.asarray(line["posterior_covariance"], float)
        if not np.array_equal(posterior.mean, logged_mean):
            return ReplayReport(
                ok=False,
                iterations_checked=checked,
                first_divergence=j,
                detail=f"mean {posterior.mean.tolist()} != logged {logged_mean.tolist()}",
            )
        if not np.array_equal(posterior.covariance, logged_cov):
            return ReplayReport(
                ok=False,
                iterations_checked=checked,
                first_divergence=j,
                detail="posterior covariance differs from log",
            )
        record = record.with_term(pulse, line["m"], line["sigma_used"])
        summary = posterior
        checked += 1
    return ReplayReport(ok=True, iterations_checked=checked)
