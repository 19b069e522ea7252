"""Closed-loop Bayesian calibration of small quantum-device Hamiltonians.

The package iteratively chooses information-optimal control pulses, runs
(simulated or remote) measurements, and filters a particle population over
model parameters into successively tighter posteriors.
"""

from .backends import MeasurementRecord, RemoteBackend, SimulatedBackend, TrueSystem
from .fisher import FisherResult, fi_scan, fisher, optimal_duration_hint
from .loop import (
    IterationOutput,
    LoopConfig,
    LoopResult,
    projection_axes,
    run_loop,
    stall_diagnostic,
)
from .model import ControlWaveform, EvolutionResult, ModelSpec, evolve, hamiltonian
from .optimizer import OptimizedPulse, OptimizerConfig, optimize_pulse
from .params import (
    CovarianceSummary,
    GaussianDensity,
    NllRecord,
    importance_sample_prior,
    nll_evaluate,
    normalized_likelihoods,
    rejection_subsample,
    weighted_moments,
)
from .pulses import PulseChoice, PulseFamily, duration_of, render

__version__ = "0.1.0"
