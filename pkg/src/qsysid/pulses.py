"""Control-pulse families and their rendering into piecewise-constant waveforms.

Each family maps a flat variable vector (with box bounds) to a ControlWaveform:

* ``rabi``           variables (T,): one unit-amplitude segment.
* ``ramsey``         variables (T,): +/- pi/2 kick pair around a free segment;
                     kicks are finite-width approximations of delta kicks.
* ``pwc_amplitude``  variables (a_1..a_n per channel, T): n equal-width real
                     segments per channel, amplitudes in [-1, 1].
* ``bang_bang``      variables (d_1..d_n, d'_1..d'_{n-1}, phi_2..phi_n):
                     alternating on/off segments, unit-magnitude on-values with
                     tunable phases, first segment on with phase 0.
* ``phase_only``     variables (phi_1..phi_n, T): n equal-width unit-magnitude
                     segments with tunable phases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ControlWaveform

RABI = "rabi"
RAMSEY = "ramsey"
PWC_AMPLITUDE = "pwc_amplitude"
BANG_BANG = "bang_bang"
PHASE_ONLY = "phase_only"

KINDS = (RABI, RAMSEY, PWC_AMPLITUDE, BANG_BANG, PHASE_ONLY)


@dataclass(frozen=True)
class PulseFamily:
    kind: str
    n_segments: int = 1
    channel_count: int = 1
    duration_cap: float = math.inf

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown pulse family kind {self.kind!r}")
        if self.kind in (PWC_AMPLITUDE, BANG_BANG, PHASE_ONLY) and self.n_segments < 1:
            raise ValueError("n_segments must be >= 1")
        if self.channel_count not in (1, 2):
            raise ValueError("channel_count must be 1 or 2")
        if self.channel_count == 2 and self.kind != PWC_AMPLITUDE:
            raise ValueError(f"{self.kind} supports a single channel only")

    @property
    def n_variables(self) -> int:
        if self.kind in (RABI, RAMSEY):
            return 1
        if self.kind == PWC_AMPLITUDE:
            return self.n_segments * self.channel_count + 1
        if self.kind == BANG_BANG:
            return 3 * self.n_segments - 2
        return self.n_segments + 1  # phase_only

    def variable_bounds(self, duration_bounds: tuple[float, float]) -> list[tuple[float, float]]:
        """Box bounds for the flat variable vector given bounds on total duration.

        For bang_bang the duration cap is spread across the per-segment duration
        variables so the boxes alone enforce the total-duration bound.
        """
        t_lo, t_hi = duration_bounds
        t_hi = min(t_hi, self.duration_cap)
        if not (0.0 < t_lo <= t_hi):
            raise ValueError(f"invalid duration bounds ({t_lo}, {t_hi})")
        if self.kind in (RABI, RAMSEY):
            return [(t_lo, t_hi)]
        if self.kind == PWC_AMPLITUDE:
            return [(-1.0, 1.0)] * (self.n_segments * self.channel_count) + [(t_lo, t_hi)]
        if self.kind == PHASE_ONLY:
            return [(-math.pi, math.pi)] * self.n_segments + [(t_lo, t_hi)]
        # bang_bang: n on-durations + (n-1) off-durations + (n-1) phases
        n = self.n_segments
        n_dur = 2 * n - 1
        per_seg_hi = t_hi / n_dur
        return [(0.0, per_seg_hi)] * n_dur + [(-math.pi, math.pi)] * (n - 1)


def render(family: PulseFamily, variables, omega_estimate: float = 1.0) -> ControlWaveform:
    """Render a variable vector to a waveform; raises on non-positive or
    cap-exceeding durations."""
    v = np.asarray(variables, dtype=float)
    if v.shape != (family.n_variables,):
        raise ValueError(f"{family.kind} expects {family.n_variables} variables, got {v.shape}")

    if family.kind == RABI:
        T = float(v[0])
        _check_duration(T, family)
        return ControlWaveform(channels=(((T, 1.0 + 0.0j),),))

    if family.kind == RAMSEY:
        if not omega_estimate > 0.0:
            raise ValueError("ramsey rendering needs a positive omega estimate")
        T = float(v[0])
        _check_duration(T, family)
        width = min(0.01 * T, math.pi / (20.0 * omega_estimate))
        amp = math.pi / (2.0 * omega_estimate * width)
        free = T - 2.0 * width
        if free <= 0.0:
            raise ValueError(f"ramsey duration {T} too short for kick width {width}")
        return ControlWaveform(
            channels=(((width, amp + 0j), (free, 0j), (width, -amp + 0j)),)
        )

    if family.kind == PWC_AMPLITUDE:
        n, nch = family.n_segments, family.channel_count
        T = float(v[-1])
        _check_duration(T, family)
        amps = v[:-1].reshape(nch, n)
        if np.any(np.abs(amps) > 1.0 + 1e-12):
            raise ValueError("pwc amplitudes must lie in [-1, 1]")
        width = T / n
        channels = tuple(
            tuple((width, complex(a)) for a in amps[q]) for q in range(nch)
        )
        return ControlWaveform(channels=channels)

    if family.kind == PHASE_ONLY:
        n = family.n_segments
        T = float(v[-1])
        _check_duration(T, family)
        width = T / n
        channels = ((tuple((width, complex(np.exp(1j * phi))) for phi in v[:n])),)
        return ControlWaveform(channels=channels)

    # bang_bang
    n = family.n_segments
    on_durs = v[:n]
    off_durs = v[n : 2 * n - 1]
    phases = np.concatenate([[0.0], v[2 * n - 1 :]])
    total = float(on_durs.sum() + off_durs.sum())
    _check_duration(total, family)
    segments: list[tuple[float, complex]] = []
    for k in range(n):
        if on_durs[k] > 0.0:
            segments.append((float(on_durs[k]), complex(np.exp(1j * phases[k]))))
        if k < n - 1 and off_durs[k] > 0.0:
            segments.append((float(off_durs[k]), 0j))
    if not segments:
        raise ValueError("bang_bang pulse has zero total duration")
    return ControlWaveform(channels=(tuple(segments),))


def _check_duration(T: float, family: PulseFamily):
    if not T > 0.0:
        raise ValueError(f"pulse duration must be positive, got {T}")
    if T > family.duration_cap * (1 + 1e-12):
        raise ValueError(f"duration {T} exceeds cap {family.duration_cap}")


@dataclass(frozen=True)
class PulseChoice:
    """A rendered point in a family's variable space."""

    family: PulseFamily
    variables: np.ndarray
    rendered: ControlWaveform = field(repr=False)

    @classmethod
    def make(cls, family: PulseFamily, variables, omega_estimate: float = 1.0) -> "PulseChoice":
        v = np.asarray(variables, dtype=float)
        return cls(family=family, variables=v, rendered=render(family, v, omega_estimate))


def duration_of(choice: PulseChoice) -> float:
    return choice.rendered.duration
