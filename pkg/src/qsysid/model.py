"""Forward model: Hamiltonians, piecewise-constant unitary evolution, return
probability and its parameter gradients.

Conventions (fixed so that tests are deterministic; any self-consistent choice
reproduces the same return probabilities):

* basis ordering |0>, |1> per qubit, with Z|0> = +|0>,
* lowering operator L = |0><1|,
* one-qubit Hamiltonian  H = -(delta/2) Z + (omega/2) (c L + c* L^dag),
* two-qubit Hamiltonian  H = H_1 + H_2 + J (L1^dag L2 + L2^dag L1),
  parameters ordered (delta1, omega1, delta2, omega2, J), basis |q1 q2>.

All evolutions are exact per segment: the 2x2 case uses the closed-form Pauli
exponential, the 4x4 case an eigendecomposition of the Hermitian segment
Hamiltonian.  Both are vectorized over a population of parameter vectors,
which is the hot path for cost evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_MERGED_SEGMENTS = 10**6

ONE_QUBIT = "one_qubit_2param"
TWO_QUBIT = "two_qubit_5param"


class ModelEvaluationError(RuntimeError):
    """Raised when the forward model produces a non-finite result."""


@dataclass(frozen=True)
class ControlWaveform:
    """Piecewise-constant complex control envelopes, one segment list per channel.

    Each segment is a ``(duration_s, value)`` pair with ``duration_s > 0``.
    All channels must share the same total duration.
    """

    channels: tuple[tuple[tuple[float, complex], ...], ...]

    def __post_init__(self):
        if not self.channels:
            raise ValueError("waveform needs at least one channel")
        totals = []
        for ch in self.channels:
            if not ch:
                raise ValueError("empty channel in waveform")
            for dur, _ in ch:
                if not (dur > 0.0) or not np.isfinite(dur):
                    raise ValueError(f"segment duration must be positive, got {dur}")
            totals.append(sum(d for d, _ in ch))
        if any(abs(t - totals[0]) > 1e-12 * max(totals[0], 1.0) for t in totals):
            raise ValueError(f"channels have unequal total durations: {totals}")

    @property
    def channel_count(self) -> int:
        return len(self.channels)

    @property
    def duration(self) -> float:
        return sum(d for d, _ in self.channels[0])

    def merged_segments(self) -> list[tuple[float, tuple[complex, ...]]]:
        """Segments on the union grid of all channel boundaries.

        Returns ``(duration, values_per_channel)`` with every channel constant
        on each merged segment.
        """
        if self.channel_count == 1:
            return [(d, (v,)) for d, v in self.channels[0]]
        # channel boundary union
        edges = {0.0}
        for ch in self.channels:
            t = 0.0
            for d, _ in ch:
                t += d
                edges.add(round(t, 15))
        grid = sorted(edges)
        if len(grid) - 1 > MAX_MERGED_SEGMENTS:
            raise ValueError(f"merged grid has {len(grid) - 1} segments (> {MAX_MERGED_SEGMENTS})")
        out = []
        for lo, hi in zip(grid[:-1], grid[1:]):
            mid = 0.5 * (lo + hi)
            values = tuple(_value_at(ch, mid) for ch in self.channels)
            if hi - lo > 0:
                out.append((hi - lo, values))
        return out

    def key(self) -> tuple:
        """Hashable identity used for logging / dict keys."""
        return self.channels


def _value_at(channel, t: float) -> complex:
    acc = 0.0
    for d, v in channel:
        acc += d
        if t < acc:
            return v
    return channel[-1][1]


@dataclass(frozen=True)
class ModelSpec:
    """Which Hamiltonian family is being calibrated, plus state/measurement choices."""

    family: str
    parameter_labels: tuple[str, ...]
    initial_state: int = 0
    return_projector: tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.family not in (ONE_QUBIT, TWO_QUBIT):
            raise ValueError(f"unknown model family {self.family!r}")
        if len(self.parameter_labels) != self.n_params:
            raise ValueError(
                f"{self.family} needs {self.n_params} parameter labels, got {len(self.parameter_labels)}"
            )
        if not (0 <= self.initial_state < self.dim):
            raise ValueError("initial_state index out of range")
        if not self.return_projector or any(not 0 <= i < self.dim for i in self.return_projector):
            raise ValueError("return_projector indices out of range")

    @property
    def dim(self) -> int:
        return 2 if self.family == ONE_QUBIT else 4

    @property
    def n_params(self) -> int:
        return 2 if self.family == ONE_QUBIT else 5

    @property
    def channel_count(self) -> int:
        return 1 if self.family == ONE_QUBIT else 2

    @classmethod
    def one_qubit(cls) -> "ModelSpec":
        return cls(family=ONE_QUBIT, parameter_labels=("delta", "omega"))

    @classmethod
    def two_qubit(cls) -> "ModelSpec":
        return cls(
            family=TWO_QUBIT,
            parameter_labels=("delta1", "omega1", "delta2", "omega2", "coupling"),
        )

    @classmethod
    def from_family(cls, family: str) -> "ModelSpec":
        return cls.one_qubit() if family == ONE_QUBIT else cls.two_qubit()


@dataclass(frozen=True)
class EvolutionResult:
    p0: float
    final_state: np.ndarray = field(repr=False)


def hamiltonian(model: ModelSpec, g: np.ndarray, control_values) -> np.ndarray:
    """Hermitian Hamiltonian matrix at fixed control values (one per channel)."""
    g = np.asarray(g, dtype=float)
    if g.shape != (model.n_params,):
        raise ValueError(f"parameter vector has shape {g.shape}, expected ({model.n_params},)")
    values = tuple(complex(v) for v in np.atleast_1d(control_values))
    if len(values) != model.channel_count:
        raise ValueError(f"expected {model.channel_count} control values, got {len(values)}")
    if model.family == ONE_QUBIT:
        delta, omega = g
        c = values[0]
        return np.array(
            [[-delta / 2.0, omega * c / 2.0], [omega * np.conj(c) / 2.0, delta / 2.0]],
            dtype=complex,
        )
    d1, o1, d2, o2, coupling = g
    h1 = np.array([[-d1 / 2, o1 * values[0] / 2], [o1 * np.conj(values[0]) / 2, d1 / 2]], dtype=complex)
    h2 = np.array([[-d2 / 2, o2 * values[1] / 2], [o2 * np.conj(values[1]) / 2, d2 / 2]], dtype=complex)
    eye = np.eye(2)
    h = np.kron(h1, eye) + np.kron(eye, h2)
    # exchange term J (L1^dag L2 + h.c.): couples |01> <-> |10>
    h[1, 2] += coupling
    h[2, 1] += coupling
    return h


def _segment_propagate_1q(psi: np.ndarray, G: np.ndarray, value: complex, dt: float) -> np.ndarray:
    """Apply exp(-i dt H) for the 2x2 family, vectorized over samples.

    Uses U = cos(w dt) I - i sin(w dt) (a_hat . sigma) with H = a . sigma,
    where a = (Omega Re c, -Omega Im c, -Delta) / 2 so that
    a_x - i a_y = Omega c / 2 and a_x + i a_y = Omega conj(c) / 2.
    """
    az = -0.5 * G[:, 0]
    oh = 0.5 * G[:, 1]
    w = np.sqrt(az * az + oh * oh * (value.real * value.real + value.imag * value.imag))
    cos_ = np.cos(w * dt)
    # sin(w dt)/w, finite at w = 0
    small = w < 1e-300
    sinc_ = np.where(small, dt, np.sin(w * dt) / np.where(small, 1.0, w))
    b0 = psi[:, 0]
    b1 = psi[:, 1]
    k = -1j * sinc_
    kz = k * az
    koh = k * oh
    out = np.empty_like(psi)
    out[:, 0] = (cos_ + kz) * b0 + (koh * value) * b1
    out[:, 1] = (koh * np.conj(value)) * b0 + (cos_ - kz) * b1
    return out


def _batch_hamiltonians_2q(G: np.ndarray, values) -> np.ndarray:
    S = G.shape[0]
    H = np.zeros((S, 4, 4), dtype=complex)
    d1, o1, d2, o2, coupling = (G[:, i] for i in range(5))
    c1, c2 = values
    # qubit 1 terms (kron with identity on qubit 2)
    H[:, 0, 0] += -d1 / 2 - d2 / 2
    H[:, 1, 1] += -d1 / 2 + d2 / 2
    H[:, 2, 2] += d1 / 2 - d2 / 2
    H[:, 3, 3] += d1 / 2 + d2 / 2
    off1 = o1 * c1 / 2.0
    H[:, 0, 2] += off1
    H[:, 1, 3] += off1
    H[:, 2, 0] += np.conj(off1)
    H[:, 3, 1] += np.conj(off1)
    off2 = o2 * c2 / 2.0
    H[:, 0, 1] += off2
    H[:, 2, 3] += off2
    H[:, 1, 0] += np.conj(off2)
    H[:, 3, 2] += np.conj(off2)
    H[:, 1, 2] += coupling
    H[:, 2, 1] += coupling
    return H


def batch_states(model: ModelSpec, G: np.ndarray, pulse: ControlWaveform) -> np.ndarray:
    """Final states |psi(T)> for every parameter vector in ``G`` (shape (S, p))."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.shape[1] != model.n_params:
        raise ValueError(f"population has {G.shape[1]} columns, model expects {model.n_params}")
    if pulse.channel_count != model.channel_count:
        raise ValueError(
            f"pulse has {pulse.channel_count} channels, model expects {model.channel_count}"
        )
    S = G.shape[0]
    psi = np.zeros((S, model.dim), dtype=complex)
    psi[:, model.initial_state] = 1.0
    if model.family == ONE_QUBIT:
        for dt, values in pulse.merged_segments():
            psi = _segment_propagate_1q(psi, G, values[0], dt)
    else:
        for dt, values in pulse.merged_segments():
            H = _batch_hamiltonians_2q(G, values)
            evals, vecs = np.linalg.eigh(H)
            phases = np.exp(-1j * dt * evals)
            # psi <- V diag(phases) V^dag psi
            coeff = np.einsum("sij,sj->si", vecs.conj().transpose(0, 2, 1), psi)
            psi = np.einsum("sij,sj->si", vecs, phases * coeff)
    if not np.all(np.isfinite(psi)):
        bad = int(np.argwhere(~np.isfinite(psi).all(axis=1))[0, 0])
        raise ModelEvaluationError(f"non-finite state for sample index {bad}")
    return psi


def batch_response(model: ModelSpec, G: np.ndarray, pulse: ControlWaveform) -> np.ndarray:
    """Return probabilities P0 for every sample; element-wise identical to evolve()."""
    psi = batch_states(model, G, pulse)
    proj = list(model.return_projector)
    p0 = np.sum(np.abs(psi[:, proj]) ** 2, axis=1)
    return np.clip(p0, 0.0, 1.0)


def evolve(model: ModelSpec, g: np.ndarray, pulse: ControlWaveform) -> EvolutionResult:
    psi = batch_states(model, np.asarray(g, dtype=float)[None, :], pulse)[0]
    p0 = float(np.sum(np.abs(psi[list(model.return_projector)]) ** 2))
    return EvolutionResult(p0=min(max(p0, 0.0), 1.0), final_state=psi)


def _fd_steps(G: np.ndarray) -> np.ndarray:
    return np.maximum(1e-6 * np.abs(G), 1e-8)


def batch_response_gradient(model: ModelSpec, G: np.ndarray, pulse: ControlWaveform) -> np.ndarray:
    """Central finite-difference gradients of P0 w.r.t. each model parameter,
    for every sample; shape (S, p)."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    S, p = G.shape
    h = _fd_steps(G)
    grad = np.empty((S, p))
    for i in range(p):
        Gp = G.copy()
        Gm = G.copy()
        Gp[:, i] += h[:, i]
        Gm[:, i] -= h[:, i]
        grad[:, i] = (batch_response(model, Gp, pulse) - batch_response(model, Gm, pulse)) / (
            2.0 * h[:, i]
        )
    if not np.all(np.isfinite(grad)):
        raise ModelEvaluationError("non-finite finite-difference gradient")
    return grad


def response_gradient(model: ModelSpec, g: np.ndarray, pulse: ControlWaveform) -> np.ndarray:
    return batch_response_gradient(model, np.asarray(g, dtype=float)[None, :], pulse)[0]
