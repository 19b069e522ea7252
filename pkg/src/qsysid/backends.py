"""Measurement backends: the built-in shot-noise simulator and a remote bridge
speaking newline-delimited JSON.

Backends are serial resources: one in-flight measurement at a time.  The
simulator is deterministic per (seed, call index).

Remote protocol, one JSON object per line:

    request:  {"type": "measure", "id": <int>,
               "channels": [[{"duration_s": <float>, "re": <float>, "im": <float>}, ...], ...],
               "shots": <int>}
    response: {"id": <int>, "m": <float>, "sigma": <float>}
           or {"id": <int>, "error": "<msg>"}
"""

from __future__ import annotations

import json
import math
import socket
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import ControlWaveform, ModelSpec, evolve
from .params import SIGMA_FLOOR


class RemoteProtocolError(RuntimeError):
    """Malformed or out-of-range response; retrying will not help."""


class RemoteTimeoutError(RuntimeError):
    """No response within the timeout; the measurement may be retried."""


@dataclass(frozen=True)
class MeasurementRecord:
    pulse: ControlWaveform
    m: float
    sigma: float
    shots: int
    wall_time: float = 0.0
    backend_tag: str = "simulated"

    def __post_init__(self):
        if not 0.0 <= self.m <= 1.0:
            raise ValueError(f"m = {self.m} outside [0, 1]")
        if self.sigma < SIGMA_FLOOR:
            raise ValueError("sigma below the floor; apply the floor before constructing")


@dataclass(frozen=True)
class TrueSystem:
    """Ground truth for simulated runs."""

    g_true: np.ndarray
    shots_per_measurement: int = 1000
    seed: int = 0

    def __post_init__(self):
        g = np.asarray(self.g_true, dtype=float)
        object.__setattr__(self, "g_true", g)
        if not np.all(np.isfinite(g)):
            raise ValueError("g_true must be finite")
        if self.shots_per_measurement < 1:
            raise ValueError("shots_per_measurement must be >= 1")


def binomial_sigma(m: float, shots: int) -> float:
    return max(SIGMA_FLOOR, math.sqrt(m * (1.0 - m) / shots))


class SimulatedBackend:
    """Draws binomial shot counts from the true system's predicted response."""

    tag = "simulated"

    def __init__(self, system: TrueSystem, model: ModelSpec):
        self.system = system
        self.model = model
        self._call_index = 0

    @property
    def shots(self) -> int:
        return self.system.shots_per_measurement

    def measure(self, pulse: ControlWaveform, shots: int | None = None) -> MeasurementRecord:
        shots = shots if shots is not None else self.system.shots_per_measurement
        p = evolve(self.model, self.system.g_true, pulse).p0
        rng = np.random.default_rng([self.system.seed, self._call_index])
        self._call_index += 1
        k = int(rng.binomial(shots, p))
        m = k / shots
        return MeasurementRecord(
            pulse=pulse, m=m, sigma=binomial_sigma(m, shots), shots=shots, backend_tag=self.tag
        )


def simulate_measurement(system: TrueSystem, model: ModelSpec, pulse: ControlWaveform) -> MeasurementRecord:
    """One-shot convenience wrapper (call index 0)."""
    return SimulatedBackend(system, model).measure(pulse)


def waveform_to_wire(pulse: ControlWaveform) -> list[list[dict]]:
    return [
        [{"duration_s": float(d), "re": float(v.real), "im": float(v.imag)} for d, v in ch]
        for ch in pulse.channels
    ]


class RemoteBackend:
    """Client for a lab control stack reachable over a TCP stream socket."""

    tag = "remote"

    def __init__(self, host: str, port: int, shots: int = 100, timeout_s: float = 600.0):
        self.host = host
        self.port = port
        self.shots = shots
        self.timeout_s = timeout_s
        self._sock: socket.socket | None = None
        self._reader = None
        self._next_id = 0

    def _connect(self):
        if self._sock is None:
            self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout_s)
            self._reader = self._sock.makefile("r", encoding="utf-8")

    def close(self):
        if self._sock is not None:
            self._sock.close()
            self._sock = None
            self._reader = None

    def measure(self, pulse: ControlWaveform, shots: int | None = None) -> MeasurementRecord:
        shots = shots if shots is not None else self.shots
        self._connect()
        req_id = self._next_id
        self._next_id += 1
        request = {
            "type": "measure",
            "id": req_id,
            "channels": waveform_to_wire(pulse),
            "shots": shots,
        }
        try:
            self._sock.sendall((json.dumps(request) + "\n").encode("utf-8"))
            line = self._reader.readline()
        except (socket.timeout, TimeoutError) as exc:
            raise RemoteTimeoutError(f"no response within {self.timeout_s} s") from exc
        except ConnectionError as exc:
            raise RemoteProtocolError(f"connection closed by the experiment host: {exc}") from exc
        if not line:
            raise RemoteProtocolError("connection closed before a response arrived")
        return parse_remote_response(line, req_id, pulse, shots, tag=self.tag)


def parse_remote_response(
    line: str, req_id: int, pulse: ControlWaveform, shots: int, tag: str = "remote"
) -> MeasurementRecord:
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RemoteProtocolError(f"unparseable response line: {line!r}") from exc
    if payload.get("id") != req_id:
        raise RemoteProtocolError(f"response id {payload.get('id')} does not echo request id {req_id}")
    if "error" in payload:
        raise RemoteProtocolError(f"experiment reported an error: {payload['error']}")
    try:
        m = float(payload["m"])
        sigma = float(payload["sigma"])
    except (KeyError, TypeError, ValueError) as exc:
        raise RemoteProtocolError(f"response missing numeric m/sigma: {line!r}") from exc
    if not 0.0 <= m <= 1.0:
        raise RemoteProtocolError(f"outcome m = {m} outside [0, 1]")
    if sigma < 0.0:
        raise RemoteProtocolError(f"negative sigma {sigma}")
    if sigma < SIGMA_FLOOR:
        warnings.warn(f"reported sigma {sigma} floored to {SIGMA_FLOOR}")
        sigma = SIGMA_FLOOR
    return MeasurementRecord(pulse=pulse, m=m, sigma=sigma, shots=shots, backend_tag=tag)
