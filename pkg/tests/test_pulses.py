"""Pulse-family rendering: variable layout, box bounds, waveform structure,
and a delta-kick analytic oracle for the Ramsey family."""

import math

import numpy as np
import pytest

from qsysid import ModelSpec, evolve
from qsysid.pulses import (
    BANG_BANG,
    KINDS,
    PHASE_ONLY,
    PWC_AMPLITUDE,
    RABI,
    RAMSEY,
    PulseChoice,
    PulseFamily,
    duration_of,
    render,
)


class TestVariableLayout:
    def test_counts(self):
        assert PulseFamily(RABI).n_variables == 1
        assert PulseFamily(RAMSEY).n_variables == 1
        assert PulseFamily(PWC_AMPLITUDE, n_segments=10).n_variables == 11
        assert PulseFamily(PWC_AMPLITUDE, n_segments=10, channel_count=2).n_variables == 21
        assert PulseFamily(BANG_BANG, n_segments=4).n_variables == 10  # 4 + 3 + 3
        assert PulseFamily(PHASE_ONLY, n_segments=10).n_variables == 11

    def test_bounds(self):
        fam = PulseFamily(PWC_AMPLITUDE, n_segments=3)
        bounds = fam.variable_bounds((0.5, 2.0))
        assert bounds[:3] == [(-1.0, 1.0)] * 3
        assert bounds[3] == (0.5, 2.0)
        fam = PulseFamily(PHASE_ONLY, n_segments=3)
        bounds = fam.variable_bounds((0.5, 2.0))
        assert bounds[:3] == [(-math.pi, math.pi)] * 3

    def test_duration_cap_tightens_bounds(self):
        fam = PulseFamily(RABI, duration_cap=1.5)
        assert fam.variable_bounds((0.5, 4.0)) == [(0.5, 1.5)]

    def test_bang_bang_boxes_enforce_total_duration(self):
        fam = PulseFamily(BANG_BANG, n_segments=3)
        bounds = fam.variable_bounds((0.1, 2.0))
        dur_bounds = bounds[:5]
        assert sum(hi for _, hi in dur_bounds) == pytest.approx(2.0)
        assert bounds[5:] == [(-math.pi, math.pi)] * 2

    def test_invalid_duration_bounds(self):
        with pytest.raises(ValueError):
            PulseFamily(RABI).variable_bounds((2.0, 1.0))
        with pytest.raises(ValueError):
            PulseFamily(RABI).variable_bounds((0.0, 1.0))

    def test_family_validation(self):
        with pytest.raises(ValueError):
            PulseFamily("square")
        with pytest.raises(ValueError):
            PulseFamily(RABI, channel_count=2)  # multi-channel only for pwc
        with pytest.raises(ValueError):
            PulseFamily(PWC_AMPLITUDE, n_segments=0)
        assert set(KINDS) == {RABI, RAMSEY, PWC_AMPLITUDE, BANG_BANG, PHASE_ONLY}


class TestRender:
    def test_rabi_is_single_unit_segment(self):
        wf = render(PulseFamily(RABI), np.array([2.5]))
        assert wf.channels == (((2.5, 1.0 + 0j),),)

    def test_pwc_amplitude_equal_widths(self):
        fam = PulseFamily(PWC_AMPLITUDE, n_segments=4)
        wf = render(fam, np.array([0.5, -1.0, 0.25, 1.0, 2.0]))
        assert len(wf.channels[0]) == 4
        assert all(d == pytest.approx(0.5) for d, _ in wf.channels[0])
        assert [v.real for _, v in wf.channels[0]] == [0.5, -1.0, 0.25, 1.0]
        assert wf.duration == pytest.approx(2.0)

    def test_pwc_amplitude_two_channels(self):
        fam = PulseFamily(PWC_AMPLITUDE, n_segments=2, channel_count=2)
        wf = render(fam, np.array([0.1, 0.2, 0.3, 0.4, 1.0]))
        assert [v.real for _, v in wf.channels[0]] == [0.1, 0.2]
        assert [v.real for _, v in wf.channels[1]] == [0.3, 0.4]

    def test_pwc_amplitude_range_check(self):
        fam = PulseFamily(PWC_AMPLITUDE, n_segments=2)
        with pytest.raises(ValueError, match=r"\[-1, 1\]"):
            render(fam, np.array([1.5, 0.0, 1.0]))

    def test_phase_only_unit_magnitude(self):
        fam = PulseFamily(PHASE_ONLY, n_segments=5)
        phases = np.array([0.0, 1.0, -2.0, 3.0, 0.5])
        wf = render(fam, np.concatenate([phases, [2.5]]))
        vals = [v for _, v in wf.channels[0]]
        assert np.allclose([abs(v) for v in vals], 1.0)
        assert np.allclose(np.angle(vals), phases)

    def test_bang_bang_structure(self):
        fam = PulseFamily(BANG_BANG, n_segments=3)
        # on durations, off durations, phases (first on-phase fixed at 0)
        v = np.array([0.4, 0.3, 0.2, 0.1, 0.0, 1.0, -1.0])
        wf = render(fam, v)
        segs = wf.channels[0]
        # zero-width off segment dropped: on(0.4), off(0.1), on(0.3), on(0.2)
        assert [d for d, _ in segs] == pytest.approx([0.4, 0.1, 0.3, 0.2])
        assert segs[0][1] == 1.0 + 0j  # first phase locked to 0
        assert segs[1][1] == 0j
        assert abs(segs[2][1]) == pytest.approx(1.0)
        assert np.angle(segs[2][1]) == pytest.approx(1.0)

    def test_bang_bang_zero_total_rejected(self):
        fam = PulseFamily(BANG_BANG, n_segments=2)
        with pytest.raises(ValueError):
            render(fam, np.zeros(4))

    def test_duration_cap_enforced(self):
        fam = PulseFamily(RABI, duration_cap=1.0)
        with pytest.raises(ValueError, match="cap"):
            render(fam, np.array([1.5]))

    def test_wrong_variable_count(self):
        with pytest.raises(ValueError, match="expects"):
            render(PulseFamily(RABI), np.array([1.0, 2.0]))


class TestRamsey:
    def test_kick_area_is_quarter_turn(self):
        omega_hat = 6.2
        wf = render(PulseFamily(RAMSEY), np.array([3.0]), omega_hat)
        (w1, a1), (free, mid), (w2, a2) = wf.channels[0]
        assert mid == 0j
        assert w1 == w2
        # Omega * |c| * width = pi/2: a quarter rotation at the estimated Rabi rate
        assert omega_hat * abs(a1) * w1 == pytest.approx(math.pi / 2.0)
        assert a2 == -a1
        assert wf.duration == pytest.approx(3.0)

    def test_kick_width_rule(self):
        omega_hat = 6.2
        wf = render(PulseFamily(RAMSEY), np.array([3.0]), omega_hat)
        width = wf.channels[0][0][0]
        assert width == pytest.approx(min(0.01 * 3.0, math.pi / (20 * omega_hat)))

    def test_matches_delta_kick_oracle(self):
        """P0 of an ideal Ramsey sequence is cos^2(delta * T_free / 2)."""
        model = ModelSpec.one_qubit()
        omega_hat = 6.0
        T = 4.0
        wf = render(PulseFamily(RAMSEY), np.array([T]), omega_hat)
        free = wf.channels[0][1][0]
        for delta in (0.0, 0.3, 0.7, -0.5):
            p0 = evolve(model, np.array([delta, omega_hat]), wf).p0
            ideal = math.cos(delta * free / 2.0) ** 2
            assert p0 == pytest.approx(ideal, abs=0.02)

    def test_detuning_sensitive_not_rabi_sensitive(self):
        model = ModelSpec.one_qubit()
        from qsysid.model import response_gradient

        omega_hat = 6.0
        wf = render(PulseFamily(RAMSEY), np.array([4.0]), omega_hat)
        # near the fringe's steepest point the detuning gradient dominates
        g = np.array([math.pi / (2 * 3.9), omega_hat])
        grad = response_gradient(model, g, wf)
        assert abs(grad[0]) > 5 * abs(grad[1])

    def test_needs_positive_omega_estimate(self):
        with pytest.raises(ValueError, match="omega"):
            render(PulseFamily(RAMSEY), np.array([3.0]), 0.0)


class TestPulseChoice:
    def test_make_and_duration(self):
        fam = PulseFamily(RABI)
        choice = PulseChoice.make(fam, np.array([1.7]))
        assert duration_of(choice) == pytest.approx(1.7)
        assert choice.rendered.channels[0][0][1] == 1.0 + 0j
