"""Fisher-information tests: rank-1 structure, the closed-form detuned-Rabi
information, clamping at deterministic responses, and the duration hint."""

import numpy as np
import pytest

from qsysid import ControlWaveform, fi_scan, fisher, optimal_duration_hint
from qsysid.fisher import VARIANCE_CLAMP, fisher_batch
from qsysid.model import batch_response, response_gradient
from qsysid.pulses import PHASE_ONLY, PulseFamily


def rabi(T):
    return ControlWaveform(channels=(((float(T), 1.0 + 0j),),))


class TestFisherStructure:
    def test_rank_one_outer_product(self, model_1q):
        g = np.array([4.0, 6.0])
        res = fisher(model_1q, g, rabi(2.0))
        evals = np.linalg.eigvalsh(res.fim)
        assert evals[0] == pytest.approx(0.0, abs=1e-9 * evals[-1])
        assert np.trace(res.fim) == pytest.approx(res.fi, rel=1e-10)

    def test_scalar_matches_formula(self, model_1q):
        g = np.array([4.0, 6.0])
        pulse = rabi(2.0)
        res = fisher(model_1q, g, pulse)
        p0 = batch_response(model_1q, g[None, :], pulse)[0]
        grad = response_gradient(model_1q, g, pulse)
        assert res.fi == pytest.approx(np.dot(grad, grad) / (p0 - p0**2), rel=1e-9)

    def test_direction_is_unit_gradient(self, model_1q):
        g = np.array([4.0, 6.0])
        res = fisher(model_1q, g, rabi(2.0))
        grad = response_gradient(model_1q, g, rabi(2.0))
        assert np.allclose(res.direction, grad / np.linalg.norm(grad))
        assert np.linalg.norm(res.direction) == pytest.approx(1.0)

    def test_zero_gradient_direction_undefined(self, model_1q):
        # omega = 0: P0 = 1 identically, gradient vanishes
        res = fisher(model_1q, np.array([4.0, 0.0]), rabi(2.0))
        assert res.direction is None
        assert not res.direction_defined
        assert res.fi == 0.0

    def test_clamp_near_deterministic_response(self, model_1q):
        # resonant pi pulse: P0 = 0 exactly, variance clamps
        omega = 6.0
        res = fisher(model_1q, np.array([0.0, omega]), rabi(np.pi / omega))
        assert res.clamped
        assert np.isfinite(res.fi)

    def test_batch_shapes(self, model_1q):
        G = np.random.default_rng(0).uniform([-4, 1], [4, 8], (30, 2))
        fi, grad, clamped = fisher_batch(model_1q, G, rabi(2.0))
        assert fi.shape == (30,)
        assert grad.shape == (30, 2)
        assert clamped.shape == (30,)
        assert np.all(fi >= 0)
        assert VARIANCE_CLAMP == 1e-12


class TestFiScan:
    def test_rows_and_theta(self, model_1q):
        grid = np.linspace(0.5, 4.0, 8)
        rows = fi_scan(model_1q, np.array([4.0, 6.0]), grid)
        assert len(rows) == 8
        for T, fi, theta in rows:
            assert theta == pytest.approx(fi / T**2)

    def test_quadratic_envelope_growth(self, model_1q):
        """FI envelope peaks scale roughly as T^2: theta at peaks is bounded."""
        grid = np.linspace(0.05, 20.0, 4000)
        rows = fi_scan(model_1q, np.array([4.0, 6.0]), grid)
        fi = np.array([r[1] for r in rows])
        T = np.array([r[0] for r in rows])
        peaks = [i for i in range(1, len(fi) - 1) if fi[i] >= fi[i - 1] and fi[i] >= fi[i + 1]]
        theta_peaks = fi[peaks] / T[peaks] ** 2
        assert theta_peaks.max() / theta_peaks.min() < 3.0

    def test_validation(self, model_1q):
        with pytest.raises(ValueError):
            fi_scan(model_1q, np.array([4.0, 6.0]), np.array([2.0, 1.0]))
        with pytest.raises(ValueError):
            fi_scan(model_1q, np.array([4.0, 6.0]), np.array([-1.0, 1.0]))
        with pytest.raises(ValueError):
            fi_scan(
                model_1q,
                np.array([4.0, 6.0]),
                np.array([1.0, 2.0]),
                family=PulseFamily(PHASE_ONLY, n_segments=3),
            )


class TestDurationHint:
    def test_diagonal_closed_form(self):
        cov = np.diag([0.25, 0.25])
        assert optimal_duration_hint(cov) == pytest.approx(1 / 0.5 + 1 / 0.5)

    def test_rotation_invariant(self):
        rng = np.random.default_rng(1)
        cov = np.diag([0.04, 0.09, 0.16])
        Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        rotated = Q @ cov @ Q.T
        assert optimal_duration_hint(rotated) == pytest.approx(
            optimal_duration_hint(cov), rel=1e-9
        )

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            optimal_duration_hint(np.array([[1.0, 0.0], [0.0, -1.0]]))
