"""Tests for SNAP pulse compilation and pulse propagation."""

import json
import math

import numpy as np
import pytest

from snap_prep.utils.device_config import PulseConstraints, SystemParams
from snap_prep.utils.errors import InvalidArgumentError, SynthesisFailureError
from snap_prep.utils.fock_core import Operator, StateVector, coherent_state, fidelity
from snap_prep.utils.models import PulseMetadata
from snap_prep.utils.pulse_synth import (
    GrapeConfig,
    PulseWaveform,
    _GrapeProblem,
    compile_snap_pulses,
    displacement_pulse,
    grape_optimize,
    level_energies,
    propagate_piecewise,
    snap_duration_study,
    snap_gate_infidelity,
    standard_snap_pulse,
)

FOCK2_FIRST_SNAP = [2.049, -0.654, 1.130, -1.106]


class TestPulseWaveform:
    """Test the waveform container."""

    def test_timing(self):
        """Test duration and sample midpoints."""
        pulse = PulseWaveform.zeros(10, 1e9)
        assert pulse.duration == pytest.approx(10e-9)
        assert pulse.times[0] == pytest.approx(0.5e-9)

    def test_rejects_non_finite(self):
        """Test rejection of NaN samples."""
        with pytest.raises(InvalidArgumentError):
            PulseWaveform(np.array([0.0, math.nan]), 1e9)

    def test_amplitude_limit(self):
        """Test the Rabi-rate check."""
        constraints = PulseConstraints()
        pulse = PulseWaveform(np.full(4, 2.0 * constraints.rabi_max), 1e9)
        with pytest.raises(InvalidArgumentError, match="exceeds"):
            pulse.check_constraints(constraints)

    def test_carrier_shifts_spectrum(self):
        """Test that a carrier moves a constant drive off zero frequency."""
        pulse = PulseWaveform(np.ones(1000), 1e9).with_carrier(2 * math.pi * 100e6)
        assert pulse.spectral_fraction_below(20e6) < 0.05  # noqa: PLR2004

    def test_csv_export(self, tmp_path):
        """Test the t_ns, I, Q table and its sidecar."""
        pulse = PulseWaveform(np.array([1.0 + 2.0j, -3.0j]), 1e9)
        path = tmp_path / "snap.csv"
        pulse.to_csv(path, PulseMetadata(kind="snap", sample_rate=1e9, carrier=0.0, duration=2e-9, infidelity=1e-4))
        assert path.read_text().splitlines()[0] == "t_ns,I,Q"
        assert json.loads(path.with_suffix(".json").read_text())["infidelity"] == 1e-4  # noqa: PLR2004
        restored = PulseWaveform.from_csv(path, 1e9)
        assert np.allclose(restored.samples, pulse.samples)


class TestPropagation:
    """Test piecewise-constant propagation."""

    def test_transition_frequencies(self):
        """Test the number-split qubit lines."""
        params = SystemParams(chi_prime_hz=0.0)
        e_g, e_e = level_energies(params, 4)
        assert np.allclose(e_e - e_g, -params.chi * np.arange(4))

    def test_zero_drive_is_free_evolution(self, small_system):
        """Test that an idle qubit drive only accumulates the diagonal phases."""
        pulse = PulseWaveform.zeros(100, 1e9)
        u = propagate_piecewise(small_system, pulse).elements
        e_g, e_e = level_energies(small_system, small_system.cavity_dim)
        expected = np.empty(2 * small_system.cavity_dim, dtype=np.complex128)
        expected[0::2] = np.exp(-1j * e_g * 100e-9)
        expected[1::2] = np.exp(-1j * e_e * 100e-9)
        assert np.allclose(u, np.diag(expected), atol=1e-10)

    def test_grouping_keeps_unitarity(self, small_system):
        """Test that averaging samples still yields a unitary."""
        rng = np.random.default_rng(1)
        pulse = PulseWaveform(1e7 * (rng.standard_normal(50) + 1j * rng.standard_normal(50)), 1e9)
        u = propagate_piecewise(small_system, pulse, grouping=7)
        assert u.unitarity_error() < 1e-9  # noqa: PLR2004

    def test_displacement_pulse_on_decoupled_cavity(self):
        """Test that the sin² cavity pulse enacts D(α) without dispersive coupling."""
        params = SystemParams(chi_hz=0.0, chi_prime_hz=0.0, kerr_hz=0.0, cavity_dim=20)
        u = propagate_piecewise(params, displacement_pulse(1.2))
        cavity = StateVector.from_amplitudes(u.elements[0::2, 0])
        assert fidelity(cavity, coherent_state(1.2, 20)) >= 0.9999  # noqa: PLR2004


class TestGateInfidelity:
    """Test the SNAP gate functional."""

    def test_identity_implements_zero_phases(self):
        """Test that the identity is a perfect all-zero SNAP."""
        assert snap_gate_infidelity(Operator(np.eye(8)), np.zeros(3), 4) == pytest.approx(0.0)

    def test_global_phase_invariance(self):
        """Test that equal phases on every addressed level cost nothing."""
        assert snap_gate_infidelity(Operator(np.eye(8)), np.full(4, 0.7), 4) == pytest.approx(0.0, abs=1e-12)

    def test_dimension_check(self):
        """Test rejection of a non-joint operator."""
        with pytest.raises(InvalidArgumentError):
            snap_gate_infidelity(Operator(np.eye(5)), [0.1], 4)


class TestGrape:
    """Test the optimizer and its gradient."""

    def test_zero_phases_give_zero_pulse(self):
        """Test that S(0) is accepted without optimization."""
        params = SystemParams(kerr_hz=0.0, chi_prime_hz=0.0, cavity_dim=8)
        result = grape_optimize(np.zeros(3), params, PulseConstraints())
        assert result.infidelity <= 1e-9  # noqa: PLR2004
        assert result.iterations == 0
        assert result.pulse.max_amplitude == 0.0

    def test_adjoint_gradient(self):
        """Test the backward-propagated gradient against central differences."""
        params = SystemParams(cavity_dim=6)
        constraints = PulseConstraints(duration=40e-9, filter_taps=8)
        rng = np.random.default_rng(5)
        problem = _GrapeProblem(rng.uniform(-math.pi, math.pi, 4), params, constraints, leakage_weight=0.1)
        u = 0.5 * rng.standard_normal(2 * problem.n_free)
        _, grad = problem.value_and_grad(u)
        h = 1e-6
        numeric = np.empty_like(u)
        for index in range(u.size):
            step = np.zeros_like(u)
            step[index] = h
            numeric[index] = (problem.value_and_grad(u + step)[0] - problem.value_and_grad(u - step)[0]) / (2 * h)
        assert np.linalg.norm(grad - numeric) <= 1e-3 * np.linalg.norm(numeric)  # noqa: PLR2004

    def test_filtered_drive_respects_limits(self):
        """Test amplitude and bandwidth of any parametrized drive."""
        constraints = PulseConstraints()
        problem = _GrapeProblem(np.zeros(4), SystemParams(cavity_dim=6), constraints, leakage_weight=0.1)
        rng = np.random.default_rng(2)
        pulse = problem.pulse(10.0 * rng.standard_normal(2 * problem.n_free))
        assert pulse.n_samples == constraints.n_samples
        assert pulse.max_amplitude <= constraints.rabi_max * (1 + 1e-9)
        assert pulse.spectral_fraction_below(constraints.lowpass_cutoff_hz) >= 0.99  # noqa: PLR2004

    def test_duration_shorter_than_filter(self):
        """Test rejection of pulses shorter than the filter."""
        with pytest.raises(InvalidArgumentError, match="shorter"):
            _GrapeProblem(np.zeros(2), SystemParams(cavity_dim=6), PulseConstraints(duration=20e-9), 0.1)

    def test_failure_carries_pulse(self, small_system):
        """Test the failure path and its best-effort result."""
        config = GrapeConfig(max_iters=1, restarts=1, failure_infidelity=1e-12)
        constraints = PulseConstraints(duration=300e-9)
        with pytest.raises(SynthesisFailureError) as excinfo:
            compile_snap_pulses(([0.0, 1.0],), small_system, constraints, grape_config=config)
        assert excinfo.value.result.pulse.n_samples == 300  # noqa: PLR2004
        kept = compile_snap_pulses(([0.0, 1.0],), small_system, constraints, grape_config=config, allow_failure=True)
        assert len(kept) == 1
        assert kept[0].infidelity > 1e-12  # noqa: PLR2004


class TestStandardSnap:
    """Test the frequency-comb baseline."""

    def test_comb_pulse_shape(self, small_system):
        """Test sample count and the two-pulse envelope."""
        pulse = standard_snap_pulse(FOCK2_FIRST_SNAP, small_system, 1000e-9)
        assert pulse.n_samples == 1000  # noqa: PLR2004
        assert pulse.mode == "qubit"

    def test_too_short(self, small_system):
        """Test rejection of a single-sample comb."""
        with pytest.raises(InvalidArgumentError):
            standard_snap_pulse([0.1], small_system, 1e-9)

    def test_long_comb_is_accurate(self, small_system):
        """Test that a compensated 4 µs comb implements the phases reasonably well."""
        results = compile_snap_pulses((np.array(FOCK2_FIRST_SNAP),), small_system, PulseConstraints(), mode="standard")
        assert len(results) == 1
        assert results[0].pulse.duration == pytest.approx(4000e-9)
        assert results[0].infidelity < 0.1  # noqa: PLR2004


@pytest.mark.slow
class TestPulseReproduction:
    """Reproduce the SNAP compilation results on the full device."""

    def test_optimized_fock2_snap(self):
        """Test the first |2⟩ SNAP compiled into 500 ns."""
        result = grape_optimize(FOCK2_FIRST_SNAP, SystemParams(), PulseConstraints())
        assert result.infidelity <= 1e-3  # noqa: PLR2004

    def test_comb_duration_study(self):
        """Test the 4 µs comb error and its decrease with length."""
        points = snap_duration_study(
            FOCK2_FIRST_SNAP, 1.39, [2000e-9, 4000e-9], SystemParams(), envelopes=("sin2",), optimized_durations=[]
        )
        assert points[-1].infidelity == pytest.approx(0.015, abs=0.005)
        assert points[0].infidelity > points[-1].infidelity
