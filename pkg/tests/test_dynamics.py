"""Tests for open- and closed-system dynamics and sensitivity sweeps."""

import math

import numpy as np
import pytest

from snap_prep.utils.device_config import CoherenceParams, SystemParams
from snap_prep.utils.dynamics import (
    DriveSchedule,
    ScheduleSettings,
    SweepCurve,
    build_schedule,
    evaluate_sequence,
    joint_ground,
    lindblad_evolve,
    propagate_schedule,
    sensitivity_sweep,
    sequence_theory_fidelity,
)
from snap_prep.utils.errors import InvalidArgumentError
from snap_prep.utils.fock_core import (
    GateSequence,
    StateVector,
    apply_gate_sequence,
    coherent_state,
    fidelity,
    partial_trace_qubit,
)
from snap_prep.utils.pulse_synth import PulseWaveform, propagate_piecewise
from snap_prep.utils.targets import fock_state


def random_qubit_drive(n_samples: int, seed: int = 0) -> PulseWaveform:
    rng = np.random.default_rng(seed)
    scale = 2 * math.pi * 5e6
    return PulseWaveform(scale * (rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples)), 1e9)


class TestDriveSchedule:
    """Test schedule layout and segmentation."""

    def test_idle_is_one_segment(self):
        """Test that a constant drive integrates in one piece."""
        schedule = DriveSchedule.idle(100e-9, 1e9)
        assert schedule.n_samples == 100  # noqa: PLR2004
        assert schedule.segments() == [(0, 100)]

    def test_gate_ends_split_segments(self):
        """Test that gate boundaries always start a new segment."""
        zeros = np.zeros(10, dtype=np.complex128)
        schedule = DriveSchedule(zeros, zeros, 1e9, gate_ends=(4, 10), gate_kinds=("D", "S"))
        assert schedule.segments() == [(0, 4), (4, 10)]

    def test_rejects_unsorted_ends(self):
        """Test validation of gate boundaries."""
        zeros = np.zeros(10, dtype=np.complex128)
        with pytest.raises(InvalidArgumentError):
            DriveSchedule(zeros, zeros, 1e9, gate_ends=(8, 4), gate_kinds=("D", "S"))

    def test_layout_back_to_back(self, fock2_sequence):
        """Test three 50 ns displacements and two SNAP pulses without gaps."""
        snaps = [PulseWaveform.zeros(500, 1e9), PulseWaveform.zeros(500, 1e9)]
        schedule = build_schedule(fock2_sequence, snaps)
        assert schedule.n_samples == 3 * 50 + 2 * 500
        assert schedule.gate_ends == (50, 550, 600, 1100, 1150)
        assert schedule.gate_kinds == ("D", "S", "D", "S", "D")

    def test_zero_displacement_has_no_pulse(self):
        """Test that α = 0 occupies no time but still marks a gate."""
        seq = GateSequence.from_parameters([0.0, 1.0], [[0.1]])
        schedule = build_schedule(seq, [PulseWaveform.zeros(10, 1e9)])
        assert schedule.gate_ends == (0, 10, 60)

    def test_amplitude_scaling(self):
        """Test miscalibrated displacement amplitudes."""
        seq = GateSequence.from_parameters([1.0], [])
        nominal = build_schedule(seq, [])
        scaled = build_schedule(seq, [], settings=ScheduleSettings(displacement_scale=1.05))
        assert np.allclose(scaled.cavity, 1.05 * nominal.cavity)

    def test_pulse_count_checked(self, fock2_sequence):
        """Test that every SNAP needs a pulse."""
        with pytest.raises(InvalidArgumentError):
            build_schedule(fock2_sequence, [PulseWaveform.zeros(500, 1e9)])


class TestLindblad:
    """Test the master-equation integrator."""

    def test_single_photon_decay(self):
        """Test exponential decay of |1⟩ at the cavity lifetime."""
        params = SystemParams(cavity_dim=4)
        coherence = CoherenceParams(t1_qubit=math.inf, t2_qubit=math.inf, t1_cavity=10e-6)
        rho0 = joint_ground(fock_state(1, 4))
        result = lindblad_evolve(rho0, params, coherence, DriveSchedule.idle(5e-6, 1e6))
        population = partial_trace_qubit(np.asarray(result.final_state.elements)).populations()[1]
        assert population == pytest.approx(math.exp(-0.5), abs=1e-4)
        assert np.allclose(result.trace_trace, 1.0, atol=1e-6)

    def test_lossless_matches_unitary(self, small_system, lossless):
        """Test the closed-system limit against the piecewise propagator."""
        pulse = random_qubit_drive(30)
        cavity = StateVector.from_amplitudes([1.0, 1.0, 0, 0, 0, 0, 0, 0])
        schedule = DriveSchedule(pulse.samples, np.zeros(30), 1e9)
        result = lindblad_evolve(joint_ground(cavity), small_system, lossless, schedule)
        joint = np.kron(cavity.amplitudes, [1.0, 0.0])
        expected = StateVector.from_amplitudes(propagate_piecewise(small_system, pulse).elements @ joint)
        assert fidelity(expected, result.final_state) >= 1 - 1e-6  # noqa: PLR2004

    def test_closed_propagation_matches_unitary(self, small_system):
        """Test the pure-state propagator against the piecewise propagator."""
        pulse = random_qubit_drive(30, seed=1)
        joint = np.kron(fock_state(2, 8).amplitudes, [1.0, 0.0])
        schedule = DriveSchedule(pulse.samples, np.zeros(30), 1e9, gate_ends=(10, 30), gate_kinds=("S", "S"))
        final, snapshots = propagate_schedule(StateVector(joint), small_system, schedule)
        expected = propagate_piecewise(small_system, pulse).elements @ joint
        assert abs(np.vdot(expected, final.amplitudes)) ** 2 == pytest.approx(1.0, abs=1e-10)
        assert len(snapshots) == 2  # noqa: PLR2004

    def test_dimension_checked(self, small_system, lossless):
        """Test rejection of a cavity-only initial state."""
        with pytest.raises(InvalidArgumentError):
            lindblad_evolve(fock_state(0, 8).density_matrix(), small_system, lossless, DriveSchedule.idle(1e-8, 1e9))

    def test_snapshots_stay_positive(self, small_system):
        """Test that every gate-boundary state is a valid density matrix under loss."""
        qubit = random_qubit_drive(60, seed=2)
        cavity = random_qubit_drive(60, seed=3).samples / 5
        ends = tuple(range(10, 61, 10))
        schedule = DriveSchedule(qubit.samples, cavity, 1e9, gate_ends=ends, gate_kinds=("S",) * len(ends))
        result = lindblad_evolve(joint_ground(fock_state(0, 8)), small_system, CoherenceParams(), schedule)
        assert len(result.snapshots) == 6  # noqa: PLR2004
        for snapshot in result.snapshots:
            assert np.linalg.eigvalsh(np.asarray(snapshot.elements)).min() >= -1e-7  # noqa: PLR2004
            assert np.real(np.trace(np.asarray(snapshot.elements))) == pytest.approx(1.0, abs=1e-5)


class TestEvaluateSequence:
    """Test end-to-end evaluation of gate sequences."""

    def test_lossless_gate_level_matches_ideal(self, fock2_sequence, lossless):
        """Test that ideal gates without loss reproduce the gate-level state."""
        params = SystemParams(cavity_dim=16)
        target = fock_state(2, 16)
        ideal = apply_gate_sequence(fock2_sequence, fock_state(0, 16), check_truncation=False)
        evaluation = evaluate_sequence(target, fock2_sequence, params, lossless, pulse_level=False)
        assert evaluation.fidelity == pytest.approx(fidelity(target, ideal), abs=1e-9)
        assert len(evaluation.snapshots) == fock2_sequence.n_gates
        assert all(f == pytest.approx(1.0, abs=1e-9) for f in evaluation.snapshot_fidelities)

    def test_loss_lowers_fidelity(self, fock2_sequence, lossless):
        """Test that idle dissipation costs fidelity but not too much."""
        params = SystemParams(cavity_dim=16)
        target = fock_state(2, 16)
        coherent = sequence_theory_fidelity(target, fock2_sequence, params, lossless, pulse_level=False)
        lossy = sequence_theory_fidelity(target, fock2_sequence, params, CoherenceParams(), pulse_level=False)
        assert 0.8 * coherent < lossy < coherent

    def test_vacuum_run(self):
        """Test the trivial sequence: vacuum stays vacuum."""
        params = SystemParams(cavity_dim=6)
        seq = GateSequence.from_parameters([0.0, 0.0], [[]])
        evaluation = evaluate_sequence(fock_state(0, 6), seq, params, CoherenceParams())
        assert evaluation.fidelity == pytest.approx(1.0, abs=1e-9)
        assert evaluation.wigner_origin == pytest.approx(2 / math.pi, abs=1e-8)

    def test_target_dimension_checked(self, fock2_sequence, lossless):
        """Test that the target must live in the cavity space."""
        with pytest.raises(InvalidArgumentError):
            evaluate_sequence(fock_state(2, 10), fock2_sequence, SystemParams(cavity_dim=16), lossless, False)


class TestSweeps:
    """Test sensitivity curves and their spans."""

    def test_span_of_parabola(self):
        """Test the 99%-of-peak crossings of 1 − 100 x²."""
        offsets = np.linspace(-0.05, 0.05, 11)
        curve = SweepCurve.from_values("chi", "fidelity", "optimized", offsets, 1.0 - 100.0 * offsets**2)
        assert curve.peak_offset == pytest.approx(0.0)
        assert curve.span_low == pytest.approx(-0.01, abs=1e-9)
        assert curve.span_high == pytest.approx(0.01, abs=1e-9)
        assert curve.span == pytest.approx(0.02, abs=1e-9)
        assert curve.parabola_residual() == pytest.approx(0.0, abs=1e-9)

    def test_open_span(self):
        """Test that an edge never crossed is reported as missing."""
        offsets = np.linspace(-0.02, 0.02, 5)
        curve = SweepCurve.from_values("a_snap", "W0", "standard", offsets, 0.5 + 0.1 * offsets)
        assert curve.span_high is None
        assert curve.span is None

    def test_offset_limit(self, fock2_sequence, lossless):
        """Test rejection of miscalibrations beyond ten percent."""
        with pytest.raises(InvalidArgumentError, match="within"):
            sensitivity_sweep(
                "a_disp", [0.0, 0.2], "W0", "optimized", fock_state(2, 32), fock2_sequence, SystemParams(), lossless
            )

    def test_displacement_sweep_peaks_at_nominal(self, lossless):
        """Test that a coherent state is best prepared with the calibrated amplitude."""
        params = SystemParams(cavity_dim=8)
        seq = GateSequence.from_parameters([0.5], [])
        curve = sensitivity_sweep(
            "a_disp", [-0.04, 0.0, 0.04], "fidelity", "optimized", coherent_state(0.5, 8), seq, params, lossless
        )
        assert curve.peak_offset == 0.0
        assert curve.values[1] > 0.999  # noqa: PLR2004
        assert curve.values[0] < curve.values[1]


@pytest.mark.slow
class TestDynamicsReproduction:
    """Reproduce the with-loss prediction for the |2⟩ sequence."""

    def test_fock2_with_loss(self, fock2_sequence):
        """Test the full pulse schedule under the device coherence times."""
        value = sequence_theory_fidelity(fock_state(2, 32), fock2_sequence, SystemParams(), CoherenceParams())
        assert value == pytest.approx(0.97, abs=0.01)
