"""Tests for gate-parameter synthesis."""

import numpy as np
import pytest

from snap_prep.utils.errors import SynthesisFailureError
from snap_prep.utils.fock_core import GateSequence, apply_gate_sequence, fidelity
from snap_prep.utils.gate_synth import (
    SequenceModel,
    SynthConfig,
    default_m_max,
    snapshot_states,
    synth_cost,
    synth_gradient,
    synthesize,
)
from snap_prep.utils.targets import binomial_state, fock_state


class TestCost:
    """Test the regularized cost and its gradient."""

    def test_unregularized_cost_is_infidelity(self, fock2_sequence):
        """Test that λ = 0 leaves exactly 1 − F."""
        target = fock_state(2, 32)
        psi = apply_gate_sequence(fock2_sequence, fock_state(0, 32), check_truncation=False)
        assert synth_cost(fock2_sequence, target, 0.0) == pytest.approx(1.0 - fidelity(target, psi), abs=1e-12)

    def test_lasso_term(self, fock2_sequence):
        """Test that the L1 penalty adds λ Σ|θ|."""
        target = fock_state(2, 32)
        difference = synth_cost(fock2_sequence, target, 0.1) - synth_cost(fock2_sequence, target, 0.0)
        assert difference == pytest.approx(0.1 * fock2_sequence.lasso_norm)

    def test_gradient_matches_finite_differences(self):
        """Test the exact gradient against central differences."""
        rng = np.random.default_rng(7)
        target = binomial_state(12)
        model = SequenceModel(target, (5, 5))
        x = rng.uniform(-1.0, 1.0, model.n_params)
        x[model.phase_slice] = rng.uniform(0.2, 1.0, model.n_params - 6) * rng.choice([-1, 1], model.n_params - 6)
        _, _, grad = model.evaluate(x, 0.01)
        h = 1e-6
        numeric = np.empty_like(x)
        for index in range(x.size):
            step = np.zeros_like(x)
            step[index] = h
            numeric[index] = (model.evaluate(x + step, 0.01, False)[0] - model.evaluate(x - step, 0.01, False)[0]) / (
                2 * h
            )
        assert np.max(np.abs(grad - numeric)) <= 1e-4 * max(1.0, np.max(np.abs(numeric)))  # noqa: PLR2004

    def test_gradient_layout(self, fock2_sequence):
        """Test one gradient entry per real parameter."""
        grad = synth_gradient(fock2_sequence, fock_state(2, 32), 1e-3)
        assert grad.size == 2 * 3 + 4 + 7

    def test_empty_sequence_gradient(self):
        """Test that the empty sequence has no parameters."""
        assert synth_gradient(GateSequence.empty(), fock_state(0, 4), 0.0).size == 0


class TestSynthesize:
    """Test the multi-restart optimizer."""

    def test_vacuum_is_trivial(self):
        """Test that vacuum needs no gates."""
        result = synthesize(fock_state(0, 16), SynthConfig(n_snaps=0))
        assert result.achieved_fidelity == pytest.approx(1.0)
        assert result.sequence.displacements == (0j,)
        assert result.iterations == 0

    def test_default_m_max(self):
        """Test the SNAP reach derived from the target support."""
        assert default_m_max(fock_state(2, 32), 2) == 6  # noqa: PLR2004

    def test_deterministic_given_seed(self):
        """Test that identical seeds give identical sequences."""
        config = SynthConfig(n_snaps=1, restarts=2, max_iters=60, polish_iters=20, failure_fidelity=0.0, seed=3)
        first = synthesize(fock_state(1, 12), config)
        second = synthesize(fock_state(1, 12), config)
        assert first.sequence.displacements == second.sequence.displacements
        assert first.achieved_fidelity == second.achieved_fidelity

    def test_reported_fidelity_matches_sequence(self):
        """Test that the reported fidelity is that of the returned sequence."""
        target = fock_state(1, 12)
        config = SynthConfig(n_snaps=1, restarts=2, max_iters=80, polish_iters=20, failure_fidelity=0.0)
        result = synthesize(target, config)
        psi = apply_gate_sequence(result.sequence, fock_state(0, 12), check_truncation=False)
        assert result.achieved_fidelity == pytest.approx(fidelity(target, psi), abs=1e-9)
        assert len(result.restart_fidelities) == 2  # noqa: PLR2004

    def test_failure_carries_best_effort(self):
        """Test that a displacement alone cannot reach |1⟩."""
        config = SynthConfig(n_snaps=0, restarts=2, max_iters=200, polish_iters=0)
        with pytest.raises(SynthesisFailureError) as excinfo:
            synthesize(fock_state(1, 12), config)
        best = excinfo.value.result
        assert best.achieved_fidelity <= np.exp(-1.0) + 1e-6  # noqa: PLR2004
        assert best.sequence.n_snaps == 0

    def test_clamped_phases_are_exactly_zero(self):
        """Test that phases under the sparsity threshold stay zero through the polish."""
        config = SynthConfig(
            n_snaps=1, restarts=1, max_iters=30, polish_iters=20, sparsity_threshold=100.0, failure_fidelity=0.0
        )
        result = synthesize(fock_state(1, 12), config)
        assert result.sequence.snaps[0].size == 0
        assert len(result.sequence.displacements) == 2  # noqa: PLR2004

    def test_gradient_descent_never_increases_cost(self):
        """Test the Armijo line search on the regularized cost."""
        config = SynthConfig(
            n_snaps=1, restarts=1, max_iters=40, polish_iters=0, optimizer="gradient", failure_fidelity=0.0
        )
        result = synthesize(fock_state(1, 12), config)
        assert result.cost_trace.size > 1
        assert np.all(np.diff(result.cost_trace) <= 1e-12)  # noqa: PLR2004

    def test_snapshots(self, fock2_sequence):
        """Test one snapshot per gate, the first a coherent state."""
        states = snapshot_states(fock2_sequence)
        assert len(states) == 5  # noqa: PLR2004
        assert states[0].mean_photon_number() == pytest.approx(1.39**2, abs=1e-6)


@pytest.mark.slow
class TestSynthesizeReproduction:
    """Reproduce the fidelity scaling of one-SNAP Fock-state preparation."""

    def test_fock1_one_snap(self):
        """Test |1⟩ with a single SNAP."""
        result = synthesize(fock_state(1, 32), SynthConfig(n_snaps=1))
        assert result.achieved_fidelity >= 0.98  # noqa: PLR2004

    def test_fock10_one_snap(self):
        """Test the fidelity reached for |10⟩ with a single SNAP."""
        result = synthesize(fock_state(10, 32), SynthConfig(n_snaps=1, restarts=20, target_fidelity=0.999))
        assert result.achieved_fidelity == pytest.approx(0.63, abs=0.03)
