"""Tests for target-state constructors."""

import math

import numpy as np
import pytest
from pydantic import TypeAdapter, ValidationError

from snap_prep.utils.errors import InvalidArgumentError, TruncationError
from snap_prep.utils.fock_core import StateVector, displacement_matrix_elements, fidelity, parity_operator
from snap_prep.utils.targets import (
    CatTarget,
    CubicSpec,
    CubicTarget,
    FockTarget,
    GkpSpec,
    GkpTarget,
    TargetSpec,
    binomial_state,
    cat_state,
    cubic_phase_state,
    fock_state,
    gkp_state,
    retained_weight,
    truncate_to,
)


def squeezed_vacuum_series(r: float, dim: int) -> np.ndarray:
    """Closed-form amplitudes of exp(r/2 (a² − a†²))|0⟩."""
    amplitudes = np.zeros(dim, dtype=np.complex128)
    for m in range(dim // 2):
        amplitudes[2 * m] = (
            (-math.tanh(r)) ** m * math.sqrt(math.factorial(2 * m)) / (2**m * math.factorial(m)) / math.sqrt(math.cosh(r))
        )
    return amplitudes


class TestSimpleTargets:
    """Test Fock, binomial and cat states."""

    def test_fock_state(self):
        """Test |n⟩ in a truncated space."""
        state = fock_state(3, 6)
        assert state.populations()[3] == 1.0

    def test_fock_index_out_of_range(self):
        """Test rejection of n >= dim."""
        with pytest.raises(InvalidArgumentError):
            fock_state(6, 6)

    def test_binomial_moments(self):
        """Test mean photon number 2 and even parity."""
        state = binomial_state(32)
        assert state.mean_photon_number() == pytest.approx(2.0)
        assert state.expectation(parity_operator(32)).real == pytest.approx(1.0)

    def test_odd_cat_has_odd_support(self):
        """Test that the odd cat populates odd Fock levels only."""
        state = cat_state(math.sqrt(2.0), "odd", 32)
        assert np.allclose(state.populations()[::2], 0.0)
        assert state.expectation(parity_operator(32)).real == pytest.approx(-1.0)

    def test_small_even_cat_is_vacuum(self):
        """Test the α → 0 limit of the even cat."""
        state = cat_state(0.01, "even", 32)
        assert fidelity(state, fock_state(0, 32)) >= 0.999  # noqa: PLR2004

    def test_cat_needs_room(self):
        """Test rejection of a cat that does not fit into the cutoff."""
        with pytest.raises(InvalidArgumentError, match="needs dim"):
            cat_state(3.0, "odd", 10)

    def test_truncation_helpers(self):
        """Test retained weight and truncation of the binomial state."""
        state = binomial_state(8)
        assert retained_weight(state, 4) == pytest.approx(0.5)
        assert fidelity(truncate_to(state, 4), fock_state(0, 8)) == pytest.approx(1.0)


class TestGkp:
    """Test the finite-energy GKP construction."""

    def test_normalized_and_sized(self):
        """Test that the default GKP state is a valid 25-level state."""
        state = gkp_state(GkpSpec())
        assert state.dim == 25  # noqa: PLR2004
        assert np.linalg.norm(state.amplitudes) == pytest.approx(1.0)

    def test_broad_envelope_is_near_vacuum(self):
        """Test that σ = 1 with one grid ring is dominated by the origin term."""
        state = gkp_state(GkpSpec(sigma=1.0, grid_range=1))
        assert fidelity(state, fock_state(0, 25)) >= 0.5  # noqa: PLR2004

    def test_grid_range_converges(self):
        """Test invariance once added grid terms carry negligible weight."""
        reference = gkp_state(GkpSpec(grid_range=8))
        wider = gkp_state(GkpSpec(grid_range=10))
        widest = gkp_state(GkpSpec(grid_range=12))
        assert fidelity(reference, wider) >= 1 - 1e-6  # noqa: PLR2004
        assert fidelity(reference, widest) >= 1 - 1e-6  # noqa: PLR2004

    def test_mean_photon_number(self):
        """Test ⟨a†a⟩ ≈ 4 for the σ = 0.35 logical zero."""
        assert gkp_state(GkpSpec()).mean_photon_number() == pytest.approx(4.0, abs=0.5)

    def test_default_retained_norm(self):
        """Test that σ = 0.35 fits the default bound but not a 0.999 one."""
        assert gkp_state(GkpSpec(sigma=0.35)).dim == 25  # noqa: PLR2004
        with pytest.raises(TruncationError):
            gkp_state(GkpSpec(sigma=0.35, min_retained_norm=0.999))

    def test_narrower_envelope_exceeds_default_bound(self):
        """Test that σ = 0.3 leaks too much out of 25 levels."""
        with pytest.raises(TruncationError) as excinfo:
            gkp_state(GkpSpec(sigma=0.3))
        assert excinfo.value.leaked_weight > 0.01  # noqa: PLR2004

    def test_logical_states_differ(self):
        """Test that μ = 0 and μ = 1 are distinguishable."""
        zero = gkp_state(GkpSpec(mu=0))
        one = gkp_state(GkpSpec(mu=1))
        assert fidelity(zero, one) < 0.5  # noqa: PLR2004

    def test_truncation_reported(self):
        """Test that a narrow envelope does not fit into ten levels."""
        with pytest.raises(TruncationError) as excinfo:
            gkp_state(GkpSpec(sigma=0.2, dim=10))
        assert excinfo.value.leaked_weight > 0.01  # noqa: PLR2004


class TestCubic:
    """Test the cubic phase state."""

    def test_zero_cubicity_is_displaced_squeezed_vacuum(self):
        """Test γ = 0 against the closed-form squeezed vacuum series."""
        spec = CubicSpec(cubicity=0.0, squeezing=0.5, displacement=1.5j, dim=32)
        series = squeezed_vacuum_series(0.5, 60)
        expected = displacement_matrix_elements(1.5j, 32, 60) @ series
        state = cubic_phase_state(spec)
        assert 1.0 - fidelity(state, StateVector.from_amplitudes(expected)) <= 1e-6  # noqa: PLR2004

    def test_default_fits_cutoff(self):
        """Test that the default cubic state is built in 32 levels."""
        assert cubic_phase_state(CubicSpec()).dim == 32  # noqa: PLR2004


class TestTargetModels:
    """Test the configuration-facing target models."""

    def test_discriminated_by_kind(self):
        """Test that ``kind`` selects the target model."""
        adapter = TypeAdapter(TargetSpec)
        target = adapter.validate_python({"kind": "fock", "n": 2})
        assert isinstance(target, FockTarget)
        assert target.label == "fock2"

    def test_unknown_field_rejected(self):
        """Test that unknown keys are rejected."""
        with pytest.raises(ValidationError):
            TypeAdapter(TargetSpec).validate_python({"kind": "fock", "n": 2, "m": 1})

    def test_cat_accepts_pair(self):
        """Test complex amplitudes given as [re, im]."""
        target = TypeAdapter(TargetSpec).validate_python({"kind": "cat", "alpha": [0.0, 1.0]})
        assert isinstance(target, CatTarget)
        assert target.alpha == 1.0j

    def test_gkp_embedded_into_cavity(self):
        """Test that the GKP target is padded to the cavity dimension."""
        state = GkpTarget().build(32)
        assert state.dim == 32  # noqa: PLR2004
        assert retained_weight(state, 25) == pytest.approx(1.0)

    def test_cubic_reports_cutoff(self):
        """Test the default fidelity cutoff of the cubic target."""
        assert CubicTarget().fock_cutoff == 10  # noqa: PLR2004
