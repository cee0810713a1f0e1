"""Truncated Fock-space linear algebra.

States, operators, gate unitaries and the state metrics every other module is
built on. Cavity⊗qubit operators use cavity-major ordering: the joint index of
``|n⟩⊗|q⟩`` is ``2 * n + q`` with ``q = 0`` the qubit ground state.
"""

from __future__ import annotations

import cmath
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as np_typing
from scipy import linalg
from scipy.special import eval_genlaguerre, gammaln

from snap_prep.utils.errors import DegenerateInputError, InvalidArgumentError, TruncationError

logger = logging.getLogger(__name__)

ComplexArray = np_typing.NDArray[np.complex128]
RealArray = np_typing.NDArray[np.float64]

DEFAULT_CAVITY_DIM = 32
NORM_TOLERANCE = 1e-10
HERMITIAN_TOLERANCE = 1e-10
PSD_TOLERANCE = 1e-8
# weight allowed in the top two Fock levels at any step of a gate sequence
LEAKAGE_TOLERANCE = 1e-4
PURITY_TOLERANCE = 1e-9


def _frozen(array: np_typing.ArrayLike, dtype: type = np.complex128) -> Any:
    frozen = np.array(array, dtype=dtype, copy=True)
    frozen.setflags(write=False)
    return frozen


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state in a Fock space truncated to ``dim`` levels."""

    amplitudes: ComplexArray

    def __post_init__(self) -> None:
        amplitudes = _frozen(self.amplitudes).reshape(-1)
        if amplitudes.size < 1:
            raise InvalidArgumentError("State vector needs at least one amplitude")
        norm = float(np.linalg.norm(amplitudes))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise InvalidArgumentError(f"State vector is not normalized (norm={norm:.12g})")
        object.__setattr__(self, "amplitudes", amplitudes)

    @classmethod
    def from_amplitudes(cls, amplitudes: np_typing.ArrayLike) -> StateVector:
        """Normalize arbitrary amplitudes into a state."""
        vector = np.asarray(amplitudes, dtype=np.complex128).reshape(-1)
        norm = float(np.linalg.norm(vector))
        if norm == 0.0 or not np.isfinite(norm):
            raise DegenerateInputError("Cannot normalize a zero or non-finite amplitude vector")
        return cls(vector / norm)

    @property
    def dim(self) -> int:
        return int(self.amplitudes.size)

    def populations(self) -> RealArray:
        return np.abs(self.amplitudes) ** 2

    def mean_photon_number(self) -> float:
        return float(np.dot(np.arange(self.dim), self.populations()))

    def overlap(self, other: StateVector) -> complex:
        if other.dim != self.dim:
            raise InvalidArgumentError(f"Dimension mismatch: {self.dim} vs {other.dim}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def expectation(self, operator: Operator) -> complex:
        if operator.dim != self.dim:
            raise InvalidArgumentError(f"Dimension mismatch: state {self.dim} vs operator {operator.dim}")
        return complex(np.vdot(self.amplitudes, operator.elements @ self.amplitudes))

    def density_matrix(self) -> DensityMatrix:
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))

    def resized(self, dim: int) -> StateVector:
        """Embed into a larger space, or drop an empty tail of the Fock ladder."""
        if dim < 1:
            raise InvalidArgumentError(f"dim must be positive, got {dim}")
        if dim >= self.dim:
            padded = np.zeros(dim, dtype=np.complex128)
            padded[: self.dim] = self.amplitudes
            return StateVector(padded)
        dropped = float(np.sum(self.populations()[dim:]))
        if dropped > NORM_TOLERANCE:
            raise TruncationError(f"Resizing to {dim} levels drops weight {dropped:.3g}", leaked_weight=dropped)
        return StateVector.from_amplitudes(self.amplitudes[:dim])


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix on ``dim`` levels."""

    elements: ComplexArray

    def __post_init__(self) -> None:
        elements = _frozen(self.elements)
        if elements.ndim != 2 or elements.shape[0] != elements.shape[1]:  # noqa: PLR2004
            raise InvalidArgumentError(f"Density matrix must be square, got shape {elements.shape}")
        if np.max(np.abs(elements - elements.conj().T)) > HERMITIAN_TOLERANCE:
            raise InvalidArgumentError("Density matrix is not Hermitian")
        trace = complex(np.trace(elements))
        if abs(trace - 1.0) > NORM_TOLERANCE:
            raise InvalidArgumentError(f"Density matrix trace is {trace.real:.12g}, expected 1")
        smallest = float(np.min(np.linalg.eigvalsh(elements)))
        if smallest < -PSD_TOLERANCE:
            raise InvalidArgumentError(f"Density matrix has negative eigenvalue {smallest:.3g}")
        object.__setattr__(self, "elements", elements)

    @classmethod
    def from_matrix(cls, matrix: np_typing.ArrayLike) -> DensityMatrix:
        """Hermitize and renormalize a matrix carrying integrator round-off."""
        rho = np.asarray(matrix, dtype=np.complex128)
        rho = 0.5 * (rho + rho.conj().T)
        trace = float(np.real(np.trace(rho)))
        if trace <= 0.0:
            raise DegenerateInputError(f"Cannot normalize a density matrix with trace {trace:.3g}")
        return cls(rho / trace)

    @classmethod
    def maximally_mixed(cls, dim: int) -> DensityMatrix:
        return cls(np.eye(dim, dtype=np.complex128) / dim)

    @property
    def dim(self) -> int:
        return int(self.elements.shape[0])

    def populations(self) -> RealArray:
        return np.clip(np.real(np.diag(self.elements)), 0.0, None)

    def expectation(self, operator: Operator) -> complex:
        if operator.dim != self.dim:
            raise InvalidArgumentError(f"Dimension mismatch: rho {self.dim} vs operator {operator.dim}")
        return complex(np.trace(self.elements @ operator.elements))

    def purity(self) -> float:
        return float(np.real(np.trace(self.elements @ self.elements)))

    def truncated(self, k: int) -> DensityMatrix:
        """Project onto the first ``k`` Fock levels and renormalize."""
        if not 1 <= k <= self.dim:
            raise InvalidArgumentError(f"k must lie in [1, {self.dim}], got {k}")
        block = self.elements[:k, :k]
        if float(np.real(np.trace(block))) <= 0.0:
            raise DegenerateInputError(f"No weight in the first {k} Fock levels")
        return DensityMatrix.from_matrix(block)

    def resized(self, dim: int) -> DensityMatrix:
        if dim >= self.dim:
            padded = np.zeros((dim, dim), dtype=np.complex128)
            padded[: self.dim, : self.dim] = self.elements
            return DensityMatrix(padded)
        return self.truncated(dim)


@dataclass(frozen=True)
class Operator:
    elements: ComplexArray
    label: str = ""

    def __post_init__(self) -> None:
        elements = _frozen(self.elements)
        if elements.ndim != 2 or elements.shape[0] != elements.shape[1]:  # noqa: PLR2004
            raise InvalidArgumentError(f"Operator must be square, got shape {elements.shape}")
        object.__setattr__(self, "elements", elements)

    @property
    def dim(self) -> int:
        return int(self.elements.shape[0])

    def __matmul__(self, other: Operator) -> Operator:
        if other.dim != self.dim:
            raise InvalidArgumentError(f"Dimension mismatch: {self.dim} vs {other.dim}")
        return Operator(self.elements @ other.elements, label=f"{self.label}·{other.label}")

    def dagger(self) -> Operator:
        return Operator(self.elements.conj().T, label=f"{self.label}†")

    def apply(self, state: StateVector) -> StateVector:
        if state.dim != self.dim:
            raise InvalidArgumentError(f"Dimension mismatch: operator {self.dim} vs state {state.dim}")
        return StateVector.from_amplitudes(self.elements @ state.amplitudes)

    def unitarity_error(self, block: int | None = None) -> float:
        """Max-norm deviation of U†U from identity, optionally on the leading block."""
        product = self.elements.conj().T @ self.elements
        size = self.dim if block is None else block
        return float(np.max(np.abs(product[:size, :size] - np.eye(size))))


def annihilation(dim: int) -> ComplexArray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=np.float64)), k=1).astype(np.complex128)


def number_operator(dim: int) -> ComplexArray:
    return np.diag(np.arange(dim, dtype=np.float64)).astype(np.complex128)


def displacement_generator(alpha: complex, dim: int) -> ComplexArray:
    a = annihilation(dim)
    return alpha * a.conj().T - np.conj(alpha) * a


def displacement_operator(alpha: complex, dim: int) -> Operator:
    """D(α) = exp(α a† − α* a) by dense scaling-and-squaring exponential."""
    alpha = complex(alpha)
    if not cmath.isfinite(alpha):
        raise InvalidArgumentError(f"Displacement amplitude must be finite, got {alpha}")
    if dim < 2:  # noqa: PLR2004
        raise InvalidArgumentError(f"Displacement needs dim >= 2, got {dim}")
    return Operator(linalg.expm(displacement_generator(alpha, dim)), label=f"D({alpha:.4g})")


def snap_unitary(thetas: Sequence[float] | RealArray, dim: int) -> Operator:
    """Diagonal SNAP gate: phase θ_j on |j⟩, identity above the last phase."""
    phases = np.asarray(thetas, dtype=np.float64).reshape(-1)
    if phases.size > dim:
        raise InvalidArgumentError(f"{phases.size} SNAP phases do not fit into dim {dim}")
    diagonal = np.ones(dim, dtype=np.complex128)
    diagonal[: phases.size] = np.exp(1j * phases)
    return Operator(np.diag(diagonal), label="S")


def parity_operator(dim: int) -> Operator:
    if dim < 1:
        raise InvalidArgumentError(f"dim must be positive, got {dim}")
    signs = np.where(np.arange(dim) % 2 == 0, 1.0, -1.0)
    return Operator(np.diag(signs).astype(np.complex128), label="Π")


def coherent_state(alpha: complex, dim: int) -> StateVector:
    """|α⟩ from its Poisson amplitudes, renormalized after truncation."""
    alpha = complex(alpha)
    if not cmath.isfinite(alpha):
        raise InvalidArgumentError(f"Coherent amplitude must be finite, got {alpha}")
    n = np.arange(dim)
    if alpha == 0:
        return StateVector(np.eye(dim, 1, dtype=np.complex128).reshape(-1))
    log_magnitude = -0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    amplitudes = np.exp(log_magnitude) * np.exp(1j * n * cmath.phase(alpha))
    return StateVector.from_amplitudes(amplitudes)


def displacement_matrix_elements(beta: complex, rows: int, cols: int) -> ComplexArray:
    """Exact ⟨m|D(β)|n⟩ for m < rows, n < cols (no truncation of the generator)."""
    beta = complex(beta)
    m = np.arange(rows)[:, None]
    n = np.arange(cols)[None, :]
    if beta == 0:
        return np.eye(rows, cols, dtype=np.complex128)
    lower = np.minimum(m, n)
    order = np.abs(m - n)
    x = abs(beta) ** 2
    log_magnitude = order * np.log(abs(beta)) + 0.5 * (gammaln(lower + 1) - gammaln(lower + order + 1)) - 0.5 * x
    # below the diagonal the power is β^k, above it (−β*)^k
    angle = np.where(m >= n, cmath.phase(beta), np.pi - cmath.phase(beta))
    laguerre = eval_genlaguerre(lower, order, x)
    return np.exp(log_magnitude + 1j * order * angle) * laguerre


def partial_trace_qubit(rho_joint: ComplexArray) -> DensityMatrix:
    """Trace out the qubit of a cavity⊗qubit density matrix."""
    size = rho_joint.shape[0]
    if size % 2:
        raise InvalidArgumentError(f"Joint dimension {size} is not cavity⊗qubit")
    cavity_dim = size // 2
    reduced = np.einsum("iaja->ij", rho_joint.reshape(cavity_dim, 2, cavity_dim, 2))
    return DensityMatrix.from_matrix(reduced)


def _as_matrix(state: StateVector | DensityMatrix) -> ComplexArray:
    if isinstance(state, StateVector):
        return np.outer(state.amplitudes, state.amplitudes.conj())
    return state.elements


def _dominant_vector(rho: ComplexArray) -> ComplexArray | None:
    eigenvalues, eigenvectors = np.linalg.eigh(rho)
    if eigenvalues[-1] >= 1.0 - PURITY_TOLERANCE:
        return eigenvectors[:, -1]
    return None


def fidelity(rho: StateVector | DensityMatrix, sigma: StateVector | DensityMatrix) -> float:
    """Uhlmann fidelity (Tr√(√ρ σ √ρ))², reducing to |⟨ψ|φ⟩|² for pure inputs."""
    dim_rho = rho.dim
    dim_sigma = sigma.dim
    if dim_rho != dim_sigma:
        raise InvalidArgumentError(f"Dimension mismatch: {dim_rho} vs {dim_sigma}")
    if isinstance(rho, StateVector) and isinstance(sigma, StateVector):
        return float(min(1.0, abs(rho.overlap(sigma)) ** 2))

    rho_m = _as_matrix(rho)
    sigma_m = _as_matrix(sigma)
    for pure, other in ((rho, sigma_m), (sigma, rho_m)):
        vector = pure.amplitudes if isinstance(pure, StateVector) else _dominant_vector(_as_matrix(pure))
        if vector is not None:
            return float(np.clip(np.real(np.vdot(vector, other @ vector)), 0.0, 1.0))

    eigenvalues, eigenvectors = np.linalg.eigh(rho_m)
    sqrt_rho = (eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ eigenvectors.conj().T
    product = sqrt_rho @ sigma_m @ sqrt_rho
    product = 0.5 * (product + product.conj().T)
    root_trace = float(np.sum(np.sqrt(np.clip(np.linalg.eigvalsh(product), 0.0, None))))
    return float(np.clip(root_trace**2, 0.0, 1.0))


def wrap_phases(thetas: np_typing.ArrayLike) -> RealArray:
    """Map phases into (−π, π], leaving in-range values untouched."""
    phases = np.asarray(thetas, dtype=np.float64)
    in_range = (phases > -np.pi) & (phases <= np.pi)
    return np.where(in_range, phases, np.pi - np.mod(np.pi - phases, 2.0 * np.pi))


@dataclass(frozen=True)
class GateSequence:
    """D(α_1) S(θ_1) D(α_2) … S(θ_n) D(α_{n+1}), stored in application order.

    Both tuples empty is the empty sequence. A trailing displacement of 0
    stands for an absent final displacement.
    """

    displacements: tuple[complex, ...]
    snaps: tuple[RealArray, ...]

    def __post_init__(self) -> None:
        displacements = tuple(complex(alpha) for alpha in self.displacements)
        snaps = tuple(_frozen(wrap_phases(np.asarray(t, dtype=np.float64).reshape(-1)), np.float64) for t in self.snaps)
        if displacements or snaps:
            if len(displacements) != len(snaps) + 1:
                raise InvalidArgumentError(
                    f"A sequence with {len(snaps)} SNAPs needs {len(snaps) + 1} displacements, got {len(displacements)}"
                )
        if not all(cmath.isfinite(alpha) for alpha in displacements):
            raise InvalidArgumentError("Displacement amplitudes must be finite")
        if not all(np.all(np.isfinite(t)) for t in snaps):
            raise InvalidArgumentError("SNAP phases must be finite")
        object.__setattr__(self, "displacements", displacements)
        object.__setattr__(self, "snaps", snaps)

    @classmethod
    def empty(cls) -> GateSequence:
        return cls((), ())

    @classmethod
    def from_parameters(cls, alphas: Iterable[complex], thetas: Iterable[Sequence[float]]) -> GateSequence:
        return cls(tuple(alphas), tuple(np.asarray(t, dtype=np.float64) for t in thetas))

    @property
    def n_snaps(self) -> int:
        return len(self.snaps)

    @property
    def n_gates(self) -> int:
        return len(self.displacements) + len(self.snaps)

    @property
    def highest_snap_index(self) -> int:
        """Largest m_i over the sequence, -1 without SNAPs."""
        return max((t.size - 1 for t in self.snaps), default=-1)

    @property
    def lasso_norm(self) -> float:
        return float(sum(np.sum(np.abs(t)) for t in self.snaps))

    def gates(self) -> list[tuple[str, complex | RealArray]]:
        """Gates in application order as ``("D", α)`` / ``("S", θ)`` pairs."""
        ordered: list[tuple[str, complex | RealArray]] = []
        for index, alpha in enumerate(self.displacements):
            ordered.append(("D", alpha))
            if index < len(self.snaps):
                ordered.append(("S", self.snaps[index]))
        return ordered

    def layers(self, dim: int) -> list[Operator]:
        return [
            displacement_operator(complex(value), dim)  # type: ignore[arg-type]
            if kind == "D"
            else snap_unitary(value, dim)  # type: ignore[arg-type]
            for kind, value in self.gates()
        ]


def _check_leakage(psi: ComplexArray, step: int) -> None:
    weight = float(np.sum(np.abs(psi) ** 2))
    leaked = float(np.sum(np.abs(psi[-2:]) ** 2))
    if leaked > LEAKAGE_TOLERANCE * weight:
        raise TruncationError(
            f"Gate {step} leaves weight {leaked:.3g} in the top two of {psi.size} Fock levels",
            leaked_weight=leaked,
        )


def sequence_states(
    seq: GateSequence, initial: StateVector, *, check_truncation: bool = True
) -> list[StateVector]:
    """States after each successive gate of ``seq`` applied to ``initial``."""
    psi = initial.amplitudes.copy()
    states = []
    for step, layer in enumerate(seq.layers(initial.dim), start=1):
        psi = layer.elements @ psi
        if check_truncation:
            _check_leakage(psi, step)
        states.append(StateVector.from_amplitudes(psi))
    return states


def apply_gate_sequence(seq: GateSequence, initial: StateVector, *, check_truncation: bool = True) -> StateVector:
    """Apply the whole sequence; the empty sequence returns the input."""
    states = sequence_states(seq, initial, check_truncation=check_truncation)
    return states[-1] if states else initial
