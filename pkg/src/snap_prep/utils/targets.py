"""Target-state constructors: Fock, binomial, cat, finite GKP and cubic phase."""

from __future__ import annotations

import itertools
import logging
import math
from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg
from scipy.special import gammaln

from snap_prep.utils.errors import DegenerateInputError, InvalidArgumentError, TruncationError
from snap_prep.utils.fock_core import (
    ComplexArray,
    StateVector,
    annihilation,
    coherent_state,
    displacement_operator,
)
from snap_prep.utils.models import ComplexValue

logger = logging.getLogger(__name__)

# levels added above the output dimension while building non-Gaussian targets
TARGET_PADDING = 16
CUBIC_LEAKAGE_TOLERANCE = 1e-3

__all__ = [
    "BinomialTarget",
    "CatTarget",
    "CubicSpec",
    "CubicTarget",
    "FockTarget",
    "GkpSpec",
    "GkpTarget",
    "TargetSpec",
    "VacuumTarget",
    "binomial_state",
    "cat_state",
    "coherent_state",
    "cubic_phase_state",
    "fock_state",
    "gkp_state",
    "retained_weight",
    "truncate_to",
]


def fock_state(n: int, dim: int) -> StateVector:
    if not 0 <= n < dim:
        raise InvalidArgumentError(f"Fock index {n} outside [0, {dim})")
    amplitudes = np.zeros(dim, dtype=np.complex128)
    amplitudes[n] = 1.0
    return StateVector(amplitudes)


def binomial_state(dim: int) -> StateVector:
    """(|0⟩ + |4⟩)/√2, mean photon number 2 and even parity."""
    if dim < 5:  # noqa: PLR2004
        raise InvalidArgumentError(f"Binomial state needs dim >= 5, got {dim}")
    amplitudes = np.zeros(dim, dtype=np.complex128)
    amplitudes[[0, 4]] = 1.0 / math.sqrt(2.0)
    return StateVector(amplitudes)


def cat_state(alpha: complex, parity: Literal["odd", "even"], dim: int) -> StateVector:
    """(|α⟩ ± |−α⟩)/N, built from the coherent amplitudes with the opposite parity zeroed."""
    alpha = complex(alpha)
    required = math.ceil(abs(alpha) ** 2 + 7.0 * abs(alpha))
    if dim < max(required, 1):
        raise InvalidArgumentError(f"|alpha|={abs(alpha):.3g} needs dim >= {required}, got {dim}")
    if parity not in ("odd", "even"):
        raise InvalidArgumentError(f"parity must be 'odd' or 'even', got {parity!r}")
    kept = 1 if parity == "odd" else 0
    amplitudes = np.array(coherent_state(alpha, dim).amplitudes)
    amplitudes[np.arange(dim) % 2 != kept] = 0.0
    try:
        return StateVector.from_amplitudes(amplitudes)
    except DegenerateInputError as err:
        raise DegenerateInputError(f"{parity} cat with alpha={alpha} has no support in {dim} levels") from err


class GkpSpec(BaseModel):
    """Finite-energy square-grid GKP state.

    Attributes:
        sigma: Envelope width σ ∈ [0, 1]
        mu: Logical encoding μ ∈ {0, 1}
        grid_range: R, grid indices n1, n2 ∈ [−R, R]
        dim: Fock cutoff the state is built in
        min_retained_norm: Fraction of the untruncated norm that must fall inside ``dim``.
            Defaults to 0.99: the σ = 0.35 state keeps only about 0.996 of its norm in
            25 levels, so a 0.999 bound would reject it.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    sigma: float = Field(default=0.35, ge=0.0, le=1.0)
    mu: Literal[0, 1] = 0
    grid_range: int = Field(default=8, ge=1)
    dim: int = Field(default=25, ge=2)
    min_retained_norm: float = Field(default=0.99, gt=0.0, le=1.0)


def _coherent_amplitudes(alpha: complex, dim: int) -> ComplexArray:
    """Untruncated-normalization coherent amplitudes e^{−|α|²/2} αⁿ/√n!."""
    n = np.arange(dim)
    if alpha == 0:
        return np.eye(dim, 1, dtype=np.complex128).reshape(-1)
    log_magnitude = -0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(log_magnitude + 1j * n * np.angle(alpha))


def gkp_state(spec: GkpSpec) -> StateVector:
    work_dim = spec.dim + TARGET_PADDING
    spacing = math.sqrt(math.pi / 2.0)
    amplitudes = np.zeros(work_dim, dtype=np.complex128)
    grid = range(-spec.grid_range, spec.grid_range + 1)
    for n1, n2 in itertools.product(grid, grid):
        alpha = complex(spacing * (2 * n1 + spec.mu), spacing * n2)
        weight = math.exp(-(spec.sigma**2) * abs(alpha) ** 2)
        phase = np.exp(-1j * alpha.real * alpha.imag)
        amplitudes += weight * phase * _coherent_amplitudes(alpha, work_dim)

    total = float(np.sum(np.abs(amplitudes) ** 2))
    if total == 0.0:
        raise DegenerateInputError("GKP grid sum vanished")
    retained = float(np.sum(np.abs(amplitudes[: spec.dim]) ** 2)) / total
    if retained < spec.min_retained_norm:
        raise TruncationError(
            f"GKP state keeps only {retained:.4f} of its norm in {spec.dim} levels",
            leaked_weight=1.0 - retained,
        )
    logger.debug("GKP sigma=%.3f mu=%d keeps %.5f of its norm in %d levels", spec.sigma, spec.mu, retained, spec.dim)
    return StateVector.from_amplitudes(amplitudes[: spec.dim])


class CubicSpec(BaseModel):
    """Displaced squeezed cubic phase state D(β) e^{iγq³} S(ζ)|0⟩ with q = a + a†."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    cubicity: float = -0.106
    squeezing: ComplexValue = 0.5
    displacement: ComplexValue = 1.5j
    dim: int = Field(default=32, ge=2)


def cubic_phase_state(spec: CubicSpec) -> StateVector:
    work_dim = spec.dim + TARGET_PADDING
    a = annihilation(work_dim)
    a_dag = a.conj().T
    zeta = complex(spec.squeezing)
    squeeze = linalg.expm(0.5 * (np.conj(zeta) * a @ a - zeta * a_dag @ a_dag))
    q = a + a_dag
    cubic = linalg.expm(1j * spec.cubicity * q @ q @ q)
    psi = squeeze[:, 0]
    psi = cubic @ psi
    psi = displacement_operator(spec.displacement, work_dim).elements @ psi

    weight = float(np.sum(np.abs(psi) ** 2))
    leaked = float(np.sum(np.abs(psi[spec.dim :]) ** 2)) / weight
    if leaked > CUBIC_LEAKAGE_TOLERANCE:
        raise TruncationError(f"Cubic phase state leaks {leaked:.3g} above {spec.dim} levels", leaked_weight=leaked)
    return StateVector.from_amplitudes(psi[: spec.dim])


def retained_weight(state: StateVector, k: int) -> float:
    """Population of the first ``k`` Fock levels."""
    return float(np.sum(state.populations()[:k]))


def truncate_to(state: StateVector, k: int) -> StateVector:
    """Zero the amplitudes from index ``k`` upwards and renormalize."""
    if not 1 <= k <= state.dim:
        raise InvalidArgumentError(f"k must lie in [1, {state.dim}], got {k}")
    amplitudes = np.array(state.amplitudes)
    amplitudes[k:] = 0.0
    if not np.any(np.abs(amplitudes) > 0.0):
        raise DegenerateInputError(f"State has no amplitude below Fock index {k}")
    return StateVector.from_amplitudes(amplitudes)


class _Target(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    def build(self, dim: int) -> StateVector:
        raise NotImplementedError

    @property
    def label(self) -> str:
        raise NotImplementedError


class VacuumTarget(_Target):
    kind: Literal["vacuum"] = "vacuum"

    def build(self, dim: int) -> StateVector:
        return fock_state(0, dim)

    @property
    def label(self) -> str:
        return "vacuum"


class FockTarget(_Target):
    kind: Literal["fock"] = "fock"
    n: int = Field(ge=0)

    def build(self, dim: int) -> StateVector:
        return fock_state(self.n, dim)

    @property
    def label(self) -> str:
        return f"fock{self.n}"


class BinomialTarget(_Target):
    kind: Literal["binomial"] = "binomial"

    def build(self, dim: int) -> StateVector:
        return binomial_state(dim)

    @property
    def label(self) -> str:
        return "binomial"


class CatTarget(_Target):
    kind: Literal["cat"] = "cat"
    alpha: ComplexValue = math.sqrt(2.0)
    parity: Literal["odd", "even"] = "odd"

    def build(self, dim: int) -> StateVector:
        return cat_state(self.alpha, self.parity, dim)

    @property
    def label(self) -> str:
        return f"cat_{self.parity}"


class GkpTarget(GkpSpec):
    """GKP target; built at its own cutoff and embedded into the cavity space."""

    kind: Literal["gkp"] = "gkp"

    def build(self, dim: int) -> StateVector:
        state = gkp_state(self)
        return state.resized(dim) if dim >= state.dim else truncate_to(state, dim).resized(dim)

    @property
    def label(self) -> str:
        return f"gkp{self.mu}"


class CubicTarget(_Target):
    kind: Literal["cubic"] = "cubic"
    cubicity: float = -0.106
    squeezing: ComplexValue = 0.5
    displacement: ComplexValue = 1.5j
    fock_cutoff: int | None = Field(default=10, ge=1)

    def build(self, dim: int) -> StateVector:
        return cubic_phase_state(
            CubicSpec(cubicity=self.cubicity, squeezing=self.squeezing, displacement=self.displacement, dim=dim)
        )

    @property
    def label(self) -> str:
        return "cubic"


TargetSpec = Annotated[
    VacuumTarget | FockTarget | BinomialTarget | CatTarget | GkpTarget | CubicTarget,
    Field(discriminator="kind"),
]
