"""Device description: Hamiltonian coefficients, drive constraints and coherence times.

Frequencies are configured in cyclic units (keys ending in ``_hz``) and exposed
in angular units (rad/s) under the plain names used by the simulation code.
"""

import math

from pydantic import BaseModel, ConfigDict, Field, model_validator

from snap_prep.utils.fock_core import DEFAULT_CAVITY_DIM

TWO_PI = 2.0 * math.pi


class SystemParams(BaseModel):
    """Dispersive cavity-qubit Hamiltonian in the frame rotating at (ω_c, ω_q)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    chi_hz: float = 3.14e6
    chi_prime_hz: float = 25e3
    kerr_hz: float = 6e3
    detuning_q_hz: float = 0.0
    detuning_c_hz: float = 0.0
    anharmonicity_hz: float = -300e6
    cavity_dim: int = Field(default=DEFAULT_CAVITY_DIM, ge=2)

    @property
    def chi(self) -> float:
        return TWO_PI * self.chi_hz

    @property
    def chi_prime(self) -> float:
        return TWO_PI * self.chi_prime_hz

    @property
    def kerr(self) -> float:
        return TWO_PI * self.kerr_hz

    @property
    def detuning_q(self) -> float:
        return TWO_PI * self.detuning_q_hz

    @property
    def detuning_c(self) -> float:
        return TWO_PI * self.detuning_c_hz

    @property
    def anharmonicity(self) -> float:
        return TWO_PI * self.anharmonicity_hz

    def scaled(self, **factors: float) -> "SystemParams":
        """Copy with the named ``*_hz`` fields multiplied by the given factors."""
        return self.model_copy(update={f"{name}_hz": getattr(self, f"{name}_hz") * k for name, k in factors.items()})


class PulseConstraints(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    rabi_max_hz: float = Field(default=30e6, gt=0.0)
    sample_rate: float = Field(default=1e9, gt=0.0)
    lowpass_cutoff_hz: float = Field(default=60e6, gt=0.0)
    duration: float = Field(default=500e-9, gt=0.0)
    filter_taps: int = Field(default=64, ge=3)

    @model_validator(mode="after")
    def _cutoff_below_nyquist(self) -> "PulseConstraints":
        if self.lowpass_cutoff_hz >= self.sample_rate / 2.0:
            raise ValueError(
                f"lowpass_cutoff_hz={self.lowpass_cutoff_hz} must lie below Nyquist ({self.sample_rate / 2.0})"
            )
        return self

    @property
    def rabi_max(self) -> float:
        return TWO_PI * self.rabi_max_hz

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def n_samples(self) -> int:
        return round(self.duration * self.sample_rate)


class CoherenceParams(BaseModel):
    """Coherence times in seconds; ``math.inf`` switches a channel off."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    t1_qubit: float = Field(default=35e-6, gt=0.0)
    t2_qubit: float = Field(default=27e-6, gt=0.0)
    t1_cavity: float = Field(default=248e-6, gt=0.0)

    @model_validator(mode="after")
    def _t2_bounded_by_t1(self) -> "CoherenceParams":
        if self.t2_qubit > 2.0 * self.t1_qubit:
            raise ValueError(f"t2_qubit={self.t2_qubit} exceeds 2 * t1_qubit={2.0 * self.t1_qubit}")
        return self

    @classmethod
    def lossless(cls) -> "CoherenceParams":
        return cls(t1_qubit=math.inf, t2_qubit=math.inf, t1_cavity=math.inf)

    @property
    def gamma_cavity(self) -> float:
        return 1.0 / self.t1_cavity

    @property
    def gamma_qubit(self) -> float:
        return 1.0 / self.t1_qubit

    @property
    def gamma_phi(self) -> float:
        """Pure dephasing rate 1/T_φ = 1/T2 − 1/(2 T1), floored at 0."""
        return max(0.0, 1.0 / self.t2_qubit - 0.5 / self.t1_qubit)

    @property
    def t_phi(self) -> float:
        return math.inf if self.gamma_phi == 0.0 else 1.0 / self.gamma_phi

    @property
    def is_lossless(self) -> bool:
        return self.gamma_cavity == 0.0 and self.gamma_qubit == 0.0 and self.gamma_phi == 0.0
