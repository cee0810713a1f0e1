"""Pydantic models for the artifacts written by the CLI.

Every report carries ``schema_version``; the JSON Schema of each report is
generated from these models and written next to the report.
"""

from typing import Annotated, Any, Literal

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, PlainSerializer

SCHEMA_VERSION = "1.0"


def _parse_complex(value: Any) -> complex:
    if isinstance(value, complex):
        return value
    if isinstance(value, int | float):
        return complex(value)
    if isinstance(value, list | tuple) and len(value) == 2:  # noqa: PLR2004
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        return complex(value.replace(" ", "").replace("i", "j"))
    raise ValueError(f"Cannot interpret {value!r} as a complex number")


# Accepts a number, a [re, im] pair or a string such as "1.5j"; dumps as [re, im].
ComplexValue = Annotated[
    complex,
    BeforeValidator(_parse_complex),
    PlainSerializer(lambda z: [z.real, z.imag], return_type=list[float]),
]


class ReportModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: Literal["1.0"] = SCHEMA_VERSION


class GateParameters(ReportModel):
    """Gate parameters of one sequence.

    Attributes:
        target: Label of the prepared state
        alphas: Displacement amplitudes α_1 … α_{n+1} as [re, im]
        thetas: SNAP phase vectors θ_1 … θ_n, each trimmed after its last nonzero phase
        achieved_fidelity: Ideal gate-level fidelity of the sequence to the target
    """

    target: str
    alphas: list[ComplexValue]
    thetas: list[list[float]]
    achieved_fidelity: float | None = None


class FidelityReport(ReportModel):
    target: str
    n_snaps: int
    ideal_fidelity: float
    with_loss_fidelity: float | None = None
    pulse_level: bool
    snap_infidelities: list[float] = Field(default_factory=list)
    lowpass_cutoff_hz: float
    seed: int


class SnapshotEntry(BaseModel):
    index: int
    gate: Literal["D", "S"]
    ideal_fidelity: float
    with_loss_fidelity: float | None = None


class SnapshotReport(ReportModel):
    target: str
    snapshots: list[SnapshotEntry]


class SweepCurveModel(BaseModel):
    mode: Literal["optimized", "standard"]
    offsets: list[float]
    values: list[float]
    peak_offset: float
    span_low: float | None
    span_high: float | None
    span: float | None


class SweepReport(ReportModel):
    parameter: Literal["chi", "f_snap", "a_disp", "a_snap"]
    observable: Literal["W0", "fidelity"]
    curves: list[SweepCurveModel]
    span_ratio: float | None = None


class ScalingRow(BaseModel):
    fock: int
    n_snaps: int
    step1_fidelity: float
    step2_fidelity: float | None = None
    with_loss_fidelity: float | None = None


class ScalingReport(ReportModel):
    rows: list[ScalingRow]


class DurationRow(BaseModel):
    method: Literal["standard", "optimized"]
    envelope: Literal["sin2", "square", "grape"]
    duration_ns: float
    infidelity: float


class DurationReport(ReportModel):
    alpha: ComplexValue
    thetas: list[float]
    rows: list[DurationRow]


class TomographyReport(ReportModel):
    target: str | None
    fidelity: float | None
    fock_cutoff: int | None
    bootstrap_fidelity_std: float | None
    residual: float
    n_points: int
    dim: int
    rho_real: list[list[float]]
    rho_imag: list[list[float]]


class WignerMetadata(ReportModel):
    scale: float
    shots: int | None
    seed: int | None
    extent: float | None = None
    points_per_axis: int | None = None


class PulseMetadata(ReportModel):
    """Sidecar of an exported waveform.

    Attributes:
        kind: ``snap`` for qubit drives, ``displacement`` for cavity drives
        infidelity: Coherent gate infidelity reached by the optimizer, if any
    """

    kind: Literal["snap", "displacement"]
    sample_rate: float
    carrier: float
    duration: float
    rabi_max_hz: float | None = None
    lowpass_cutoff_hz: float | None = None
    infidelity: float | None = None
    thetas: list[float] | None = None
