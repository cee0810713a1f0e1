import logging
from pathlib import Path
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from snap_prep.utils.device_config import CoherenceParams, PulseConstraints, SystemParams
from snap_prep.utils.errors import ConfigError
from snap_prep.utils.fock_core import GateSequence
from snap_prep.utils.gate_synth import SynthConfig
from snap_prep.utils.models import ComplexValue
from snap_prep.utils.pulse_synth import GrapeConfig
from snap_prep.utils.targets import TargetSpec, VacuumTarget
from snap_prep.utils.wigner_tomo import DEFAULT_EXTENT, DEFAULT_POINTS_PER_AXIS, DEFAULT_SHOTS, ReconstructionConfig

logger = logging.getLogger(__name__)

Experiment = Literal["prepare", "snapshots", "sweep", "scaling", "tomography", "duration"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SequenceParams(_Section):
    """Explicit gate parameters; when present the gate-level synthesis is skipped.

    Attributes:
        alphas: Displacements α_1 … α_{n+1}, numbers or [re, im] pairs
        thetas: SNAP phase vectors θ_1 … θ_n
    """

    alphas: list[ComplexValue]
    thetas: list[list[float]] = Field(default_factory=list)

    def to_sequence(self) -> GateSequence:
        return GateSequence.from_parameters(self.alphas, self.thetas)


class SweepConfig(_Section):
    parameters: list[Literal["chi", "f_snap", "a_disp", "a_snap"]] = Field(
        default_factory=lambda: ["chi", "f_snap", "a_disp", "a_snap"]
    )
    offsets: list[float] = Field(default_factory=lambda: [round(-0.07 + 0.01 * k, 2) for k in range(15)])
    observable: Literal["W0", "fidelity"] = "fidelity"
    modes: list[Literal["optimized", "standard"]] = Field(default_factory=lambda: ["optimized", "standard"])
    standard_duration: float = Field(default=4000e-9, gt=0.0)


class ScalingConfig(_Section):
    fock_states: list[int] = Field(default_factory=lambda: list(range(1, 11)))
    n_snaps: list[int] = Field(default_factory=lambda: [1, 2])
    with_loss: bool = True


class TomographyConfig(_Section):
    """Wigner tomography settings.

    Attributes:
        source: ``prepared`` runs the preparation first, ``target`` measures the ideal target
        input_csv: Measured grid to reconstruct instead of simulating one
        simulate_decoherence: Model the Ramsey readout under the configured coherence
        shots: Shots per point and final pulse; ``null`` for expectation values
        fock_cutoff: Report the fidelity on the first k Fock levels only
        bootstrap: Estimate the fidelity uncertainty by resampling shots
    """

    source: Literal["prepared", "target"] = "prepared"
    input_csv: Path | None = None
    extent: float = Field(default=DEFAULT_EXTENT, gt=0.0)
    points_per_axis: int = Field(default=DEFAULT_POINTS_PER_AXIS, ge=1)
    simulate_decoherence: bool = True
    shots: int | None = Field(default=DEFAULT_SHOTS, ge=1)
    fock_cutoff: int | None = Field(default=None, ge=1)
    bootstrap: bool = True
    reconstruction: ReconstructionConfig = Field(default_factory=ReconstructionConfig)


class DurationConfig(_Section):
    alpha: ComplexValue = 1.39
    thetas: list[float] = Field(default_factory=lambda: [2.049, -0.654, 1.130, -1.106])
    durations: list[float] = Field(default_factory=lambda: [500e-9, 1000e-9, 2000e-9, 3000e-9, 4000e-9])
    envelopes: list[Literal["sin2", "square"]] = Field(default_factory=lambda: ["sin2", "square"])
    optimized_durations: list[float] = Field(default_factory=lambda: [500e-9])


class RunConfig(_Section):
    """Everything a run needs; frequencies in Hz (``*_hz`` keys), times in seconds.

    Attributes:
        experiment: Command to run when none is given on the command line
        target: Target state, discriminated by ``kind``
        sequence: Fixed gate parameters replacing the gate-level synthesis
        pulse_level: Evaluate with pulse schedules instead of ideal gates
        render: Also write PNG heatmaps of the Wigner grids
    """

    experiment: Experiment | None = None
    target: TargetSpec = Field(default_factory=VacuumTarget)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    grape: GrapeConfig = Field(default_factory=GrapeConfig)
    constraints: PulseConstraints = Field(default_factory=PulseConstraints)
    system: SystemParams = Field(default_factory=SystemParams)
    coherence: CoherenceParams = Field(default_factory=CoherenceParams)
    sequence: SequenceParams | None = None
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    scaling: ScalingConfig = Field(default_factory=ScalingConfig)
    tomography: TomographyConfig = Field(default_factory=TomographyConfig)
    duration: DurationConfig = Field(default_factory=DurationConfig)
    output_dir: Path = Path("runs")
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    pulse_level: bool = True
    render: bool = False

    def with_overrides(
        self, seed: int | None = None, threads: int | None = None, output_dir: Path | None = None
    ) -> "RunConfig":
        """Apply command-line overrides and propagate seed and threads into the sections."""
        seed = self.seed if seed is None else seed
        threads = self.threads if threads is None else threads
        return self.model_copy(
            update={
                "seed": seed,
                "threads": threads,
                "output_dir": self.output_dir if output_dir is None else output_dir,
                "synth": self.synth.model_copy(update={"seed": seed, "threads": threads}),
                "grape": self.grape.model_copy(update={"threads": threads}),
                "tomography": self.tomography.model_copy(
                    update={"reconstruction": self.tomography.reconstruction.model_copy(update={"threads": threads})}
                ),
            }
        )


def load_config(config_path: Path) -> RunConfig:
    try:
        with config_path.open("r") as file:
            config_data = yaml.safe_load(file)
        return RunConfig.model_validate(config_data or {})
    except FileNotFoundError as err:
        logger.error("Config file not found: %s", config_path)
        raise err
    except yaml.YAMLError as err_y:
        logger.error("Config file is not valid YAML: %s", err_y)
        raise ConfigError(f"{config_path}: {err_y}") from err_y
    except ValidationError as err_v:
        logger.error("Validation error: %s", err_v)
        raise err_v
