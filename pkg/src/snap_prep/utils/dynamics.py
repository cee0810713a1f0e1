"""Open- and closed-system evolution of the driven cavity-qubit system.

The master equation is

    dρ/dt = −i[H(t), ρ] + 𝒟[a]ρ / T1c + 𝒟[b]ρ / T1q + 𝒟[b†b]ρ / Tφ

with H(t) piecewise constant over the samples of a :class:`DriveSchedule`.
Each constant segment is integrated with an adaptive Dormand-Prince scheme.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import integrate, linalg

from snap_prep.utils.device_config import CoherenceParams, PulseConstraints, SystemParams
from snap_prep.utils.errors import IntegratorFailureError, InvalidArgumentError
from snap_prep.utils.fock_core import (
    ComplexArray,
    DensityMatrix,
    GateSequence,
    RealArray,
    StateVector,
    annihilation,
    fidelity,
    parity_operator,
    partial_trace_qubit,
    sequence_states,
)
from snap_prep.utils.pulse_synth import (
    GrapeConfig,
    PulseWaveform,
    compile_snap_pulses,
    displacement_pulse,
    hamiltonian,
)

logger = logging.getLogger(__name__)

INTEGRATOR_RTOL = 1e-8
INTEGRATOR_ATOL = 1e-10
TRACE_TOLERANCE = 1e-5
NEGATIVITY_TOLERANCE = 1e-7
MAX_SWEEP_OFFSET = 0.1
# within 1% of the peak value
SPAN_FRACTION = 0.01

_LOWER_QUBIT = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=np.complex128)

SweepParameter = Literal["chi", "f_snap", "a_disp", "a_snap"]
SweepObservable = Literal["W0", "fidelity"]
SnapMode = Literal["optimized", "standard"]


@dataclass(frozen=True)
class DriveSchedule:
    """Concatenated qubit and cavity drives of a gate sequence.

    ``gate_ends[i]`` is the sample index at which gate ``i`` finishes; gates
    without a pulse (a zero displacement) end where the previous one did.
    """

    qubit: ComplexArray
    cavity: ComplexArray
    sample_rate: float
    gate_ends: tuple[int, ...] = ()
    gate_kinds: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        qubit = np.asarray(self.qubit, dtype=np.complex128).reshape(-1)
        cavity = np.asarray(self.cavity, dtype=np.complex128).reshape(-1)
        if qubit.size != cavity.size:
            raise InvalidArgumentError(f"Qubit and cavity drives differ in length: {qubit.size} vs {cavity.size}")
        if len(self.gate_ends) != len(self.gate_kinds):
            raise InvalidArgumentError("gate_ends and gate_kinds must have the same length")
        if any(end < 0 or end > qubit.size for end in self.gate_ends) or list(self.gate_ends) != sorted(
            self.gate_ends
        ):
            raise InvalidArgumentError("gate_ends must be non-decreasing sample indices")
        object.__setattr__(self, "qubit", qubit)
        object.__setattr__(self, "cavity", cavity)

    @classmethod
    def idle(cls, duration: float, sample_rate: float) -> DriveSchedule:
        n_samples = round(duration * sample_rate)
        zeros = np.zeros(n_samples, dtype=np.complex128)
        return cls(zeros, zeros, sample_rate)

    @property
    def n_samples(self) -> int:
        return int(self.qubit.size)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def duration(self) -> float:
        return self.n_samples * self.dt

    def segments(self) -> list[tuple[int, int]]:
        """Runs of identical drive samples, split at the gate boundaries."""
        if self.n_samples == 0:
            return []
        changes = (np.diff(self.qubit) != 0) | (np.diff(self.cavity) != 0)
        cuts = set((np.flatnonzero(changes) + 1).tolist()) | {e for e in self.gate_ends if 0 < e < self.n_samples}
        edges = [0, *sorted(cuts), self.n_samples]
        return list(zip(edges[:-1], edges[1:], strict=True))


@dataclass(frozen=True)
class ScheduleSettings:
    """Execution parameters of the pulses; the defaults are the calibrated values.

    ``snap_carrier`` detunes every SNAP drive (rad/s).
    """

    displacement_duration: float = 50e-9
    displacement_calibration: float | None = None
    displacement_scale: float = 1.0
    snap_scale: float = 1.0
    snap_carrier: float = 0.0


def build_schedule(
    seq: GateSequence,
    snap_pulses: Sequence[PulseWaveform],
    sample_rate: float = 1e9,
    settings: ScheduleSettings | None = None,
) -> DriveSchedule:
    """Lay out displacement and SNAP pulses back to back, without gaps."""
    settings = settings or ScheduleSettings()
    if len(snap_pulses) != seq.n_snaps:
        raise InvalidArgumentError(f"{seq.n_snaps} SNAPs need as many pulses, got {len(snap_pulses)}")
    qubit: list[ComplexArray] = []
    cavity: list[ComplexArray] = []
    ends: list[int] = []
    kinds: list[str] = []
    position = 0
    snaps = iter(snap_pulses)
    for kind, value in seq.gates():
        if kind == "D":
            alpha = complex(value) * settings.displacement_scale  # type: ignore[arg-type]
            if alpha != 0:
                drive = displacement_pulse(
                    alpha, settings.displacement_calibration, settings.displacement_duration, sample_rate
                ).samples
                cavity.append(drive)
                qubit.append(np.zeros(drive.size, dtype=np.complex128))
                position += drive.size
        else:
            pulse = next(snaps)
            if not math.isclose(pulse.sample_rate, sample_rate, rel_tol=1e-12):
                raise InvalidArgumentError(f"SNAP pulse sampled at {pulse.sample_rate}, schedule at {sample_rate}")
            drive = pulse.with_carrier(pulse.carrier + settings.snap_carrier).effective_samples * settings.snap_scale
            qubit.append(drive)
            cavity.append(np.zeros(drive.size, dtype=np.complex128))
            position += drive.size
        ends.append(position)
        kinds.append(kind)
    empty = np.zeros(0, dtype=np.complex128)
    return DriveSchedule(
        np.concatenate(qubit) if qubit else empty,
        np.concatenate(cavity) if cavity else empty,
        sample_rate,
        tuple(ends),
        tuple(kinds),
    )


@dataclass(frozen=True)
class EvolutionResult:
    """Joint cavity⊗qubit state after a schedule.

    Attributes:
        final_state: State at the end of the schedule
        times: Segment end times in seconds, starting at 0
        trace_trace: Tr ρ at each entry of ``times``
        snapshots: State at each gate boundary of the schedule
    """

    final_state: DensityMatrix
    times: RealArray
    trace_trace: RealArray
    snapshots: tuple[DensityMatrix, ...] = ()


class _MasterEquation:
    def __init__(self, params: SystemParams, coherence: CoherenceParams, coherent: bool = True) -> None:
        d = params.cavity_dim
        self.dim = 2 * d
        self.coherent = coherent
        self.a = np.kron(annihilation(d), np.eye(2))
        self.b = np.kron(np.eye(d), _LOWER_QUBIT)
        self.h0 = hamiltonian(params, 0.0).elements if coherent else np.zeros((self.dim, self.dim), np.complex128)
        channels = (
            (coherence.gamma_cavity, self.a),
            (coherence.gamma_qubit, self.b),
            (coherence.gamma_phi, self.b.conj().T @ self.b),
        )
        self.jumps = [math.sqrt(rate) * op for rate, op in channels if rate > 0.0]
        self.damping = -0.5j * sum((j.conj().T @ j for j in self.jumps), np.zeros_like(self.h0))

    def effective_hamiltonian(self, gamma: complex, epsilon: complex) -> ComplexArray:
        h = self.h0 + self.damping
        if self.coherent:
            h = h + gamma * self.b.conj().T + np.conj(gamma) * self.b
            h = h + epsilon * self.a.conj().T + np.conj(epsilon) * self.a
        return h

    def derivative(self, h_eff: ComplexArray) -> Callable[[float, ComplexArray], ComplexArray]:
        n = self.dim
        h_dag = h_eff.conj().T
        jumps = [(j, j.conj().T) for j in self.jumps]

        def rhs(_t: float, y: ComplexArray) -> ComplexArray:
            rho = y.reshape(n, n)
            out = -1j * (h_eff @ rho - rho @ h_dag)
            for jump, jump_dag in jumps:
                out += jump @ rho @ jump_dag
            return out.reshape(-1)

        return rhs


def _physical(rho: ComplexArray) -> DensityMatrix:
    """Hermitize, clip round-off negativity and renormalize."""
    rho = 0.5 * (rho + rho.conj().T)
    eigenvalues, eigenvectors = np.linalg.eigh(rho)
    if eigenvalues[0] < -NEGATIVITY_TOLERANCE:
        raise IntegratorFailureError(f"Density matrix developed eigenvalue {eigenvalues[0]:.3g}")
    clipped = np.clip(eigenvalues, 0.0, None)
    return DensityMatrix.from_matrix((eigenvectors * clipped) @ eigenvectors.conj().T)


def joint_ground(state: StateVector | DensityMatrix) -> DensityMatrix:
    """Cavity state ⊗ |g⟩⟨g|."""
    rho = state.density_matrix().elements if isinstance(state, StateVector) else state.elements
    ground = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=np.complex128)
    return DensityMatrix(np.kron(rho, ground))


def lindblad_evolve(
    rho0: DensityMatrix,
    params: SystemParams,
    coherence: CoherenceParams,
    schedule: DriveSchedule,
    coherent: bool = True,
    rtol: float = INTEGRATOR_RTOL,
    atol: float = INTEGRATOR_ATOL,
) -> EvolutionResult:
    """Integrate the master equation over ``schedule`` from ``rho0``.

    With ``coherent=False`` the Hamiltonian is dropped and only the
    dissipators act, which is how idle gaps are modelled in gate-level runs.
    """
    equation = _MasterEquation(params, coherence, coherent)
    if rho0.dim != equation.dim:
        raise InvalidArgumentError(f"rho0 has dim {rho0.dim}, expected cavity⊗qubit dim {equation.dim}")

    y = np.array(rho0.elements, dtype=np.complex128).reshape(-1)
    times = [0.0]
    traces = [1.0]
    snapshots: list[DensityMatrix] = []
    pending = list(schedule.gate_ends)
    while pending and pending[0] == 0:
        snapshots.append(rho0)
        pending.pop(0)

    for start, stop in schedule.segments():
        h_eff = equation.effective_hamiltonian(schedule.qubit[start], schedule.cavity[start])
        solution = integrate.solve_ivp(
            equation.derivative(h_eff),
            (0.0, (stop - start) * schedule.dt),
            y,
            method="DOP853",
            rtol=rtol,
            atol=atol,
        )
        if not solution.success:
            raise IntegratorFailureError(f"Integration failed at sample {start}: {solution.message}")
        y = solution.y[:, -1]
        trace = float(np.real(np.trace(y.reshape(equation.dim, equation.dim))))
        if abs(trace - 1.0) > TRACE_TOLERANCE:
            raise IntegratorFailureError(f"Trace drifted to {trace:.9f} at t = {stop * schedule.dt:.4g} s")
        times.append(stop * schedule.dt)
        traces.append(trace)
        while pending and pending[0] == stop:
            snapshots.append(_physical(y.reshape(equation.dim, equation.dim)))
            pending.pop(0)

    final = _physical(y.reshape(equation.dim, equation.dim)) if schedule.n_samples else rho0
    logger.debug("Integrated %.0f ns in %d segments", schedule.duration * 1e9, len(times) - 1)
    return EvolutionResult(final, np.array(times), np.array(traces), tuple(snapshots))


def propagate_schedule(
    initial: StateVector, params: SystemParams, schedule: DriveSchedule
) -> tuple[StateVector, list[StateVector]]:
    """Closed-system evolution of a joint pure state; returns the final and per-gate states."""
    d = params.cavity_dim
    if initial.dim != 2 * d:
        raise InvalidArgumentError(f"Initial state has dim {initial.dim}, expected {2 * d}")
    psi = np.array(initial.amplitudes)
    pending = list(schedule.gate_ends)
    snapshots = []
    while pending and pending[0] == 0:
        snapshots.append(initial)
        pending.pop(0)
    for start, stop in schedule.segments():
        h = hamiltonian(params, schedule.qubit[start], schedule.cavity[start]).elements
        psi = linalg.expm(-1j * h * (stop - start) * schedule.dt) @ psi
        while pending and pending[0] == stop:
            snapshots.append(StateVector.from_amplitudes(psi))
            pending.pop(0)
    return StateVector.from_amplitudes(psi), snapshots


@dataclass(frozen=True)
class SequenceEvaluation:
    """Cavity states of an executed sequence.

    ``snapshot_fidelities[i]`` compares the state after gate ``i`` with the
    ideal gate-level state at the same point.
    """

    final_state: DensityMatrix
    fidelity: float
    gate_kinds: tuple[str, ...]
    snapshots: tuple[DensityMatrix, ...]
    snapshot_fidelities: tuple[float, ...]

    @property
    def wigner_origin(self) -> float:
        """W(0) = (2/π) ⟨Π⟩ of the final cavity state."""
        parity = parity_operator(self.final_state.dim)
        return float(2.0 / math.pi * np.real(self.final_state.expectation(parity)))


def _cavity(state: StateVector | DensityMatrix) -> DensityMatrix:
    if isinstance(state, StateVector):
        return partial_trace_qubit(np.outer(state.amplitudes, state.amplitudes.conj()))
    return partial_trace_qubit(state.elements)


def _gate_level(
    seq: GateSequence,
    params: SystemParams,
    coherence: CoherenceParams,
    snap_duration: float,
    settings: ScheduleSettings,
    sample_rate: float,
) -> tuple[DensityMatrix, list[DensityMatrix]]:
    d = params.cavity_dim
    rho = joint_ground(StateVector(np.eye(d, 1, dtype=np.complex128).reshape(-1)))
    snapshots = []
    for (kind, value), layer in zip(seq.gates(), seq.layers(d), strict=True):
        joint = np.kron(layer.elements, np.eye(2))
        rho = DensityMatrix.from_matrix(joint @ rho.elements @ joint.conj().T)
        if kind == "S":
            duration = snap_duration
        else:
            duration = settings.displacement_duration if complex(value) != 0 else 0.0  # type: ignore[arg-type]
        if duration > 0.0 and not coherence.is_lossless:
            idle = DriveSchedule.idle(duration, sample_rate)
            rho = lindblad_evolve(rho, params, coherence, idle, coherent=False).final_state
        snapshots.append(_cavity(rho))
    return _cavity(rho), snapshots


def evaluate_sequence(
    target: StateVector,
    seq: GateSequence,
    params: SystemParams,
    coherence: CoherenceParams,
    pulse_level: bool = True,
    snap_pulses: Sequence[PulseWaveform] | None = None,
    constraints: PulseConstraints | None = None,
    settings: ScheduleSettings | None = None,
    seed: int = 0,
    grape_config: GrapeConfig | None = None,
) -> SequenceEvaluation:
    """Run ``seq`` from vacuum⊗|g⟩ and compare the cavity with ``target``.

    Pulse-level runs execute the full drive schedule; when ``snap_pulses``
    is omitted the SNAPs are compiled here. Gate-level runs apply ideal
    gates separated by dissipation-only intervals of the same durations.
    """
    constraints = constraints or PulseConstraints()
    settings = settings or ScheduleSettings()
    d = params.cavity_dim
    if target.dim != d:
        raise InvalidArgumentError(f"Target has dim {target.dim}, system cavity_dim is {d}")
    ideal = sequence_states(seq, StateVector(np.eye(d, 1, dtype=np.complex128).reshape(-1)), check_truncation=False)

    if not pulse_level:
        final, snapshots = _gate_level(seq, params, coherence, constraints.duration, settings, constraints.sample_rate)
    else:
        if snap_pulses is None:
            snap_pulses = [
                compiled.pulse
                for compiled in compile_snap_pulses(seq.snaps, params, constraints, seed=seed, grape_config=grape_config)
            ]
        schedule = build_schedule(seq, snap_pulses, constraints.sample_rate, settings)
        if coherence.is_lossless:
            vacuum = np.zeros(2 * d, dtype=np.complex128)
            vacuum[0] = 1.0
            joint_final, joint_snapshots = propagate_schedule(StateVector(vacuum), params, schedule)
            final = _cavity(joint_final)
            snapshots = [_cavity(state) for state in joint_snapshots]
        else:
            rho0 = joint_ground(StateVector(np.eye(d, 1, dtype=np.complex128).reshape(-1)))
            evolution = lindblad_evolve(rho0, params, coherence, schedule)
            final = _cavity(evolution.final_state)
            snapshots = [_cavity(state) for state in evolution.snapshots]

    snapshot_fidelities = tuple(fidelity(state, rho) for state, rho in zip(ideal, snapshots, strict=True))
    result = SequenceEvaluation(
        final,
        fidelity(target, final),
        tuple(kind for kind, _ in seq.gates()),
        tuple(snapshots),
        snapshot_fidelities,
    )
    logger.info(
        "%s evaluation of %d gates: fidelity %.4f",
        "Pulse-level" if pulse_level else "Gate-level",
        seq.n_gates,
        result.fidelity,
    )
    return result


def sequence_theory_fidelity(
    target: StateVector,
    seq: GateSequence,
    params: SystemParams,
    coherence: CoherenceParams,
    pulse_level: bool = True,
    **kwargs: object,
) -> float:
    """Fidelity of the executed sequence to ``target``; see :func:`evaluate_sequence`."""
    return evaluate_sequence(target, seq, params, coherence, pulse_level, **kwargs).fidelity  # type: ignore[arg-type]


@dataclass(frozen=True)
class SweepCurve:
    """Observable against relative parameter offset, with its 1%-of-peak span.

    Span edges are linearly interpolated crossings of 99% of the peak; an
    edge that is not crossed inside the swept range is ``None``.
    """

    parameter: SweepParameter
    observable: SweepObservable
    mode: SnapMode
    offsets: RealArray
    values: RealArray
    peak_offset: float
    span_low: float | None
    span_high: float | None

    @classmethod
    def from_values(
        cls,
        parameter: SweepParameter,
        observable: SweepObservable,
        mode: SnapMode,
        offsets: RealArray,
        values: RealArray,
    ) -> SweepCurve:
        order = np.argsort(offsets)
        offsets = np.asarray(offsets, dtype=np.float64)[order]
        values = np.asarray(values, dtype=np.float64)[order]
        peak = int(np.argmax(values))
        threshold = values[peak] - SPAN_FRACTION * abs(values[peak])

        def crossing(step: int) -> float | None:
            index = peak
            while 0 <= index + step < values.size:
                nxt = index + step
                if values[nxt] < threshold:
                    fraction = (values[index] - threshold) / (values[index] - values[nxt])
                    return float(offsets[index] + fraction * (offsets[nxt] - offsets[index]))
                index = nxt
            return None

        return cls(parameter, observable, mode, offsets, values, float(offsets[peak]), crossing(-1), crossing(1))

    @property
    def span(self) -> float | None:
        if self.span_low is None or self.span_high is None:
            return None
        return self.span_high - self.span_low

    def parabola_residual(self, window: float = 0.02) -> float:
        """Largest deviation from a quadratic fit over |offset| ≤ window, relative to the curve range."""
        inside = np.abs(self.offsets) <= window + 1e-12
        if np.count_nonzero(inside) < 3:  # noqa: PLR2004
            raise InvalidArgumentError(f"Need at least three offsets within ±{window}")
        x, y = self.offsets[inside], self.values[inside]
        fit = np.polyval(np.polyfit(x, y, 2), x)
        spread = float(np.ptp(self.values))
        return 0.0 if spread == 0.0 else float(np.max(np.abs(fit - y))) / spread


def sensitivity_sweep(
    parameter: SweepParameter,
    offsets: Sequence[float] | RealArray,
    observable: SweepObservable,
    mode: SnapMode,
    target: StateVector,
    seq: GateSequence,
    params: SystemParams,
    coherence: CoherenceParams,
    constraints: PulseConstraints | None = None,
    grape_config: GrapeConfig | None = None,
    standard_duration: float = 4000e-9,
    seed: int = 0,
    threads: int = 1,
) -> SweepCurve:
    """Miscalibrate one parameter and record W(0) or the fidelity per offset.

    ``chi`` offsets the dispersive shift handed to the pulse compiler and
    runs the new pulses on the nominal system. The other parameters perturb
    the execution of fixed pulses: ``f_snap`` detunes the SNAP drives by
    offset·χ, ``a_disp`` and ``a_snap`` scale the pulse amplitudes.
    """
    constraints = constraints or PulseConstraints()
    grid = np.asarray(offsets, dtype=np.float64).reshape(-1)
    if grid.size == 0:
        raise InvalidArgumentError("Sweep needs at least one offset")
    if np.any(np.abs(grid) > MAX_SWEEP_OFFSET):
        raise InvalidArgumentError(f"Sweep offsets must lie within ±{MAX_SWEEP_OFFSET}")

    def compile_for(design: SystemParams) -> list[PulseWaveform]:
        compiled = compile_snap_pulses(
            seq.snaps,
            design,
            constraints,
            mode=mode,
            seed=seed,
            grape_config=grape_config,
            standard_duration=standard_duration,
            allow_failure=True,
        )
        return [c.pulse for c in compiled]

    nominal = None if parameter == "chi" else compile_for(params)

    def point(offset: float) -> float:
        pulses = compile_for(params.scaled(chi=1.0 + offset)) if nominal is None else nominal
        settings = ScheduleSettings(
            displacement_scale=1.0 + offset if parameter == "a_disp" else 1.0,
            snap_scale=1.0 + offset if parameter == "a_snap" else 1.0,
            snap_carrier=offset * params.chi if parameter == "f_snap" else 0.0,
        )
        evaluation = evaluate_sequence(
            target, seq, params, coherence, snap_pulses=pulses, constraints=constraints, settings=settings
        )
        value = evaluation.wigner_origin if observable == "W0" else evaluation.fidelity
        logger.info("%s sweep (%s), offset %+.3f: %s = %.4f", parameter, mode, offset, observable, value)
        return value

    with ThreadPoolExecutor(max_workers=threads) as pool:
        values = np.array(list(pool.map(point, grid.tolist())))
    return SweepCurve.from_values(parameter, observable, mode, grid, values)
