"""Pulse-level SNAP synthesis.

GRAPE compilation of SNAP gates into band-limited qubit drives, the
frequency-comb ("standard") SNAP baseline and sin² cavity displacement pulses.
Everything is simulated in the frame rotating at the bare cavity and qubit
frequencies, on cavity⊗qubit with qubit levels g (0) and e (1).
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg, optimize, signal

from snap_prep.utils.device_config import PulseConstraints, SystemParams
from snap_prep.utils.errors import InvalidArgumentError, NumericalFailureError, SynthesisFailureError
from snap_prep.utils.fock_core import (
    ComplexArray,
    Operator,
    RealArray,
    StateVector,
    annihilation,
    displacement_operator,
    fidelity,
    partial_trace_qubit,
    snap_unitary,
)
from snap_prep.utils.models import PulseMetadata

logger = logging.getLogger(__name__)

UNITARITY_TOLERANCE = 1e-9
# Hamming-window transition width in units of sample_rate / taps
_HAMMING_TRANSITION = 3.3

_SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
_SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=np.complex128)


@dataclass(frozen=True)
class PulseWaveform:
    """Piecewise-constant complex drive, one sample per ``1 / sample_rate``.

    ``samples`` are in rad/s. ``carrier`` offsets the drive frequency from the
    frame of the driven mode; the drive seen in the frame is
    ``samples * exp(-1j * carrier * t)`` at the sample midpoints.
    """

    samples: ComplexArray
    sample_rate: float
    carrier: float = 0.0
    mode: Literal["qubit", "cavity"] = "qubit"

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=np.complex128).reshape(-1)
        samples.setflags(write=False)
        if not np.all(np.isfinite(samples)):
            raise InvalidArgumentError("Pulse samples must be finite")
        if self.sample_rate <= 0.0:
            raise InvalidArgumentError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @classmethod
    def zeros(cls, n_samples: int, sample_rate: float, mode: Literal["qubit", "cavity"] = "qubit") -> PulseWaveform:
        return cls(np.zeros(n_samples, dtype=np.complex128), sample_rate, mode=mode)

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def times(self) -> RealArray:
        """Sample midpoints."""
        return (np.arange(self.n_samples) + 0.5) * self.dt

    @property
    def effective_samples(self) -> ComplexArray:
        if self.carrier == 0.0:
            return np.asarray(self.samples)
        return self.samples * np.exp(-1j * self.carrier * self.times)

    @property
    def max_amplitude(self) -> float:
        return float(np.max(np.abs(self.samples), initial=0.0))

    def scaled(self, factor: float) -> PulseWaveform:
        return replace(self, samples=self.samples * factor)

    def with_carrier(self, carrier: float) -> PulseWaveform:
        return replace(self, carrier=carrier)

    def spectral_fraction_below(self, cutoff_hz: float, oversampling: int = 8) -> float:
        """Fraction of spectral power at |f| ≤ cutoff_hz."""
        n_fft = max(self.n_samples * oversampling, 1)
        spectrum = np.abs(np.fft.fft(self.effective_samples, n=n_fft)) ** 2
        total = float(np.sum(spectrum))
        if total == 0.0:
            return 1.0
        freqs = np.fft.fftfreq(n_fft, d=self.dt)
        return float(np.sum(spectrum[np.abs(freqs) <= cutoff_hz])) / total

    def check_constraints(self, constraints: PulseConstraints) -> None:
        if not math.isclose(self.sample_rate, constraints.sample_rate, rel_tol=1e-12):
            raise InvalidArgumentError(f"Pulse sample rate {self.sample_rate} differs from {constraints.sample_rate}")
        if self.max_amplitude > constraints.rabi_max * (1.0 + 1e-9):
            raise InvalidArgumentError(
                f"Pulse amplitude {self.max_amplitude / (2 * math.pi):.4g} Hz exceeds {constraints.rabi_max_hz:.4g} Hz"
            )

    def to_csv(self, path: Path, metadata: PulseMetadata | None = None) -> None:
        """Write ``t_ns, I, Q`` rows and a JSON sidecar next to ``path``."""
        table = np.column_stack([self.times * 1e9, self.samples.real, self.samples.imag])
        np.savetxt(path, table, delimiter=",", header="t_ns,I,Q", comments="", fmt="%.10g")
        sidecar = metadata or PulseMetadata(
            kind="snap" if self.mode == "qubit" else "displacement",
            sample_rate=self.sample_rate,
            carrier=self.carrier,
            duration=self.duration,
        )
        path.with_suffix(".json").write_text(sidecar.model_dump_json(indent=2))
        logger.debug("Wrote waveform %s", path)

    @classmethod
    def from_csv(cls, path: Path, sample_rate: float, mode: Literal["qubit", "cavity"] = "qubit") -> PulseWaveform:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(table[:, 1] + 1j * table[:, 2], sample_rate, mode=mode)


class GrapeConfig(BaseModel):
    """Settings of the SNAP pulse optimizer.

    Attributes:
        guard_levels: Levels above the highest addressed one compiled with zero phase
        leakage_weight: Weight of the qubit-excitation penalty on the compiled block
        max_iters: L-BFGS-B iterations per restart
        restarts: Independent initializations; restart 0 starts from the frequency comb
        init_noise: Spread of the random perturbation added to the comb start
        target_infidelity: The zero pulse is accepted when it already reaches this
        failure_infidelity: Best infidelity above this raises a synthesis failure
        threads: Worker threads for the restarts
    """

    model_config = ConfigDict(extra="forbid")

    guard_levels: int = Field(default=4, ge=0)
    leakage_weight: float = Field(default=0.1, ge=0.0)
    max_iters: int = Field(default=300, ge=1)
    restarts: int = Field(default=3, ge=1)
    init_noise: float = Field(default=0.3, ge=0.0)
    target_infidelity: float = Field(default=1e-6, gt=0.0)
    failure_infidelity: float = Field(default=0.05, gt=0.0, le=1.0)
    threads: int = Field(default=1, ge=1)


@dataclass(frozen=True)
class GrapeResult:
    pulse: PulseWaveform
    infidelity: float
    leakage: float
    iterations: int
    converged: bool


def level_energies(params: SystemParams, n_levels: int) -> tuple[RealArray, RealArray]:
    """Diagonal energies (rad/s) of |n, g⟩ and |n, e⟩ for n < n_levels."""
    n = np.arange(n_levels, dtype=np.float64)
    pairs = n * (n - 1.0)
    e_g = params.detuning_c * n - 0.5 * params.kerr * pairs
    e_e = e_g - params.chi * n - 0.5 * params.chi_prime * pairs + params.detuning_q
    return e_g, e_e


def hamiltonian(params: SystemParams, gamma: complex, epsilon: complex = 0.0) -> Operator:
    """Dispersive Hamiltonian on cavity⊗qubit with qubit drive γ and cavity drive ε."""
    d = params.cavity_dim
    e_g, e_e = level_energies(params, d)
    diagonal = np.empty(2 * d)
    diagonal[0::2] = e_g
    diagonal[1::2] = e_e
    h = np.diag(diagonal).astype(np.complex128)
    lower_qubit = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=np.complex128)
    b = np.kron(np.eye(d), lower_qubit)
    h += gamma * b.conj().T + np.conj(gamma) * b
    if epsilon != 0:
        a = np.kron(annihilation(d), np.eye(2))
        h += epsilon * a.conj().T + np.conj(epsilon) * a
    return Operator(h, label="H")


def _block_generators(params: SystemParams, n_levels: int, samples: ComplexArray, dt: float) -> ComplexArray:
    """−i H_n(γ_k) dt for every sample k and level n, shape (N, n_levels, 2, 2)."""
    e_g, e_e = level_energies(params, n_levels)
    drift = np.zeros((n_levels, 2, 2), dtype=np.complex128)
    drift[:, 0, 0] = e_g
    drift[:, 1, 1] = e_e
    drive = samples.real[:, None, None] * _SIGMA_X + samples.imag[:, None, None] * _SIGMA_Y
    return -1j * dt * (drift[None, :, :, :] + drive[:, None, :, :])


def _group(samples: ComplexArray, grouping: int) -> ComplexArray:
    if grouping == 1:
        return samples
    padded = np.concatenate([samples, np.full((-samples.size) % grouping, np.nan + 0j)])
    return np.nanmean(padded.reshape(-1, grouping).real, axis=1) + 1j * np.nanmean(
        padded.reshape(-1, grouping).imag, axis=1
    )


def propagate_piecewise(
    params: SystemParams,
    pulse: PulseWaveform,
    grouping: int = 1,
    constraints: PulseConstraints | None = None,
) -> Operator:
    """Total unitary Π_k exp(−i H(γ_k) Δt) of a qubit or cavity drive.

    ``grouping`` averages that many consecutive samples into one step. When
    ``constraints`` are given the pulse is checked against them first.
    """
    if grouping < 1:
        raise InvalidArgumentError(f"grouping must be >= 1, got {grouping}")
    if constraints is not None:
        pulse.check_constraints(constraints)
    d = params.cavity_dim
    samples = _group(pulse.effective_samples, grouping)
    # the trailing group may be shorter
    steps = np.full(samples.size, grouping * pulse.dt)
    if pulse.n_samples % grouping:
        steps[-1] = (pulse.n_samples % grouping) * pulse.dt

    if pulse.mode == "qubit":
        generators = _block_generators(params, d, samples, 1.0) * steps[:, None, None, None]
        blocks = np.broadcast_to(np.eye(2, dtype=np.complex128), (d, 2, 2)).copy()
        for step in linalg.expm(generators):
            blocks = step @ blocks
        total = np.zeros((2 * d, 2 * d), dtype=np.complex128)
        for n in range(d):
            total[2 * n : 2 * n + 2, 2 * n : 2 * n + 2] = blocks[n]
    else:
        h0 = hamiltonian(params, 0.0).elements
        a = np.kron(annihilation(d), np.eye(2))
        generators = -1j * (
            h0[None] + samples[:, None, None] * a.conj().T[None] + np.conj(samples)[:, None, None] * a[None]
        )
        total = np.eye(2 * d, dtype=np.complex128)
        for step in linalg.expm(generators * steps[:, None, None]):
            total = step @ total

    error = float(np.max(np.abs(total.conj().T @ total - np.eye(2 * d))))
    if error > UNITARITY_TOLERANCE:
        raise NumericalFailureError(f"Propagator deviates from unitarity by {error:.3g}")
    return Operator(total, label="U")


def snap_gate_infidelity(u: Operator, thetas: RealArray | list[float], cavity_dim: int) -> float:
    """1 − |Tr(P_g U_target† U P_g) / (m + 1)|² on the addressed block 0..m."""
    phases = np.asarray(thetas, dtype=np.float64).reshape(-1)
    if u.dim != 2 * cavity_dim:
        raise InvalidArgumentError(f"Operator dim {u.dim} is not cavity⊗qubit for cavity_dim {cavity_dim}")
    if phases.size > cavity_dim:
        raise InvalidArgumentError(f"{phases.size} phases do not fit into cavity_dim {cavity_dim}")
    if phases.size == 0:
        return 0.0
    ground_diagonal = np.diag(u.elements)[0 : 2 * phases.size : 2]
    overlap = np.sum(np.exp(-1j * phases) * ground_diagonal) / phases.size
    return float(1.0 - abs(overlap) ** 2)


def lowpass_filter(constraints: PulseConstraints) -> RealArray:
    """Windowed-sinc FIR whose stopband starts at the configured cutoff."""
    transition = _HAMMING_TRANSITION * constraints.sample_rate / constraints.filter_taps
    design_cutoff = max(
        constraints.lowpass_cutoff_hz - 0.5 * transition,
        0.25 * constraints.lowpass_cutoff_hz,
    )
    return signal.firwin(constraints.filter_taps, design_cutoff, fs=constraints.sample_rate)


class _GrapeProblem:
    """Objective and adjoint gradient over pre-filter variables u (2 × N_v)."""

    def __init__(
        self,
        target_phases: RealArray,
        params: SystemParams,
        constraints: PulseConstraints,
        leakage_weight: float,
    ) -> None:
        self.params = params
        self.constraints = constraints
        self.leakage_weight = leakage_weight
        self.phases = target_phases
        self.n_levels = target_phases.size
        self.filter = lowpass_filter(constraints)
        self.n_samples = constraints.n_samples
        self.n_free = self.n_samples - self.filter.size + 1
        if self.n_free < 1:
            raise InvalidArgumentError(
                f"Duration {constraints.duration:.3g} s is shorter than the {constraints.filter_taps}-tap filter"
            )
        gain = float(np.sum(np.abs(self.filter)))
        self.amplitude = constraints.rabi_max / (gain * math.sqrt(2.0))
        self.dt = constraints.dt
        self.weights = np.exp(-1j * target_phases) / self.n_levels
        e_g, e_e = level_energies(params, self.n_levels)
        self.drift = np.zeros((self.n_levels, 2, 2), dtype=np.complex128)
        self.drift[:, 0, 0] = e_g
        self.drift[:, 1, 1] = e_e
        self.directions = -1j * self.dt * np.stack([_SIGMA_X, _SIGMA_Y])

    def samples(self, u: RealArray) -> ComplexArray:
        v = self.amplitude * np.tanh(u.reshape(2, self.n_free))
        return np.convolve(v[0], self.filter) + 1j * np.convolve(v[1], self.filter)

    def pulse(self, u: RealArray) -> PulseWaveform:
        return PulseWaveform(self.samples(u), self.constraints.sample_rate)

    def initial_from(self, samples: ComplexArray) -> RealArray:
        """Pre-filter variables whose filtered drive approximates ``samples``.

        The filter delays by half its length, so the variables take the
        samples starting at that offset.
        """
        if samples.size != self.n_samples:
            raise InvalidArgumentError(f"Expected {self.n_samples} samples, got {samples.size}")
        start = (self.filter.size - 1) // 2
        window = samples[start : start + self.n_free]
        v = np.stack([window.real, window.imag])
        return np.arctanh(np.clip(v / self.amplitude, -0.95, 0.95)).reshape(-1)

    def addressed(self, u: RealArray, n_addressed: int) -> tuple[float, float]:
        """Infidelity on levels below ``n_addressed`` and mean qubit excitation of the block."""
        steps, _ = self._propagate(self.samples(u), with_derivatives=False)
        final = self.columns(steps)[-1]
        block = max(n_addressed, 1)
        overlap = np.sum(np.exp(-1j * self.phases[:block]) * final[:block, 0]) / block
        return float(1.0 - abs(overlap) ** 2), float(np.mean(np.abs(final[:, 1]) ** 2))

    def _propagate(self, gamma: ComplexArray, with_derivatives: bool) -> tuple[ComplexArray, ComplexArray | None]:
        generators = -1j * self.dt * (
            self.drift[None] + (gamma.real[:, None, None] * _SIGMA_X + gamma.imag[:, None, None] * _SIGMA_Y)[:, None]
        )
        if not with_derivatives:
            return linalg.expm(generators), None
        n, levels = generators.shape[:2]
        blocks = np.zeros((2, n, levels, 4, 4), dtype=np.complex128)
        blocks[:, :, :, :2, :2] = generators
        blocks[:, :, :, 2:, 2:] = generators
        blocks[:, :, :, :2, 2:] = self.directions[:, None, None]
        exponentials = linalg.expm(blocks)
        return exponentials[0, :, :, :2, :2], exponentials[:, :, :, :2, 2:]

    def columns(self, steps: ComplexArray) -> ComplexArray:
        """U_n |g⟩ after every step, shape (N + 1, levels, 2)."""
        forward = np.zeros((steps.shape[0] + 1, self.n_levels, 2), dtype=np.complex128)
        forward[0, :, 0] = 1.0
        for k, step in enumerate(steps):
            forward[k + 1] = np.einsum("nij,nj->ni", step, forward[k])
        return forward

    def value_and_grad(self, u: RealArray) -> tuple[float, RealArray]:
        gamma = self.samples(u)
        steps, derivatives = self._propagate(gamma, with_derivatives=True)
        assert derivatives is not None
        forward = self.columns(steps)
        final = forward[-1]
        overlap = complex(np.sum(self.weights * final[:, 0]))
        leakage = float(np.mean(np.abs(final[:, 1]) ** 2))
        cost = 1.0 - abs(overlap) ** 2 + self.leakage_weight * leakage

        # rows ⟨g| V_{N−1} … V_{k+1} and ⟨e| V_{N−1} … V_{k+1}
        backward = np.zeros((steps.shape[0] + 1, 2, self.n_levels, 2), dtype=np.complex128)
        backward[-1, 0, :, 0] = 1.0
        backward[-1, 1, :, 1] = 1.0
        for k in range(steps.shape[0] - 1, -1, -1):
            backward[k] = np.einsum("rni,nij->rnj", backward[k + 1], steps[k])
        # d⟨r|U_n|g⟩ / d(I_k or Q_k), shape (2 directions, N, 2 rows, levels)
        d_elements = np.einsum("krni,dknij,knj->dkrn", backward[1:], derivatives, forward[:-1])
        d_fid = 2.0 * np.real(np.conj(overlap) * np.einsum("n,dkn->dk", self.weights, d_elements[:, :, 0]))
        d_leak = 2.0 * np.mean(np.real(np.conj(final[:, 1]) * d_elements[:, :, 1]), axis=-1)
        d_gamma = -d_fid + self.leakage_weight * d_leak

        tanh_u = np.tanh(u.reshape(2, self.n_free))
        d_v = np.stack([np.correlate(d_gamma[0], self.filter, "valid"), np.correlate(d_gamma[1], self.filter, "valid")])
        d_u = d_v * self.amplitude * (1.0 - tanh_u**2)
        return cost, d_u.reshape(-1)


def _target_phases(
    thetas: RealArray, params: SystemParams, duration: float, n_levels: int, free_evolution_frame: bool
) -> RealArray:
    phases = np.zeros(n_levels)
    phases[: thetas.size] = thetas
    if free_evolution_frame:
        e_g, _ = level_energies(params, n_levels)
        phases = phases - e_g * duration
    return phases


def grape_optimize(
    thetas: RealArray | list[float],
    params: SystemParams,
    constraints: PulseConstraints,
    seed: int = 0,
    config: GrapeConfig | None = None,
    free_evolution_frame: bool = False,
) -> GrapeResult:
    """Band-limited qubit drive implementing S(θ) on the qubit-ground cavity block.

    With ``free_evolution_frame`` the target also carries the phases the
    undriven cavity accumulates over the gate, so the result is compared
    against ideal SNAP followed by free evolution.
    """
    config = config or GrapeConfig()
    phases_in = np.asarray(thetas, dtype=np.float64).reshape(-1)
    m = phases_in.size - 1
    if params.cavity_dim < m + 2:
        raise InvalidArgumentError(f"cavity_dim {params.cavity_dim} cannot host a SNAP up to Fock {m}")
    n_levels = min(m + 1 + config.guard_levels, params.cavity_dim)
    target = _target_phases(phases_in, params, constraints.duration, n_levels, free_evolution_frame)
    problem = _GrapeProblem(target, params, constraints, config.leakage_weight)

    zero = np.zeros(2 * problem.n_free)
    zero_infidelity, zero_leakage = problem.addressed(zero, m + 1)
    if zero_infidelity <= config.target_infidelity:
        logger.info("Zero pulse already implements the SNAP (infidelity %.3g)", zero_infidelity)
        return GrapeResult(problem.pulse(zero), zero_infidelity, zero_leakage, 0, True)

    comb = standard_snap_pulse(
        phases_in,
        params,
        constraints.duration,
        "sin2",
        sample_rate=constraints.sample_rate,
        compensate_free_evolution=not free_evolution_frame,
    )
    start = problem.initial_from(comb.samples)
    seeds = np.random.SeedSequence(seed).spawn(config.restarts)

    def run(index: int) -> tuple[int, optimize.OptimizeResult]:
        rng = np.random.default_rng(seeds[index])
        u0 = start if index == 0 else start + config.init_noise * rng.standard_normal(start.size)
        result = optimize.minimize(
            problem.value_and_grad,
            u0,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": config.max_iters, "ftol": 1e-15, "gtol": 1e-12},
        )
        logger.debug("GRAPE restart %d: objective %.3g after %d iterations", index, result.fun, result.nit)
        return index, result

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        runs = list(pool.map(run, range(config.restarts)))
    best_index, best = min(runs, key=lambda item: (float(item[1].fun), item[0]))
    infidelity, leakage = problem.addressed(best.x, m + 1)
    pulse = problem.pulse(best.x)
    result = GrapeResult(pulse, infidelity, leakage, int(best.nit), infidelity <= config.failure_infidelity)
    logger.info(
        "Compiled SNAP up to Fock %d in %.0f ns: infidelity %.3g (restart %d)",
        m,
        constraints.duration * 1e9,
        infidelity,
        best_index,
    )
    if infidelity > config.failure_infidelity:
        raise SynthesisFailureError(
            f"SNAP pulse infidelity {infidelity:.3g} exceeds {config.failure_infidelity}", result
        )
    return result


def _envelope(kind: Literal["sin2", "square"], t: RealArray, half: float) -> RealArray:
    """Single π-pulse envelope on [0, half) with ∫Ω dt = π/2."""
    if kind == "sin2":
        return (math.pi / half) * np.sin(math.pi * t / half) ** 2
    if kind == "square":
        return np.full_like(t, math.pi / (2.0 * half))
    raise InvalidArgumentError(f"Unknown envelope {kind!r}")


def standard_snap_pulse(
    thetas: RealArray | list[float],
    params: SystemParams,
    duration: float,
    envelope: Literal["sin2", "square"] = "sin2",
    sample_rate: float = 1e9,
    compensate_free_evolution: bool = False,
) -> PulseWaveform:
    """Frequency-comb SNAP: two selective π pulses per Fock line.

    Line j sits on its transition −jχ − (χ′/2) j(j−1) + Δ_q; the second π
    pulse is rotated by π − θ_j so level j picks up e^{iθ_j}.
    """
    phases = np.asarray(thetas, dtype=np.float64).reshape(-1)
    n_samples = round(duration * sample_rate)
    if n_samples < 2:  # noqa: PLR2004
        raise InvalidArgumentError(f"Duration {duration} s is too short for a two-pulse SNAP")
    if compensate_free_evolution:
        e_g, _ = level_energies(params, phases.size)
        phases = phases + e_g * duration
    half = duration / 2.0
    t = (np.arange(n_samples) + 0.5) / sample_rate
    second = t >= half
    amplitude = _envelope(envelope, np.where(second, t - half, t), half)
    e_g, e_e = level_energies(params, phases.size)
    transitions = e_e - e_g
    drive_phase = np.where(second[None, :], math.pi - phases[:, None], 0.0)
    lines = amplitude[None, :] * np.exp(-1j * transitions[:, None] * t[None, :] + 1j * drive_phase)
    return PulseWaveform(np.sum(lines, axis=0), sample_rate)


def displacement_pulse(
    alpha: complex,
    calibration: float | None = None,
    duration: float = 50e-9,
    sample_rate: float = 1e9,
) -> PulseWaveform:
    """Resonant sin² cavity drive ε(t) = i α sin²(πt/T) / calibration.

    The default calibration T/2 is the envelope area, which makes the pulse
    enact D(α) on a decoupled cavity.
    """
    calibration = duration / 2.0 if calibration is None else calibration
    if calibration <= 0.0:
        raise InvalidArgumentError(f"calibration must be positive, got {calibration}")
    n_samples = round(duration * sample_rate)
    t = (np.arange(n_samples) + 0.5) / sample_rate
    samples = 1j * complex(alpha) / calibration * np.sin(math.pi * t / duration) ** 2
    return PulseWaveform(samples, sample_rate, mode="cavity")


@dataclass(frozen=True)
class DurationPoint:
    method: Literal["standard", "optimized"]
    envelope: Literal["sin2", "square", "grape"]
    duration: float
    infidelity: float


def _prepared_state_infidelity(
    u: Operator, thetas: RealArray, alpha: complex, params: SystemParams, duration: float
) -> float:
    d = params.cavity_dim
    initial = displacement_operator(alpha, d).elements[:, 0]
    joint = np.kron(initial, np.array([1.0, 0.0]))
    final = u.elements @ joint
    rho = partial_trace_qubit(np.outer(final, final.conj()))
    e_g, _ = level_energies(params, d)
    ideal = np.exp(-1j * e_g * duration) * (snap_unitary(thetas, d).elements @ initial)
    return 1.0 - fidelity(StateVector.from_amplitudes(ideal), rho)


def snap_duration_study(
    thetas: RealArray | list[float],
    alpha: complex,
    durations: list[float],
    params: SystemParams,
    envelopes: tuple[Literal["sin2", "square"], ...] = ("sin2", "square"),
    optimized_durations: list[float] | None = None,
    constraints: PulseConstraints | None = None,
    grape_config: GrapeConfig | None = None,
    seed: int = 0,
) -> list[DurationPoint]:
    """Lossless infidelity of S(θ) D(α)|0⟩ for comb and optimized SNAPs of varying length.

    The reference is the ideal SNAP followed by free evolution of the
    undriven cavity, so only the error induced by the pulse is counted.
    """
    phases = np.asarray(thetas, dtype=np.float64)
    constraints = constraints or PulseConstraints()
    points = []
    for duration in durations:
        for envelope in envelopes:
            pulse = standard_snap_pulse(phases, params, duration, envelope, sample_rate=constraints.sample_rate)
            u = propagate_piecewise(params, pulse)
            infidelity = _prepared_state_infidelity(u, phases, alpha, params, duration)
            points.append(DurationPoint("standard", envelope, duration, infidelity))
            logger.info("Standard %s SNAP, %.0f ns: infidelity %.3g", envelope, duration * 1e9, infidelity)
    for duration in optimized_durations or []:
        timed = constraints.model_copy(update={"duration": duration})
        try:
            compiled = grape_optimize(phases, params, timed, seed=seed, config=grape_config, free_evolution_frame=True)
        except SynthesisFailureError as err:
            compiled = err.result
        u = propagate_piecewise(params, compiled.pulse)
        infidelity = _prepared_state_infidelity(u, phases, alpha, params, duration)
        points.append(DurationPoint("optimized", "grape", duration, infidelity))
        logger.info("Optimized SNAP, %.0f ns: infidelity %.3g", duration * 1e9, infidelity)
    return points


def _comb_result(
    thetas: RealArray, params: SystemParams, duration: float, sample_rate: float
) -> GrapeResult:
    pulse = standard_snap_pulse(
        thetas, params, duration, "sin2", sample_rate=sample_rate, compensate_free_evolution=True
    )
    u = propagate_piecewise(params, pulse).elements
    infidelity = snap_gate_infidelity(Operator(u), thetas, params.cavity_dim)
    excited = np.abs(np.diag(u, k=-1)[0 : 2 * max(thetas.size, 1) : 2]) ** 2
    return GrapeResult(pulse, infidelity, float(np.mean(excited)), 0, True)


def compile_snap_pulses(
    snaps: tuple[RealArray, ...] | list[RealArray],
    params: SystemParams,
    constraints: PulseConstraints,
    mode: Literal["optimized", "standard"] = "optimized",
    seed: int = 0,
    grape_config: GrapeConfig | None = None,
    standard_duration: float = 4000e-9,
    allow_failure: bool = False,
) -> list[GrapeResult]:
    """One waveform per SNAP of a sequence, optimized or frequency-comb.

    ``params`` is the system the pulses are designed for; sweeps pass a
    deliberately miscalibrated copy. With ``allow_failure`` an optimizer
    failure keeps its best-effort pulse instead of raising.
    """
    if mode == "standard":
        return [_comb_result(np.asarray(t), params, standard_duration, constraints.sample_rate) for t in snaps]
    children = np.random.SeedSequence(seed).spawn(max(len(snaps), 1))
    results = []
    for index, (thetas, child) in enumerate(zip(snaps, children, strict=False)):
        try:
            compiled = grape_optimize(
                thetas, params, constraints, seed=int(child.generate_state(1)[0]), config=grape_config
            )
        except SynthesisFailureError as err:
            if not allow_failure:
                raise
            logger.warning("Keeping best-effort pulse for SNAP %d: %s", index + 1, err)
            compiled = err.result
        results.append(compiled)
    return results
