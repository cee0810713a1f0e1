"""Gate-parameter synthesis for displacement/SNAP sequences.

Minimizes ``1 − |⟨target|Ψ⟩|² + λ Σ|θ|`` over the displacement amplitudes and
SNAP phases of a sequence with a fixed number of SNAPs. Gradients are exact:
SNAP phases by the adjoint method, displacements through the Fréchet
derivative of the matrix exponential taken from the upper-right block of
``expm([[G, E], [0, G]])``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg

from snap_prep.utils.errors import InvalidArgumentError, SynthesisFailureError, TruncationError
from snap_prep.utils.fock_core import (
    DEFAULT_CAVITY_DIM,
    ComplexArray,
    GateSequence,
    RealArray,
    StateVector,
    annihilation,
    apply_gate_sequence,
    fidelity,
    sequence_states,
)

logger = logging.getLogger(__name__)

# levels kept above the highest SNAP index while optimizing
WORKING_DIM_PADDING = 11
# target population below which a Fock level does not count as occupied
OCCUPATION_THRESHOLD = 1e-4

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8
_ARMIJO_C = 1e-4
_ARMIJO_MAX_HALVINGS = 40


class SynthConfig(BaseModel):
    """Hyperparameters of the gate-parameter optimizer.

    Attributes:
        n_snaps: Number of SNAP gates n; the sequence has n + 1 displacements
        m_max: Highest Fock index a SNAP may address; derived from the target when unset
        lasso_lambda: Weight λ of the L1 penalty on the SNAP phases
        max_iters: Iteration budget of the regularized phase, per restart
        target_fidelity: Early-stop threshold
        seed: Root seed; restart i draws from the i-th spawned sub-seed
        learning_rate: Initial step of the adaptive-moment optimizer
        lr_decay: Step schedule over the iteration budget
        restarts: Independent random initializations
        optimizer: ``adam`` or ``gradient`` (steepest descent with Armijo backtracking)
        polish_iters: Iteration budget of the unregularized final phase
        sparsity_threshold: Phases below this magnitude are clamped to 0 before polishing
        init_alpha_radius: Initial displacements are drawn uniformly from this disk
        failure_fidelity: Best fidelity below this raises a synthesis failure
        threads: Worker threads for the restarts
    """

    model_config = ConfigDict(extra="forbid")

    n_snaps: int = Field(default=2, ge=0)
    m_max: int | None = Field(default=None, ge=0)
    lasso_lambda: float = Field(default=1e-3, ge=0.0)
    max_iters: int = Field(default=2000, ge=1)
    target_fidelity: float = Field(default=0.999, gt=0.0, le=1.0)
    seed: int = 0
    learning_rate: float = Field(default=0.05, gt=0.0)
    lr_decay: Literal["cosine", "constant"] = "cosine"
    restarts: int = Field(default=10, ge=1)
    optimizer: Literal["adam", "gradient"] = "adam"
    polish_iters: int = Field(default=500, ge=0)
    sparsity_threshold: float = Field(default=1e-3, ge=0.0)
    init_alpha_radius: float = Field(default=2.0, gt=0.0)
    failure_fidelity: float = Field(default=0.5, ge=0.0, le=1.0)
    threads: int = Field(default=1, ge=1)


@dataclass(frozen=True)
class SynthResult:
    sequence: GateSequence
    achieved_fidelity: float
    cost_trace: RealArray
    iterations: int
    converged: bool
    restart_fidelities: tuple[float, ...] = ()


@dataclass
class _RestartOutcome:
    index: int
    params: RealArray
    fidelity: float
    trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


class SequenceModel:
    """Cost and exact gradient for sequences of one fixed shape.

    The parameter vector is ``[Re α_1, Im α_1, …, Re α_{n+1}, Im α_{n+1}, θ_1, …, θ_n]``
    with SNAP vector i of length ``snap_lengths[i]``.
    """

    def __init__(self, target: StateVector, snap_lengths: tuple[int, ...], dim: int | None = None) -> None:
        self.dim = target.dim if dim is None else dim
        if self.dim < target.dim:
            raise InvalidArgumentError(f"Working dim {self.dim} is smaller than the target dim {target.dim}")
        if any(length > self.dim for length in snap_lengths):
            raise InvalidArgumentError(f"SNAP lengths {snap_lengths} do not fit into dim {self.dim}")
        self.target = target.resized(self.dim).amplitudes
        self.snap_lengths = snap_lengths
        self.n_displacements = len(snap_lengths) + 1
        self.n_params = 2 * self.n_displacements + sum(snap_lengths)
        self._a = annihilation(self.dim)
        self._a_dag = self._a.conj().T
        self._directions = np.stack([self._a_dag - self._a, 1j * (self._a_dag + self._a)])
        self._initial = np.zeros(self.dim, dtype=np.complex128)
        self._initial[0] = 1.0

    @property
    def phase_slice(self) -> slice:
        return slice(2 * self.n_displacements, self.n_params)

    def unpack(self, params: RealArray) -> tuple[ComplexArray, list[RealArray]]:
        alphas = params[0 : 2 * self.n_displacements : 2] + 1j * params[1 : 2 * self.n_displacements : 2]
        offsets = np.cumsum((2 * self.n_displacements, *self.snap_lengths))
        thetas = [params[start:stop] for start, stop in zip(offsets[:-1], offsets[1:], strict=True)]
        return alphas, thetas

    def pack(self, seq: GateSequence) -> RealArray:
        if tuple(t.size for t in seq.snaps) != self.snap_lengths or len(seq.displacements) != self.n_displacements:
            raise InvalidArgumentError("Sequence shape does not match the model")
        params = np.empty(self.n_params)
        alphas = np.asarray(seq.displacements, dtype=np.complex128)
        params[0 : 2 * self.n_displacements : 2] = alphas.real
        params[1 : 2 * self.n_displacements : 2] = alphas.imag
        params[self.phase_slice] = np.concatenate([*seq.snaps, np.empty(0)])
        return params

    def to_sequence(self, params: RealArray) -> GateSequence:
        alphas, thetas = self.unpack(params)
        return GateSequence(tuple(complex(alpha) for alpha in alphas), tuple(np.array(t) for t in thetas))

    def _displacement(self, alpha: complex, with_derivatives: bool) -> tuple[ComplexArray, ComplexArray | None]:
        generator = alpha * self._a_dag - np.conj(alpha) * self._a
        if not with_derivatives:
            return linalg.expm(generator), None
        d = self.dim
        blocks = np.zeros((2, 2 * d, 2 * d), dtype=np.complex128)
        blocks[:, :d, :d] = generator
        blocks[:, d:, d:] = generator
        blocks[:, :d, d:] = self._directions
        exponentials = linalg.expm(blocks)
        return exponentials[0, :d, :d], exponentials[:, :d, d:]

    def evaluate(self, params: RealArray, lasso_lambda: float, with_gradient: bool = True) -> tuple[float, float, RealArray]:
        """Return ``(cost, fidelity, gradient)``; the gradient is empty when not requested."""
        alphas, thetas = self.unpack(params)
        unitaries: list[ComplexArray] = []
        derivatives: list[ComplexArray | None] = []
        phases: list[ComplexArray] = []
        states = [self._initial]
        for index, alpha in enumerate(alphas):
            unitary, derivative = self._displacement(complex(alpha), with_gradient)
            unitaries.append(unitary)
            derivatives.append(derivative)
            states.append(unitary @ states[-1])
            if index < len(thetas):
                phase = np.exp(1j * thetas[index])
                phases.append(phase)
                snapped = states[-1].copy()
                snapped[: phase.size] *= phase
                states.append(snapped)

        psi = states[-1]
        overlap = complex(np.vdot(self.target, psi))
        norm = float(np.real(np.vdot(psi, psi)))
        fid = abs(overlap) ** 2 / norm
        lasso = float(sum(np.sum(np.abs(t)) for t in thetas))
        cost = 1.0 - fid + lasso_lambda * lasso
        if not with_gradient:
            return cost, fid, np.empty(0)

        d_overlap = np.zeros(self.n_params, dtype=np.complex128)
        d_norm = np.zeros(self.n_params)
        chi = self.target.copy()
        eta = psi.copy()
        offsets = np.cumsum((2 * self.n_displacements, *self.snap_lengths))
        state_index = len(states) - 1
        for index in reversed(range(self.n_displacements)):
            if index < len(thetas):
                # SNAP i sits between displacement i and i + 1
                phase = phases[index]
                size = phase.size
                prev = states[state_index - 1]
                tangent = 1j * phase * prev[:size]
                block = slice(offsets[index], offsets[index] + size)
                d_overlap[block] = np.conj(chi[:size]) * tangent
                d_norm[block] = 2.0 * np.real(np.conj(eta[:size]) * tangent)
                chi = chi.copy()
                eta = eta.copy()
                chi[:size] *= np.conj(phase)
                eta[:size] *= np.conj(phase)
                state_index -= 1
            prev = states[state_index - 1]
            derivative = derivatives[index]
            assert derivative is not None
            tangents = derivative @ prev
            d_overlap[2 * index : 2 * index + 2] = tangents @ np.conj(chi)
            d_norm[2 * index : 2 * index + 2] = 2.0 * np.real(tangents @ np.conj(eta))
            chi = unitaries[index].conj().T @ chi
            eta = unitaries[index].conj().T @ eta
            state_index -= 1

        d_fid = (2.0 * np.real(np.conj(overlap) * d_overlap) * norm - abs(overlap) ** 2 * d_norm) / norm**2
        gradient = -d_fid
        gradient[self.phase_slice] += lasso_lambda * np.sign(params[self.phase_slice])
        return cost, fid, gradient


def _vacuum(dim: int) -> StateVector:
    amplitudes = np.zeros(dim, dtype=np.complex128)
    amplitudes[0] = 1.0
    return StateVector(amplitudes)


def synth_cost(seq: GateSequence, target: StateVector, lasso_lambda: float) -> float:
    """[1 − F(target, Ψ(seq))] + λ Σ|θ| with Ψ(seq) the sequence applied to vacuum."""
    psi = apply_gate_sequence(seq, _vacuum(target.dim), check_truncation=False)
    return 1.0 - fidelity(target, psi) + lasso_lambda * seq.lasso_norm


def synth_gradient(seq: GateSequence, target: StateVector, lasso_lambda: float) -> RealArray:
    """Gradient of :func:`synth_cost` in the layout of :class:`SequenceModel`."""
    if seq.n_gates == 0:
        return np.empty(0)
    model = SequenceModel(target, tuple(t.size for t in seq.snaps))
    return model.evaluate(model.pack(seq), lasso_lambda)[2]


def snapshot_states(seq: GateSequence, dim: int = DEFAULT_CAVITY_DIM) -> list[StateVector]:
    """States Ψ_1, Ψ_2, … after each successive gate applied to vacuum."""
    return sequence_states(seq, _vacuum(dim), check_truncation=False)


def default_m_max(target: StateVector, n_snaps: int) -> int:
    occupied = np.flatnonzero(target.populations() >= OCCUPATION_THRESHOLD)
    highest = int(occupied[-1]) if occupied.size else 0
    return min(highest + 2 + n_snaps, target.dim - 1)


def _step_size(config: SynthConfig, iteration: int, budget: int, scale: float) -> float:
    if config.lr_decay == "constant":
        return config.learning_rate * scale
    return config.learning_rate * scale * 0.5 * (1.0 + math.cos(math.pi * iteration / budget))


def _descend(
    model: SequenceModel,
    params: RealArray,
    config: SynthConfig,
    lasso_lambda: float,
    budget: int,
    frozen: np.ndarray,
    outcome: _RestartOutcome,
    lr_scale: float = 1.0,
) -> RealArray:
    """Run one optimization phase, recording the cost trace into ``outcome``."""
    x = params.copy()
    best_x, best_cost = x.copy(), math.inf
    moment1 = np.zeros_like(x)
    moment2 = np.zeros_like(x)
    armijo_step = config.learning_rate * lr_scale
    cost, fid, grad = model.evaluate(x, lasso_lambda)
    for iteration in range(budget):
        outcome.trace.append(cost)
        outcome.iterations += 1
        if cost < best_cost:
            best_x, best_cost = x.copy(), cost
        if fid >= config.target_fidelity:
            outcome.converged = True
            break
        grad[frozen] = 0.0
        if config.optimizer == "adam":
            moment1 = _ADAM_BETA1 * moment1 + (1.0 - _ADAM_BETA1) * grad
            moment2 = _ADAM_BETA2 * moment2 + (1.0 - _ADAM_BETA2) * grad**2
            m_hat = moment1 / (1.0 - _ADAM_BETA1 ** (iteration + 1))
            v_hat = moment2 / (1.0 - _ADAM_BETA2 ** (iteration + 1))
            x = x - _step_size(config, iteration, budget, lr_scale) * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
            cost, fid, grad = model.evaluate(x, lasso_lambda)
            continue

        slope = float(np.dot(grad, grad))
        if slope == 0.0:
            outcome.converged = fid >= config.target_fidelity
            break
        for _ in range(_ARMIJO_MAX_HALVINGS):
            trial = x - armijo_step * grad
            trial_cost, trial_fid, trial_grad = model.evaluate(trial, lasso_lambda)
            if trial_cost <= cost - _ARMIJO_C * armijo_step * slope:
                x, cost, fid, grad = trial, trial_cost, trial_fid, trial_grad
                armijo_step *= 2.0
                break
            armijo_step *= 0.5
        else:
            logger.debug("Line search stalled after %d iterations", outcome.iterations)
            break

    if cost < best_cost:
        best_x = x.copy()
    return best_x


def _run_restart(
    index: int,
    seed_sequence: np.random.SeedSequence,
    model: SequenceModel,
    config: SynthConfig,
) -> _RestartOutcome:
    rng = np.random.default_rng(seed_sequence)
    params = np.empty(model.n_params)
    radius = config.init_alpha_radius * np.sqrt(rng.uniform(0.0, 1.0, model.n_displacements))
    angle = rng.uniform(-np.pi, np.pi, model.n_displacements)
    params[0 : 2 * model.n_displacements : 2] = radius * np.cos(angle)
    params[1 : 2 * model.n_displacements : 2] = radius * np.sin(angle)
    # (−π, π]
    params[model.phase_slice] = -rng.uniform(-np.pi, np.pi, model.n_params - 2 * model.n_displacements)

    outcome = _RestartOutcome(index=index, params=params, fidelity=0.0)
    frozen = np.zeros(model.n_params, dtype=bool)
    params = _descend(model, params, config, config.lasso_lambda, config.max_iters, frozen, outcome)

    if config.polish_iters > 0:
        phases = params[model.phase_slice]
        clamped = np.abs(phases) < config.sparsity_threshold
        phases[clamped] = 0.0
        params[model.phase_slice] = phases
        frozen[model.phase_slice] = clamped
        outcome.converged = False
        params = _descend(model, params, config, 0.0, config.polish_iters, frozen, outcome, lr_scale=0.2)

    outcome.params = params
    outcome.fidelity = model.evaluate(params, 0.0, with_gradient=False)[1]
    outcome.converged = outcome.fidelity >= config.target_fidelity
    logger.debug("Restart %d finished at fidelity %.6f after %d iterations", index, outcome.fidelity, outcome.iterations)
    return outcome


def _trimmed(seq: GateSequence) -> GateSequence:
    snaps = []
    for thetas in seq.snaps:
        nonzero = np.flatnonzero(thetas)
        snaps.append(np.array(thetas[: nonzero[-1] + 1]) if nonzero.size else np.empty(0))
    return GateSequence(seq.displacements, tuple(snaps))


def _achieved_fidelity(seq: GateSequence, target: StateVector) -> float:
    try:
        psi = apply_gate_sequence(seq, _vacuum(target.dim))
    except TruncationError as err:
        logger.warning("Synthesized sequence leaks at dim %d (%.3g); reporting unchecked fidelity", target.dim, err.leaked_weight)
        psi = apply_gate_sequence(seq, _vacuum(target.dim), check_truncation=False)
    return fidelity(target, psi)


def synthesize(target: StateVector, config: SynthConfig) -> SynthResult:
    """Best sequence with ``config.n_snaps`` SNAPs across independent restarts."""
    zero = GateSequence((0j,) * (config.n_snaps + 1), tuple(np.empty(0) for _ in range(config.n_snaps)))
    zero_fidelity = float(target.populations()[0])
    if zero_fidelity >= config.target_fidelity:
        logger.info("Target already within %.4g of vacuum; returning the identity sequence", 1.0 - zero_fidelity)
        return SynthResult(zero, _achieved_fidelity(zero, target), np.array([1.0 - zero_fidelity]), 0, True)

    m_max = config.m_max if config.m_max is not None else default_m_max(target, config.n_snaps)
    working_dim = max(target.dim, m_max + WORKING_DIM_PADDING)
    model = SequenceModel(target, (m_max + 1,) * config.n_snaps, working_dim)
    logger.info(
        "Synthesizing %d SNAP(s) up to Fock %d in %d levels with %d restart(s)",
        config.n_snaps,
        m_max,
        working_dim,
        config.restarts,
    )

    seeds = np.random.SeedSequence(config.seed).spawn(config.restarts)
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        outcomes = list(pool.map(lambda i: _run_restart(i, seeds[i], model, config), range(config.restarts)))

    best = max(outcomes, key=lambda outcome: (outcome.fidelity, -outcome.index))
    sequence = _trimmed(model.to_sequence(best.params))
    result = SynthResult(
        sequence=sequence,
        achieved_fidelity=_achieved_fidelity(sequence, target),
        cost_trace=np.asarray(best.trace),
        iterations=best.iterations,
        converged=best.converged,
        restart_fidelities=tuple(outcome.fidelity for outcome in outcomes),
    )
    logger.info("Best restart %d reached fidelity %.6f", best.index, result.achieved_fidelity)
    if result.achieved_fidelity < config.failure_fidelity:
        raise SynthesisFailureError(
            f"No restart exceeded fidelity {config.failure_fidelity} (best {result.achieved_fidelity:.4f})", result
        )
    return result
