"""Wigner functions, simulated displaced-parity tomography and state reconstruction."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate, optimize

from snap_prep.utils.device_config import CoherenceParams, SystemParams
from snap_prep.utils.errors import (
    ConfigError,
    DegenerateInputError,
    IntegratorFailureError,
    InvalidArgumentError,
    ReconstructionError,
)
from snap_prep.utils.fock_core import (
    DEFAULT_CAVITY_DIM,
    ComplexArray,
    DensityMatrix,
    RealArray,
    StateVector,
    displacement_matrix_elements,
    fidelity,
)
from snap_prep.utils.models import WignerMetadata
from snap_prep.utils.pulse_synth import level_energies

logger = logging.getLogger(__name__)

WIGNER_BOUND = 2.0 / math.pi
DEFAULT_EXTENT = 3.5
DEFAULT_POINTS_PER_AXIS = 81
DEFAULT_SHOTS = 400
# squared-residual floor per point assumed for noiseless grids
NOISELESS_FLOOR_PER_POINT = 1e-4
RESIDUAL_FLOOR_FACTOR = 10.0

_READOUT_RTOL = 1e-10
_READOUT_ATOL = 1e-12


def _rotation_y(angle: float) -> ComplexArray:
    c, s = math.cos(angle / 2.0), math.sin(angle / 2.0)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def _as_matrix(state: StateVector | DensityMatrix) -> ComplexArray:
    if isinstance(state, StateVector):
        return np.outer(state.amplitudes, state.amplitudes.conj())
    return np.asarray(state.elements)


def make_grid(extent: float = DEFAULT_EXTENT, points_per_axis: int = DEFAULT_POINTS_PER_AXIS) -> ComplexArray:
    """Square grid over [−extent, extent]², real part varying fastest."""
    if extent <= 0.0 or points_per_axis < 1:
        raise InvalidArgumentError(f"Invalid grid extent={extent}, points_per_axis={points_per_axis}")
    axis = np.linspace(-extent, extent, points_per_axis)
    re, im = np.meshgrid(axis, axis)
    return (re + 1j * im).reshape(-1)


def displaced_parity_kernel(alphas: ComplexArray | list[complex], dim: int) -> ComplexArray:
    """(2/π) D(α) Π D†(α) for every α, shape (P, dim, dim).

    Uses D(α) Π D†(α) = D(2α) Π with exact matrix elements of D(2α), so
    ``Tr(ρ K)`` is exact for any ρ supported on ``dim`` levels.
    """
    points = np.asarray(alphas, dtype=np.complex128).reshape(-1)
    signs = np.where(np.arange(dim) % 2 == 0, 1.0, -1.0)
    kernel = np.empty((points.size, dim, dim), dtype=np.complex128)
    for index, alpha in enumerate(points):
        kernel[index] = displacement_matrix_elements(2.0 * alpha, dim, dim) * signs[None, :]
    return WIGNER_BOUND * kernel


def wigner(state: StateVector | DensityMatrix, alpha: complex) -> float:
    """W(α) = (2/π) Tr[D†(α) ρ D(α) Π]."""
    kernel = displaced_parity_kernel([alpha], state.dim)[0]
    return float(np.real(np.sum(kernel * _as_matrix(state).T)))


@dataclass(frozen=True)
class WignerGrid:
    """Wigner values on a set of phase-space points.

    ``scale`` is the contrast reference B the raw amplitudes were divided
    by; exact grids carry 1 and ``shots=None``.
    """

    points: ComplexArray
    values: RealArray
    scale: float = 1.0
    shots: int | None = None
    seed: int | None = None
    extent: float | None = None
    points_per_axis: int | None = None

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.complex128).reshape(-1)
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if points.size == 0:
            raise InvalidArgumentError("Wigner grid has no points")
        if points.size != values.size:
            raise InvalidArgumentError(f"{points.size} points but {values.size} values")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)

    @property
    def n_points(self) -> int:
        return int(self.points.size)

    def image(self) -> RealArray:
        """Values as a (rows = Im α, cols = Re α) array for square grids."""
        if self.points_per_axis is None or self.points_per_axis**2 != self.n_points:
            raise InvalidArgumentError("Grid is not a square grid")
        return self.values.reshape(self.points_per_axis, self.points_per_axis)

    def metadata(self) -> WignerMetadata:
        return WignerMetadata(
            scale=self.scale,
            shots=self.shots,
            seed=self.seed,
            extent=self.extent,
            points_per_axis=self.points_per_axis,
        )

    def to_csv(self, path: Path) -> None:
        """Write ``re_alpha, im_alpha, value`` rows and the JSON sidecar."""
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["re_alpha", "im_alpha", "value"])
            for alpha, value in zip(self.points, self.values, strict=True):
                writer.writerow([repr(float(alpha.real)), repr(float(alpha.imag)), repr(float(value))])
        path.with_suffix(".json").write_text(self.metadata().model_dump_json(indent=2))
        logger.debug("Wrote %d Wigner points to %s", self.n_points, path)

    @classmethod
    def from_csv(cls, path: Path) -> WignerGrid:
        try:
            with path.open(newline="") as handle:
                rows = list(csv.reader(handle))
        except FileNotFoundError:
            logger.error("Wigner grid file not found: %s", path)
            raise
        points: list[complex] = []
        values: list[float] = []
        for line, row in enumerate(rows, start=1):
            if not row or (line == 1 and row[0].strip() == "re_alpha"):
                continue
            if len(row) != 3:  # noqa: PLR2004
                raise ConfigError(f"{path}:{line}: expected 3 columns, got {len(row)}")
            try:
                re, im, value = (float(cell) for cell in row)
            except ValueError as err:
                raise ConfigError(f"{path}:{line}: {err}") from err
            points.append(complex(re, im))
            values.append(value)
        if not points:
            raise ConfigError(f"{path}: no Wigner points")

        sidecar = path.with_suffix(".json")
        metadata = WignerMetadata(scale=1.0, shots=None, seed=None)
        if sidecar.exists():
            metadata = WignerMetadata.model_validate_json(sidecar.read_text())
        return cls(
            np.array(points),
            np.array(values),
            metadata.scale,
            metadata.shots,
            metadata.seed,
            metadata.extent,
            metadata.points_per_axis,
        )


def wigner_grid(
    state: StateVector | DensityMatrix,
    extent: float = DEFAULT_EXTENT,
    points_per_axis: int = DEFAULT_POINTS_PER_AXIS,
) -> WignerGrid:
    """Exact Wigner function on a square grid."""
    points = make_grid(extent, points_per_axis)
    kernel = displaced_parity_kernel(points, state.dim)
    values = np.real(np.einsum("pmn,nm->p", kernel, _as_matrix(state)))
    return WignerGrid(points, values, extent=extent, points_per_axis=points_per_axis)


def _readout_padding(points: ComplexArray) -> int:
    radius = float(np.max(np.abs(points), initial=0.0))
    return math.ceil(radius**2 + 8.0 * radius) + 8


def _readout_observables(
    params: SystemParams, coherence: CoherenceParams, levels: int
) -> tuple[RealArray, RealArray]:
    """Photon-number-resolved Ramsey observables for the ±π/2 final pulses.

    Returns ``m_plus`` and ``m_minus`` with P_e(±) = Σ_n m±[n] ⟨n|ρ|n⟩ for the
    cavity state ρ at the start of the readout, the qubit starting in g.

    Without a drive the Heisenberg-evolved observable stays block diagonal
    in photon number, so the adjoint master equation reduces to a chain of
    2×2 blocks coupled by cavity decay.
    """
    e_g, e_e = level_energies(params, levels)
    energies = np.stack([e_g, e_e], axis=1)
    n = np.arange(levels, dtype=np.float64)
    kappa, gamma_1, gamma_phi = coherence.gamma_cavity, coherence.gamma_qubit, coherence.gamma_phi

    def rhs(_t: float, y: ComplexArray) -> ComplexArray:
        o = y.reshape(2, levels, 2, 2)
        out = 1j * (energies[None, :, :, None] - energies[None, :, None, :]) * o
        if kappa > 0.0:
            shifted = np.zeros_like(o)
            shifted[:, :-1] = n[None, 1:, None, None] * o[:, 1:]
            out += kappa * (shifted - n[None, :, None, None] * o)
        if gamma_1 > 0.0:
            # σ+ O σ− − ½{P_e, O}
            decay = np.zeros_like(o)
            decay[..., 1, 1] = o[..., 0, 0]
            decay[..., 0, 1] -= 0.5 * o[..., 0, 1]
            decay[..., 1, 0] -= 0.5 * o[..., 1, 0]
            decay[..., 1, 1] -= o[..., 1, 1]
            out += gamma_1 * decay
        if gamma_phi > 0.0:
            out[..., 0, 1] -= 0.5 * gamma_phi * o[..., 0, 1]
            out[..., 1, 0] -= 0.5 * gamma_phi * o[..., 1, 0]
        return out.reshape(-1)

    excited = np.diag([0.0, 1.0]).astype(np.complex128)
    finals = []
    for angle in (math.pi / 2.0, -math.pi / 2.0):
        r2 = _rotation_y(angle)
        finals.append(np.broadcast_to(r2.conj().T @ excited @ r2, (levels, 2, 2)))
    y0 = np.stack(finals).reshape(-1)
    wait = math.pi / params.chi
    solution = integrate.solve_ivp(rhs, (0.0, wait), y0, method="DOP853", rtol=_READOUT_RTOL, atol=_READOUT_ATOL)
    if not solution.success:
        raise IntegratorFailureError(f"Readout propagation failed: {solution.message}")
    evolved = solution.y[:, -1].reshape(2, levels, 2, 2)
    r1 = _rotation_y(math.pi / 2.0)
    start = np.einsum("ij,snjk,kl->snil", r1.conj().T, evolved, r1)
    m = np.real(start[:, :, 0, 0])
    return m[0], m[1]


def simulate_tomography(
    state: StateVector | DensityMatrix,
    points: ComplexArray | list[complex] | None = None,
    params: SystemParams | None = None,
    coherence: CoherenceParams | None = None,
    shots: int | None = None,
    seed: int = 0,
) -> WignerGrid:
    """Displaced-parity Wigner tomography of a cavity state.

    Each point displaces by −α, applies an unconditional π/2 pulse, waits
    π/χ and finishes with a ±π/2 pulse; A(α) = P_e(+) − P_e(−). B is the
    same difference at the origin without the wait, and W = (2/π) A/B.
    With ``params=None`` the readout is the ideal displaced parity.
    ``shots`` samples binomial outcomes per point; ``None`` returns
    expectation values.
    """
    grid_points = make_grid() if points is None else np.asarray(points, dtype=np.complex128).reshape(-1)
    if grid_points.size == 0:
        raise InvalidArgumentError("Tomography grid has no points")
    if shots is not None and shots < 1:
        raise InvalidArgumentError(f"shots must be positive, got {shots}")
    rho = _as_matrix(state)
    dim = rho.shape[0]

    if params is None:
        kernel = displaced_parity_kernel(grid_points, dim) / WIGNER_BOUND
        parity = np.real(np.einsum("pmn,nm->p", kernel, rho))
        p_plus, p_minus = 0.5 * (1.0 + parity), 0.5 * (1.0 - parity)
    else:
        if params.chi <= 0.0:
            raise InvalidArgumentError(f"Tomography needs chi > 0, got {params.chi_hz} Hz")
        coherence = coherence or CoherenceParams()
        levels = dim + _readout_padding(grid_points)
        m_plus, m_minus = _readout_observables(params, coherence, levels)
        p_plus = np.empty(grid_points.size)
        p_minus = np.empty(grid_points.size)
        for index, alpha in enumerate(grid_points):
            # ⟨k|D†(α)|n⟩ for k < levels, n < dim
            shift = displacement_matrix_elements(-alpha, levels, dim)
            populations = np.real(np.einsum("km,mn,kn->k", shift, rho, shift.conj()))
            p_plus[index] = populations @ m_plus
            p_minus[index] = populations @ m_minus

    # contrast reference: the same pulses at the origin without the wait
    first = _rotation_y(math.pi / 2.0)
    b_plus = min(1.0, float(abs((_rotation_y(math.pi / 2.0) @ first)[1, 0]) ** 2))
    b_minus = min(1.0, float(abs((_rotation_y(-math.pi / 2.0) @ first)[1, 0]) ** 2))
    p_plus = np.clip(p_plus, 0.0, 1.0)
    p_minus = np.clip(p_minus, 0.0, 1.0)
    if shots is not None:
        rng = np.random.default_rng(seed)
        p_plus = rng.binomial(shots, p_plus) / shots
        p_minus = rng.binomial(shots, p_minus) / shots
        b_plus = rng.binomial(shots, b_plus) / shots
        b_minus = rng.binomial(shots, b_minus) / shots
    scale = float(b_plus - b_minus)
    if scale <= 0.0:
        raise DegenerateInputError(f"Contrast reference B = {scale:.3g} is not positive")
    values = WIGNER_BOUND * (p_plus - p_minus) / scale

    side = math.isqrt(grid_points.size)
    square = points is None
    logger.info("Simulated tomography on %d points (shots=%s)", grid_points.size, shots)
    return WignerGrid(
        grid_points,
        values,
        scale=scale,
        shots=shots,
        seed=seed if shots is not None else None,
        extent=DEFAULT_EXTENT if square else None,
        points_per_axis=side if square else None,
    )


class ReconstructionConfig(BaseModel):
    """Settings of the least-squares density-matrix fit.

    Attributes:
        dim: Fock dimension of the reconstructed state
        max_iters: L-BFGS-B iteration limit
        resamples: Bootstrap resamples for the fidelity uncertainty
        threads: Worker threads for the bootstrap
    """

    model_config = ConfigDict(extra="forbid")

    dim: int = Field(default=DEFAULT_CAVITY_DIM, ge=1)
    max_iters: int = Field(default=5000, ge=1)
    resamples: int = Field(default=20, ge=2)
    threads: int = Field(default=1, ge=1)


@dataclass(frozen=True)
class ReconstructionResult:
    """Fitted cavity state.

    Attributes:
        rho: Reconstructed density matrix
        residual: Σ (W_model − W_measured)² at the optimum
        cost_trace: Residual after every optimizer iteration
        n_points: Number of grid points fitted
        converged: Whether the optimizer reported convergence
        bootstrap_fidelity_std: Filled in by the tomography pipeline
    """

    rho: DensityMatrix
    residual: float
    cost_trace: list[float] = field(default_factory=list)
    n_points: int = 0
    converged: bool = True
    bootstrap_fidelity_std: float | None = None


class _CholeskyModel:
    """ρ = T†T / Tr(T†T) with lower-triangular T packed as d² reals."""

    def __init__(self, kernel: ComplexArray, measured: RealArray) -> None:
        self.dim = kernel.shape[1]
        # row p holds K_p[m, n] at m * d + n, matched against ρ[n, m]
        self.kernel = kernel.reshape(kernel.shape[0], -1)
        self.measured = measured
        self.lower = np.tril_indices(self.dim)
        self.strict = np.tril_indices(self.dim, k=-1)
        self.n_real = self.lower[0].size

    def unpack(self, x: RealArray) -> ComplexArray:
        t = np.zeros((self.dim, self.dim), dtype=np.complex128)
        t[self.lower] = x[: self.n_real]
        t[self.strict] += 1j * x[self.n_real :]
        return t

    def initial(self) -> RealArray:
        x = np.zeros(self.dim * self.dim)
        x[: self.n_real][self.lower[0] == self.lower[1]] = 1.0 / math.sqrt(self.dim)
        return x

    def rho(self, x: RealArray) -> ComplexArray:
        t = self.unpack(x)
        sigma = t.conj().T @ t
        return sigma / np.real(np.trace(sigma))

    def value_and_grad(self, x: RealArray) -> tuple[float, RealArray]:
        t = self.unpack(x)
        sigma = t.conj().T @ t
        trace = float(np.real(np.trace(sigma)))
        rho = sigma / trace
        residuals = np.real(self.kernel @ rho.T.reshape(-1)) - self.measured
        cost = float(residuals @ residuals)
        g = 2.0 * (residuals @ self.kernel).reshape(self.dim, self.dim)
        g_sigma = (g - np.real(np.trace(g @ rho)) * np.eye(self.dim)) / trace
        c = g_sigma @ t.conj().T
        grad_t = 2.0 * c.T
        grad = np.concatenate([np.real(grad_t[self.lower]), -np.imag(grad_t[self.strict])])
        return cost, grad


def _noise_floor(grid: WignerGrid) -> float:
    if grid.shots is None:
        return NOISELESS_FLOOR_PER_POINT * grid.n_points
    amplitude = np.clip(grid.values * grid.scale / WIGNER_BOUND, -1.0, 1.0)
    # P_e(±) = (1 ± A)/2 for an ideal Ramsey readout
    variance = (1.0 - amplitude**2) / (2.0 * grid.shots)
    return float(np.sum(WIGNER_BOUND**2 * variance / grid.scale**2)) + NOISELESS_FLOOR_PER_POINT * grid.n_points


def mle_reconstruct(grid: WignerGrid, config: ReconstructionConfig | None = None) -> ReconstructionResult:
    """Least-squares fit of a density matrix to measured Wigner values."""
    config = config or ReconstructionConfig()
    dim = config.dim
    if grid.n_points < dim * dim:
        logger.warning(
            "Only %d Wigner points for %d unknowns; the reconstruction may be underdetermined",
            grid.n_points,
            dim * dim,
        )
    model = _CholeskyModel(displaced_parity_kernel(grid.points, dim), grid.values)
    trace: list[float] = []

    def record(intermediate_result: optimize.OptimizeResult) -> None:
        trace.append(float(intermediate_result.fun))

    result = optimize.minimize(
        model.value_and_grad,
        model.initial(),
        jac=True,
        method="L-BFGS-B",
        callback=record,
        options={"maxiter": config.max_iters, "ftol": 1e-15, "gtol": 1e-10},
    )
    residual = float(result.fun)
    floor = _noise_floor(grid)
    if not result.success and residual > RESIDUAL_FLOOR_FACTOR * floor:
        raise ReconstructionError(
            f"Reconstruction stalled at residual {residual:.3g} (noise floor {floor:.3g}): {result.message}"
        )
    rho = DensityMatrix.from_matrix(model.rho(result.x))
    logger.info(
        "Reconstructed dim-%d state from %d points: residual %.3g after %d iterations",
        dim,
        grid.n_points,
        residual,
        result.nit,
    )
    return ReconstructionResult(rho, residual, trace, grid.n_points, bool(result.success))


def reconstruction_fidelity(
    result: ReconstructionResult | DensityMatrix,
    target: StateVector | DensityMatrix,
    fock_cutoff: int | None = None,
) -> float:
    """Fidelity to ``target``, optionally on the first ``fock_cutoff`` levels of both."""
    rho = result.rho if isinstance(result, ReconstructionResult) else result
    if target.dim != rho.dim:
        target = target.resized(rho.dim)
    if fock_cutoff is None:
        return fidelity(target, rho)
    if isinstance(target, StateVector):
        reference: StateVector | DensityMatrix = StateVector.from_amplitudes(target.amplitudes[:fock_cutoff])
    else:
        reference = target.truncated(fock_cutoff)
    return fidelity(reference, rho.truncated(fock_cutoff))


def bootstrap_uncertainty(
    grid: WignerGrid,
    target: StateVector | DensityMatrix | None = None,
    seed: int = 0,
    config: ReconstructionConfig | None = None,
    fock_cutoff: int | None = None,
) -> float:
    """Spread of the reconstruction fidelity over shot-resampled grids.

    Each resample redraws every point's ±π/2 outcomes from the measured
    probabilities. Without ``target`` the fidelity is taken to the fit of
    the original grid. Noiseless grids have nothing to resample and give 0.
    """
    config = config or ReconstructionConfig()
    if grid.shots is None:
        return 0.0
    reference = target if target is not None else mle_reconstruct(grid, config).rho
    amplitude = np.clip(grid.values * grid.scale / WIGNER_BOUND, -1.0, 1.0)
    p_plus, p_minus = 0.5 * (1.0 + amplitude), 0.5 * (1.0 - amplitude)
    shots = grid.shots
    children = np.random.SeedSequence(seed).spawn(config.resamples)

    def resample(child: np.random.SeedSequence) -> float:
        rng = np.random.default_rng(child)
        amplitudes = (rng.binomial(shots, p_plus) - rng.binomial(shots, p_minus)) / shots
        noisy = WignerGrid(grid.points, WIGNER_BOUND * amplitudes / grid.scale, grid.scale, shots)
        return reconstruction_fidelity(mle_reconstruct(noisy, config), reference, fock_cutoff)

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        fidelities = np.array(list(pool.map(resample, children)))
    spread = float(np.std(fidelities, ddof=1))
    logger.info("Bootstrap over %d resamples: fidelity %.4f ± %.4f", config.resamples, fidelities.mean(), spread)
    return spread
