"""
Frequency sweeps and impulse responses for roomstate

Evaluates the state-space model on s = j*omega over a linear frequency grid
tied to (sample_rate, nfft), producing transfer functions per receiver, and
turns them into real room impulse responses by Hermitian inverse DFT.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError
from scipy.signal import find_peaks

from .assembly import GeometryCache, OperatorAssembler, default_workers
from .geometry import DEFAULT_CLEARANCE, Scene
from .kernels import LaplacePoint
from .quadrature import QuadratureRule
from .solver import (
    DEFAULT_NEUMANN_ORDER,
    SolveError,
    sigma_min,
    solve_direct,
    solve_neumann,
    spectral_radius,
)

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-8
DEFAULT_TAPER = 0.2


class SymmetryError(Exception):
    """Raised when a synthesized impulse response is not real"""

    pass


class SweepError(SolveError):
    """Raised when the solve at one frequency fails"""

    def __init__(self, message: str, frequency: float):
        super().__init__(message)
        self.frequency = frequency


@dataclass(frozen=True)
class FrequencyGrid:
    """Linear grid of nfft/2 + 1 bins at f_k = k * sample_rate / nfft"""

    sample_rate: float
    nfft: int

    def __post_init__(self):
        if not (np.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.nfft <= 0 or self.nfft % 2:
            raise ValueError(f"nfft must be a positive even integer, got {self.nfft}")

    @property
    def num_bins(self) -> int:
        return self.nfft // 2 + 1

    @property
    def resolution(self) -> float:
        return self.sample_rate / self.nfft

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2.0

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.num_bins) * self.resolution

    @property
    def dc_frequency(self) -> float:
        """Small positive frequency standing in for the s = 0 bin"""
        return self.sample_rate / (10.0 * self.nfft)

    def to_dict(self) -> Dict[str, Any]:
        return {"sample_rate": self.sample_rate, "nfft": self.nfft}


@dataclass
class BinDiagnostics:
    frequency: float
    solved_at: float
    condition: Optional[float] = None
    spectral_radius: Optional[float] = None
    spectral_radius_converged: Optional[bool] = None
    sigma_min: Optional[float] = None
    residual_norm: Optional[float] = None
    near_singular: bool = False


@dataclass
class TransferFunction:
    """Receiver responses T(j omega), shape (M, number of frequencies)

    grid is set for sweeps over a FrequencyGrid; arbitrary-frequency sweeps
    leave it None and cannot be turned into impulse responses.
    """

    frequencies: np.ndarray
    values: np.ndarray
    grid: Optional[FrequencyGrid] = None
    metadata: Dict[str, Any] = field(default_factory=dict)
    diagnostics: List[BinDiagnostics] = field(default_factory=list)

    @property
    def num_receivers(self) -> int:
        return self.values.shape[0]


@dataclass
class ImpulseResponse:
    """Real sampled pressure per receiver, shape (M, nfft)"""

    sample_rate: float
    samples: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if np.iscomplexobj(self.samples):
            raise SymmetryError("Impulse response samples must be real")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("Impulse response contains non-finite samples")

    @property
    def num_receivers(self) -> int:
        return self.samples.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.shape[1]) / self.sample_rate


@dataclass
class SolverOptions:
    """How each frequency bin is solved and which diagnostics are collected"""

    method: str = "direct"
    order: int = DEFAULT_NEUMANN_ORDER
    quadrature: QuadratureRule = field(default_factory=QuadratureRule)
    workers: Optional[int] = None
    max_frequency: Optional[float] = None
    spectral_radius: bool = False
    sigma_min: bool = False
    min_clearance: float = DEFAULT_CLEARANCE

    def __post_init__(self):
        if self.method not in ("direct", "neumann"):
            raise ValueError(f"Unknown solver method: {self.method!r}")
        if self.order < 0:
            raise ValueError(f"Neumann order must be non-negative, got {self.order}")

    @property
    def label(self) -> str:
        return "direct" if self.method == "direct" else f"neumann({self.order})"


def make_assembler(scene: Scene, options: SolverOptions) -> OperatorAssembler:
    """Assembler with a warmed geometry cache, safe to share across bin workers"""
    cache = GeometryCache(scene.mesh, scene.medium, options.quadrature)
    assembler = OperatorAssembler(
        scene, options.quadrature, workers=1, cache=cache, min_clearance=options.min_clearance
    )
    if cache.cache_enabled:
        for start, stop in cache.row_blocks():
            cache.pair_factors(start, stop)
    if np.any(cache.admittance > 0):
        assembler.self_rule()
    return assembler


def _solve_bin(assembler: OperatorAssembler, frequency: float, options: SolverOptions):
    ops = assembler.assemble(LaplacePoint.from_frequency(frequency))
    if options.method == "direct":
        solution = solve_direct(ops)
    else:
        solution, _ = solve_neumann(ops, order=options.order)

    diagnostics = BinDiagnostics(
        frequency=frequency,
        solved_at=frequency,
        condition=solution.condition,
        residual_norm=solution.residual_norm,
        near_singular=solution.near_singular,
    )
    if options.spectral_radius:
        radius = spectral_radius(ops.A)
        diagnostics.spectral_radius = radius.estimate
        diagnostics.spectral_radius_converged = radius.converged
    if options.sigma_min:
        diagnostics.sigma_min = sigma_min(ops)
    return solution.p, diagnostics


def _run_bins(
    scene: Scene,
    frequencies: Sequence[float],
    options: SolverOptions,
    assembler: Optional[OperatorAssembler] = None,
):
    """Solve every frequency, writing results into slots indexed by position"""
    assembler = assembler or make_assembler(scene, options)
    values = np.zeros((scene.num_receivers, len(frequencies)), dtype=complex)
    diagnostics: List[Optional[BinDiagnostics]] = [None] * len(frequencies)

    def job(index: int) -> None:
        frequency = float(frequencies[index])
        try:
            p, info = _solve_bin(assembler, frequency, options)
        except (SolveError, LinAlgError) as e:
            raise SweepError(f"Solve failed at {frequency:g} Hz: {e}", frequency) from e
        values[:, index] = p
        diagnostics[index] = info
        logger.debug("Solved %g Hz (condition %s)", frequency, info.condition)

    workers = options.workers or default_workers()
    indices = range(len(frequencies))
    if workers <= 1 or len(frequencies) <= 1:
        for index in indices:
            job(index)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for _ in pool.map(job, indices):
                pass
    return values, diagnostics


def _metadata(scene: Scene, options: SolverOptions, **extra) -> Dict[str, Any]:
    metadata = {
        "mesh_hash": scene.mesh.content_hash(),
        "method": options.label,
        "quadrature": options.quadrature.to_dict(),
        "max_frequency": options.max_frequency,
        "elements": len(scene.mesh),
        "receivers": scene.num_receivers,
    }
    metadata.update(extra)
    return metadata


def enforce_real_edges(values: np.ndarray) -> np.ndarray:
    """Force the DC bin real and the Nyquist bin real with its magnitude kept"""
    values[:, 0] = values[:, 0].real
    nyquist = values[:, -1]
    values[:, -1] = np.copysign(np.abs(nyquist), nyquist.real)
    return values


def _grid_solve_points(grid: FrequencyGrid, options: SolverOptions):
    """Bin indices to solve and the frequency each one is solved at"""
    frequencies = grid.frequencies
    active = np.arange(grid.num_bins)
    if options.max_frequency is not None:
        active = active[frequencies <= options.max_frequency]
    solve_at = frequencies[active].copy()
    if len(active) and active[0] == 0:
        solve_at[0] = grid.dc_frequency
    return active, solve_at


def sweep(
    scene: Scene,
    grid: FrequencyGrid,
    options: Optional[SolverOptions] = None,
    assembler: Optional[OperatorAssembler] = None,
) -> TransferFunction:
    """Transfer function of every receiver on a FrequencyGrid

    Bin 0 is solved at grid.dc_frequency and keeps only its real part. Bins
    above options.max_frequency are zero and not solved.
    """
    options = options or SolverOptions()
    active, solve_at = _grid_solve_points(grid, options)
    logger.info(
        "Sweep: %d of %d bins, %s, N=%d, M=%d",
        len(active),
        grid.num_bins,
        options.label,
        len(scene.mesh),
        scene.num_receivers,
    )
    solved, bin_diagnostics = _run_bins(scene, solve_at, options, assembler)

    values = np.zeros((scene.num_receivers, grid.num_bins), dtype=complex)
    values[:, active] = solved
    diagnostics = []
    for index, info in zip(active, bin_diagnostics):
        info.frequency = float(grid.frequencies[index])
        diagnostics.append(info)

    metadata = _metadata(scene, options, grid=grid.to_dict(), dc_frequency=grid.dc_frequency)
    tf = TransferFunction(grid.frequencies, enforce_real_edges(values), grid, metadata, diagnostics)
    logger.info("Sweep finished")
    return tf


def sweep_frequencies(
    scene: Scene,
    frequencies: Sequence[float],
    options: Optional[SolverOptions] = None,
    assembler: Optional[OperatorAssembler] = None,
) -> TransferFunction:
    """Transfer function at arbitrary frequencies (negative values allowed)"""
    options = options or SolverOptions()
    frequencies = np.asarray(frequencies, dtype=float)
    if np.any(frequencies == 0):
        raise ValueError("Exact s = 0 is not solved; use a small positive frequency")
    values, diagnostics = _run_bins(scene, frequencies, options, assembler)
    return TransferFunction(frequencies, values, None, _metadata(scene, options), diagnostics)


def decompose_sweep(
    scene: Scene,
    grid: FrequencyGrid,
    max_order: int,
    options: Optional[SolverOptions] = None,
) -> List[TransferFunction]:
    """Per-reflection-order transfer functions of the feed-forward structure

    Entry 0 is the direct path D, entry k >= 1 is C A^(k-1) B. A is only
    assembled when max_order >= 2, so first-order runs scale to large meshes.
    """
    if max_order < 0:
        raise ValueError(f"max_order must be non-negative, got {max_order}")
    options = options or SolverOptions()
    assembler = make_assembler(scene, options)
    active, solve_at = _grid_solve_points(grid, options)
    values = np.zeros((max_order + 1, scene.num_receivers, grid.num_bins), dtype=complex)

    def job(position: int) -> None:
        s = LaplacePoint.from_frequency(float(solve_at[position]))
        column = active[position]
        values[0, :, column] = assembler.assemble_D(s)[:, 0]
        if max_order == 0:
            return
        C = assembler.assemble_C(s)
        A = assembler.assemble_A(s) if max_order >= 2 else None
        v = assembler.assemble_B(s)
        for order in range(1, max_order + 1):
            values[order, :, column] = (C @ v)[:, 0]
            if order < max_order:
                v = A @ v

    workers = options.workers or default_workers()
    if workers <= 1:
        for position in range(len(active)):
            job(position)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for _ in pool.map(job, range(len(active))):
                pass

    result = []
    for order in range(max_order + 1):
        metadata = _metadata(
            scene, options, grid=grid.to_dict(), dc_frequency=grid.dc_frequency, order=order
        )
        metadata["method"] = f"order({order})"
        result.append(
            TransferFunction(grid.frequencies, enforce_real_edges(values[order]), grid, metadata)
        )
    return result


def spectral_window(
    grid: FrequencyGrid, band_top: Optional[float] = None, taper: float = DEFAULT_TAPER
) -> np.ndarray:
    """Raised-cosine roll-off over the top `taper` fraction of the band"""
    top = min(band_top or grid.nyquist, grid.nyquist)
    start = (1.0 - taper) * top
    f = grid.frequencies
    window = np.ones(grid.num_bins)
    if taper > 0:
        rolling = (f > start) & (f <= top)
        window[rolling] = 0.5 * (1.0 + np.cos(np.pi * (f[rolling] - start) / (top - start)))
    window[f > top] = 0.0
    return window


def hermitian_spectrum(values: np.ndarray, nfft: int) -> np.ndarray:
    """Full length-nfft spectrum with H[nfft - k] = conj(H[k])"""
    mirrored = np.conj(values[:, nfft // 2 - 1 : 0 : -1])
    return np.concatenate([values, mirrored], axis=1)


def to_impulse_response(
    tf: TransferFunction,
    window: Optional[str] = "raised-cosine",
    taper: float = DEFAULT_TAPER,
) -> ImpulseResponse:
    """Real impulse response by Hermitian inverse DFT

    The output is scaled so that an on-sample pure delay exp(-j omega tau)/R
    peaks at exactly 1/R at sample tau * fs, with or without the window.
    """
    grid = tf.grid
    if grid is None:
        raise ValueError("Impulse responses need a sweep over a FrequencyGrid")
    if tf.values.shape[1] != grid.num_bins:
        raise ValueError("Transfer function does not cover every bin of its grid")

    if window is None:
        weights = np.ones(grid.num_bins)
    elif window == "raised-cosine":
        weights = spectral_window(grid, tf.metadata.get("max_frequency"), taper)
    else:
        raise ValueError(f"Unknown spectral window: {window!r}")

    spectrum = hermitian_spectrum(tf.values * weights[None, :], grid.nfft)
    signal = np.fft.ifft(spectrum, axis=1)
    real_energy = float(np.sum(signal.real ** 2))
    imag_energy = float(np.sum(signal.imag ** 2))
    ratio = imag_energy / real_energy if real_energy > 0 else 0.0
    if ratio > SYMMETRY_TOLERANCE:
        raise SymmetryError(
            f"Impulse response is not real (imaginary/real energy ratio {ratio:.3g}); "
            "the transfer function lost conjugate symmetry upstream"
        )

    kernel = hermitian_spectrum(weights[None, :].astype(complex), grid.nfft)
    peak = float(np.fft.ifft(kernel)[0, 0].real)
    samples = signal.real / peak
    metadata = dict(tf.metadata)
    metadata.update(
        {
            "window": window,
            "taper": taper if window else 0.0,
            "window_peak": peak,
            "imag_energy_ratio": ratio,
        }
    )
    return ImpulseResponse(grid.sample_rate, samples, metadata)


def band_energy(ir: ImpulseResponse, band: Optional[Tuple[float, float]] = None) -> np.ndarray:
    """Energy per receiver, over the whole signal or within a frequency band

    Band energies are computed from the one-sided spectrum and agree with the
    time-domain energy (Parseval) when the band covers 0 to fs/2.
    """
    if band is None:
        return np.sum(ir.samples ** 2, axis=1)
    low, high = band
    nfft = ir.samples.shape[1]
    spectrum = np.fft.rfft(ir.samples, axis=1)
    frequencies = np.fft.rfftfreq(nfft, 1.0 / ir.sample_rate)
    weights = np.full(len(frequencies), 2.0)
    weights[0] = 1.0
    if nfft % 2 == 0:
        weights[-1] = 1.0
    inside = (frequencies >= low) & (frequencies <= high)
    return np.sum(np.abs(spectrum[:, inside]) ** 2 * weights[inside], axis=1) / nfft


@dataclass(frozen=True)
class ArrivalPeak:
    sample: int
    time: float
    amplitude: float


def find_arrival_peaks(
    ir: ImpulseResponse,
    receiver: int = 0,
    relative_height: float = 0.05,
    min_separation: int = 3,
    limit: Optional[int] = None,
) -> List[ArrivalPeak]:
    """Local maxima of |h| above relative_height times the global maximum, in time order"""
    trace = ir.samples[receiver]
    magnitude = np.abs(trace)
    if not np.any(magnitude):
        return []
    indices, properties = find_peaks(
        magnitude, height=relative_height * magnitude.max(), distance=min_separation
    )
    if limit is not None:
        strongest = np.argsort(properties["peak_heights"])[::-1][:limit]
        indices = np.sort(indices[strongest])
    return [
        ArrivalPeak(int(i), i / ir.sample_rate, float(trace[i])) for i in indices
    ]


@dataclass(frozen=True)
class ModalDip:
    frequency: float
    sigma_min: float


def find_modal_dips(
    frequencies: Sequence[float],
    sigma: Sequence[float],
    relative_prominence: float = 0.05,
) -> List[ModalDip]:
    """Local minima of sigma_min(I - A) over a sweep, lowest frequency first

    A dip must stand out from its neighbours by relative_prominence times the
    spread of the sweep; endpoints never count.
    """
    frequencies = np.asarray(frequencies, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if frequencies.shape != sigma.shape:
        raise ValueError("Frequencies and sigma_min values must have the same length")
    if len(sigma) < 3:
        return []
    order = np.argsort(frequencies)
    frequencies, sigma = frequencies[order], sigma[order]
    spread = float(sigma.max() - sigma.min())
    if spread <= 0.0:
        return []
    indices, _ = find_peaks(-sigma, prominence=relative_prominence * spread)
    return [ModalDip(float(frequencies[i]), float(sigma[i])) for i in indices]
