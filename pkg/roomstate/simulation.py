"""
roomstate simulation API - High-level interface to the boundary-integral engine

Ties a scene and a run configuration to assembly, solving, sweeps, impulse
responses, state-space diagnostics and reference comparisons.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .assembly import OperatorAssembler, OperatorSet
from .config import RunConfig
from .geometry import SHOEBOX_FACES, Scene, SceneReport, load_scene, validate_scene
from .kernels import LaplacePoint
from .oracle import (
    AxisPlane,
    ism_shoebox,
    mirror_plane_first_order,
    reflection_coefficient,
)
from .response import (
    FrequencyGrid,
    ImpulseResponse,
    TransferFunction,
    decompose_sweep,
    make_assembler,
    sweep,
    to_impulse_response,
)
from .solver import (
    StackedMatrix,
    StateSolution,
    controllability_matrix,
    default_diagnostic_order,
    markov_parameters,
    observability_matrix,
    sigma_min,
    solve_direct,
    solve_neumann,
    spectral_radius,
)

logger = logging.getLogger(__name__)

IDENTITY_TOLERANCE = 1e-13
ARRIVAL_SEARCH = 4


class ComparisonSetupError(Exception):
    """Raised when a scene cannot be compared with a reference solution"""

    pass


@dataclass
class DiagnosticsResult:
    """State-space diagnostics at one frequency"""

    frequency: float
    ops: OperatorSet
    markov: List[np.ndarray]
    observability: StackedMatrix
    controllability: StackedMatrix
    spectral_radius: float
    spectral_radius_converged: bool
    sigma_min: float
    checks: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check["status"] == "PASS" for check in self.checks)


@dataclass
class ComparisonReport:
    """Boundary-integral result against the image-source or mirror reference"""

    reference: str
    frequencies: np.ndarray
    band_mask: np.ndarray
    relative_error: np.ndarray
    reflected_error: Optional[np.ndarray]
    phase_error: Optional[np.ndarray]
    computed: TransferFunction
    reference_tf: TransferFunction
    computed_ir: Optional[ImpulseResponse] = None
    reference_ir: Optional[ImpulseResponse] = None
    arrivals: List[Dict[str, Any]] = field(default_factory=list)

    def summary(self) -> Dict[str, Any]:
        mask = self.band_mask
        result = {
            "reference": self.reference,
            "bins_compared": int(mask.sum()),
            "max_relative_error": _masked_max(self.relative_error, mask),
            "median_relative_error": _masked_median(self.relative_error, mask),
        }
        if self.reflected_error is not None:
            result["max_reflected_error"] = _masked_max(self.reflected_error, mask)
            result["max_phase_error"] = _masked_max(np.abs(self.phase_error), mask)
        if self.arrivals:
            deltas = [abs(a["delta_samples"]) for a in self.arrivals]
            result["max_arrival_delta_samples"] = max(deltas)
            result["max_amplitude_error"] = max(
                abs(a["amplitude_ratio"] - 1.0) for a in self.arrivals
            )
        return result


def _masked_max(values: np.ndarray, mask: np.ndarray) -> Optional[float]:
    selected = values[:, mask]
    return float(selected.max()) if selected.size else None


def _masked_median(values: np.ndarray, mask: np.ndarray) -> Optional[float]:
    selected = values[:, mask]
    return float(np.median(selected)) if selected.size else None


class RoomSimulation:
    """High-level room simulation interface with convenient methods"""

    def __init__(self, scene: Union[str, Path, Scene], config: Optional[RunConfig] = None):
        """
        Initialize a simulation

        Args:
            scene: Path to a scene JSON file or a Scene instance
            config: Run configuration; defaults apply when omitted
        """
        if isinstance(scene, (str, Path)):
            self.scene = load_scene(scene)
        else:
            self.scene = scene
        self.config = config or RunConfig()
        self.options = self.config.solver_options()
        self._assembler: Optional[OperatorAssembler] = None

    @property
    def assembler(self) -> OperatorAssembler:
        if self._assembler is None:
            self._assembler = make_assembler(self.scene, self.options)
        return self._assembler

    def grid(self) -> FrequencyGrid:
        return self.config.frequency_grid()

    def validate(self, max_frequency: Optional[float] = None) -> SceneReport:
        """Scene sanity report at max_frequency (default: band limit or Nyquist)"""
        if max_frequency is None:
            max_frequency = self.options.max_frequency or self.grid().nyquist
        return validate_scene(
            self.scene,
            max_frequency,
            min_elements_per_wavelength=self.config.solver.min_elements_per_wavelength,
            min_clearance=self.config.solver.min_clearance,
        )

    def operators(self, frequency: float) -> OperatorSet:
        return self.assembler.assemble(LaplacePoint.from_frequency(frequency))

    def solve(
        self, frequency: float, method: Optional[str] = None, order: Optional[int] = None
    ) -> StateSolution:
        ops = self.operators(frequency)
        method = method or self.options.method
        if method == "direct":
            return solve_direct(ops)
        if method == "neumann":
            solution, _ = solve_neumann(ops, order=self.options.order if order is None else order)
            return solution
        raise ValueError(f"Unknown solver method: {method!r}")

    def transfer_function(self, grid: Optional[FrequencyGrid] = None) -> TransferFunction:
        return sweep(self.scene, grid or self.grid(), self.options, self.assembler)

    def impulse_response(
        self, grid: Optional[FrequencyGrid] = None, window: Optional[str] = "raised-cosine"
    ) -> Tuple[TransferFunction, ImpulseResponse]:
        tf = self.transfer_function(grid)
        return tf, to_impulse_response(tf, window=window)

    def diagnostics(self, frequency: float, order: Optional[int] = None) -> DiagnosticsResult:
        """Markov parameters, observability/controllability and identity checks"""
        ops = self.operators(frequency)
        if order is None:
            order = default_diagnostic_order(ops)
        markov = markov_parameters(ops, order)
        observability = observability_matrix(ops, order)
        controllability = controllability_matrix(ops, order)
        radius = spectral_radius(ops.A)

        checks = []
        checks.append(_exact_check("Markov[0] = C B", markov[0], ops.C @ ops.B))

        solution, _ = solve_neumann(ops, order=order - 1, abort_on_divergence=False)
        total = ops.D[:, 0] * 1.0
        for parameter in markov:
            total = total + parameter[:, 0] * 1.0
        checks.append(_exact_check("sum Markov x + D x = neumann(K-1).p", total, solution.p))

        m = ops.M
        observed = [observability.matrix[k * m : (k + 1) * m] @ ops.B for k in range(order)]
        checks.append(_close_check("O block k B = Markov[k]", observed, markov))
        controlled = [ops.C @ controllability.matrix[:, k : k + 1] for k in range(order)]
        checks.append(
            _close_check("C times controllability column k = Markov[k]", controlled, markov)
        )

        for check in checks:
            logger.info("Identity %s: %s", check["check"], check["status"])
        return DiagnosticsResult(
            frequency=frequency,
            ops=ops,
            markov=markov,
            observability=observability,
            controllability=controllability,
            spectral_radius=radius.estimate,
            spectral_radius_converged=radius.converged,
            sigma_min=sigma_min(ops),
            checks=checks,
        )

    def _face_coefficients(self) -> List[float]:
        mesh = self.scene.mesh
        if mesh.groups is None or not set(mesh.groups) <= set(SHOEBOX_FACES):
            raise ComparisonSetupError("Shoebox comparison needs faces named x_min ... z_max")
        coefficients = []
        for face in SHOEBOX_FACES:
            values = np.unique(mesh.impedance[np.array(mesh.groups) == face])
            if len(values) != 1:
                raise ComparisonSetupError(f"Face {face} does not carry a single impedance")
            coefficients.append(reflection_coefficient(float(values[0]), self.scene.medium))
        return coefficients

    def _plate_plane(self) -> AxisPlane:
        mesh = self.scene.mesh
        normal = mesh.normals[0]
        if mesh.is_closed or not np.allclose(mesh.normals, normal, atol=1e-12):
            raise ComparisonSetupError("Mirror comparison needs a single open planar plate")
        axis = int(np.argmax(np.abs(normal)))
        if abs(abs(normal[axis]) - 1.0) > 1e-12:
            raise ComparisonSetupError("Mirror comparison needs an axis-aligned plate")
        if not np.all(np.isinf(mesh.impedance)):
            raise ComparisonSetupError("Mirror comparison needs a rigid plate")
        return AxisPlane(axis, float(mesh.vertices[mesh.triangles[0, 0], axis]))

    def compare_ism(
        self,
        grid: Optional[FrequencyGrid] = None,
        orders: Optional[int] = None,
        ism_order: int = 1,
        reflection_coeffs: Optional[Sequence[float]] = None,
        band: Optional[Tuple[float, float]] = None,
    ) -> ComparisonReport:
        """Compare against the image-source model (shoebox) or the mirror reflection (plate)

        With orders=K the boundary-integral side is the sum of the direct path
        and reflection orders 1..K (no (I - A) solve) and the reference uses
        images up to order K. Without orders the full solution is compared
        with images up to ism_order.
        """
        grid = grid or self.grid()
        scene = self.scene
        mesh = scene.mesh
        max_frequency = self.options.max_frequency

        if mesh.shoebox is None:
            plane = self._plate_plane()
            if orders != 1:
                raise ComparisonSetupError(
                    "The plate scenario compares first-order reflection only (orders=1)"
                )
            reference = "mirror"
        else:
            if reflection_coeffs is not None:
                coefficients = list(reflection_coeffs)
            else:
                coefficients = self._face_coefficients()
            reference = "ism"

        if orders is not None:
            terms = decompose_sweep(scene, grid, orders, self.options)
            values = np.sum([tf.values for tf in terms], axis=0)
            computed = TransferFunction(grid.frequencies, values, grid, dict(terms[-1].metadata))
            computed.metadata["method"] = f"orders({orders})"
            direct = terms[0].values
            reference_order = orders
        else:
            computed = self.transfer_function(grid)
            direct = decompose_sweep(scene, grid, 0, self.options)[0].values
            reference_order = ism_order

        frequencies = grid.frequencies
        if reference == "mirror":
            if scene.num_receivers != 1:
                raise ComparisonSetupError("The plate scenario supports exactly one receiver")
            reflection = mirror_plane_first_order(
                scene.source_position, scene.receiver_positions[0], plane, frequencies, scene.medium
            )
            ref_values = direct + reflection.values[None, :]
            if max_frequency is not None:
                ref_values[:, frequencies > max_frequency] = 0.0
            ref_tf = TransferFunction(frequencies, ref_values, grid, dict(reflection.metadata))
            reference_ir = None
        else:
            ism = ism_shoebox(
                mesh.shoebox,
                scene.source_position,
                scene.receiver_positions,
                reference_order,
                coefficients,
                scene.medium,
                grid=grid,
                max_frequency=max_frequency,
            )
            ref_tf = ism.transfer_function
            reference_ir = ism.impulse_response

        mask = frequencies > 0
        if max_frequency is not None:
            mask &= frequencies <= max_frequency
        if band is not None:
            mask &= (frequencies >= band[0]) & (frequencies <= band[1])

        with np.errstate(divide="ignore", invalid="ignore"):
            relative = np.abs(computed.values - ref_tf.values) / np.abs(ref_tf.values)
            reflected = phase = None
            if reference_order >= 1:
                computed_scattered = computed.values - direct
                ref_scattered = ref_tf.values - direct
                reflected = np.abs(computed_scattered - ref_scattered) / np.abs(ref_scattered)
                phase = np.angle(computed_scattered / ref_scattered)

        report = ComparisonReport(
            reference=reference,
            frequencies=frequencies,
            band_mask=mask,
            relative_error=relative,
            reflected_error=reflected,
            phase_error=phase,
            computed=computed,
            reference_tf=ref_tf,
        )
        if reference == "ism":
            report.computed_ir = to_impulse_response(computed)
            report.reference_ir = reference_ir
            report.arrivals = _arrival_deltas(
                report.computed_ir, reference_ir, ism.arrivals, reference_order
            )
        logger.info("Comparison against %s: %s", reference, report.summary())
        return report

    def to_dataframe(self, tf: TransferFunction) -> Any:
        """Transfer function as a pandas DataFrame"""
        from .formatter import ResultFormatter

        return ResultFormatter.transfer_function_frame(tf)


def _peak_near(trace: np.ndarray, center: float, search: int) -> Tuple[int, float]:
    lo = max(0, int(np.floor(center)) - search)
    hi = min(len(trace), int(np.ceil(center)) + search + 1)
    window = np.abs(trace[lo:hi])
    index = lo + int(np.argmax(window))
    return index, float(trace[index])


def _arrival_deltas(computed_ir, reference_ir, arrivals, max_order) -> List[Dict[str, Any]]:
    """Per-arrival timing and amplitude of the boundary-integral impulse response"""
    rows = []
    fs = computed_ir.sample_rate
    for m, receiver_arrivals in enumerate(arrivals):
        for arrival in receiver_arrivals:
            if arrival.order == 0 or arrival.order > max_order:
                continue
            expected = arrival.delay * fs
            ref_index, ref_value = _peak_near(reference_ir.samples[m], expected, ARRIVAL_SEARCH)
            index, value = _peak_near(computed_ir.samples[m], expected, ARRIVAL_SEARCH)
            rows.append(
                {
                    "receiver": m,
                    "order": arrival.order,
                    "reflections": list(arrival.image.reflections),
                    "expected_sample": expected,
                    "reference_sample": ref_index,
                    "computed_sample": index,
                    "delta_samples": index - ref_index,
                    "reference_amplitude": ref_value,
                    "computed_amplitude": value,
                    "amplitude_ratio": value / ref_value if ref_value else float("inf"),
                }
            )
    return rows


def _exact_check(name: str, left: np.ndarray, right: np.ndarray) -> Dict[str, Any]:
    error = float(np.max(np.abs(np.asarray(left) - np.asarray(right)))) if np.size(left) else 0.0
    status = "PASS" if np.array_equal(left, right) else "FAIL"
    return {"check": name, "max_error": error, "status": status}


def _close_check(
    name: str, left: Sequence[np.ndarray], right: Sequence[np.ndarray]
) -> Dict[str, Any]:
    left = np.hstack(left)
    right = np.hstack(right)
    scale = max(float(np.max(np.abs(right))), np.finfo(float).tiny)
    error = float(np.max(np.abs(left - right))) / scale
    status = "PASS" if error <= IDENTITY_TOLERANCE else "FAIL"
    return {"check": name, "max_error": error, "status": status}


def create_simulation(
    scene: Union[str, Path, Scene], config: Optional[RunConfig] = None
) -> RoomSimulation:
    """Create a RoomSimulation for a scene file or Scene instance"""
    return RoomSimulation(scene, config)
