"""
Reference solutions for roomstate

Independent computations used to check the boundary-integral engine:
free-field propagation, the image-source method for shoebox rooms, the
specular mirror reflection from a plane, rigid-box modal frequencies and
Monte-Carlo brute-force integration of operator entries.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import BoundaryMesh, Medium
from .kernels import FOUR_PI, TWO_PI, LaplacePoint, gh_arrays
from .response import (
    FrequencyGrid,
    ImpulseResponse,
    TransferFunction,
    enforce_real_edges,
    to_impulse_response,
)

logger = logging.getLogger(__name__)

MIN_MONTE_CARLO_SAMPLES = 10_000
GRAZING_ELEVATION = math.radians(10.0)


@dataclass(frozen=True)
class AxisPlane:
    """Plane perpendicular to a coordinate axis (0=x, 1=y, 2=z) at offset"""

    axis: int
    offset: float = 0.0

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise ValueError(f"axis must be 0, 1 or 2, got {self.axis}")

    def signed_distance(self, point: Any) -> float:
        return float(np.asarray(point, dtype=float)[self.axis] - self.offset)


def mirror_plane(point: Any, plane: AxisPlane) -> np.ndarray:
    """Reflection of a point across an axis-aligned plane"""
    result = np.array(point, dtype=float)
    result[plane.axis] = 2.0 * plane.offset - result[plane.axis]
    return result


def reflection_coefficient(impedance: float, medium: Medium) -> float:
    """Normal-incidence pressure reflection coefficient of a locally reacting wall"""
    if math.isinf(impedance):
        return 1.0
    z0 = medium.characteristic_impedance
    return (impedance - z0) / (impedance + z0)


@dataclass(frozen=True)
class ImageSource:
    """Mirrored source with its accumulated wall gain

    reflections counts bounces per face in the order x_min, x_max, y_min,
    y_max, z_min, z_max.
    """

    position: Tuple[float, float, float]
    gain: float
    order: int
    reflections: Tuple[int, int, int, int, int, int]


@dataclass(frozen=True)
class IsmArrival:
    distance: float
    delay: float
    amplitude: float
    order: int
    image: ImageSource


def _check_inside(lengths, point, label: str) -> np.ndarray:
    point = np.asarray(point, dtype=float).reshape(3)
    lengths = np.asarray(lengths, dtype=float)
    if np.any(point <= 0) or np.any(point >= lengths):
        raise ValueError(
            f"{label} {point.tolist()} is not strictly inside the box {lengths.tolist()}"
        )
    return point


def image_sources(
    lengths: Sequence[float],
    source: Any,
    max_order: int,
    reflection_coeffs: Sequence[float] = (1.0,) * 6,
) -> List[ImageSource]:
    """All images of a shoebox source with at most max_order reflections

    Along each axis the images sit at (1 - 2p) x_s + 2 m L for p in {0, 1}
    and integer m, with |m - p| bounces on the lower wall and |m| on the upper.
    """
    if max_order < 0:
        raise ValueError(f"max_order must be non-negative, got {max_order}")
    coeffs = np.asarray(reflection_coeffs, dtype=float)
    if coeffs.shape != (6,):
        raise ValueError("reflection_coeffs needs one value per face (6)")
    source = _check_inside(lengths, source, "Source")

    per_axis = []
    for axis, length in enumerate(lengths):
        options = []
        for m in range(-max_order, max_order + 1):
            for p in (0, 1):
                low, high = abs(m - p), abs(m)
                if low + high <= max_order:
                    coordinate = (1 - 2 * p) * source[axis] + 2 * m * length
                    options.append((coordinate, low, high))
        per_axis.append(options)

    images = []
    for (x, xl, xh), (y, yl, yh), (z, zl, zh) in itertools.product(*per_axis):
        counts = (xl, xh, yl, yh, zl, zh)
        order = sum(counts)
        if order > max_order:
            continue
        gain = float(np.prod(coeffs ** np.array(counts)))
        images.append(ImageSource((x, y, z), gain, order, counts))
    images.sort(key=lambda image: (image.order, image.position))
    return images


def ism_arrivals(
    lengths: Sequence[float],
    source: Any,
    receiver: Any,
    max_order: int,
    reflection_coeffs: Sequence[float] = (1.0,) * 6,
    medium: Optional[Medium] = None,
) -> List[IsmArrival]:
    """Arrivals at one receiver sorted by path length"""
    medium = medium or Medium()
    receiver = _check_inside(lengths, receiver, "Receiver")
    arrivals = []
    for image in image_sources(lengths, source, max_order, reflection_coeffs):
        distance = float(np.linalg.norm(receiver - np.array(image.position)))
        arrivals.append(
            IsmArrival(
                distance=distance,
                delay=distance / medium.sound_speed,
                amplitude=image.gain / distance,
                order=image.order,
                image=image,
            )
        )
    arrivals.sort(key=lambda arrival: (arrival.distance, arrival.order))
    return arrivals


@dataclass
class IsmResult:
    transfer_function: TransferFunction
    impulse_response: Optional[ImpulseResponse]
    arrivals: List[List[IsmArrival]]


def ism_shoebox(
    lengths: Sequence[float],
    source: Any,
    receivers: Any,
    max_order: int,
    reflection_coeffs: Sequence[float] = (1.0,) * 6,
    medium: Optional[Medium] = None,
    grid: Optional[FrequencyGrid] = None,
    max_frequency: Optional[float] = None,
    frequencies: Optional[Sequence[float]] = None,
    window: Optional[str] = "raised-cosine",
) -> IsmResult:
    """Image-source transfer function (and impulse response on a grid)

    Each image contributes gain * exp(-j omega R / c) / R. With a grid the
    result is band-limited like a sweep and rendered through the same
    inverse DFT as the boundary-integral results.
    """
    medium = medium or Medium()
    receivers = np.atleast_2d(np.asarray(receivers, dtype=float))
    if grid is None and frequencies is None:
        raise ValueError("ism_shoebox needs a FrequencyGrid or explicit frequencies")
    freqs = grid.frequencies if grid is not None else np.asarray(frequencies, dtype=float)
    omega = TWO_PI * freqs

    arrivals = [
        ism_arrivals(lengths, source, receiver, max_order, reflection_coeffs, medium)
        for receiver in receivers
    ]
    values = np.zeros((len(receivers), len(freqs)), dtype=complex)
    for m, receiver_arrivals in enumerate(arrivals):
        for arrival in receiver_arrivals:
            values[m] += arrival.amplitude * np.exp(-1j * omega * arrival.delay)

    metadata: Dict[str, Any] = {
        "method": "ism",
        "max_order": max_order,
        "reflection_coeffs": [float(c) for c in reflection_coeffs],
        "max_frequency": max_frequency,
    }
    impulse = None
    if grid is not None:
        if max_frequency is not None:
            values[:, freqs > max_frequency] = 0.0
        values = enforce_real_edges(values)
        metadata["grid"] = grid.to_dict()
        tf = TransferFunction(freqs, values, grid, metadata)
        impulse = to_impulse_response(tf, window=window)
    else:
        tf = TransferFunction(freqs, values, None, metadata)
    logger.info("ISM: %d images per receiver up to order %d", len(arrivals[0]), max_order)
    return IsmResult(tf, impulse, arrivals)


@dataclass(frozen=True)
class BoxMode:
    frequency: float
    indices: Tuple[int, int, int]


def rigid_box_modes(lengths: Sequence[float], medium: Medium, f_max: float) -> List[BoxMode]:
    """Eigenfrequencies (c/2) sqrt(sum (n_i/L_i)^2) of a rigid box up to f_max"""
    if f_max <= 0:
        raise ValueError(f"f_max must be positive, got {f_max}")
    c = medium.sound_speed
    limits = [int(math.floor(2.0 * f_max * length / c)) for length in lengths]
    modes = []
    for indices in itertools.product(*(range(limit + 1) for limit in limits)):
        if indices == (0, 0, 0):
            continue
        frequency = 0.5 * c * math.sqrt(sum((n / L) ** 2 for n, L in zip(indices, lengths)))
        if frequency <= f_max:
            modes.append(BoxMode(frequency, tuple(indices)))
    modes.sort(key=lambda mode: (mode.frequency, mode.indices))
    return modes


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: complex
    standard_error: float
    samples: int


def _sample_triangle(rng, mesh: BoundaryMesh, element: int, count: int) -> np.ndarray:
    r1 = rng.random(count)
    r2 = rng.random(count)
    flip = r1 + r2 > 1.0
    r1[flip] = 1.0 - r1[flip]
    r2[flip] = 1.0 - r2[flip]
    return (
        mesh.origins[element]
        + r1[:, None] * mesh.edge_u[element]
        + r2[:, None] * mesh.edge_v[element]
    )


def monte_carlo_entry(
    mesh: BoundaryMesh,
    element: int,
    other: Optional[int] = None,
    point: Optional[Any] = None,
    kernel: str = "A",
    s: Any = 0.0,
    medium: Optional[Medium] = None,
    sample_count: int = 1_000_000,
    seed: int = 0,
    block_size: int = 100_000,
    workers: int = 1,
) -> MonteCarloEstimate:
    """Brute-force estimate of one basis-normalized operator entry

    kernel "A" integrates the boundary kernel (w = 2*pi) over the pair
    (element, other); "C" integrates the receiver kernel (w = 4*pi) from
    point over element; "constant" integrates 1 over the pair. Blocks draw
    from seeds spawned from the master seed, so totals do not depend on the
    worker count.
    """
    medium = medium or Medium()
    if sample_count < MIN_MONTE_CARLO_SAMPLES:
        raise ValueError(f"sample_count must be at least {MIN_MONTE_CARLO_SAMPLES}")
    if kernel in ("A", "constant"):
        if other is None:
            raise ValueError(f"Kernel {kernel!r} needs a second element")
        if other == element:
            raise ValueError("Self pairs are singular and not covered by the Monte-Carlo oracle")
    elif kernel == "C":
        if point is None:
            raise ValueError("Kernel 'C' needs an observation point")
        point = np.asarray(point, dtype=float)
    else:
        raise ValueError(f"Unknown kernel selector: {kernel!r}")

    s = s.value if isinstance(s, LaplacePoint) else complex(s)
    c = medium.sound_speed
    sizes = [block_size] * (sample_count // block_size)
    if sample_count % block_size:
        sizes.append(sample_count % block_size)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    admittance = mesh.admittance

    def block(job):
        size, block_seed = job
        rng = np.random.default_rng(block_seed)
        if kernel == "C":
            target = element
            source_points = _sample_triangle(rng, mesh, target, size)
            diff = point - source_points
            weight = FOUR_PI
        else:
            target = other
            obs = _sample_triangle(rng, mesh, element, size)
            source_points = _sample_triangle(rng, mesh, target, size)
            diff = obs - source_points
            weight = TWO_PI
        if kernel == "constant":
            f = np.ones(size, dtype=complex)
        else:
            radius = np.linalg.norm(diff, axis=1)
            cosine = diff @ mesh.normals[target] / radius
            g, h = gh_arrays(radius, cosine, admittance[target], medium, weight)
            f = (s * g + h) * np.exp(-s * radius / c)
        return f.sum(), np.sum(np.abs(f) ** 2)

    jobs = list(zip(sizes, seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partial = list(pool.map(block, jobs))
    else:
        partial = [block(job) for job in jobs]

    total = sum(p[0] for p in partial)
    total_sq = sum(p[1] for p in partial)
    mean = total / sample_count
    variance = max(total_sq / sample_count - abs(mean) ** 2, 0.0)
    variance *= sample_count / (sample_count - 1)

    areas = mesh.areas
    if kernel == "C":
        scale = math.sqrt(areas[element])
    else:
        scale = math.sqrt(areas[element] * areas[other])
    value = complex(scale * mean)
    error = scale * math.sqrt(variance / sample_count)
    return MonteCarloEstimate(value, float(error), sample_count)


@dataclass
class MirrorReflection:
    values: np.ndarray
    path_length: float
    elevation: float
    grazing: bool
    metadata: Dict[str, Any] = field(default_factory=dict)


def mirror_plane_first_order(
    source: Any,
    receiver: Any,
    plate_plane: AxisPlane,
    frequencies: Any,
    medium: Optional[Medium] = None,
) -> MirrorReflection:
    """Specular reflection exp(-j omega R'/c)/R' from a rigid plane

    R' is the distance from the mirrored source to the receiver. Paths whose
    elevation above the plane is below 10 degrees are flagged as grazing.
    """
    medium = medium or Medium()
    source = np.asarray(source, dtype=float)
    receiver = np.asarray(receiver, dtype=float)
    hs = plate_plane.signed_distance(source)
    hr = plate_plane.signed_distance(receiver)
    if hs * hr <= 0:
        raise ValueError("Source and receiver must lie strictly on the same side of the plane")

    image = mirror_plane(source, plate_plane)
    path = float(np.linalg.norm(receiver - image))
    elevation = math.asin(min(1.0, (abs(hs) + abs(hr)) / path))
    grazing = elevation < GRAZING_ELEVATION
    if grazing:
        logger.warning(
            "Mirror path elevation %.1f deg is grazing; specular reference is outside its regime",
            math.degrees(elevation),
        )
    omega = TWO_PI * np.asarray(frequencies, dtype=float)
    values = np.exp(-1j * omega * path / medium.sound_speed) / path
    return MirrorReflection(
        values,
        path,
        elevation,
        grazing,
        {"method": "mirror", "grazing": grazing, "elevation_deg": math.degrees(elevation)},
    )
