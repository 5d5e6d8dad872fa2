"""
Galerkin operator assembly for roomstate

Builds the discrete state-space operators {A(s), B(s), C(s), D(s)} with
orthonormal piecewise-constant basis functions phi_n = |Gamma_n|^(-1/2) on
element n. Geometry-only factors (quadrature points, distances, cosines,
near-field pair lists) live in a GeometryCache reused across Laplace points.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import psutil

from .geometry import DEFAULT_CLEARANCE, BoundaryMesh, Medium, Scene, SceneValidationError
from .kernels import (
    FOUR_PI,
    TWO_PI,
    LaplacePoint,
    SingularEvaluationError,
    gh_arrays,
    laplace_kernel,
)
from .quadrature import QuadratureRule, map_rule, polar_self_rule

logger = logging.getLogger(__name__)

# Upper bound on quadrature-point pairs evaluated at once in a row block
BLOCK_PAIR_BUDGET = 250_000
DEFAULT_CACHE_BYTES = 256 * 1024 ** 2


def default_workers() -> int:
    """Physical core count, falling back to the logical count"""
    return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1


def _as_laplace(s: Any) -> LaplacePoint:
    if isinstance(s, LaplacePoint):
        return s
    s = complex(s)
    return LaplacePoint(s.real, s.imag)


class BasisSet:
    """Orthonormal piecewise-constant basis on a mesh"""

    def __init__(self, mesh: BoundaryMesh):
        self.mesh = mesh
        self.norms = 1.0 / np.sqrt(mesh.areas)

    def __len__(self) -> int:
        return len(self.norms)

    def gram(self) -> np.ndarray:
        """<phi_n, phi_m> over the boundary; the identity by construction"""
        return np.diag(self.norms ** 2 * self.mesh.areas)

    def project(self, values: Any) -> np.ndarray:
        """Coefficients of an elementwise-constant field"""
        return np.asarray(values) * np.sqrt(self.mesh.areas)

    def evaluate(self, coefficients: Any) -> np.ndarray:
        """Elementwise field values for basis coefficients (inverse of project)"""
        return np.asarray(coefficients) * self.norms


@dataclass
class OperatorSet:
    """State-space operators at one Laplace point

    A is (N, N), B is (N, 1), C is (M, N) and D is (M, 1).
    """

    s: LaplacePoint
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        n = self.A.shape[0]
        m = self.C.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.shape != (n, 1):
            raise ValueError(f"B must be ({n}, 1), got {self.B.shape}")
        if self.C.shape != (m, n):
            raise ValueError(f"C must be ({m}, {n}), got {self.C.shape}")
        if self.D.shape != (m, 1):
            raise ValueError(f"D must be ({m}, 1), got {self.D.shape}")

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def M(self) -> int:
        return self.C.shape[0]

    def conjugate(self) -> "OperatorSet":
        return OperatorSet(
            self.s.conjugate(),
            self.A.conj(),
            self.B.conj(),
            self.C.conj(),
            self.D.conj(),
        )


class GeometryCache:
    """Frequency-independent factors of one mesh under one quadrature rule

    Far-pair distances and kernel factors are stored per row block when the
    whole set fits in max_bytes; otherwise they are recomputed on every call
    by the same code, so both paths give identical matrices.
    """

    def __init__(
        self,
        mesh: BoundaryMesh,
        medium: Medium,
        quadrature: Optional[QuadratureRule] = None,
        max_bytes: Optional[int] = DEFAULT_CACHE_BYTES,
    ):
        self.mesh = mesh
        self.medium = medium
        self.quadrature = quadrature or QuadratureRule()
        self.basis = BasisSet(mesh)
        self.admittance = mesh.admittance

        ref_points, ref_weights = self.quadrature.points, self.quadrature.weights
        self.points, self.weights = map_rule(
            mesh.origins, mesh.edge_u, mesh.edge_v, mesh.areas, ref_points, ref_weights
        )
        self.refined_points, self.refined_weights = map_rule(
            mesh.origins, mesh.edge_u, mesh.edge_v, mesh.areas, *self.quadrature.refined()
        )

        n = len(mesh)
        q = self.quadrature.num_points
        self.block_rows = max(1, BLOCK_PAIR_BUDGET // max(1, n * q * q))
        self.near_pairs = self._find_near_pairs()

        needed = 3 * 8 * n * n * q * q
        self.cache_enabled = max_bytes is not None and needed <= max_bytes
        self._pair_factors: Dict[int, Tuple[np.ndarray, ...]] = {}
        logger.debug(
            "Geometry cache: N=%d, Q=%d, %d near pairs, block rows %d, pair cache %s",
            n,
            q,
            len(self.near_pairs[0]),
            self.block_rows,
            "on" if self.cache_enabled else "off",
        )

    def _find_near_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        centroids = self.mesh.centroids
        diameters = self.mesh.diameters
        threshold = self.quadrature.near_field_threshold
        rows = []
        cols = []
        for start in range(0, len(centroids), 512):
            block = slice(start, start + 512)
            gap = np.linalg.norm(centroids[block, None, :] - centroids[None], axis=2)
            scale = np.maximum(diameters[block, None], diameters[None, :])
            near = gap < threshold * scale
            r, c = np.nonzero(near)
            r = r + start
            keep = r != c
            rows.append(r[keep])
            cols.append(c[keep])
        return np.concatenate(rows), np.concatenate(cols)

    def coplanar(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Element pairs lying in one plane, where cos(theta) vanishes exactly"""
        normals = self.mesh.normals
        centroids = self.mesh.centroids
        parallel = np.abs(np.einsum("...k,...k->...", normals[rows], normals[cols])) > 1.0 - 1e-12
        offset = np.abs(
            np.einsum("...k,...k->...", centroids[rows] - centroids[cols], normals[cols])
        )
        scale = np.maximum(self.mesh.diameters[rows], self.mesh.diameters[cols])
        return parallel & (offset <= 1e-12 * scale)

    def row_blocks(self) -> List[Tuple[int, int]]:
        n = len(self.mesh)
        return [(start, min(n, start + self.block_rows)) for start in range(0, n, self.block_rows)]

    def pair_factors(self, start: int, stop: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Distances and the s-independent g and h factors for rows start:stop"""
        if self.cache_enabled and start in self._pair_factors:
            return self._pair_factors[start]
        factors = self._compute_pair_factors(start, stop)
        if self.cache_enabled:
            self._pair_factors[start] = factors
        return factors

    def _compute_pair_factors(self, start: int, stop: int):
        n = len(self.mesh)
        obs = self.points[start:stop]
        diff = obs[:, None, :, None, :] - self.points[None, :, None, :, :]
        radius = np.linalg.norm(diff, axis=-1)
        projected = np.einsum("bnijk,nk->bnij", diff, self.mesh.normals)
        rows = np.repeat(np.arange(start, stop), n)
        cols = np.tile(np.arange(n), stop - start)
        flat = self.coplanar(rows, cols).reshape(stop - start, n)
        # Coincident points only occur on the diagonal, which is overwritten later
        safe = np.where(radius > 0, radius, 1.0)
        cosine = np.where(flat[:, :, None, None], 0.0, projected / safe)
        g, h = gh_arrays(safe, cosine, self.admittance[None, :, None, None], self.medium, TWO_PI)
        return safe, g, h


class OperatorAssembler:
    """Assembles operator sets for a scene at arbitrary Laplace points"""

    def __init__(
        self,
        scene: Scene,
        quadrature: Optional[QuadratureRule] = None,
        workers: Optional[int] = None,
        cache: Optional[GeometryCache] = None,
        min_clearance: float = DEFAULT_CLEARANCE,
    ):
        self.scene = scene
        self.quadrature = quadrature or QuadratureRule()
        self.workers = workers or default_workers()
        self.cache = cache or GeometryCache(scene.mesh, scene.medium, self.quadrature)
        self.min_clearance = min_clearance
        self._self_rule = None

    @property
    def mesh(self) -> BoundaryMesh:
        return self.scene.mesh

    @property
    def medium(self) -> Medium:
        return self.scene.medium

    def _map(self, func, jobs):
        if self.workers <= 1 or len(jobs) <= 1:
            return [func(job) for job in jobs]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(func, jobs))

    def assemble_A(self, s: Any) -> np.ndarray:
        """Boundary-to-boundary operator with boundary weight w = 2*pi"""
        s = _as_laplace(s).value
        n = len(self.mesh)
        A = np.empty((n, n), dtype=complex)
        cache = self.cache
        norms = cache.basis.norms
        c = self.medium.sound_speed

        def far_block(bounds):
            start, stop = bounds
            radius, g, h = cache.pair_factors(start, stop)
            kernel = (s * g + h) * np.exp(-s * radius / c)
            inner = (kernel * cache.weights[None, :, None, :]).sum(axis=-1)
            total = (inner * cache.weights[start:stop, None, :]).sum(axis=-1)
            A[start:stop] = total * norms[start:stop, None] * norms[None, :]

        self._map(far_block, cache.row_blocks())
        self._near_entries(A, s)
        A[np.diag_indices(n)] = self._self_entries(s)
        return A

    def _near_entries(self, A: np.ndarray, s: complex) -> None:
        rows, cols = self.cache.near_pairs
        if len(rows) == 0:
            return
        cache = self.cache
        norms = cache.basis.norms
        flat = cache.coplanar(rows, cols)
        for start in range(0, len(rows), 256):
            r = rows[start : start + 256]
            k = cols[start : start + 256]
            diff = cache.refined_points[r][:, :, None, :] - cache.refined_points[k][:, None, :, :]
            radius = np.linalg.norm(diff, axis=-1)
            projected = np.einsum("pijk,pk->pij", diff, self.mesh.normals[k])
            cosine = np.where(flat[start : start + 256, None, None], 0.0, projected / radius)
            kernel = laplace_kernel(
                s, radius, cosine, cache.admittance[k][:, None, None], self.medium, TWO_PI
            )
            inner = (kernel * cache.refined_weights[k][:, None, :]).sum(axis=-1)
            total = (inner * cache.refined_weights[r]).sum(axis=-1)
            A[r, k] = total * norms[r] * norms[k]

    def self_rule(self) -> Tuple[np.ndarray, np.ndarray]:
        """Polar-rule radii and outer-times-inner weights per element"""
        if self._self_rule is None:
            mesh = self.mesh
            cache = self.cache
            radii = []
            weights = []
            for index in range(len(mesh)):
                corners = mesh.vertices[mesh.triangles[index]]
                r, w = polar_self_rule(
                    cache.points[index],
                    corners,
                    self.quadrature.singular_radial,
                    self.quadrature.singular_angular,
                )
                radii.append(r.ravel())
                weights.append((w * cache.weights[index][:, None]).ravel())
            self._self_rule = (np.array(radii), np.array(weights))
        return self._self_rule

    def _self_entries(self, s: complex) -> np.ndarray:
        """Diagonal of A: only the impedance part of g survives on a flat element"""
        y = self.cache.admittance
        diagonal = np.zeros(len(self.mesh), dtype=complex)
        absorbing = np.nonzero(y > 0)[0]
        if len(absorbing) == 0 or s == 0:
            return diagonal
        radii, weights = self.self_rule()
        rho = self.medium.density
        c = self.medium.sound_speed
        integral = (np.exp(-s * radii[absorbing] / c) * weights[absorbing]).sum(axis=1)
        scale = -s * rho * y[absorbing] / TWO_PI
        diagonal[absorbing] = scale * integral / self.mesh.areas[absorbing]
        return diagonal

    def _near_element(self, point: np.ndarray) -> np.ndarray:
        gap = np.linalg.norm(self.mesh.centroids - point, axis=1)
        return gap < self.quadrature.near_field_threshold * self.mesh.diameters

    def _points_and_weights(self, point: np.ndarray):
        near = self._near_element(point)
        cache = self.cache
        return (
            (cache.points, cache.weights),
            (cache.refined_points[near], cache.refined_weights[near]),
            near,
        )

    def assemble_B(self, s: Any) -> np.ndarray:
        """Incident field tested against each basis function, shape (N, 1)"""
        s = _as_laplace(s).value
        source = self.scene.source_position
        c = self.medium.sound_speed
        (points, weights), (ref_points, ref_weights), near = self._points_and_weights(source)

        def integrate(pts, wts):
            radius = np.linalg.norm(pts - source, axis=-1)
            if np.any(radius == 0):
                raise SingularEvaluationError("Source lies on the boundary")
            return ((2.0 / radius) * np.exp(-s * radius / c) * wts).sum(axis=-1)

        values = integrate(points, weights)
        if np.any(near):
            values[near] = integrate(ref_points, ref_weights)
        return (values * self.cache.basis.norms)[:, None]

    def assemble_C(self, s: Any) -> np.ndarray:
        """Boundary-to-receiver operator with interior weight w = 4*pi, shape (M, N)"""
        s = _as_laplace(s).value
        receivers = self.scene.receiver_positions
        clearance = self.mesh.distance_to(receivers)
        for m, gap in enumerate(clearance):
            if gap < self.min_clearance:
                raise SceneValidationError(
                    f"Receiver {m} is {gap:.3g} m from the boundary "
                    f"(minimum clearance {self.min_clearance:g} m)"
                )
        rows = self._map(lambda r: self._receiver_row(s, r), list(receivers))
        return np.array(rows).reshape(len(receivers), len(self.mesh))

    def _receiver_row(self, s: complex, receiver: np.ndarray) -> np.ndarray:
        (points, weights), (ref_points, ref_weights), near = self._points_and_weights(receiver)
        normals = self.mesh.normals
        y = self.cache.admittance

        def integrate(pts, wts, normal, admit):
            diff = receiver - pts
            radius = np.linalg.norm(diff, axis=-1)
            cosine = np.einsum("nqk,nk->nq", diff, normal) / radius
            kernel = laplace_kernel(s, radius, cosine, admit[:, None], self.medium, FOUR_PI)
            return (kernel * wts).sum(axis=-1)

        values = integrate(points, weights, normals, y)
        if np.any(near):
            values[near] = integrate(ref_points, ref_weights, normals[near], y[near])
        return values * self.cache.basis.norms

    def assemble_D(self, s: Any) -> np.ndarray:
        return assemble_D(self.scene.receiver_positions, self.scene.source_position, s, self.medium)

    def assemble(self, s: Any) -> OperatorSet:
        point = _as_laplace(s)
        ops = OperatorSet(
            point,
            self.assemble_A(point),
            self.assemble_B(point),
            self.assemble_C(point),
            self.assemble_D(point),
        )
        logger.debug("Assembled operators at s=%s (N=%d, M=%d)", point, ops.N, ops.M)
        return ops


def assemble_D(receivers: Any, source: Any, s: Any, medium: Medium) -> np.ndarray:
    """Direct path from the source to each receiver, shape (M, 1)"""
    s = _as_laplace(s).value
    receivers = np.atleast_2d(np.asarray(receivers, dtype=float))
    radius = np.linalg.norm(receivers - np.asarray(source, dtype=float), axis=1)
    if np.any(radius == 0):
        raise SingularEvaluationError("A receiver coincides with the source")
    return (np.exp(-s * radius / medium.sound_speed) / radius)[:, None]


def assemble_A(
    mesh: BoundaryMesh, medium: Medium, s: Any, quadrature: Optional[QuadratureRule] = None
) -> np.ndarray:
    """Assemble A for a bare mesh (no source or receivers needed)"""
    cache = GeometryCache(mesh, medium, quadrature)
    scene = _bare_scene(mesh, medium)
    return OperatorAssembler(scene, cache.quadrature, workers=1, cache=cache).assemble_A(s)


def assemble_B(
    mesh: BoundaryMesh,
    source: Any,
    s: Any,
    medium: Medium,
    quadrature: Optional[QuadratureRule] = None,
) -> np.ndarray:
    scene = _bare_scene(mesh, medium, source=source)
    return OperatorAssembler(scene, quadrature, workers=1).assemble_B(s)


def assemble_C(
    mesh: BoundaryMesh,
    receivers: Any,
    medium: Medium,
    s: Any,
    quadrature: Optional[QuadratureRule] = None,
    min_clearance: float = DEFAULT_CLEARANCE,
) -> np.ndarray:
    scene = _bare_scene(mesh, medium, receivers=receivers)
    assembler = OperatorAssembler(scene, quadrature, workers=1, min_clearance=min_clearance)
    return assembler.assemble_C(s)


def assemble_operator_set(
    scene: Scene,
    s: Any,
    quadrature: Optional[QuadratureRule] = None,
    workers: Optional[int] = None,
) -> OperatorSet:
    return OperatorAssembler(scene, quadrature, workers).assemble(s)


def _bare_scene(mesh: BoundaryMesh, medium: Medium, source=None, receivers=None) -> Scene:
    """Scene wrapper for single-operator assembly; unused points are placed far away"""
    far = mesh.centroids.mean(axis=0) + 1e6
    return Scene(
        mesh,
        medium,
        far if source is None else source,
        [far + 1.0] if receivers is None else receivers,
    )
