"""
Scene geometry for roomstate

Defines the acoustic medium, the triangulated room boundary with inward
normals and per-element impedance, and the source/receiver scene. Handles
loading meshes from the text triangle format and sanity-checking scenes.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

RIGID = math.inf
ON_BOUNDARY_TOLERANCE = 1e-9
DEFAULT_CLEARANCE = 1e-3
SHOEBOX_FACES = ("x_min", "x_max", "y_min", "y_max", "z_min", "z_max")


class GeometryError(ValueError):
    """Exception raised for invalid meshes and geometry"""

    pass


class DegenerateElementError(GeometryError):
    """Raised when a triangle has zero area or collinear vertices"""

    def __init__(self, element_index: int, message: str):
        super().__init__(message)
        self.element_index = element_index


class OrientationError(GeometryError):
    """Raised when an element normal does not point into the room"""

    def __init__(self, element_index: int, message: str):
        super().__init__(message)
        self.element_index = element_index


class OpenMeshError(GeometryError):
    """Raised when an operation needs a closed mesh"""

    pass


class SceneValidationError(Exception):
    """Exception raised when source or receiver placement is invalid"""

    pass


def parse_impedance(value: Any) -> float:
    """Convert an impedance value from config or file form to a float

    The literal string "rigid" (or "inf") encodes infinite impedance.
    """
    if isinstance(value, str):
        if value.strip().lower() in ("rigid", "inf", "infinity"):
            return RIGID
        try:
            value = float(value)
        except ValueError:
            raise GeometryError(f"Invalid impedance value: {value!r}")
    value = float(value)
    if math.isnan(value) or value <= 0:
        raise GeometryError(f"Impedance must be positive or rigid, got {value}")
    return value


def format_impedance(value: float) -> Union[str, float]:
    """Inverse of parse_impedance for JSON output"""
    return "rigid" if math.isinf(value) else value


@dataclass(frozen=True)
class Medium:
    """Propagation medium (speed of sound in m/s, density in kg/m^3)"""

    sound_speed: float = 343.0
    density: float = 1.21

    def __post_init__(self):
        if not (np.isfinite(self.sound_speed) and self.sound_speed > 0):
            raise ValueError(f"sound_speed must be positive, got {self.sound_speed}")
        if not (np.isfinite(self.density) and self.density > 0):
            raise ValueError(f"density must be positive, got {self.density}")

    @property
    def characteristic_impedance(self) -> float:
        """rho * c, the impedance of a reflection-free wall at normal incidence"""
        return self.density * self.sound_speed

    def wavelength(self, frequency: float) -> float:
        return self.sound_speed / frequency

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Medium":
        return cls(
            sound_speed=float(data.get("c", data.get("sound_speed", 343.0))),
            density=float(data.get("rho", data.get("density", 1.21))),
        )

    def to_dict(self) -> Dict[str, float]:
        return {"c": self.sound_speed, "rho": self.density}


class PointLocation(Enum):
    INTERIOR = "interior"
    EXTERIOR = "exterior"
    ON_BOUNDARY = "on_boundary"


@dataclass(frozen=True)
class PointClassification:
    """Location of a point relative to the room with its solid-angle weight"""

    location: PointLocation
    weight: float
    distance: float


_WEIGHTS = {
    PointLocation.INTERIOR: 4.0 * math.pi,
    PointLocation.ON_BOUNDARY: 2.0 * math.pi,
    PointLocation.EXTERIOR: 0.0,
}


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class BoundaryMesh:
    """Triangulated room boundary with inward normals and element impedances

    Elements are flat triangles. Centroids, areas, unit normals and diameters
    are computed once on construction; all arrays are read-only.
    """

    def __init__(
        self,
        vertices: Any,
        triangles: Any,
        impedance: Any = RIGID,
        groups: Optional[Sequence[str]] = None,
        shoebox: Optional[Tuple[float, float, float]] = None,
    ):
        vertices = np.array(vertices, dtype=float)
        triangles = np.array(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise GeometryError("vertices must be an (V, 3) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise GeometryError("triangles must be an (N, 3) array of vertex indices")
        if len(triangles) == 0:
            raise GeometryError("mesh has no elements")
        if not np.all(np.isfinite(vertices)):
            raise GeometryError("vertex coordinates must be finite")

        bad = np.nonzero((triangles < 0) | (triangles >= len(vertices)))[0]
        if len(bad):
            raise GeometryError(f"Element {int(bad[0])} references a missing vertex")

        impedance = np.broadcast_to(
            np.array(
                [parse_impedance(z) for z in np.atleast_1d(np.asarray(impedance, dtype=object))],
                dtype=float,
            ),
            (len(triangles),),
        ).copy()

        v0 = vertices[triangles[:, 0]]
        v1 = vertices[triangles[:, 1]]
        v2 = vertices[triangles[:, 2]]
        e1 = v1 - v0
        e2 = v2 - v0
        cross = np.cross(e1, e2)
        doubled = np.linalg.norm(cross, axis=1)
        edges = np.stack(
            [
                np.linalg.norm(e1, axis=1),
                np.linalg.norm(v2 - v1, axis=1),
                np.linalg.norm(e2, axis=1),
            ],
            axis=1,
        )
        diameters = edges.max(axis=1)

        # Collinear vertices give an area that vanishes relative to the edges
        degenerate = np.nonzero(doubled <= 1e-12 * np.maximum(diameters, 1e-300) ** 2)[0]
        if len(degenerate):
            index = int(degenerate[0])
            raise DegenerateElementError(
                index, f"Element {index} is degenerate (zero area or collinear vertices)"
            )

        self.vertices = _frozen(vertices)
        self.triangles = _frozen(triangles)
        self.impedance = _frozen(impedance)
        self.groups = tuple(groups) if groups is not None else None
        if self.groups is not None and len(self.groups) != len(triangles):
            raise GeometryError("groups must name one group per element")
        self.shoebox = tuple(float(v) for v in shoebox) if shoebox is not None else None

        self.origins = _frozen(v0)
        self.edge_u = _frozen(e1)
        self.edge_v = _frozen(e2)
        self.areas = _frozen(0.5 * doubled)
        self.normals = _frozen(cross / doubled[:, None])
        self.centroids = _frozen((v0 + v1 + v2) / 3.0)
        self.edge_lengths = _frozen(edges)
        self.diameters = _frozen(diameters)
        self._closed = None

    def __len__(self) -> int:
        return len(self.triangles)

    def __repr__(self) -> str:
        return f"BoundaryMesh(N={len(self)}, area={self.total_area:.6g})"

    @property
    def num_elements(self) -> int:
        return len(self.triangles)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @property
    def admittance(self) -> np.ndarray:
        """1/Z per element, exactly zero for rigid elements"""
        with np.errstate(divide="ignore"):
            return np.where(np.isinf(self.impedance), 0.0, 1.0 / self.impedance)

    @property
    def is_closed(self) -> bool:
        """True when every edge is shared by exactly two triangles"""
        if self._closed is None:
            edges = np.concatenate(
                [
                    self.triangles[:, [0, 1]],
                    self.triangles[:, [1, 2]],
                    self.triangles[:, [2, 0]],
                ]
            )
            edges.sort(axis=1)
            _, counts = np.unique(edges, axis=0, return_counts=True)
            self._closed = bool(np.all(counts == 2))
        return self._closed

    def signed_volume(self) -> float:
        """Volume enclosed by the mesh, negative when normals point inward"""
        v0 = self.vertices[self.triangles[:, 0]]
        v1 = self.vertices[self.triangles[:, 1]]
        v2 = self.vertices[self.triangles[:, 2]]
        return float(np.einsum("ij,ij->i", v0, np.cross(v1, v2)).sum() / 6.0)

    def content_hash(self) -> str:
        """SHA-256 of vertices, connectivity and impedances"""
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.vertices).tobytes())
        digest.update(np.ascontiguousarray(self.triangles).tobytes())
        digest.update(np.ascontiguousarray(self.impedance).tobytes())
        return digest.hexdigest()

    def distance_to(self, points: Any) -> np.ndarray:
        """Shortest distance from each point to the boundary surface"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        result = np.empty(len(points))
        for start in range(0, len(points), 256):
            block = points[start : start + 256]
            result[start : start + 256] = _point_triangle_distance(
                block, self.origins, self.edge_u, self.edge_v, self.normals
            ).min(axis=1)
        return result

    def check_orientation(self, stop_at_first: bool = True) -> List[int]:
        """Return indices of elements whose normal does not point into the room

        A test point is placed a small distance along each element normal and
        classified; inward normals put every test point inside the closed surface.
        """
        if not self.is_closed:
            raise OpenMeshError("Orientation check needs a closed mesh")
        offsets = 1e-4 * self.diameters
        offset_points = self.centroids + offsets[:, None] * self.normals
        offending = []
        for start in range(0, len(offset_points), 256):
            inside = _ray_parity(self, offset_points[start : start + 256])
            bad = np.nonzero(~inside)[0] + start
            offending.extend(int(i) for i in bad)
            if offending and stop_at_first:
                break
        return offending

    def statistics(self) -> Dict[str, Any]:
        """Summary statistics for reports"""
        stats = {
            "elements": self.num_elements,
            "vertices": len(self.vertices),
            "area": self.total_area,
            "diameter_min": float(self.diameters.min()),
            "diameter_median": float(np.median(self.diameters)),
            "diameter_max": float(self.diameters.max()),
            "closed": self.is_closed,
            "rigid_elements": int(np.isinf(self.impedance).sum()),
        }
        if self.is_closed:
            stats["volume"] = -self.signed_volume()
            offending = self.check_orientation()
            stats["orientation"] = (
                "inward" if not offending else f"flipped at element {offending[0]}"
            )
        else:
            stats["orientation"] = "unchecked (open mesh)"
        return stats


def _point_triangle_distance(points, origins, edge_u, edge_v, normals) -> np.ndarray:
    """Distances between P points and N triangles, shape (P, N)"""
    rel = points[:, None, :] - origins[None, :, :]
    height = np.einsum("pnk,nk->pn", rel, normals)
    foot = rel - height[..., None] * normals[None]

    # Barycentric coordinates of the projected point
    uu = np.einsum("nk,nk->n", edge_u, edge_u)
    uv = np.einsum("nk,nk->n", edge_u, edge_v)
    vv = np.einsum("nk,nk->n", edge_v, edge_v)
    fu = np.einsum("pnk,nk->pn", foot, edge_u)
    fv = np.einsum("pnk,nk->pn", foot, edge_v)
    det = uu * vv - uv * uv
    a = (vv * fu - uv * fv) / det
    b = (uu * fv - uv * fu) / det
    inside = (a >= 0) & (b >= 0) & (a + b <= 1)

    best = np.full(height.shape, np.inf)
    corners = (np.zeros_like(edge_u), edge_u, edge_v)
    for start, end in ((0, 1), (1, 2), (2, 0)):
        p0 = corners[start]
        seg = corners[end] - p0
        length2 = np.einsum("nk,nk->n", seg, seg)
        t = np.clip(np.einsum("pnk,nk->pn", rel - p0[None], seg) / length2, 0.0, 1.0)
        closest = p0[None] + t[..., None] * seg[None]
        best = np.minimum(best, np.linalg.norm(rel - closest, axis=-1))
    return np.where(inside, np.abs(height), best)


def _ray_hits(mesh: BoundaryMesh, origins: np.ndarray, direction: np.ndarray):
    """Count forward ray crossings per origin and flag ambiguous (grazing) rays"""
    eps = 1e-10
    pvec = np.cross(direction, mesh.edge_v)
    det = np.einsum("nk,nk->n", mesh.edge_u, pvec)
    parallel = np.abs(det) < eps * mesh.diameters ** 2
    inv_det = np.where(parallel, 0.0, 1.0 / np.where(parallel, 1.0, det))

    tvec = origins[:, None, :] - mesh.origins[None]
    u = np.einsum("pnk,nk->pn", tvec, pvec) * inv_det
    qvec = np.cross(tvec, mesh.edge_u[None])
    v = np.einsum("k,pnk->pn", direction, qvec) * inv_det
    t = np.einsum("nk,pnk->pn", mesh.edge_v, qvec) * inv_det

    tol = 1e-9
    inside = (u >= -tol) & (v >= -tol) & (u + v <= 1 + tol) & ~parallel[None]
    near_edge = inside & (
        (np.abs(u) <= tol) | (np.abs(v) <= tol) | (np.abs(u + v - 1) <= tol)
    )
    forward = inside & (t > tol)
    grazing = np.any(near_edge & (t > -tol), axis=1) | np.any(
        inside & (np.abs(t) <= tol), axis=1
    )
    return forward.sum(axis=1), grazing


def _ray_parity(mesh: BoundaryMesh, points: np.ndarray, seed: int = 0) -> np.ndarray:
    """Interior test by ray-crossing parity, re-randomizing grazing rays"""
    rng = np.random.default_rng(seed)
    result = np.zeros(len(points), dtype=bool)
    pending = np.arange(len(points))
    for _ in range(32):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        counts, grazing = _ray_hits(mesh, points[pending], direction)
        settled = ~grazing
        result[pending[settled]] = counts[settled] % 2 == 1
        pending = pending[grazing]
        if len(pending) == 0:
            return result
    raise GeometryError("Point classification failed: every ray grazed an edge")


def classify_point(mesh: BoundaryMesh, point: Any) -> PointClassification:
    """Classify a point as interior, exterior or on the boundary

    Returns the solid-angle weight 4*pi, 0 or 2*pi respectively. Needs a closed
    mesh; open meshes (the plate scenario) cannot classify points.
    """
    if not mesh.is_closed:
        raise OpenMeshError("Point classification is unavailable for open meshes")
    point = np.asarray(point, dtype=float).reshape(1, 3)
    distance = float(mesh.distance_to(point)[0])
    if distance < ON_BOUNDARY_TOLERANCE:
        location = PointLocation.ON_BOUNDARY
    elif _ray_parity(mesh, point)[0]:
        location = PointLocation.INTERIOR
    else:
        location = PointLocation.EXTERIOR
    return PointClassification(location, _WEIGHTS[location], distance)


def _grid_face(origin, u_axis, v_axis, u_len, v_len, nu, nv):
    """Vertices and triangles of one rectangular face split into 2*nu*nv triangles

    The winding makes u x v the element normal.
    """
    us = np.linspace(0.0, u_len, nu + 1)
    vs = np.linspace(0.0, v_len, nv + 1)
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    points = origin + uu[..., None] * u_axis + vv[..., None] * v_axis
    index = np.arange((nu + 1) * (nv + 1)).reshape(nu + 1, nv + 1)
    p00 = index[:-1, :-1].ravel()
    p10 = index[1:, :-1].ravel()
    p11 = index[1:, 1:].ravel()
    p01 = index[:-1, 1:].ravel()
    lower = np.stack([p00, p10, p11], axis=1)
    upper = np.stack([p00, p11, p01], axis=1)
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return points.reshape(-1, 3), triangles


def _grid_count(length: float, target_edge: float) -> int:
    return max(1, int(math.ceil(length / target_edge - 1e-9)))


def _merge_faces(faces):
    """Concatenate face patches and weld coincident vertices"""
    vertices = []
    triangles = []
    groups = []
    offset = 0
    for name, points, tris in faces:
        vertices.append(points)
        triangles.append(tris + offset)
        groups.extend([name] * len(tris))
        offset += len(points)
    vertices = np.concatenate(vertices)
    triangles = np.concatenate(triangles)
    _, first, inverse = np.unique(
        np.round(vertices, 12), axis=0, return_index=True, return_inverse=True
    )
    return vertices[first], inverse.reshape(-1)[triangles], groups


def make_shoebox(
    lengths: Sequence[float],
    target_edge: float,
    face_impedances: Any = RIGID,
) -> BoundaryMesh:
    """Closed axis-aligned box [0,Lx]x[0,Ly]x[0,Lz] with inward normals

    Each face is split into a uniform grid of ceil(L/target_edge) quads per
    axis, each quad into two triangles. face_impedances is one value for all
    faces or six values in the order x_min, x_max, y_min, y_max, z_min, z_max.
    """
    lengths = tuple(float(v) for v in lengths)
    if len(lengths) != 3:
        raise GeometryError("Shoebox needs exactly three lengths")
    if not all(np.isfinite(v) and v > 0 for v in lengths):
        raise GeometryError(f"Shoebox lengths must be positive, got {lengths}")
    if not (np.isfinite(target_edge) and target_edge > 0):
        raise GeometryError(f"target_edge must be positive, got {target_edge}")

    if isinstance(face_impedances, (str, int, float)):
        face_impedances = [face_impedances] * 6
    face_impedances = [parse_impedance(z) for z in face_impedances]
    if len(face_impedances) != 6:
        raise GeometryError("Shoebox needs one impedance or six face impedances")

    lx, ly, lz = lengths
    nx, ny, nz = (_grid_count(v, target_edge) for v in lengths)
    ex, ey, ez = np.eye(3)
    faces = [
        ("x_min", *_grid_face(np.zeros(3), ey, ez, ly, lz, ny, nz)),
        ("x_max", *_grid_face(lx * ex, ez, ey, lz, ly, nz, ny)),
        ("y_min", *_grid_face(np.zeros(3), ez, ex, lz, lx, nz, nx)),
        ("y_max", *_grid_face(ly * ey, ex, ez, lx, lz, nx, nz)),
        ("z_min", *_grid_face(np.zeros(3), ex, ey, lx, ly, nx, ny)),
        ("z_max", *_grid_face(lz * ez, ey, ex, ly, lx, ny, nx)),
    ]
    vertices, triangles, groups = _merge_faces(faces)
    lookup = dict(zip(SHOEBOX_FACES, face_impedances))
    impedance = [lookup[g] for g in groups]
    mesh = BoundaryMesh(vertices, triangles, impedance, groups, shoebox=lengths)
    logger.info("Built shoebox %s with %d elements", lengths, len(mesh))
    return mesh


def make_plate(
    width: float,
    depth: float,
    target_edge: float,
    impedance: Any = RIGID,
    height: float = 0.0,
) -> BoundaryMesh:
    """Open rectangular plate centred on the z axis at z=height, normal +z"""
    if not all(np.isfinite(v) and v > 0 for v in (width, depth, target_edge)):
        raise GeometryError("Plate dimensions and target_edge must be positive")
    nx = _grid_count(width, target_edge)
    ny = _grid_count(depth, target_edge)
    origin = np.array([-width / 2.0, -depth / 2.0, height])
    ex, ey, _ = np.eye(3)
    points, triangles = _grid_face(origin, ex, ey, width, depth, nx, ny)
    return BoundaryMesh(points, triangles, impedance, ["plate"] * len(triangles))


def _read_impedance_map(impedance_map: Any) -> Any:
    if isinstance(impedance_map, (str, Path)):
        with open(impedance_map, "r") as f:
            return json.load(f)
    return impedance_map


def load_mesh(
    geometry_file: Union[str, Path],
    impedance_map: Any = None,
    split_quads: bool = False,
) -> BoundaryMesh:
    """Load a triangle mesh file and assign impedances

    The file holds `v x y z` vertex lines and `f i j k group` faces with
    1-based indices; `#` starts a comment. impedance_map is a dict (or JSON
    path) from group name to impedance, or a per-element list. Orientation is
    checked for closed meshes and reported, never corrected.
    """
    path = Path(geometry_file)
    if not path.exists():
        raise GeometryError(f"Geometry file does not exist: {path}")

    vertices = []
    triangles = []
    groups = []
    with open(path, "r") as f:
        for line_number, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) != 4:
                    raise GeometryError(f"{path}:{line_number}: vertex needs x y z")
                vertices.append([float(v) for v in parts[1:]])
            elif parts[0] == "f":
                indices = [p for p in parts[1:] if _is_index(p)]
                names = parts[1 + len(indices) :]
                group = names[0] if names else "default"
                corners = [int(p) - 1 for p in indices]
                if len(corners) == 3:
                    triangles.append(corners)
                    groups.append(group)
                elif len(corners) == 4 and split_quads:
                    a, b, c, d = corners
                    triangles.extend([[a, b, c], [a, c, d]])
                    groups.extend([group, group])
                else:
                    raise GeometryError(
                        f"{path}:{line_number}: face with {len(corners)} vertices; "
                        "only triangles are supported"
                    )
            else:
                raise GeometryError(f"{path}:{line_number}: unknown record {parts[0]!r}")

    impedance = _resolve_impedances(_read_impedance_map(impedance_map), groups)
    mesh = BoundaryMesh(vertices, triangles, impedance, groups)
    shoebox = _shoebox_lengths(mesh.vertices, mesh.triangles, groups)
    if shoebox is not None:
        mesh = BoundaryMesh(vertices, triangles, impedance, groups, shoebox=shoebox)

    if mesh.is_closed:
        offending = mesh.check_orientation()
        if offending:
            raise OrientationError(
                offending[0],
                f"Element {offending[0]} has a normal pointing out of the room; "
                "fix the vertex winding in the file",
            )
    else:
        logger.info("Mesh %s is open; orientation and classification skipped", path)
    logger.info("Loaded %s: %d elements", path, len(mesh))
    return mesh


def _is_index(token: str) -> bool:
    return token.lstrip("-").isdigit()


def _shoebox_lengths(vertices, triangles, groups) -> Optional[Tuple[float, float, float]]:
    """Box lengths when the faces are the six axis planes of [0,Lx]x[0,Ly]x[0,Lz]"""
    if not vertices.size or set(groups) != set(SHOEBOX_FACES):
        return None
    low = vertices.min(axis=0)
    high = vertices.max(axis=0)
    if not np.allclose(low, 0.0, atol=1e-12):
        return None
    corners = np.asarray(triangles)
    for face, group in zip(corners, groups):
        axis = "xyz".index(group[0])
        plane = 0.0 if group.endswith("min") else high[axis]
        if not np.allclose(vertices[face, axis], plane, atol=1e-9):
            return None
    return tuple(float(v) for v in high)


def _resolve_impedances(impedance_map: Any, groups: List[str]) -> List[float]:
    if impedance_map is None:
        return [RIGID] * len(groups)
    if isinstance(impedance_map, dict):
        unknown = sorted(set(impedance_map) - set(groups))
        if unknown:
            raise GeometryError(f"Impedance map names unreferenced groups: {unknown}")
        missing = sorted(set(groups) - set(impedance_map))
        if missing:
            raise GeometryError(f"No impedance given for groups: {missing}")
        return [parse_impedance(impedance_map[g]) for g in groups]
    values = list(impedance_map)
    if len(values) != len(groups):
        raise GeometryError(
            f"Per-element impedance list has {len(values)} entries for "
            f"{len(groups)} elements"
        )
    return [parse_impedance(z) for z in values]


def save_mesh(mesh: BoundaryMesh, path: Union[str, Path]) -> Dict[str, Any]:
    """Write a mesh in the text triangle format and return its impedance map"""
    groups = mesh.groups or ["default"] * len(mesh)
    with open(path, "w") as f:
        f.write(f"# {len(mesh.vertices)} vertices, {len(mesh)} triangles\n")
        for x, y, z in mesh.vertices:
            f.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
        for (i, j, k), group in zip(mesh.triangles, groups):
            f.write(f"f {i + 1} {j + 1} {k + 1} {group}\n")
    impedance_map = {}
    for group, z in zip(groups, mesh.impedance):
        impedance_map.setdefault(group, format_impedance(float(z)))
    return impedance_map


@dataclass(frozen=True)
class Scene:
    """Mesh, medium, one point source and a list of receivers"""

    mesh: BoundaryMesh
    medium: Medium
    source_position: np.ndarray
    receiver_positions: np.ndarray

    def __post_init__(self):
        source = np.asarray(self.source_position, dtype=float).reshape(3)
        receivers = np.atleast_2d(np.asarray(self.receiver_positions, dtype=float))
        if receivers.shape[1] != 3 or len(receivers) == 0:
            raise ValueError("receiver_positions must be a non-empty (M, 3) array")
        object.__setattr__(self, "source_position", _frozen(source.copy()))
        object.__setattr__(self, "receiver_positions", _frozen(receivers.copy()))

    @property
    def num_receivers(self) -> int:
        return len(self.receiver_positions)

    def swapped(self) -> "Scene":
        """Scene with the source and the (single) receiver exchanged"""
        if self.num_receivers != 1:
            raise ValueError("Source/receiver exchange needs exactly one receiver")
        return Scene(
            self.mesh, self.medium, self.receiver_positions[0], self.source_position
        )

    def with_points(self, source=None, receivers=None) -> "Scene":
        return Scene(
            self.mesh,
            self.medium,
            self.source_position if source is None else source,
            self.receiver_positions if receivers is None else receivers,
        )


@dataclass
class SceneReport:
    """Diagnostics produced by validate_scene"""

    max_frequency: float
    wavelength: float
    median_element_size: float
    elements_per_wavelength: float
    closed: bool
    source_clearance: float
    receiver_clearances: List[float]
    warnings: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.warnings

    def to_dict(self) -> Dict[str, Any]:
        return {
            "max_frequency": self.max_frequency,
            "wavelength": self.wavelength,
            "median_element_size": self.median_element_size,
            "elements_per_wavelength": self.elements_per_wavelength,
            "closed": self.closed,
            "source_clearance": self.source_clearance,
            "receiver_clearances": list(self.receiver_clearances),
            "warnings": list(self.warnings),
        }


def validate_scene(
    scene: Scene,
    max_frequency: float,
    min_elements_per_wavelength: float = 4.0,
    min_clearance: float = DEFAULT_CLEARANCE,
) -> SceneReport:
    """Check mesh resolution and source/receiver placement

    Resolution below min_elements_per_wavelength only warns. A source or
    receiver outside the room, on the boundary or closer than min_clearance
    raises SceneValidationError.
    """
    mesh = scene.mesh
    wavelength = scene.medium.wavelength(max_frequency)
    median_size = float(np.median(mesh.diameters))
    resolution = wavelength / median_size

    points = np.vstack([scene.source_position[None], scene.receiver_positions])
    clearances = mesh.distance_to(points)
    labels = ["source"] + [f"receiver {m}" for m in range(scene.num_receivers)]

    for label, point, clearance in zip(labels, points, clearances):
        if mesh.is_closed:
            location = classify_point(mesh, point).location
            if location is not PointLocation.INTERIOR:
                raise SceneValidationError(
                    f"{label} at {point.tolist()} is {location.value}, not inside the room"
                )
        if clearance < min_clearance:
            raise SceneValidationError(
                f"{label} at {point.tolist()} is {clearance:.3g} m from the boundary "
                f"(minimum clearance {min_clearance:g} m)"
            )
    if np.any(np.linalg.norm(scene.receiver_positions - scene.source_position, axis=1) == 0):
        raise SceneValidationError("A receiver coincides with the source")

    report = SceneReport(
        max_frequency=float(max_frequency),
        wavelength=wavelength,
        median_element_size=median_size,
        elements_per_wavelength=resolution,
        closed=mesh.is_closed,
        source_clearance=float(clearances[0]),
        receiver_clearances=[float(c) for c in clearances[1:]],
    )
    if resolution < min_elements_per_wavelength:
        message = (
            f"Mesh resolution {resolution:.2f} elements per wavelength at "
            f"{max_frequency:g} Hz is below {min_elements_per_wavelength:g}"
        )
        report.warnings.append(message)
        logger.warning(message)
    return report


def load_scene(scene_file: Union[str, Path]) -> Scene:
    """Build a Scene from its JSON description"""
    path = Path(scene_file)
    if not path.exists():
        raise GeometryError(f"Scene file does not exist: {path}")
    with open(path, "r") as f:
        data = json.load(f)
    return scene_from_dict(data, base_dir=path.parent)


def scene_from_dict(data: Dict[str, Any], base_dir: Union[str, Path] = ".") -> Scene:
    base_dir = Path(base_dir)
    for key in ("mesh", "source", "receivers"):
        if key not in data:
            raise GeometryError(f"Scene description is missing {key!r}")

    entry = data["mesh"]
    if isinstance(entry, str):
        impedance = data.get("impedance")
        if impedance is None:
            raise GeometryError("Scene with a mesh file needs an 'impedance' map")
        if isinstance(impedance, str):
            impedance = base_dir / impedance
        mesh = load_mesh(
            base_dir / entry, impedance, split_quads=bool(data.get("split_quads", False))
        )
    elif "shoebox" in entry:
        box = entry["shoebox"]
        mesh = make_shoebox(box["lengths"], box["edge"], box.get("impedance", RIGID))
    elif "plate" in entry:
        plate = entry["plate"]
        mesh = make_plate(
            plate["width"],
            plate["depth"],
            plate["edge"],
            plate.get("impedance", RIGID),
            plate.get("height", 0.0),
        )
    else:
        raise GeometryError("Scene mesh must be a file path, 'shoebox' or 'plate'")

    medium = Medium.from_dict(data.get("medium", {}))
    return Scene(mesh, medium, data["source"], data["receivers"])
