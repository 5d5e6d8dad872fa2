"""
Triangle quadrature for roomstate

Reference-triangle Gauss rules, one-level 4-way subdivision for near-field
pairs, and the polar (Duffy-type) rule that integrates the weakly singular
1/R self-term over a flat triangle.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.special import roots_legendre

# Symmetric 12-point rule of degree 6 (orbit generator, weight on a unit-sum scale)
_DEGREE6_ORBITS = (
    ((0.501426509658179, 0.249286745170910), 0.116786275726379),
    ((0.873821971016996, 0.063089014491502), 0.050844906370207),
)
_DEGREE6_MIXED = ((0.053145049844817, 0.310352451033784, 0.636502499121399), 0.082851075618374)


def _degree6_rule() -> Tuple[np.ndarray, np.ndarray]:
    bary = []
    weights = []
    for (a, b), w in _DEGREE6_ORBITS:
        for perm in ((a, b, b), (b, a, b), (b, b, a)):
            bary.append(perm)
            weights.append(w)
    (a, b, c), w = _DEGREE6_MIXED
    for perm in ((a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)):
        bary.append(perm)
        weights.append(w)
    bary = np.array(bary)
    # Reference triangle (0,0),(1,0),(0,1): xi = l1, eta = l2
    return bary[:, 1:], 0.5 * np.array(weights)


def _collapsed_gauss_rule(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """Conical product rule from Gauss-Legendre on the square"""
    n = max(1, int(math.ceil((degree + 2) / 2.0)))
    x, w = roots_legendre(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    xi = u.ravel()
    eta = ((1.0 - u) * v).ravel()
    weights = (wu * wv * (1.0 - u)).ravel()
    return np.stack([xi, eta], axis=1), weights


@lru_cache(maxsize=None)
def triangle_rule(degree: int = 6) -> Tuple[np.ndarray, np.ndarray]:
    """Points (xi, eta) and weights on the reference triangle; weights sum to 1/2"""
    if degree < 1:
        raise ValueError(f"Quadrature degree must be at least 1, got {degree}")
    if degree == 6:
        points, weights = _degree6_rule()
    else:
        points, weights = _collapsed_gauss_rule(degree)
    points.setflags(write=False)
    weights.setflags(write=False)
    return points, weights


def subdivide_rule(points: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Copy a reference rule onto the 4 children of a midpoint subdivision"""
    children = (
        (np.array([0.0, 0.0]), np.array([0.5, 0.0]), np.array([0.0, 0.5])),
        (np.array([0.5, 0.0]), np.array([1.0, 0.0]), np.array([0.5, 0.5])),
        (np.array([0.0, 0.5]), np.array([0.5, 0.5]), np.array([0.0, 1.0])),
        (np.array([0.5, 0.5]), np.array([0.0, 0.5]), np.array([0.5, 0.0])),
    )
    mapped = [
        p0 + points[:, :1] * (p1 - p0) + points[:, 1:] * (p2 - p0)
        for p0, p1, p2 in children
    ]
    return np.concatenate(mapped), np.tile(weights / 4.0, 4)


def map_rule(origins, edge_u, edge_v, areas, points, weights):
    """Physical points (N, Q, 3) and weights (N, Q) of a reference rule on N triangles"""
    physical = (
        origins[:, None, :]
        + points[None, :, :1] * edge_u[:, None, :]
        + points[None, :, 1:] * edge_v[:, None, :]
    )
    return physical, (2.0 * areas)[:, None] * weights[None, :]


@dataclass(frozen=True)
class QuadratureRule:
    """Element quadrature settings

    degree selects the reference-triangle rule (degree 6 is the 12-point
    symmetric rule). Element pairs closer than near_field_threshold element
    diameters are integrated on one level of 4-way subdivision. Self-terms use
    a polar rule with singular_radial x singular_angular points per sub-triangle.
    """

    degree: int = 6
    near_field_threshold: float = 2.0
    singular_radial: int = 16
    singular_angular: int = 16

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError(f"degree must be at least 1, got {self.degree}")
        if self.near_field_threshold < 0:
            raise ValueError("near_field_threshold must be non-negative")
        if self.singular_radial < 1 or self.singular_angular < 1:
            raise ValueError("singular rule needs at least one point per direction")

    @property
    def points(self) -> np.ndarray:
        return triangle_rule(self.degree)[0]

    @property
    def weights(self) -> np.ndarray:
        return triangle_rule(self.degree)[1]

    def refined(self) -> Tuple[np.ndarray, np.ndarray]:
        return subdivide_rule(*triangle_rule(self.degree))

    @property
    def num_points(self) -> int:
        return len(self.weights)

    def to_dict(self):
        return {
            "degree": self.degree,
            "near_field_threshold": self.near_field_threshold,
            "singular_points": [self.singular_radial, self.singular_angular],
        }


@lru_cache(maxsize=None)
def _unit_gauss(n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def polar_self_rule(
    centers: np.ndarray,
    vertices: np.ndarray,
    radial: int = 16,
    angular: int = 16,
) -> Tuple[np.ndarray, np.ndarray]:
    """Polar rule about points inside one triangle for integrands F(R)/R

    The triangle is split into three sub-triangles meeting at each center b.
    On the sub-triangle (b, P, Q) with h the distance from b to the edge line,
    the edge point at signed offset t = h sinh(z) from the foot of the
    perpendicular is reached along a ray of length h cosh(z), and
    x = b + u (edge point - b) turns the integral of F(R)/R into
    h times the integral of F(u h cosh(z)) over u in [0, 1] and z.
    Gauss-Legendre in u and z then integrates F = 1 exactly.
    Returns radii R_k and weights so that the integral of F(|x - b|)/|x - b|
    over the triangle is sum(weights * F(radii)). Shapes are (P, 3*radial*angular).
    """
    centers = np.atleast_2d(centers)
    u, wu = _unit_gauss(radial)
    v, wv = _unit_gauss(angular)
    radii = []
    weights = []
    for k in range(3):
        p = vertices[k]
        q = vertices[(k + 1) % 3]
        edge = float(np.linalg.norm(q - p))
        direction = (q - p) / edge
        base = p[None, :] - centers
        h = np.linalg.norm(np.cross(base, direction[None, :]), axis=1)
        flat = h <= 1e-12 * edge
        h_safe = np.where(flat, 1.0, h)
        t1 = base @ direction
        t2 = t1 + edge
        z1 = np.arcsinh(t1 / h_safe)
        z2 = np.arcsinh(t2 / h_safe)
        z = z1[:, None] + v[None, :] * (z2 - z1)[:, None]
        ray = h_safe[:, None] * np.cosh(z)
        r = u[None, :, None] * ray[:, None, :]
        span = np.where(flat, 0.0, (z2 - z1) * h)
        w = (wu[:, None] * wv[None, :])[None] * span[:, None, None]
        r = np.where(flat[:, None, None], 0.0, r)
        radii.append(r.reshape(len(centers), -1))
        weights.append(w.reshape(len(centers), -1))
    return np.concatenate(radii, axis=1), np.concatenate(weights, axis=1)
