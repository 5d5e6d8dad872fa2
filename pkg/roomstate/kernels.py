"""
Boundary integral kernels for roomstate

Pointwise quantities of the Laplace-domain boundary integral equation:
distances, normal-direction cosines, the g/h coefficients, the propagation
factor exp(-sR/c) and the incident-field terms. Normals point into the room.
"""

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .geometry import Medium

FOUR_PI = 4.0 * math.pi
TWO_PI = 2.0 * math.pi


class SingularEvaluationError(ValueError):
    """Raised when a kernel is evaluated at coincident points"""

    pass


@dataclass(frozen=True)
class LaplacePoint:
    """Complex frequency s = sigma + j*omega"""

    sigma: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and math.isfinite(self.omega)):
            raise ValueError(f"Laplace point must be finite, got {self.sigma}+j{self.omega}")

    @classmethod
    def from_frequency(cls, frequency: float, sigma: float = 0.0) -> "LaplacePoint":
        return cls(sigma=float(sigma), omega=TWO_PI * float(frequency))

    @property
    def value(self) -> complex:
        return complex(self.sigma, self.omega)

    @property
    def frequency(self) -> float:
        return self.omega / TWO_PI

    def conjugate(self) -> "LaplacePoint":
        return LaplacePoint(self.sigma, -self.omega)

    def __str__(self) -> str:
        return f"{self.sigma:g}{self.omega:+g}j"


@dataclass(frozen=True)
class KernelPair:
    """Coefficients of the time derivative (g) and the value (h) of boundary pressure"""

    g: float
    h: float


def _as_s(s: Any) -> complex:
    return s.value if isinstance(s, LaplacePoint) else complex(s)


def admittance(impedance: Any) -> np.ndarray:
    """1/Z elementwise, exactly zero for infinite impedance"""
    impedance = np.asarray(impedance, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(np.isinf(impedance), 0.0, 1.0 / impedance)


def distance(a: Any, b: Any) -> float:
    """Euclidean distance between two points"""
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def cos_theta(obs: Any, src_on_boundary: Any, normal: Any) -> float:
    """Cosine between (obs - src) and the boundary normal at src"""
    diff = np.asarray(obs, dtype=float) - np.asarray(src_on_boundary, dtype=float)
    radius = float(np.linalg.norm(diff))
    if radius == 0.0:
        raise SingularEvaluationError(
            "cos_theta is undefined at coincident points; use the singular quadrature path"
        )
    value = float(diff @ np.asarray(normal, dtype=float)) / radius
    return min(1.0, max(-1.0, value))


def gh_arrays(radius, cosine, admittance_values, medium: Medium, weight: float):
    """Vectorized g and h coefficients; radius must be strictly positive"""
    c = medium.sound_speed
    rho = medium.density
    g = (cosine / (c * radius) - rho * admittance_values / radius) / weight
    h = cosine / (weight * radius * radius)
    return g, h


def gh_coefficients(
    obs: Any,
    beta: Any,
    normal: Any,
    impedance: float,
    medium: Medium,
    solid_angle: float,
) -> KernelPair:
    """g and h coefficients for an observation point and a boundary point

    g = (cos(theta)/(c R) - rho/(R Z)) / w and h = cos(theta)/(w R^2), with
    w = 4*pi for interior and 2*pi for boundary observation points.
    """
    if solid_angle <= 0:
        raise ValueError(f"solid_angle must be positive, got {solid_angle}")
    if not (impedance > 0):
        raise ValueError(f"impedance must be positive or infinite, got {impedance}")
    radius = distance(obs, beta)
    if radius == 0.0:
        raise SingularEvaluationError("g/h coefficients are singular at R = 0")
    cosine = cos_theta(obs, beta, normal)
    y = float(admittance(impedance))
    g, h = gh_arrays(radius, cosine, y, medium, solid_angle)
    return KernelPair(float(g), float(h))


def propagation(s: Any, radius: Any, medium: Medium) -> Any:
    """Delay factor exp(-s R / c)"""
    return np.exp(-_as_s(s) * np.asarray(radius, dtype=float) / medium.sound_speed)


def laplace_kernel(s: Any, radius, cosine, admittance_values, medium: Medium, weight: float):
    """(s g + h) exp(-s R / c) evaluated elementwise"""
    s = _as_s(s)
    g, h = gh_arrays(radius, cosine, admittance_values, medium, weight)
    return (s * g + h) * np.exp(-s * radius / medium.sound_speed)


def incident_boundary(b: Any, u: Any, s: Any, medium: Medium) -> complex:
    """Incident term on the boundary, (2/R) exp(-s R / c)"""
    radius = distance(b, u)
    if radius == 0.0:
        raise SingularEvaluationError("Source coincides with the boundary point")
    return complex(2.0 / radius * propagation(s, radius, medium))


def incident_receiver(r: Any, u: Any, s: Any, medium: Medium) -> complex:
    """Direct path to a receiver, (1/R) exp(-s R / c)"""
    radius = distance(r, u)
    if radius == 0.0:
        raise SingularEvaluationError("Source coincides with the receiver")
    return complex(1.0 / radius * propagation(s, radius, medium))
