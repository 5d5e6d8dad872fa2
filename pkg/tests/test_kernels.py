"""
Tests for roomstate boundary integral kernels
"""

import math

import numpy as np
import pytest

from roomstate.geometry import Medium
from roomstate.kernels import (
    FOUR_PI,
    TWO_PI,
    LaplacePoint,
    SingularEvaluationError,
    admittance,
    cos_theta,
    distance,
    gh_coefficients,
    incident_boundary,
    incident_receiver,
    laplace_kernel,
    propagation,
)


class TestLaplacePoint:
    """Test the complex frequency value object"""

    def test_from_frequency(self):
        s = LaplacePoint.from_frequency(100.0)
        assert s.value == pytest.approx(complex(0.0, 200.0 * math.pi))
        assert s.frequency == pytest.approx(100.0)

    def test_conjugate(self):
        s = LaplacePoint(1.0, 5.0)
        assert s.conjugate().value == complex(1.0, -5.0)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            LaplacePoint(float("nan"), 0.0)


class TestGeometryFactors:
    """Test distances, cosines and admittances"""

    def test_distance(self):
        assert distance([0, 0, 0], [3, 4, 0]) == 5.0

    def test_cos_theta_along_normal(self):
        assert cos_theta([0, 0, 2], [0, 0, 0], [0, 0, 1]) == pytest.approx(1.0)
        assert cos_theta([1, 0, 1], [0, 0, 0], [0, 0, 1]) == pytest.approx(1 / math.sqrt(2))
        assert cos_theta([1, 0, 0], [0, 0, 0], [0, 0, 1]) == 0.0

    def test_cos_theta_coincident(self):
        with pytest.raises(SingularEvaluationError):
            cos_theta([1, 1, 1], [1, 1, 1], [0, 0, 1])

    def test_admittance_rigid_is_zero(self):
        values = admittance([math.inf, 400.0])
        assert values[0] == 0.0
        assert values[1] == pytest.approx(1 / 400.0)


class TestCoefficients:
    """Test the g/h kernel coefficients"""

    def test_rigid_interior(self):
        """Rigid wall: g = cos/(4 pi c R), h = cos/(4 pi R^2)"""
        medium = Medium()
        pair = gh_coefficients([0, 0, 2], [0, 0, 0], [0, 0, 1], math.inf, medium, FOUR_PI)
        assert pair.g == pytest.approx(1.0 / (FOUR_PI * 343.0 * 2.0))
        assert pair.h == pytest.approx(1.0 / (FOUR_PI * 4.0))

    def test_impedance_term(self):
        """Finite impedance subtracts rho/(R Z) from the g numerator"""
        medium = Medium()
        z = 2.0 * medium.characteristic_impedance
        pair = gh_coefficients([0, 0, 1], [0, 0, 0], [0, 0, 1], z, medium, TWO_PI)
        expected = (1.0 / 343.0 - 1.21 / z) / TWO_PI
        assert pair.g == pytest.approx(expected)
        assert pair.h == pytest.approx(1.0 / TWO_PI)

    def test_boundary_weight_doubles_interior(self):
        medium = Medium()
        interior = gh_coefficients([1, 1, 1], [0, 0, 0], [0, 0, 1], 500.0, medium, FOUR_PI)
        boundary = gh_coefficients([1, 1, 1], [0, 0, 0], [0, 0, 1], 500.0, medium, TWO_PI)
        assert boundary.g == pytest.approx(2.0 * interior.g)
        assert boundary.h == pytest.approx(2.0 * interior.h)

    def test_invalid_arguments(self):
        medium = Medium()
        with pytest.raises(ValueError):
            gh_coefficients([0, 0, 1], [0, 0, 0], [0, 0, 1], -5.0, medium, FOUR_PI)
        with pytest.raises(ValueError):
            gh_coefficients([0, 0, 1], [0, 0, 0], [0, 0, 1], 5.0, medium, 0.0)
        with pytest.raises(SingularEvaluationError):
            gh_coefficients([0, 0, 0], [0, 0, 0], [0, 0, 1], 5.0, medium, FOUR_PI)


class TestPropagation:
    """Test delays and incident fields"""

    def test_pure_delay(self):
        medium = Medium()
        s = LaplacePoint.from_frequency(25.0)
        value = propagation(s, 3.43, medium)
        assert abs(value) == pytest.approx(1.0)
        assert np.angle(value) == pytest.approx(-math.pi / 2)

    def test_incident_terms(self):
        medium = Medium()
        s = LaplacePoint.from_frequency(50.0)
        direct = incident_receiver([2, 0, 0], [0, 0, 0], s, medium)
        boundary = incident_boundary([2, 0, 0], [0, 0, 0], s, medium)
        assert boundary == pytest.approx(2.0 * direct)
        assert abs(direct) == pytest.approx(0.5)

    def test_incident_coincident(self):
        with pytest.raises(SingularEvaluationError):
            incident_receiver([1, 1, 1], [1, 1, 1], 1j, Medium())

    def test_conjugate_symmetry(self):
        """K(conj s) = conj K(s) for real geometry"""
        medium = Medium()
        s = LaplacePoint(0.0, 900.0)
        radius = np.array([0.3, 1.7])
        cosine = np.array([0.2, -0.5])
        y = np.array([0.0, 1e-3])
        forward = laplace_kernel(s, radius, cosine, y, medium, TWO_PI)
        backward = laplace_kernel(s.conjugate(), radius, cosine, y, medium, TWO_PI)
        np.testing.assert_allclose(backward, np.conj(forward), rtol=1e-14)

    def test_direct_path_random(self):
        """D = exp(-j omega R / c) / R in magnitude and phase over random distances"""
        medium = Medium()
        rng = np.random.default_rng(11)
        radii = rng.uniform(0.05, 10.0, size=100)
        omegas = rng.uniform(1.0, 2.0 * math.pi * 2000.0, size=100)
        for radius, omega in zip(radii, omegas):
            value = incident_receiver([radius, 0.0, 0.0], [0.0, 0.0, 0.0], 1j * omega, medium)
            assert abs(value) == pytest.approx(1.0 / radius, rel=1e-12)
            phase = -omega * radius / medium.sound_speed
            assert abs(value * radius - np.exp(1j * phase)) < 1e-12


class TestLimits:
    """Test limiting cases of the kernel"""

    def test_rigid_limit(self):
        """A very large impedance matches the rigid kernel"""
        medium = Medium()
        obs, beta, normal = [0.3, 0.2, 1.0], [0.0, 0.0, 0.0], [0, 0, 1]
        rigid = gh_coefficients(obs, beta, normal, math.inf, medium, TWO_PI)
        stiff = gh_coefficients(obs, beta, normal, 1e12, medium, TWO_PI)
        assert stiff.g == pytest.approx(rigid.g, rel=1e-9)
        assert stiff.h == rigid.h
        s = LaplacePoint.from_frequency(250.0)
        radius = np.array([0.7, 2.5])
        cosine = np.array([0.8, -0.9])
        exact = laplace_kernel(s, radius, cosine, np.zeros(2), medium, TWO_PI)
        near = laplace_kernel(s, radius, cosine, np.full(2, 1e-12), medium, TWO_PI)
        np.testing.assert_allclose(near, exact, rtol=1e-9)

    @pytest.mark.parametrize("frequency", [50.0, 150.0, 300.0])
    def test_time_domain_response(self, frequency):
        """g p'(t - R/c) + h p(t - R/c) transforms to the Laplace kernel times P"""
        medium = Medium()
        radius, cosine, y = 0.5, 0.6, 1.0 / 800.0
        delay = radius / medium.sound_speed
        width = 1e-3
        dt = 1e-7
        t = np.arange(-12 * width, delay + 12 * width, dt)
        pulse = np.exp(-0.5 * (t / width) ** 2)
        shifted = np.exp(-0.5 * ((t - delay) / width) ** 2)
        g = (cosine / (medium.sound_speed * radius) - medium.density * y / radius) / FOUR_PI
        h = cosine / (FOUR_PI * radius ** 2)
        response = g * np.gradient(shifted, dt) + h * shifted

        omega = 2.0 * math.pi * frequency
        phasor = np.exp(-1j * omega * t) * dt
        ratio = np.sum(response * phasor) / np.sum(pulse * phasor)
        expected = laplace_kernel(1j * omega, radius, cosine, y, medium, FOUR_PI)
        assert abs(ratio - expected) <= 1e-6 * abs(expected)
