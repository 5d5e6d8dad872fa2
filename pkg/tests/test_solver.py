"""
Tests for roomstate state-equation solvers and state-space diagnostics
"""

import logging

import numpy as np
import pytest

from roomstate.assembly import OperatorSet, assemble_operator_set
from roomstate.geometry import Scene, make_shoebox
from roomstate.kernels import LaplacePoint
from roomstate.solver import (
    MAX_DIAGNOSTIC_ORDER,
    DivergenceError,
    SolveError,
    controllability_matrix,
    default_diagnostic_order,
    markov_parameters,
    observability_matrix,
    sigma_min,
    solve_direct,
    solve_neumann,
    spectral_radius,
)

S = LaplacePoint.from_frequency(100.0)


def normal_operators(eigenvalues, receivers=2, seed=3):
    """Operator set whose A is unitarily similar to diag(eigenvalues)"""
    rng = np.random.default_rng(seed)
    n = len(eigenvalues)
    q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    A = q @ np.diag(eigenvalues) @ q.conj().T
    B = rng.normal(size=(n, 1)) + 1j * rng.normal(size=(n, 1))
    C = rng.normal(size=(receivers, n)) + 1j * rng.normal(size=(receivers, n))
    D = rng.normal(size=(receivers, 1)) + 0j
    return OperatorSet(S, A, B, C, D)


@pytest.fixture
def contraction():
    return normal_operators([0.5, 0.3, -0.2, 0.1j, 0.05])


class TestDirectSolve:
    """Test the LU solve"""

    def test_residual_and_pressure(self, contraction):
        solution = solve_direct(contraction, x=2.0)
        assert solution.method == "direct"
        assert solution.residual_norm < 1e-10
        assert not solution.near_singular
        system = np.eye(5) - contraction.A
        expected_q = np.linalg.solve(system, contraction.B[:, 0] * 2.0)
        np.testing.assert_allclose(solution.q, expected_q, rtol=1e-12)
        expected_p = contraction.C @ expected_q + contraction.D[:, 0] * 2.0
        np.testing.assert_allclose(solution.p, expected_p, rtol=1e-12)

    def test_condition_estimate(self, contraction):
        solution = solve_direct(contraction)
        assert 0.5 <= solution.condition < 20.0

    def test_near_singular_is_flagged(self, caplog):
        ops = normal_operators([1.0 - 1e-14, 0.5, 0.2])
        with caplog.at_level(logging.WARNING, logger="roomstate.solver"):
            solution = solve_direct(ops)
        assert solution.near_singular
        assert solution.condition > 1e12
        assert "near-singular" in caplog.text

    def test_exactly_singular(self):
        ones = np.ones((3, 1))
        ops = OperatorSet(S, np.eye(3, dtype=complex), ones, ones.T, np.ones((1, 1)))
        with pytest.raises(SolveError, match="singular"):
            solve_direct(ops)

    def test_zero_forcing(self, contraction):
        solution = solve_direct(contraction, x=0.0)
        assert solution.residual_norm == 0.0
        np.testing.assert_array_equal(solution.p, 0.0)


class TestNeumannSeries:
    """Test the truncated Neumann series"""

    @pytest.mark.parametrize("order", [5, 10, 20, 40])
    def test_truncation_bound(self, contraction, order):
        direct = solve_direct(contraction)
        radius = spectral_radius(contraction.A)
        assert radius.converged
        solution, _ = solve_neumann(contraction, order=order)
        error = np.linalg.norm(solution.p - direct.p) / np.linalg.norm(direct.p)
        assert error <= 10 * radius.estimate ** (order + 1) + 1e-14
        assert solution.method == f"neumann({order})"

    def test_order_zero(self, contraction):
        solution, decomposition = solve_neumann(contraction, order=0)
        expected = contraction.D[:, 0] + (contraction.C @ contraction.B)[:, 0]
        np.testing.assert_array_equal(solution.p, expected)
        assert decomposition.max_order == 0

    def test_decomposition_is_exact(self, contraction):
        """Summing the terms in order reproduces p bitwise"""
        solution, decomposition = solve_neumann(contraction, x=0.5, order=12)
        assert len(decomposition.terms) == 14
        assert decomposition.max_order == 12
        total = decomposition.terms[0]
        for term in decomposition.terms[1:]:
            total = total + term
        np.testing.assert_array_equal(total, solution.p)
        np.testing.assert_array_equal(decomposition.cumulative[-1], solution.p)

    def test_direct_term_first(self, contraction):
        _, decomposition = solve_neumann(contraction, x=3.0, order=2)
        np.testing.assert_array_equal(decomposition.terms[0], contraction.D[:, 0] * 3.0)

    def test_divergence(self):
        ops = normal_operators([1.5, 1.4, 1.3])
        with pytest.raises(DivergenceError) as excinfo:
            solve_neumann(ops, order=40)
        assert excinfo.value.order == 5
        assert excinfo.value.spectral_radius == pytest.approx(1.5, rel=1e-4)
        assert "diverges" in str(excinfo.value)

    def test_divergence_not_aborted(self):
        ops = normal_operators([1.5, 1.4, 1.3])
        solution, decomposition = solve_neumann(
            ops, order=10, abort_on_divergence=False
        )
        assert decomposition.max_order == 10
        assert solution.residual_norm > 1.0

    def test_negative_order(self, contraction):
        with pytest.raises(ValueError):
            solve_neumann(contraction, order=-1)


class TestSpectralQuantities:
    """Test spectral radius and sigma_min"""

    def test_known_radius(self, contraction):
        radius = spectral_radius(contraction.A)
        assert radius.converged
        assert radius.estimate == pytest.approx(0.5, rel=1e-5)

    def test_zero_matrix(self):
        radius = spectral_radius(np.zeros((4, 4)))
        assert radius.estimate == 0.0
        assert radius.converged

    def test_not_converged(self, contraction, caplog):
        with caplog.at_level(logging.WARNING, logger="roomstate.solver"):
            radius = spectral_radius(contraction.A, max_iters=1)
        assert not radius.converged
        assert radius.iterations == 1
        assert "did not converge" in caplog.text

    def test_non_square(self):
        with pytest.raises(ValueError, match="square"):
            spectral_radius(np.zeros((2, 3)))

    def test_sigma_min(self, contraction):
        assert sigma_min(contraction) == pytest.approx(0.5, rel=1e-12)


class TestStateSpaceIdentities:
    """Test Markov parameters and the stacked diagnostic matrices"""

    def test_first_markov_parameter(self, contraction):
        markov = markov_parameters(contraction, order=4)
        assert len(markov) == 4
        np.testing.assert_array_equal(markov[0], contraction.C @ contraction.B)

    def test_markov_sum_matches_neumann(self, contraction):
        """D x plus the first K Markov parameters equals neumann(K - 1) bitwise"""
        order = 9
        x = 1.0
        markov = markov_parameters(contraction, order=order)
        solution, _ = solve_neumann(contraction, x=x, order=order - 1)
        total = contraction.D[:, 0] * x
        for parameter in markov:
            total = total + parameter[:, 0] * x
        np.testing.assert_array_equal(total, solution.p)

    def test_observability_blocks(self, contraction):
        order = 5
        report = observability_matrix(contraction, order=order)
        m = contraction.M
        assert report.matrix.shape == (order * m, contraction.N)
        markov = markov_parameters(contraction, order=order)
        for k in range(order):
            block = report.matrix[k * m : (k + 1) * m]
            np.testing.assert_allclose(
                block @ contraction.B, markov[k], rtol=1e-13, atol=1e-13
            )
        assert report.rank == contraction.N

    def test_controllability_columns(self, contraction):
        order = 5
        report = controllability_matrix(contraction, order=order)
        assert report.matrix.shape == (contraction.N, order)
        markov = markov_parameters(contraction, order=order)
        for k in range(order):
            np.testing.assert_allclose(
                contraction.C @ report.matrix[:, k : k + 1],
                markov[k],
                rtol=1e-13,
                atol=1e-13,
            )
        assert report.rank == 5
        assert np.all(np.diff(report.singular_values) <= 0)

    def test_rank_deficient(self):
        """A single eigen-direction cannot be left by the Krylov sequence"""
        ops = normal_operators([0.5, 0.3, 0.1])
        _, eigvecs = np.linalg.eig(ops.A)
        ops = OperatorSet(S, ops.A, eigvecs[:, :1], ops.C, ops.D)
        assert controllability_matrix(ops, order=3).rank == 1

    def test_default_order(self, contraction):
        assert default_diagnostic_order(contraction) == 5
        n = 300
        A, B = np.zeros((n, n)), np.zeros((n, 1))
        big = OperatorSet(S, A, B, B.T, np.zeros((1, 1)))
        assert default_diagnostic_order(big) == MAX_DIAGNOSTIC_ORDER

    @pytest.mark.parametrize(
        "build", [markov_parameters, observability_matrix, controllability_matrix]
    )
    @pytest.mark.parametrize("order", [0, -2])
    def test_invalid_order(self, contraction, build, order):
        """An explicit order below 1 is rejected, never replaced by the default"""
        with pytest.raises(ValueError, match="at least 1"):
            build(contraction, order=order)

    def test_none_selects_default(self, contraction):
        assert len(markov_parameters(contraction, order=None)) == 5
        assert controllability_matrix(contraction).order == 5


class TestRoomOperators:
    """Cross-method checks on assembled boundary operators"""

    @pytest.mark.parametrize("frequency", [60.0, 100.0])
    def test_absorbing_plate_direct_and_neumann_agree(self, absorbing_plate_scene, frequency):
        s = LaplacePoint.from_frequency(frequency)
        ops = assemble_operator_set(absorbing_plate_scene, s, workers=1)
        radius = spectral_radius(ops.A)
        assert radius.converged
        assert radius.estimate < 0.9
        direct = solve_direct(ops)
        assert direct.residual_norm < 1e-10
        solution, _ = solve_neumann(ops, order=40)
        error = np.linalg.norm(solution.p - direct.p) / np.linalg.norm(direct.p)
        assert error <= 10 * radius.estimate ** 41 + 1e-10

    def test_rigid_plate_needs_no_feedback(self, plate_scene):
        """Coplanar rigid elements do not scatter onto each other, so A = 0"""
        ops = assemble_operator_set(plate_scene, S, workers=1)
        np.testing.assert_array_equal(ops.A, 0.0)
        assert spectral_radius(ops.A).estimate == 0.0
        solution, _ = solve_neumann(ops, order=0)
        np.testing.assert_allclose(solution.p, solve_direct(ops).p, rtol=1e-12)

    def test_closed_absorbing_room_diverges(self, medium):
        """A closed Z = rho c room keeps an eigenvalue of modulus above one"""
        cube = make_shoebox((1.0, 1.0, 1.0), 0.5, medium.characteristic_impedance)
        scene = Scene(cube, medium, [0.3, 0.4, 0.45], [[0.7, 0.6, 0.55]])
        ops = assemble_operator_set(scene, S, workers=1)
        radius = spectral_radius(ops.A)
        assert radius.converged
        assert radius.estimate > 1.0
        with pytest.raises(DivergenceError) as excinfo:
            solve_neumann(ops, order=60)
        assert excinfo.value.spectral_radius > 1.0
        assert solve_direct(ops).residual_norm < 1e-10
