"""
Long acceptance runs for roomstate

Every test here carries the slow marker and is deselected by the default
pytest options. Run them with ``pytest -m slow``.
"""

import numpy as np
import pytest

from roomstate.assembly import GeometryCache, assemble_operator_set
from roomstate.config import RunConfig
from roomstate.geometry import Scene, make_plate, make_shoebox, validate_scene
from roomstate.kernels import LaplacePoint
from roomstate.oracle import monte_carlo_entry, rigid_box_modes
from roomstate.response import (
    FrequencyGrid,
    SolverOptions,
    find_modal_dips,
    make_assembler,
    sweep,
    sweep_frequencies,
    to_impulse_response,
)
from roomstate.simulation import RoomSimulation
from roomstate.solver import solve_direct, solve_neumann, spectral_radius

pytestmark = pytest.mark.slow

BOX = (2.0, 1.5, 1.0)


class TestModalDetection:
    """Rigid-box resonances show up as dips of sigma_min(I - A)"""

    def test_lowest_mode(self, medium):
        mesh = make_shoebox(BOX, 0.25)
        assert len(mesh) == 416
        scene = Scene(mesh, medium, [0.6, 0.5, 0.45], [[1.4, 0.9, 0.55]])
        frequencies = np.arange(60.0, 121.0, 1.0)
        tf = sweep_frequencies(scene, frequencies, SolverOptions(sigma_min=True))

        sigmas = [d.sigma_min for d in tf.diagnostics]
        dips = find_modal_dips(frequencies, sigmas)
        modes = [mode.frequency for mode in rigid_box_modes(BOX, medium, 121.0)]
        assert modes[0] == pytest.approx(85.75)
        assert dips
        assert abs(dips[0].frequency - modes[0]) <= 0.05 * modes[0]
        for dip in dips:
            nearest = min(modes, key=lambda f: abs(f - dip.frequency))
            assert abs(dip.frequency - nearest) <= 0.05 * nearest


class TestNeumannConvergence:
    """Truncated series error follows the spectral radius"""

    def test_absorbing_plate(self, medium):
        plate = make_plate(0.5, 0.5, 0.125, medium.characteristic_impedance)
        scene = Scene(plate, medium, [0.05, -0.1, 0.3], [[-0.1, 0.1, 0.4]])
        checked = 0
        for frequency in (50.0, 100.0, 200.0, 300.0, 400.0):
            ops = assemble_operator_set(scene, LaplacePoint.from_frequency(frequency))
            radius = spectral_radius(ops.A)
            if not radius.converged or radius.estimate >= 0.9:
                continue
            checked += 1
            exact = solve_direct(ops).p
            for order in (5, 10, 20, 40):
                solution, _ = solve_neumann(ops, order=order)
                error = np.linalg.norm(solution.p - exact) / np.linalg.norm(exact)
                bound = 10 * radius.estimate ** (order + 1) + 1e-12
                assert error <= bound, (frequency, order)
        assert checked > 0


class TestReciprocity:
    """Exchanging source and receiver leaves the transfer function unchanged"""

    def test_rigid_shoebox(self, medium):
        mesh = make_shoebox(BOX, 0.25)
        scene = Scene(mesh, medium, [0.6, 0.5, 0.45], [[1.4, 0.9, 0.55]])
        # Six elements per wavelength at 0.25 m edges holds up to about 228 Hz
        frequencies = [45.0, 65.0, 100.0, 125.0, 155.0]
        options = SolverOptions()
        forward = sweep_frequencies(scene, frequencies, options).values[0]
        backward = sweep_frequencies(scene.swapped(), frequencies, options).values[0]
        np.testing.assert_array_less(np.abs(forward - backward) / np.abs(forward), 0.01)


class TestMeshRefinement:
    """Halving the element edge moves the receiver pressure by less each time"""

    def test_pressure_settles(self, medium):
        impedance = 4.0 * medium.characteristic_impedance
        pressures = []
        for edge in (0.5, 0.25, 0.125):
            mesh = make_shoebox(BOX, edge, impedance)
            scene = Scene(mesh, medium, [0.6, 0.5, 0.45], [[1.4, 0.9, 0.55]])
            # 60 Hz keeps the coarsest mesh at six elements per wavelength
            assert validate_scene(scene, 60.0).elements_per_wavelength >= 6.0
            tf = sweep_frequencies(scene, [60.0], SolverOptions())
            pressures.append(tf.values[0, 0])
        first = abs(pressures[1] - pressures[0])
        second = abs(pressures[2] - pressures[1])
        assert second < first


class TestSpecularAsymptotics:
    """First-order plate reflection against the mirror image"""

    def test_large_rigid_plate(self, medium):
        plate = make_plate(10.0, 10.0, 1.0 / 6.0)  # six elements per wavelength at 343 Hz
        scene = Scene(plate, medium, [0.0, 0.0, 1.0], [[0.0, 0.0, 2.0]])
        config = RunConfig.from_dict(
            {"grid": {"sample_rate": 2000.0, "nfft": 512}, "solver": {"max_frequency": 400.0}}
        )
        report = RoomSimulation(scene, config).compare_ism(orders=1, band=(200.0, 343.0))
        assert report.reference == "mirror"
        summary = report.summary()
        assert summary["bins_compared"] > 30
        assert summary["max_reflected_error"] < 0.10
        assert summary["max_phase_error"] < 0.2


class TestIsmArrivals:
    """First-order arrivals of the boundary-integral response line up with images"""

    def test_first_order_peaks(self, medium):
        mesh = make_shoebox(BOX, 0.08)
        scene = Scene(mesh, medium, [0.6, 0.5, 0.45], [[1.4, 0.9, 0.55]])
        assert validate_scene(scene, 500.0).elements_per_wavelength >= 6.0
        config = RunConfig.from_dict(
            {"grid": {"sample_rate": 2000.0, "nfft": 4096}, "solver": {"max_frequency": 500.0}}
        )
        report = RoomSimulation(scene, config).compare_ism(orders=1)
        assert len(report.arrivals) == 6
        for arrival in report.arrivals:
            assert abs(arrival["delta_samples"]) <= 2
            assert abs(arrival["amplitude_ratio"] - 1.0) <= 0.2


class TestQuadratureOracle:
    """Gauss-assembled entries agree with brute-force integration"""

    @pytest.mark.parametrize("frequency", [0.0, 100.0])
    def test_well_separated_pairs(self, medium, frequency):
        mesh = make_shoebox((1.0, 1.0, 1.0), 0.25, 800.0)
        scene = Scene(mesh, medium, [0.3, 0.4, 0.45], [[0.7, 0.6, 0.55]])
        s = LaplacePoint.from_frequency(frequency) if frequency else 0.0
        A = assemble_operator_set(scene, s).A

        near = set(zip(*(idx.tolist() for idx in GeometryCache(mesh, medium).near_pairs)))
        rng = np.random.default_rng(7)
        pairs = []
        while len(pairs) < 20:
            m, n = (int(i) for i in rng.integers(0, len(mesh), size=2))
            if m != n and (m, n) not in near and (n, m) not in near:
                pairs.append((m, n))

        for m, n in pairs:
            estimate = monte_carlo_entry(
                mesh, m, other=n, s=s, medium=medium, sample_count=10_000_000, workers=4
            )
            assert abs(A[m, n] - estimate.value) < 3 * estimate.standard_error + 1e-12, (m, n)


class TestDecay:
    """Energy in an absorbing room only falls after the direct sound"""

    def test_window_energy(self, medium):
        mesh = make_shoebox(BOX, 0.25, medium.characteristic_impedance)
        scene = Scene(mesh, medium, [0.6, 0.5, 0.45], [[1.4, 0.9, 0.55]])
        grid = FrequencyGrid(2000.0, 1024)
        options = SolverOptions(max_frequency=300.0)
        ir = to_impulse_response(sweep(scene, grid, options, make_assembler(scene, options)))

        trace = ir.samples[0]
        start = int(np.argmax(np.abs(trace))) + 5
        span = int(0.020 * ir.sample_rate)
        energies = [
            float(np.sum(trace[i : i + span] ** 2))
            for i in range(start, len(trace) // 2 - span, span)
        ]
        floor = 1e-8 * energies[0]
        for previous, current in zip(energies, energies[1:]):
            if previous < floor:
                break
            assert current <= 1.05 * previous
