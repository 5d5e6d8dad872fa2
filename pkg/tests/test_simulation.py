"""
Tests for the roomstate simulation API
"""

from pathlib import Path

import numpy as np
import pytest

from roomstate import RoomSimulation, create_simulation
from roomstate.config import RunConfig
from roomstate.geometry import Scene, make_plate, make_shoebox
from roomstate.response import FrequencyGrid
from roomstate.simulation import ComparisonSetupError
from roomstate.solver import spectral_radius


def low_band_config(max_frequency=150.0, **solver):
    solver = dict({"max_frequency": max_frequency, "workers": 1}, **solver)
    return RunConfig.from_dict({"grid": {"sample_rate": 2000.0, "nfft": 256}, "solver": solver})


@pytest.fixture
def shoebox_simulation(shoebox, medium):
    scene = Scene(shoebox, medium, [0.6, 0.5, 0.45], [[1.4, 0.9, 0.55]])
    return RoomSimulation(scene, low_band_config())


class TestRoomSimulation:
    """Test the high-level simulation object"""

    def test_from_scene_file(self, example_scene_dir):
        sim = create_simulation(Path(example_scene_dir) / "scene.json")
        assert isinstance(sim, RoomSimulation)
        assert len(sim.scene.mesh) == 104
        assert sim.scene.mesh.shoebox == pytest.approx((2.0, 1.5, 1.0))
        assert sim.grid().nfft == 2048

    def test_validate(self, cube_scene):
        sim = RoomSimulation(cube_scene, low_band_config(100.0))
        report = sim.validate()
        assert report.max_frequency == 100.0
        assert report.ok
        assert report.closed

    def test_assembler_is_reused(self, cube_scene):
        sim = RoomSimulation(cube_scene, low_band_config())
        assert sim.assembler is sim.assembler

    def test_solve_methods(self, absorbing_plate_scene):
        sim = RoomSimulation(absorbing_plate_scene, low_band_config())
        direct = sim.solve(100.0)
        neumann = sim.solve(100.0, method="neumann", order=60)
        assert direct.method == "direct"
        assert neumann.method == "neumann(60)"
        radius = spectral_radius(sim.operators(100.0).A).estimate
        assert radius < 0.9
        error = np.linalg.norm(neumann.p - direct.p) / np.linalg.norm(direct.p)
        assert error <= 10 * radius ** 61 + 1e-12
        with pytest.raises(ValueError, match="Unknown solver method"):
            sim.solve(100.0, method="svd")

    def test_impulse_response(self, cube_scene):
        sim = RoomSimulation(cube_scene, low_band_config())
        tf, ir = sim.impulse_response()
        assert tf.values.shape == (1, 129)
        assert ir.samples.shape == (1, 256)
        assert ir.metadata["window"] == "raised-cosine"
        assert ir.metadata["imag_energy_ratio"] <= 1e-8

    def test_to_dataframe(self, cube_scene):
        sim = RoomSimulation(cube_scene, low_band_config())
        tf = sim.transfer_function(FrequencyGrid(2000.0, 32))
        frame = sim.to_dataframe(tf)
        assert list(frame.columns) == ["freq_hz", "re_0", "im_0"]
        assert len(frame) == 17


class TestDiagnostics:
    """Test the state-space identity checks"""

    def test_identities_pass(self, absorbing_scene):
        sim = RoomSimulation(absorbing_scene, low_band_config())
        result = sim.diagnostics(120.0, order=8)
        assert [check["status"] for check in result.checks] == ["PASS"] * 4
        assert result.passed
        assert len(result.markov) == 8
        assert result.observability.matrix.shape == (8, 48)
        assert result.controllability.matrix.shape == (48, 8)
        assert 0 < result.spectral_radius
        assert result.sigma_min > 0

    def test_default_order(self, cube_scene):
        result = RoomSimulation(cube_scene, low_band_config()).diagnostics(60.0)
        assert result.controllability.order == 48

    @pytest.mark.parametrize("order", [0, -1])
    def test_explicit_order_is_honoured(self, cube_scene, order):
        sim = RoomSimulation(cube_scene, low_band_config())
        with pytest.raises(ValueError, match="at least 1"):
            sim.diagnostics(60.0, order=order)


class TestComparisons:
    """Test comparisons against the image-source and mirror references"""

    def test_shoebox_first_order(self, shoebox_simulation):
        report = shoebox_simulation.compare_ism(orders=1)
        assert report.reference == "ism"
        assert report.computed.metadata["method"] == "orders(1)"
        frequencies = report.frequencies
        expected_mask = (frequencies > 0) & (frequencies <= 150.0)
        np.testing.assert_array_equal(report.band_mask, expected_mask)
        assert report.reflected_error is not None
        assert len(report.arrivals) == 6
        assert {row["order"] for row in report.arrivals} == {1}
        summary = report.summary()
        assert summary["bins_compared"] == int(expected_mask.sum())
        assert "max_arrival_delta_samples" in summary

    def test_band_restriction(self, shoebox_simulation):
        report = shoebox_simulation.compare_ism(orders=1, band=(50.0, 100.0))
        assert report.frequencies[report.band_mask].min() >= 50.0
        assert report.frequencies[report.band_mask].max() <= 100.0

    def test_full_solution_against_direct_path(self, shoebox_simulation):
        """ism_order 0 compares the full solve with the free field only"""
        report = shoebox_simulation.compare_ism(ism_order=0)
        assert report.reflected_error is None
        assert report.arrivals == []
        assert report.computed.metadata["method"] == "direct"

    def test_reflection_coefficients_from_walls(self, medium):
        walls = [1e9] + ["rigid"] * 5
        mesh = make_shoebox((2.0, 1.5, 1.0), 0.5, walls)
        scene = Scene(mesh, medium, [0.6, 0.5, 0.45], [[1.4, 0.9, 0.55]])
        sim = RoomSimulation(scene, low_band_config())
        coefficients = sim._face_coefficients()
        assert coefficients[1:] == [1.0] * 5
        assert coefficients[0] == pytest.approx(1.0, abs=1e-3)

    def test_plate_mirror(self, plate_scene):
        sim = RoomSimulation(plate_scene, low_band_config(300.0))
        report = sim.compare_ism(orders=1)
        assert report.reference == "mirror"
        assert report.reference_tf.metadata["grazing"] is False
        assert report.computed_ir is None
        assert np.all(np.isfinite(report.reflected_error[:, report.band_mask]))

    def test_plate_needs_first_order(self, plate_scene):
        sim = RoomSimulation(plate_scene, low_band_config())
        with pytest.raises(ComparisonSetupError, match="orders=1"):
            sim.compare_ism(orders=2)

    def test_plate_must_be_rigid(self, medium):
        plate = make_plate(2.0, 2.0, 0.5, impedance=800.0)
        scene = Scene(plate, medium, [-0.3, 0.0, 0.5], [[0.3, 0.0, 0.5]])
        with pytest.raises(ComparisonSetupError, match="rigid"):
            RoomSimulation(scene, low_band_config()).compare_ism(orders=1)
