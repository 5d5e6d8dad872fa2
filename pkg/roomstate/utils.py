"""
Utility functions for roomstate
"""

import json
import tempfile
from pathlib import Path

from .geometry import make_shoebox, save_mesh


def create_example_scene(
    lengths=(2.0, 1.5, 1.0),
    edge: float = 0.5,
    impedance="rigid",
    max_frequency: float = 150.0,
):
    """Create a temporary ready-to-run shoebox scene for testing and tutorials.

    The directory holds room.mesh, room_impedance.json, scene.json and a run
    configuration run.json that points at the scene.

    Returns:
        str: Path to the created scene directory
    """
    temp_dir = tempfile.mkdtemp(prefix="roomstate_example_")
    scene_path = Path(temp_dir)

    mesh = make_shoebox(lengths, edge, impedance)
    impedance_map = save_mesh(mesh, scene_path / "room.mesh")
    with open(scene_path / "room_impedance.json", "w") as f:
        json.dump(impedance_map, f, indent=2)

    lx, ly, lz = (float(v) for v in lengths)
    scene = {
        "mesh": "room.mesh",
        "impedance": "room_impedance.json",
        "medium": {"c": 343.0, "rho": 1.21},
        "source": [0.3 * lx, 0.35 * ly, 0.45 * lz],
        "receivers": [[0.7 * lx, 0.6 * ly, 0.55 * lz]],
    }
    with open(scene_path / "scene.json", "w") as f:
        json.dump(scene, f, indent=2)

    run = {
        "scene": "scene.json",
        "grid": {"sample_rate": 2000.0, "nfft": 512},
        "solver": {"method": "direct", "max_frequency": max_frequency},
        "output": {"directory": str(scene_path / "output"), "formats": ["csv"]},
    }
    with open(scene_path / "run.json", "w") as f:
        json.dump(run, f, indent=2)

    return str(scene_path)
