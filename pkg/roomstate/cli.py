"""
Command Line Interface for roomstate

Generates and inspects meshes, sweeps transfer functions, synthesizes room
impulse responses, compares against image-source references and dumps the
state-space diagnostics of a scene.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from scipy.linalg import LinAlgError

from .config import OUTPUT_FORMATS, ConfigError, RunConfig, load_config
from .formatter import ResultFormatter
from .geometry import (
    GeometryError,
    SceneValidationError,
    load_mesh,
    make_shoebox,
    parse_impedance,
    save_mesh,
)
from .kernels import SingularEvaluationError
from .response import (
    SymmetryError,
    find_arrival_peaks,
    find_modal_dips,
    sweep_frequencies,
    to_impulse_response,
)
from .simulation import ComparisonSetupError, RoomSimulation
from .solver import SolveError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_GEOMETRY = 2
EXIT_SOLVE = 3
EXIT_VALIDATION = 4
EXIT_SYMMETRY = 5
EXIT_COMPARISON = 6
EXIT_INTERRUPTED = 130

# Checked in order; subclasses before their bases
ERROR_CATEGORIES = [
    (SceneValidationError, "Validation error", EXIT_VALIDATION),
    (ConfigError, "Configuration error", EXIT_VALIDATION),
    (GeometryError, "Geometry error", EXIT_GEOMETRY),
    (SymmetryError, "Symmetry error", EXIT_SYMMETRY),
    (ComparisonSetupError, "Comparison setup error", EXIT_COMPARISON),
    (SolveError, "Solve error", EXIT_SOLVE),
    (LinAlgError, "Solve error", EXIT_SOLVE),
    (SingularEvaluationError, "Solve error", EXIT_SOLVE),
]


def _vector(text: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected comma-separated numbers, got {text!r}")
    return values


def _point(text: str) -> List[float]:
    values = _vector(text)
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"Expected x,y,z, got {text!r}")
    return values


def _points(text: str) -> List[List[float]]:
    return [_point(part) for part in text.split(";") if part.strip()]


def _band(text: str) -> List[float]:
    values = _vector(text)
    if len(values) != 2 or values[0] > values[1]:
        raise argparse.ArgumentTypeError(f"Expected low,high in Hz, got {text!r}")
    return values


def _frequency_range(text: str) -> np.ndarray:
    """start:stop:step in Hz, stop included"""
    try:
        start, stop, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected start:stop:step, got {text!r}")
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError(f"Empty frequency range {text!r}")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    """Flags shared by every command that runs the solver"""
    parser.add_argument("--config", "-c", help="Run configuration JSON file")
    parser.add_argument("--scene", "-s", help="Scene JSON file (overrides config)")
    parser.add_argument("--source", type=_point, help="Source position x,y,z")
    parser.add_argument(
        "--receivers", type=_points, help="Receiver positions 'x,y,z;x,y,z;...'"
    )
    parser.add_argument("--fs", type=float, help="Sample rate in Hz (default: 2000)")
    parser.add_argument("--nfft", type=int, help="FFT length (default: 2048)")
    parser.add_argument(
        "--method", choices=["direct", "neumann"], help="Solver (default: direct)"
    )
    parser.add_argument(
        "--K", "--order", dest="order", type=int, help="Neumann truncation order"
    )
    parser.add_argument(
        "--quadrature-order", type=int, help="Regular triangle rule degree (default: 6)"
    )
    parser.add_argument(
        "--near-field", type=float, help="Near-field proximity threshold (default: 2.0)"
    )
    parser.add_argument(
        "--singular-points",
        type=int,
        help="Radial and angular points of the self-element rule (default: 16)",
    )
    parser.add_argument(
        "--max-frequency", type=float, help="Band limit in Hz; bins above are zero"
    )
    parser.add_argument(
        "--workers", type=int, help="Worker pool size (default: physical cores)"
    )
    parser.add_argument(
        "--min-clearance", type=float, help="Receiver-to-boundary clearance in metres"
    )
    parser.add_argument("--output-dir", "-o", help="Output directory")
    parser.add_argument(
        "--format",
        choices=OUTPUT_FORMATS,
        action="append",
        help="Output format, repeatable (default: csv)",
    )
    parser.add_argument(
        "--spectral-radius",
        action="store_true",
        default=None,
        help="Record the spectral radius of A per bin",
    )
    parser.add_argument(
        "--sigma-min",
        action="store_true",
        default=None,
        help="Record the smallest singular value of I - A per bin",
    )


def create_parser() -> argparse.ArgumentParser:
    """Create command line argument parser"""
    parser = argparse.ArgumentParser(
        prog="roomstate",
        description="roomstate - Boundary-integral state-space room acoustics",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate a shoebox mesh and print its statistics
  roomstate mesh --shoebox 2,1.5,1 --edge 0.25 --output room.mesh

  # Check a mesh file for orientation problems
  roomstate mesh --inspect room.mesh --impedance-map room_impedance.json

  # Transfer functions on the default grid
  roomstate sweep --scene scene.json --output-dir out

  # Smallest singular value of I - A between 60 and 120 Hz
  roomstate sweep --scene scene.json --frequencies 60:120:1 --sigma-min

  # Truncated Neumann series with spectral radius per bin
  roomstate sweep --scene scene.json --method neumann --K 40

  # Room impulse responses as WAV files
  roomstate rir --config run.json --format wav

  # First reflection order against the image-source model
  roomstate compare-ism --scene scene.json --orders 1

  # Markov parameters and rank reports at 50 Hz
  roomstate diagnostics --scene scene.json --frequency 50 --K 48

Exit codes:
  0 ok, 1 unexpected error, 2 geometry, 3 solve, 4 validation,
  5 symmetry, 6 comparison setup, 130 interrupted
        """,
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Log progress")
    parser.add_argument("--debug", action="store_true", help="Enable debug output")
    parser.add_argument("--version", action="version", version="%(prog)s 0.1.0")

    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    mesh = commands.add_parser("mesh", help="Generate or inspect boundary meshes")
    source = mesh.add_mutually_exclusive_group(required=True)
    source.add_argument("--shoebox", type=_vector, help="Room lengths Lx,Ly,Lz")
    source.add_argument("--inspect", help="Mesh file to load and check")
    mesh.add_argument(
        "--edge", type=float, default=0.25, help="Target edge length (default: 0.25)"
    )
    mesh.add_argument(
        "--impedance",
        default="rigid",
        help="Wall impedance, or six comma-separated per-face values (default: rigid)",
    )
    mesh.add_argument("--impedance-map", help="Impedance map JSON for --inspect")
    mesh.add_argument(
        "--split-quads", action="store_true", help="Split quadrilateral faces on load"
    )
    mesh.add_argument("--output", "-o", help="Mesh file to write (default: shoebox.mesh)")

    sweep = commands.add_parser("sweep", help="Transfer functions over frequency")
    _add_run_arguments(sweep)
    sweep.add_argument(
        "--frequencies",
        type=_frequency_range,
        help="Arbitrary frequencies start:stop:step instead of the FFT grid",
    )

    rir = commands.add_parser("rir", help="Room impulse responses")
    _add_run_arguments(rir)
    rir.add_argument(
        "--window",
        choices=["raised-cosine", "none"],
        default="raised-cosine",
        help="Spectral window before the inverse FFT (default: raised-cosine)",
    )

    compare = commands.add_parser(
        "compare-ism", help="Compare with the image-source or mirror reference"
    )
    _add_run_arguments(compare)
    compare.add_argument(
        "--orders", type=int, help="Compare reflection orders 0..K without a full solve"
    )
    compare.add_argument(
        "--ism-order",
        type=int,
        default=1,
        help="Image order of the reference for full solves (default: 1)",
    )
    compare.add_argument(
        "--reflection-coeffs",
        type=_vector,
        help="Six face reflection coefficients (default: from impedances)",
    )
    compare.add_argument("--band", type=_band, help="Frequency band low,high in Hz")

    diagnostics = commands.add_parser(
        "diagnostics", help="Markov, observability and controllability dumps"
    )
    _add_run_arguments(diagnostics)
    diagnostics.add_argument(
        "--frequency",
        type=float,
        action="append",
        required=True,
        help="Frequency in Hz, repeatable",
    )

    return parser


def configure_logging(verbose: bool = False, debug: bool = False) -> None:
    level = logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def _face_impedances(text: str) -> Any:
    parts = text.split(",")
    if len(parts) == 1:
        return parse_impedance(parts[0])
    if len(parts) != 6:
        raise ConfigError("--impedance takes one value or six per-face values")
    return [parse_impedance(part) for part in parts]


def cmd_mesh(args: argparse.Namespace) -> int:
    """Generate a shoebox mesh or inspect a mesh file"""
    if args.inspect:
        mesh = load_mesh(args.inspect, args.impedance_map, split_quads=args.split_quads)
    else:
        if len(args.shoebox) != 3:
            raise ConfigError("--shoebox takes three lengths Lx,Ly,Lz")
        mesh = make_shoebox(args.shoebox, args.edge, _face_impedances(args.impedance))
        output = Path(args.output or "shoebox.mesh")
        impedance_map = save_mesh(mesh, output)
        map_path = output.with_name(f"{output.stem}_impedance.json")
        with open(map_path, "w") as f:
            json.dump(impedance_map, f, indent=2)
        print(f"Mesh written to: {output}")
        print(f"Impedance map written to: {map_path}")

    stats = mesh.statistics()
    print(f"N={stats['elements']}, area={stats['area']:.4g}")
    print(ResultFormatter.format_report(stats))
    return EXIT_OK


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file (if any) with command-line flags applied on top"""
    config = load_config(args.config) if args.config else RunConfig()
    config = config.with_overrides(args)
    if not config.scene:
        raise ConfigError("No scene given; use --scene or a config file with 'scene'")
    return config


def build_simulation(args: argparse.Namespace, config: RunConfig) -> RoomSimulation:
    simulation = RoomSimulation(config.scene, config)
    if args.source is not None or args.receivers is not None:
        scene = simulation.scene.with_points(args.source, args.receivers)
        simulation = RoomSimulation(scene, config)
    simulation.validate()
    return simulation


def _output_dir(config: RunConfig) -> Path:
    directory = Path(config.output.directory)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _report_written(paths: List[Path]) -> None:
    for path in paths:
        print(f"Wrote: {path}")


def cmd_sweep(args: argparse.Namespace) -> int:
    """Transfer functions plus per-bin diagnostics"""
    config = resolve_config(args)
    if config.solver.method == "neumann" and not config.solver.spectral_radius:
        config = config.with_overrides({"spectral_radius": True})
    simulation = build_simulation(args, config)
    directory = _output_dir(config)
    run_config = config.to_dict()

    if args.frequencies is not None:
        tf = sweep_frequencies(
            simulation.scene, args.frequencies, simulation.options, simulation.assembler
        )
    else:
        tf = simulation.transfer_function()

    written = ResultFormatter.write_transfer_function(
        tf, directory / "transfer_function.csv", run_config
    )
    written += ResultFormatter.write_diagnostics(
        tf, directory / "diagnostics.csv", run_config
    )
    _report_written(written)
    print(ResultFormatter.format_report(_sweep_summary(tf), title="Sweep"))
    return EXIT_OK


def _sweep_summary(tf) -> Dict[str, Any]:
    summary: Dict[str, Any] = {
        "bins solved": len(tf.diagnostics),
        "method": tf.metadata.get("method"),
        "mesh hash": tf.metadata.get("mesh_hash", "")[:16],
    }
    conditions = [d.condition for d in tf.diagnostics if d.condition is not None]
    if conditions:
        summary["max condition"] = max(conditions)
        summary["near-singular bins"] = sum(d.near_singular for d in tf.diagnostics)
    radii = [d.spectral_radius for d in tf.diagnostics if d.spectral_radius is not None]
    if radii:
        summary["max spectral radius"] = max(radii)
    sigmas = [(d.sigma_min, d.frequency) for d in tf.diagnostics if d.sigma_min is not None]
    if sigmas:
        smallest, frequency = min(sigmas)
        summary["min sigma_min"] = smallest
        summary["at frequency (Hz)"] = frequency
        dips = find_modal_dips([f for _, f in sigmas], [s for s, _ in sigmas])
        summary["modal dips (Hz)"] = ", ".join(f"{dip.frequency:g}" for dip in dips) or "none"
    return summary


def cmd_rir(args: argparse.Namespace) -> int:
    """Sweep plus Hermitian inverse FFT"""
    config = resolve_config(args)
    simulation = build_simulation(args, config)
    directory = _output_dir(config)
    run_config = config.to_dict()

    tf = simulation.transfer_function()
    ir = to_impulse_response(tf, window=None if args.window == "none" else args.window)
    written = ResultFormatter.write_transfer_function(
        tf, directory / "transfer_function.csv", run_config
    )
    formats = [fmt for fmt in config.output.formats if fmt in ("csv", "wav")] or ["csv"]
    written += ResultFormatter.write_impulse_response(
        ir, directory, "rir", formats, run_config
    )
    _report_written(written)

    rows = []
    for m in range(ir.num_receivers):
        arrivals = find_arrival_peaks(ir, receiver=m)
        strongest = find_arrival_peaks(ir, receiver=m, limit=1)
        if not strongest:
            rows.append({"receiver": m, "arrivals": 0})
            continue
        rows.append(
            {
                "receiver": m,
                "peak_sample": strongest[0].sample,
                "peak_time_s": strongest[0].time,
                "peak_value": strongest[0].amplitude,
                "arrivals": len(arrivals),
            }
        )
    print(ResultFormatter.format_table(rows))
    return EXIT_OK


def cmd_compare_ism(args: argparse.Namespace) -> int:
    """Boundary-integral result against the image-source reference"""
    config = resolve_config(args)
    simulation = build_simulation(args, config)
    directory = _output_dir(config)
    run_config = config.to_dict()

    report = simulation.compare_ism(
        orders=args.orders,
        ism_order=args.ism_order,
        reflection_coeffs=args.reflection_coeffs,
        band=tuple(args.band) if args.band else None,
    )

    written = ResultFormatter.write_comparison(report, directory, run_config)
    _report_written(written)

    print(ResultFormatter.format_report(report.summary(), title="Comparison"))
    if report.arrivals:
        print()
        print(ResultFormatter.format_table(report.arrivals))
    return EXIT_OK


def cmd_diagnostics(args: argparse.Namespace) -> int:
    """Markov parameters, stacked matrices and identity checks per frequency"""
    config = resolve_config(args)
    simulation = build_simulation(args, config)
    directory = _output_dir(config)
    run_config = config.to_dict()
    fmt = "binary" if "binary" in config.output.formats else "csv"
    order = args.order

    passed = True
    for frequency in args.frequency:
        result = simulation.diagnostics(frequency, order)
        stem = directory / f"f{frequency:g}Hz"
        header = {
            "frequency": frequency,
            "order": len(result.markov),
            "mesh_hash": simulation.scene.mesh.content_hash(),
            "config": run_config,
        }
        written = ResultFormatter.write_matrix(
            np.hstack(result.markov), f"{stem}_markov.{fmt}", fmt, header
        )
        written += ResultFormatter.write_matrix(
            result.ops.C, f"{stem}_C.{fmt}", fmt, header
        )
        for name, stacked in (
            ("observability", result.observability),
            ("controllability", result.controllability),
        ):
            written += ResultFormatter.write_matrix(
                stacked.matrix, f"{stem}_{name}.{fmt}", fmt, header
            )
            written += ResultFormatter.write_values(
                stacked.singular_values,
                f"{stem}_{name}_singular_values.csv",
                "singular_value",
                dict(header, rank=stacked.rank),
            )
        _report_written(written)

        print(
            ResultFormatter.format_report(
                {
                    "order": len(result.markov),
                    "observability rank": result.observability.rank,
                    "controllability rank": result.controllability.rank,
                    "spectral radius": result.spectral_radius,
                    "spectral radius converged": result.spectral_radius_converged,
                    "sigma_min(I - A)": result.sigma_min,
                },
                title=f"Diagnostics at {frequency:g} Hz",
            )
        )
        print(ResultFormatter.format_table(result.checks))
        print()
        passed = passed and result.passed

    return EXIT_OK if passed else EXIT_ERROR


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "mesh": cmd_mesh,
    "sweep": cmd_sweep,
    "rir": cmd_rir,
    "compare-ism": cmd_compare_ism,
    "diagnostics": cmd_diagnostics,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point"""
    parser = create_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.debug)

    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("\nInterrupted by user", file=sys.stderr)
        return EXIT_INTERRUPTED
    except Exception as e:
        if args.debug:
            import traceback

            traceback.print_exc()
        for family, category, code in ERROR_CATEGORIES:
            if isinstance(e, family):
                print(f"{category}: {e}", file=sys.stderr)
                return code
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
