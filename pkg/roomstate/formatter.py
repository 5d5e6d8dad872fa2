"""
Output formatters for roomstate

Writes transfer functions, impulse responses, diagnostics and operator
matrices to CSV, WAV or raw binary files with JSON sidecars, and renders
human-readable report tables for the command line.
"""

import json
import math
import shutil
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.io import wavfile
from tabulate import tabulate

from .response import FrequencyGrid, ImpulseResponse, TransferFunction

FLOAT_FORMAT = "%.17g"


def _json_default(obj: Any) -> Any:
    """JSON serializer for numpy values and dataclasses"""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [obj.real, obj.imag]
    if isinstance(obj, Path):
        return str(obj)
    if is_dataclass(obj):
        return asdict(obj)
    if hasattr(obj, "__dict__"):
        return obj.__dict__
    return str(obj)


class ResultFormatter:
    """Converts results to tables and files"""

    @staticmethod
    def to_json(payload: Any) -> str:
        return json.dumps(payload, indent=2, default=_json_default, ensure_ascii=False)

    @staticmethod
    def format_table(rows: List[Dict[str, Any]], empty: str = "No results.") -> str:
        """Plain table of dictionaries, columns in first-seen order"""
        if not rows:
            return empty
        headers = []
        for row in rows:
            for key in row:
                if key not in headers:
                    headers.append(key)
        body = [
            [ResultFormatter._format_value(row.get(key)) for key in headers] for row in rows
        ]
        try:
            width = shutil.get_terminal_size().columns
        except (AttributeError, OSError):
            width = 80
        table = tabulate(body, headers=headers, tablefmt="simple")
        if max(len(line) for line in table.splitlines()) > width:
            table = tabulate(body, headers=headers, tablefmt="plain")
        return table

    @staticmethod
    def format_report(values: Dict[str, Any], title: Optional[str] = None) -> str:
        """Two-column key/value report"""
        body = [[key, ResultFormatter._format_value(value)] for key, value in values.items()]
        table = tabulate(body, tablefmt="simple")
        return f"{title}\n{table}" if title else table

    @staticmethod
    def _format_value(value: Any) -> str:
        if value is None:
            return ""
        if isinstance(value, bool):
            return "yes" if value else "no"
        if isinstance(value, (float, np.floating)):
            if math.isinf(value):
                return "inf"
            return f"{value:.6g}"
        if isinstance(value, (list, tuple)):
            return ", ".join(ResultFormatter._format_value(v) for v in value)
        return str(value)

    @staticmethod
    def transfer_function_frame(tf: TransferFunction) -> pd.DataFrame:
        """freq_hz followed by re/im column pairs per receiver"""
        columns: Dict[str, Any] = {"freq_hz": tf.frequencies}
        for m in range(tf.num_receivers):
            columns[f"re_{m}"] = tf.values[m].real
            columns[f"im_{m}"] = tf.values[m].imag
        return pd.DataFrame(columns)

    @staticmethod
    def impulse_response_frame(ir: ImpulseResponse) -> pd.DataFrame:
        columns: Dict[str, Any] = {"sample_index": np.arange(ir.samples.shape[1])}
        for m in range(ir.num_receivers):
            columns[f"receiver_{m}"] = ir.samples[m]
        return pd.DataFrame(columns)

    @staticmethod
    def diagnostics_frame(tf: TransferFunction) -> pd.DataFrame:
        rows = [asdict(d) for d in tf.diagnostics]
        return pd.DataFrame(rows, columns=list(rows[0]) if rows else ["frequency"])

    @staticmethod
    def write_sidecar(path: Union[str, Path], payload: Dict[str, Any]) -> Path:
        sidecar = Path(path).with_suffix(".json")
        with open(sidecar, "w") as f:
            f.write(ResultFormatter.to_json(payload))
            f.write("\n")
        return sidecar

    @staticmethod
    def write_frame(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return path

    @staticmethod
    def read_frame(path: Union[str, Path]) -> pd.DataFrame:
        """Read a CSV written by write_frame without losing the last bit of any float"""
        return pd.read_csv(path, float_precision="round_trip")

    @staticmethod
    def write_transfer_function(
        tf: TransferFunction,
        path: Union[str, Path],
        run_config: Optional[Dict[str, Any]] = None,
    ) -> List[Path]:
        """CSV of the transfer function plus a JSON sidecar with grid and metadata"""
        csv_path = ResultFormatter.write_frame(ResultFormatter.transfer_function_frame(tf), path)
        sidecar = {
            "kind": "transfer_function",
            "grid": tf.grid.to_dict() if tf.grid else None,
            "metadata": tf.metadata,
            "config": run_config,
        }
        return [csv_path, ResultFormatter.write_sidecar(csv_path, sidecar)]

    @staticmethod
    def write_diagnostics(
        tf: TransferFunction,
        path: Union[str, Path],
        run_config: Optional[Dict[str, Any]] = None,
    ) -> List[Path]:
        csv_path = ResultFormatter.write_frame(ResultFormatter.diagnostics_frame(tf), path)
        sidecar = {"kind": "sweep_diagnostics", "metadata": tf.metadata, "config": run_config}
        return [csv_path, ResultFormatter.write_sidecar(csv_path, sidecar)]

    @staticmethod
    def write_impulse_response(
        ir: ImpulseResponse,
        directory: Union[str, Path],
        stem: str = "rir",
        formats: Iterable[str] = ("csv",),
        run_config: Optional[Dict[str, Any]] = None,
    ) -> List[Path]:
        """CSV with one column per receiver and/or one 32-bit float WAV per receiver"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        sidecar = {
            "kind": "impulse_response",
            "sample_rate": ir.sample_rate,
            "metadata": ir.metadata,
            "config": run_config,
        }
        written = []
        formats = list(formats)
        if "csv" in formats:
            path = ResultFormatter.write_frame(
                ResultFormatter.impulse_response_frame(ir), directory / f"{stem}.csv"
            )
            written.extend([path, ResultFormatter.write_sidecar(path, sidecar)])
        if "wav" in formats:
            rate = int(round(ir.sample_rate))
            for m in range(ir.num_receivers):
                path = directory / f"{stem}_receiver{m}.wav"
                wavfile.write(str(path), rate, ir.samples[m].astype(np.float32))
                written.append(path)
            written.append(ResultFormatter.write_sidecar(directory / f"{stem}_wav.json", sidecar))
        return written

    @staticmethod
    def write_matrix(
        matrix: np.ndarray,
        path: Union[str, Path],
        fmt: str = "csv",
        header: Optional[Dict[str, Any]] = None,
    ) -> List[Path]:
        """Complex matrix as CSV (re/im per column) or raw little-endian re/im pairs

        Both layouts are row-major and carry a JSON sidecar with the shape.
        """
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        rows, cols = matrix.shape
        sidecar = {"rows": rows, "cols": cols, "layout": "row-major"}
        sidecar.update(header or {})
        if fmt == "csv":
            columns: Dict[str, Any] = {}
            for j in range(cols):
                columns[f"re_{j}"] = matrix[:, j].real
                columns[f"im_{j}"] = matrix[:, j].imag
            ResultFormatter.write_frame(pd.DataFrame(columns), path)
        elif fmt == "binary":
            sidecar["dtype"] = "complex128 little-endian, interleaved re/im"
            with open(path, "wb") as f:
                f.write(np.ascontiguousarray(matrix).astype("<c16").tobytes())
        else:
            raise ValueError(f"Unknown matrix format: {fmt!r}")
        return [path, ResultFormatter.write_sidecar(path, sidecar)]

    @staticmethod
    def write_comparison(
        report: Any,
        directory: Union[str, Path],
        run_config: Optional[Dict[str, Any]] = None,
    ) -> List[Path]:
        """Per-frequency errors (and per-arrival deltas for shoebox references)"""
        directory = Path(directory)
        columns: Dict[str, Any] = {
            "freq_hz": report.frequencies,
            "in_band": report.band_mask,
        }
        for m in range(report.relative_error.shape[0]):
            columns[f"relative_error_{m}"] = report.relative_error[m]
            if report.reflected_error is not None:
                columns[f"reflected_error_{m}"] = report.reflected_error[m]
                columns[f"phase_error_{m}"] = report.phase_error[m]
        sidecar = {
            "kind": "comparison",
            "summary": report.summary(),
            "metadata": report.computed.metadata,
            "reference_metadata": report.reference_tf.metadata,
            "config": run_config,
        }
        path = ResultFormatter.write_frame(
            pd.DataFrame(columns), directory / "comparison.csv"
        )
        written = [path, ResultFormatter.write_sidecar(path, sidecar)]
        if report.arrivals:
            rows = [
                dict(row, reflections=" ".join(map(str, row["reflections"])))
                for row in report.arrivals
            ]
            arrivals_path = ResultFormatter.write_frame(
                pd.DataFrame(rows), directory / "arrivals.csv"
            )
            arrivals_sidecar = {
                "kind": "arrivals",
                "max_order": max(int(row["order"]) for row in report.arrivals),
                "metadata": report.computed.metadata,
                "config": run_config,
            }
            written.extend(
                [arrivals_path, ResultFormatter.write_sidecar(arrivals_path, arrivals_sidecar)]
            )
        return written

    @staticmethod
    def write_values(
        values: Sequence[float],
        path: Union[str, Path],
        name: str = "value",
        header: Optional[Dict[str, Any]] = None,
    ) -> List[Path]:
        """One-column CSV (singular values, residuals) with a JSON header"""
        frame = pd.DataFrame({"index": np.arange(len(values)), name: np.asarray(values)})
        csv_path = ResultFormatter.write_frame(frame, path)
        return [csv_path, ResultFormatter.write_sidecar(csv_path, header or {})]


def read_transfer_function(path: Union[str, Path]) -> TransferFunction:
    """Load a transfer function CSV (and its sidecar, when present)"""
    path = Path(path)
    frame = ResultFormatter.read_frame(path)
    receivers = sum(1 for column in frame.columns if column.startswith("re_"))
    values = np.stack(
        [frame[f"re_{m}"].to_numpy() + 1j * frame[f"im_{m}"].to_numpy() for m in range(receivers)]
    )
    grid = None
    metadata: Dict[str, Any] = {}
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        with open(sidecar, "r") as f:
            payload = json.load(f)
        if payload.get("grid"):
            grid = FrequencyGrid(payload["grid"]["sample_rate"], payload["grid"]["nfft"])
        metadata = payload.get("metadata", {})
    return TransferFunction(frame["freq_hz"].to_numpy(), values, grid, metadata)
