"""
Run configuration for roomstate

A run is described by one JSON file; every field also has a command-line
flag and flags win over file values. The resolved configuration is echoed
into the metadata of every output.
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .quadrature import QuadratureRule
from .response import FrequencyGrid, SolverOptions

OUTPUT_FORMATS = ("csv", "wav", "binary")


class ConfigError(ValueError):
    """Exception raised for unreadable or inconsistent run configurations"""

    pass


@dataclass(frozen=True)
class GridConfig:
    sample_rate: float = 2000.0
    nfft: int = 2048


@dataclass(frozen=True)
class SolverConfig:
    method: str = "direct"
    order: int = 40
    quadrature_degree: int = 6
    near_field_threshold: float = 2.0
    singular_points: int = 16
    max_frequency: Optional[float] = None
    workers: Optional[int] = None
    spectral_radius: bool = False
    sigma_min: bool = False
    min_clearance: float = 1e-3
    min_elements_per_wavelength: float = 4.0


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "roomstate_output"
    formats: List[str] = field(default_factory=lambda: ["csv"])


# CLI attribute name -> (section, field)
FLAG_FIELDS = {
    "scene": (None, "scene"),
    "fs": ("grid", "sample_rate"),
    "nfft": ("grid", "nfft"),
    "method": ("solver", "method"),
    "order": ("solver", "order"),
    "quadrature_order": ("solver", "quadrature_degree"),
    "near_field": ("solver", "near_field_threshold"),
    "singular_points": ("solver", "singular_points"),
    "max_frequency": ("solver", "max_frequency"),
    "workers": ("solver", "workers"),
    "min_clearance": ("solver", "min_clearance"),
    "output_dir": ("output", "directory"),
    "format": ("output", "formats"),
}


@dataclass(frozen=True)
class RunConfig:
    """Scene path plus grid, solver and output settings"""

    scene: Optional[str] = None
    grid: GridConfig = field(default_factory=GridConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        if self.solver.method not in ("direct", "neumann"):
            raise ConfigError(
                f"solver.method must be 'direct' or 'neumann', got {self.solver.method!r}"
            )
        unknown = sorted(set(self.output.formats) - set(OUTPUT_FORMATS))
        if unknown:
            raise ConfigError(f"Unknown output formats: {unknown}")
        try:
            self.frequency_grid()
            self.quadrature()
        except ValueError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        unknown = sorted(set(data) - {"scene", "grid", "solver", "output"})
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {unknown}")
        return cls(
            scene=data.get("scene"),
            grid=_section(GridConfig, data.get("grid", {}), "grid"),
            solver=_section(SolverConfig, data.get("solver", {}), "solver"),
            output=_section(OutputConfig, data.get("output", {}), "output"),
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_overrides(self, args: Any) -> "RunConfig":
        """Copy with every non-None flag value applied

        args is an argparse namespace or a dict keyed like FLAG_FIELDS.
        """
        values = args if isinstance(args, dict) else vars(args)
        sections = {
            "grid": self.grid,
            "solver": self.solver,
            "output": self.output,
        }
        top = {}
        for name, (section, key) in FLAG_FIELDS.items():
            value = values.get(name)
            if value is None:
                continue
            if key == "formats" and isinstance(value, str):
                value = [value]
            if section is None:
                top[key] = value
            else:
                sections[section] = replace(sections[section], **{key: value})
        for flag in ("spectral_radius", "sigma_min"):
            if values.get(flag):
                sections["solver"] = replace(sections["solver"], **{flag: True})
        return replace(self, **top, **sections)

    def frequency_grid(self) -> FrequencyGrid:
        return FrequencyGrid(float(self.grid.sample_rate), int(self.grid.nfft))

    def quadrature(self) -> QuadratureRule:
        return QuadratureRule(
            degree=int(self.solver.quadrature_degree),
            near_field_threshold=float(self.solver.near_field_threshold),
            singular_radial=int(self.solver.singular_points),
            singular_angular=int(self.solver.singular_points),
        )

    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            method=self.solver.method,
            order=int(self.solver.order),
            quadrature=self.quadrature(),
            workers=self.solver.workers,
            max_frequency=self.solver.max_frequency,
            spectral_radius=bool(self.solver.spectral_radius),
            sigma_min=bool(self.solver.sigma_min),
            min_clearance=float(self.solver.min_clearance),
        )


def _section(cls, data: Dict[str, Any], name: str):
    if not isinstance(data, dict):
        raise ConfigError(f"Configuration section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown keys in {name!r}: {unknown}")
    return cls(**data)


def load_config(path: Union[str, Path]) -> RunConfig:
    """Read a RunConfig from JSON; a relative scene path resolves against the file"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file does not exist: {path}")
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    config = RunConfig.from_dict(data)
    if config.scene and not Path(config.scene).is_absolute():
        config = replace(config, scene=str(path.parent / config.scene))
    return config
