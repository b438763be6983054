"""Run configuration: flat key=value text files with bracketed sections.

Unknown sections or keys are rejected.  Documented defaults: L=2, d=0.5,
X=6, target_h=0.1, grading=0.25, kappa=1, p=2.  Command-line flags override
file values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields

from .errors import InputError


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InputError(f"expected a boolean, got {text!r}")


def _parse_float_list(text: str):
    return [float(v) for v in text.replace(",", " ").split()]


def _parse_optional_int(text: str):
    t = text.strip().lower()
    if t in ("", "none", "auto"):
        return None
    return int(text)


@dataclass
class GeometryConfig:
    L: float = 2.0
    d: float = 0.5
    X: float = 6.0
    mode: str = "translation"
    position: float = 0.0


@dataclass
class SolverConfig:
    R: float = 0.0
    lam: float = 0.1
    newton_tol: float = 1e-10
    max_newton: int = 25
    picard_warmup: int = 3
    continuation_steps: int | None = None
    initial: str = "stokes"


@dataclass
class MeshConfig:
    target_h: float = 0.1
    grading: float = 0.25
    symmetrize: bool = False
    refinements: int = 3


@dataclass
class ExperimentConfig:
    grid: int = 17
    root_tol: float = 1e-4
    margin: float = 0.02
    kappa: float = 1.0
    p: float = 2.0
    r_list: list = field(default_factory=lambda: [0.1, 0.2, 0.4])
    lambda_list: list = field(default_factory=lambda: [0.05, 0.1])
    positions: list = field(default_factory=list)
    epsilons: list = field(default_factory=lambda: [0.25, 0.1, 0.05, 0.025])
    thetas: list = field(default_factory=lambda: [0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9, 1.2, -1.2, 1.4, -1.4])
    step: float = 0.05
    seed: int = 0


@dataclass
class OutputConfig:
    directory: str = "out"
    vtk: bool = True
    mesh_file: bool = False


@dataclass
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


# key -> (section attr, field name, parser); "lambda" is a keyword, hence lam
_PARSERS = {
    ("geometry", "L"): float,
    ("geometry", "d"): float,
    ("geometry", "X"): float,
    ("geometry", "mode"): str,
    ("geometry", "position"): float,
    ("solver", "R"): float,
    ("solver", "lambda"): float,
    ("solver", "newton_tol"): float,
    ("solver", "max_newton"): int,
    ("solver", "picard_warmup"): int,
    ("solver", "continuation_steps"): _parse_optional_int,
    ("solver", "initial"): str,
    ("mesh", "target_h"): float,
    ("mesh", "grading"): float,
    ("mesh", "symmetrize"): _parse_bool,
    ("mesh", "refinements"): int,
    ("experiment", "grid"): int,
    ("experiment", "root_tol"): float,
    ("experiment", "margin"): float,
    ("experiment", "kappa"): float,
    ("experiment", "p"): float,
    ("experiment", "r_list"): _parse_float_list,
    ("experiment", "lambda_list"): _parse_float_list,
    ("experiment", "positions"): _parse_float_list,
    ("experiment", "epsilons"): _parse_float_list,
    ("experiment", "thetas"): _parse_float_list,
    ("experiment", "step"): float,
    ("experiment", "seed"): int,
    ("output", "directory"): str,
    ("output", "vtk"): _parse_bool,
    ("output", "mesh_file"): _parse_bool,
}

_KEY_ALIASES = {("solver", "lambda"): "lam"}


def parse_config_text(text: str, config: RunConfig | None = None) -> RunConfig:
    cfg = config or RunConfig()
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if not hasattr(cfg, section):
                raise InputError(f"line {lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise InputError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        if section is None:
            raise InputError(f"line {lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        parser = _PARSERS.get((section, key))
        if parser is None:
            raise InputError(f"line {lineno}: unknown key {key!r} in [{section}]")
        attr = _KEY_ALIASES.get((section, key), key)
        try:
            setattr(getattr(cfg, section), attr, parser(value))
        except (ValueError, InputError) as exc:
            raise InputError(f"line {lineno}: bad value for {key}: {exc}")
    return cfg


def load_config(path, config: RunConfig | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}")
    return parse_config_text(text, config)


def validate_config(cfg: RunConfig) -> RunConfig:
    if cfg.geometry.mode not in ("translation", "rotation"):
        raise InputError(f"mode must be translation or rotation, got {cfg.geometry.mode!r}")
    if cfg.mesh.target_h <= 0:
        raise InputError("target_h must be positive")
    if not (0 < cfg.mesh.grading <= 1):
        raise InputError("grading must lie in (0, 1]")
    for name in ("kappa", "p"):
        if getattr(cfg.experiment, name) <= 0:
            raise InputError(f"{name} must be positive")
    return cfg


def dump_config(cfg: RunConfig) -> str:
    """Render a config back to the text format (section order fixed)."""
    lines = []
    for section in ("geometry", "solver", "mesh", "experiment", "output"):
        block = getattr(cfg, section)
        lines.append(f"[{section}]")
        for f in dc_fields(block):
            key = "lambda" if (section, f.name) == ("solver", "lam") else f.name
            val = getattr(block, f.name)
            if isinstance(val, list):
                val = " ".join(repr(v) for v in val)
            lines.append(f"{key} = {val}")
        lines.append("")
    return "\n".join(lines)
