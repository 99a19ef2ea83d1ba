"""Run configuration: line-oriented ``key = value`` files with dotted section keys.

Example::

    # demo model
    model.mu = 0.5
    model.alpha = 1.0
    model.nu = 0.1
    model.B = 1.5, 0, 0, 0.6666666666666666
    analysis.I_count = 8
    tolerances.angle = 1e-3
    seed = 7
"""

from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Iterable, List, Optional, Tuple
import keyword
import logging
import math
import os

import numpy as np

from .errors import IoError, ParseError, ValidationError
from .model_zoo import LocalModelParams, default_global_matrix
from .symplectic_core import DEFAULT_TOL_SYMP, symplectic_residual

logger = logging.getLogger("homoclinickit.config")

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass(frozen=True)
class ModelConfig:
    mu: float = 0.5
    alpha: float = 1.0
    a: float = 0.0
    b: float = 0.0
    nu: float = 0.1
    kappa: Optional[float] = None
    eps_pert: float = 1e-3
    h: float = 1.0
    x0: float = 0.5
    y1: float = 0.5
    M: Optional[Tuple[float, ...]] = None
    sigma: float = 1.0
    shear: float = 1.0
    B: Tuple[float, ...] = (1.5, 0.0, 0.0, 1.0 / 1.5)
    gluing_radius: float = 0.1
    moser_eps: float = 0.1

    def global_matrix(self) -> np.ndarray:
        """M if given, otherwise the default block matrix built from sigma, shear and B."""
        if self.M is not None:
            return np.array(self.M, dtype=float).reshape(4, 4)
        return default_global_matrix(self.sigma, self.shear, np.array(self.B).reshape(2, 2))


@dataclass(frozen=True)
class AnalysisConfig:
    N: int = 5
    T: int = 0
    n_max: int = 40
    I_min: float = 0.25
    I_max: float = 2.0
    I_count: int = 8
    trace_vertices: int = 256
    kam_iterations: int = 4096
    fiber_T: int = 40
    chart_radius: float = 0.5
    periods: Tuple[int, ...] = (5,)
    threads: int = 1
    certificates: bool = True

    @property
    def I_grid(self) -> np.ndarray:
        return np.linspace(self.I_min, self.I_max, self.I_count)

    @property
    def adaptive_T(self) -> bool:
        return self.T == 0


@dataclass(frozen=True)
class Tolerances:
    symp: float = DEFAULT_TOL_SYMP
    eig: float = 1e-8
    res: float = 1e-3
    div: float = 1e-6
    nf: float = 1e-8
    trans: float = 1e-8
    bvp: float = 1e-10
    root: float = 1e-6
    kam: float = 1e-8
    mfld: float = 1e-10
    fiber: float = 1e-13
    angle: float = 1e-3
    match: float = 0.1
    class_: float = 1e-6
    lin: float = 1e-10


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    out_dir: str = "out"
    log_path: Optional[str] = None
    log_level: str = "INFO"

    def with_overrides(self, **kw) -> "RunConfig":
        """Replace top-level or ``section.field`` values (CLI flags); ``None`` leaves a value alone."""
        top = {k: v for k, v in kw.items() if v is not None and "." not in k}
        cfg = replace(self, **top) if top else self
        for key, value in kw.items():
            if value is None or "." not in key:
                continue
            section, name = key.split(".", 1)
            cfg = replace(cfg, **{section: replace(getattr(cfg, section), **{_attr(name): value})})
        validate_config(cfg)
        return cfg


SECTIONS = ("model", "analysis", "tolerances")
TOP_LEVEL = ("seed", "out_dir", "log_path", "log_level")


def _attr(name: str) -> str:
    return name + "_" if keyword.iskeyword(name) else name


def _key(name: str) -> str:
    return name[:-1] if name.endswith("_") and keyword.iskeyword(name[:-1]) else name


# -- value conversion -----------------------------------------------------

def _number(text: str, line: int, column: int, integer: bool = False):
    try:
        if integer:
            return int(text)
        value = float(text)
    except ValueError:
        raise ParseError(f"malformed {'integer' if integer else 'number'} {text!r}", line, column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite number {text!r}", line, column)
    return value


def _number_list(text: str, line: int, column: int, integer: bool = False) -> Tuple:
    out = []
    offset = 0
    for part in text.split(","):
        lead = len(part) - len(part.lstrip())
        if not part.strip():
            raise ParseError("empty list element", line, column + offset)
        out.append(_number(part.strip(), line, column + offset + lead, integer))
        offset += len(part) + 1
    return tuple(out)


def _boolean(text: str, line: int, column: int) -> bool:
    low = text.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ParseError(f"expected a boolean, got {text!r}", line, column)


def _convert(annotation, text: str, line: int, column: int) -> Any:
    optional = annotation in (Optional[float], Optional[str], Optional[Tuple[float, ...]])
    if optional and text.lower() == "none":
        return None
    if annotation is bool:
        return _boolean(text, line, column)
    if annotation is int:
        return _number(text, line, column, integer=True)
    if annotation in (float, Optional[float]):
        return _number(text, line, column)
    if annotation == Tuple[int, ...]:
        return _number_list(text, line, column, integer=True)
    if annotation in (Tuple[float, ...], Optional[Tuple[float, ...]]):
        return _number_list(text, line, column)
    return text


def _field_types(cls) -> Dict[str, Any]:
    return {_key(f.name): f.type for f in fields(cls)}


_SCHEMA = {
    **{f"{s}.{k}": t for s, c in zip(SECTIONS, (ModelConfig, AnalysisConfig, Tolerances))
       for k, t in _field_types(c).items()},
    **{k: t for k, t in _field_types(RunConfig).items() if k in TOP_LEVEL},
}


# -- parsing --------------------------------------------------------------

def _entries(lines: Iterable[str]) -> List[Tuple[str, str, int, int]]:
    """(key, value, line, value column) for every assignment, comments stripped."""
    out = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].rstrip()
        if not text.strip():
            continue
        if "=" not in text:
            raise ParseError("expected 'key = value'", lineno, len(text) - len(text.lstrip()) + 1)
        left, right = text.split("=", 1)
        key = left.strip()
        if not key:
            raise ParseError("missing key", lineno, 1)
        value = right.strip()
        column = len(left) + 2 + (len(right) - len(right.lstrip()))
        if not value:
            raise ParseError(f"missing value for {key!r}", lineno, column)
        out.append((key, value, lineno, column))
    return out


def parse_config_text(text: str, require_nu: bool = True) -> RunConfig:
    """Parse configuration text; defaults fill every key that is not given."""
    values: Dict[str, Any] = {}
    for key, value, lineno, column in _entries(text.splitlines()):
        if key not in _SCHEMA:
            raise ValidationError(f"unknown key {key!r} on line {lineno}")
        if key in values:
            raise ValidationError(f"duplicate key {key!r} on line {lineno}")
        values[key] = _convert(_SCHEMA[key], value, lineno, column)
    if require_nu and "model.nu" not in values:
        raise ValidationError("twist coefficient required")

    sections = {}
    for section, cls in zip(SECTIONS, (ModelConfig, AnalysisConfig, Tolerances)):
        kw = {_attr(k.split(".", 1)[1]): v for k, v in values.items() if k.startswith(section + ".")}
        sections[section] = cls(**kw)
    top = {k: v for k, v in values.items() if k in TOP_LEVEL}
    cfg = RunConfig(**sections, **top)
    validate_config(cfg)
    return cfg


def parse_config(path: str) -> RunConfig:
    """Read, parse and validate a configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise IoError(f"cannot read config {path}: {e}") from e
    cfg = parse_config_text(text)
    logger.info("config_loaded", extra={"path": os.fspath(path), "seed": cfg.seed})
    return cfg


def default_config() -> RunConfig:
    """The demo model with default analysis settings."""
    return RunConfig()


# -- validation -----------------------------------------------------------

def validate_config(cfg: RunConfig) -> None:
    """Raise ValidationError naming the first violated invariant."""
    m, an, tol = cfg.model, cfg.analysis, cfg.tolerances
    for f in fields(tol):
        if not getattr(tol, f.name) > 0.0:
            raise ValidationError(f"tolerance {_key(f.name)} must be positive")
    try:
        LocalModelParams(m.mu, m.alpha, m.a, m.b, m.nu, m.kappa, m.eps_pert, m.h, tol.res, tol.symp)
    except ValidationError as e:
        raise ValidationError(f"model: {e}") from e
    if m.gluing_radius <= 0.0 or m.moser_eps <= 0.0:
        raise ValidationError("model.gluing_radius and model.moser_eps must be positive")
    if m.M is not None and len(m.M) != 16:
        raise ValidationError("model.M needs 16 reals (row-major 4x4)")
    if len(m.B) != 4:
        raise ValidationError("model.B needs 4 reals (row-major 2x2)")
    if m.M is None and abs(float(np.linalg.det(np.reshape(m.B, (2, 2)))) - 1.0) > 1e-10:
        raise ValidationError("model.B must have determinant 1")
    if m.M is None and (m.sigma == 0.0 or m.shear == 0.0):
        raise ValidationError("model.sigma and model.shear must be non-zero")
    res = symplectic_residual(m.global_matrix())
    if res > tol.symp * (1.0 + float(np.max(np.abs(m.global_matrix())))) ** 2:
        raise ValidationError(f"global matrix M is not symplectic (residual {res:.3e})")
    if an.I_count < 1:
        raise ValidationError("action grid must be non-empty")
    if not (0.0 < an.I_min <= an.I_max):
        raise ValidationError("action grid needs 0 < I_min <= I_max")
    if an.N < 1 or an.N >= an.n_max:
        raise ValidationError("need 1 <= N < n_max")
    if an.T < 0:
        raise ValidationError("T must be non-negative (0 selects it adaptively)")
    for name in ("trace_vertices", "kam_iterations", "fiber_T", "threads"):
        if getattr(an, name) < 1:
            raise ValidationError(f"analysis.{name} must be positive")
    if an.trace_vertices < 8:
        raise ValidationError("analysis.trace_vertices must be at least 8")
    if an.chart_radius <= 0.0:
        raise ValidationError("analysis.chart_radius must be positive")
    if any(q < 1 for q in an.periods):
        raise ValidationError("analysis.periods must be positive")
    if cfg.seed < 0:
        raise ValidationError("seed must be non-negative")
    if cfg.log_level.upper() not in LOG_LEVELS:
        raise ValidationError(f"log_level must be one of {LOG_LEVELS}")


# -- echo -----------------------------------------------------------------

def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.17g" % value
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def describe_config(cfg: RunConfig) -> str:
    """Effective values, one ``key = value`` line each; parses back to ``cfg``."""
    lines = []
    for section in SECTIONS:
        sub = getattr(cfg, section)
        for f in fields(sub):
            lines.append(f"{section}.{_key(f.name)} = {_format(getattr(sub, f.name))}")
    for name in TOP_LEVEL:
        lines.append(f"{name} = {_format(getattr(cfg, name))}")
    return "\n".join(lines) + "\n"
