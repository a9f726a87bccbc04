"""Experiment configuration: INI-style files parsed strictly into dataclasses.

Grammar (see README): ``[section]`` headers, ``key = value`` lines, ``#`` or ``;``
comments on their own line. Sections and keys are fixed; anything unknown is an
error. Lists are comma-separated. Missing keys take the dataclass defaults.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .mixture import AtomicPrior, SmoothedTarget

PRESETS = {
    # two well-separated atoms on the first axis
    "two_atoms_d2": ([[2.0, 0.0], [-2.0, 0.0]], None),
    # three atoms used by the acceptance suite
    "acceptance_gmm": ([[2.0, 0.0], [-2.0, 0.0], [0.0, 2.0]], None),
    "single_atom_d2": ([[1.0, 1.0]], None),
    "gaussian_d2": ([[0.0, 0.0]], None),
}
DEFAULT_PRESET = "two_atoms_d2"


@dataclass(frozen=True)
class TargetConfig:
    preset: Optional[str] = None
    atoms_file: Optional[str] = None
    sigma: float = 1.0


@dataclass(frozen=True)
class SamplerConfig:
    eps_err: float = 1e-4
    eps1: float = 0.1
    oracle: str = "exact"
    noise_features: int = 8
    noise_seed: int = 0
    T: Optional[float] = None
    h: Optional[float] = None
    k: Optional[int] = None
    D: Optional[int] = None
    m: Optional[int] = None
    gamma_const: Optional[float] = None
    c_T: Optional[float] = None

    def overrides(self) -> dict:
        return {key: getattr(self, key) for key in ("T", "h", "k", "D", "m", "gamma_const", "c_T")
                if getattr(self, key) is not None}


@dataclass(frozen=True)
class CorrectorConfig:
    enabled: bool = False
    eps: float = 0.1
    friction_const: float = 1.0
    friction: Optional[float] = None
    step: Optional[float] = None
    steps: Optional[int] = None


@dataclass(frozen=True)
class RunConfig:
    n_samples: int = 1000
    seed: int = 0
    out: str = "out"
    threads: int = 1
    block: int = 1024


@dataclass(frozen=True)
class BenchmarkConfig:
    eps_err_list: tuple = (1e-2, 1e-4, 1e-6)
    euler_steps: tuple = (100, 1000, 10000)
    n_samples: int = 2000
    n_reference: int = 100_000
    n_starts: int = 100
    n_dirs: int = 128


@dataclass(frozen=True)
class DiagnoseConfig:
    k_list: tuple = (2, 4, 6, 8, 10, 12)
    grid: int = 200
    precision: str = "extended"
    n_points: int = 1000
    n_trials: int = 1000
    n_pairs: int = 100
    offsets: tuple = (1.0, 2.0, 4.0)
    orders: tuple = (1, 2, 3, 4)
    fd_step: float = 1e-3


@dataclass(frozen=True)
class ExperimentConfig:
    target: TargetConfig = field(default_factory=TargetConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    corrector: CorrectorConfig = field(default_factory=CorrectorConfig)
    run: RunConfig = field(default_factory=RunConfig)
    benchmark: BenchmarkConfig = field(default_factory=BenchmarkConfig)
    diagnose: DiagnoseConfig = field(default_factory=DiagnoseConfig)
    base_dir: str = field(default=".", compare=False)

    def build_target(self) -> SmoothedTarget:
        return SmoothedTarget(load_prior(self), self.target.sigma)


SECTIONS = {
    "target": TargetConfig,
    "sampler": SamplerConfig,
    "corrector": CorrectorConfig,
    "run": RunConfig,
    "benchmark": BenchmarkConfig,
    "diagnose": DiagnoseConfig,
}

# element types of the list-valued keys
_LIST_TYPES = {"eps_err_list": float, "euler_steps": int, "k_list": int, "offsets": float,
               "orders": int}
_OPTIONAL_FLOAT = {"T", "h", "gamma_const", "c_T", "friction", "step"}
_OPTIONAL_INT = {"k", "D", "m", "steps"}
_OPTIONAL_STR = {"preset", "atoms_file"}


def _int(raw: str) -> int:
    """Integer, also accepting integral float spellings such as 1e5."""
    try:
        return int(raw)
    except ValueError:
        val = float(raw)
        if not val.is_integer():
            raise ValueError(f"expected an integer, got {raw!r}") from None
        return int(val)


def _convert(key: str, raw: str, default):
    raw = raw.strip()
    if key in _LIST_TYPES:
        if raw == "":
            return ()
        conv = _int if _LIST_TYPES[key] is int else float
        return tuple(conv(tok.strip()) for tok in raw.split(","))
    if key in _OPTIONAL_STR:
        return None if raw.lower() in ("", "none") else raw
    if key in _OPTIONAL_FLOAT:
        return None if raw.lower() in ("", "none") else float(raw)
    if key in _OPTIONAL_INT:
        return None if raw.lower() in ("", "none") else _int(raw)
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "on", "yes", "1"):
            return True
        if low in ("false", "off", "no", "0"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return _int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def _section_line(text: str, section: str) -> Optional[int]:
    for i, line in enumerate(text.splitlines(), start=1):
        if line.strip() == f"[{section}]":
            return i
    return None


def _line_of(text: str, section: str, key: str) -> Optional[int]:
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return None


def parse_config_text(text: str, base_dir: str = ".") -> ExperimentConfig:
    """Parse and validate a configuration string."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=None,
                                   strict=True, empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        # subclass of ParsingError, so it must be caught first
        raise ConfigError(f"parse error at line {exc.lineno}: missing section header",
                          line=exc.lineno) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"parse error at line {line}", line=line) from exc
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(f"parse error at line {exc.lineno}: {exc.message}",
                          line=exc.lineno) from exc
    parts = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", field=section,
                              line=_section_line(text, section))
        cls = SECTIONS[section]
        defaults = cls()
        names = {f.name for f in fields(cls)}
        values = {}
        for key, raw in cp.items(section):
            if key not in names:
                raise ConfigError(f"unknown key {section}.{key}", field=key,
                                  line=_line_of(text, section, key))
            try:
                values[key] = _convert(key, raw, getattr(defaults, key))
            except ValueError as exc:
                raise ConfigError(f"invalid value for {key}: {exc}", field=key,
                                  line=_line_of(text, section, key)) from exc
        parts[section] = cls(**values)
    cfg = ExperimentConfig(**parts, base_dir=base_dir)
    validate(cfg)
    return cfg


def parse_config(path) -> ExperimentConfig:
    """Read and validate a configuration file. Relative atoms files resolve next to it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base_dir=str(path.parent))


def _positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise ConfigError(f"{name} must be positive, got {value}", field=name)


def validate(cfg: ExperimentConfig) -> None:
    """Field-level checks. Plan-level constraints are checked when the plan is built."""
    t = cfg.target
    if t.preset is not None and t.atoms_file is not None:
        raise ConfigError("give at most one of preset and atoms_file", field="preset")
    if t.preset is not None and t.preset not in PRESETS:
        raise ConfigError(f"unknown preset {t.preset!r}", field="preset")
    _positive("sigma", t.sigma)
    s = cfg.sampler
    for name in ("eps_err", "eps1"):
        if not 0 < getattr(s, name) < 1:
            raise ConfigError(f"{name} must lie in (0, 1)", field=name)
    if s.oracle not in ("exact", "noisy"):
        raise ConfigError("oracle must be exact or noisy", field="oracle")
    if s.noise_features < 1:
        raise ConfigError("noise_features must be >= 1", field="noise_features")
    for name, value in s.overrides().items():
        _positive(name, value)
    c = cfg.corrector
    if not 0 < c.eps <= 1:
        raise ConfigError("corrector eps must lie in (0, 1]", field="eps")
    _positive("friction_const", c.friction_const)
    for name in ("friction", "step", "steps"):
        if getattr(c, name) is not None:
            _positive(name, getattr(c, name))
    r = cfg.run
    if r.n_samples < 1:
        raise ConfigError("n_samples must be >= 1", field="n_samples")
    if r.seed < 0 or r.seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer", field="seed")
    if r.threads < 0:
        raise ConfigError("threads must be >= 0", field="threads")
    if r.block < 1:
        raise ConfigError("block must be >= 1", field="block")
    b = cfg.benchmark
    if not b.eps_err_list or any(not 0 < e < 1 for e in b.eps_err_list):
        raise ConfigError("eps_err_list entries must lie in (0, 1)", field="eps_err_list")
    if any(n < 1 for n in b.euler_steps):
        raise ConfigError("euler_steps entries must be >= 1", field="euler_steps")
    for name in ("n_samples", "n_reference", "n_starts", "n_dirs"):
        if getattr(b, name) < 1:
            raise ConfigError(f"{name} must be >= 1", field=name)
    g = cfg.diagnose
    if not g.k_list or min(g.k_list) < 1:
        raise ConfigError("k_list entries must be >= 1", field="k_list")
    if g.grid < 200:
        raise ConfigError("grid must be >= 200", field="grid")
    if g.precision not in ("double", "extended"):
        raise ConfigError("precision must be double or extended", field="precision")
    if any(o not in (1, 2, 3, 4) for o in g.orders):
        raise ConfigError("orders must lie in 1..4", field="orders")
    if any(o < 1 for o in g.offsets):
        raise ConfigError("offsets (T - t) must be >= 1", field="offsets")
    _positive("fd_step", g.fd_step)
    for name in ("n_points", "n_trials", "n_pairs"):
        if getattr(g, name) < 1:
            raise ConfigError(f"{name} must be >= 1", field=name)


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def format_config(cfg: ExperimentConfig) -> str:
    """Fully resolved configuration text; parsing it gives back an equal config."""
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        part = getattr(cfg, name)
        for f in fields(part):
            lines.append(f"{f.name} = {_format_value(getattr(part, f.name))}")
        lines.append("")
    return "\n".join(lines)


def with_run(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy of cfg with [run] fields replaced (None values are ignored)."""
    kept = {key: val for key, val in changes.items() if val is not None}
    return replace(cfg, run=replace(cfg.run, **kept)) if kept else cfg


def with_corrector(cfg: ExperimentConfig, enabled: Optional[bool]) -> ExperimentConfig:
    if enabled is None:
        return cfg
    return replace(cfg, corrector=replace(cfg.corrector, enabled=enabled))


def read_atoms(path) -> AtomicPrior:
    """Atoms file: one atom per line, d reals, optional trailing weight; '#' comments.

    The last column is read as a weight when the file contains a comment line
    starting with ``# weights``. All rows must have the same width.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read atoms file {path}: {exc}", field="atoms_file") from exc
    rows, weighted = [], False
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if line.strip().lower().startswith("# weights"):
            weighted = True
        if not body:
            continue
        try:
            rows.append([float(tok) for tok in body.split()])
        except ValueError as exc:
            raise ConfigError(f"atoms file line {lineno}: {exc}", field="atoms_file",
                              line=lineno) from exc
    if not rows:
        raise ConfigError("atoms file has no atoms", field="atoms_file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ConfigError("atoms file rows must all have the same width", field="atoms_file")
    arr = np.array(rows)
    try:
        if weighted:
            if arr.shape[1] < 2:
                raise ConfigError("weighted atoms file needs d + 1 columns", field="atoms_file")
            return AtomicPrior(arr[:, :-1], arr[:, -1])
        return AtomicPrior(arr)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid atoms: {exc}", field="atoms_file") from exc


def load_prior(cfg: ExperimentConfig) -> AtomicPrior:
    t = cfg.target
    if t.atoms_file is None:
        atoms, weights = PRESETS[t.preset or DEFAULT_PRESET]
        return AtomicPrior(atoms, weights)
    path = Path(t.atoms_file)
    if not path.is_absolute():
        path = Path(cfg.base_dir) / path
    return read_atoms(path)
