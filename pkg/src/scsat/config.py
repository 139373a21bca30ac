"""Experiment configuration: flat key=value files with command-line overrides."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields

from .errors import ParameterError


class ConfigError(ParameterError):
    """Malformed or inconsistent configuration."""


SYSTEMS = ("identity", "bec36", "bec-regular", "bicm", "table")


@dataclass
class ExperimentConfig:
    # system selection
    system: str = "bec36"
    l: int = 3
    r: int = 6
    eps: float = 0.45
    mapping: str = "gray"
    mapping_file: str = ""
    snr_db: float = 5.76
    n_smooth: float = 100.0
    table_file: str = ""
    # coupled chain
    L: int = 100
    W: int = 8
    max_iter: int = 100000
    stall_tol: float = 1e-9
    delta: float = 1e-4
    record_every: int = 0
    circular: bool = False
    # potential and thresholds
    n_grid: int = 2048
    fp_tol: float = 1e-10
    gap_tol: float = 1e-9
    theta_lo: float = 0.45
    theta_hi: float = 0.60
    theta_tol: float = 1e-6
    snr_lo: float = 3.0
    snr_hi: float = 8.0
    with_thresholds: bool = False
    # continuum
    alpha: float = 0.05
    n_x: int = 0
    alphas: str = "0.1,0.05,0.025,0.0125"
    task: str = "gap,bvp"
    pde_tol: float = 1e-6
    t_max: float = 200.0
    # interleaver
    M: int = 12
    # run
    seed: int = 0
    out: str = "."
    threads: int = 0

    def validate(self) -> "ExperimentConfig":
        if self.system not in SYSTEMS:
            raise ConfigError(f"system must be one of {', '.join(SYSTEMS)}")
        for name in ("stall_tol", "delta", "fp_tol", "gap_tol", "theta_tol", "pde_tol", "t_max"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.W < 1 or self.L < self.W:
            raise ConfigError("need L >= W >= 1")
        if not 0.0 < self.alpha <= 0.5:
            raise ConfigError("alpha must lie in (0, 0.5]")
        for a in self.alpha_list:
            if not 0.0 < a <= 0.5:
                raise ConfigError("alphas must lie in (0, 0.5]")
        if self.M < 1:
            raise ConfigError("M must be positive")
        if self.max_iter < 0 or self.n_grid < 16 or self.n_x < 0 or self.threads < 0:
            raise ConfigError("max_iter, n_x, threads must be non-negative and n_grid >= 16")
        if self.system == "table" and not self.table_file:
            raise ConfigError("system=table needs table_file")
        return self

    @property
    def alpha_list(self) -> list:
        try:
            return [float(a) for a in self.alphas.split(",") if a.strip()]
        except ValueError:
            raise ConfigError(f"bad alphas list {self.alphas!r}") from None

    @property
    def tasks(self) -> list:
        return [t.strip() for t in self.task.split(",") if t.strip()]

    def dump(self) -> str:
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))

    def digest(self) -> str:
        """First 12 hex digits of the SHA-256 of the canonical dump (output dir excluded)."""
        canon = dataclasses.replace(self, out=".", threads=0).dump()
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(name: str, kind, text: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


def _field_types() -> dict:
    return {f.name: _TYPES[f.type] if isinstance(f.type, str) else f.type
            for f in fields(ExperimentConfig)}


def parse_pairs(lines, source: str = "config") -> dict:
    """key=value lines; blank lines and '#' comments ignored."""
    types = _field_types()
    out = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        out[key] = _coerce(key, types[key], val)
    return out


def load(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (already typed or strings)."""
    values = {}
    if path:
        try:
            with open(path) as fh:
                values.update(parse_pairs(fh, str(path)))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    types = _field_types()
    for key, val in (overrides or {}).items():
        if key not in types:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _coerce(key, types[key], val) if isinstance(val, str) else val
    return ExperimentConfig(**values).validate()
