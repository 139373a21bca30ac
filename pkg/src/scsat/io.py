"""Provenance headers and system construction from a configuration."""

from __future__ import annotations

import os

from . import __version__
from .config import ConfigError, ExperimentConfig


def provenance(cfg: ExperimentConfig) -> str:
    return f"# scsat {__version__} config={cfg.digest()} seed={cfg.seed}"


def out_path(cfg: ExperimentConfig, name: str) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def mapping_points(cfg: ExperimentConfig):
    from .bicm.model import preset_points, read_mapping
    if cfg.mapping_file:
        return read_mapping(cfg.mapping_file)
    return preset_points(cfg.mapping)


def mapping_name(cfg: ExperimentConfig) -> str:
    return os.path.basename(cfg.mapping_file) if cfg.mapping_file else cfg.mapping


def build_system(cfg: ExperimentConfig, **changes):
    """SystemFunctions for the configured system; ``changes`` override config fields."""
    from .systems import bec_regular_system, identity_system, tabulated_system
    c = {**{k: getattr(cfg, k) for k in ("system", "l", "r", "eps", "snr_db", "n_smooth")}, **changes}
    if c["system"] == "identity":
        return identity_system()
    if c["system"] == "bec36":
        return bec_regular_system(3, 6, c["eps"])
    if c["system"] == "bec-regular":
        return bec_regular_system(c["l"], c["r"], c["eps"])
    if c["system"] == "table":
        return tabulated_system(cfg.table_file)
    if c["system"] == "bicm":
        from .bicm.chart import bicm_system
        from .bicm.decoder import RegularEnsemble
        from .bicm.model import BicmModel
        model = BicmModel.from_points(mapping_points(cfg), c["snr_db"], name=mapping_name(cfg))
        n = c["n_smooth"] if c["n_smooth"] > 0 else None  # n <= 0: exact MAP curve (DE only)
        return bicm_system(model, RegularEnsemble(c["l"], c["r"]), n)
    raise ConfigError(f"unknown system {c['system']!r}")
