"""Experiment configuration: flat key=value files with namespaced keys.

The format is deliberately primitive so configs stay diffable and portable:
one ``section.key = value`` pair per line, ``#`` comments, blank lines
ignored.  Unknown keys are rejected with their line number; missing keys take
the reference experiment defaults (2048-point grid, 64 observations of
variance 0.36 every 0.04 time units over [0, 4], 400 particles).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

__all__ = ["ExperimentConfig", "SweepSpec", "parse_config", "config_text"]


@dataclass(frozen=True)
class ExperimentConfig:
    # model
    b: float = 1.0
    c: float = 2.0 * np.pi
    nu: float = 1.0 / 9.0
    n_grid: int = 2048
    domain_length: float = 2.0 * np.pi
    # time grid: n_cycles assimilation steps on (0, t_final]
    n_cycles: int = 100
    t_final: float = 4.0
    # observations
    n_obs: int = 64
    obs_variance: float = 0.36
    obs_corr_length: float = 0.06
    # filter
    n_particles: int = 400
    resample_threshold: float = 0.5
    # assimilation error model
    error_kind: str = "grf"   # "grf" or "diagonal"
    ell2: float = 0.0
    kappa: float = 1.0
    # seeds
    truth_seed: int = 42
    obs_seed: int = 43
    filter_seed: int = 44

    @property
    def dt(self) -> float:
        return self.t_final / self.n_cycles

    def validate(self) -> "ExperimentConfig":
        n = self.n_grid
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError("model.n_grid must be a power of two >= 2")
        if self.n_grid % self.n_obs != 0:
            raise ValueError(
                f"obs.n_obs={self.n_obs} does not divide model.n_grid={self.n_grid}"
            )
        if self.b <= 0 or self.nu <= 0 or self.domain_length <= 0:
            raise ValueError("model.b, model.nu, model.domain_length must be positive")
        if self.n_cycles < 1 or self.t_final <= 0:
            raise ValueError("time.n_cycles and time.t_final must be positive")
        if self.obs_variance <= 0 or self.obs_corr_length <= 0:
            raise ValueError("obs.variance and obs.corr_length must be positive")
        if self.n_particles < 1:
            raise ValueError("filter.n_particles must be at least 1")
        if not 0.0 < self.resample_threshold <= 1.0:
            raise ValueError("filter.resample_threshold must lie in (0, 1]")
        if self.error_kind not in ("grf", "diagonal"):
            raise ValueError("error_model.kind must be 'grf' or 'diagonal'")
        if self.ell2 < 0 or self.kappa <= 0:
            raise ValueError("error_model.ell2 must be >= 0 and error_model.kappa > 0")
        return self


# file key -> (field name, type)
_KEYS: dict[str, tuple[str, type]] = {
    "model.b": ("b", float),
    "model.c": ("c", float),
    "model.nu": ("nu", float),
    "model.n_grid": ("n_grid", int),
    "model.domain_length": ("domain_length", float),
    "time.n_cycles": ("n_cycles", int),
    "time.t_final": ("t_final", float),
    "obs.n_obs": ("n_obs", int),
    "obs.variance": ("obs_variance", float),
    "obs.corr_length": ("obs_corr_length", float),
    "filter.n_particles": ("n_particles", int),
    "filter.resample_threshold": ("resample_threshold", float),
    "error_model.kind": ("error_kind", str),
    "error_model.ell2": ("ell2", float),
    "error_model.kappa": ("kappa", float),
    "seeds.truth": ("truth_seed", int),
    "seeds.obs": ("obs_seed", int),
    "seeds.filter": ("filter_seed", int),
}


def parse_config(path) -> ExperimentConfig:
    """Read a key=value config file, applying defaults for absent keys."""
    overrides: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key '{key}'")
            field, typ = _KEYS[key]
            try:
                overrides[field] = typ(value)
            except ValueError as exc:
                raise ValueError(
                    f"{path}:{lineno}: could not parse '{value}' for '{key}'"
                ) from exc
    return ExperimentConfig(**overrides).validate()


def config_text(config: ExperimentConfig) -> str:
    """Fully resolved config in file syntax, for provenance echoes."""
    lines = []
    for key, (field, _typ) in _KEYS.items():
        lines.append(f"{key}={getattr(config, field)!r}")
    return "\n".join(lines) + "\n"


def replace(config: ExperimentConfig, **changes) -> ExperimentConfig:
    return dataclasses.replace(config, **changes).validate()


@dataclass(frozen=True)
class SweepSpec:
    """One swept axis with its values and replicate count per value."""

    axis: str                      # "ell2", "n_obs", or "n_particles"
    values: tuple
    runs_per_value: int = 1

    def __post_init__(self) -> None:
        if self.axis not in ("ell2", "n_obs", "n_particles"):
            raise ValueError("axis must be one of ell2, n_obs, n_particles")
        if len(self.values) == 0:
            raise ValueError("sweep values must be nonempty")
        if self.runs_per_value < 1:
            raise ValueError("runs_per_value must be at least 1")
        object.__setattr__(self, "values", tuple(self.values))
