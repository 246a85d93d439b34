"""Experiment configuration: a dataclass mirrored field for field by a TOML file."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib as toml_reader
except ModuleNotFoundError:  # Python < 3.11
    import tomli as toml_reader

KINDS = (
    "spectrum", "mass-sweep", "penalty-sweep", "verify-form", "verify-lower-bound",
    "round-corners", "upper-bound", "oracle-disk",
)


class ConfigError(ValueError):
    pass


def geometric_grid(start: float, stop: float, ratio: float = 2.0) -> list[float]:
    """``start, start * ratio, ...`` up to and including ``stop`` (within rounding)."""
    out = []
    x = float(start)
    while x <= stop * (1 + 1e-12):
        out.append(x)
        x *= ratio
    return out


@dataclass
class ExperimentConfig:
    """One experiment run.

    ``M_grid`` must be strictly increasing and ``h`` strictly decreasing.
    Fields after ``seed`` tune individual experiments and have defaults.
    """

    kind: str
    domain: dict = field(default_factory=lambda: {"kind": "square"})
    m: float = 0.0
    M_grid: list = field(default_factory=lambda: geometric_grid(8, 512))
    h: list = field(default_factory=lambda: [0.05])
    j: int = 3
    tol: float = 1e-8
    out: str | None = None
    seed: int = 0
    jobs: int = 1
    # box mesh
    margin: float = 1.0
    layer_beta: float = 0.06
    # lower-bound sampler
    gammas: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    samples: int = 200
    # corner rounding
    eps_grid: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    # penalty sweep: extra masses whose spectra must lie above the one at ``m``
    m_compare: list = field(default_factory=list)
    # spectrum subcommand: which form to solve
    form: str = "A2"
    svg: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        self.M_grid = [float(x) for x in self.M_grid]
        self.h = [float(x) for x in self.h]
        if self.j < 1:
            raise ConfigError("j must be at least 1")
        if any(b <= a for a, b in zip(self.M_grid, self.M_grid[1:])):
            raise ConfigError("M grid must be strictly increasing")
        if not self.h or any(x <= 0 for x in self.h):
            raise ConfigError("need at least one positive mesh size")
        if any(b >= a for a, b in zip(self.h, self.h[1:])):
            raise ConfigError("mesh sizes must be strictly decreasing")
        if self.tol <= 0:
            raise ConfigError("solver tolerance must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if "kind" not in self.domain:
            raise ConfigError("domain table needs a 'kind'")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "kind" not in data:
            raise ConfigError("config needs a 'kind'")
        return cls(**data)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def load_config(path) -> ExperimentConfig:
    with open(Path(path), "rb") as fh:
        data = toml_reader.load(fh)
    return ExperimentConfig.from_dict(data)
