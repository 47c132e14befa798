"""Run configuration for the experiment runner."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .dyadic import LacunarySequence

MAX_CLI_RESOLUTION = 16

EXPERIMENTS = (
    "transform",
    "carleson-identity",
    "decompose",
    "zygmund",
    "restricted-weak",
    "strong-type",
    "distribution",
    "antonov",
    "final-norms",
    "verify-certificate",
)

CONSTANT_DEFAULTS = {
    "C_dens": 16.0,
    "C_size": 4.0,
    "C_tree": 8.0,
    "C_eff": 32.0,
    "C_rw": 64.0,
    "C_dist": 64.0,
    "C_fac": 64.0,
    "C_k": 8.0,
    "C0": 0.25,
    "C_phi": 16.0,
    "C_norm": 64.0,
    "C_strong": 64.0,
    "C_khin": 4.0,
    "growth": 1.25,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    experiment: str
    resolution: int = 10
    lacunary_ratio: float | None = None
    lacunary_list: list | None = None
    m_range: list | None = None
    seed: int = 0
    jobs: int = 1
    trials: int = 20
    k_prime: int | None = None
    out: str | None = None
    format: str = "csv"
    constants: dict = field(default_factory=dict)
    certificate: str | None = None
    function: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: unknown value {self.experiment!r} (choose from {', '.join(EXPERIMENTS)})")
        if not 1 <= int(self.resolution) <= MAX_CLI_RESOLUTION:
            raise ConfigError(f"resolution: must lie in [1, {MAX_CLI_RESOLUTION}], got {self.resolution}")
        self.resolution = int(self.resolution)
        if self.lacunary_ratio is not None and self.lacunary_list is not None:
            raise ConfigError("lacunary_ratio / lacunary_list: give at most one")
        if self.lacunary_ratio is not None and not self.lacunary_ratio > 1:
            raise ConfigError(f"lacunary_ratio: must exceed 1, got {self.lacunary_ratio}")
        if self.lacunary_list is not None:
            try:
                LacunarySequence(tuple(int(n) for n in self.lacunary_list))
            except ValueError as exc:
                raise ConfigError(f"lacunary_list: {exc}") from None
        if self.m_range is None:
            self.m_range = [min(2, self.resolution), min(10, self.resolution)]
        self.m_range = [int(x) for x in self.m_range]
        if len(self.m_range) != 2 or self.m_range[0] > self.m_range[1] or self.m_range[0] < 1:
            raise ConfigError(f"m_range: need 1 <= lo <= hi, got {self.m_range}")
        if self.m_range[1] > self.resolution:
            raise ConfigError(f"m_range: upper end {self.m_range[1]} exceeds the resolution {self.resolution}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format: must be csv or json, got {self.format!r}")
        if self.jobs < 1 or self.trials < 1:
            raise ConfigError("jobs / trials: must be positive")
        for name in self.constants:
            if name not in CONSTANT_DEFAULTS:
                raise ConfigError(f"constants: unknown constant {name!r}")
        if self.k_prime is not None and self.k_prime <= self.resolution:
            raise ConfigError("k_prime: must exceed the resolution")
        if self.experiment == "verify-certificate" and not self.certificate:
            raise ConfigError("certificate: verify-certificate needs a certificate path")

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_json_file(cls, path: str, **overrides) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(data)

    def constant(self, name: str) -> float:
        return float(self.constants.get(name, CONSTANT_DEFAULTS[name]))

    def all_constants(self) -> dict:
        return {k: self.constant(k) for k in CONSTANT_DEFAULTS}

    def sequence(self, K: int | None = None) -> LacunarySequence:
        """Configured lacunary sequence, default powers of two below ``2^K``."""
        K = self.resolution if K is None else K
        if self.lacunary_list is not None:
            return LacunarySequence(tuple(int(n) for n in self.lacunary_list))
        if self.lacunary_ratio is not None:
            return LacunarySequence.geometric(self.lacunary_ratio, (1 << (K - 1)) + 1)
        return LacunarySequence.default(K)

    def echo(self) -> dict:
        d = asdict(self)
        d["constants"] = self.all_constants()
        return d
