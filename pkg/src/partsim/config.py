"""Flat key=value run configuration shared by the CLI commands."""

from __future__ import annotations

from dataclasses import dataclass, fields

from .admm import AdmmConfig
from .errors import ConfigError


@dataclass
class RunConfig:
    """Everything a training or evaluation run needs.

    Loadable from a ``key = value`` text file (``#`` starts a comment); every
    key can be overridden from the command line.
    """

    train: str = ""
    test: str = ""
    model: str = "model.bin"
    theta_1: float = 0.5
    theta_2: float = 1.0
    eta: float = 0.1
    lam: float = 0.5
    rho: float = 5000.0
    admm_iters: int = 50
    admm_tol: float = 1e-4
    prune_threshold: float = 2e-3
    k: int = 256
    tau: float = 0.25
    top_k: int = 20
    seed: int = 0
    threads: int = 1
    svd_tol: float = 1e-7
    svd_iters: int = 1000
    memory_budget_mb: int = 4096
    dataset: str = ""

    def validate(self) -> "RunConfig":
        if not 0 < self.tau <= 1:
            raise ConfigError(f"tau must be in (0, 1], got {self.tau}")
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.svd_tol <= 0:
            raise ConfigError("svd_tol must be > 0")
        if self.memory_budget_mb < 1:
            raise ConfigError("memory_budget_mb must be >= 1")
        try:
            self.admm()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def admm(self) -> AdmmConfig:
        return AdmmConfig(
            theta_1=self.theta_1,
            theta_2=self.theta_2,
            eta=self.eta,
            lam=self.lam,
            rho=self.rho,
            max_iter=self.admm_iters,
            prune_threshold=self.prune_threshold,
        )

    @property
    def memory_budget_bytes(self) -> int:
        return self.memory_budget_mb << 20

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Apply ``key = value`` lines on top of a base configuration."""
    cfg = base or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _coerce(key, value))
    return cfg


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base=base)


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """Set non-None override values; keys use underscores."""
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown configuration key {key!r}")
        setattr(cfg, key, value)
    return cfg
