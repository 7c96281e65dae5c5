"""Run configuration: a flat ``key = value`` text file with a fixed key set."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidArgument, SchemaError
from .inference import KINDS, StrategyConfig


@dataclass(frozen=True)
class RunConfig:
    n_quantiles: int = 100
    tau_low: float = 0.25
    tau_high: float = 0.7
    k: float = 0.5
    hidden_sizes: tuple[int, ...] = (64, 32)
    optimizer: str = "adam"
    lr: float = 1e-3
    epochs: int = 20
    batch_size: int = 256
    seed: int = 42
    n_dims: int = 2048
    strategy: str = "cde"

    def __post_init__(self):
        if self.n_quantiles < 1:
            raise InvalidArgument("n_quantiles must be >= 1")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise InvalidArgument("hidden_sizes needs at least one positive layer width")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidArgument(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if not self.lr > 0:
            raise InvalidArgument("lr must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidArgument("epochs and batch_size must be >= 1")
        if self.n_dims < 2:
            raise InvalidArgument("n_dims must be >= 2")
        if self.strategy not in KINDS:
            raise InvalidArgument(f"strategy must be one of {KINDS}, got {self.strategy!r}")
        self.strategy_config()  # validates tau_low / tau_high / k

    def strategy_config(self, kind=None) -> StrategyConfig:
        return StrategyConfig(kind or self.strategy, self.tau_low, self.tau_high, self.k)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_lines(self):
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "hidden_sizes":
                v = ",".join(str(h) for h in v)
            out.append(f"{f.name} = {v}")
        return out


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(key, raw: str):
    default = getattr(RunConfig, key, None)
    try:
        if key == "hidden_sizes":
            return tuple(int(p) for p in raw.split(",") if p.strip())
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise SchemaError(f"config key {key!r}: cannot parse {raw!r}") from exc
    return raw


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise SchemaError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return (base or RunConfig()).replace(**values)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
