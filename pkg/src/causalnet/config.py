"""Run configuration and its plain-text ``key=value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Union

INPUT_MODES = ("full", "onset_apex", "apex_only")
NOISE_PROTOCOLS = ("train_test", "test_only")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    # model
    dim: int = 256
    heads: int = 1
    gamma: float = 0.1
    grid: int = 2
    radius: float = 1.0
    residual_norm: bool = True
    n_blocks: int = 1
    share_flow_encoder: bool = True
    enc_width: int = 32
    n_classes: int = 3
    # optimisation
    lr: float = 5e-5
    epochs: int = 800
    batch_size: int = 64
    weight_decay: float = 0.0
    # inputs
    tau: float = 0.1
    flow_estimator: str = "farneback"
    inputs_mode: str = "full"
    # robustness protocol: noise on train+test key frames, or test only
    noise_protocol: str = "train_test"
    # debug: predict the true label (harness sanity check)
    oracle: bool = False

    def __post_init__(self):
        if self.inputs_mode not in INPUT_MODES:
            raise ConfigError(f"inputs_mode must be one of {INPUT_MODES}, got {self.inputs_mode!r}")
        if self.noise_protocol not in NOISE_PROTOCOLS:
            raise ConfigError(f"noise_protocol must be one of {NOISE_PROTOCOLS}, got {self.noise_protocol!r}")
        if self.dim % self.heads:
            raise ConfigError(f"dim={self.dim} not divisible by heads={self.heads}")
        if self.gamma <= 0:
            raise ConfigError("gamma must be > 0")
        for name in ("dim", "heads", "grid", "n_blocks", "enc_width", "epochs", "batch_size", "n_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        lines = [f"{f.name}={_format(getattr(self, f.name))}" for f in fields(self)]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str, source: str = "<config>", require_all: bool = True) -> "Config":
        """Parse ``key=value`` lines; ``#`` starts a comment.

        With ``require_all`` every field must be present, so a config file is
        a complete record of the run.
        """
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
            try:
                values[key] = _parse(value, types[key])
            except ValueError as e:
                raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {e}") from None
        if require_all:
            missing = [k for k in types if k not in values]
            if missing:
                raise ConfigError(f"{source}: missing config key(s): {', '.join(missing)}")
        try:
            return cls(**values)
        except ConfigError as e:
            raise ConfigError(f"{source}: {e}") from None

    @classmethod
    def load(cls, path: Union[str, Path], require_all: bool = True) -> "Config":
        path = Path(path)
        return cls.loads(path.read_text(), source=str(path), require_all=require_all)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _parse(value: str, type_name):
    type_name = getattr(type_name, "__name__", type_name)
    if type_name == "bool":
        low = value.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if type_name == "int":
        return int(value)
    if type_name == "float":
        return float(value)
    return value


# Small, fast settings used for desk-scale synthetic experiments.
DESK_SCALE = Config(dim=32, enc_width=16, lr=1e-3, epochs=100, batch_size=16)
