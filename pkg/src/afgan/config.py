"""Run configuration and the flat ``key=value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    """A RunConfig invariant is violated or a config file is malformed."""


@dataclass(frozen=True)
class RunConfig:
    """All knobs of one run. Defaults are the desk-scale recipe.

    ``RunConfig.published()`` returns the published training settings
    (256px inputs, 80 generator epochs, 20 detector epochs).
    """

    side: int = 64
    channels: int = 3
    batch_size: int = 16
    gen_lr: float = 1e-3
    det_lr: float = 1e-4
    gen_epochs: int = 10
    det_epochs: int = 5
    finetune_epochs: int = 1
    seed: int = 0
    use_high: bool = True
    use_low: bool = True
    use_non: bool = True
    use_frequency: bool = True
    use_mixup: bool = True
    mixup_alpha: float = 1.0
    real_weight: float = 3.0
    sampler_mode: str = "per-item"  # or "class-ratio"
    target_prop: float = 0.15

    def __post_init__(self):
        self.validate()

    @classmethod
    def published(cls, **overrides) -> "RunConfig":
        base = dict(side=256, gen_lr=1e-4, det_lr=1e-4, gen_epochs=80, det_epochs=20)
        base.update(overrides)
        return cls(**base)

    def validate(self) -> None:
        if self.side < 8:
            raise ConfigError(f"side must be >= 8, got {self.side}")
        if self.use_high and self.side % 64:
            raise ConfigError(f"use_high needs side divisible by 64, got {self.side}")
        if self.use_low and self.side % 2:
            raise ConfigError(f"use_low needs an even side, got {self.side}")
        if self.channels < 1:
            raise ConfigError("channels must be >= 1")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        for name in ("gen_lr", "det_lr", "mixup_alpha", "real_weight"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("gen_epochs", "det_epochs", "finetune_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0 < self.target_prop < 1:
            raise ConfigError(f"target_prop must lie in (0, 1), got {self.target_prop}")
        if self.sampler_mode not in ("per-item", "class-ratio"):
            raise ConfigError(f"unknown sampler_mode {self.sampler_mode!r}")
        if not (self.use_high or self.use_low or self.use_non):
            raise ConfigError("at least one fingerprint generator must be enabled")

    @property
    def levels(self) -> tuple[str, ...]:
        return tuple(
            lvl
            for lvl, on in (("high", self.use_high), ("low", self.use_low), ("non", self.use_non))
            if on
        )

    @property
    def domain(self) -> str:
        return "spectrum" if self.use_frequency else "pixel"

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        values: dict[str, object] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = _coerce(key, value, types[key])
        values.update(overrides)
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path, **overrides) -> "RunConfig":
        return cls.from_text(Path(path).read_text(), **overrides)


def _coerce(key: str, value: str, type_name) -> object:
    name = type_name if isinstance(type_name, str) else type_name.__name__
    try:
        if name == "bool":
            low = value.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(value)
        if name == "int":
            return int(value)
        if name == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {name}") from None
    return value
