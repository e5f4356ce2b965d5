"""Run configuration and its ``key = value`` text format.

Lines are ``key = value``; ``#`` starts a comment; dotted keys address
nested settings (``grid.stride = 4``); vectors are comma-separated.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

from .exceptions import ConfigError
from .vpf_layer import SCATTER_MODES
from .voxel_grid import GridConfig


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    c_v: int = 64
    c_p: int = 64
    stride: int = 4  # camera feature-map stride
    density_cap: int = 35
    occlusion_ignore_depth: bool = False
    scatter: str = "bilinear"
    align_samples: int = 4
    seed: int = 0  # fusion weights
    feature_seed: int = 0  # surrogate voxel features
    backbone_seed: int = 0  # surrogate camera backbone
    iou_car: float = 0.7
    iou_pedestrian: float = 0.5
    iou_cyclist: float = 0.5
    sample: Optional[str] = None  # KITTI-layout root; defaults to the bundled sample
    frame: str = "000000"
    velodyne: Optional[str] = None
    calib: Optional[str] = None
    image: Optional[str] = None
    labels: Optional[str] = None
    weights: Optional[str] = None
    det_dir: Optional[str] = None
    label_dir: Optional[str] = None

    def validate(self):
        if self.scatter not in SCATTER_MODES:
            raise ConfigError(f"scatter must be one of {SCATTER_MODES}, got {self.scatter!r}")
        if self.stride not in (1, 2, 4, 8):
            raise ConfigError(f"stride must be one of 1, 2, 4, 8, got {self.stride}")
        if self.c_v < 4 or self.c_p < 3:
            raise ConfigError(f"need c_v >= 4 and c_p >= 3, got {self.c_v}, {self.c_p}")
        if self.align_samples not in (1, 4):
            raise ConfigError(f"align_samples must be 1 or 4, got {self.align_samples}")
        if self.density_cap < 1:
            raise ConfigError("density_cap must be positive")
        return self

    @property
    def iou_thresholds(self):
        return {"Car": self.iou_car, "Pedestrian": self.iou_pedestrian, "Cyclist": self.iou_cyclist}

    def items(self):
        """Flat ``(dotted_key, value)`` pairs in a fixed order."""
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "grid":
                for g in dataclasses.fields(GridConfig):
                    yield f"grid.{g.name}", getattr(value, g.name)
            else:
                yield f.name, value

    def to_text(self):
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.items())

    def set(self, key, raw):
        key = key.strip()
        if key.startswith("grid."):
            name = key[5:]
            names = {g.name: g for g in dataclasses.fields(GridConfig)}
            if name not in names:
                raise ConfigError(f"unknown config key {key!r}")
            current = getattr(self.grid, name)
            value = _parse(raw, current, key)
            self.grid = dataclasses.replace(self.grid, **{name: value})
            return
        names = {f.name: f for f in dataclasses.fields(self)}
        if key not in names or key == "grid":
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(self, key)
        kind = names[key].type
        if current is None or kind.startswith("Optional"):
            setattr(self, key, None if raw.strip() in ("", "none", "None") else raw.strip())
        else:
            setattr(self, key, _parse(raw, current, key))


def _format(v):
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    return str(v)


def _parse(raw, like, key):
    raw = raw.strip()
    try:
        if isinstance(like, bool):
            if raw.lower() in ("true", "yes", "1", "on"):
                return True
            if raw.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        if isinstance(like, tuple):
            return tuple(float(x) for x in raw.split(","))
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text, config=None) -> RunConfig:
    config = config if config is not None else RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        config.set(key, value)
    return config
