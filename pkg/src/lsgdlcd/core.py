"""Shared value types and configuration."""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

FrameId = int


class ConfigError(ValueError):
    pass


class InputError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit intensity raster stored as a (height, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise InputError(f"expected a non-empty 2-D raster, got shape {px.shape}")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise InputError("intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    @classmethod
    def from_flat(cls, values, width: int, height: int) -> "GrayImage":
        arr = np.asarray(values)
        if arr.size != width * height:
            raise InputError(
                f"pixel count {arr.size} does not match {width}x{height}"
            )
        return cls(arr.reshape(height, width))

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    __hash__ = None


def to_grayscale(rgb, width: int, height: int) -> GrayImage:
    """Convert RGB triples to intensity with BT.601 weights, rounding half up.

    Integer arithmetic keeps the rounding exact: 0.299R + 0.587G + 0.114B is
    evaluated as (299R + 587G + 114B + 500) // 1000.
    """
    arr = np.asarray(rgb, dtype=np.int64)
    if arr.size != width * height * 3:
        raise InputError(
            f"expected {width * height} RGB triples for {width}x{height}, "
            f"got {arr.size / 3:g}"
        )
    arr = arr.reshape(height, width, 3)
    gray = (299 * arr[..., 0] + 587 * arr[..., 1] + 114 * arr[..., 2] + 500) // 1000
    return GrayImage(np.clip(gray, 0, 255).astype(np.uint8))


@dataclass(frozen=True)
class SegmentationConfig:
    sp: int = 40
    spatial_norm: float | None = None  # None -> sp
    intensity_norm: float = 10.0
    max_iters: int = 10
    center_shift_eps: float = 0.5

    def __post_init__(self):
        if self.spatial_norm is None:
            object.__setattr__(self, "spatial_norm", float(self.sp))
        if int(self.sp) != self.sp or self.sp < 2:
            raise ConfigError(f"sp must be an integer >= 2, got {self.sp}")
        if self.spatial_norm <= 0 or self.intensity_norm <= 0:
            raise ConfigError("spatial_norm and intensity_norm must be positive")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError(f"max_iters must be a positive integer, got {self.max_iters}")
        if self.center_shift_eps < 0:
            raise ConfigError("center_shift_eps must be non-negative")

    def check_image(self, width: int, height: int) -> None:
        if self.sp > min(width, height):
            raise ConfigError(
                f"sp exceeds image dimensions: sp={self.sp}, image {width}x{height}"
            )


class Mode(enum.Enum):
    EXHAUSTIVE = "exhaustive"
    NODES = "nodes"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        key = str(value).strip().lower()
        aliases = {"dynamicnodes": "nodes", "dynamic_nodes": "nodes", "dn": "nodes"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown mode {value!r}; use exhaustive or nodes") from None


@dataclass(frozen=True)
class PipelineConfig:
    alpha: float = 0.6
    beta: float = 0.65
    temporal_gap: int = 50
    top_n: int = 10
    accept_threshold: float = 0.5
    mode: Mode = Mode.NODES

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.accept_threshold <= 1.0:
            raise ConfigError(f"accept_threshold must lie in [0, 1], got {self.accept_threshold}")
        if self.beta < 0:
            raise ConfigError(f"beta must be non-negative, got {self.beta}")
        if int(self.temporal_gap) != self.temporal_gap or self.temporal_gap < 0:
            raise ConfigError(f"temporal_gap must be a non-negative integer, got {self.temporal_gap}")
        if int(self.top_n) != self.top_n or self.top_n < 1:
            raise ConfigError(f"top_n must be a positive integer, got {self.top_n}")


def _coerce(value: str, current):
    if isinstance(current, Mode):
        return Mode.parse(value)
    if isinstance(current, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(value)
    if value.strip().lower() in ("none", ""):
        return None
    return float(value)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_configs(
    values: dict[str, object] | None = None,
    seg: SegmentationConfig | None = None,
    pipe: PipelineConfig | None = None,
) -> tuple[SegmentationConfig, PipelineConfig]:
    """Apply flat key/value overrides onto (possibly default) configs.

    Unknown keys raise, so a typo in a config file is never silently ignored.
    """
    seg = seg or SegmentationConfig()
    pipe = pipe or PipelineConfig()
    seg_fields = {f.name for f in fields(SegmentationConfig)}
    pipe_fields = {f.name for f in fields(PipelineConfig)}
    seg_kw, pipe_kw = {}, {}
    for key, value in (values or {}).items():
        if key in seg_fields:
            target, defaults = seg_kw, SegmentationConfig()
        elif key in pipe_fields:
            target, defaults = pipe_kw, PipelineConfig()
        else:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            value = _coerce(value, getattr(defaults, key))
        target[key] = value
    if "sp" in seg_kw and "spatial_norm" not in seg_kw and seg.spatial_norm == seg.sp:
        # spatial_norm tracks sp unless pinned explicitly
        seg_kw["spatial_norm"] = None
    return replace(seg, **seg_kw), replace(pipe, **pipe_kw)


def load_config_file(path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text())


def config_snapshot(seg: SegmentationConfig, pipe: PipelineConfig) -> dict:
    snap = {f.name: getattr(seg, f.name) for f in fields(seg)}
    for f in fields(pipe):
        value = getattr(pipe, f.name)
        snap[f.name] = value.value if isinstance(value, Mode) else value
    return snap
