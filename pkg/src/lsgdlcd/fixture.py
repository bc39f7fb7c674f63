"""Deterministic synthetic sequences with planted revisits.

Randomness comes from a 64-bit linear congruential generator with Knuth's
MMIX constants,

    state <- (6364136223846793005 * state + 1442695040888963407) mod 2**64

so any implementation can reproduce the fixtures bit for bit. The seed is
the initial state. Uniform doubles use the top 53 bits of the new state;
bounded integers use ``lo + (state >> 32) % (hi - lo + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import GrayImage
from .dataset import GroundTruth, write_ground_truth, write_image

LCG_MULTIPLIER = 6364136223846793005
LCG_INCREMENT = 1442695040888963407
_MASK = (1 << 64) - 1


class Lcg64:
    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (LCG_MULTIPLIER * self.state + LCG_INCREMENT) & _MASK
        return self.state

    def uniform(self) -> float:
        """Double in [0, 1)."""
        return (self.next_u64() >> 11) / float(1 << 53)

    def integer(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi], both inclusive."""
        return lo + (self.next_u64() >> 32) % (hi - lo + 1)

    def integers(self, lo: int, hi: int, count: int) -> np.ndarray:
        return np.array([self.integer(lo, hi) for _ in range(count)], dtype=np.int64)

    def sample(self, population: int, k: int) -> list[int]:
        """k distinct values from range(population), partial Fisher-Yates."""
        pool = list(range(population))
        for i in range(k):
            j = self.integer(i, population - 1)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]


@dataclass(frozen=True)
class FixtureSpec:
    frames: int = 20
    revisits: int = 0
    noise: int = 0
    width: int = 64
    height: int = 64
    groups: int = 0  # 0: every base frame is an independent scene
    spread: int = 24  # per-node perturbation of a frame around its group scene
    coarse: int = 8  # control-point spacing of the smooth fields, pixels
    seed: int = 1
    sources: tuple[int, ...] | None = None


def _upsample(grid: np.ndarray, width: int, height: int, step: int) -> np.ndarray:
    # bilinear interpolation of control points placed every `step` pixels
    gx = np.arange(width) / step
    gy = np.arange(height) / step
    x0 = np.floor(gx).astype(int)
    y0 = np.floor(gy).astype(int)
    fx = gx - x0
    fy = gy - y0
    top = grid[y0][:, x0] * (1 - fx) + grid[y0][:, x0 + 1] * fx
    bot = grid[y0 + 1][:, x0] * (1 - fx) + grid[y0 + 1][:, x0 + 1] * fx
    return top * (1 - fy)[:, None] + bot * fy[:, None]


def _field(values: np.ndarray, spec: FixtureSpec) -> GrayImage:
    img = _upsample(values.astype(np.float64), spec.width, spec.height, spec.coarse)
    return GrayImage(np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8))


def default_sources(rng: Lcg64, frames: int, revisits: int) -> list[int]:
    """Sorted distinct base frames from the first half of the sequence.

    Falls back to the whole base range when the first half is too small.
    """
    pool = frames // 2 if revisits <= frames // 2 else frames
    if revisits > pool:
        raise ValueError(f"cannot draw {revisits} distinct sources from {frames} frames")
    return sorted(rng.sample(pool, revisits))


def generate(spec: FixtureSpec) -> tuple[list[GrayImage], GroundTruth]:
    """Base frames followed by revisits; ground truth pairs each revisit with its source."""
    if spec.frames < 1:
        raise ValueError("need at least one base frame")
    if spec.noise < 0 or spec.noise > 255:
        raise ValueError("noise must lie in [0, 255]")
    rng = Lcg64(spec.seed)
    gh = math.ceil(spec.height / spec.coarse) + 2
    gw = math.ceil(spec.width / spec.coarse) + 2
    nodes = gh * gw

    images = []
    if spec.groups > 0:
        groups = min(spec.groups, spec.frames)
        scenes = [rng.integers(0, 255, nodes) for _ in range(groups)]
        for i in range(spec.frames):
            scene = scenes[i * groups // spec.frames]
            jitter = rng.integers(-spec.spread, spec.spread, nodes) if spec.spread else 0
            values = np.clip(scene + jitter, 0, 255)
            images.append(_field(values.reshape(gh, gw), spec))
    else:
        for _ in range(spec.frames):
            images.append(_field(rng.integers(0, 255, nodes).reshape(gh, gw), spec))

    if spec.sources is not None:
        sources = list(spec.sources)
        if len(sources) != spec.revisits:
            raise ValueError(f"{len(sources)} sources given for {spec.revisits} revisits")
        if any(s < 0 or s >= spec.frames for s in sources):
            raise ValueError("revisit sources must be base frame indices")
    else:
        sources = default_sources(rng, spec.frames, spec.revisits)

    pairs = []
    for k, src in enumerate(sources):
        base = images[src].pixels.astype(np.int64)
        if spec.noise:
            delta = rng.integers(-spec.noise, spec.noise, base.size).reshape(base.shape)
            base = np.clip(base + delta, 0, 255)
        images.append(GrayImage(base.astype(np.uint8)))
        pairs.append((src, spec.frames + k))
    return images, GroundTruth(frozenset(pairs))


def write_fixture(spec: FixtureSpec, root, gt_name: str = "ground_truth.csv") -> GroundTruth:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    images, gt = generate(spec)
    digits = max(6, len(str(len(images) - 1)))
    for i, image in enumerate(images):
        write_image(image, root / f"{i:0{digits}d}.png")
    write_ground_truth(gt, root / gt_name)
    return gt
