"""Image sequences on disk and loop-closure ground truth."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import FrameId, GrayImage, to_grayscale

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
DEFAULT_TOLERANCE = 10
_NUMERIC = re.compile(r"^\d+$")


class LoadError(ValueError):
    pass


def read_image(path) -> GrayImage:
    """Decode an 8-bit image file to intensity. 16-bit and float images are rejected."""
    from PIL import Image, UnidentifiedImageError

    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I;16N", "I", "F"):
                raise LoadError(f"{path}: {mode} images are not 8-bit; convert them first")
            if mode == "L":
                return GrayImage(np.asarray(im, dtype=np.uint8))
            if mode in ("1", "LA"):
                return GrayImage(np.asarray(im.convert("L"), dtype=np.uint8))
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise LoadError(f"{path}: cannot decode image ({exc})") from None
    return to_grayscale(rgb, rgb.shape[1], rgb.shape[0])


def write_image(image: GrayImage, path) -> None:
    from PIL import Image

    Image.fromarray(np.asarray(image.pixels), mode="L").save(path)


def image_size(path) -> tuple[int, int]:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            return im.size
    except (UnidentifiedImageError, OSError) as exc:
        raise LoadError(f"{path}: cannot decode image ({exc})") from None


@dataclass(frozen=True)
class SequenceManifest:
    root: Path
    frames: tuple[tuple[FrameId, Path], ...]
    width: int
    height: int

    def __len__(self):
        return len(self.frames)

    def load(self, frame_id: FrameId) -> GrayImage:
        path = self.frames[frame_id][1]
        image = read_image(path)
        if (image.width, image.height) != (self.width, self.height):
            raise LoadError(
                f"{path}: image is {image.width}x{image.height}, sequence is "
                f"{self.width}x{self.height}"
            )
        return image

    def images(self):
        for fid, _ in self.frames:
            yield fid, self.load(fid)


def load_sequence(root, sample: int = 8) -> SequenceManifest:
    """Index ``root/*.png|*.jpg`` by numeric filename stem.

    Dimensions are checked on an evenly spaced sample here and on every frame
    as it is loaded.
    """
    root = Path(root)
    if not root.is_dir():
        raise LoadError(f"{root}: not a directory")
    files = [p for p in root.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    if not files:
        raise LoadError(f"{root}: no PNG or JPEG images found")
    bad = sorted(p.name for p in files if not _NUMERIC.match(p.stem))
    if bad:
        raise LoadError(f"{root}: non-numeric image names: {', '.join(bad[:5])}")
    files.sort(key=lambda p: (int(p.stem), p.name))
    stems = [int(p.stem) for p in files]
    if len(set(stems)) != len(stems):
        raise LoadError(f"{root}: duplicate numeric stems")

    picks = sorted(set(np.linspace(0, len(files) - 1, min(sample, len(files))).astype(int)))
    sizes = {files[i].name: image_size(files[i]) for i in picks}
    if len(set(sizes.values())) > 1:
        detail = ", ".join(f"{k}={w}x{h}" for k, (w, h) in sizes.items())
        raise LoadError(f"{root}: mixed image dimensions ({detail})")
    width, height = next(iter(sizes.values()))
    return SequenceManifest(root, tuple(enumerate(files)), width, height)


@dataclass(frozen=True)
class GroundTruth:
    """Unordered positive pairs stored as (smaller, larger)."""

    positives: frozenset[tuple[int, int]]
    tolerance: int = DEFAULT_TOLERANCE
    _partners: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        pairs = set()
        for a, b in self.positives:
            a, b = int(a), int(b)
            if a == b:
                raise LoadError(f"self-pair ({a}, {b}) in ground truth")
            if a < 0 or b < 0:
                raise LoadError(f"negative frame id in pair ({a}, {b})")
            pairs.add((min(a, b), max(a, b)))
        object.__setattr__(self, "positives", frozenset(pairs))
        partners: dict[int, set[int]] = {}
        for a, b in pairs:
            partners.setdefault(a, set()).add(b)
            partners.setdefault(b, set()).add(a)
        object.__setattr__(self, "_partners", partners)

    def partners(self, q: FrameId) -> set[int]:
        return self._partners.get(q, set())

    def is_correct(self, query: FrameId, retrieved: FrameId) -> bool:
        return any(abs(retrieved - p) <= self.tolerance for p in self.partners(query))

    def eligible(self, query: FrameId, temporal_gap: int) -> bool:
        """True when the query has a partner old enough to be retrieved."""
        return any(p < query - temporal_gap for p in self.partners(query))


def _parse_csv_pairs(lines, path, n_frames):
    pairs = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise LoadError(f"{path}:{lineno}: expected 'a,b', got {raw!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            if lineno == 1:
                continue  # header
            raise LoadError(f"{path}:{lineno}: non-integer frame id in {raw!r}") from None
        if a == b:
            raise LoadError(f"{path}:{lineno}: self-pair {a},{b}")
        if a < 0 or b < 0 or (n_frames is not None and max(a, b) >= n_frames):
            raise LoadError(f"{path}:{lineno}: frame id out of range in {raw!r}")
        pairs.append((a, b))
    return pairs


def _parse_matrix(lines, path, n_frames):
    rows = []
    for lineno, raw in enumerate(lines, 1):
        if not raw.strip():
            continue
        try:
            rows.append([int(float(v)) for v in raw.split()])
        except ValueError:
            raise LoadError(f"{path}:{lineno}: non-numeric matrix entry") from None
        if len(rows[-1]) != len(rows[0]):
            raise LoadError(
                f"{path}:{lineno}: ragged matrix row ({len(rows[-1])} vs {len(rows[0])})"
            )
    if rows and len(rows) != len(rows[0]):
        raise LoadError(f"{path}: matrix is {len(rows)}x{len(rows[0])}, expected square")
    if n_frames is not None and len(rows) > n_frames:
        raise LoadError(f"{path}: matrix covers {len(rows)} frames, sequence has {n_frames}")
    mat = np.array(rows, dtype=np.int64).reshape(len(rows), len(rows))
    if mat.size and not np.isin(mat, (0, 1)).all():
        raise LoadError(f"{path}: matrix entries must be 0 or 1")
    sym = (mat + mat.T) > 0
    np.fill_diagonal(sym, False)
    a, b = np.nonzero(np.triu(sym))
    return list(zip(a.tolist(), b.tolist()))


def load_ground_truth(path, tolerance: int = DEFAULT_TOLERANCE,
                      n_frames: int | None = None) -> GroundTruth:
    """Read pairs from ``.csv`` ("a,b" lines) or a square 0/1 matrix (``.txt``)."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise LoadError(f"{path}: {exc}") from None
    is_csv = path.suffix.lower() == ".csv" or (
        path.suffix.lower() != ".txt" and any("," in ln for ln in lines)
    )
    parse = _parse_csv_pairs if is_csv else _parse_matrix
    return GroundTruth(frozenset(parse(lines, path, n_frames)), tolerance)


def write_ground_truth(gt: GroundTruth, path) -> None:
    with open(path, "w") as fh:
        for a, b in sorted(gt.positives):
            fh.write(f"{a},{b}\n")
