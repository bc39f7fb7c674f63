"""Per-cell intensity histograms (LSGD) and the similarity between them."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import GrayImage, InputError
from .segmentation import Segmentation, check_dimensions

N_BINS = 256
_HEADER = struct.Struct("<III")


@dataclass(frozen=True, eq=False)
class Lsgd:
    """Grid of raw-count intensity histograms, shape (m_rows, n_cols, 256)."""

    counts: np.ndarray
    total_pixels: int

    def __post_init__(self):
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if counts.ndim != 3 or counts.shape[2] != N_BINS:
            raise InputError(f"expected (M, N, {N_BINS}) counts, got {counts.shape}")
        if counts.size and counts.min() < 0:
            raise InputError("histogram counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total_pixels", int(self.total_pixels))

    @property
    def m_rows(self) -> int:
        return self.counts.shape[0]

    @property
    def n_cols(self) -> int:
        return self.counts.shape[1]

    @property
    def geometry(self) -> tuple[int, int, int]:
        return self.m_rows, self.n_cols, self.total_pixels

    def cell(self, row: int, col: int) -> np.ndarray:
        return self.counts[row, col]

    def mass(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        if not isinstance(other, Lsgd):
            return NotImplemented
        return self.total_pixels == other.total_pixels and np.array_equal(
            self.counts, other.counts
        )

    __hash__ = None

    def to_bytes(self) -> bytes:
        """Little-endian u32 header (M, N, total_pixels) then M*N*256 u32 counts."""
        return _HEADER.pack(self.m_rows, self.n_cols, self.total_pixels) + \
            self.counts.astype("<u4").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Lsgd":
        if len(blob) < _HEADER.size:
            raise InputError("descriptor blob shorter than its header")
        m, n, total = _HEADER.unpack_from(blob)
        expected = _HEADER.size + 4 * m * n * N_BINS
        if len(blob) != expected:
            raise InputError(f"descriptor blob is {len(blob)} bytes, expected {expected}")
        counts = np.frombuffer(blob, dtype="<u4", offset=_HEADER.size)
        return cls(counts.reshape(m, n, N_BINS), total)

    @staticmethod
    def blob_size(m_rows: int, n_cols: int) -> int:
        return _HEADER.size + 4 * m_rows * n_cols * N_BINS


def extract_lsgd(image: GrayImage, seg: Segmentation) -> Lsgd:
    check_dimensions(image, seg)
    keys = seg.labels.ravel().astype(np.int64) * N_BINS + image.pixels.ravel()
    counts = np.bincount(keys, minlength=seg.n_cells * N_BINS)
    return Lsgd(counts.reshape(seg.m_rows, seg.n_cols, N_BINS), image.width * image.height)


def l1_cell_distance(a, b) -> int:
    return int(np.abs(np.asarray(a, dtype=np.int64) - np.asarray(b, dtype=np.int64)).sum())


def l1_distance(q: Lsgd, d: Lsgd) -> int:
    """Summed per-cell L1 distance between two descriptors."""
    _check_pair(q, d)
    return int(np.abs(q.counts - d.counts).sum())


def similarity_from_distance(distance, total_pixels: int):
    # D <= 2 * total_pixels because each side carries total_pixels of mass
    return 1.0 - distance / (2.0 * total_pixels)


def sim_score(q: Lsgd, d: Lsgd) -> float:
    """Similarity in [0, 1]; 1 means identical histograms in every cell."""
    return similarity_from_distance(l1_distance(q, d), q.total_pixels)


def _check_pair(q: Lsgd, d: Lsgd) -> None:
    if q.geometry != d.geometry:
        raise InputError(f"descriptor geometry mismatch: {q.geometry} vs {d.geometry}")


class DescriptorStack:
    """Append-only matrix of flattened descriptors for batched scoring."""

    def __init__(self, geometry: tuple[int, int, int] | None = None):
        self.geometry = geometry
        self._rows = np.empty((0, 0), dtype=np.int64)
        self._size = 0

    def __len__(self):
        return self._size

    def append(self, desc: Lsgd) -> None:
        if self.geometry is None:
            self.geometry = desc.geometry
        elif desc.geometry != self.geometry:
            raise InputError(
                f"descriptor geometry mismatch: {desc.geometry} vs {self.geometry}"
            )
        flat = desc.counts.reshape(-1)
        if self._size == self._rows.shape[0]:
            grown = np.empty((max(8, 2 * self._size), flat.size), dtype=np.int64)
            if self._size:
                grown[: self._size] = self._rows[: self._size]
            self._rows = grown
        self._rows[self._size] = flat
        self._size += 1

    def distances(self, query: Lsgd, stop: int | None = None) -> np.ndarray:
        """L1 distances from ``query`` to rows [0, stop)."""
        stop = self._size if stop is None else min(stop, self._size)
        if stop <= 0:
            return np.empty(0, dtype=np.int64)
        if query.geometry != self.geometry:
            raise InputError(
                f"descriptor geometry mismatch: {query.geometry} vs {self.geometry}"
            )
        return np.abs(self._rows[:stop] - query.counts.reshape(1, -1)).sum(axis=1)

    def scores(self, query: Lsgd, stop: int | None = None) -> np.ndarray:
        return similarity_from_distance(self.distances(query, stop), query.total_pixels)
