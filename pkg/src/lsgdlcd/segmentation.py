"""Superpixel-grid segmentation of grayscale images.

Centers are seeded on a regular ``sp`` x ``sp`` grid and refined with
k-means style iterations under the fuse distance

    F = sqrt((spatial / spatial_norm)^2 + (intensity / intensity_norm)^2)

Pixel (row i, column j) sits at continuous position (j + 0.5, i + 0.5), so a
cell spanning columns [0, 40) has its midpoint at x = 20. Each pixel only
considers centers lying strictly within ``sp`` along both axes, plus the
center it was assigned to on the previous pass. Cells keep their grid position for their whole life, so cell
``k = row * n_cols + col`` always refers to the same descriptor slot.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import GrayImage, InputError, SegmentationConfig


@dataclass(frozen=True)
class GridCenter:
    x: float
    y: float
    intensity: float
    cell_row: int
    cell_col: int


@dataclass(frozen=True, eq=False)
class Segmentation:
    labels: np.ndarray  # (height, width) int32 cell ids
    centers: tuple[GridCenter, ...]
    m_rows: int
    n_cols: int
    energy: float
    iterations: int = 0
    energy_trace: tuple[float, ...] = field(default=())

    @property
    def n_cells(self) -> int:
        return self.m_rows * self.n_cols

    def cell_sizes(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.n_cells)


def grid_shape(width: int, height: int, sp: int) -> tuple[int, int]:
    return math.ceil(height / sp), math.ceil(width / sp)


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def init_centers(image: GrayImage, config: SegmentationConfig) -> list[GridCenter]:
    """One center per grid cell, at the midpoint of the cell's pixel span.

    The last row/column of cells may be narrower than ``sp``; their midpoint
    is taken over the remainder span (cell [80, 100) -> 90). The seed
    intensity is read from the pixel containing the midpoint.
    """
    w, h = image.width, image.height
    config.check_image(w, h)
    sp = config.sp
    m, n = grid_shape(w, h, sp)
    centers = []
    for r in range(m):
        y0, y1 = r * sp, min((r + 1) * sp, h)
        y = (y0 + y1) / 2.0  # at most h - 0.5
        for c in range(n):
            x0, x1 = c * sp, min((c + 1) * sp, w)
            x = (x0 + x1) / 2.0
            yi = min(_round_half_up(y - 0.5), h - 1)
            xi = min(_round_half_up(x - 0.5), w - 1)
            centers.append(GridCenter(x, y, float(image.pixels[yi, xi]), r, c))
    return centers


def fuse_distance_sq(cx, cy, ci, px, py, pi, spatial_norm, intensity_norm):
    """Squared fuse distance; works elementwise on numpy arrays.

    Both segmentation and its tests go through this one expression so that
    tie-breaking sees bit-identical values.
    """
    dx = px - cx
    dy = py - cy
    di = (pi - ci) / intensity_norm
    return (dx * dx + dy * dy) / (spatial_norm * spatial_norm) + di * di


def fuse_distance(center: GridCenter, px, config: SegmentationConfig) -> float:
    x, y, intensity = px
    return math.sqrt(
        fuse_distance_sq(
            center.x, center.y, center.intensity,
            float(x), float(y), float(intensity),
            config.spatial_norm, config.intensity_norm,
        )
    )


def pixel_coords(size: int) -> np.ndarray:
    return np.arange(size, dtype=np.float64) + 0.5


def _window(c: float, sp: int, size: int) -> tuple[int, int]:
    # pixel indices p with c - sp < p + 0.5 < c + sp, clipped to [0, size)
    lo = max(math.floor(c - sp - 0.5) + 1, 0)
    hi = min(math.ceil(c + sp - 0.5) - 1, size - 1)
    return lo, hi + 1


def assign(
    intensity: np.ndarray, cx: np.ndarray, cy: np.ndarray, ci: np.ndarray,
    config: SegmentationConfig, previous: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Assignment step. Returns (labels, squared fuse distance per pixel).

    When ``previous`` labels are given, a pixel's current cell stays a
    candidate even if its center drifted out of the window; without this the
    energy can rise between iterations.
    """
    h, w = intensity.shape
    sp = config.sp
    sn, inorm = config.spatial_norm, config.intensity_norm
    best = np.full((h, w), np.inf)
    labels = np.full((h, w), -1, dtype=np.int32)
    xs = pixel_coords(w)
    ys = pixel_coords(h)
    # ascending cell id with strict '<' keeps the lowest id on ties
    for k in range(len(cx)):
        y0, y1 = _window(cy[k], sp, h)
        x0, x1 = _window(cx[k], sp, w)
        if y0 >= y1 or x0 >= x1:
            continue
        d = fuse_distance_sq(
            cx[k], cy[k], ci[k],
            xs[None, x0:x1], ys[y0:y1, None], intensity[y0:y1, x0:x1],
            sn, inorm,
        )
        sub_best = best[y0:y1, x0:x1]
        better = d < sub_best
        sub_best[better] = d[better]
        labels[y0:y1, x0:x1][better] = k

    if previous is not None:
        xx, yy = xs[None, :], ys[:, None]
        px, py = cx[previous], cy[previous]
        outside = (np.abs(xx - px) >= sp) | (np.abs(yy - py) >= sp)
        if outside.any():
            d = fuse_distance_sq(
                px, py, ci[previous], xx, yy, intensity, sn, inorm
            )
            take = outside & ((d < best) | ((d == best) & (previous < labels)))
            best[take] = d[take]
            labels[take] = previous[take]

    orphans = labels < 0
    if orphans.any():
        oy, ox = np.nonzero(orphans)
        fx, fy = xs[ox], ys[oy]
        d2 = (fx[:, None] - cx[None, :]) ** 2 + (fy[:, None] - cy[None, :]) ** 2
        nearest = np.argmin(d2, axis=1)  # first minimum -> lowest id
        labels[oy, ox] = nearest
        best[oy, ox] = fuse_distance_sq(
            cx[nearest], cy[nearest], ci[nearest], fx, fy, intensity[oy, ox],
            sn, inorm,
        )
    return labels, best


def _energy(intensity, labels, cx, cy, ci, config) -> float:
    h, w = intensity.shape
    d = fuse_distance_sq(
        cx[labels], cy[labels], ci[labels],
        pixel_coords(w)[None, :], pixel_coords(h)[:, None], intensity,
        config.spatial_norm, config.intensity_norm,
    )
    return float(d.sum())


def segment(image: GrayImage, config: SegmentationConfig) -> Segmentation:
    """Iterate assignment and mean-update until centers settle.

    Stops when the largest (x, y) center displacement drops below
    ``center_shift_eps`` or after ``max_iters`` assignment passes. Cells that
    lose every pixel keep their previous center. ``energy_trace`` records the
    summed squared fuse distance right after each assignment pass; ``energy``
    is evaluated for the returned labels against the returned centers.
    """
    seeds = init_centers(image, config)
    m, n = grid_shape(image.width, image.height, config.sp)
    k = len(seeds)
    intensity = image.pixels.astype(np.float64)
    h, w = intensity.shape
    cx = np.array([s.x for s in seeds])
    cy = np.array([s.y for s in seeds])
    ci = np.array([s.intensity for s in seeds])

    xx = np.broadcast_to(pixel_coords(w)[None, :], (h, w))
    yy = np.broadcast_to(pixel_coords(h)[:, None], (h, w))
    trace = []
    iterations = 0
    labels = None
    for _ in range(config.max_iters):
        labels, dist = assign(intensity, cx, cy, ci, config, previous=labels)
        trace.append(float(dist.sum()))
        iterations += 1

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=k)
        sx = np.bincount(flat, weights=xx.ravel(), minlength=k)
        sy = np.bincount(flat, weights=yy.ravel(), minlength=k)
        si = np.bincount(flat, weights=intensity.ravel(), minlength=k)
        filled = counts > 0
        nx, ny, ni = cx.copy(), cy.copy(), ci.copy()
        nx[filled] = sx[filled] / counts[filled]
        ny[filled] = sy[filled] / counts[filled]
        ni[filled] = si[filled] / counts[filled]
        shift = float(np.max(np.hypot(nx - cx, ny - cy)))
        cx, cy, ci = nx, ny, ni
        if shift < config.center_shift_eps:
            break

    centers = tuple(
        GridCenter(float(cx[i]), float(cy[i]), float(ci[i]), i // n, i % n)
        for i in range(k)
    )
    return Segmentation(
        labels=labels,
        centers=centers,
        m_rows=m,
        n_cols=n,
        energy=_energy(intensity, labels, cx, cy, ci, config),
        iterations=iterations,
        energy_trace=tuple(trace),
    )


def write_label_image(seg: Segmentation, path) -> None:
    from PIL import Image

    Image.fromarray((seg.labels % 256).astype(np.uint8), mode="L").save(path)


def write_centers_csv(seg: Segmentation, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["cell_row", "cell_col", "x", "y", "intensity"])
        for c in seg.centers:
            out.writerow([c.cell_row, c.cell_col, repr(c.x), repr(c.y), repr(c.intensity)])


def check_dimensions(image: GrayImage, seg: Segmentation) -> None:
    if seg.labels.shape != image.shape:
        raise InputError(
            f"segmentation is {seg.labels.shape[1]}x{seg.labels.shape[0]} "
            f"but image is {image.width}x{image.height}"
        )
