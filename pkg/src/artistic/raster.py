"""Tile planning and scanline rasterization of per-layer polygon coverage.

Sampling convention (shared by every tile, which is what makes tiled output
seam-free): global sample column ``g`` sits at chip x
``x0 + (g + 0.5) * step`` and global sample row ``r`` at chip y
``y1 - (r + 0.5) * step`` with ``step = nm_per_px / (supersample * nm_per_dbu)``.
An edge from (xa, ya) to (xb, yb), ya < yb, crosses sample row y when
``ya <= y < yb`` at ``xa + (y - ya) * (xb - xa) / (yb - ya)``; a sample is
right of (covered by) that crossing when its x is ``>=`` the crossing.  Fill
is the union of the polygons, each filled by the nonzero winding rule.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np
from numba import njit

from .gdsii import LayerKey
from .geom import FlatPolygon, PolygonSet, Rect, TileBuckets, bin_polygons
from .png import read_png, write_png

DEFAULT_MAX_TILE_PX = 250_000_000
SUPERSAMPLES = (1, 2, 4, 8)


class RasterError(ValueError):
    pass


@dataclass(frozen=True)
class RenderFrame:
    chip_window: Rect  # dbu
    nm_per_px: float
    out_width_px: int
    out_height_px: int
    supersample: int = 1
    max_tile_px: int = DEFAULT_MAX_TILE_PX
    nm_per_dbu: float = 1.0

    def __post_init__(self):
        if not self.nm_per_px > 0:
            raise RasterError("nm_per_px must be positive")
        if self.supersample not in SUPERSAMPLES:
            raise RasterError(f"supersample must be one of {SUPERSAMPLES}")
        if self.out_width_px < 1 or self.out_height_px < 1:
            raise RasterError("output raster must be at least 1x1 px")

    @classmethod
    def for_window(cls, window: Rect, nm_per_px: float, supersample: int = 1,
                   max_tile_px: int = DEFAULT_MAX_TILE_PX, nm_per_dbu: float = 1.0,
                   multiple: int = 1) -> "RenderFrame":
        """Frame covering ``window``; pixel dims rounded up to ``multiple``."""
        if not nm_per_px > 0:
            raise RasterError("nm_per_px must be positive")
        x0, y0, x1, y1 = window
        w = max(1, math.ceil((x1 - x0) * nm_per_dbu / nm_per_px))
        h = max(1, math.ceil((y1 - y0) * nm_per_dbu / nm_per_px))
        w = -(-w // multiple) * multiple
        h = -(-h // multiple) * multiple
        return cls(tuple(window), nm_per_px, w, h, supersample, max_tile_px, nm_per_dbu)

    @property
    def px_dbu(self) -> float:
        return self.nm_per_px / self.nm_per_dbu

    @property
    def sample_step(self) -> float:
        return self.nm_per_px / (self.supersample * self.nm_per_dbu)


@dataclass(frozen=True)
class TileGrid:
    tile_w: int
    tile_h: int
    cols: int
    rows: int
    width: int
    height: int

    def tile_rect(self, col: int, row: int) -> tuple[int, int, int, int]:
        """(x, y, w, h) in output pixels; edge tiles may be smaller."""
        x, y = col * self.tile_w, row * self.tile_h
        return x, y, min(self.tile_w, self.width - x), min(self.tile_h, self.height - y)

    def tiles(self) -> Iterator[tuple[int, int]]:
        for row in range(self.rows):
            for col in range(self.cols):
                yield col, row

    def __len__(self) -> int:
        return self.cols * self.rows


@dataclass
class CoverageTile:
    col: int
    row: int
    width: int
    height: int
    coverage: np.ndarray  # (height, width) uint8, 255 = fully covered


def tile_edge(max_tile_px: int) -> int:
    """Square tile edge for a pixel cap: isqrt, rounded down to a multiple of 8.

    >>> tile_edge(2500), tile_edge(512 * 512)
    (48, 512)
    """
    if max_tile_px < 64:
        raise RasterError("max_tile_px must be at least 64")
    return math.isqrt(int(max_tile_px)) // 8 * 8


def plan_tiles(frame: RenderFrame) -> TileGrid:
    """Square tiles of edge floor(sqrt(cap)) snapped down to a multiple of 8."""
    edge = tile_edge(frame.max_tile_px)
    w, h = frame.out_width_px, frame.out_height_px
    tw, th = min(w, edge), min(h, edge)
    return TileGrid(tw, th, -(-w // tw), -(-h // th), w, h)


# -- kernel -----------------------------------------------------------------


@njit(cache=True, nogil=True)
def _first_row_below(wy1, step, yv, lo, hi):
    # first global sample row r in [lo, hi] with wy1 - (r + 0.5) * step < yv
    est = math.floor((wy1 - yv) / step - 0.5) + 1.0
    if est < lo:
        r = lo
    elif est > hi:
        r = hi
    else:
        r = int(est)
    while r > lo and wy1 - (r - 1 + 0.5) * step < yv:
        r -= 1
    while r < hi and not (wy1 - (r + 0.5) * step < yv):
        r += 1
    return r


@njit(cache=True, nogil=True)
def _rasterize(coords, offsets, poly_idx, wx0, wy1, step, s, px0, py0, width, height):
    ne = 0
    for pi in poly_idx:
        ne += offsets[pi + 1] - offsets[pi]
    exlo = np.empty(ne)
    eylo = np.empty(ne)
    exhi = np.empty(ne)
    eyhi = np.empty(ne)
    edir = np.empty(ne, dtype=np.int64)
    epoly = np.empty(ne, dtype=np.int64)
    er0 = np.empty(ne, dtype=np.int64)
    er1 = np.empty(ne, dtype=np.int64)
    ws = width * s
    hs = height * s
    g0 = px0 * s
    rlo = py0 * s
    rhi = rlo + hs

    m = 0
    for li in range(len(poly_idx)):
        pi = poly_idx[li]
        a = offsets[pi]
        b = offsets[pi + 1]
        for v in range(a, b):
            w = v + 1 if v + 1 < b else a
            x0 = coords[v, 0]
            y0 = coords[v, 1]
            x1 = coords[w, 0]
            y1 = coords[w, 1]
            if y0 == y1:
                continue
            if y0 < y1:
                xl, yl, xh, yh, d = x0, y0, x1, y1, 1
            else:
                xl, yl, xh, yh, d = x1, y1, x0, y0, -1
            r0 = _first_row_below(wy1, step, float(yh), rlo, rhi)
            r1 = _first_row_below(wy1, step, float(yl), rlo, rhi)
            if r1 <= r0:
                continue
            exlo[m] = xl
            eylo[m] = yl
            exhi[m] = xh
            eyhi[m] = yh
            edir[m] = d
            epoly[m] = li
            er0[m] = r0
            er1[m] = r1
            m += 1

    order = np.argsort(er0[:m], kind="mergesort")
    active = np.empty(m, dtype=np.int64)
    na = 0
    nxt = 0
    kc = np.empty(m, dtype=np.int64)
    kd = np.empty(m, dtype=np.int64)
    kp = np.empty(m, dtype=np.int64)
    ke = np.empty(m, dtype=np.int64)
    wind = np.zeros(len(poly_idx), dtype=np.int64)
    counts = np.zeros(width, dtype=np.int64)
    out = np.zeros((height, width), dtype=np.uint8)
    s2 = s * s

    for q in range(hs):
        r = rlo + q
        while nxt < m and er0[order[nxt]] <= r:
            active[na] = order[nxt]
            na += 1
            nxt += 1
        y = wy1 - (r + 0.5) * step
        nc = 0
        for ai in range(na):
            e = active[ai]
            if er1[e] <= r:
                continue
            xc = exlo[e] + (y - eylo[e]) * (exhi[e] - exlo[e]) / (eyhi[e] - eylo[e])
            est = math.ceil((xc - wx0) / step - 0.5) - g0
            if est < 0:
                k = 0
            elif est > ws:
                k = ws
            else:
                k = int(est)
            while k > 0 and wx0 + (g0 + k - 1 + 0.5) * step >= xc:
                k -= 1
            while k < ws and wx0 + (g0 + k + 0.5) * step < xc:
                k += 1
            # insertion keeps the crossings sorted by sample index
            j = nc
            while j > 0 and kc[j - 1] > k:
                kc[j] = kc[j - 1]
                kd[j] = kd[j - 1]
                kp[j] = kp[j - 1]
                ke[j] = ke[j - 1]
                j -= 1
            kc[j] = k
            kd[j] = edir[e]
            kp[j] = epoly[e]
            ke[j] = e
            nc += 1
        # active edges stay ordered by crossing, so the next row's insertion
        # sort sees nearly sorted input
        for i in range(nc):
            active[i] = ke[i]
        na = nc

        # union of per-polygon nonzero fills: count polygons with winding != 0
        inside = 0
        prev = 0
        for i in range(nc):
            k = kc[i]
            if inside > 0 and k > prev:
                if s == 1:
                    for t in range(prev, k):
                        counts[t] += 1
                else:
                    for t in range(prev, k):
                        counts[t // s] += 1
            p = kp[i]
            before = wind[p]
            wind[p] = before + kd[i]
            if before == 0:
                inside += 1
            elif wind[p] == 0:
                inside -= 1
            prev = k
        if inside > 0 and prev < ws:
            for t in range(prev, ws):
                counts[t // s] += 1
        for i in range(nc):
            wind[kp[i]] = 0

        if (q + 1) % s == 0:
            row = q // s
            for i in range(width):
                out[row, i] = (510 * counts[i] + s2) // (2 * s2)
                counts[i] = 0
    return out


# -- public API -------------------------------------------------------------


def _as_polygon_set(polys, layer: LayerKey) -> PolygonSet:
    if isinstance(polys, PolygonSet):
        return polys
    return PolygonSet.from_polygons(layer, polys)


def rasterize_tile(polys: Union[PolygonSet, Sequence[FlatPolygon]], layer: LayerKey,
                   frame: RenderFrame, grid: TileGrid, col: int, row: int,
                   bucket: Optional[np.ndarray] = None) -> CoverageTile:
    """Coverage of one tile.  ``bucket`` restricts to those polygon indices."""
    ps = _as_polygon_set(polys, layer)
    if bucket is None:
        bucket = np.arange(len(ps), dtype=np.int64)
    x, y, w, h = grid.tile_rect(col, row)
    wx0, _, _, wy1 = frame.chip_window
    cov = _rasterize(ps.coords, ps.offsets, np.asarray(bucket, dtype=np.int64),
                     float(wx0), float(wy1), frame.sample_step, frame.supersample,
                     x, y, w, h)
    return CoverageTile(col, row, w, h, cov)


def bucket_layer(polys: PolygonSet, frame: RenderFrame, grid: TileGrid) -> TileBuckets:
    wx0, _, _, wy1 = frame.chip_window
    return bin_polygons(polys, wx0, wy1, grid.tile_w * frame.px_dbu,
                        grid.tile_h * frame.px_dbu, grid.cols, grid.rows)


def render_layer(polys: PolygonSet, frame: RenderFrame, grid: Optional[TileGrid] = None,
                 buckets: Optional[TileBuckets] = None, jobs: int = 1) -> Iterator[CoverageTile]:
    """Every tile of the grid exactly once, in row-major order."""
    grid = grid or plan_tiles(frame)
    buckets = buckets or bucket_layer(polys, frame, grid)

    def one(t):
        return rasterize_tile(polys, polys.layer, frame, grid, t[0], t[1], buckets.bucket(*t))

    yield from parallel_map(one, grid.tiles(), jobs)


def parallel_map(fn, items: Iterable, jobs: int = 1, window: Optional[int] = None) -> Iterator:
    """Ordered map over a thread pool with a bounded number of tasks in flight."""
    if jobs <= 1:
        yield from map(fn, items)
        return
    window = window or 2 * jobs
    with ThreadPoolExecutor(jobs) as pool:
        pending = []
        for item in items:
            pending.append(pool.submit(fn, item))
            if len(pending) >= window:
                yield pending.pop(0).result()
        for fut in pending:
            yield fut.result()


def default_jobs() -> int:
    return os.cpu_count() or 1


# -- debug dump -------------------------------------------------------------


def tile_filename(layer: LayerKey, col: int, row: int) -> str:
    return f"L{layer.layer}_D{layer.datatype}_tx{col}_ty{row}.png"


def dump_tile(tile: CoverageTile, layer: LayerKey, directory) -> str:
    path = os.path.join(directory, tile_filename(layer, tile.col, tile.row))
    write_png(path, tile.coverage, level=1)
    return path


def load_tile(layer: LayerKey, col: int, row: int, directory) -> CoverageTile:
    cov = read_png(os.path.join(directory, tile_filename(layer, col, row)))
    if cov.ndim != 2:
        raise RasterError(f"coverage tile {tile_filename(layer, col, row)} is not greyscale")
    return CoverageTile(col, row, cov.shape[1], cov.shape[0], np.ascontiguousarray(cov))
