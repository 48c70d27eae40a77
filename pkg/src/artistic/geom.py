"""Hierarchy flattening, path expansion and occupancy grids."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Optional, Union

import numpy as np

from .gdsii import ARef, Boundary, GdsLibrary, GdsTransform, LayerKey, Path, Point, SRef

Rect = tuple[int, int, int, int]  # x0, y0, x1, y1


class FlattenError(Exception):
    pass


class DanglingReferenceError(FlattenError):
    pass


class ReferenceCycleError(FlattenError):
    pass


def round_half_away(values):
    """Round to the nearest integer, ties away from zero (array or scalar)."""
    a = np.asarray(values, dtype=np.float64)
    r = np.where(a >= 0, np.floor(a + 0.5), -np.floor(-a + 0.5))
    return r.astype(np.int64)


def signed_area2(vertices) -> int:
    """Twice the signed (shoelace) area; positive for counter-clockwise."""
    v = np.asarray(vertices, dtype=np.int64)
    x, y = v[:, 0], v[:, 1]
    return int(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class FlatPolygon:
    layer: LayerKey
    vertices: tuple[Point, ...]

    @cached_property
    def bbox(self) -> Rect:
        xs = [p[0] for p in self.vertices]
        ys = [p[1] for p in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    @property
    def area(self) -> float:
        return signed_area2(self.vertices) / 2


# -- transforms -------------------------------------------------------------


def _cos_sin(angle_deg: float) -> tuple[float, float]:
    quarter = angle_deg / 90.0
    if quarter == int(quarter):
        return ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))[int(quarter) % 4]
    rad = math.radians(angle_deg)
    return math.cos(rad), math.sin(rad)


@dataclass(frozen=True)
class Affine:
    """x' = a*x + b*y + tx;  y' = c*x + d*y + ty."""

    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    d: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    @classmethod
    def from_transform(cls, t: GdsTransform) -> "Affine":
        # reflect about x, scale, rotate CCW, translate
        cos, sin = _cos_sin(t.angle_deg)
        m = t.magnification
        f = -1.0 if t.reflect_x else 1.0
        return cls(m * cos, -m * sin * f, m * sin, m * cos * f,
                   float(t.translate[0]), float(t.translate[1]))

    def __matmul__(self, o: "Affine") -> "Affine":
        return Affine(self.a * o.a + self.b * o.c, self.a * o.b + self.b * o.d,
                      self.c * o.a + self.d * o.c, self.c * o.b + self.d * o.d,
                      self.a * o.tx + self.b * o.ty + self.tx,
                      self.c * o.tx + self.d * o.ty + self.ty)

    def shifted(self, dx: float, dy: float) -> "Affine":
        return Affine(self.a, self.b, self.c, self.d, self.tx + dx, self.ty + dy)

    def apply(self, pts: np.ndarray) -> np.ndarray:
        x, y = pts[:, 0], pts[:, 1]
        return np.stack([self.a * x + self.b * y + self.tx,
                         self.c * x + self.d * y + self.ty], axis=1)


def apply_transform(p: Point, t: GdsTransform) -> Point:
    x, y = round_half_away(Affine.from_transform(t).apply(np.array([p], dtype=np.float64)))[0]
    return int(x), int(y)


# -- paths ------------------------------------------------------------------

_CAP_STEPS = 8  # half of a 16-gon


def _ccw(piece: np.ndarray) -> Optional[np.ndarray]:
    x, y = piece[:, 0], piece[:, 1]
    area2 = np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)
    if area2 == 0:
        return None
    return piece if area2 > 0 else piece[::-1]


def path_pieces(points, width: float, pathtype: int = 0) -> list[np.ndarray]:
    """Expand a path centre line into counter-clockwise float polygons.

    One quadrilateral per segment, a miter (or bevel) wedge on the outer side
    of each joint and, for pathtype 1, a half 16-gon at both ends.
    """
    pts = np.asarray(points, dtype=np.float64)
    if len(pts):
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
        pts = pts[keep]
    hw = abs(width) / 2.0
    if len(pts) < 2 or hw == 0:
        return []
    d = pts[1:] - pts[:-1]
    u = d / np.hypot(d[:, 0], d[:, 1])[:, None]
    n = np.stack([-u[:, 1], u[:, 0]], axis=1)
    last = len(d) - 1
    pieces = []
    for k in range(len(d)):
        p0, p1 = pts[k].copy(), pts[k + 1].copy()
        if pathtype == 2:
            if k == 0:
                p0 -= u[k] * hw
            if k == last:
                p1 += u[k] * hw
        off = n[k] * hw
        pieces.append(np.array([p0 - off, p1 - off, p1 + off, p0 + off]))
    for k in range(1, len(d)):
        cross = u[k - 1, 0] * u[k, 1] - u[k - 1, 1] * u[k, 0]
        if abs(cross) < 1e-12:
            continue
        side = -1.0 if cross > 0 else 1.0
        o1, o2 = n[k - 1] * side, n[k] * side
        v = pts[k]
        a, b = v + o1 * hw, v + o2 * hw
        s = o1 + o2
        s2 = float(np.dot(s, s))
        if s2 > 0 and 2 * hw / math.sqrt(s2) <= 2 * hw:
            pieces.append(np.array([v, a, v + s * (2 * hw / s2), b]))
        else:
            pieces.append(np.array([v, a, b]))
    if pathtype == 1:
        for centre, normal in ((pts[0], n[0]), (pts[-1], -n[-1])):
            base = math.atan2(normal[1], normal[0])
            ang = base + np.arange(_CAP_STEPS + 1) * (math.pi / _CAP_STEPS)
            pieces.append(np.stack([centre[0] + hw * np.cos(ang),
                                    centre[1] + hw * np.sin(ang)], axis=1))
    out = []
    for p in pieces:
        p = _ccw(p)
        if p is not None:
            out.append(p)
    return out


def path_to_polygon(path: Path) -> list[FlatPolygon]:
    out = []
    for piece in path_pieces(path.points, path.width, path.pathtype):
        verts = round_half_away(piece)
        if signed_area2(verts) != 0:
            out.append(FlatPolygon(path.key, tuple(map(tuple, verts.tolist()))))
    return out


# -- flattening -------------------------------------------------------------


@dataclass
class _LocalGeometry:
    keys: list[LayerKey]
    counts: np.ndarray  # vertices per polygon
    coords: np.ndarray  # (V, 2) float


def _check_graph(lib: GdsLibrary, top: str) -> None:
    if top not in lib:
        raise DanglingReferenceError(f"top structure {top!r} not found")
    state: dict[str, int] = {}  # 1 = on stack, 2 = done
    stack = [(top, iter(lib[top].elements))]
    state[top] = 1
    while stack:
        name, it = stack[-1]
        for el in it:
            if isinstance(el, (SRef, ARef)):
                t = el.target
                if t not in lib:
                    raise DanglingReferenceError(f"{name!r} references missing structure {t!r}")
                if state.get(t) == 1:
                    raise ReferenceCycleError(f"reference cycle through {t!r}")
                if t not in state:
                    state[t] = 1
                    stack.append((t, iter(lib[t].elements)))
                    break
        else:
            state[name] = 2
            stack.pop()


def _local(lib: GdsLibrary, name: str, key: Optional[LayerKey]) -> _LocalGeometry:
    keys, counts, chunks = [], [], []
    for el in lib[name].elements:
        if isinstance(el, Boundary):
            if key is None or (el.layer == key.layer and el.datatype == key.datatype):
                keys.append(el.key)
                counts.append(len(el.points))
                chunks.append(np.asarray(el.points, dtype=np.float64))
        elif isinstance(el, Path):
            if key is None or (el.layer == key.layer and el.datatype == key.datatype):
                for piece in path_pieces(el.points, el.width, el.pathtype):
                    keys.append(el.key)
                    counts.append(len(piece))
                    chunks.append(piece)
    coords = np.concatenate(chunks) if chunks else np.zeros((0, 2))
    return _LocalGeometry(keys, np.asarray(counts, dtype=np.int64), coords)


def _instances(lib: GdsLibrary, top: str) -> Iterator[tuple[str, Affine]]:
    """Every placement of every structure reachable from ``top`` (depth-first)."""
    _check_graph(lib, top)

    def walk(name: str, m: Affine):
        yield name, m
        for el in lib[name].elements:
            if isinstance(el, SRef):
                yield from walk(el.target, m @ Affine.from_transform(el.transform))
            elif isinstance(el, ARef):
                base = Affine.from_transform(el.transform)
                for r in range(el.rows):
                    for c in range(el.cols):
                        inst = base.shifted(c * el.col_step[0] + r * el.row_step[0],
                                            c * el.col_step[1] + r * el.row_step[1])
                        yield from walk(el.target, m @ inst)

    yield from walk(top, Affine())


def _placed(lib, top, key):
    cache: dict[str, _LocalGeometry] = {}
    for name, m in _instances(lib, top):
        g = cache.get(name)
        if g is None:
            g = cache[name] = _local(lib, name, key)
        if g.keys:
            yield g, round_half_away(m.apply(g.coords))


def flatten(lib: GdsLibrary, top: str, key: Optional[LayerKey] = None) -> Iterator[FlatPolygon]:
    """Yield every polygon reachable from ``top`` once per instantiation.

    ``key=None`` yields all layers.  Transforms are composed in floating point
    and each vertex is rounded once, after full composition.  Polygons that
    collapse to zero area after rounding are dropped.
    """
    for g, pts in _placed(lib, top, key):
        flat = pts.tolist()
        start = 0
        for k, cnt in zip(g.keys, g.counts.tolist()):
            verts = tuple(map(tuple, flat[start:start + cnt]))
            start += cnt
            if signed_area2(verts) != 0:
                yield FlatPolygon(k, verts)


@dataclass
class PolygonSet:
    """Packed polygons of one layer: vertices concatenated, CSR offsets."""

    layer: LayerKey
    coords: np.ndarray  # (V, 2) int64
    offsets: np.ndarray  # (P + 1,) int64

    def __len__(self) -> int:
        return len(self.offsets) - 1

    @cached_property
    def bboxes(self) -> np.ndarray:
        if len(self) == 0:
            return np.zeros((0, 4), dtype=np.int64)
        starts = self.offsets[:-1]
        x, y = self.coords[:, 0], self.coords[:, 1]
        return np.stack([np.minimum.reduceat(x, starts), np.minimum.reduceat(y, starts),
                         np.maximum.reduceat(x, starts), np.maximum.reduceat(y, starts)], axis=1)

    def polygon(self, i: int) -> np.ndarray:
        return self.coords[self.offsets[i]:self.offsets[i + 1]]

    def polygons(self) -> Iterator[FlatPolygon]:
        flat = self.coords.tolist()
        for i in range(len(self)):
            yield FlatPolygon(self.layer, tuple(map(tuple, flat[self.offsets[i]:self.offsets[i + 1]])))

    @classmethod
    def from_polygons(cls, layer: LayerKey, polys: Iterable) -> "PolygonSet":
        chunks = [np.asarray(p.vertices if isinstance(p, FlatPolygon) else p, dtype=np.int64)
                  for p in polys]
        return cls._pack(layer, chunks)

    @classmethod
    def _pack(cls, layer, chunks) -> "PolygonSet":
        counts = np.array([len(c) for c in chunks], dtype=np.int64)
        offsets = np.zeros(len(chunks) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        coords = np.concatenate(chunks) if chunks else np.zeros((0, 2), dtype=np.int64)
        return cls(layer, coords.astype(np.int64), offsets)


def flatten_layers(lib: GdsLibrary, top: str,
                   keys: Optional[Iterable[LayerKey]] = None) -> dict[LayerKey, PolygonSet]:
    """Flatten into packed per-layer polygon sets (same polygons as ``flatten``)."""
    wanted = None if keys is None else set(keys)
    per_layer: dict[LayerKey, list[np.ndarray]] = {}
    for g, pts in _placed(lib, top, None):
        bounds = np.concatenate([[0], np.cumsum(g.counts)])
        for i, k in enumerate(g.keys):
            if wanted is not None and k not in wanted:
                continue
            verts = pts[bounds[i]:bounds[i + 1]]
            if signed_area2(verts) != 0:
                per_layer.setdefault(k, []).append(verts)
    out = {k: PolygonSet._pack(k, v) for k, v in per_layer.items()}
    for k in wanted or ():
        out.setdefault(k, PolygonSet._pack(k, []))
    return out


def bounding_box(sets: Iterable[PolygonSet]) -> Optional[Rect]:
    boxes = [s.bboxes for s in sets if len(s)]
    if not boxes:
        return None
    b = np.concatenate(boxes)
    return int(b[:, 0].min()), int(b[:, 1].min()), int(b[:, 2].max()), int(b[:, 3].max())


# -- tile buckets -----------------------------------------------------------


@dataclass
class TileBuckets:
    """Polygon indices per render tile, CSR layout, tiles numbered row-major."""

    cols: int
    rows: int
    offsets: np.ndarray  # (cols * rows + 1,)
    indices: np.ndarray

    def bucket(self, col: int, row: int) -> np.ndarray:
        t = row * self.cols + col
        return self.indices[self.offsets[t]:self.offsets[t + 1]]


def bin_polygons(polys: PolygonSet, left: float, top: float, tile_w: float, tile_h: float,
                 cols: int, rows: int) -> TileBuckets:
    """Assign each polygon to every tile its bounding box touches.

    Tiles are ``tile_w`` x ``tile_h`` dbu, starting at (``left``, ``top``) and
    growing right/down.  Binning is conservative by one dbu.
    """
    b = polys.bboxes.astype(np.float64)
    if len(b):
        tx0 = np.floor((b[:, 0] - 1 - left) / tile_w)
        tx1 = np.floor((b[:, 2] + 1 - left) / tile_w)
        ty0 = np.floor((top - b[:, 3] - 1) / tile_h)
        ty1 = np.floor((top - b[:, 1] + 1) / tile_h)
        tx0, tx1 = np.clip(tx0, 0, cols - 1), np.clip(tx1, 0, cols - 1)
        ty0, ty1 = np.clip(ty0, 0, rows - 1), np.clip(ty1, 0, rows - 1)
        hit = (b[:, 2] + 1 >= left) & (b[:, 0] - 1 <= left + cols * tile_w) \
            & (b[:, 1] - 1 <= top) & (b[:, 3] + 1 >= top - rows * tile_h)
        idx = np.nonzero(hit)[0]
        tx0, tx1 = tx0[idx].astype(np.int64), tx1[idx].astype(np.int64)
        ty0, ty1 = ty0[idx].astype(np.int64), ty1[idx].astype(np.int64)
        nx, ny = tx1 - tx0 + 1, ty1 - ty0 + 1
        total = nx * ny
        poly = np.repeat(idx, total)
        # position of each pair inside its polygon's tile block
        start = np.repeat(np.cumsum(total) - total, total)
        local = np.arange(total.sum()) - start
        rnx = np.repeat(nx, total)
        tile = (np.repeat(ty0, total) + local // rnx) * cols + np.repeat(tx0, total) + local % rnx
        order = np.argsort(tile, kind="stable")
        tile, poly = tile[order], poly[order]
    else:
        tile = poly = np.zeros(0, dtype=np.int64)
    counts = np.bincount(tile, minlength=cols * rows)
    offsets = np.zeros(cols * rows + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return TileBuckets(cols, rows, offsets, poly.astype(np.int64))


# -- occupancy --------------------------------------------------------------


@dataclass
class OccupancyGrid:
    """Bit matrix over a square-pitch grid; ``occupied[row, col]`` with row 0 at the bottom."""

    origin: Point
    pitch: int
    cols: int
    rows: int
    occupied: np.ndarray

    def cell_rect(self, col: int, row: int) -> Rect:
        x0 = self.origin[0] + col * self.pitch
        y0 = self.origin[1] + row * self.pitch
        return x0, y0, x0 + self.pitch, y0 + self.pitch


def build_occupancy(polys: Union[Iterable[FlatPolygon], PolygonSet], origin: Point, pitch: int,
                    cols: int, rows: int, keepout: int = 0) -> OccupancyGrid:
    """Mark every cell whose open square meets a keepout-expanded polygon bbox."""
    if pitch <= 0:
        raise ValueError("pitch must be positive")
    if keepout < 0:
        raise ValueError("keepout must be non-negative")
    if isinstance(polys, PolygonSet):
        boxes = polys.bboxes
    else:
        boxes = np.array([p.bbox for p in polys], dtype=np.int64).reshape(-1, 4)
    ox, oy = origin
    diff = np.zeros((rows + 1, cols + 1), dtype=np.int64)
    if len(boxes):
        x0 = boxes[:, 0] - keepout - ox
        y0 = boxes[:, 1] - keepout - oy
        x1 = boxes[:, 2] + keepout - ox
        y1 = boxes[:, 3] + keepout - oy
        i0 = np.clip(x0 // pitch, 0, cols)
        i1 = np.clip(-((-x1) // pitch), 0, cols)  # exclusive
        j0 = np.clip(y0 // pitch, 0, rows)
        j1 = np.clip(-((-y1) // pitch), 0, rows)
        ok = (i1 > i0) & (j1 > j0)
        i0, i1, j0, j1 = i0[ok], i1[ok], j0[ok], j1[ok]
        np.add.at(diff, (j0, i0), 1)
        np.add.at(diff, (j0, i1), -1)
        np.add.at(diff, (j1, i0), -1)
        np.add.at(diff, (j1, i1), 1)
    occ = diff.cumsum(axis=0).cumsum(axis=1)[:rows, :cols] > 0
    return OccupancyGrid((int(ox), int(oy)), int(pitch), int(cols), int(rows), occ)
