"""Logo to top-metal art: 1-bit conversion, grid mapping, polyomino tiling, DRC.

The art grid has pitch ``cell_size + gap``.  Each grid cell may carry one
drawn ``cell_size`` square; cells merged into the same polyomino also fill
the gutter between them, so distinct shapes always keep at least ``gap``
apart without any spacing solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .gdsii import Boundary, GdsLibrary, GdsStructure, GdsUnits, LayerKey
from .geom import FlatPolygon, OccupancyGrid, Rect, signed_area2

ART_CELL = "MEERKAT_ART"


class ArtError(ValueError):
    pass


@dataclass(frozen=True)
class ArtRules:
    """Art design rules, all lengths in dbu.

    ``min_width``, ``min_spacing`` and ``max_width`` are the user's proxies for
    the foundry rules; they default to the values the grid produces.
    """

    cell_size: int
    gap: int
    min_cells: int = 1
    max_cells: int = 4
    keepout: int = 0
    density_window: int = 8
    max_density: float = 1.0
    seed: int = 0
    min_width: Optional[int] = None
    min_spacing: Optional[int] = None
    max_width: Optional[int] = None

    def __post_init__(self):
        if self.cell_size <= 0 or self.gap <= 0:
            raise ArtError("cell_size and gap must be positive")
        if not 1 <= self.min_cells <= self.max_cells <= 4:
            raise ArtError("need 1 <= min_cells <= max_cells <= 4")
        if self.keepout < 0:
            raise ArtError("keepout must be non-negative")
        if self.density_window < 1:
            raise ArtError("density_window must be at least one cell")
        if not 0.0 <= self.max_density <= 1.0:
            raise ArtError("max_density must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ArtError("seed must be an unsigned 64-bit integer")
        if self.min_spacing is not None and self.gap < self.min_spacing:
            raise ArtError(f"gap {self.gap} below minimum spacing {self.min_spacing}")
        if self.min_width is not None and self.cell_size < self.min_width:
            raise ArtError(f"cell_size {self.cell_size} below minimum width {self.min_width}")
        if self.max_width is not None and 2 * self.cell_size + self.gap > self.max_width:
            raise ArtError(f"2*cell_size + gap = {2 * self.cell_size + self.gap} "
                           f"exceeds maximum width {self.max_width}")

    @property
    def pitch(self) -> int:
        return self.cell_size + self.gap


@dataclass
class InkGrid:
    cols: int
    rows: int
    ink: np.ndarray  # (rows, cols) bool, row 0 at the bottom
    placement: Rect
    pitch: int

    @property
    def origin(self) -> tuple[int, int]:
        return self.placement[0], self.placement[1]


@dataclass(frozen=True)
class ArtPolyomino:
    cells: tuple[tuple[int, int], ...]  # (col, row) grid coordinates
    polygon: FlatPolygon


# -- image -> grid ----------------------------------------------------------


def image_to_bw(image: np.ndarray, threshold: int = 128) -> np.ndarray:
    """Ink mask: Rec.709 luma, alpha-composited over white, strictly below threshold.

    Evaluated in exact integer arithmetic so grey 127 is ink and 128 is not.

    >>> image_to_bw(np.array([[127, 128]], dtype=np.uint8)).tolist()
    [[True, False]]
    """
    img = np.asarray(image)
    if img.size == 0:
        raise ArtError("empty image")
    if img.ndim == 2:
        img = img[..., None]
    img = img.astype(np.int64)
    ch = img.shape[2]
    if ch in (1, 2):
        rgb = np.repeat(img[..., :1], 3, axis=2)
    else:
        rgb = img[..., :3]
    alpha = img[..., -1:] if ch in (2, 4) else np.full(img.shape[:2] + (1,), 255, np.int64)
    # 255 * composited channel = c * a + 255 * (255 - a)
    comp = rgb * alpha + 255 * (255 - alpha)
    luma = 2126 * comp[..., 0] + 7152 * comp[..., 1] + 722 * comp[..., 2]
    return luma < int(threshold) * 10000 * 255


def _cell_of(n_src: int, n_cells: int) -> np.ndarray:
    # cell whose span contains each source pixel centre
    return (2 * np.arange(n_src) + 1) * n_cells // (2 * n_src)


def map_logo_to_grid(bw: np.ndarray, placement: Rect, rules: ArtRules) -> InkGrid:
    """Majority-vote each grid cell from the pixels whose centres fall in it (ties ink)."""
    bw = np.asarray(bw, dtype=bool)
    h, w = bw.shape
    x0, y0, x1, y1 = placement
    pw, ph = x1 - x0, y1 - y0
    if pw <= 0 or ph <= 0:
        raise ArtError("empty placement rectangle")
    if abs((pw / ph) / (w / h) - 1.0) > 0.01:
        raise ArtError(f"placement aspect {pw / ph:.4f} differs from logo aspect {w / h:.4f} by >1%")
    p = rules.pitch
    cols, rows = pw // p, ph // p
    if cols < 2 or rows < 2:
        raise ArtError(f"art grid {cols}x{rows} is smaller than 2x2")
    cx, cy = _cell_of(w, cols), _cell_of(h, rows)
    ink = np.zeros((rows, cols), dtype=np.int64)
    total = np.zeros((rows, cols), dtype=np.int64)
    yy, xx = np.meshgrid(cy, cx, indexing="ij")
    np.add.at(total, (yy, xx), 1)
    np.add.at(ink, (yy, xx), bw.astype(np.int64))
    grid = 2 * ink >= total
    empty = total == 0
    if empty.any():
        # upsampling: take the pixel under the cell centre
        sx = (2 * np.arange(cols) + 1) * w // (2 * cols)
        sy = (2 * np.arange(rows) + 1) * h // (2 * rows)
        grid[empty] = bw[np.ix_(sy, sx)][empty]
    # image row 0 is the top, grid row 0 the bottom
    return InkGrid(int(cols), int(rows), grid[::-1].copy(), tuple(placement), p)


# -- shape catalogue ----------------------------------------------------------

_PATTERNS = [
    ("O", [["##", "##"]]),
    ("I", [["####"], ["#", "#", "#", "#"]]),
    ("L", [["#.", "#.", "##"], ["###", "#.."], ["##", ".#", ".#"], ["..#", "###"]]),
    ("J", [[".#", ".#", "##"], ["#..", "###"], ["##", "#.", "#."], ["###", "..#"]]),
    ("T", [["###", ".#."], ["#.", "##", "#."], [".#.", "###"], [".#", "##", ".#"]]),
    ("S", [[".##", "##."], ["#.", "##", ".#"]]),
    ("Z", [["##.", ".##"], [".#", "##", "#."]]),
    ("I3", [["###"], ["#", "#", "#"]]),
    ("V3", [["##", "#."], ["##", ".#"], ["#.", "##"], [".#", "##"]]),
    ("D", [["##"], ["#", "#"]]),
    ("M", [["#"]]),
]


def _offsets(rows: list[str]) -> tuple[tuple[int, int], ...]:
    cells = [(r, c) for r, line in enumerate(rows) for c, ch in enumerate(line) if ch == "#"]
    ar, ac = cells[0]  # first in raster order
    return tuple((r - ar, c - ac) for r, c in cells)


SHAPES: list[tuple[str, tuple[tuple[int, int], ...]]] = [
    (name, _offsets(o)) for name, orients in _PATTERNS for o in orients]


# -- polygon construction -----------------------------------------------------


def _trace(filled: set, xs, ys) -> list[tuple[int, int]]:
    """Counter-clockwise outline of a union of lattice cells without holes."""
    nxt: dict[tuple[int, int], tuple[int, int]] = {}

    def edge(a, b):
        if a in nxt:
            raise ArtError("shape outline is not a simple loop")
        nxt[a] = b

    for i, j in filled:
        if (i, j - 1) not in filled:
            edge((i, j), (i + 1, j))
        if (i + 1, j) not in filled:
            edge((i + 1, j), (i + 1, j + 1))
        if (i, j + 1) not in filled:
            edge((i + 1, j + 1), (i, j + 1))
        if (i - 1, j) not in filled:
            edge((i, j + 1), (i, j))
    start = min(nxt, key=lambda p: (p[1], p[0]))
    loop = [start]
    p = nxt[start]
    while p != start:
        loop.append(p)
        p = nxt[p]
    if len(loop) != len(nxt):
        raise ArtError("shape outline is not a single loop")
    out = []
    n = len(loop)
    for k in range(n):
        a, b, c = loop[k - 1], loop[k], loop[(k + 1) % n]
        if (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]) != 0:
            out.append((xs[b[0]], ys[b[1]]))
    return out


def shape_polygon(cells: Sequence[tuple[int, int]], origin: tuple[int, int],
                  rules: ArtRules, layer: LayerKey = LayerKey(0)) -> FlatPolygon:
    """Union of the cells' drawn squares plus the gutters bridged between members."""
    members = set(cells)
    c0 = min(c for c, _ in members)
    r0 = min(r for _, r in members)
    filled = set()
    for c, r in members:
        i, j = 2 * (c - c0), 2 * (r - r0)
        filled.add((i, j))
        if (c + 1, r) in members:
            filled.add((i + 1, j))
        if (c, r + 1) in members:
            filled.add((i, j + 1))
        if {(c + 1, r), (c, r + 1), (c + 1, r + 1)} <= members:
            filled.add((i + 1, j + 1))
    p, cs = rules.pitch, rules.cell_size
    n = 2 * max(max(c for c, _ in members) - c0, max(r for _, r in members) - r0) + 2

    def lattice(base: int, first: int) -> list[int]:
        return [base + (first + k // 2) * p + (cs if k % 2 else 0) for k in range(n + 1)]

    xs, ys = lattice(origin[0], c0), lattice(origin[1], r0)
    return FlatPolygon(layer, tuple(_trace(filled, xs, ys)))


def _cell_areas(cells: Sequence[tuple[int, int]], rules: ArtRules) -> list[tuple[int, int, int]]:
    """Drawn area attributed to each member cell's pitch square: (col, row, area)."""
    members = set(cells)
    cs, g = rules.cell_size, rules.gap
    out = []
    for c, r in cells:
        a = cs * cs
        if (c + 1, r) in members:
            a += g * cs
        if (c, r + 1) in members:
            a += g * cs
        if {(c + 1, r), (c, r + 1), (c + 1, r + 1)} <= members:
            a += g * g
        out.append((c, r, a))
    return out


# -- generation ---------------------------------------------------------------


def _windows(cols: int, rows: int, w: int) -> tuple[int, int]:
    return min(w, cols), min(w, rows)


def _window_sums(area: np.ndarray, ww: int, wh: int) -> np.ndarray:
    c = np.zeros((area.shape[0] + 1, area.shape[1] + 1), dtype=np.int64)
    c[1:, 1:] = area.cumsum(0).cumsum(1)
    return c[wh:, ww:] - c[:-wh, ww:] - c[wh:, :-ww] + c[:-wh, :-ww]


def generate_art(grid: InkGrid, occ: OccupancyGrid, rules: ArtRules,
                 layer: LayerKey = LayerKey(0)) -> list[ArtPolyomino]:
    """Greedy polyomino tiling of the free ink cells, then density thinning.

    Cells are visited in raster order (top row first, left to right); at each
    still-free cell the first shape in catalogue order that fits entirely on
    free cells is placed.  Shapes are then dropped in a seeded random order,
    worst window first, until no window exceeds ``max_density``.
    """
    if rules.pitch != grid.pitch:
        raise ArtError("rules pitch does not match the ink grid")
    if (occ.pitch, occ.origin, occ.cols, occ.rows) != (grid.pitch, grid.origin, grid.cols, grid.rows):
        raise ArtError("occupancy grid must share pitch, origin and size with the ink grid")
    cols, rows = grid.cols, grid.rows
    # scan coordinates: sr = 0 is the top grid row
    free = (grid.ink & ~occ.occupied)[::-1].copy()
    shapes = [(name, off) for name, off in SHAPES if rules.min_cells <= len(off) <= rules.max_cells]
    placed: list[list[tuple[int, int]]] = []
    for sr in range(rows):
        for sc in range(cols):
            if not free[sr, sc]:
                continue
            for _, off in shapes:
                cells = [(sr + dr, sc + dc) for dr, dc in off]
                if all(0 <= r < rows and 0 <= c < cols and free[r, c] for r, c in cells):
                    for r, c in cells:
                        free[r, c] = False
                    placed.append([(c, rows - 1 - r) for r, c in cells])
                    break
            free[sr, sc] = False

    keep = _thin(placed, cols, rows, rules)
    return [ArtPolyomino(tuple(sorted(placed[k])), shape_polygon(placed[k], grid.origin, rules, layer))
            for k in keep]


def _thin(placed, cols: int, rows: int, rules: ArtRules) -> list[int]:
    n = len(placed)
    area = np.zeros((rows, cols), dtype=np.int64)
    owner = np.full((rows, cols), -1, dtype=np.int64)
    contrib = []
    for k, cells in enumerate(placed):
        cells_area = _cell_areas(cells, rules)
        contrib.append(cells_area)
        for c, r, a in cells_area:
            area[r, c] = a
            owner[r, c] = k
    alive = np.ones(n, dtype=bool)
    if rules.max_density >= 1.0 or n == 0:
        return list(range(n))
    rank = np.empty(n, dtype=np.int64)
    rank[np.random.default_rng(rules.seed).permutation(n)] = np.arange(n)
    ww, wh = _windows(cols, rows, rules.density_window)
    limit = rules.max_density * (ww * rules.pitch) * (wh * rules.pitch)
    while True:
        sums = _window_sums(area, ww, wh)
        over = sums - limit
        flat = int(np.argmax(over))
        if not over.flat[flat] > 0:
            break
        j0, i0 = divmod(flat, over.shape[1])
        window = owner[j0:j0 + wh, i0:i0 + ww]
        ids = np.unique(window[window >= 0])
        total = int(sums[j0, i0])
        for k in ids[np.argsort(rank[ids])]:
            for c, r, a in contrib[k]:
                area[r, c] = 0
                owner[r, c] = -1
                if j0 <= r < j0 + wh and i0 <= c < i0 + ww:
                    total -= a
            alive[k] = False
            if not total > limit:
                break
    return [k for k in range(n) if alive[k]]


# -- DRC --------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str  # spacing | width | occupancy | density | size
    where: tuple[float, float]
    detail: str


@dataclass
class DrcReport:
    spacing: list[Violation] = field(default_factory=list)
    width: list[Violation] = field(default_factory=list)
    occupancy: list[Violation] = field(default_factory=list)
    density: list[Violation] = field(default_factory=list)
    size: list[Violation] = field(default_factory=list)

    @property
    def violations(self) -> list[Violation]:
        return self.spacing + self.width + self.occupancy + self.density + self.size

    @property
    def count(self) -> int:
        return len(self.violations)

    @property
    def clean(self) -> bool:
        return self.count == 0


def _orient(a, b, c) -> int:
    v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return (v > 0) - (v < 0)


def _on_segment(a, b, p) -> bool:
    return min(a[0], b[0]) <= p[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])


def _segments_cross(a, b, c, d) -> bool:
    o1, o2, o3, o4 = _orient(a, b, c), _orient(a, b, d), _orient(c, d, a), _orient(c, d, b)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and _on_segment(a, b, c)) or (o2 == 0 and _on_segment(a, b, d))
            or (o3 == 0 and _on_segment(c, d, a)) or (o4 == 0 and _on_segment(c, d, b)))


def _point_segment_closer(p, a, b, limit: int) -> bool:
    """Exact test of dist(p, segment ab) < limit on integer coordinates."""
    abx, aby = b[0] - a[0], b[1] - a[1]
    apx, apy = p[0] - a[0], p[1] - a[1]
    ab2 = abx * abx + aby * aby
    t = apx * abx + apy * aby
    if ab2 == 0 or t <= 0:
        return apx * apx + apy * apy < limit * limit
    if t >= ab2:
        bx, by = p[0] - b[0], p[1] - b[1]
        return bx * bx + by * by < limit * limit
    cross = apx * aby - apy * abx
    return cross * cross < limit * limit * ab2


def _inside(poly, p) -> bool:
    inside = False
    n = len(poly)
    for k in range(n):
        (x0, y0), (x1, y1) = poly[k], poly[(k + 1) % n]
        if (y0 > p[1]) != (y1 > p[1]):
            if p[0] < x0 + Fraction(p[1] - y0) * (x1 - x0) / (y1 - y0):
                inside = not inside
    return inside


def polygons_closer(pa, pb, limit: int) -> bool:
    """True if the two closed polygons come nearer than ``limit`` (or overlap)."""
    ea = [(pa[k], pa[(k + 1) % len(pa)]) for k in range(len(pa))]
    eb = [(pb[k], pb[(k + 1) % len(pb)]) for k in range(len(pb))]
    for a, b in ea:
        for c, d in eb:
            if _segments_cross(a, b, c, d):
                return True
            if (_point_segment_closer(a, c, d, limit) or _point_segment_closer(b, c, d, limit)
                    or _point_segment_closer(c, a, b, limit) or _point_segment_closer(d, a, b, limit)):
                return True
    return _inside(pb, pa[0]) or _inside(pa, pb[0])


def _clip(poly, axis: int, value, keep_greater: bool):
    out = []
    n = len(poly)
    for k in range(n):
        cur, prv = poly[k], poly[k - 1]
        cin = cur[axis] >= value if keep_greater else cur[axis] <= value
        pin = prv[axis] >= value if keep_greater else prv[axis] <= value
        if cin != pin:
            t = Fraction(value - prv[axis], cur[axis] - prv[axis])
            o = 1 - axis
            q = [0, 0]
            q[axis] = value
            q[o] = prv[o] + t * (cur[o] - prv[o])
            out.append(tuple(q))
        if cin:
            out.append(cur)
    return out


def clipped_area(poly, rect: Rect):
    """Exact area of polygon ∩ axis-aligned rectangle."""
    x0, y0, x1, y1 = rect
    p = list(poly)
    for axis, value, greater in ((0, x0, True), (0, x1, False), (1, y0, True), (1, y1, False)):
        p = _clip(p, axis, value, greater)
        if len(p) < 3:
            return 0
    s = 0
    for k in range(len(p)):
        (ax, ay), (bx, by) = p[k - 1], p[k]
        s += ax * by - bx * ay
    return abs(s) / 2


def min_width(poly) -> Optional[int]:
    """Narrowest interior extent between facing edges of a rectilinear polygon."""
    n = len(poly)
    edges = [(poly[k], poly[(k + 1) % n]) for k in range(n)]
    ccw = signed_area2(poly) > 0
    best = None
    for axis in (1, 0):  # horizontal edges measure y-widths, then vertical for x
        o = 1 - axis
        along = [e for e in edges if e[0][axis] == e[1][axis] and e[0][o] != e[1][o]]
        # for CCW outlines, interior lies left of travel direction
        lows = [e for e in along if (e[1][o] > e[0][o]) == (ccw if axis == 1 else not ccw)]
        highs = [e for e in along if e not in lows]
        for lo in lows:
            la, lb = sorted((lo[0][o], lo[1][o]))
            for hi in highs:
                if hi[0][axis] <= lo[0][axis]:
                    continue
                ha, hb = sorted((hi[0][o], hi[1][o]))
                a, b = max(la, ha), min(lb, hb)
                if a >= b:
                    continue
                mid = Fraction(a + b, 2)
                blocked = any(
                    lo[0][axis] < e[0][axis] < hi[0][axis]
                    and min(e[0][o], e[1][o]) < mid < max(e[0][o], e[1][o])
                    for e in along)
                if not blocked:
                    d = hi[0][axis] - lo[0][axis]
                    best = d if best is None else min(best, d)
    return best


def check_drc(shapes: Sequence[ArtPolyomino], occ: OccupancyGrid, rules: ArtRules) -> DrcReport:
    """Independent geometric verification of generated art.

    Works on the output polygons only (not on the generator's grid book-
    keeping): pairwise spacing by exact segment distance, minimum width by
    facing edges, occupancy by clipping against occupied cell squares and
    window density by summing clipped areas per window.
    """
    rep = DrcReport()
    polys = [s.polygon.vertices for s in shapes]
    boxes = [s.polygon.bbox for s in shapes]
    g = rules.gap

    for k, s in enumerate(shapes):
        if not rules.min_cells <= len(s.cells) <= rules.max_cells:
            rep.size.append(Violation("size", polys[k][0], f"{len(s.cells)} cells"))
        w = min_width(polys[k])
        if w is not None and w < rules.cell_size:
            rep.width.append(Violation("width", polys[k][0], f"width {w} < {rules.cell_size}"))

    order = sorted(range(len(shapes)), key=lambda k: boxes[k][0])
    for ai, a in enumerate(order):
        ba = boxes[a]
        for b in order[ai + 1:]:
            bb = boxes[b]
            if bb[0] - ba[2] >= g:
                break
            if bb[1] - ba[3] >= g or ba[1] - bb[3] >= g:
                continue
            if polygons_closer(polys[a], polys[b], g):
                rep.spacing.append(Violation("spacing", polys[a][0],
                                             f"shapes {a} and {b} closer than {g}"))

    occ_cells = np.argwhere(occ.occupied)
    for k, poly in enumerate(polys):
        x0, y0, x1, y1 = boxes[k]
        for r, c in occ_cells:
            cx0, cy0, cx1, cy1 = occ.cell_rect(int(c), int(r))
            if cx0 >= x1 or cx1 <= x0 or cy0 >= y1 or cy1 <= y0:
                continue
            if clipped_area(poly, (cx0, cy0, cx1, cy1)) > 0:
                rep.occupancy.append(Violation("occupancy", (cx0, cy0),
                                               f"shape {k} overlaps occupied cell ({c}, {r})"))

    ww, wh = _windows(occ.cols, occ.rows, rules.density_window)
    p = rules.pitch
    limit = rules.max_density * (ww * p) * (wh * p)
    ox, oy = occ.origin
    for j in range(occ.rows - wh + 1):
        for i in range(occ.cols - ww + 1):
            win = (ox + i * p, oy + j * p, ox + (i + ww) * p, oy + (j + wh) * p)
            total = 0
            for k, poly in enumerate(polys):
                x0, y0, x1, y1 = boxes[k]
                if x0 >= win[2] or x1 <= win[0] or y0 >= win[3] or y1 <= win[1]:
                    continue
                total += clipped_area(poly, win)
            if total > limit:
                rep.density.append(Violation("density", win[:2],
                                             f"window ({i}, {j}) area {total} > {limit:g}"))
    return rep


# -- export -------------------------------------------------------------------


def _fmt(v: float) -> str:
    s = f"{v:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("", "-0") else s


def export_svg(shapes: Sequence[ArtPolyomino], units: GdsUnits,
               placement: Optional[Rect] = None) -> str:
    """SVG 1.1 document in micrometres, y pointing down; viewBox = placement."""
    um = units.meters_per_dbu * 1e6
    if placement is None:
        if shapes:
            b = np.array([s.polygon.bbox for s in shapes])
            placement = (b[:, 0].min(), b[:, 1].min(), b[:, 2].max(), b[:, 3].max())
        else:
            placement = (0, 0, 0, 0)
    x0, y0, x1, y1 = placement
    w, h = (x1 - x0) * um, (y1 - y0) * um
    lines = ['<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
             f'width="{_fmt(w)}um" height="{_fmt(h)}um" '
             f'viewBox="{_fmt(x0 * um)} {_fmt(-y1 * um)} {_fmt(w)} {_fmt(h)}">']
    for s in shapes:
        pts = " L ".join(f"{_fmt(x * um)} {_fmt(-y * um)}" for x, y in s.polygon.vertices)
        lines.append(f'<path d="M {pts} Z" fill="#000000"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def export_art_gds(shapes: Sequence[ArtPolyomino], layer: LayerKey,
                   units: GdsUnits, name: str = "MEERKAT") -> GdsLibrary:
    elements = tuple(Boundary(layer.layer, layer.datatype, s.polygon.vertices) for s in shapes)
    return GdsLibrary(name, units, (GdsStructure(ART_CELL, elements),))


def art_density(shapes: Sequence[ArtPolyomino], placement: Rect) -> float:
    x0, y0, x1, y1 = placement
    total = sum(abs(s.polygon.area) for s in shapes)
    return total / ((x1 - x0) * (y1 - y0)) if x1 > x0 and y1 > y0 else 0.0


def load_logo(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGBA"))
