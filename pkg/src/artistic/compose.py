"""Colouring, alpha compositing, downscaling, stitching and PDF output.

All colour data is premultiplied.  The public per-tile operators work on
8-bit tiles; the render pipeline keeps its running composite in a 16-bit
accumulator (8-bit value x 257) so that rounding error does not pile up over
deep layer stacks, and quantizes once after downscaling.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from numba import njit

from .gdsii import LayerKey
from .png import PngWriter, iter_chunks, png_info
from .raster import CoverageTile, TileGrid

PDF_MAX_PT = 14400.0


class ComposeError(ValueError):
    pass


class StitchError(ComposeError):
    pass


class PdfError(ComposeError):
    pass


@dataclass(frozen=True)
class LayerStyle:
    key: LayerKey
    color: tuple[int, int, int]
    opacity: float = 1.0
    z_order: int = 0

    def __post_init__(self):
        if len(self.color) != 3 or not all(0 <= int(c) <= 255 for c in self.color):
            raise ComposeError(f"bad colour {self.color!r}")
        if not 0.0 <= self.opacity <= 1.0:
            raise ComposeError(f"opacity {self.opacity!r} outside [0, 1]")
        object.__setattr__(self, "color", tuple(int(c) for c in self.color))


@dataclass
class RgbaTile:
    col: int
    row: int
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 4) uint8, premultiplied


def sort_stack(styles: Iterable[LayerStyle]) -> list[LayerStyle]:
    styles = list(styles)
    if len({s.z_order for s in styles}) != len(styles):
        raise ComposeError("z_order values must be unique within a layer stack")
    return sorted(styles, key=lambda s: s.z_order)


def _half_up(x):
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


WIDE = 65535  # full scale of the 16-bit accumulator


def color_lut(style: LayerStyle, scale: int = 255) -> np.ndarray:
    """(256, 4) premultiplied RGBA for every coverage value, full scale ``scale``.

    ``scale=WIDE`` gives the 16-bit table painted by :class:`Accumulator`.
    """
    cov = np.arange(256, dtype=np.float64)
    x = style.opacity * cov * (scale / 255)  # scale * alpha
    alpha = _half_up(x)
    lut = np.empty((256, 4), dtype=np.int64)
    for ch in range(3):
        lut[:, ch] = np.minimum(_half_up(x * style.color[ch] / 255.0), alpha)
    lut[:, 3] = alpha
    return lut


def colorize(cov: CoverageTile, style: LayerStyle) -> RgbaTile:
    """8-bit premultiplied layer image (for inspection and 8-bit compositing)."""
    lut = color_lut(style).astype(np.uint8)
    return RgbaTile(cov.col, cov.row, cov.width, cov.height, lut[cov.coverage])


def composite_over(acc: RgbaTile, above: RgbaTile) -> RgbaTile:
    """Premultiplied source-over, rounded to nearest (ties up)."""
    if acc.pixels.shape != above.pixels.shape:
        raise ComposeError(f"tile size mismatch: {acc.pixels.shape} vs {above.pixels.shape}")
    a = above.pixels.astype(np.int64)
    b = acc.pixels.astype(np.int64)
    keep = 255 - a[..., 3:4]
    out = a + (2 * keep * b + 255) // 510
    return RgbaTile(acc.col, acc.row, acc.width, acc.height, out.astype(np.uint8))


def background_tile(col: int, row: int, width: int, height: int,
                    color=(0, 0, 0)) -> RgbaTile:
    px = np.empty((height, width, 4), dtype=np.uint8)
    px[...] = (*color, 255)
    return RgbaTile(col, row, width, height, px)


def downscale(tile: RgbaTile, factor: int) -> RgbaTile:
    """Exact box filter; each output pixel is the rounded mean of factor**2 inputs."""
    if factor < 1:
        raise ComposeError("downscale factor must be >= 1")
    if tile.width % factor or tile.height % factor:
        raise ComposeError(f"{tile.width}x{tile.height} tile not divisible by {factor}")
    if factor == 1:
        return tile
    h, w = tile.height // factor, tile.width // factor
    s = tile.pixels.astype(np.int64).reshape(h, factor, w, factor, 4).sum(axis=(1, 3))
    n = factor * factor
    out = (2 * s + n) // (2 * n)
    return RgbaTile(tile.col, tile.row, w, h, out.astype(np.uint8))


def over_float(acc, above):
    """Reference source-over without rounding; works on float or Fraction arrays."""
    return above + (1 - above[..., 3:4] / 255) * acc


# -- wide accumulator used by the pipeline -----------------------------------


@njit(cache=True, nogil=True)
def _paint(acc, cov, lut):
    h, w = cov.shape
    for y in range(h):
        for x in range(w):
            c = cov[y, x]
            a = lut[c, 3]
            if a == 0:
                continue
            keep2 = 2 * (65535 - a)
            for ch in range(4):
                acc[y, x, ch] = lut[c, ch] + (keep2 * acc[y, x, ch] + 65535) // 131070


@njit(cache=True, nogil=True)
def _reduce(acc, factor):
    h = acc.shape[0] // factor
    w = acc.shape[1] // factor
    out = np.empty((h, w, 4), dtype=np.uint8)
    den = 2 * 257 * factor * factor
    half = 257 * factor * factor
    for y in range(h):
        for x in range(w):
            for ch in range(4):
                s = 0
                for dy in range(factor):
                    for dx in range(factor):
                        s += acc[y * factor + dy, x * factor + dx, ch]
                out[y, x, ch] = (2 * s + half) // den
    return out


class Accumulator:
    """Running composite of one tile, premultiplied, 16 bits per channel."""

    def __init__(self, col: int, row: int, width: int, height: int, background=(0, 0, 0)):
        self.col, self.row, self.width, self.height = col, row, width, height
        self.acc = np.empty((height, width, 4), dtype=np.uint16)
        self.acc[...] = np.array([*background, 255], dtype=np.uint16) * 257

    def paint(self, cov: CoverageTile, lut: np.ndarray) -> None:
        """Source-over one layer; ``lut`` is ``color_lut(style, WIDE)``."""
        if cov.coverage.shape != (self.height, self.width):
            raise ComposeError("coverage tile does not match the accumulator")
        _paint(self.acc, cov.coverage, lut)

    def finish(self, factor: int = 1) -> RgbaTile:
        if self.width % factor or self.height % factor:
            raise ComposeError(f"{self.width}x{self.height} tile not divisible by {factor}")
        px = _reduce(self.acc, factor)
        return RgbaTile(self.col, self.row, px.shape[1], px.shape[0], px)


def compose_tile(coverages: Sequence[CoverageTile], styles: Sequence[LayerStyle],
                 background=(0, 0, 0), factor: int = 1) -> RgbaTile:
    """Paint coverage tiles bottom-up over an opaque background and downscale."""
    first = coverages[0]
    acc = Accumulator(first.col, first.row, first.width, first.height, background)
    for cov, style in zip(coverages, styles):
        acc.paint(cov, color_lut(style, WIDE))
    return acc.finish(factor)


# -- stitching ---------------------------------------------------------------


@dataclass
class PartInfo:
    file: str
    x: int
    y: int
    w: int
    h: int


@dataclass
class Manifest:
    width_px: int
    height_px: int
    dpi: Optional[float] = None
    parts: list[PartInfo] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        d = json.loads(text)
        return cls(d["width_px"], d["height_px"], d.get("dpi"),
                   [PartInfo(**p) for p in d["parts"]])

    @classmethod
    def load(cls, path) -> "Manifest":
        with open(path) as fh:
            return cls.from_json(fh.read())


def manifest_path(png_path: str) -> str:
    return os.path.splitext(png_path)[0] + ".manifest.json"


class PngSink:
    """Receives full-width row strips; writes one PNG or a grid of PNG parts.

    Above ``part_max_px`` total pixels the image is split into square parts of
    edge floor(sqrt(part_max_px)), named ``<stem>_part_r<row>_c<col>.png``.
    A manifest (``<stem>.manifest.json``) is written in both cases.
    """

    def __init__(self, path: str, width: int, height: int, channels: int = 3,
                 part_max_px: Optional[int] = None, dpi: Optional[float] = None,
                 level: int = 6):
        self.path, self.width, self.height, self.channels = path, width, height, channels
        self.level = level
        self.dpi = dpi
        self.split = part_max_px is not None and width * height > part_max_px
        self.edge = math.isqrt(part_max_px) if self.split else max(width, height)
        if self.edge < 1:
            raise StitchError("part_max_px too small")
        stem = os.path.splitext(os.path.basename(path))[0]
        self._dir = os.path.dirname(os.path.abspath(path))
        self.parts: list[PartInfo] = []
        for py in range(0, height, self.edge):
            for px in range(0, width, self.edge):
                name = (f"{stem}_part_r{py // self.edge}_c{px // self.edge}.png"
                        if self.split else os.path.basename(path))
                self.parts.append(PartInfo(name, px, py, min(self.edge, width - px),
                                           min(self.edge, height - py)))
        self.y = 0
        self._open: list[tuple[PartInfo, PngWriter]] = []
        self.files: list[str] = []

    def _open_row(self) -> None:
        self._open = []
        for p in self.parts:
            if p.y == self.y:
                fn = os.path.join(self._dir, p.file)
                self.files.append(fn)
                self._open.append((p, PngWriter(fn, p.w, p.h, self.channels, self.level)))

    def write_rows(self, strip: np.ndarray) -> None:
        pos = 0
        while pos < len(strip):
            if not self._open:
                self._open_row()
            p0 = self._open[0][0]
            n = min(len(strip) - pos, p0.y + p0.h - self.y)
            for p, w in self._open:
                w.write_rows(strip[pos:pos + n, p.x:p.x + p.w])
            pos += n
            self.y += n
            if self.y == p0.y + p0.h:
                for _, w in self._open:
                    w.close()
                self._open = []

    def close(self) -> Manifest:
        if self.y != self.height:
            raise StitchError(f"image expects {self.height} rows, got {self.y}")
        manifest = Manifest(self.width, self.height, self.dpi, list(self.parts))
        mp = manifest_path(self.path)
        with open(mp, "w") as fh:
            fh.write(manifest.to_json())
        self.files.append(mp)
        return manifest

    def abort(self) -> None:
        for _, w in self._open:
            w.abort()
        self._open = []


def to_output_pixels(px: np.ndarray, channels: int) -> np.ndarray:
    """Premultiplied RGBA -> straight RGB/RGBA for PNG output."""
    if channels == 3:
        return px[..., :3]
    a = px[..., 3:4].astype(np.int64)
    safe = np.maximum(a, 1)
    rgb = np.where(a > 0, (2 * px[..., :3].astype(np.int64) * 255 + safe) // (2 * safe), 0)
    return np.concatenate([np.minimum(rgb, 255), a], axis=-1).astype(np.uint8)


def stitch(tiles: Iterable[RgbaTile], grid: TileGrid, sink: PngSink) -> Manifest:
    """Write tiles (any order) as horizontal strips, one tile row at a time."""
    pending: dict[int, dict[int, RgbaTile]] = {}
    seen = set()
    next_row = 0
    try:
        for t in tiles:
            if not (0 <= t.col < grid.cols and 0 <= t.row < grid.rows):
                raise StitchError(f"tile ({t.col}, {t.row}) outside the {grid.cols}x{grid.rows} grid")
            if (t.col, t.row) in seen:
                raise StitchError(f"duplicate tile ({t.col}, {t.row})")
            _, _, w, h = grid.tile_rect(t.col, t.row)
            if (t.width, t.height) != (w, h):
                raise StitchError(f"tile ({t.col}, {t.row}) is {t.width}x{t.height}, expected {w}x{h}")
            seen.add((t.col, t.row))
            pending.setdefault(t.row, {})[t.col] = t
            while len(pending.get(next_row, ())) == grid.cols:
                row = pending.pop(next_row)
                strip = np.concatenate([row[c].pixels for c in range(grid.cols)], axis=1)
                sink.write_rows(to_output_pixels(strip, sink.channels))
                next_row += 1
        if next_row != grid.rows:
            missing = [(c, r) for r in range(grid.rows) for c in range(grid.cols)
                       if (c, r) not in seen]
            raise StitchError(f"missing {len(missing)} tile(s), first {missing[0]}")
        return sink.close()
    except BaseException:
        sink.abort()
        raise


# -- PDF -----------------------------------------------------------------------


def _num(v: float) -> str:
    s = f"{v:.4f}".rstrip("0").rstrip(".")
    return s if s not in ("", "-0") else "0"


def page_size_pt(width_px: int, height_px: int, dpi: float) -> tuple[float, float]:
    """Physical page size in PostScript points.

    >>> page_size_pt(300, 600, 300)
    (72.0, 144.0)
    """
    return width_px / dpi * 72.0, height_px / dpi * 72.0


def emit_pdf(manifest: Manifest, out_path: str, dpi: Optional[float] = None,
             base_dir: Optional[str] = None) -> None:
    """Single-page PDF with every part embedded losslessly at its offset.

    The PNG parts' deflate streams are copied verbatim (PNG predictors), so
    no pixel is decoded or resampled.
    """
    dpi = dpi if dpi is not None else manifest.dpi
    if dpi is None or not dpi > 0:
        raise PdfError("print dpi must be positive")
    if not manifest.parts:
        raise PdfError("manifest lists no image parts")
    base_dir = base_dir or "."
    wpt, hpt = page_size_pt(manifest.width_px, manifest.height_px, dpi)
    if max(wpt, hpt) > PDF_MAX_PT:
        need = max(manifest.width_px, manifest.height_px) * 72.0 / PDF_MAX_PT
        raise PdfError(f"page {wpt:.1f} x {hpt:.1f} pt exceeds the {PDF_MAX_PT:.0f} pt PDF "
                       f"limit; use at least {math.ceil(need)} dpi")

    images = []
    for i, part in enumerate(manifest.parts):
        fn = os.path.join(base_dir, part.file)
        w, h, depth, ctype = png_info(fn)
        if (w, h) != (part.w, part.h):
            raise PdfError(f"{part.file}: {w}x{h} px, manifest says {part.w}x{part.h}")
        if depth != 8 or ctype not in (0, 2):
            raise PdfError(f"{part.file}: only 8-bit grey or RGB PNG parts can be embedded")
        idat = [(off, n) for kind, off, n in iter_chunks(fn) if kind == b"IDAT"]
        with open(fn, "rb") as fh:
            head = fh.read(29)
        if head[28] != 0:
            raise PdfError(f"{part.file}: interlaced PNG")
        images.append((part, fn, 1 if ctype == 0 else 3, idat))

    offsets: list[int] = []
    with open(out_path, "wb") as out:
        def obj(body: bytes) -> None:
            offsets.append(out.tell())
            out.write(f"{len(offsets)} 0 obj\n".encode() + body + b"\nendobj\n")

        out.write(b"%PDF-1.4\n%\xe2\xe3\xcf\xd3\n")
        n = len(images)
        xobjects = " ".join(f"/Im{i} {5 + i} 0 R" for i in range(n))
        content = "".join(
            f"q {_num(p.w / dpi * 72)} 0 0 {_num(p.h / dpi * 72)} "
            f"{_num(p.x / dpi * 72)} {_num((manifest.height_px - p.y - p.h) / dpi * 72)} cm "
            f"/Im{i} Do Q\n" for i, (p, *_rest) in enumerate(images)).encode()
        obj(b"<< /Type /Catalog /Pages 2 0 R >>")
        obj(b"<< /Type /Pages /Kids [3 0 R] /Count 1 >>")
        obj(f"<< /Type /Page /Parent 2 0 R /MediaBox [0 0 {_num(wpt)} {_num(hpt)}] "
            f"/Resources << /XObject << {xobjects} >> >> /Contents 4 0 R >>".encode())
        obj(f"<< /Length {len(content)} >>\nstream\n".encode() + content + b"endstream")
        for part, fn, colors, idat in images:
            length = sum(nb for _, nb in idat)
            space = "/DeviceGray" if colors == 1 else "/DeviceRGB"
            offsets.append(out.tell())
            out.write(
                f"{len(offsets)} 0 obj\n<< /Type /XObject /Subtype /Image /Width {part.w} "
                f"/Height {part.h} /ColorSpace {space} /BitsPerComponent 8 /Interpolate false "
                f"/Filter /FlateDecode /DecodeParms << /Predictor 15 /Colors {colors} "
                f"/BitsPerComponent 8 /Columns {part.w} >> /Length {length} >>\nstream\n".encode())
            with open(fn, "rb") as src:
                for off, nb in idat:
                    src.seek(off)
                    while nb:
                        buf = src.read(min(nb, 1 << 22))
                        if not buf:
                            raise PdfError(f"{fn}: truncated IDAT chunk")
                        out.write(buf)
                        nb -= len(buf)
            out.write(b"\nendstream\nendobj\n")
        xref = out.tell()
        out.write(f"xref\n0 {len(offsets) + 1}\n0000000000 65535 f \n".encode())
        for off in offsets:
            out.write(f"{off:010d} 00000 n \n".encode())
        out.write(f"trailer\n<< /Size {len(offsets) + 1} /Root 1 0 R >>\n"
                  f"startxref\n{xref}\n%%EOF\n".encode())
