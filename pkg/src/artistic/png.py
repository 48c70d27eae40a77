"""Streaming PNG encoder for images too large to hold in memory.

Rows go in as numpy strips; each scanline is Up-filtered and handed to one
deflate stream, so the output only depends on pixel content, never on how
the caller happened to batch the rows.
"""

from __future__ import annotations

import struct
import zlib
from os import PathLike
from typing import BinaryIO, Iterator, Union

import numpy as np

SIGNATURE = b"\x89PNG\r\n\x1a\n"
COLOR_TYPES = {1: 0, 3: 2, 4: 6}  # channels -> PNG colour type
FILTER_UP = 2


def _chunk(out: BinaryIO, kind: bytes, data: bytes) -> None:
    out.write(struct.pack(">I", len(data)))
    out.write(kind)
    out.write(data)
    out.write(struct.pack(">I", zlib.crc32(data, zlib.crc32(kind)) & 0xFFFFFFFF))


class PngWriter:
    """Write an 8-bit grey, RGB or RGBA PNG strip by strip.

    >>> import io
    >>> buf = io.BytesIO()
    >>> with PngWriter(buf, 2, 1, 1) as w:
    ...     w.write_rows(np.array([[0, 255]], dtype=np.uint8))
    >>> buf.getvalue()[:8] == SIGNATURE
    True
    """

    def __init__(self, out: Union[BinaryIO, str, PathLike], width: int, height: int,
                 channels: int, level: int = 6, idat_size: int = 1 << 20):
        if channels not in COLOR_TYPES:
            raise ValueError(f"unsupported channel count {channels}")
        if width < 1 or height < 1:
            raise ValueError("PNG dimensions must be positive")
        self._own = not hasattr(out, "write")
        self._out = open(out, "wb") if self._own else out
        self.width, self.height, self.channels = width, height, channels
        self.rows_written = 0
        self._prev = np.zeros(width * channels, dtype=np.uint8)
        self._z = zlib.compressobj(level)
        self._pending = bytearray()
        self._idat_size = idat_size
        self._out.write(SIGNATURE)
        _chunk(self._out, b"IHDR", struct.pack(">IIBBBBB", width, height, 8,
                                                 COLOR_TYPES[channels], 0, 0, 0))

    def _emit(self, data: bytes, final: bool = False) -> None:
        self._pending += data
        n = self._idat_size
        while len(self._pending) >= n:
            _chunk(self._out, b"IDAT", bytes(self._pending[:n]))
            del self._pending[:n]
        if final and self._pending:
            _chunk(self._out, b"IDAT", bytes(self._pending))
            self._pending.clear()

    def write_rows(self, rows: np.ndarray) -> None:
        rows = np.ascontiguousarray(rows, dtype=np.uint8).reshape(len(rows), -1)
        if rows.shape[1] != self.width * self.channels:
            raise ValueError("row width does not match the PNG header")
        if self.rows_written + len(rows) > self.height:
            raise ValueError("more rows than declared in the PNG header")
        if not len(rows):
            return
        up = np.empty_like(rows)
        up[0] = rows[0] - self._prev
        up[1:] = rows[1:] - rows[:-1]
        tag = bytes([FILTER_UP])
        for line in up:
            self._emit(self._z.compress(tag + line.tobytes()))
        self._prev = rows[-1].copy()
        self.rows_written += len(rows)

    def close(self) -> None:
        if self._z is None:
            return
        if self.rows_written != self.height:
            raise ValueError(f"PNG expects {self.height} rows, got {self.rows_written}")
        self._emit(self._z.flush(), final=True)
        self._z = None
        _chunk(self._out, b"IEND", b"")
        if self._own:
            self._out.close()

    def abort(self) -> None:
        self._z = None
        if self._own:
            self._out.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self.abort()


def write_png(path: Union[BinaryIO, str, PathLike], image: np.ndarray, level: int = 6) -> None:
    """Write a whole (H, W) or (H, W, C) uint8 array."""
    image = np.asarray(image, dtype=np.uint8)
    channels = 1 if image.ndim == 2 else image.shape[2]
    with PngWriter(path, image.shape[1], image.shape[0], channels, level) as w:
        w.write_rows(image)


def png_info(path: Union[str, PathLike]) -> tuple[int, int, int, int]:
    """(width, height, bit depth, colour type) from the IHDR chunk."""
    with open(path, "rb") as fh:
        head = fh.read(33)
    if head[:8] != SIGNATURE or head[12:16] != b"IHDR":
        raise ValueError(f"{path} is not a PNG file")
    w, h, depth, ctype = struct.unpack(">IIBB", head[16:26])
    return w, h, depth, ctype


def iter_chunks(path: Union[str, PathLike]) -> Iterator[tuple[bytes, int, int]]:
    """Yield (type, payload offset, payload length) without loading payloads."""
    with open(path, "rb") as fh:
        if fh.read(8) != SIGNATURE:
            raise ValueError(f"{path} is not a PNG file")
        pos = 8
        while True:
            head = fh.read(8)
            if len(head) < 8:
                raise ValueError(f"{path}: truncated PNG")
            length, kind = struct.unpack(">I4s", head)
            yield kind, pos + 8, length
            pos += 12 + length
            fh.seek(pos)
            if kind == b"IEND":
                return


def read_png(path: Union[str, PathLike]) -> np.ndarray:
    """Decode an 8-bit non-interlaced PNG (any filter) into an array."""
    from PIL import Image

    limit, Image.MAX_IMAGE_PIXELS = Image.MAX_IMAGE_PIXELS, None  # tiles may be huge
    try:
        with Image.open(path) as im:
            im.load()
            return np.asarray(im)
    finally:
        Image.MAX_IMAGE_PIXELS = limit
