"""GDSII stream format reader/writer, layer extraction and library merging.

Records are big-endian: a 2-byte total length, a 1-byte record type and a
1-byte data type, followed by the payload.  Only BOUNDARY, PATH, SREF and
AREF are interpreted; TEXT, NODE and BOX are kept as raw records so that a
library survives a read/write cycle.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from os import PathLike
from typing import Iterator, Union

log = logging.getLogger(__name__)

Point = tuple[int, int]
Step = tuple[Union[int, float], Union[int, float]]
RawRecord = tuple[int, int, bytes]  # (record type, data type, payload)

DEFAULT_STAMP = (1970, 1, 1, 0, 0, 0)

# record types
HEADER = 0x00
BGNLIB = 0x01
LIBNAME = 0x02
UNITS = 0x03
ENDLIB = 0x04
BGNSTR = 0x05
STRNAME = 0x06
ENDSTR = 0x07
BOUNDARY = 0x08
PATH = 0x09
SREF = 0x0A
AREF = 0x0B
TEXT = 0x0C
LAYER = 0x0D
DATATYPE = 0x0E
WIDTH = 0x0F
XY = 0x10
ENDEL = 0x11
SNAME = 0x12
COLROW = 0x13
NODE = 0x15
STRANS = 0x1A
MAG = 0x1B
ANGLE = 0x1C
PATHTYPE = 0x21
ELFLAGS = 0x26
BOX = 0x2D
PLEX = 0x2F
BGNEXTN = 0x30
ENDEXTN = 0x31
PROPATTR = 0x2B
PROPVALUE = 0x2C

# data types
NODATA, BITARRAY, INT2, INT4, REAL4, REAL8, ASCII = range(7)

_OPAQUE_KINDS = {TEXT: "TEXT", NODE: "NODE", BOX: "BOX"}
_OPAQUE_CODES = {v: k for k, v in _OPAQUE_KINDS.items()}
# extra element records kept verbatim; emitted before LAYER/SNAME, after
# WIDTH (path extensions) or after XY (properties)
_HEAD_EXTRAS = {ELFLAGS, PLEX}
_MID_EXTRAS = {BGNEXTN, ENDEXTN}
_TAIL_EXTRAS = {PROPATTR, PROPVALUE}

_INT32_MIN = -(2**31)
_INT32_MAX = 2**31 - 1


class GdsError(Exception):
    """Base class for GDSII format errors."""


class GdsParseError(GdsError):
    """Malformed stream.  ``offset`` is the byte position of the bad record."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TruncatedRecordError(GdsParseError):
    pass


class RecordLengthError(GdsParseError):
    pass


class MissingEndlibError(GdsParseError):
    pass


class MissingUnitsError(GdsParseError):
    pass


class GdsWriteError(GdsError):
    pass


class CoordinateOverflowError(GdsWriteError):
    pass


class NameTooLongError(GdsWriteError):
    pass


class GdsMergeError(GdsError):
    pass


# -- 8-byte excess-64 reals -------------------------------------------------


def encode_real8(value: float) -> bytes:
    """Encode ``value`` as a GDSII 8-byte real (base-16 exponent, excess 64).

    >>> encode_real8(1.0).hex()
    '4110000000000000'
    >>> decode_real8(encode_real8(1e-9)) == 1e-9
    True
    """
    if value == 0:
        return b"\x00" * 8
    sign = 0x80 if value < 0 else 0
    m, p = math.frexp(abs(value))  # abs(value) == m * 2**p, 0.5 <= m < 1
    e = (p + 3) // 4
    shift = p - 4 * e + 3
    mantissa = int(m * 2**53) << shift
    if mantissa >= 2**56:  # unreachable for finite doubles, kept as a guard
        mantissa >>= 4
        e += 1
    if not 0 <= e + 64 <= 127:
        raise GdsWriteError(f"real {value!r} out of GDSII range")
    return bytes([sign | (e + 64)]) + mantissa.to_bytes(7, "big")


def decode_real8(data: bytes) -> float:
    sign = -1.0 if data[0] & 0x80 else 1.0
    exponent = (data[0] & 0x7F) - 64
    mantissa = int.from_bytes(data[1:8], "big")
    return sign * math.ldexp(mantissa, 4 * exponent - 56)


# -- data model -------------------------------------------------------------


@dataclass(frozen=True)
class GdsUnits:
    user_unit_per_dbu: float = 1e-3
    meters_per_dbu: float = 1e-9

    def __post_init__(self):
        if not (self.user_unit_per_dbu > 0 and self.meters_per_dbu > 0):
            raise ValueError("GDSII units must be strictly positive")

    @property
    def nm_per_dbu(self) -> float:
        return self.meters_per_dbu * 1e9


@dataclass(frozen=True, order=True)
class LayerKey:
    layer: int
    datatype: int = 0

    def __post_init__(self):
        if not (0 <= self.layer <= 65535 and 0 <= self.datatype <= 65535):
            raise ValueError(f"layer/datatype out of range: {self.layer}/{self.datatype}")

    def __str__(self) -> str:
        return f"{self.layer}/{self.datatype}"


@dataclass(frozen=True)
class GdsTransform:
    reflect_x: bool = False
    magnification: float = 1.0
    angle_deg: float = 0.0
    translate: Point = (0, 0)
    abs_mag: bool = False
    abs_angle: bool = False

    def __post_init__(self):
        if not self.magnification > 0:
            raise ValueError("magnification must be positive")
        if not isinstance(self.translate, tuple):
            object.__setattr__(self, "translate", tuple(self.translate))

    @property
    def is_identity(self) -> bool:
        return (not self.reflect_x and self.magnification == 1.0
                and self.angle_deg == 0.0 and self.translate == (0, 0))


def _points(points) -> tuple[Point, ...]:
    if isinstance(points, tuple) and (not points or isinstance(points[0], tuple)):
        return points
    return tuple((int(x), int(y)) for x, y in points)


@dataclass(frozen=True)
class Boundary:
    layer: int
    datatype: int
    points: tuple[Point, ...]  # without the repeated closing vertex
    extras: tuple[RawRecord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "points", _points(self.points))

    @property
    def key(self) -> LayerKey:
        return LayerKey(self.layer, self.datatype)


@dataclass(frozen=True)
class Path:
    layer: int
    datatype: int
    points: tuple[Point, ...]
    width: int = 0
    pathtype: int = 0
    extras: tuple[RawRecord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "points", _points(self.points))

    @property
    def key(self) -> LayerKey:
        return LayerKey(self.layer, self.datatype)


@dataclass(frozen=True)
class SRef:
    target: str
    transform: GdsTransform = GdsTransform()
    extras: tuple[RawRecord, ...] = ()


@dataclass(frozen=True)
class ARef:
    target: str
    transform: GdsTransform
    cols: int
    rows: int
    col_step: Step
    row_step: Step
    extras: tuple[RawRecord, ...] = ()

    def __post_init__(self):
        if self.cols < 1 or self.rows < 1:
            raise ValueError("AREF needs at least one column and one row")


@dataclass(frozen=True)
class OpaqueElement:
    """TEXT, NODE or BOX element, kept as its raw inner records."""

    kind: str
    records: tuple[RawRecord, ...] = ()


GdsElement = Union[Boundary, Path, SRef, ARef, OpaqueElement]


@dataclass(frozen=True)
class GdsStructure:
    name: str
    elements: tuple[GdsElement, ...] = ()
    timestamps: tuple[int, ...] = DEFAULT_STAMP * 2

    def __post_init__(self):
        if not isinstance(self.elements, tuple):
            object.__setattr__(self, "elements", tuple(self.elements))


@dataclass(frozen=True)
class GdsLibrary:
    name: str
    units: GdsUnits = GdsUnits()
    structures: tuple[GdsStructure, ...] = ()
    version: int = 600
    timestamps: tuple[int, ...] = DEFAULT_STAMP * 2
    skipped_records: int = field(default=0, compare=False)

    def __post_init__(self):
        if not isinstance(self.structures, tuple):
            object.__setattr__(self, "structures", tuple(self.structures))

    @cached_property
    def by_name(self) -> dict[str, GdsStructure]:
        return {s.name: s for s in self.structures}

    def __getitem__(self, name: str) -> GdsStructure:
        return self.by_name[name]

    def __contains__(self, name: str) -> bool:
        return name in self.by_name

    def top_level(self) -> list[GdsStructure]:
        """Structures not referenced by any other structure, in library order."""
        referenced = {e.target for s in self.structures for e in s.elements
                      if isinstance(e, (SRef, ARef))}
        return [s for s in self.structures if s.name not in referenced]


# -- reading ----------------------------------------------------------------


def _iter_records(data: bytes) -> Iterator[tuple[int, int, int, bytes]]:
    pos, end = 0, len(data)
    while pos < end:
        if pos + 4 > end:
            raise TruncatedRecordError("truncated record header", pos)
        length, rtype, dtype = struct.unpack_from(">HBB", data, pos)
        if length < 4:
            raise RecordLengthError(f"record length {length} shorter than its header", pos)
        if length % 2:
            raise RecordLengthError(f"odd record length {length}", pos)
        if pos + length > end:
            raise TruncatedRecordError(
                f"record declares {length} bytes but only {end - pos} remain", pos)
        yield pos, rtype, dtype, data[pos + 4:pos + length]
        pos += length


def _ints(payload: bytes, dtype: int, offset: int) -> tuple[int, ...]:
    if dtype == INT2:
        n = len(payload) // 2
        return struct.unpack(f">{n}h", payload[:2 * n])
    if dtype == INT4:
        n = len(payload) // 4
        return struct.unpack(f">{n}i", payload[:4 * n])
    if dtype == BITARRAY:
        return struct.unpack(">H", payload[:2]) if len(payload) >= 2 else (0,)
    raise GdsParseError(f"expected integer data, got data type {dtype}", offset)


def _first(values, offset: int):
    if not values:
        raise GdsParseError("record payload too short", offset)
    return values[0]


def _reals(payload: bytes, dtype: int, offset: int) -> list[float]:
    if dtype != REAL8:
        raise GdsParseError(f"expected 8-byte real data, got data type {dtype}", offset)
    return [decode_real8(payload[i:i + 8]) for i in range(0, len(payload) - 7, 8)]


def _string(payload: bytes, dtype: int, offset: int) -> str:
    if dtype != ASCII:
        raise GdsParseError(f"expected string data, got data type {dtype}", offset)
    return payload.rstrip(b"\x00").decode("latin-1")


def _step(delta: int, count: int) -> Union[int, float]:
    return delta // count if delta % count == 0 else delta / count


class _Reader:
    def __init__(self, data: bytes):
        self.records = _iter_records(data)
        self.end = len(data)
        self.skipped = 0

    def next(self):
        try:
            return next(self.records)
        except StopIteration:
            raise MissingEndlibError("stream ended before ENDLIB", self.end) from None

    def parse(self) -> GdsLibrary:
        off, rtype, dtype, payload = self.next()
        if rtype != HEADER:
            raise GdsParseError("stream does not begin with a HEADER record", off)
        version = _first(_ints(payload, dtype, off), off) if payload else 0
        name, units, stamps = "", None, DEFAULT_STAMP * 2
        structures: list[GdsStructure] = []
        while True:
            off, rtype, dtype, payload = self.next()
            if rtype == BGNLIB:
                stamps = tuple(_ints(payload, dtype, off))
            elif rtype == LIBNAME:
                name = _string(payload, dtype, off)
            elif rtype == UNITS:
                vals = _reals(payload, dtype, off)
                if len(vals) != 2:
                    raise GdsParseError("UNITS record must hold two reals", off)
                try:
                    units = GdsUnits(*vals)
                except ValueError as exc:
                    raise GdsParseError(str(exc), off) from None
            elif rtype == BGNSTR:
                if units is None:
                    raise MissingUnitsError("structure begins before any UNITS record", off)
                structures.append(self.structure(tuple(_ints(payload, dtype, off)), off))
            elif rtype == ENDLIB:
                if units is None:
                    raise MissingUnitsError("library has no UNITS record", off)
                break
            else:
                self.skipped += 1
        if self.skipped:
            log.warning("skipped %d unsupported GDSII records", self.skipped)
        return GdsLibrary(name, units, tuple(structures), version, stamps,
                          skipped_records=self.skipped)

    def structure(self, stamps, start: int) -> GdsStructure:
        name = None
        elements: list[GdsElement] = []
        while True:
            off, rtype, dtype, payload = self.next()
            if rtype == STRNAME:
                name = _string(payload, dtype, off)
            elif rtype == ENDSTR:
                break
            elif rtype in (BOUNDARY, PATH, SREF, AREF):
                elements.append(self.element(rtype, off))
            elif rtype in _OPAQUE_KINDS:
                elements.append(self.opaque(rtype))
            elif rtype in (ENDLIB, BGNSTR):
                raise GdsParseError("structure not terminated by ENDSTR", off)
            else:
                self.skipped += 1
        if not name:
            raise GdsParseError("structure without STRNAME", start)
        return GdsStructure(name, tuple(elements), stamps)

    def opaque(self, rtype: int) -> OpaqueElement:
        records = []
        while True:
            off, r, d, payload = self.next()
            if r == ENDEL:
                return OpaqueElement(_OPAQUE_KINDS[rtype], tuple(records))
            if r in (ENDSTR, ENDLIB):
                raise GdsParseError("element not terminated by ENDEL", off)
            records.append((r, d, payload))

    def element(self, kind: int, start: int) -> GdsElement:
        layer = datatype = 0
        width = pathtype = 0
        xy: tuple[int, ...] = ()
        sname = None
        flags, mag, angle = 0, 1.0, 0.0
        cols = rows = 0
        extras: list[RawRecord] = []
        while True:
            off, rtype, dtype, payload = self.next()
            if rtype == ENDEL:
                break
            if rtype in (ENDSTR, ENDLIB, BGNSTR):
                raise GdsParseError("element not terminated by ENDEL", off)
            if rtype == LAYER:
                layer = _first(_ints(payload, dtype, off), off) & 0xFFFF
            elif rtype == DATATYPE:
                datatype = _first(_ints(payload, dtype, off), off) & 0xFFFF
            elif rtype == XY:
                if dtype != INT4 or len(payload) % 8:
                    raise GdsParseError("XY record must hold 4-byte coordinate pairs", off)
                xy = _ints(payload, dtype, off)
            elif rtype == WIDTH:
                width = _first(_ints(payload, dtype, off), off)
            elif rtype == PATHTYPE:
                pathtype = _first(_ints(payload, dtype, off), off)
            elif rtype == SNAME:
                sname = _string(payload, dtype, off)
            elif rtype == STRANS:
                flags = _first(_ints(payload, dtype, off), off)
            elif rtype == MAG:
                mag = _first(_reals(payload, dtype, off), off)
            elif rtype == ANGLE:
                angle = _first(_reals(payload, dtype, off), off)
            elif rtype == COLROW:
                cr = _ints(payload, dtype, off)
                if len(cr) != 2:
                    raise GdsParseError("COLROW record must hold two integers", off)
                cols, rows = cr
            elif rtype in _HEAD_EXTRAS or rtype in _MID_EXTRAS or rtype in _TAIL_EXTRAS:
                extras.append((rtype, dtype, payload))
            else:
                self.skipped += 1

        pts = tuple(zip(xy[0::2], xy[1::2]))
        extras_t = tuple(extras)
        try:
            if kind == BOUNDARY:
                if len(pts) > 1 and pts[0] == pts[-1]:
                    pts = pts[:-1]
                if len(pts) < 3:
                    raise GdsParseError("BOUNDARY needs at least 3 vertices", start)
                return Boundary(layer, datatype, pts, extras_t)
            if kind == PATH:
                if len(pts) < 2:
                    raise GdsParseError("PATH needs at least 2 points", start)
                return Path(layer, datatype, pts, width, pathtype, extras_t)
            if sname is None:
                raise GdsParseError("reference without SNAME", start)
            transform = GdsTransform(
                reflect_x=bool(flags & 0x8000), magnification=mag, angle_deg=angle,
                translate=pts[0] if pts else (0, 0),
                abs_mag=bool(flags & 0x0004), abs_angle=bool(flags & 0x0002))
            if kind == SREF:
                if len(pts) != 1:
                    raise GdsParseError("SREF needs exactly one XY point", start)
                return SRef(sname, transform, extras_t)
            if len(pts) != 3:
                raise GdsParseError("AREF needs exactly three XY points", start)
            if cols < 1 or rows < 1:
                raise GdsParseError("AREF needs a positive COLROW", start)
            (ox, oy), (cx, cy), (rx, ry) = pts
            return ARef(sname, transform, cols, rows,
                        (_step(cx - ox, cols), _step(cy - oy, cols)),
                        (_step(rx - ox, rows), _step(ry - oy, rows)), extras_t)
        except ValueError as exc:
            raise GdsParseError(str(exc), start) from None


def parse_library(data: bytes) -> GdsLibrary:
    """Parse a complete GDSII stream held in memory."""
    return _Reader(bytes(data)).parse()


def read_gds(path: Union[str, PathLike]) -> GdsLibrary:
    with open(path, "rb") as fh:
        return parse_library(fh.read())


# -- writing ----------------------------------------------------------------


def _record(out: bytearray, rtype: int, dtype: int, payload: bytes = b"") -> None:
    if len(payload) + 4 > 0xFFFF:
        raise GdsWriteError(f"record type 0x{rtype:02x} payload too large ({len(payload)} bytes)")
    out += struct.pack(">HBB", len(payload) + 4, rtype, dtype)
    out += payload


def _int2(*values: int) -> bytes:
    return struct.pack(f">{len(values)}h", *values)


def _name(name: str, limit: int | None = 32) -> bytes:
    raw = name.encode("latin-1")
    if not raw:
        raise GdsWriteError("empty name")
    if limit is not None and len(raw) > limit:
        raise NameTooLongError(f"name {name!r} exceeds {limit} bytes")
    return raw + b"\x00" if len(raw) % 2 else raw


def _round_half_away(v: float) -> int:
    return int(math.floor(abs(v) + 0.5)) * (1 if v >= 0 else -1)


def _xy(points) -> bytes:
    flat = [c for p in points for c in p]
    if flat and (min(flat) < _INT32_MIN or max(flat) > _INT32_MAX):
        raise CoordinateOverflowError("coordinate does not fit a signed 32-bit integer")
    return struct.pack(f">{len(flat)}i", *flat)


def _extras(out: bytearray, extras, group) -> None:
    for rtype, dtype, payload in extras:
        if rtype in group:
            _record(out, rtype, dtype, payload)


def _write_transform(out: bytearray, t: GdsTransform) -> None:
    flags = (0x8000 if t.reflect_x else 0) | (0x0004 if t.abs_mag else 0) \
        | (0x0002 if t.abs_angle else 0)
    if flags or t.magnification != 1.0 or t.angle_deg != 0.0:
        _record(out, STRANS, BITARRAY, struct.pack(">H", flags))
        if t.magnification != 1.0:
            _record(out, MAG, REAL8, encode_real8(t.magnification))
        if t.angle_deg != 0.0:
            _record(out, ANGLE, REAL8, encode_real8(t.angle_deg))


def _write_element(out: bytearray, el: GdsElement) -> None:
    if isinstance(el, OpaqueElement):
        _record(out, _OPAQUE_CODES[el.kind], NODATA)
        for rtype, dtype, payload in el.records:
            _record(out, rtype, dtype, payload)
        _record(out, ENDEL, NODATA)
        return
    if isinstance(el, Boundary):
        _record(out, BOUNDARY, NODATA)
        _extras(out, el.extras, _HEAD_EXTRAS)
        _record(out, LAYER, INT2, _int2(el.layer if el.layer < 32768 else el.layer - 65536))
        _record(out, DATATYPE, INT2, _int2(el.datatype if el.datatype < 32768 else el.datatype - 65536))
        _record(out, XY, INT4, _xy(el.points + el.points[:1]))
    elif isinstance(el, Path):
        _record(out, PATH, NODATA)
        _extras(out, el.extras, _HEAD_EXTRAS)
        _record(out, LAYER, INT2, _int2(el.layer if el.layer < 32768 else el.layer - 65536))
        _record(out, DATATYPE, INT2, _int2(el.datatype if el.datatype < 32768 else el.datatype - 65536))
        if el.pathtype:
            _record(out, PATHTYPE, INT2, _int2(el.pathtype))
        if el.width:
            _record(out, WIDTH, INT4, struct.pack(">i", el.width))
        _extras(out, el.extras, _MID_EXTRAS)
        _record(out, XY, INT4, _xy(el.points))
    elif isinstance(el, SRef):
        _record(out, SREF, NODATA)
        _extras(out, el.extras, _HEAD_EXTRAS)
        _record(out, SNAME, ASCII, _name(el.target))
        _write_transform(out, el.transform)
        _record(out, XY, INT4, _xy([el.transform.translate]))
    elif isinstance(el, ARef):
        _record(out, AREF, NODATA)
        _extras(out, el.extras, _HEAD_EXTRAS)
        _record(out, SNAME, ASCII, _name(el.target))
        _write_transform(out, el.transform)
        _record(out, COLROW, INT2, _int2(el.cols, el.rows))
        ox, oy = el.transform.translate
        corner_c = (_round_half_away(ox + el.cols * el.col_step[0]),
                    _round_half_away(oy + el.cols * el.col_step[1]))
        corner_r = (_round_half_away(ox + el.rows * el.row_step[0]),
                    _round_half_away(oy + el.rows * el.row_step[1]))
        _record(out, XY, INT4, _xy([(ox, oy), corner_c, corner_r]))
    else:
        raise GdsWriteError(f"unsupported element {type(el).__name__}")
    _extras(out, el.extras, _TAIL_EXTRAS)
    _record(out, ENDEL, NODATA)


def write_library(lib: GdsLibrary) -> bytes:
    """Serialize ``lib`` to a GDSII stream."""
    out = bytearray()
    _record(out, HEADER, INT2, _int2(lib.version))
    _record(out, BGNLIB, INT2, _int2(*lib.timestamps))
    _record(out, LIBNAME, ASCII, _name(lib.name, limit=None))
    _record(out, UNITS, REAL8,
            encode_real8(lib.units.user_unit_per_dbu) + encode_real8(lib.units.meters_per_dbu))
    for s in lib.structures:
        _record(out, BGNSTR, INT2, _int2(*s.timestamps))
        _record(out, STRNAME, ASCII, _name(s.name))
        for el in s.elements:
            _write_element(out, el)
        _record(out, ENDSTR, NODATA)
    _record(out, ENDLIB, NODATA)
    return bytes(out)


def write_gds(lib: GdsLibrary, path: Union[str, PathLike]) -> None:
    data = write_library(lib)
    with open(path, "wb") as fh:
        fh.write(data)


# -- library operations -----------------------------------------------------


def extract_layer(lib: GdsLibrary, key: LayerKey) -> GdsLibrary:
    """Keep the reference skeleton and only the geometry on ``key``."""

    def keep(el: GdsElement) -> bool:
        if isinstance(el, (SRef, ARef)):
            return True
        if isinstance(el, (Boundary, Path)):
            return el.layer == key.layer and el.datatype == key.datatype
        return False

    structures = tuple(replace(s, elements=tuple(e for e in s.elements if keep(e)))
                       for s in lib.structures)
    return replace(lib, structures=structures)


def _retarget(el: GdsElement, renames: dict[str, str]) -> GdsElement:
    if isinstance(el, (SRef, ARef)) and el.target in renames:
        return replace(el, target=renames[el.target])
    return el


def merge_libraries(base: GdsLibrary, art: GdsLibrary, top_cell: str) -> GdsLibrary:
    """Import every structure of ``art`` into ``base`` and instantiate the art top
    structure(s) inside ``top_cell``.  Colliding art names get an ``_ART<n>`` suffix.
    """
    a, b = base.units.meters_per_dbu, art.units.meters_per_dbu
    if abs(a - b) > 1e-12 * max(abs(a), abs(b)):
        raise GdsMergeError(f"database unit mismatch: {a!r} m vs {b!r} m")
    if top_cell not in base:
        raise GdsMergeError(f"top cell {top_cell!r} not found in base library")

    taken = set(base.by_name)
    renames: dict[str, str] = {}
    for s in art.structures:
        name = s.name
        if name in taken:
            n = 1
            while f"{s.name}_ART{n}" in taken:
                n += 1
            name = f"{s.name}_ART{n}"
            renames[s.name] = name
        taken.add(name)
    imported = [replace(s, name=renames.get(s.name, s.name),
                        elements=tuple(_retarget(e, renames) for e in s.elements))
                for s in art.structures]
    new_refs = tuple(SRef(renames.get(s.name, s.name)) for s in art.top_level())

    structures = []
    for s in base.structures:
        if s.name == top_cell:
            s = replace(s, elements=s.elements + new_refs)
        structures.append(s)
    return replace(base, structures=tuple(structures + imported), skipped_records=0)
