import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _support import UNITS_1E3_1E9, ascii_payload, minimal_stream, random_library, rec
from artistic.gdsii import (ARef, Boundary, CoordinateOverflowError, GdsLibrary, GdsMergeError,
                            GdsParseError, GdsStructure, GdsTransform, GdsUnits, LayerKey,
                            MissingEndlibError, MissingUnitsError, NameTooLongError,
                            OpaqueElement, Path, RecordLengthError, SRef, TruncatedRecordError,
                            decode_real8, encode_real8, extract_layer, merge_libraries,
                            parse_library, read_gds, write_gds, write_library)

BOUNDARY_134 = (rec(0x05, 2, struct.pack(">12h", *([1970, 1, 1, 0, 0, 0] * 2)))
                + rec(0x06, 6, ascii_payload("TOP"))
                + rec(0x08, 0)
                + rec(0x0D, 2, struct.pack(">h", 134))
                + rec(0x0E, 2, struct.pack(">h", 0))
                + rec(0x10, 3, struct.pack(">10i", 0, 0, 1000, 0, 1000, 1000, 0, 1000, 0, 0))
                + rec(0x11, 0)
                + rec(0x07, 0))


# -- 8-byte reals ----------------------------------------------------------------


@pytest.mark.parametrize("value,hexbytes", [
    (1.0, "4110000000000000"),
    (0.5, "4080000000000000"),
    (-2.0, "c120000000000000"),
    (16.0, "4210000000000000"),
    (0.0, "0000000000000000"),
])
def test_real8_known_encodings(value, hexbytes):
    assert encode_real8(value).hex() == hexbytes
    assert decode_real8(bytes.fromhex(hexbytes)) == value


def test_real8_reads_tool_written_units():
    assert decode_real8(UNITS_1E3_1E9[:8]) == 1e-3
    assert decode_real8(UNITS_1E3_1E9[8:]) == 1e-9


@given(st.floats(min_value=1e-70, max_value=1e70) | st.floats(min_value=-1e70, max_value=-1e-70))
def test_real8_roundtrip_is_exact(x):
    assert decode_real8(encode_real8(x)) == x


# -- parsing -------------------------------------------------------------------------


def test_minimal_library():
    lib = parse_library(minimal_stream())
    assert lib.name == "LIB"
    assert lib.structures == ()
    assert lib.units.meters_per_dbu == 1e-9
    assert lib.units.user_unit_per_dbu == 1e-3


def test_hand_encoded_boundary():
    lib = parse_library(minimal_stream(BOUNDARY_134))
    (el,) = lib["TOP"].elements
    assert isinstance(el, Boundary)
    assert el.key == LayerKey(134, 0)
    assert el.points == ((0, 0), (1000, 0), (1000, 1000), (0, 1000))


def test_writer_matches_hand_encoding():
    lib = GdsLibrary("LIB", GdsUnits(1e-3, 1e-9), (
        GdsStructure("TOP", (Boundary(134, 0, ((0, 0), (1000, 0), (1000, 1000), (0, 1000))),)),))
    expected = minimal_stream(BOUNDARY_134)
    out = write_library(lib)
    # our UNITS encode the doubles exactly; tools may round the decimal differently
    units_at = expected.index(UNITS_1E3_1E9)
    assert out[:units_at] == expected[:units_at]
    assert out[units_at + 16:] == expected[units_at + 16:]
    assert parse_library(out) == parse_library(expected)


def test_opaque_and_unknown_records():
    text = (rec(0x0C, 0) + rec(0x0D, 2, struct.pack(">h", 5)) + rec(0x16, 2, b"\x00\x00")
            + rec(0x10, 3, struct.pack(">2i", 1, 2)) + rec(0x19, 6, b"HI") + rec(0x11, 0))
    body = BOUNDARY_134.replace(rec(0x07, 0), text + rec(0x07, 0))
    body = rec(0x3B, 2, b"\x00\x01") + body  # record type unknown to us
    lib = parse_library(minimal_stream(body))
    els = lib["TOP"].elements
    assert isinstance(els[1], OpaqueElement) and els[1].kind == "TEXT"
    assert lib.skipped_records == 1
    assert parse_library(write_library(lib)) == lib


def test_errors_name_offsets():
    good = minimal_stream(BOUNDARY_134)
    with pytest.raises(TruncatedRecordError) as e:
        parse_library(good[:-2])
    assert e.value.offset == len(good) - 4
    odd = bytearray(good)
    odd[len(good) - 4:len(good) - 2] = struct.pack(">H", 5)
    with pytest.raises(RecordLengthError) as e:
        parse_library(bytes(odd))
    assert e.value.offset == len(good) - 4
    with pytest.raises(MissingEndlibError):
        parse_library(good[:-4])
    no_units = good.replace(rec(0x03, 5, UNITS_1E3_1E9), b"")
    with pytest.raises(MissingUnitsError) as e:
        parse_library(no_units)
    assert e.value.offset == no_units.index(struct.pack(">HBB", 28, 0x05, 2)) == 42
    with pytest.raises(GdsParseError) as e:
        parse_library(good[6:])
    assert e.value.offset == 0
    assert "offset" in str(e.value)


def test_short_payload_is_a_parse_error():
    bad = BOUNDARY_134.replace(rec(0x0D, 2, struct.pack(">h", 134)), rec(0x0D, 2))
    with pytest.raises(GdsParseError):
        parse_library(minimal_stream(bad))


# -- writing -------------------------------------------------------------------------


def test_coordinate_overflow_raises():
    lib = GdsLibrary("L", GdsUnits(), (GdsStructure("A", (
        Boundary(1, 0, ((0, 0), (2**31, 0), (0, 5))),)),))
    with pytest.raises(CoordinateOverflowError):
        write_library(lib)


def test_long_structure_name_raises():
    with pytest.raises(NameTooLongError):
        write_library(GdsLibrary("L", GdsUnits(), (GdsStructure("X" * 33),)))
    write_library(GdsLibrary("L" * 40, GdsUnits(), (GdsStructure("X" * 32),)))


def test_aref_with_fractional_pitch_roundtrips():
    t = GdsTransform(translate=(10, 20))
    lib = GdsLibrary("L", GdsUnits(), (
        GdsStructure("A", (Boundary(1, 0, ((0, 0), (1, 0), (0, 1))),)),
        GdsStructure("B", (ARef("A", t, 3, 2, (10, 0), (0, 7)),
                           ARef("A", t, 3, 1, (10 / 3, 0), (0, 5))))))
    back = parse_library(write_library(lib))
    assert back["B"].elements[0] == lib["B"].elements[0]
    assert back["B"].elements[1].col_step == pytest.approx((10 / 3, 0))


def test_file_roundtrip(tmp_path):
    lib = random_library(np.random.default_rng(5), n_elements=300)
    write_gds(lib, tmp_path / "x.gds")
    assert read_gds(tmp_path / "x.gds") == lib


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_roundtrip_property(seed):
    lib = random_library(np.random.default_rng(seed), max_elements=300)
    data = write_library(lib)
    back = parse_library(data)
    assert back == lib
    assert write_library(back) == data


# -- library operations -----------------------------------------------------------


def _lib_with_layers():
    sub = GdsStructure("SUB", (Boundary(134, 0, ((0, 0), (5, 0), (5, 5))),
                               Boundary(1, 0, ((0, 0), (5, 0), (5, 5))),
                               OpaqueElement("BOX", ())))
    top = GdsStructure("TOP", (SRef("SUB"), Path(134, 0, ((0, 0), (10, 0)), 2)))
    return GdsLibrary("L", GdsUnits(), (sub, top))


def test_extract_layer_keeps_hierarchy():
    out = extract_layer(_lib_with_layers(), LayerKey(134, 0))
    assert [type(e).__name__ for e in out["SUB"].elements] == ["Boundary"]
    assert [type(e).__name__ for e in out["TOP"].elements] == ["SRef", "Path"]


def test_merge_renames_collisions_and_instantiates_art():
    base = _lib_with_layers()
    art = GdsLibrary("ART", GdsUnits(), (
        GdsStructure("SUB", (Boundary(134, 0, ((0, 0), (1, 0), (1, 1))),)),
        GdsStructure("MEERKAT_ART", (SRef("SUB"),))))
    merged = merge_libraries(base, art, "TOP")
    names = [s.name for s in merged.structures]
    assert names == ["SUB", "TOP", "SUB_ART1", "MEERKAT_ART"]
    assert merged["MEERKAT_ART"].elements[0].target == "SUB_ART1"
    assert merged["TOP"].elements[-1] == SRef("MEERKAT_ART")
    assert parse_library(write_library(merged)) == merged


def test_merge_rejects_unit_mismatch():
    art = GdsLibrary("ART", GdsUnits(1e-3, 1e-8), (GdsStructure("A"),))
    with pytest.raises(GdsMergeError):
        merge_libraries(_lib_with_layers(), art, "TOP")
    with pytest.raises(GdsMergeError):
        merge_libraries(_lib_with_layers(), GdsLibrary("A", GdsUnits(), ()), "NOPE")
