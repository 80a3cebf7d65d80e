import random

import pytest

from coltile.encodings import (
    CorruptStreamError,
    EncodingProfile,
    LogicalEncoding,
    PhysicalEncoding,
    TruncationError,
)
from coltile.geometry import CorruptTopologyError
from coltile.model import (
    AttributeScope,
    Column,
    FeatureTable,
    Geometry,
    ListType,
    ScalarType,
    Tile,
    TileCoord,
)
from coltile.storage import (
    EnvelopeError,
    StreamKind,
    UnsupportedProfileError,
    ValidationError,
    decode_column,
    decode_tile,
    encode_column,
    encode_tile,
    read_envelope,
)

from conftest import random_tile

DECODE_ERRORS = (
    EnvelopeError,
    CorruptStreamError,
    TruncationError,
    CorruptTopologyError,
    ValueError,
)


# -- column layouts ------------------------------------------------------------


def test_nullable_string_dictionary_layout():
    column = Column("name", ScalarType.STRING, nullable=True)
    streams = encode_column(["a", None, "a"], column, EncodingProfile.SIMPLE)
    kinds = [s.kind for s in streams]
    assert kinds == [StreamKind.PRESENT, StreamKind.OFFSET, StreamKind.LENGTH, StreamKind.DATA]
    present, offsets, lengths, data = streams
    assert present.payload == bytes([0b101])
    assert present.header.value_count == 3
    from coltile.storage import _decode_int_stream

    assert _decode_int_stream(offsets) == [0, 0]  # dictionary index per non-null row
    assert _decode_int_stream(lengths) == [1]  # one dictionary entry
    assert data.payload == b"a"
    assert decode_column(streams, column, 3) == ["a", None, "a"]


def test_int_column_uses_delta_varint():
    column = Column("v", ScalarType.INT32)
    streams = encode_column([1, 2, 3], column, EncodingProfile.SIMPLE)
    assert len(streams) == 1
    header = streams[0].header
    assert header.logical.base == LogicalEncoding.DELTA
    assert header.physical == PhysicalEncoding.VARINT
    assert decode_column(streams, column, 3) == [1, 2, 3]


def test_list_column_layout():
    column = Column("xs", ListType(ScalarType.UINT32))
    streams = encode_column([(1, 2), (), (3,)], column, EncodingProfile.SIMPLE)
    assert [s.kind for s in streams] == [StreamKind.LENGTH, StreamKind.DATA]
    assert streams[0].header.value_count == 3
    assert streams[1].header.value_count == 3  # flattened elements
    assert decode_column(streams, column, 3) == [(1, 2), (), (3,)]


def test_decode_column_truncation():
    column = Column("v", ScalarType.UINT32)
    streams = encode_column([9, 9, 9, 1, 1], column, EncodingProfile.SIMPLE)
    broken = streams[0].__class__(streams[0].header, streams[0].payload[:-1])
    with pytest.raises((CorruptStreamError, TruncationError)):
        decode_column([broken], column, 5)


def test_decode_column_present_count_mismatch():
    column = Column("v", ScalarType.UINT32, nullable=True)
    streams = encode_column([1, None, 3], column, EncodingProfile.SIMPLE)
    with pytest.raises(CorruptStreamError):
        decode_column(streams, column, 4)


def test_null_in_non_nullable_rejected():
    with pytest.raises(ValueError):
        encode_column([1, None], Column("v", ScalarType.UINT32), EncodingProfile.SIMPLE)


# -- tile envelope ---------------------------------------------------------------

GOLDEN_TILE_SIMPLE = bytes.fromhex(
    "4d4c543101000103706f698020020101046e616d650701010301010101070204010101010109110102"
    "023222030000000101010201010101050300000505616c706861"
)


def golden_tile() -> Tile:
    table = FeatureTable(
        name="poi",
        ids=(7,),
        geometries=(Geometry.point((25, 17)),),
        columns=(Column("name", ScalarType.STRING, nullable=True),),
        values={"name": ("alpha",)},
    )
    return Tile(TileCoord(1, 0, 0), (table,))


def test_empty_tile_is_seven_bytes():
    tile = Tile(TileCoord(0, 0, 0), ())
    data = encode_tile(tile)
    assert data == b"MLT1" + bytes([1, 0, 0])
    assert len(data) == 7
    assert decode_tile(data) == tile


def test_golden_tile_bytes():
    assert encode_tile(golden_tile(), EncodingProfile.SIMPLE) == GOLDEN_TILE_SIMPLE
    assert decode_tile(GOLDEN_TILE_SIMPLE, TileCoord(1, 0, 0)) == golden_tile()


def test_encode_is_deterministic():
    rng = random.Random(31)
    for _ in range(10):
        tile = random_tile(rng)
        for profile in EncodingProfile:
            assert encode_tile(tile, profile) == encode_tile(tile, profile)


def test_round_trip_randomized():
    rng = random.Random(5150)
    for i in range(60):
        tile = random_tile(rng)
        profile = EncodingProfile(i % 2)
        data = encode_tile(tile, profile, tessellate=i % 3 == 0)
        assert decode_tile(data, tile.coord) == tile


def test_advanced_never_larger_than_simple():
    rng = random.Random(62)
    for _ in range(25):
        tile = random_tile(rng)
        simple = len(encode_tile(tile, EncodingProfile.SIMPLE))
        advanced = len(encode_tile(tile, EncodingProfile.ADVANCED))
        assert advanced <= simple + 64


def test_validation_failure_rejected():
    bad = FeatureTable(name="t", ids=(1, 1), geometries=(Geometry.point((0, 0)),) * 2)
    with pytest.raises(ValidationError) as info:
        encode_tile(Tile(TileCoord(0, 0, 0), (bad,)))
    assert info.value.diagnostics


def test_bad_magic():
    data = bytearray(GOLDEN_TILE_SIMPLE)
    data[0] ^= 0xFF
    with pytest.raises(EnvelopeError):
        decode_tile(bytes(data))


def test_bad_version():
    data = bytearray(GOLDEN_TILE_SIMPLE)
    data[4] = 9
    with pytest.raises(EnvelopeError):
        decode_tile(bytes(data))


def test_unknown_profile_byte():
    data = bytearray(GOLDEN_TILE_SIMPLE)
    data[5] = 7
    with pytest.raises(EnvelopeError):
        decode_tile(bytes(data))


def test_profile_gate():
    rng = random.Random(77)
    tile = random_tile(rng, max_tables=2)
    advanced = encode_tile(tile, EncodingProfile.ADVANCED)
    with pytest.raises(UnsupportedProfileError):
        decode_tile(advanced, tile.coord, max_profile=EncodingProfile.SIMPLE)
    assert decode_tile(advanced, tile.coord, max_profile=EncodingProfile.ADVANCED) == tile
    simple = encode_tile(tile, EncodingProfile.SIMPLE)
    assert decode_tile(simple, tile.coord, max_profile=EncodingProfile.SIMPLE) == tile


def test_truncation_everywhere():
    data = encode_tile(golden_tile(), EncodingProfile.SIMPLE)
    for cut in range(len(data)):
        with pytest.raises(DECODE_ERRORS):
            decode_tile(data[:cut])


def test_single_byte_corruption_never_crashes():
    rng = random.Random(123)
    tile = random_tile(rng, max_tables=2, max_rows=5)
    data = bytearray(encode_tile(tile, EncodingProfile.ADVANCED, tessellate=True))
    for _ in range(400):
        pos = rng.randrange(len(data))
        old = data[pos]
        data[pos] = rng.randrange(256)
        try:
            decode_tile(bytes(data), tile.coord)
        except DECODE_ERRORS:
            pass
        finally:
            data[pos] = old


def test_trailing_garbage_rejected():
    with pytest.raises(EnvelopeError):
        decode_tile(GOLDEN_TILE_SIMPLE + b"\x00")


def test_read_envelope_structure():
    parsed = read_envelope(GOLDEN_TILE_SIMPLE)
    assert parsed.profile == EncodingProfile.SIMPLE
    assert len(parsed.tables) == 1
    block = parsed.tables[0]
    assert block.name == "poi"
    assert block.feature_count == 1
    assert [c.name for c in block.columns] == ["name"]


def test_tessellation_streams_present():
    rng = random.Random(9)
    square = [(0, 0), (0, 10), (10, 10), (10, 0)]
    table = FeatureTable(
        name="b", ids=(1,), geometries=(Geometry.polygon([square]),)
    )
    data = encode_tile(Tile(TileCoord(0, 0, 0), (table,)), tessellate=True)
    parsed = read_envelope(data)
    kinds = {s.kind for s in parsed.tables[0].geometry_streams}
    assert StreamKind.INDEX_BUFFER in kinds
    assert StreamKind.TRIANGLES in kinds
    assert decode_tile(data) == Tile(TileCoord(0, 0, 0), (table,))


def test_extreme_int64_spread_round_trips():
    # sorted int64 values whose deltas overflow the signed 64-bit range must
    # not be delta-encoded
    column = Column("v", ScalarType.INT64)
    values = [-(2**63), 2**63 - 1]
    for profile in EncodingProfile:
        streams = encode_column(values, column, profile)
        assert streams[0].header.logical.base != LogicalEncoding.DELTA
        assert decode_column(streams, column, 2) == values


def test_vertex_scoped_column_round_trip():
    table = FeatureTable(
        name="p",
        ids=(1, 2),
        geometries=(
            Geometry.line_string([(0, 0), (5, 5)]),
            Geometry.line_string([(1, 1), (2, 2), (3, 3)]),
        ),
        columns=(Column("m", ScalarType.FLOAT64, scope=AttributeScope.VERTEX),),
        values={"m": (0.0, 1.0, 2.0, 3.0, 4.0)},
    )
    tile = Tile(TileCoord(0, 0, 0), (table,))
    assert decode_tile(encode_tile(tile)) == tile
