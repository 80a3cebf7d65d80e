"""Bit-exact tile container: stream framing, envelope metadata, and the
column/tile encode-decode pipeline.

The layout is normative and locked by golden tests: magic "MLT1", version
byte, profile byte, varint-framed headers, streams contiguous per column.
All header integers are varints; names are length-prefixed UTF-8.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from . import encodings as enc
from .encodings import (
    CorruptStreamError,
    EncodingProfile,
    LogicalEncoding,
    PhysicalEncoding,
    TruncationError,
    varint_get,
    varint_put,
)
from .geometry import (
    TopologySet,
    VertexBufferPlain,
    VertexDictionary,
    build_topology,
    encode_vertex_dictionary,
    rebuild_geometries,
    tessellate_polygon,
)
from .model import (
    AttributeScope,
    Column,
    FeatureTable,
    GeometryType,
    ListType,
    ScalarType,
    StructType,
    Tile,
    TileCoord,
    validate_table,
)

MAGIC = b"MLT1"
VERSION = 1


class EnvelopeError(ValueError):
    """Malformed container framing; carries the offending byte offset."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class UnsupportedProfileError(EnvelopeError):
    pass


class ValidationError(ValueError):
    def __init__(self, diagnostics):
        super().__init__(f"tile failed validation: {diagnostics[:5]}")
        self.diagnostics = diagnostics


class StreamKind(enum.IntEnum):
    PRESENT = 0
    OFFSET = 1
    LENGTH = 2
    DATA = 3
    TYPE = 4
    GEOMETRIES = 5
    RINGS = 6
    VERTICES = 7
    VERTEX_OFFSETS = 8
    VERTEX_BUFFER = 9
    INDEX_BUFFER = 10
    TRIANGLES = 11


@dataclass(frozen=True)
class StreamHeader:
    kind: StreamKind
    logical: LogicalEncoding
    physical: PhysicalEncoding
    value_count: int
    byte_length: int


@dataclass(frozen=True)
class Stream:
    header: StreamHeader
    payload: bytes

    @property
    def kind(self) -> StreamKind:
        return self.header.kind


_SCALAR_TAG = {
    ScalarType.BOOLEAN: 0,
    ScalarType.INT32: 1,
    ScalarType.UINT32: 2,
    ScalarType.INT64: 3,
    ScalarType.UINT64: 4,
    ScalarType.FLOAT32: 5,
    ScalarType.FLOAT64: 6,
    ScalarType.STRING: 7,
}
_TAG_SCALAR = {v: k for k, v in _SCALAR_TAG.items()}

_LIST_FLAG = 0x10
_STRUCT_TAG = 0x20


# -- low-level helpers ----------------------------------------------------------


def _put_name(name: str, out: bytearray) -> None:
    data = name.encode("utf-8")
    varint_put(len(data), out)
    out += data


def _get_name(data, pos: int) -> tuple[str, int]:
    size, pos = varint_get(data, pos)
    if pos + size > len(data):
        raise EnvelopeError("name runs past end of data", pos)
    try:
        name = bytes(data[pos : pos + size]).decode("utf-8")
    except UnicodeDecodeError as e:
        raise EnvelopeError(f"name is not UTF-8: {e}", pos) from None
    return name, pos + size


def _write_stream(
    out: bytearray,
    kind: StreamKind,
    logical: LogicalEncoding,
    physical: PhysicalEncoding,
    value_count: int,
    payload: bytes,
) -> None:
    out.append(kind)
    out.append(logical)
    out.append(physical)
    varint_put(value_count, out)
    varint_put(len(payload), out)
    out += payload


def _stream(kind, logical, physical, value_count, payload: bytes) -> Stream:
    return Stream(StreamHeader(kind, logical, physical, value_count, len(payload)), payload)


def _read_stream(data, pos: int) -> tuple[Stream, int]:
    if pos + 3 > len(data):
        raise EnvelopeError("stream header truncated", pos)
    try:
        kind = StreamKind(data[pos])
        logical = LogicalEncoding(data[pos + 1])
        physical = PhysicalEncoding(data[pos + 2])
    except ValueError as e:
        raise CorruptStreamError(f"unknown encoding id at byte {pos}: {e}") from None
    pos += 3
    value_count, pos = varint_get(data, pos)
    byte_length, pos = varint_get(data, pos)
    if pos + byte_length > len(data):
        raise TruncationError(f"stream payload truncated at byte {pos}")
    payload = bytes(data[pos : pos + byte_length])
    return Stream(StreamHeader(kind, logical, physical, value_count, byte_length), payload), pos + byte_length


def _encode_ints_best(
    xs, logical: LogicalEncoding, profile: EncodingProfile
) -> tuple[LogicalEncoding, PhysicalEncoding, bytes]:
    """Apply the logical stage and pick the smaller physical packing.

    The simple profile always packs varint; the advanced profile packs
    whichever of varint and bitpack is smaller, so advanced output is never
    larger than simple output for the same stream.
    """
    via_varint = enc.encode_int_stream(xs, logical, PhysicalEncoding.VARINT)
    if profile == EncodingProfile.SIMPLE:
        return logical, PhysicalEncoding.VARINT, via_varint
    via_bitpack = enc.encode_int_stream(xs, logical, PhysicalEncoding.BITPACK_FOR)
    if len(via_bitpack) < len(via_varint):
        return logical, PhysicalEncoding.BITPACK_FOR, via_bitpack
    return logical, PhysicalEncoding.VARINT, via_varint


def _int_stream(kind: StreamKind, xs, domain: str, profile: EncodingProfile) -> Stream:
    stats = enc.stream_stats(xs)
    logical, _ = enc.select_encoding(stats, domain, profile)
    logical, physical, payload = _encode_ints_best(xs, logical, profile)
    return _stream(kind, logical, physical, len(xs), payload)


def _id_stream(ids, profile: EncodingProfile) -> Stream:
    # Monotone ids become delta-RLE so readers can keep them compressed.
    if len(ids) > 1 and all(b > a for a, b in zip(ids, ids[1:])):
        deltas = enc.delta_encode(list(ids))
        stats = enc.stream_stats(deltas)
        logical = (
            LogicalEncoding.DELTA_RLE if 4 * stats.run_count <= stats.count else LogicalEncoding.DELTA
        )
        logical, physical, payload = _encode_ints_best(list(ids), logical, profile)
        return _stream(StreamKind.DATA, logical, physical, len(ids), payload)
    return _int_stream(StreamKind.DATA, list(ids), "unsigned", profile)


def _decode_int_stream(stream: Stream) -> list[int]:
    return enc.decode_int_stream(
        stream.payload, stream.header.logical, stream.header.physical, stream.header.value_count
    )


# -- attribute column encoding ----------------------------------------------------


def _scalar_domain(stype: ScalarType) -> str:
    return "signed" if stype.is_signed else "unsigned"


def _encode_scalar_streams(values, stype: ScalarType, profile, out: list[Stream]) -> None:
    """Data stream set for non-null scalar values."""
    if stype == ScalarType.STRING:
        stats = enc.stream_stats(values)
        logical, _ = enc.select_encoding(stats, "string", profile)
        if logical == LogicalEncoding.DICTIONARY:
            dictionary, indices = enc.dict_encode(values)
            out.append(_int_stream(StreamKind.OFFSET, indices, "unsigned", profile))
            entries = [s.encode("utf-8") for s in dictionary]
        else:
            entries = [s.encode("utf-8") for s in values]
        out.append(_int_stream(StreamKind.LENGTH, [len(e) for e in entries], "unsigned", profile))
        data = b"".join(entries)
        out.append(_stream(StreamKind.DATA, LogicalEncoding.NONE, PhysicalEncoding.PLAIN, len(data), data))
    elif stype == ScalarType.BOOLEAN:
        payload = enc.bitset_encode(values)
        out.append(
            _stream(StreamKind.DATA, LogicalEncoding.NONE, PhysicalEncoding.PLAIN, len(values), payload)
        )
    elif stype.is_float:
        fmt = "f" if stype == ScalarType.FLOAT32 else "d"
        payload = struct.pack(f"<{len(values)}{fmt}", *values)
        out.append(
            _stream(StreamKind.DATA, LogicalEncoding.NONE, PhysicalEncoding.PLAIN, len(values), payload)
        )
    else:
        out.append(_int_stream(StreamKind.DATA, list(values), _scalar_domain(stype), profile))


def _decode_scalar_streams(streams, pos: int, stype: ScalarType, count: int) -> tuple[list, int]:
    if stype == ScalarType.STRING:
        indices = None
        if pos < len(streams) and streams[pos].kind == StreamKind.OFFSET:
            indices = _decode_int_stream(streams[pos])
            if len(indices) != count:
                raise CorruptStreamError(f"{len(indices)} dictionary offsets for {count} values")
            pos += 1
        if pos >= len(streams) or streams[pos].kind != StreamKind.LENGTH:
            raise CorruptStreamError("string column is missing its length stream")
        lengths = _decode_int_stream(streams[pos])
        pos += 1
        if pos >= len(streams) or streams[pos].kind != StreamKind.DATA:
            raise CorruptStreamError("string column is missing its data stream")
        data = streams[pos].payload
        pos += 1
        if indices is None and len(lengths) != count:
            raise CorruptStreamError(f"{len(lengths)} string lengths for {count} values")
        if sum(lengths) != len(data):
            raise CorruptStreamError("string lengths do not cover the data stream")
        entries = []
        offset = 0
        for n in lengths:
            entries.append(data[offset : offset + n].decode("utf-8"))
            offset += n
        if indices is None:
            return entries, pos
        return enc.dict_decode(entries, indices), pos
    if stype == ScalarType.BOOLEAN:
        stream = _expect(streams, pos, StreamKind.DATA)
        if stream.header.value_count != count:
            raise CorruptStreamError(f"boolean stream count {stream.header.value_count} != {count}")
        return enc.bitset_decode(stream.payload, count), pos + 1
    if stype.is_float:
        stream = _expect(streams, pos, StreamKind.DATA)
        width = 4 if stype == ScalarType.FLOAT32 else 8
        if len(stream.payload) != width * count:
            raise CorruptStreamError(f"float stream holds {len(stream.payload)} bytes for {count} values")
        fmt = "f" if stype == ScalarType.FLOAT32 else "d"
        return list(struct.unpack(f"<{count}{fmt}", stream.payload)), pos + 1
    stream = _expect(streams, pos, StreamKind.DATA)
    if stream.header.value_count != count:
        raise CorruptStreamError(f"integer stream count {stream.header.value_count} != {count}")
    values = _decode_int_stream(stream)
    _check_scalar_range(values, stype)
    return values, pos + 1


def _check_scalar_range(values, stype: ScalarType) -> None:
    lo, hi = {
        ScalarType.INT32: (-(2**31), 2**31 - 1),
        ScalarType.UINT32: (0, 2**32 - 1),
        ScalarType.INT64: (-(2**63), 2**63 - 1),
        ScalarType.UINT64: (0, 2**64 - 1),
    }[stype]
    for v in values:
        if not lo <= v <= hi:
            raise CorruptStreamError(f"value {v} outside {stype.value}")


def _expect(streams, pos: int, kind: StreamKind) -> Stream:
    if pos >= len(streams):
        raise CorruptStreamError(f"missing {kind.name} stream")
    if streams[pos].kind != kind:
        raise CorruptStreamError(f"expected {kind.name} stream, found {streams[pos].kind.name}")
    return streams[pos]


def encode_column(values, column: Column, profile: EncodingProfile) -> list[Stream]:
    """Encode one logical column into its stream list.

    Nullable columns lead with a present bitset; strings become either a
    dictionary (offset+length+data) or plain (length+data) layout; lists add
    a length stream over their flattened elements; structs emit one stream
    set per field.
    """
    out: list[Stream] = []
    rows = len(values)
    if column.nullable:
        flags = [v is not None for v in values]
        out.append(
            _stream(
                StreamKind.PRESENT,
                LogicalEncoding.NONE,
                PhysicalEncoding.PLAIN,
                rows,
                enc.bitset_encode(flags),
            )
        )
        dense = [v for v in values if v is not None]
    else:
        if any(v is None for v in values):
            raise ValueError(f"null in non-nullable column {column.name!r}")
        dense = list(values)

    ctype = column.type
    if isinstance(ctype, ScalarType):
        _encode_scalar_streams(dense, ctype, profile, out)
    elif isinstance(ctype, ListType):
        lengths = [len(v) for v in dense]
        out.append(_int_stream(StreamKind.LENGTH, lengths, "unsigned", profile))
        flat = [x for v in dense for x in v]
        _encode_scalar_streams(flat, ctype.element, profile, out)
    else:
        for field_name, field_type in ctype.fields:
            _encode_scalar_streams([v[field_name] for v in dense], field_type, profile, out)
    return out


def decode_column(streams, column: Column, row_count: int) -> list:
    """Exact inverse of encode_column for ``row_count`` logical rows."""
    pos = 0
    if column.nullable:
        present = _expect(streams, pos, StreamKind.PRESENT)
        if present.header.value_count != row_count:
            raise CorruptStreamError(
                f"present stream covers {present.header.value_count} rows, table has {row_count}"
            )
        flags = enc.bitset_decode(present.payload, row_count)
        pos += 1
        dense_count = sum(flags)
    else:
        flags = None
        dense_count = row_count

    ctype = column.type
    if isinstance(ctype, ScalarType):
        dense, pos = _decode_scalar_streams(streams, pos, ctype, dense_count)
    elif isinstance(ctype, ListType):
        length_stream = _expect(streams, pos, StreamKind.LENGTH)
        lengths = _decode_int_stream(length_stream)
        if len(lengths) != dense_count:
            raise CorruptStreamError(f"{len(lengths)} list lengths for {dense_count} rows")
        pos += 1
        flat, pos = _decode_scalar_streams(streams, pos, ctype.element, sum(lengths))
        dense = []
        offset = 0
        for n in lengths:
            dense.append(tuple(flat[offset : offset + n]))
            offset += n
    else:
        fields = []
        for _, field_type in ctype.fields:
            field_values, pos = _decode_scalar_streams(streams, pos, field_type, dense_count)
            fields.append(field_values)
        dense = [
            {name: fields[i][row] for i, (name, _) in enumerate(ctype.fields)}
            for row in range(dense_count)
        ]
    if pos != len(streams):
        raise CorruptStreamError(f"{len(streams) - pos} unexpected trailing streams")
    if flags is None:
        return dense
    it = iter(dense)
    return [next(it) if f else None for f in flags]


# -- geometry column ------------------------------------------------------------


def _delta_components(coords, dims: int) -> list[int]:
    out = list(coords)
    for lane in range(dims):
        prev = 0
        for i in range(lane, len(coords), dims):
            out[i] = coords[i] - prev
            prev = coords[i]
    return out


def _undelta_components(deltas, dims: int) -> list[int]:
    out = list(deltas)
    for lane in range(dims):
        acc = 0
        for i in range(lane, len(deltas), dims):
            acc += deltas[i]
            out[i] = acc
    return out


def _plain_buffer_stream(coords, dims: int, profile) -> Stream:
    deltas = _delta_components(coords, dims)
    logical, physical, payload = _encode_ints_best(deltas, LogicalEncoding.ZIGZAG, profile)
    # the logical tag records the full pipeline: per-component delta + zigzag
    return _stream(StreamKind.VERTEX_BUFFER, LogicalEncoding.ZIGZAG_DELTA, physical, len(coords), payload)


def _morton_streams(topology: TopologySet, table: FeatureTable, profile) -> list[Stream] | None:
    if topology.dimensions != 2:
        return None
    coords = topology.vertex_buffer.coordinates
    vertices = [(coords[i], coords[i + 1]) for i in range(0, len(coords), 2)]
    if not vertices:
        return None
    lo = min(min(v) for v in vertices)
    hi = max(max(v) for v in vertices)
    margin = max(0, -lo, hi - table.extent + 1)
    try:
        dictionary, offsets = encode_vertex_dictionary(vertices, table.extent, margin)
    except ValueError:
        return None
    offsets_stream = _int_stream(StreamKind.VERTEX_OFFSETS, offsets, "unsigned", profile)
    payload = bytearray()
    varint_put(dictionary.bias, payload)
    varint_put(dictionary.shift, payload)
    logical, physical, codes_payload = _encode_ints_best(
        list(dictionary.codes), LogicalEncoding.DELTA, profile
    )
    payload += codes_payload
    buffer_stream = _stream(
        StreamKind.VERTEX_BUFFER, LogicalEncoding.DELTA, physical, len(dictionary.codes), bytes(payload)
    )
    return [offsets_stream, buffer_stream]


def _stream_cost(streams) -> int:
    # header: 3 bytes + two varints
    total = 0
    for s in streams:
        scratch = bytearray()
        varint_put(s.header.value_count, scratch)
        varint_put(s.header.byte_length, scratch)
        total += 3 + len(scratch) + s.header.byte_length
    return total


def _encode_geometry_column(table: FeatureTable, profile, tessellate: bool) -> list[Stream]:
    topology = build_topology(table.geometries)
    out: list[Stream] = [
        _int_stream(StreamKind.TYPE, [int(t) for t in topology.type_stream], "unsigned", profile)
    ]
    if topology.geometries is not None:
        out.append(_int_stream(StreamKind.GEOMETRIES, list(topology.geometries), "unsigned", profile))
    if topology.rings is not None:
        out.append(_int_stream(StreamKind.RINGS, list(topology.rings), "unsigned", profile))
    if topology.vertices is not None:
        out.append(_int_stream(StreamKind.VERTICES, list(topology.vertices), "unsigned", profile))

    coords = topology.vertex_buffer.coordinates
    plain = _plain_buffer_stream(coords, table.dimensions, profile)
    buffer_streams = [plain]
    if profile == EncodingProfile.ADVANCED:
        # Size-driven choice: the Morton dictionary must never pessimize.
        morton = _morton_streams(topology, table, profile)
        if morton is not None and _stream_cost(morton) < _stream_cost([plain]):
            buffer_streams = morton
    out.extend(buffer_streams)

    if tessellate:
        indices: list[int] = []
        counts: list[int] = []
        vertex_base = 0
        for geom in table.geometries:
            polygons = []
            if geom.kind == GeometryType.POLYGON:
                polygons = [geom.parts]
            elif geom.kind == GeometryType.MULTIPOLYGON:
                polygons = list(geom.parts)
            if polygons:
                for rings in polygons:
                    tess = tessellate_polygon(rings)
                    indices.extend(i + vertex_base for i in tess.indices)
                    counts.append(tess.triangle_count)
                    vertex_base += sum(len(r) for r in rings)
            else:
                vertex_base += geom.vertex_count()
        if counts:
            out.append(_int_stream(StreamKind.INDEX_BUFFER, indices, "unsigned", profile))
            out.append(_int_stream(StreamKind.TRIANGLES, counts, "unsigned", profile))
    return out


def _decode_geometry_column(streams, dimensions: int, feature_count: int):
    """Returns (TopologySet, index buffer or None, triangle counts or None)."""
    by_pos = {s.kind: s for s in streams}
    if len(by_pos) != len(streams):
        raise CorruptStreamError("duplicate geometry stream kinds")
    allowed = {
        StreamKind.TYPE,
        StreamKind.GEOMETRIES,
        StreamKind.RINGS,
        StreamKind.VERTICES,
        StreamKind.VERTEX_OFFSETS,
        StreamKind.VERTEX_BUFFER,
        StreamKind.INDEX_BUFFER,
        StreamKind.TRIANGLES,
    }
    for kind in by_pos:
        if kind not in allowed:
            raise CorruptStreamError(f"{kind.name} stream does not belong in a geometry column")
    type_stream = by_pos.get(StreamKind.TYPE)
    if type_stream is None:
        raise CorruptStreamError("geometry column is missing its type stream")
    type_codes = _decode_int_stream(type_stream)
    if len(type_codes) != feature_count:
        raise CorruptStreamError(f"{len(type_codes)} geometry types for {feature_count} features")
    try:
        kinds = tuple(_GEOM_CODE[c] for c in type_codes)
    except KeyError as e:
        raise CorruptStreamError(f"unknown geometry type code {e}") from None

    def counts(kind: StreamKind):
        s = by_pos.get(kind)
        if s is None:
            return None
        values = _decode_int_stream(s)
        if any(v <= 0 for v in values):
            raise CorruptStreamError(f"non-positive count in {kind.name} stream")
        return tuple(values)

    geometries = counts(StreamKind.GEOMETRIES)
    rings = counts(StreamKind.RINGS)
    vertices = counts(StreamKind.VERTICES)

    buffer_stream = by_pos.get(StreamKind.VERTEX_BUFFER)
    if buffer_stream is None:
        raise CorruptStreamError("geometry column is missing its vertex buffer")
    offsets_stream = by_pos.get(StreamKind.VERTEX_OFFSETS)
    if offsets_stream is not None:
        offsets = tuple(_decode_int_stream(offsets_stream))
        bias, pos = varint_get(buffer_stream.payload, 0)
        shift, pos = varint_get(buffer_stream.payload, pos)
        if shift > 32:
            raise CorruptStreamError(f"morton shift {shift} exceeds 32")
        codes = enc.decode_int_stream(
            buffer_stream.payload[pos:],
            buffer_stream.header.logical,
            buffer_stream.header.physical,
            buffer_stream.header.value_count,
        )
        if any(b <= a for a, b in zip(codes, codes[1:])):
            raise CorruptStreamError("morton codes are not strictly increasing")
        if codes and codes[-1] >= 1 << (2 * shift):
            raise CorruptStreamError("morton code outside the declared grid")
        vertex_buffer = VertexDictionary(tuple(codes), bias, shift)
    else:
        offsets = None
        if buffer_stream.header.value_count % dimensions:
            raise CorruptStreamError(
                f"vertex buffer holds {buffer_stream.header.value_count} components in {dimensions}D"
            )
        # The wire tag is zigzag+delta, but the delta runs per component lane.
        deltas = enc.decode_int_stream(
            buffer_stream.payload,
            LogicalEncoding.ZIGZAG,
            buffer_stream.header.physical,
            buffer_stream.header.value_count,
        )
        vertex_buffer = VertexBufferPlain(tuple(_undelta_components(deltas, dimensions)))

    topology = TopologySet(
        dimensions=dimensions,
        type_stream=kinds,
        geometries=geometries,
        rings=rings,
        vertices=vertices,
        vertex_buffer=vertex_buffer,
        vertex_offsets=offsets,
    )

    index_buffer = None
    triangles = None
    index_stream = by_pos.get(StreamKind.INDEX_BUFFER)
    if index_stream is not None:
        index_buffer = _decode_int_stream(index_stream)
        limit = topology.vertex_ref_count()
        for i in index_buffer:
            if i >= limit:
                raise CorruptStreamError(f"triangle index {i} outside vertex buffer of {limit}")
        if len(index_buffer) % 3:
            raise CorruptStreamError("index buffer length is not a multiple of 3")
        tri_stream = by_pos.get(StreamKind.TRIANGLES)
        if tri_stream is not None:
            triangles = _decode_int_stream(tri_stream)
            if sum(triangles) * 3 != len(index_buffer):
                raise CorruptStreamError("triangle counts do not cover the index buffer")
    return topology, index_buffer, triangles


_GEOM_CODE = {int(g): g for g in GeometryType}


# -- decoded envelope structures --------------------------------------------------


@dataclass
class TableBlock:
    name: str
    extent: int
    dimensions: int
    feature_count: int
    columns: list[Column]
    id_streams: list[Stream]
    geometry_streams: list[Stream]
    attribute_streams: list[list[Stream]]


@dataclass
class ParsedTile:
    profile: EncodingProfile
    tables: list[TableBlock]


def _encode_descriptor(column: Column, out: bytearray) -> None:
    _put_name(column.name, out)
    ctype = column.type
    if isinstance(ctype, ScalarType):
        out.append(_SCALAR_TAG[ctype])
    elif isinstance(ctype, ListType):
        out.append(_LIST_FLAG | _SCALAR_TAG[ctype.element])
    else:
        out.append(_STRUCT_TAG)
        varint_put(len(ctype.fields), out)
        for name, stype in ctype.fields:
            _put_name(name, out)
            out.append(_SCALAR_TAG[stype])
    flags = (1 if column.nullable else 0) | (2 if column.scope == AttributeScope.VERTEX else 0)
    out.append(flags)


def _decode_descriptor(data, pos: int) -> tuple[Column, int]:
    name, pos = _get_name(data, pos)
    if pos >= len(data):
        raise EnvelopeError("column descriptor truncated", pos)
    tag = data[pos]
    pos += 1
    ctype: object
    if tag == _STRUCT_TAG:
        count, pos = varint_get(data, pos)
        fields = []
        for _ in range(count):
            fname, pos = _get_name(data, pos)
            if pos >= len(data):
                raise EnvelopeError("struct field truncated", pos)
            ftag = data[pos]
            pos += 1
            if ftag not in _TAG_SCALAR:
                raise EnvelopeError(f"unknown scalar tag {ftag}", pos - 1)
            fields.append((fname, _TAG_SCALAR[ftag]))
        ctype = StructType(tuple(fields))
    elif tag & _LIST_FLAG:
        base = tag & ~_LIST_FLAG
        if base not in _TAG_SCALAR:
            raise EnvelopeError(f"unknown scalar tag {base}", pos - 1)
        ctype = ListType(_TAG_SCALAR[base])
    else:
        if tag not in _TAG_SCALAR:
            raise EnvelopeError(f"unknown type tag {tag}", pos - 1)
        ctype = _TAG_SCALAR[tag]
    if pos >= len(data):
        raise EnvelopeError("column flags truncated", pos)
    flags = data[pos]
    pos += 1
    return (
        Column(
            name,
            ctype,
            nullable=bool(flags & 1),
            scope=AttributeScope.VERTEX if flags & 2 else AttributeScope.FEATURE,
        ),
        pos,
    )


def _write_stream_group(streams, out: bytearray) -> None:
    varint_put(len(streams), out)
    for s in streams:
        _write_stream(out, s.header.kind, s.header.logical, s.header.physical, s.header.value_count, s.payload)


def _read_stream_group(data, pos: int) -> tuple[list[Stream], int]:
    count, pos = varint_get(data, pos)
    if count > len(data) - pos:
        raise EnvelopeError(f"stream group claims {count} streams", pos)
    streams = []
    for _ in range(count):
        stream, pos = _read_stream(data, pos)
        streams.append(stream)
    return streams, pos


# -- tile encode / decode ----------------------------------------------------------


def encode_tile(
    tile: Tile,
    profile: EncodingProfile = EncodingProfile.SIMPLE,
    tessellate: bool = False,
) -> bytes:
    """Serialize a tile; deterministic for identical inputs.

    Tables failing validation are rejected with their diagnostics.  The tile
    coordinate is addressing, not content: it lives in the file path, never
    in the bytes.
    """
    diagnostics = [d for table in tile.tables for d in validate_table(table)]
    if diagnostics:
        raise ValidationError(diagnostics)
    out = bytearray(MAGIC)
    out.append(VERSION)
    out.append(int(profile))
    varint_put(len(tile.tables), out)
    for table in tile.tables:
        _put_name(table.name, out)
        varint_put(table.extent, out)
        out.append(table.dimensions)
        varint_put(table.row_count, out)
        varint_put(len(table.columns), out)
        for column in table.columns:
            _encode_descriptor(column, out)
        if table.row_count:
            _write_stream_group([_id_stream(table.ids, profile)], out)
            _write_stream_group(_encode_geometry_column(table, profile, tessellate), out)
        else:
            _write_stream_group([], out)
            _write_stream_group([], out)
        vertex_count = table.total_vertex_count()
        for column in table.columns:
            values = table.values[column.name]
            expected = vertex_count if column.scope == AttributeScope.VERTEX else table.row_count
            if len(values) != expected:
                raise ValidationError(
                    [f"column {column.name!r}: {len(values)} values for {expected} slots"]
                )
            _write_stream_group(encode_column(values, column, profile), out)
    return bytes(out)


def read_envelope(data, max_profile: EncodingProfile | None = None) -> ParsedTile:
    """Parse framing and stream payload boundaries without decoding values."""
    if len(data) < 7:
        raise EnvelopeError("tile shorter than the fixed envelope", len(data))
    if bytes(data[:4]) != MAGIC:
        raise EnvelopeError(f"bad magic {bytes(data[:4])!r}", 0)
    if data[4] != VERSION:
        raise EnvelopeError(f"unsupported version {data[4]}", 4)
    try:
        profile = EncodingProfile(data[5])
    except ValueError:
        raise EnvelopeError(f"unknown profile {data[5]}", 5) from None
    if max_profile is not None and profile > max_profile:
        raise UnsupportedProfileError(
            f"tile uses the {profile.name.lower()} profile, decoder allows {max_profile.name.lower()}", 5
        )
    table_count, pos = varint_get(data, 6)
    if table_count > len(data):
        raise EnvelopeError(f"table count {table_count} exceeds input size", 6)
    tables = []
    for _ in range(table_count):
        name, pos = _get_name(data, pos)
        extent, pos = varint_get(data, pos)
        if pos >= len(data):
            raise EnvelopeError("table header truncated", pos)
        dimensions = data[pos]
        pos += 1
        if dimensions not in (2, 3):
            raise EnvelopeError(f"dimensions {dimensions} not 2 or 3", pos - 1)
        feature_count, pos = varint_get(data, pos)
        column_count, pos = varint_get(data, pos)
        if column_count > len(data) - pos:
            raise EnvelopeError(f"column count {column_count} exceeds input size", pos)
        columns = []
        for _ in range(column_count):
            column, pos = _decode_descriptor(data, pos)
            columns.append(column)
        id_streams, pos = _read_stream_group(data, pos)
        geometry_streams, pos = _read_stream_group(data, pos)
        attribute_streams = []
        for _ in range(column_count):
            streams, pos = _read_stream_group(data, pos)
            attribute_streams.append(streams)
        tables.append(
            TableBlock(
                name, extent, dimensions, feature_count, columns, id_streams, geometry_streams, attribute_streams
            )
        )
    if pos != len(data):
        raise EnvelopeError(f"{len(data) - pos} trailing bytes after the last table", pos)
    return ParsedTile(profile, tables)


def decode_table_block(block: TableBlock) -> FeatureTable:
    if block.feature_count == 0:
        ids: tuple = ()
        geometries: tuple = ()
    else:
        if len(block.id_streams) != 1:
            raise CorruptStreamError(f"id column has {len(block.id_streams)} streams")
        ids = tuple(_decode_int_stream(block.id_streams[0]))
        if len(ids) != block.feature_count:
            raise CorruptStreamError(f"{len(ids)} ids for {block.feature_count} features")
        topology, _, _ = _decode_geometry_column(
            block.geometry_streams, block.dimensions, block.feature_count
        )
        geometries = rebuild_geometries(topology)
    table = FeatureTable(
        name=block.name,
        ids=ids,
        geometries=geometries,
        columns=tuple(block.columns),
        values={},
        extent=block.extent,
        dimensions=block.dimensions,
    )
    vertex_count = table.total_vertex_count()
    values = {}
    for column, streams in zip(block.columns, block.attribute_streams):
        rows = vertex_count if column.scope == AttributeScope.VERTEX else block.feature_count
        if rows == 0 and not streams:
            values[column.name] = ()
            continue
        values[column.name] = tuple(decode_column(streams, column, rows))
    return FeatureTable(
        name=block.name,
        ids=ids,
        geometries=geometries,
        columns=tuple(block.columns),
        values=values,
        extent=block.extent,
        dimensions=block.dimensions,
    )


def decode_tile(
    data,
    coord: TileCoord = TileCoord(0, 0, 0),
    max_profile: EncodingProfile | None = None,
) -> Tile:
    """Exact inverse of encode_tile.  The coordinate comes from addressing
    (the z/x/y path), so callers pass it in."""
    parsed = read_envelope(data, max_profile)
    return Tile(coord, tuple(decode_table_block(block) for block in parsed.tables))
