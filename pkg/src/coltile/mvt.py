"""Mapbox Vector Tile baseline codec: protobuf wire format reader/writer
and conversion to and from the logical tile model.

Wire layout (MVT 2.1): tile { repeated layer = 3 }; layer { version = 15,
name = 1, repeated feature = 2, repeated keys = 3, repeated values = 4,
extent = 5 }; feature { id = 1, packed tags = 2, type = 3, packed
geometry = 4 }.  Geometry commands are (id & 0x7) | (count << 3) with
MoveTo=1, LineTo=2, ClosePath=7 and zigzag-encoded cursor deltas.

Documented conversion lossiness: 32-bit integer columns widen to 64-bit;
lists and structs flatten to dotted keys on write and are not rebuilt on
parse; single-element multi geometries come back as their singular type;
column nullability is re-inferred from the data.
"""

from __future__ import annotations

import struct

from .encodings import unzigzag, varint_put, zigzag
from .model import (
    AttributeScope,
    Column,
    FeatureTable,
    Geometry,
    GeometryType,
    ListType,
    ScalarType,
    StructType,
    Tile,
    TileCoord,
    ring_twice_area,
    validate_table,
)

CMD_MOVE_TO = 1
CMD_LINE_TO = 2
CMD_CLOSE_PATH = 7

_WIRE_VARINT = 0
_WIRE_I64 = 1
_WIRE_LEN = 2
_WIRE_I32 = 5


class MvtParseError(ValueError):
    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class MvtWriteError(ValueError):
    pass


# -- wire primitives ---------------------------------------------------------------


def _read_varint(data, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    size = len(data)
    while True:
        if pos >= size:
            raise MvtParseError("varint truncated", pos)
        b = data[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise MvtParseError("varint longer than 10 bytes", pos)


def _read_tag(data, pos: int) -> tuple[int, int, int]:
    key, pos = _read_varint(data, pos)
    return key >> 3, key & 0x7, pos


def _skip_field(data, pos: int, wire: int) -> int:
    if wire == _WIRE_VARINT:
        _, pos = _read_varint(data, pos)
        return pos
    if wire == _WIRE_I64:
        return _checked(pos + 8, data, pos)
    if wire == _WIRE_LEN:
        size, pos = _read_varint(data, pos)
        return _checked(pos + size, data, pos)
    if wire == _WIRE_I32:
        return _checked(pos + 4, data, pos)
    raise MvtParseError(f"unsupported wire type {wire}", pos)


def _checked(end: int, data, pos: int) -> int:
    if end > len(data):
        raise MvtParseError("field runs past end of data", pos)
    return end


def _read_len(data, pos: int) -> tuple[int, int, int]:
    size, pos = _read_varint(data, pos)
    end = _checked(pos + size, data, pos)
    return pos, end, end


def _tag(field: int, wire: int, out: bytearray) -> None:
    varint_put((field << 3) | wire, out)


def _put_len(field: int, payload: bytes, out: bytearray) -> None:
    _tag(field, _WIRE_LEN, out)
    varint_put(len(payload), out)
    out += payload


def _put_varint_field(field: int, value: int, out: bytearray) -> None:
    _tag(field, _WIRE_VARINT, out)
    varint_put(value, out)


def _put_packed(field: int, values, out: bytearray) -> None:
    payload = bytearray()
    for v in values:
        varint_put(v, payload)
    _put_len(field, bytes(payload), out)


# -- typed property values -----------------------------------------------------------


def _encode_value(value) -> bytes:
    out = bytearray()
    if isinstance(value, bool):
        _put_varint_field(7, 1 if value else 0, out)
    elif isinstance(value, str):
        _put_len(1, value.encode("utf-8"), out)
    elif isinstance(value, int):
        if value < 0:
            _put_varint_field(6, zigzag(value), out)  # sint_value
        else:
            _put_varint_field(5, value, out)  # uint_value
    elif isinstance(value, float):
        _tag(3, _WIRE_I64, out)
        out += struct.pack("<d", value)
    else:
        raise MvtWriteError(f"value {value!r} is not MVT-expressible")
    return bytes(out)


def _encode_typed_value(value, stype: ScalarType) -> bytes:
    out = bytearray()
    if stype == ScalarType.BOOLEAN:
        _put_varint_field(7, 1 if value else 0, out)
    elif stype == ScalarType.STRING:
        _put_len(1, value.encode("utf-8"), out)
    elif stype == ScalarType.FLOAT32:
        _tag(2, _WIRE_I32, out)
        out += struct.pack("<f", value)
    elif stype == ScalarType.FLOAT64:
        _tag(3, _WIRE_I64, out)
        out += struct.pack("<d", value)
    elif stype in (ScalarType.UINT32, ScalarType.UINT64):
        _put_varint_field(5, value, out)
    else:
        if value < 0:
            _put_varint_field(6, zigzag(value), out)
        else:
            _put_varint_field(4, value, out)  # int_value
    return bytes(out)


def _decode_value(data) -> tuple[ScalarType, object]:
    pos = 0
    result = None
    while pos < len(data):
        field, wire, pos = _read_tag(data, pos)
        if field == 1 and wire == _WIRE_LEN:
            start, end, pos = _read_len(data, pos)
            try:
                result = (ScalarType.STRING, bytes(data[start:end]).decode("utf-8"))
            except UnicodeDecodeError as e:
                raise MvtParseError(f"string value is not UTF-8: {e}", start) from None
        elif field == 2 and wire == _WIRE_I32:
            end = _checked(pos + 4, data, pos)
            result = (ScalarType.FLOAT32, struct.unpack("<f", data[pos:end])[0])
            pos = end
        elif field == 3 and wire == _WIRE_I64:
            end = _checked(pos + 8, data, pos)
            result = (ScalarType.FLOAT64, struct.unpack("<d", data[pos:end])[0])
            pos = end
        elif field == 4 and wire == _WIRE_VARINT:
            raw, pos = _read_varint(data, pos)
            value = raw - (1 << 64) if raw >= 1 << 63 else raw  # two's complement int64
            result = (ScalarType.INT64, value)
        elif field == 5 and wire == _WIRE_VARINT:
            raw, pos = _read_varint(data, pos)
            result = (ScalarType.UINT64, raw)
        elif field == 6 and wire == _WIRE_VARINT:
            raw, pos = _read_varint(data, pos)
            result = (ScalarType.INT64, unzigzag(raw))
        elif field == 7 and wire == _WIRE_VARINT:
            raw, pos = _read_varint(data, pos)
            result = (ScalarType.BOOLEAN, bool(raw))
        else:
            pos = _skip_field(data, pos, wire)
    if result is None:
        raise MvtParseError("value message without a recognized variant")
    return result


# -- geometry command streams ---------------------------------------------------------


def _reverse_ring(ring: tuple) -> tuple:
    return (ring[0],) + tuple(reversed(ring[1:]))


def _encode_geometry(geom: Geometry) -> tuple[int, list[int]]:
    cursor_x = 0
    cursor_y = 0
    stream: list[int] = []

    def move_to(points):
        nonlocal cursor_x, cursor_y
        stream.append(CMD_MOVE_TO | (len(points) << 3))
        for x, y in points:
            stream.append(zigzag(x - cursor_x))
            stream.append(zigzag(y - cursor_y))
            cursor_x, cursor_y = x, y

    def line_to(points):
        nonlocal cursor_x, cursor_y
        stream.append(CMD_LINE_TO | (len(points) << 3))
        for x, y in points:
            stream.append(zigzag(x - cursor_x))
            stream.append(zigzag(y - cursor_y))
            cursor_x, cursor_y = x, y

    kind = geom.kind
    if kind == GeometryType.POINT:
        move_to([geom.parts])
        return 1, stream
    if kind == GeometryType.MULTIPOINT:
        move_to(list(geom.parts))
        return 1, stream
    if kind in (GeometryType.LINESTRING, GeometryType.MULTILINESTRING):
        lines = (geom.parts,) if kind == GeometryType.LINESTRING else geom.parts
        for line in lines:
            move_to([line[0]])
            line_to(list(line[1:]))
        return 2, stream
    polygons = (geom.parts,) if kind == GeometryType.POLYGON else geom.parts
    for rings in polygons:
        # Model orientation and MVT winding are mirrored; every ring flips.
        for ring in rings:
            flipped = _reverse_ring(ring)
            move_to([flipped[0]])
            line_to(list(flipped[1:]))
            stream.append(CMD_CLOSE_PATH | (1 << 3))
    return 3, stream


def _decode_geometry(type_code: int, stream, offset_hint: int) -> Geometry:
    pos = 0
    cursor_x = 0
    cursor_y = 0
    parts: list[list[tuple]] = []
    current: list[tuple] = []
    closed: list[bool] = []

    size = len(stream)
    while pos < size:
        command = stream[pos]
        pos += 1
        cmd = command & 0x7
        count = command >> 3
        if cmd in (CMD_MOVE_TO, CMD_LINE_TO):
            if cmd == CMD_MOVE_TO and current:
                parts.append(current)
                closed.append(False)
                current = []
            if pos + 2 * count > size:
                raise MvtParseError("geometry parameters truncated", offset_hint)
            for _ in range(count):
                cursor_x += unzigzag(stream[pos])
                cursor_y += unzigzag(stream[pos + 1])
                pos += 2
                current.append((cursor_x, cursor_y))
        elif cmd == CMD_CLOSE_PATH:
            if count != 1:
                raise MvtParseError(f"ClosePath with count {count}", offset_hint)
            if not current:
                raise MvtParseError("ClosePath without an open ring", offset_hint)
            parts.append(current)
            closed.append(True)
            current = []
        else:
            raise MvtParseError(f"unknown geometry command {cmd}", offset_hint)
    if current:
        parts.append(current)
        closed.append(False)

    if type_code == 1:
        points = [p for run in parts for p in run]
        if not points:
            raise MvtParseError("point feature without coordinates", offset_hint)
        if len(points) == 1:
            return Geometry.point(points[0])
        return Geometry.multi_point(points)
    if type_code == 2:
        lines = [run for run in parts if len(run) >= 2]
        if not lines:
            raise MvtParseError("line feature without segments", offset_hint)
        if len(lines) == 1:
            return Geometry.line_string(lines[0])
        return Geometry.multi_line_string(lines)
    if type_code == 3:
        rings = []
        for run, was_closed in zip(parts, closed):
            if not was_closed:
                raise MvtParseError("polygon ring without ClosePath", offset_hint)
            if run and run[0] == run[-1]:
                run = run[:-1]
            if len(run) >= 3:
                rings.append(run)
        if not rings:
            raise MvtParseError("polygon feature without valid rings", offset_hint)
        # First ring leads; same-sign rings open new polygons, others are holes.
        lead_sign = ring_twice_area(rings[0]) < 0
        polygons: list[list[tuple]] = []
        for ring in rings:
            is_outer = (ring_twice_area(ring) < 0) == lead_sign
            model_ring = _reverse_ring(tuple(ring))
            # Repair to model orientation: exterior positive, holes negative.
            area = ring_twice_area(model_ring)
            if is_outer:
                if area < 0:
                    model_ring = _reverse_ring(model_ring)
                polygons.append([model_ring])
            else:
                if area > 0:
                    model_ring = _reverse_ring(model_ring)
                if not polygons:
                    raise MvtParseError("hole ring before any exterior ring", offset_hint)
                polygons[-1].append(model_ring)
        if len(polygons) == 1:
            return Geometry.polygon(polygons[0])
        return Geometry.multi_polygon(polygons)
    raise MvtParseError(f"unknown geometry type {type_code}", offset_hint)


# -- layer <-> feature table -----------------------------------------------------------


def _flatten_value(column: Column, value):
    """Yield (key, scalar, declared type) pairs for one attribute value."""
    if value is None:
        return
    ctype = column.type
    if isinstance(ctype, ScalarType):
        yield column.name, value, ctype
    elif isinstance(ctype, ListType):
        for i, item in enumerate(value):
            yield f"{column.name}.{i}", item, ctype.element
    else:
        for fname, ftype in ctype.fields:
            yield f"{column.name}.{fname}", value[fname], ftype


def _write_layer(table: FeatureTable, out: bytearray) -> None:
    if table.dimensions != 2:
        raise MvtWriteError(f"table {table.name!r} is 3D; MVT is strictly 2D")
    for column in table.columns:
        if column.scope == AttributeScope.VERTEX:
            raise MvtWriteError(f"column {column.name!r} is vertex-scoped; MVT has no equivalent")

    keys: list[str] = []
    key_ids: dict[str, int] = {}
    values: list[bytes] = []
    value_ids: dict[bytes, int] = {}
    features = bytearray()

    for row in range(table.row_count):
        tags: list[int] = []
        for column in table.columns:
            for key, scalar, stype in _flatten_value(column, table.values[column.name][row]):
                if key not in key_ids:
                    key_ids[key] = len(keys)
                    keys.append(key)
                encoded = _encode_typed_value(scalar, stype)
                if encoded not in value_ids:
                    value_ids[encoded] = len(values)
                    values.append(encoded)
                tags.append(key_ids[key])
                tags.append(value_ids[encoded])
        type_code, stream = _encode_geometry(table.geometries[row])
        feature = bytearray()
        _put_varint_field(1, table.ids[row], feature)
        if tags:
            _put_packed(2, tags, feature)
        _put_varint_field(3, type_code, feature)
        _put_packed(4, stream, feature)
        _put_len(2, bytes(feature), features)

    layer = bytearray()
    _put_len(1, table.name.encode("utf-8"), layer)
    layer += features
    for key in keys:
        _put_len(3, key.encode("utf-8"), layer)
    for value in values:
        _put_len(4, value, layer)
    _put_varint_field(5, table.extent, layer)
    _put_varint_field(15, 2, layer)
    _put_len(3, bytes(layer), out)


def mvt_write(tile: Tile) -> bytes:
    """Serialize the 2D scalar-attribute subset of a tile as MVT bytes."""
    diagnostics = [d for table in tile.tables for d in validate_table(table)]
    if diagnostics:
        raise MvtWriteError(f"tile failed validation: {diagnostics[:5]}")
    out = bytearray()
    for table in tile.tables:
        _write_layer(table, out)
    return bytes(out)


def _parse_feature(data, start: int):
    pos = start
    fid = None
    tags: list[int] = []
    type_code = 0
    stream: list[int] = []
    while pos < len(data):
        field, wire, pos = _read_tag(data, pos)
        if field == 1 and wire == _WIRE_VARINT:
            fid, pos = _read_varint(data, pos)
        elif field == 2 and wire == _WIRE_LEN:
            p, end, pos = _read_len(data, pos)
            while p < end:
                v, p = _read_varint(data, p)
                tags.append(v)
        elif field == 3 and wire == _WIRE_VARINT:
            type_code, pos = _read_varint(data, pos)
        elif field == 4 and wire == _WIRE_LEN:
            p, end, pos = _read_len(data, pos)
            while p < end:
                v, p = _read_varint(data, p)
                stream.append(v)
        else:
            pos = _skip_field(data, pos, wire)
    return fid, tags, type_code, stream


def _parse_layer(data, start: int, offset_hint: int) -> FeatureTable:
    pos = start
    name = ""
    extent = 4096
    version = None
    keys: list[str] = []
    raw_values: list = []
    raw_features: list[tuple[int, bytes]] = []
    while pos < len(data):
        field, wire, pos = _read_tag(data, pos)
        if field == 15 and wire == _WIRE_VARINT:
            version, pos = _read_varint(data, pos)
        elif field == 1 and wire == _WIRE_LEN:
            p, end, pos = _read_len(data, pos)
            name = bytes(data[p:end]).decode("utf-8", errors="replace")
        elif field == 2 and wire == _WIRE_LEN:
            p, end, pos = _read_len(data, pos)
            raw_features.append((p, bytes(data[p:end])))
        elif field == 3 and wire == _WIRE_LEN:
            p, end, pos = _read_len(data, pos)
            keys.append(bytes(data[p:end]).decode("utf-8", errors="replace"))
        elif field == 4 and wire == _WIRE_LEN:
            p, end, pos = _read_len(data, pos)
            raw_values.append(_decode_value(data[p:end]))
        elif field == 5 and wire == _WIRE_VARINT:
            extent, pos = _read_varint(data, pos)
        else:
            pos = _skip_field(data, pos, wire)
    if version != 2:
        raise MvtParseError(f"layer {name!r} has version {version}, need 2", offset_hint)

    ids: list[int] = []
    geometries: list[Geometry] = []
    rows: list[dict] = []
    synthetic = False
    next_id = 1
    seen_ids: set[int] = set()
    for feature_offset, payload in raw_features:
        fid, tags, type_code, stream = _parse_feature(payload, 0)
        if fid is None:
            fid = next_id
            synthetic = True
        while fid in seen_ids:
            fid += 1
            synthetic = True
        seen_ids.add(fid)
        next_id = max(next_id, fid + 1)
        if len(tags) % 2:
            raise MvtParseError("odd tag count", feature_offset)
        props = {}
        for i in range(0, len(tags), 2):
            ki, vi = tags[i], tags[i + 1]
            if ki >= len(keys) or vi >= len(raw_values):
                raise MvtParseError(f"tag ({ki},{vi}) outside key/value tables", feature_offset)
            props[keys[ki]] = raw_values[vi]
        geometries.append(_decode_geometry(type_code, stream, feature_offset))
        ids.append(fid)
        rows.append(props)

    # Column per key in layer key-table order; type from the first occurrence.
    column_types: dict[str, ScalarType] = {}
    for props in rows:
        for key, (stype, _) in props.items():
            column_types.setdefault(key, stype)
    columns = []
    values: dict[str, tuple] = {}
    for key in keys:
        if key not in column_types:
            continue  # declared but never used
        stype = column_types[key]
        column_values = []
        nulls = False
        for props in rows:
            entry = props.get(key)
            if entry is None or entry[0] != stype:
                column_values.append(None)
                nulls = True
            else:
                column_values.append(entry[1])
        columns.append(Column(key, stype, nullable=nulls))
        values[key] = tuple(column_values)
    return FeatureTable(
        name=name,
        ids=tuple(ids),
        geometries=tuple(geometries),
        columns=tuple(columns),
        values=values,
        extent=extent,
        dimensions=2,
        id_synthetic=synthetic,
    )


def mvt_parse(data, coord: TileCoord = TileCoord(0, 0, 0)) -> Tile:
    """Parse MVT bytes into the logical model.

    Ring orientation is repaired to the model convention; features without
    ids get sequential synthetic ids (flagged on the table).  The tile
    coordinate comes from addressing, not the bytes.
    """
    pos = 0
    tables = []
    names: set[str] = set()
    while pos < len(data):
        field, wire, pos = _read_tag(data, pos)
        if field == 3 and wire == _WIRE_LEN:
            start, end, pos = _read_len(data, pos)
            table = _parse_layer(data[start:end], 0, start)
            if table.name in names:
                raise MvtParseError(f"duplicate layer name {table.name!r}", start)
            names.add(table.name)
            tables.append(table)
        else:
            pos = _skip_field(data, pos, wire)
    return Tile(coord, tuple(tables))
