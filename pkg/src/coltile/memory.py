"""In-memory vector format: aligned fixed-size buffers, placeholder null
layout, offset-based variable-size access, transparent compressed vectors,
and selection vectors.

Buffers are allocated over-sized and sliced so that every value buffer
starts on at least an 8-byte boundary (16 for 3D vertex records) and has a
power-of-2 capacity below 4096 bytes, 4096-byte multiples above.
"""

from __future__ import annotations

import ctypes
import struct
from bisect import bisect_right
from dataclasses import dataclass

from . import encodings as enc
from .encodings import CorruptStreamError, LogicalEncoding
from .geometry import VertexDictionary, morton_decode
from .model import AttributeScope, Column, ListType, ScalarType
from .storage import Stream, StreamKind, TableBlock, read_envelope

SelectionVector = list  # sorted, unique row indices


def _capacity_for(size: int) -> int:
    if size <= 8:
        return 8
    if size < 4096:
        return 1 << (size - 1).bit_length()
    return -(-size // 4096) * 4096


class AlignedBuffer:
    """A contiguous byte buffer with a guaranteed start-address alignment."""

    __slots__ = ("_raw", "mv", "address", "capacity", "size")

    def __init__(self, payload: bytes, align: int = 64):
        size = len(payload)
        capacity = _capacity_for(size)
        raw = bytearray(capacity + align)
        base = ctypes.addressof(ctypes.c_char.from_buffer(raw))
        offset = (-base) % align
        mv = memoryview(raw)[offset : offset + capacity]
        mv[:size] = payload
        self._raw = raw
        self.mv = mv
        self.address = base + offset
        self.capacity = capacity
        self.size = size

    @property
    def alignment(self) -> int:
        # largest power of 2 dividing the start address
        return self.address & -self.address


class Bitset:
    """Validity bits in an aligned buffer, LSB-first."""

    __slots__ = ("buffer", "length", "_flags")

    def __init__(self, flags):
        self.buffer = AlignedBuffer(enc.bitset_encode(flags))
        self.length = len(flags)
        self._flags = tuple(flags)

    def __getitem__(self, i: int) -> bool:
        return self._flags[i]

    @property
    def flags(self) -> tuple:
        return self._flags


_FORMAT_WIDTH = {"b": 1, "B": 1, "i": 4, "I": 4, "q": 8, "Q": 8, "f": 4, "d": 8}


class FlatVector:
    """Fixed-width values in one aligned buffer with optional validity."""

    kind = "flat"

    def __init__(self, fmt: str, values, validity=None, align: int = 64):
        self.fmt = fmt
        self.width = _FORMAT_WIDTH[fmt]
        self.length = len(values)
        self.buffer = AlignedBuffer(struct.pack(f"<{self.length}{fmt}", *values), align)
        self.values = self.buffer.mv[: self.length * self.width].cast(fmt) if self.length else ()
        self.validity = Bitset(validity) if validity is not None else None

    def is_valid(self, i: int) -> bool:
        return self.validity is None or self.validity[i]

    def value(self, i: int):
        if self.validity is not None and not self.validity[i]:
            return None
        return self.values[i]

    def buffers(self):
        yield self.buffer
        if self.validity is not None:
            yield self.validity.buffer


class OffsetVector:
    """Variable-size values: length+1 offsets over one data buffer."""

    kind = "offset"

    def __init__(self, items: list[bytes], validity=None):
        self.length = len(items)
        offsets = [0]
        for item in items:
            offsets.append(offsets[-1] + len(item))
        data = b"".join(items)
        self.offset_buffer = AlignedBuffer(struct.pack(f"<{len(offsets)}I", *offsets))
        self.offsets = self.offset_buffer.mv[: 4 * len(offsets)].cast("I")
        self.data_buffer = AlignedBuffer(data)
        self.data = self.data_buffer.mv[: len(data)]
        self.validity = Bitset(validity) if validity is not None else None

    def is_valid(self, i: int) -> bool:
        return self.validity is None or self.validity[i]

    def raw(self, i: int) -> bytes:
        return bytes(self.data[self.offsets[i] : self.offsets[i + 1]])

    def value(self, i: int):
        if self.validity is not None and not self.validity[i]:
            return None
        return self.raw(i).decode("utf-8")

    def buffers(self):
        yield self.offset_buffer
        yield self.data_buffer
        if self.validity is not None:
            yield self.validity.buffer


class DictionaryVector:
    """Dictionary indices plus unique entries; lookups stay lazy.

    ``lookups`` counts dictionary materializations so tests can assert that
    index-rewritten filters never touch the dictionary.
    """

    kind = "dictionary"

    def __init__(self, indices: FlatVector, dictionary: OffsetVector):
        self.indices = indices
        self.dictionary = dictionary
        self.length = indices.length
        self.validity = indices.validity
        self.lookups = 0

    def is_valid(self, i: int) -> bool:
        return self.indices.is_valid(i)

    def index_of(self, text: str):
        """Dictionary id of ``text``, or None; used at plan-compile time."""
        needle = text.encode("utf-8")
        for i in range(self.dictionary.length):
            if self.dictionary.raw(i) == needle:
                return i
        return None

    def value(self, i: int):
        if self.validity is not None and not self.validity[i]:
            return None
        self.lookups += 1
        return self.dictionary.value(self.indices.values[i])

    def buffers(self):
        yield from self.indices.buffers()
        yield from self.dictionary.buffers()


class RunVector:
    """Arithmetic-progression runs: transparent form of delta-RLE id columns.

    Random access resolves the covering run by binary search, O(log runs).
    """

    kind = "runs"

    def __init__(self, run_ends: list[int], start_values: list[int], steps: list[int]):
        self.run_ends = run_ends
        self.start_values = start_values
        self.steps = steps
        self.length = run_ends[-1] if run_ends else 0
        self.validity = None

    @staticmethod
    def from_delta_rle(deltas: list[int], runs: list[int]) -> "RunVector":
        # Row r of run k holds base_k + (r+1) * delta_k, where base_k is the
        # prefix sum of all earlier runs (the first delta is the first id).
        ends: list[int] = []
        starts: list[int] = []
        steps: list[int] = []
        total = 0
        base = 0
        for step, count in zip(deltas, runs):
            starts.append(base + step)
            steps.append(step)
            base += step * count
            total += count
            ends.append(total)
        return RunVector(ends, starts, steps)

    def is_valid(self, i: int) -> bool:
        return True

    def value(self, i: int) -> int:
        run = bisect_right(self.run_ends, i)
        base = self.run_ends[run - 1] if run else 0
        return self.start_values[run] + (i - base) * self.steps[run]

    def buffers(self):
        return iter(())


class ListVector:
    """Offsets into a child vector of flattened elements."""

    kind = "list"

    def __init__(self, offsets: list[int], child, validity=None):
        self.offset_buffer = AlignedBuffer(struct.pack(f"<{len(offsets)}I", *offsets))
        self.offsets = self.offset_buffer.mv[: 4 * len(offsets)].cast("I")
        self.child = child
        self.length = len(offsets) - 1
        self.validity = Bitset(validity) if validity is not None else None

    def is_valid(self, i: int) -> bool:
        return self.validity is None or self.validity[i]

    def value(self, i: int):
        if self.validity is not None and not self.validity[i]:
            return None
        return tuple(self.child.value(j) for j in range(self.offsets[i], self.offsets[i + 1]))

    def buffers(self):
        yield self.offset_buffer
        yield from self.child.buffers()
        if self.validity is not None:
            yield self.validity.buffer


class StructVector:
    kind = "struct"

    def __init__(self, fields: dict, length: int, validity=None):
        self.fields = fields
        self.length = length
        self.validity = Bitset(validity) if validity is not None else None

    def is_valid(self, i: int) -> bool:
        return self.validity is None or self.validity[i]

    def value(self, i: int):
        if self.validity is not None and not self.validity[i]:
            return None
        return {name: vec.value(i) for name, vec in self.fields.items()}

    def buffers(self):
        for vec in self.fields.values():
            yield from vec.buffers()
        if self.validity is not None:
            yield self.validity.buffer


_SCALAR_FMT = {
    ScalarType.BOOLEAN: "B",
    ScalarType.INT32: "i",
    ScalarType.UINT32: "I",
    ScalarType.INT64: "q",
    ScalarType.UINT64: "Q",
    ScalarType.FLOAT32: "f",
    ScalarType.FLOAT64: "d",
}


def _expand(dense, flags, zero):
    """Placeholder layout: null slots hold the type's zero value."""
    it = iter(dense)
    return [next(it) if f else zero for f in flags]


def _decode_stream_ints(stream: Stream) -> list[int]:
    return enc.decode_int_stream(
        stream.payload, stream.header.logical, stream.header.physical, stream.header.value_count
    )


def _scalar_vector(streams, pos, stype: ScalarType, count, flags):
    """Build the vector for one scalar stream set; returns (vector, next pos)."""
    if stype == ScalarType.STRING:
        if pos < len(streams) and streams[pos].kind == StreamKind.OFFSET:
            indices = _decode_stream_ints(streams[pos])
            if len(indices) != count:
                raise CorruptStreamError(f"{len(indices)} dictionary offsets for {count} values")
            pos += 1
            lengths = _decode_stream_ints(streams[pos])
            data = streams[pos + 1].payload
            pos += 2
            if sum(lengths) != len(data):
                raise CorruptStreamError("string lengths do not cover the data stream")
            entries = []
            offset = 0
            for n in lengths:
                entries.append(bytes(data[offset : offset + n]))
                offset += n
            for i in indices:
                if i >= len(entries):
                    raise CorruptStreamError(f"dictionary index {i} out of range {len(entries)}")
            dictionary = OffsetVector(entries)
            if flags is not None:
                indices = _expand(indices, flags, 0)
            index_vector = FlatVector("I", indices, flags)
            return DictionaryVector(index_vector, dictionary), pos
        lengths = _decode_stream_ints(streams[pos])
        if len(lengths) != count:
            raise CorruptStreamError(f"{len(lengths)} string lengths for {count} values")
        data = streams[pos + 1].payload
        pos += 2
        if sum(lengths) != len(data):
            raise CorruptStreamError("string lengths do not cover the data stream")
        items = []
        offset = 0
        for n in lengths:
            items.append(bytes(data[offset : offset + n]))
            offset += n
        if flags is not None:
            items = _expand(items, flags, b"")
        return OffsetVector(items, flags), pos
    stream = streams[pos]
    pos += 1
    if stype == ScalarType.BOOLEAN:
        dense = [1 if b else 0 for b in enc.bitset_decode(stream.payload, count)]
    elif stype.is_float:
        width = 4 if stype == ScalarType.FLOAT32 else 8
        if len(stream.payload) != width * count:
            raise CorruptStreamError("float stream size mismatch")
        dense = list(struct.unpack(f"<{count}{'f' if stype == ScalarType.FLOAT32 else 'd'}", stream.payload))
    else:
        if stream.header.value_count != count:
            raise CorruptStreamError(f"stream count {stream.header.value_count} != {count}")
        dense = _decode_stream_ints(stream)
    if flags is not None:
        dense = _expand(dense, flags, 0.0 if stype.is_float else 0)
    return FlatVector(_SCALAR_FMT[stype], dense, flags), pos


def column_to_vector(streams, column: Column, row_count: int):
    """Transform a column's streams into its in-memory vector.

    Opaque encodings are decoded; dictionary string columns stay compressed
    as DictionaryVector; monotone delta-RLE id streams stay as RunVector
    (see load_vector_tables).  Nullable columns expand to the placeholder
    layout; lengths become offsets.
    """
    pos = 0
    flags = None
    if column.nullable:
        present = streams[0]
        if present.kind != StreamKind.PRESENT:
            raise CorruptStreamError("nullable column is missing its present stream")
        if present.header.value_count != row_count:
            raise CorruptStreamError(
                f"present stream covers {present.header.value_count} rows, table has {row_count}"
            )
        flags = enc.bitset_decode(present.payload, row_count)
        pos = 1
    dense_count = sum(flags) if flags is not None else row_count

    ctype = column.type
    if isinstance(ctype, ScalarType):
        vector, pos = _scalar_vector(streams, pos, ctype, dense_count, flags)
    elif isinstance(ctype, ListType):
        lengths = _decode_stream_ints(streams[pos])
        if len(lengths) != dense_count:
            raise CorruptStreamError(f"{len(lengths)} list lengths for {dense_count} rows")
        pos += 1
        child, pos = _scalar_vector(streams, pos, ctype.element, sum(lengths), None)
        if flags is not None:
            lengths = _expand(lengths, flags, 0)
        offsets = [0]
        for n in lengths:
            offsets.append(offsets[-1] + n)
        vector = ListVector(offsets, child, flags)
    else:
        fields = {}
        for name, ftype in ctype.fields:
            fields[name], pos = _scalar_vector(streams, pos, ftype, dense_count, flags)
        vector = StructVector(fields, row_count, flags)
    if pos != len(streams):
        raise CorruptStreamError(f"{len(streams) - pos} unexpected trailing streams")
    return vector


def gather(vector, selection: SelectionVector) -> list:
    """Values at the selected rows, in selection order.

    DictionaryVector resolves one entry per selected row; nothing is fully
    materialized.
    """
    return [vector.value(i) for i in selection]


def alignment_of(vector) -> int:
    """Smallest start-address alignment across the vector's buffers."""
    alignments = [buf.alignment for buf in vector.buffers()]
    return min(alignments) if alignments else 8


# -- whole-table loading -----------------------------------------------------------


@dataclass
class VectorTable:
    """One feature table transformed to vectors."""

    name: str
    extent: int
    dimensions: int
    row_count: int
    ids: object  # FlatVector of uint64 or transparent RunVector
    type_codes: FlatVector
    columns: dict
    schema: dict
    geometry_counts: dict
    vertex_data: FlatVector | None
    vertex_count: int
    morton_codes: FlatVector | None = None
    vertex_offsets: FlatVector | None = None
    index_buffer: FlatVector | None = None
    triangle_counts: FlatVector | None = None

    def column(self, name: str):
        return self.columns.get(name)


def _ids_vector(stream: Stream):
    header = stream.header
    if header.logical == LogicalEncoding.DELTA_RLE and header.value_count:
        deltas, runs = enc.decode_rle_parts(stream.payload, header.physical, header.value_count)
        return RunVector.from_delta_rle(deltas, runs)
    return FlatVector("Q", _decode_stream_ints(stream))


def _vertex_vector(coords: list[int], dimensions: int) -> FlatVector:
    if dimensions == 2:
        return FlatVector("i", coords, align=64)
    # 3D records pad to 4 lanes so each vertex starts on a 16-byte boundary.
    padded = []
    for i in range(0, len(coords), 3):
        padded.extend((coords[i], coords[i + 1], coords[i + 2], 0))
    return FlatVector("i", padded, align=64)


def load_vector_tables(data, max_profile=None) -> list[VectorTable]:
    """Decode a stored tile straight into vector tables."""
    parsed = read_envelope(data, max_profile)
    return [table_block_to_vectors(block) for block in parsed.tables]


def table_block_to_vectors(block: TableBlock) -> VectorTable:
    from .storage import _decode_geometry_column

    rows = block.feature_count
    if rows == 0:
        ids = FlatVector("Q", [])
        type_codes = FlatVector("B", [])
        counts = {}
        vertex_data = None
        vertex_count = 0
        morton = None
        offsets_vec = None
        index_buffer = None
        triangle_counts = None
    else:
        if len(block.id_streams) != 1:
            raise CorruptStreamError(f"id column has {len(block.id_streams)} streams")
        ids = _ids_vector(block.id_streams[0])
        if ids.length != rows:
            raise CorruptStreamError(f"{ids.length} ids for {rows} features")
        topology, indices, tri_counts = _decode_geometry_column(
            block.geometry_streams, block.dimensions, rows
        )
        type_codes = FlatVector("B", [int(t) for t in topology.type_stream])
        counts = {
            "geometries": FlatVector("I", topology.geometries) if topology.geometries else None,
            "rings": FlatVector("I", topology.rings) if topology.rings else None,
            "vertices": FlatVector("I", topology.vertices) if topology.vertices else None,
        }
        buf = topology.vertex_buffer
        if isinstance(buf, VertexDictionary):
            morton = FlatVector("Q", buf.codes)
            offsets_vec = FlatVector("I", topology.vertex_offsets)
            unique = [morton_decode(c, buf.bias, buf.shift) for c in buf.codes]
            coords: list[int] = []
            for i in topology.vertex_offsets:
                coords.extend(unique[i])
            vertex_data = _vertex_vector(coords, 2)
            vertex_count = len(topology.vertex_offsets)
        else:
            morton = None
            offsets_vec = None
            vertex_data = _vertex_vector(list(buf.coordinates), block.dimensions)
            vertex_count = len(buf.coordinates) // block.dimensions
        index_buffer = FlatVector("I", indices) if indices is not None else None
        triangle_counts = FlatVector("I", tri_counts) if tri_counts is not None else None

    columns = {}
    for column, streams in zip(block.columns, block.attribute_streams):
        count = vertex_count if column.scope == AttributeScope.VERTEX else rows
        if count == 0 and not streams:
            columns[column.name] = FlatVector("q", [])
            continue
        columns[column.name] = column_to_vector(streams, column, count)
    return VectorTable(
        name=block.name,
        extent=block.extent,
        dimensions=block.dimensions,
        row_count=rows,
        ids=ids,
        type_codes=type_codes,
        columns=columns,
        schema={c.name: c for c in block.columns},
        geometry_counts=counts,
        vertex_data=vertex_data,
        vertex_count=vertex_count,
        morton_codes=morton,
        vertex_offsets=offsets_vec,
        index_buffer=index_buffer,
        triangle_counts=triangle_counts,
    )
