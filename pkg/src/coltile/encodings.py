"""Lightweight integer and string codec primitives plus the cascade selector.

Every codec is a pure function with an exact inverse; byte layouts are
normative and locked by golden tests.  Packed words are little-endian,
LSB-first.
"""

from __future__ import annotations

import enum
import itertools
import struct
from dataclasses import dataclass

U64_MAX = 2**64 - 1

FOR_BLOCK = 128  # values per frame-of-reference block


class TruncationError(ValueError):
    """Input bytes end before a value is complete."""


class CorruptStreamError(ValueError):
    """Payload is inconsistent with its declared encoding or counts."""


class PhysicalEncoding(enum.IntEnum):
    PLAIN = 0
    VARINT = 1
    BITPACK_FOR = 2


class LogicalEncoding(enum.IntEnum):
    """Logical stage; bit 4 marks zigzag applied before the physical stage."""

    NONE = 0
    DELTA = 1
    RLE = 2
    DELTA_RLE = 3
    DICTIONARY = 4
    ZIGZAG = 0x10
    ZIGZAG_DELTA = 0x11
    ZIGZAG_RLE = 0x12
    ZIGZAG_DELTA_RLE = 0x13

    @property
    def zigzag(self) -> bool:
        return bool(self & 0x10)

    @property
    def base(self) -> "LogicalEncoding":
        return LogicalEncoding(self & 0x0F)

    def with_zigzag(self) -> "LogicalEncoding":
        if self == LogicalEncoding.DICTIONARY:
            raise ValueError("dictionary indices are unsigned; zigzag does not apply")
        return LogicalEncoding(self | 0x10)


class EncodingProfile(enum.IntEnum):
    SIMPLE = 0
    ADVANCED = 1


# -- zigzag ------------------------------------------------------------------


def zigzag(n: int) -> int:
    """Map signed 64-bit to unsigned: 0,-1,1,-2,... -> 0,1,2,3,..."""
    return (n << 1) ^ (n >> 63)


def unzigzag(u: int) -> int:
    return (u >> 1) ^ -(u & 1)


# -- varint (unsigned LEB128) -------------------------------------------------


def varint_put(value: int, out: bytearray) -> int:
    """Append unsigned LEB128; returns the byte count (1-10)."""
    if value < 0 or value > U64_MAX:
        raise ValueError(f"varint domain is uint64, got {value}")
    n = 1
    while value > 0x7F:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
        n += 1
    out.append(value)
    return n


def varint_get(data, pos: int = 0) -> tuple[int, int]:
    """Decode one varint at ``pos``; returns (value, next position)."""
    result = 0
    shift = 0
    size = len(data)
    while True:
        if pos >= size:
            raise TruncationError(f"varint truncated at byte {pos}")
        b = data[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            break
        shift += 7
        if shift > 63:
            raise TruncationError(f"varint longer than 10 bytes at byte {pos}")
    if result > U64_MAX:
        raise CorruptStreamError(f"varint exceeds uint64 at byte {pos}")
    return result, pos


def varint_encode_all(values) -> bytes:
    out = bytearray()
    append = out.append
    for value in values:
        if value < 0 or value > U64_MAX:
            raise ValueError(f"varint domain is uint64, got {value}")
        while value > 0x7F:
            append((value & 0x7F) | 0x80)
            value >>= 7
        append(value)
    return bytes(out)


def varint_decode_all(data, pos: int, count: int) -> tuple[list[int], int]:
    """Decode ``count`` varints starting at ``pos`` (bulk fast path)."""
    out: list[int] = []
    append = out.append
    size = len(data)
    for _ in range(count):
        result = 0
        shift = 0
        while True:
            if pos >= size:
                raise TruncationError(f"varint truncated at byte {pos}")
            b = data[pos]
            pos += 1
            if b < 0x80:
                result |= b << shift
                break
            result |= (b & 0x7F) << shift
            shift += 7
            if shift > 63:
                raise TruncationError(f"varint longer than 10 bytes at byte {pos}")
        append(result)
    return out, pos


# -- delta --------------------------------------------------------------------


def delta_encode(xs) -> list[int]:
    """Pairwise differences; element 0 passes through."""
    if not xs:
        return []
    out = [xs[0]]
    prev = xs[0]
    for x in itertools.islice(xs, 1, None):
        out.append(x - prev)
        prev = x
    return out


def delta_decode(xs) -> list[int]:
    return list(itertools.accumulate(xs))


# -- run-length ---------------------------------------------------------------


def rle_encode(xs) -> tuple[list, list[int]]:
    """Split into maximal runs: (values, run lengths)."""
    values: list = []
    runs: list[int] = []
    for x in xs:
        if values and values[-1] == x:
            runs[-1] += 1
        else:
            values.append(x)
            runs.append(1)
    return values, runs


def rle_decode(values, runs) -> list:
    if len(values) != len(runs):
        raise CorruptStreamError(f"rle: {len(values)} values vs {len(runs)} runs")
    out: list = []
    for v, r in zip(values, runs):
        if r <= 0:
            raise CorruptStreamError(f"rle: non-positive run length {r}")
        out.extend([v] * r)
    return out


# -- presence bitset ----------------------------------------------------------


def bitset_encode(flags) -> bytes:
    """Pack booleans LSB-first, one bit each; pad bits are zero."""
    out = bytearray((len(flags) + 7) >> 3)
    for i, f in enumerate(flags):
        if f:
            out[i >> 3] |= 1 << (i & 7)
    return bytes(out)


_BYTE_BITS = [tuple(bool(b >> k & 1) for k in range(8)) for b in range(256)]


def bitset_decode(data, count: int) -> list[bool]:
    if len(data) != (count + 7) >> 3:
        raise CorruptStreamError(f"bitset: {len(data)} bytes for {count} flags")
    out: list[bool] = []
    extend = out.extend
    for b in data:
        extend(_BYTE_BITS[b])
    del out[count:]
    return out


# -- patched frame-of-reference bit packing ------------------------------------
#
# Layout: varint(total count), then blocks of up to FOR_BLOCK values:
#   varint(reference = block min)
#   u8(width = bits of the 90th-percentile residual)
#   varint(exception count)
#   packed residuals that fit the width, LSB-first, padded to a byte
#   exceptions: (varint position-in-block, varint residual) pairs


def _percentile_width(residuals) -> int:
    ordered = sorted(residuals)
    idx = -(-9 * len(ordered) // 10) - 1  # ceil(0.9 n) - 1
    return ordered[max(idx, 0)].bit_length()


def bitpack_for_encode(xs) -> bytes:
    out = bytearray()
    varint_put(len(xs), out)
    for start in range(0, len(xs), FOR_BLOCK):
        block = xs[start : start + FOR_BLOCK]
        ref = min(block)
        if ref < 0 or max(block) > U64_MAX:
            raise ValueError("bitpack domain is uint64")
        residuals = [v - ref for v in block]
        width = _percentile_width(residuals)
        exceptions = [(pos, r) for pos, r in enumerate(residuals) if r.bit_length() > width]
        varint_put(ref, out)
        out.append(width)
        varint_put(len(exceptions), out)
        exc_positions = {pos for pos, _ in exceptions}
        acc = 0
        nbits = 0
        for pos, r in enumerate(residuals):
            if pos in exc_positions:
                continue
            acc |= r << nbits
            nbits += width
            while nbits >= 8:
                out.append(acc & 0xFF)
                acc >>= 8
                nbits -= 8
        if nbits:
            out.append(acc & 0xFF)
        for pos, r in exceptions:
            varint_put(pos, out)
            varint_put(r, out)
    return bytes(out)


def bitpack_for_decode_from(data, pos: int) -> tuple[list[int], int]:
    """Decode one packed sequence at ``pos``; returns (values, next position)."""
    total, pos = varint_get(data, pos)
    out: list[int] = []
    while len(out) < total:
        block_count = min(FOR_BLOCK, total - len(out))
        ref, pos = varint_get(data, pos)
        if pos >= len(data):
            raise TruncationError(f"bitpack block header truncated at byte {pos}")
        width = data[pos]
        pos += 1
        if width > 64:
            raise CorruptStreamError(f"bitpack width {width} exceeds 64")
        n_exc, pos = varint_get(data, pos)
        if n_exc > block_count:
            raise CorruptStreamError(f"bitpack: {n_exc} exceptions in a {block_count}-value block")
        fit_count = block_count - n_exc
        packed_bytes = (fit_count * width + 7) >> 3
        if pos + packed_bytes > len(data):
            raise TruncationError(f"bitpack payload truncated at byte {pos}")
        fitted: list[int] = []
        if width:
            mask = (1 << width) - 1
            acc = 0
            nbits = 0
            p = pos
            for _ in range(fit_count):
                while nbits < width:
                    acc |= data[p] << nbits
                    p += 1
                    nbits += 8
                fitted.append(acc & mask)
                acc >>= width
                nbits -= width
        else:
            fitted = [0] * fit_count
        pos += packed_bytes
        exceptions: dict[int, int] = {}
        for _ in range(n_exc):
            epos, pos = varint_get(data, pos)
            evalue, pos = varint_get(data, pos)
            if epos >= block_count or epos in exceptions:
                raise CorruptStreamError(f"bitpack: bad exception position {epos}")
            exceptions[epos] = evalue
        fit_iter = iter(fitted)
        for i in range(block_count):
            r = exceptions[i] if i in exceptions else next(fit_iter)
            out.append(ref + r)
    return out, pos


def bitpack_for_decode(data) -> list[int]:
    values, pos = bitpack_for_decode_from(data, 0)
    if pos != len(data):
        raise CorruptStreamError(f"bitpack: {len(data) - pos} trailing bytes")
    return values


# -- dictionary ---------------------------------------------------------------


def dict_encode(xs) -> tuple[list, list[int]]:
    """Dedupe in first-occurrence order; returns (dictionary, indices)."""
    table: dict = {}
    indices = [table.setdefault(x, len(table)) for x in xs]
    return list(table), indices


def dict_decode(dictionary, indices) -> list:
    size = len(dictionary)
    for i in indices:
        if not 0 <= i < size:
            raise CorruptStreamError(f"dictionary index {i} out of range {size}")
    return [dictionary[i] for i in indices]


# -- stream statistics and the cascade selector --------------------------------


@dataclass(frozen=True)
class StreamStats:
    count: int
    min: int | None
    max: int | None
    distinct_count: int
    sorted_flag: bool
    run_count: int


def stream_stats(xs) -> StreamStats:
    if not xs:
        return StreamStats(0, None, None, 0, True, 0)
    runs = 1
    is_sorted = True
    prev = xs[0]
    for x in itertools.islice(xs, 1, None):
        if x != prev:
            runs += 1
            if x < prev:
                is_sorted = False
        prev = x
    return StreamStats(len(xs), min(xs), max(xs), len(set(xs)), is_sorted, runs)


def select_encoding(
    stats: StreamStats, domain: str, profile: EncodingProfile
) -> tuple[LogicalEncoding, PhysicalEncoding]:
    """Pick the encoding pair for a stream with the given statistics.

    ``domain`` is "signed", "unsigned", or "string".  Deterministic: the same
    inputs always give the same pair.  Rule ladder for numeric streams:
    sorted distinct values delta-encode; runny streams run-length-encode
    (delta first when sorted); everything else goes straight to the physical
    stage.  Signed domains are zigzagged before packing.
    """
    physical = (
        PhysicalEncoding.BITPACK_FOR if profile == EncodingProfile.ADVANCED else PhysicalEncoding.VARINT
    )
    if domain == "string":
        if stats.count and 2 * stats.distinct_count <= stats.count:
            return LogicalEncoding.DICTIONARY, physical
        return LogicalEncoding.NONE, PhysicalEncoding.PLAIN

    # Signed deltas must fit back into the 64-bit zigzag domain, so delta
    # stages are off the table when the value range spans more than 2^63-1.
    delta_safe = (
        domain != "signed"
        or stats.count == 0
        or stats.max - stats.min <= 2**63 - 1
    )
    if stats.sorted_flag and stats.distinct_count == stats.count and delta_safe:
        logical = LogicalEncoding.DELTA
    elif 4 * stats.run_count <= stats.count:
        logical = (
            LogicalEncoding.DELTA_RLE
            if stats.sorted_flag and delta_safe
            else LogicalEncoding.RLE
        )
    else:
        logical = LogicalEncoding.NONE
    if domain == "signed":
        logical = logical.with_zigzag()
    return logical, physical


# -- integer stream pipeline ----------------------------------------------------
#
# encode_int_stream/decode_int_stream compose the logical and physical stages
# into one payload.  RLE payloads are framed as:
#   varint(run count) + physical(values) + physical(runs)


def _physical_encode(values, physical: PhysicalEncoding) -> bytes:
    if physical == PhysicalEncoding.VARINT:
        return varint_encode_all(values)
    if physical == PhysicalEncoding.BITPACK_FOR:
        return bitpack_for_encode(values)
    return struct.pack(f"<{len(values)}Q", *values)


def _physical_decode(data, pos: int, count: int, physical: PhysicalEncoding) -> tuple[list[int], int]:
    if physical == PhysicalEncoding.VARINT:
        return varint_decode_all(data, pos, count)
    if physical == PhysicalEncoding.BITPACK_FOR:
        values, pos = bitpack_for_decode_from(data, pos)
        if len(values) != count:
            raise CorruptStreamError(f"bitpack count {len(values)}, header says {count}")
        return values, pos
    end = pos + 8 * count
    if end > len(data):
        raise TruncationError(f"plain stream truncated at byte {pos}")
    return list(struct.unpack_from(f"<{count}Q", data, pos)), end


def encode_int_stream(xs, logical: LogicalEncoding, physical: PhysicalEncoding) -> bytes:
    base = logical.base
    if base == LogicalEncoding.DELTA:
        seq = delta_encode(xs)
    elif base in (LogicalEncoding.RLE, LogicalEncoding.DELTA_RLE):
        seq = delta_encode(xs) if base == LogicalEncoding.DELTA_RLE else list(xs)
        values, runs = rle_encode(seq)
        if logical.zigzag:
            values = [zigzag(v) for v in values]
        out = bytearray()
        varint_put(len(values), out)
        out += _physical_encode(values, physical)
        out += _physical_encode(runs, physical)
        return bytes(out)
    elif base == LogicalEncoding.NONE:
        seq = list(xs)
    else:
        raise ValueError(f"{logical} is not an integer stream encoding")
    if logical.zigzag:
        seq = [zigzag(v) for v in seq]
    return _physical_encode(seq, physical)


def decode_rle_parts(
    data, physical: PhysicalEncoding, count: int
) -> tuple[list[int], list[int]]:
    """Decode an RLE payload into (values, run lengths) without expanding."""
    n_runs, pos = varint_get(data, 0)
    if n_runs > count:
        raise CorruptStreamError(f"rle: {n_runs} runs for {count} values")
    values, pos = _physical_decode(data, pos, n_runs, physical)
    runs, pos = _physical_decode(data, pos, n_runs, physical)
    if pos != len(data):
        raise CorruptStreamError(f"rle: {len(data) - pos} trailing bytes")
    if sum(runs) != count:
        raise CorruptStreamError(f"rle: run lengths sum to {sum(runs)}, expected {count}")
    if any(r <= 0 for r in runs):
        raise CorruptStreamError("rle: non-positive run length")
    return values, runs


def decode_int_stream(
    data, logical: LogicalEncoding, physical: PhysicalEncoding, count: int
) -> list[int]:
    base = logical.base
    if base in (LogicalEncoding.RLE, LogicalEncoding.DELTA_RLE):
        n_runs, pos = varint_get(data, 0)
        if n_runs > count:
            raise CorruptStreamError(f"rle: {n_runs} runs for {count} values")
        values, pos = _physical_decode(data, pos, n_runs, physical)
        runs, pos = _physical_decode(data, pos, n_runs, physical)
        if pos != len(data):
            raise CorruptStreamError(f"rle: {len(data) - pos} trailing bytes")
        # validate before expanding so corrupt run lengths cannot balloon
        if sum(runs) != count:
            raise CorruptStreamError(f"rle: run lengths sum to {sum(runs)}, expected {count}")
        if logical.zigzag:
            values = [unzigzag(v) for v in values]
        seq = rle_decode(values, runs)
        return delta_decode(seq) if base == LogicalEncoding.DELTA_RLE else seq
    seq, pos = _physical_decode(data, 0, count, physical)
    if pos != len(data):
        raise CorruptStreamError(f"{len(data) - pos} trailing bytes after integer stream")
    if logical.zigzag:
        seq = [unzigzag(v) for v in seq]
    if base == LogicalEncoding.DELTA:
        return delta_decode(seq)
    if base == LogicalEncoding.NONE:
        return seq
    raise ValueError(f"{logical} is not an integer stream encoding")
