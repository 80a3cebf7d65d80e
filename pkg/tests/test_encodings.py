import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coltile.encodings import (
    CorruptStreamError,
    EncodingProfile,
    LogicalEncoding,
    PhysicalEncoding,
    StreamStats,
    TruncationError,
    bitpack_for_decode,
    bitpack_for_encode,
    bitset_decode,
    bitset_encode,
    decode_int_stream,
    delta_decode,
    delta_encode,
    dict_decode,
    dict_encode,
    encode_int_stream,
    rle_decode,
    rle_encode,
    select_encoding,
    stream_stats,
    unzigzag,
    varint_get,
    varint_put,
    zigzag,
)

I64_MIN = -(2**63)
I64_MAX = 2**63 - 1
U64_MAX = 2**64 - 1


# -- zigzag -------------------------------------------------------------------


def test_zigzag_examples():
    assert zigzag(0) == 0
    assert zigzag(-1) == 1
    assert zigzag(3) == 6


@given(st.integers(I64_MIN, I64_MAX))
def test_zigzag_bijection(n):
    u = zigzag(n)
    assert 0 <= u <= U64_MAX
    assert unzigzag(u) == n


def test_zigzag_extremes():
    assert unzigzag(zigzag(I64_MIN)) == I64_MIN
    assert unzigzag(zigzag(I64_MAX)) == I64_MAX
    assert zigzag(I64_MIN) == U64_MAX


# -- varint -------------------------------------------------------------------


@pytest.mark.parametrize(
    "value,encoded",
    [(0, b"\x00"), (300, b"\xac\x02"), (127, b"\x7f"), (128, b"\x80\x01"), (U64_MAX, b"\xff" * 9 + b"\x01")],
)
def test_varint_examples(value, encoded):
    out = bytearray()
    assert varint_put(value, out) == len(encoded)
    assert bytes(out) == encoded
    assert varint_get(encoded) == (value, len(encoded))


def test_varint_truncation():
    with pytest.raises(TruncationError):
        varint_get(b"\x80")
    with pytest.raises(TruncationError):
        varint_get(b"\xff" * 11)


def test_varint_rejects_negative():
    with pytest.raises(ValueError):
        varint_put(-1, bytearray())


@given(st.integers(0, U64_MAX))
def test_varint_round_trip(value):
    out = bytearray()
    n = varint_put(value, out)
    assert 1 <= n <= 10
    assert varint_get(out) == (value, n)


# -- delta --------------------------------------------------------------------


def test_delta_examples():
    assert delta_encode([3, 5, 4]) == [3, 2, -1]
    assert delta_encode([7]) == [7]
    assert delta_encode([2, 2, 2, 2]) == [2, 0, 0, 0]
    assert delta_encode([]) == []


@given(st.lists(st.integers(-(2**40), 2**40)))
def test_delta_prefix_sum_identity(xs):
    assert delta_decode(delta_encode(xs)) == xs
    assert delta_encode(delta_decode(xs)) == xs


# -- rle ----------------------------------------------------------------------


def test_rle_examples():
    assert rle_encode([7, 7, 7, 2]) == ([7, 2], [3, 1])
    assert rle_encode([]) == ([], [])
    assert rle_encode([1, 2, 3]) == ([1, 2, 3], [1, 1, 1])


@given(st.lists(st.integers(0, 50)))
def test_rle_round_trip_and_maximal_runs(xs):
    values, runs = rle_encode(xs)
    assert rle_decode(values, runs) == xs
    assert all(a != b for a, b in zip(values, values[1:]))  # maximal runs
    assert sum(runs) == len(xs)


# -- bitset -------------------------------------------------------------------


def test_bitset_examples():
    assert bitset_encode([True, False, True]) == bytes([0b00000101])
    assert bitset_encode([]) == b""
    assert bitset_encode([True] * 8) == b"\xff"


@given(st.lists(st.booleans()))
def test_bitset_round_trip(flags):
    data = bitset_encode(flags)
    assert len(data) == (len(flags) + 7) // 8
    assert bitset_decode(data, len(flags)) == flags


def test_bitset_length_mismatch():
    with pytest.raises(CorruptStreamError):
        bitset_decode(b"\x01\x02", 3)


# -- bitpack frame-of-reference --------------------------------------------------

GOLDEN_CONST = "8001050000"
GOLDEN_RAMP = (
    "80010007008080604028180e888462c168381e90886442a9582e988c66c3e9783ea09068442a994ea8946ac5"
    "6ab95eb0986c46abd96eb89c6ec7ebf97ec0a070482c1a8fc8a472c96c3a9fd0a8744aad5aafd8ac76cbed7a"
    "bfe0b0784c2e9bcfe8b47acd6ebbdff0b87c4eafdbeff8bc7ecfeffbff"
)
GOLDEN_OUTLIER = "80010000017f8080808010"


def test_bitpack_golden_constant_block():
    data = bitpack_for_encode([5] * 128)
    assert data.hex() == GOLDEN_CONST  # ref 5, width 0, no exceptions, empty payload
    assert bitpack_for_decode(data) == [5] * 128


def test_bitpack_golden_ramp():
    data = bitpack_for_encode(list(range(128)))
    assert data.hex() == GOLDEN_RAMP
    # varint(128) + ref + width + exceptions + 128 * 7 / 8 payload bytes
    assert len(data) == 2 + 1 + 1 + 1 + 112
    assert data[3] == 7  # width byte
    assert bitpack_for_decode(data) == list(range(128))


def test_bitpack_golden_outlier():
    data = bitpack_for_encode([0] * 127 + [2**32])
    assert data.hex() == GOLDEN_OUTLIER
    assert data[3] == 0  # width collapses to zero
    assert bitpack_for_decode(data) == [0] * 127 + [2**32]


def test_bitpack_truncation():
    data = bitpack_for_encode(list(range(300)))
    for cut in (1, 3, 10, len(data) - 1):
        with pytest.raises((TruncationError, CorruptStreamError)):
            bitpack_for_decode(data[:cut])


@given(
    st.lists(
        st.integers(0, U64_MAX).flatmap(lambda hi: st.integers(0, hi)), max_size=300
    )
)
@settings(max_examples=200)
def test_bitpack_round_trip(xs):
    assert bitpack_for_decode(bitpack_for_encode(xs)) == xs


def test_bitpack_size_model_vs_varint():
    # On sorted random data, bitpacked deltas never exceed varint-coded
    # deltas by more than one block header's worth per 128 values.
    rng = random.Random(23)
    for _ in range(60):
        upper = 2 ** rng.randrange(4, 34)
        xs = sorted(rng.randrange(0, upper) for _ in range(rng.randrange(1, 1200)))
        deltas = delta_encode(xs)
        packed = len(bitpack_for_encode(deltas))
        varints = len(encode_int_stream(deltas, LogicalEncoding.NONE, PhysicalEncoding.VARINT))
        blocks = -(-len(xs) // 128)
        assert packed <= varints + 16 * blocks


# -- dictionary -----------------------------------------------------------------


def test_dict_examples():
    assert dict_encode(["a", "b", "a"]) == (["a", "b"], [0, 1, 0])
    assert dict_encode([]) == ([], [])
    assert dict_encode(["x", "x", "x"]) == (["x"], [0, 0, 0])


@given(st.lists(st.text(max_size=6)))
def test_dict_round_trip(xs):
    dictionary, indices = dict_encode(xs)
    assert len(set(dictionary)) == len(dictionary)
    assert dict_decode(dictionary, indices) == xs


def test_dict_rejects_bad_index():
    with pytest.raises(CorruptStreamError):
        dict_decode(["a"], [1])


# -- selector ---------------------------------------------------------------------


def test_select_encoding_examples():
    sorted_ids = stream_stats(list(range(1000)))
    assert select_encoding(sorted_ids, "unsigned", EncodingProfile.SIMPLE) == (
        LogicalEncoding.DELTA,
        PhysicalEncoding.VARINT,
    )
    runny = StreamStats(count=1000, min=1, max=3, distinct_count=3, sorted_flag=False, run_count=5)
    assert select_encoding(runny, "unsigned", EncodingProfile.SIMPLE) == (
        LogicalEncoding.RLE,
        PhysicalEncoding.VARINT,
    )
    arbitrary = StreamStats(count=100, min=5, max=40, distinct_count=90, sorted_flag=False, run_count=100)
    assert select_encoding(arbitrary, "unsigned", EncodingProfile.ADVANCED) == (
        LogicalEncoding.NONE,
        PhysicalEncoding.BITPACK_FOR,
    )


def test_select_encoding_zigzags_signed():
    stats = StreamStats(count=10, min=-5, max=5, distinct_count=10, sorted_flag=False, run_count=10)
    logical, _ = select_encoding(stats, "signed", EncodingProfile.SIMPLE)
    assert logical.zigzag


def test_select_encoding_sorted_runny_is_delta_rle():
    stats = StreamStats(count=100, min=1, max=4, distinct_count=4, sorted_flag=True, run_count=4)
    logical, _ = select_encoding(stats, "unsigned", EncodingProfile.SIMPLE)
    assert logical == LogicalEncoding.DELTA_RLE


def test_select_encoding_is_pure():
    stats = stream_stats([3, 1, 2, 3, 3, 3, 1])
    results = {select_encoding(stats, "unsigned", EncodingProfile.ADVANCED) for _ in range(10)}
    assert len(results) == 1


# -- integer stream pipeline --------------------------------------------------------


@pytest.mark.parametrize("physical", list(PhysicalEncoding))
@pytest.mark.parametrize(
    "logical",
    [
        LogicalEncoding.NONE,
        LogicalEncoding.DELTA,
        LogicalEncoding.RLE,
        LogicalEncoding.DELTA_RLE,
        LogicalEncoding.ZIGZAG,
        LogicalEncoding.ZIGZAG_DELTA,
        LogicalEncoding.ZIGZAG_RLE,
    ],
)
def test_int_stream_round_trip(logical, physical):
    rng = random.Random(int(logical) * 31 + int(physical))
    for _ in range(40):
        if logical.zigzag:
            xs = [rng.randrange(-10000, 10000) for _ in range(rng.randrange(0, 120))]
        else:
            xs = [rng.randrange(0, 100000) for _ in range(rng.randrange(0, 120))]
        if logical.base in (LogicalEncoding.DELTA, LogicalEncoding.DELTA_RLE) and not logical.zigzag:
            xs.sort()
        payload = encode_int_stream(xs, logical, physical)
        assert decode_int_stream(payload, logical, physical, len(xs)) == xs


def test_int_stream_count_mismatch():
    payload = encode_int_stream([1, 2, 3], LogicalEncoding.NONE, PhysicalEncoding.VARINT)
    with pytest.raises((CorruptStreamError, TruncationError)):
        decode_int_stream(payload, LogicalEncoding.NONE, PhysicalEncoding.VARINT, 5)
