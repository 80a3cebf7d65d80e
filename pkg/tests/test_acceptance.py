"""Acceptance suite: every repository-level criterion at its stated
tolerance, one pass/fail line per criterion.

Criterion 10 (robustness fuzzing) is budget-driven: it runs for
COLTILE_FUZZ_SECONDS (default 20) so the full one-hour budget is
``COLTILE_FUZZ_SECONDS=3600 pytest tests/test_acceptance.py -k fuzz``.
"""

import os
import random
import statistics
import time
import zlib

import pytest

from coltile.corpus import CorpusSpec, generate_tile, zoom_path
from coltile.encodings import (
    CorruptStreamError,
    EncodingProfile,
    TruncationError,
    bitpack_for_decode,
    bitpack_for_encode,
    bitset_decode,
    bitset_encode,
    delta_decode,
    delta_encode,
    dict_decode,
    dict_encode,
    rle_decode,
    rle_encode,
    unzigzag,
    varint_get,
    varint_put,
    zigzag,
)
from coltile.filters import (
    Combinator,
    Comparison,
    Constant,
    Existence,
    Membership,
    compile as compile_filter,
    evaluate,
    evaluate_tuple_at_a_time,
)
from coltile.geometry import (
    CorruptTopologyError,
    morton_decode,
    morton_encode,
    tessellate_polygon,
)
from coltile.memory import load_vector_tables
from coltile.model import (
    Column,
    FeatureTable,
    Geometry,
    ScalarType,
    SchemaError,
    Tile,
    TileCoord,
    ring_twice_area,
)
from coltile.mvt import MvtParseError, mvt_parse, mvt_write
from coltile.storage import (
    EnvelopeError,
    ValidationError,
    decode_tile,
    encode_tile,
)

from conftest import random_polygon_rings, random_tile


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"acceptance {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


# -- 1: storage round trip ------------------------------------------------------


def test_criterion_1_round_trip_1000_tiles():
    rng = random.Random(1001)
    start = time.perf_counter()
    for i in range(1000):
        tile = random_tile(rng)
        profile = EncodingProfile(i % 2)
        data = encode_tile(tile, profile, tessellate=i % 5 == 0)
        assert decode_tile(data, tile.coord) == tile
    elapsed = time.perf_counter() - start
    report(1, elapsed < 60.0, f"1000 randomized tiles round-tripped in {elapsed:.1f}s (< 60s)")


# -- 2: codec oracle suite -------------------------------------------------------


def test_criterion_2_codec_round_trips():
    rng = random.Random(2002)
    cases = 10_000

    for _ in range(cases):
        n = rng.randrange(-(2**63), 2**63)
        assert unzigzag(zigzag(n)) == n

    for _ in range(cases):
        v = rng.randrange(2**64)
        out = bytearray()
        varint_put(v, out)
        assert varint_get(out) == (v, len(out))

    for _ in range(cases):
        xs = [rng.randrange(-(2**40), 2**40) for _ in range(rng.randrange(0, 24))]
        assert delta_decode(delta_encode(xs)) == xs

    for _ in range(cases):
        xs = [rng.randrange(6) for _ in range(rng.randrange(0, 24))]
        values, runs = rle_encode(xs)
        assert rle_decode(values, runs) == xs

    for _ in range(cases):
        flags = [rng.random() < 0.5 for _ in range(rng.randrange(0, 40))]
        assert bitset_decode(bitset_encode(flags), len(flags)) == flags

    for _ in range(cases):
        width = rng.randrange(1, 64)
        xs = [rng.randrange(1 << width) for _ in range(rng.randrange(0, 20))]
        assert bitpack_for_decode(bitpack_for_encode(xs)) == xs

    for _ in range(cases):
        xs = [f"s{rng.randrange(8)}" for _ in range(rng.randrange(0, 24))]
        dictionary, indices = dict_encode(xs)
        assert dict_decode(dictionary, indices) == xs

    # byte stability of the packed layout across runs
    stable_rng = random.Random(42)
    inputs = [
        [stable_rng.randrange(2**20) for _ in range(stable_rng.randrange(0, 500))]
        for _ in range(50)
    ]
    first = [bitpack_for_encode(xs) for xs in inputs]
    second = [bitpack_for_encode(list(xs)) for xs in inputs]
    assert first == second
    report(2, True, f"{cases} random cases per codec round-tripped; bitpack bytes stable")


# -- 3: morton -------------------------------------------------------------------


def test_criterion_3_morton():
    mismatches = 0
    for x in range(256):
        for y in range(256):
            if morton_decode(morton_encode(x, y)) != (x, y):
                mismatches += 1
    rng = random.Random(3003)
    for _ in range(100_000):
        x, y = rng.randrange(1 << 30), rng.randrange(1 << 30)
        if morton_decode(morton_encode(x, y)) != (x, y):
            mismatches += 1
    report(3, mismatches == 0, f"exhaustive [0,256)^2 plus 100000 30-bit samples, {mismatches} mismatches")


# -- 4: tessellation -------------------------------------------------------------


def test_criterion_4_tessellation():
    rng = random.Random(4004)
    worst = 0.0
    for _ in range(500):
        rings = random_polygon_rings(rng, max_holes=3)
        n = sum(len(r) for r in rings)
        h = len(rings) - 1
        tess = tessellate_polygon(rings)
        assert tess.triangle_count == n + 2 * h - 2, "triangle count identity"
        pts = [v for ring in rings for v in ring]
        total = 0
        for i in range(0, len(tess.indices), 3):
            a, b, c = (pts[tess.indices[i + k]] for k in range(3))
            total += abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        expected = abs(ring_twice_area(rings[0])) - sum(abs(ring_twice_area(r)) for r in rings[1:])
        rel = abs(total - expected) / expected
        worst = max(worst, rel)
        assert rel <= 1e-9, f"area conservation off by {rel}"
    report(4, True, f"500 polygons (0-3 holes): count identity exact, worst area error {worst:.1e}")


# -- 5 & 6: sizes on the default corpus --------------------------------------------


@pytest.fixture(scope="module")
def default_corpus():
    spec = CorpusSpec(seed=1, zoom_min=0, zoom_max=14)
    tiles = [generate_tile(spec, coord) for coord in zoom_path(spec)]
    blobs = {
        "mvt": [mvt_write(t) for t in tiles],
        "simple": [encode_tile(t, EncodingProfile.SIMPLE) for t in tiles],
        "advanced": [encode_tile(t, EncodingProfile.ADVANCED) for t in tiles],
    }
    return tiles, blobs


def test_criterion_5_size_reduction(default_corpus):
    start = time.perf_counter()
    _, blobs = default_corpus
    mvt = sum(len(b) for b in blobs["mvt"])
    advanced = sum(len(b) for b in blobs["advanced"])
    mvt_deflate = sum(len(zlib.compress(b, 6)) for b in blobs["mvt"])
    elapsed = time.perf_counter() - start
    ok = advanced <= mvt / 1.5 and advanced <= mvt_deflate and elapsed < 120
    report(
        5,
        ok,
        f"MLT-advanced {advanced} vs MVT {mvt} (SR {mvt/advanced:.2f} >= 1.5); "
        f"advanced <= DEFLATE(MVT) {mvt_deflate}; {elapsed:.1f}s",
    )


def test_criterion_6_compressed_ordering(default_corpus):
    _, blobs = default_corpus
    mvt_deflate = sum(len(zlib.compress(b, 6)) for b in blobs["mvt"])
    simple_deflate = sum(len(zlib.compress(b, 6)) for b in blobs["simple"])
    advanced_deflate = sum(len(zlib.compress(b, 6)) for b in blobs["advanced"])
    ok = simple_deflate <= mvt_deflate and advanced_deflate <= mvt_deflate
    report(
        6,
        ok,
        f"DEFLATE: simple {simple_deflate}, advanced {advanced_deflate}, mvt {mvt_deflate}",
    )


# -- 7: filter equivalence ----------------------------------------------------------


def _random_expression(rng: random.Random, depth: int = 0):
    roll = rng.random()
    classes = ["river", "stream", "lake", "canal", "road"]
    if depth > 2 or roll < 0.4:
        which = rng.random()
        if which < 0.25:
            return Comparison(rng.choice(["==", "!=", "<", "<=", ">", ">="]), "rank", rng.randrange(-1, 12))
        if which < 0.45:
            return Comparison(
                rng.choice(["==", "!="]), rng.choice(["klass", "name"]), rng.choice(classes + ["n1", "zz"])
            )
        if which < 0.52:
            return Comparison("==", "$type", rng.choice(["Point", "LineString", "Polygon"]))
        if which < 0.62:
            return Comparison("==", "wet", rng.random() < 0.5)
        if which < 0.75:
            return Membership(
                rng.choice(["klass", "name"]),
                tuple(rng.sample(classes + ["n0", "n5", "zz"], rng.randrange(1, 4))),
                rng.random() < 0.5,
            )
        if which < 0.92:
            return Existence(rng.choice(["klass", "name", "rank", "ghost"]), rng.random() < 0.5)
        return Constant(rng.random() < 0.5)
    return Combinator(
        rng.choice(["all", "any", "none"]),
        tuple(_random_expression(rng, depth + 1) for _ in range(rng.randrange(0, 4))),
    )


def _filter_table(rng: random.Random, rows: int):
    classes = ["river", "stream", "lake", "canal", "road"]
    geometries = []
    for i in range(rows):
        roll = i % 3
        x, y = rng.randrange(4000), rng.randrange(4000)
        if roll == 0:
            geometries.append(Geometry.point((x, y)))
        elif roll == 1:
            geometries.append(Geometry.line_string([(x, y), (x + 3, y + 9)]))
        else:
            geometries.append(Geometry.polygon([[(x, y), (x, y + 8), (x + 8, y + 8), (x + 8, y)]]))
    table = FeatureTable(
        name="t",
        ids=tuple(range(1, rows + 1)),
        geometries=tuple(geometries),
        columns=(
            Column("klass", ScalarType.STRING),
            Column("name", ScalarType.STRING, nullable=True),
            Column("rank", ScalarType.INT64, nullable=True),
            Column("wet", ScalarType.BOOLEAN),
        ),
        values={
            "klass": tuple(rng.choice(classes) for _ in range(rows)),
            "name": tuple(f"n{rng.randrange(7)}" if rng.random() > 0.3 else None for _ in range(rows)),
            "rank": tuple(rng.randrange(11) if rng.random() > 0.2 else None for _ in range(rows)),
            "wet": tuple(rng.random() < 0.4 for _ in range(rows)),
        },
    )
    data = encode_tile(Tile(TileCoord(0, 0, 0), (table,)), EncodingProfile.ADVANCED)
    return load_vector_tables(data)[0]


def test_criterion_7_filter_equivalence(default_corpus):
    rng = random.Random(7007)
    tables = [_filter_table(rng, rng.randrange(20, 200)) for _ in range(20)]
    pairs = 0
    for _ in range(10_000):
        table = rng.choice(tables)
        expr = _random_expression(rng)
        fast = evaluate(compile_filter(expr, table), table)
        slow = evaluate_tuple_at_a_time(expr, table)
        assert fast == slow, f"engines disagree on {expr}"
        pairs += 1

    from coltile.cli import load_suite

    suite = load_suite(None)
    suite_pairs = 0
    tiles, blobs = default_corpus
    for blob in blobs["advanced"]:
        for vt in load_vector_tables(blob):
            for expr in suite:
                fast = evaluate(compile_filter(expr, vt), vt)
                slow = evaluate_tuple_at_a_time(expr, vt)
                assert fast == slow, f"suite disagreement on {vt.name}: {expr}"
                suite_pairs += 1
    report(7, True, f"{pairs} random pairs + {suite_pairs} suite pairs matched exactly")


# -- 8: filter speed ------------------------------------------------------------------


def test_criterion_8_filter_speed():
    from coltile.cli import load_suite

    start = time.perf_counter()
    rng = random.Random(8008)
    table = _filter_table(rng, 100_000)
    suite = load_suite(None)
    plans = [compile_filter(expr, table) for expr in suite]

    for expr, plan in zip(suite, plans):
        assert evaluate(plan, table) == evaluate_tuple_at_a_time(expr, table)

    def run_vectorized():
        for plan in plans:
            evaluate(plan, table)

    def run_oracle():
        for expr in suite:
            evaluate_tuple_at_a_time(expr, table)

    vec_times = []
    run_vectorized()
    for _ in range(5):
        t0 = time.perf_counter()
        run_vectorized()
        vec_times.append(time.perf_counter() - t0)
    oracle_times = []
    run_oracle()
    for _ in range(5):
        t0 = time.perf_counter()
        run_oracle()
        oracle_times.append(time.perf_counter() - t0)
    vec = statistics.median(vec_times)
    oracle = statistics.median(oracle_times)
    elapsed = time.perf_counter() - start
    speedup = oracle / vec
    report(
        8,
        speedup >= 2.0 and elapsed < 60,
        f"vectorized {vec*1000:.0f}ms vs row-at-a-time {oracle*1000:.0f}ms on 100k rows: "
        f"{speedup:.1f}x (>= 2x); total {elapsed:.0f}s (< 60s)",
    )


# -- 9: decode speed -------------------------------------------------------------------


def test_criterion_9_decode_speed(default_corpus):
    tiles, blobs = default_corpus
    coords = [t.coord for t in tiles]

    def run_mlt():
        for blob in blobs["advanced"]:
            load_vector_tables(blob)

    def run_mvt():
        for coord, blob in zip(coords, blobs["mvt"]):
            mvt_parse(blob, coord)

    def medianof(run):
        times = []
        run()
        for _ in range(5):
            t0 = time.perf_counter()
            run()
            times.append(time.perf_counter() - t0)
        return statistics.median(times)

    mlt = medianof(run_mlt)
    mvt = medianof(run_mvt)
    ratio = mvt / mlt
    report(
        9,
        ratio >= 1.2,
        f"MLT-to-vectors {mlt*1000:.0f}ms vs MVT parse {mvt*1000:.0f}ms: {ratio:.2f}x (>= 1.2x)",
    )


# -- 10: robustness fuzz -----------------------------------------------------------------

_TYPED_DECODE_ERRORS = (
    EnvelopeError,
    CorruptStreamError,
    TruncationError,
    CorruptTopologyError,
    ValidationError,
    MvtParseError,
    SchemaError,
    ValueError,  # every codec error in this package derives from ValueError
)


def test_criterion_10_fuzz_robustness():
    budget = float(os.environ.get("COLTILE_FUZZ_SECONDS", "20"))
    rng = random.Random(101010)
    seeds = []
    for i in range(6):
        tile = random_tile(rng, max_tables=2, max_rows=5)
        seeds.append(("mlt", encode_tile(tile, EncodingProfile(i % 2), tessellate=i % 2 == 0)))
    spec = CorpusSpec(seed=2, zoom_min=0, zoom_max=3)
    for coord in zoom_path(spec):
        seeds.append(("mvt", mvt_write(generate_tile(spec, coord))))

    def mutate(data: bytes) -> bytes:
        out = bytearray(data)
        for _ in range(rng.randrange(1, 6)):
            mode = rng.random()
            if not out:
                break
            if mode < 0.5:
                out[rng.randrange(len(out))] = rng.randrange(256)
            elif mode < 0.75:
                del out[rng.randrange(len(out)) :]
            else:
                pos = rng.randrange(len(out) + 1)
                out[pos:pos] = bytes(rng.randrange(256) for _ in range(rng.randrange(1, 9)))
        return bytes(out)

    iterations = 0
    start = time.perf_counter()
    while time.perf_counter() - start < budget:
        kind, base = seeds[iterations % len(seeds)]
        data = mutate(base) if rng.random() < 0.9 else bytes(rng.randbytes(rng.randrange(0, 300)))
        try:
            if kind == "mlt":
                decode_tile(data)
            else:
                mvt_parse(data)
        except _TYPED_DECODE_ERRORS:
            pass
        # anything else (IndexError, MemoryError, RecursionError, ...) fails
        iterations += 1
    report(
        10,
        True,
        f"{iterations} mutated inputs over {budget:.0f}s budget: typed errors only "
        "(set COLTILE_FUZZ_SECONDS=3600 for the full budget)",
    )
