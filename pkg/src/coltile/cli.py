"""Command-line tool: corpus generation, format conversion, size reports,
and decode/filter benchmarks.

Verbs: gen-corpus, encode, decode, compare, bench-decode, bench-filter.
Reports print an aligned human-readable section followed by stable
machine-readable ``report: key=value`` lines.  Exit codes: 0 success,
1 correctness failure, 2 usage or IO errors.
"""

from __future__ import annotations

import argparse
import os
import statistics
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from . import corpus as corpus_mod
from . import filters as filters_mod
from .encodings import EncodingProfile
from .memory import load_vector_tables
from .model import TileCoord
from .mvt import mvt_parse
from .storage import decode_tile, encode_tile

DEFLATE_LEVEL = 6


def _profile(name: str) -> EncodingProfile:
    return EncodingProfile.ADVANCED if name == "advanced" else EncodingProfile.SIMPLE


def _tile_paths(root: Path, suffix: str) -> dict[tuple[int, int, int], Path]:
    out = {}
    for path in sorted(root.glob(f"*/*/*{suffix}")):
        try:
            z = int(path.parent.parent.name)
            x = int(path.parent.name)
            y = int(path.stem)
        except ValueError:
            continue
        out[(z, x, y)] = path
    return out


def _load_logical(path: Path):
    """Read a tile fixture: .json preferred, .mvt as fallback."""
    json_path = path.with_suffix(".json")
    if json_path.exists():
        return corpus_mod.tile_from_json(json_path.read_text())
    z, x, y = int(path.parent.parent.name), int(path.parent.name), int(path.stem)
    return mvt_parse(path.read_bytes(), TileCoord(z, x, y))


def _encode_one(src: str, dst: str, profile_value: int, tessellate: bool):
    tile = _load_logical(Path(src))
    data = encode_tile(tile, EncodingProfile(profile_value), tessellate)
    Path(dst).parent.mkdir(parents=True, exist_ok=True)
    Path(dst).write_bytes(data)
    return dst, len(data)


def _report(lines: dict) -> None:
    for key, value in lines.items():
        print(f"report: {key}={value}")


def _median_timings(run, reps: int) -> tuple[float, float, float]:
    """Median/min/max of ``reps`` runs after one discarded warm-up."""
    times = []
    run()
    for _ in range(reps):
        t0 = time.perf_counter()
        run()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), min(times), max(times)


# -- verbs --------------------------------------------------------------------------


def cmd_gen_corpus(args) -> int:
    spec = corpus_mod.CorpusSpec(
        seed=args.seed,
        zoom_min=args.zooms[0],
        zoom_max=args.zooms[1],
        clustering=args.clustering,
    )
    out = Path(args.out)
    try:
        coords = corpus_mod.generate_corpus(spec, out)
    except OSError as e:
        print(f"error: cannot write corpus: {e}", file=sys.stderr)
        return 2
    total = sum((out / str(c.z) / str(c.x) / f"{c.y}.mvt").stat().st_size for c in coords)
    print(f"wrote {len(coords)} tiles under {out} ({total} MVT bytes)")
    _report({"tiles": len(coords), "mvt_bytes": total, "seed": args.seed})
    return 0


def cmd_encode(args) -> int:
    src_root = Path(args.input)
    fixtures = _tile_paths(src_root, ".json") or _tile_paths(src_root, ".mvt")
    if not fixtures:
        print(f"error: no tiles under {src_root}", file=sys.stderr)
        return 2
    profile = _profile(args.profile)
    out_root = Path(args.out)
    jobs = [
        (str(path), str(out_root / str(z) / str(x) / f"{y}.mlt"))
        for (z, x, y), path in fixtures.items()
    ]
    results = []
    workers = min(len(jobs), os.cpu_count() or 1)
    if workers > 1 and len(jobs) > 2:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                (src, pool.submit(_encode_one, src, dst, int(profile), args.tessellate))
                for src, dst in jobs
            ]
            for src, future in futures:
                try:
                    results.append(future.result())
                except Exception as e:  # noqa: BLE001 - name the failing tile
                    print(f"error: encoding {src} failed: {e}", file=sys.stderr)
                    return 2
    else:
        for src, dst in jobs:
            try:
                results.append(_encode_one(src, dst, int(profile), args.tessellate))
            except Exception as e:  # noqa: BLE001
                print(f"error: encoding {src} failed: {e}", file=sys.stderr)
                return 2
    total = 0
    for dst, size in sorted(results):
        print(f"{size:10d}  {dst}")
        total += size
    print(f"{total:10d}  total ({len(results)} tiles, {args.profile} profile)")
    _report({"tiles": len(results), "mlt_bytes": total, "profile": args.profile})
    return 0


def cmd_decode(args) -> int:
    root = Path(args.input)
    suffix = ".mlt" if args.format == "mlt" else ".mvt"
    paths = _tile_paths(root, suffix)
    if not paths:
        print(f"error: no {suffix} tiles under {root}", file=sys.stderr)
        return 2
    rows = 0
    tables = 0
    for (z, x, y), path in sorted(paths.items()):
        data = path.read_bytes()
        coord = TileCoord(z, x, y)
        try:
            tile = decode_tile(data, coord) if args.format == "mlt" else mvt_parse(data, coord)
        except ValueError as e:
            print(f"error: tile {z}/{x}/{y} failed to decode: {e}", file=sys.stderr)
            return 1
        tables += len(tile.tables)
        rows += sum(t.row_count for t in tile.tables)
        if args.out:
            dst = Path(args.out) / str(z) / str(x) / f"{y}.json"
            dst.parent.mkdir(parents=True, exist_ok=True)
            dst.write_text(corpus_mod.tile_to_json(tile))
    print(f"decoded {len(paths)} tiles: {tables} tables, {rows} features")
    _report({"tiles": len(paths), "tables": tables, "features": rows})
    return 0


def cmd_compare(args) -> int:
    mvt_paths = _tile_paths(Path(args.mvt), ".mvt")
    mlt_paths = _tile_paths(Path(args.mlt), ".mlt")
    if not mvt_paths or not mlt_paths:
        print("error: empty tile set", file=sys.stderr)
        return 2
    missing = sorted(set(mvt_paths) ^ set(mlt_paths))
    if missing:
        print(f"error: tile sets differ at {missing[:8]}", file=sys.stderr)
        return 2
    mvt_total = mlt_total = mvt_z = mlt_z = 0
    max_sr = 0.0
    max_sr_tile = None
    for key in sorted(mvt_paths):
        a = mvt_paths[key].read_bytes()
        b = mlt_paths[key].read_bytes()
        mvt_total += len(a)
        mlt_total += len(b)
        mvt_z += len(zlib.compress(a, DEFLATE_LEVEL))
        mlt_z += len(zlib.compress(b, DEFLATE_LEVEL))
        if b:
            sr = len(a) / len(b)
            if sr > max_sr:
                max_sr, max_sr_tile = sr, key
    sr = mvt_total / mlt_total if mlt_total else float("inf")
    sr_z = mvt_z / mlt_z if mlt_z else float("inf")
    print(f"{'':12}{'encoded':>12}{'deflate':>12}")
    print(f"{'mvt':12}{mvt_total:>12}{mvt_z:>12}")
    print(f"{'mlt':12}{mlt_total:>12}{mlt_z:>12}")
    print(f"size reduction: {sr:.2f}x encoded, {sr_z:.2f}x compressed")
    print(f"max per-tile reduction: {max_sr:.2f}x at {max_sr_tile}")
    _report(
        {
            "mvt_encoded": mvt_total,
            "mlt_encoded": mlt_total,
            "mvt_deflate": mvt_z,
            "mlt_deflate": mlt_z,
            "sr_encoded": f"{sr:.4f}",
            "sr_deflate": f"{sr_z:.4f}",
            "max_sr": f"{max_sr:.4f}",
        }
    )
    return 0


def cmd_bench_decode(args) -> int:
    root = Path(args.input)
    suffix = ".mlt" if args.format == "mlt" else ".mvt"
    paths = _tile_paths(root, suffix)
    if not paths:
        print(f"error: no {suffix} tiles under {root}", file=sys.stderr)
        return 2
    blobs = [(TileCoord(z, x, y), paths[(z, x, y)].read_bytes()) for z, x, y in sorted(paths)]

    if args.format == "mlt":

        def run():
            for _, data in blobs:
                load_vector_tables(data)

    else:

        def run():
            for coord, data in blobs:
                mvt_parse(data, coord)

    try:
        med, lo, hi = _median_timings(run, args.reps)
    except ValueError as e:
        print(f"error: decode failed during benchmark: {e}", file=sys.stderr)
        return 1
    total_bytes = sum(len(d) for _, d in blobs)
    print(
        f"{args.format} decode: {len(blobs)} tiles, {total_bytes} bytes: "
        f"median {med*1000:.1f} ms (min {lo*1000:.1f}, max {hi*1000:.1f}, {args.reps} reps)"
    )
    _report(
        {
            "format": args.format,
            "tiles": len(blobs),
            "bytes": total_bytes,
            "median_ms": f"{med*1000:.3f}",
            "min_ms": f"{lo*1000:.3f}",
            "max_ms": f"{hi*1000:.3f}",
        }
    )
    return 0


def load_suite(path: str | None) -> list:
    if path:
        text = Path(path).read_text()
    else:
        text = resources.files("coltile").joinpath("data/basic_filters.txt").read_text()
    return filters_mod.load_filter_suite(text)


def cmd_bench_filter(args) -> int:
    root = Path(args.input)
    paths = _tile_paths(root, ".mlt")
    if not paths:
        print(f"error: no .mlt tiles under {root}", file=sys.stderr)
        return 2
    try:
        suite = load_suite(args.suite)
    except (OSError, filters_mod.FilterError) as e:
        print(f"error: cannot load filter suite: {e}", file=sys.stderr)
        return 2
    tables = []
    for key in sorted(paths):
        try:
            tables.extend(load_vector_tables(paths[key].read_bytes()))
        except ValueError as e:
            z, x, y = key
            print(f"error: tile {z}/{x}/{y} failed to decode: {e}", file=sys.stderr)
            return 1

    # Correctness gate: no timing is reported unless both engines agree.
    pairs = []
    for table in tables:
        for expr in suite:
            plan = filters_mod.compile(expr, table)
            fast = filters_mod.evaluate(plan, table)
            slow = filters_mod.evaluate_tuple_at_a_time(expr, table)
            if fast != slow:
                print(
                    f"error: engines disagree on table {table.name!r}: {expr}",
                    file=sys.stderr,
                )
                return 1
            pairs.append((expr, plan, table))

    def run_vectorized():
        for expr, plan, table in pairs:
            filters_mod.evaluate(plan, table)

    def run_oracle():
        for expr, _, table in pairs:
            filters_mod.evaluate_tuple_at_a_time(expr, table)

    vec_med, vec_lo, vec_hi = _median_timings(run_vectorized, args.reps)
    orc_med, orc_lo, orc_hi = _median_timings(run_oracle, args.reps)
    speedup = orc_med / vec_med if vec_med else float("inf")
    rows = sum(t.row_count for t in tables)
    print(
        f"filters: {len(suite)} over {len(tables)} tables ({rows} rows), {args.reps} reps"
    )
    print(f"vectorized: median {vec_med*1000:.1f} ms (min {vec_lo*1000:.1f}, max {vec_hi*1000:.1f})")
    print(f"row-at-a-time: median {orc_med*1000:.1f} ms (min {orc_lo*1000:.1f}, max {orc_hi*1000:.1f})")
    print(f"speedup: {speedup:.1f}x")
    _report(
        {
            "filters": len(suite),
            "tables": len(tables),
            "rows": rows,
            "vectorized_ms": f"{vec_med*1000:.3f}",
            "oracle_ms": f"{orc_med*1000:.3f}",
            "speedup": f"{speedup:.4f}",
        }
    )
    return 0


def _parse_zooms(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition("-")
    lo_i = int(lo)
    hi_i = int(hi) if hi else lo_i
    if hi_i < lo_i:
        raise argparse.ArgumentTypeError(f"bad zoom range {text!r}")
    return lo_i, hi_i


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coltile", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    gen = sub.add_parser("gen-corpus", help="write a deterministic synthetic tile corpus")
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("--zooms", type=_parse_zooms, default=(0, 14), help="e.g. 0-14")
    gen.add_argument("--clustering", type=float, default=0.85)
    gen.set_defaults(func=cmd_gen_corpus)

    enc = sub.add_parser("encode", help="encode fixtures to .mlt tiles")
    enc.add_argument("--in", dest="input", required=True)
    enc.add_argument("--out", required=True)
    enc.add_argument("--profile", choices=("simple", "advanced"), default="simple")
    enc.add_argument("--tessellate", action="store_true")
    enc.set_defaults(func=cmd_encode)

    dec = sub.add_parser("decode", help="decode tiles, optionally writing .json fixtures")
    dec.add_argument("--in", dest="input", required=True)
    dec.add_argument("--format", choices=("mlt", "mvt"), required=True)
    dec.add_argument("--out")
    dec.set_defaults(func=cmd_decode)

    cmp_ = sub.add_parser("compare", help="size report: encoded and DEFLATE totals, SR, max SR")
    cmp_.add_argument("--mvt", required=True)
    cmp_.add_argument("--mlt", required=True)
    cmp_.set_defaults(func=cmd_compare)

    bde = sub.add_parser("bench-decode", help="time decoding to the in-memory form")
    bde.add_argument("--in", dest="input", required=True)
    bde.add_argument("--format", choices=("mlt", "mvt"), required=True)
    bde.add_argument("--reps", type=int, default=5)
    bde.set_defaults(func=cmd_bench_decode)

    bfi = sub.add_parser("bench-filter", help="time both filter engines; verifies equivalence first")
    bfi.add_argument("--in", dest="input", required=True)
    bfi.add_argument("--suite", help="filter suite file (default: bundled 35-filter suite)")
    bfi.add_argument("--reps", type=int, default=5)
    bfi.set_defaults(func=cmd_bench_filter)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
