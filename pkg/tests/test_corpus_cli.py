import hashlib
import random
from pathlib import Path

import pytest

from coltile.cli import main
from coltile.corpus import (
    CorpusSpec,
    TableTemplate,
    generate_corpus,
    generate_tile,
    tile_from_json,
    tile_to_json,
    zoom_path,
)
from coltile.model import GeometryType, validate_table
from coltile.mvt import mvt_parse

from conftest import random_tile


def tree_digest(root: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest.update(str(path.relative_to(root)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def test_corpus_deterministic(tmp_path):
    spec = CorpusSpec(seed=1, zoom_min=0, zoom_max=4)
    a = tmp_path / "a"
    b = tmp_path / "b"
    coords = generate_corpus(spec, a)
    generate_corpus(spec, b)
    assert len(coords) == 5
    assert tree_digest(a) == tree_digest(b)


def test_corpus_seed_changes_output(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    generate_corpus(CorpusSpec(seed=1, zoom_min=0, zoom_max=1), a)
    generate_corpus(CorpusSpec(seed=2, zoom_min=0, zoom_max=1), b)
    assert tree_digest(a) != tree_digest(b)


def test_corpus_tables_validate():
    spec = CorpusSpec(seed=3, zoom_min=0, zoom_max=6)
    for coord in zoom_path(spec):
        tile = generate_tile(spec, coord)
        for table in tile.tables:
            assert validate_table(table) == []


def test_clustering_changes_coordinate_statistics():
    from coltile.encodings import EncodingProfile
    from coltile.storage import encode_tile

    tight = CorpusSpec(seed=1, zoom_min=5, zoom_max=5, clustering=1.0)
    loose = CorpusSpec(seed=1, zoom_min=5, zoom_max=5, clustering=0.0)

    def nn_median(spec):
        tile = generate_tile(spec, zoom_path(spec)[0])
        pts = [v[:2] for t in tile.tables for g in t.geometries for v in g.vertices()]
        pts = pts[:250]
        dists = []
        for i, (x, y) in enumerate(pts):
            best = min(
                (px - x) ** 2 + (py - y) ** 2 for j, (px, py) in enumerate(pts) if j != i
            )
            dists.append(best)
        dists.sort()
        return dists[len(dists) // 2]

    # tight clusters put vertices far closer together, which is what makes
    # the Morton dictionary pay off
    assert nn_median(tight) * 4 < nn_median(loose)

    def advanced_size(spec):
        tile = generate_tile(spec, zoom_path(spec)[0])
        return len(encode_tile(tile, EncodingProfile.ADVANCED))

    assert advanced_size(tight) < advanced_size(loose)


def test_zero_feature_template_yields_valid_empty_tile(tmp_path):
    template = TableTemplate(
        name="empty",
        geometry_mix=((GeometryType.POINT, 1),),
        count_range=(0, 1),
        attrs=(),
    )
    spec = CorpusSpec(seed=1, zoom_min=0, zoom_max=0, tables=(template,))
    out = tmp_path / "c"
    generate_corpus(spec, out)
    data = (out / "0" / "0" / "0.mvt").read_bytes()
    tile = mvt_parse(data)
    assert all(t.row_count == 0 for t in tile.tables) or tile.tables == ()


def test_json_fixture_round_trip():
    rng = random.Random(6)
    for _ in range(25):
        tile = random_tile(rng)
        assert tile_from_json(tile_to_json(tile)) == tile


# -- CLI ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    assert main(["gen-corpus", "--out", str(root / "mvt"), "--seed", "1", "--zooms", "0-2"]) == 0
    assert (
        main(
            [
                "encode",
                "--in",
                str(root / "mvt"),
                "--out",
                str(root / "mlt"),
                "--profile",
                "advanced",
                "--tessellate",
            ]
        )
        == 0
    )
    return root


def test_cli_compare(small_corpus, capsys):
    assert main(["compare", "--mvt", str(small_corpus / "mvt"), "--mlt", str(small_corpus / "mlt")]) == 0
    out = capsys.readouterr().out
    assert "report: sr_encoded=" in out
    assert "report: max_sr=" in out


def test_cli_decode(small_corpus, tmp_path):
    assert main(["decode", "--in", str(small_corpus / "mlt"), "--format", "mlt", "--out", str(tmp_path / "j")]) == 0
    assert (tmp_path / "j" / "0" / "0" / "0.json").exists()


def test_cli_bench_decode(small_corpus, capsys):
    assert main(["bench-decode", "--in", str(small_corpus / "mlt"), "--format", "mlt", "--reps", "2"]) == 0
    assert "report: median_ms=" in capsys.readouterr().out


def test_cli_bench_filter(small_corpus, capsys):
    assert main(["bench-filter", "--in", str(small_corpus / "mlt"), "--reps", "2"]) == 0
    out = capsys.readouterr().out
    assert "report: speedup=" in out


def test_cli_missing_input_is_exit_2(tmp_path):
    assert main(["encode", "--in", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2
    assert main(["bench-decode", "--in", str(tmp_path / "nope"), "--format", "mlt"]) == 2


def test_cli_mismatched_tilesets(small_corpus, tmp_path, capsys):
    partial = tmp_path / "partial"
    (partial / "0" / "0").mkdir(parents=True)
    src = small_corpus / "mlt" / "0" / "0" / "0.mlt"
    (partial / "0" / "0" / "0.mlt").write_bytes(src.read_bytes())
    assert main(["compare", "--mvt", str(small_corpus / "mvt"), "--mlt", str(partial)]) == 2
    assert "differ" in capsys.readouterr().err


def test_cli_usage_error():
    assert main(["no-such-verb"]) == 2


def test_cli_corrupt_tile_is_exit_1(tmp_path, capsys):
    bad = tmp_path / "0" / "0"
    bad.mkdir(parents=True)
    (bad / "0.mlt").write_bytes(b"MLT1\x01\x00 broken")
    assert main(["decode", "--in", str(tmp_path), "--format", "mlt"]) == 1
    assert "0/0/0" in capsys.readouterr().err
    assert main(["bench-decode", "--in", str(tmp_path), "--format", "mlt", "--reps", "1"]) == 1
    assert main(["bench-filter", "--in", str(tmp_path), "--reps", "1"]) == 1


def test_cli_encode_reads_mvt_fallback(small_corpus, tmp_path):
    # strip the .json fixtures; encode must fall back to parsing .mvt
    mvt_only = tmp_path / "mvtonly"
    for path in (small_corpus / "mvt").rglob("*.mvt"):
        rel = path.relative_to(small_corpus / "mvt")
        dst = mvt_only / rel
        dst.parent.mkdir(parents=True, exist_ok=True)
        dst.write_bytes(path.read_bytes())
    assert main(["encode", "--in", str(mvt_only), "--out", str(tmp_path / "o"), "--profile", "simple"]) == 0
    assert (tmp_path / "o" / "0" / "0" / "0.mlt").exists()
