"""Deterministic synthetic tile corpus plus JSON tile fixtures.

The generator walks a fixed zoom path toward one world point and emits, per
zoom level, one tile of themed feature tables (places, transportation,
buildings, water, pois) with clustered coordinates, skewed string
attributes, and monotone ids.  The same spec and seed always produce
byte-identical output.

Only MVT-expressible content is generated so both codecs carry identical
logical data in benchmarks.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path

from .geometry import ring_contains_point, rings_conflict
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
)

# world point the zoom path dives into
_CENTER_FX = 0.5227
_CENTER_FY = 0.3614


@dataclass(frozen=True)
class AttrSpec:
    name: str
    type: ScalarType
    choices: tuple = ()  # weighted string pool; empty means generated
    cardinality: int = 0  # distinct generated values (strings/ints)
    null_rate: float = 0.0
    int_range: tuple = (0, 10)


@dataclass(frozen=True)
class TableTemplate:
    name: str
    geometry_mix: tuple  # ((GeometryType, weight), ...)
    count_range: tuple  # features per tile (min, max)
    attrs: tuple  # AttrSpec, ...
    min_zoom: int = 0
    vertex_range: tuple = (4, 12)  # per linestring / ring
    hole_rate: float = 0.0


@dataclass(frozen=True)
class CorpusSpec:
    seed: int = 1
    zoom_min: int = 0
    zoom_max: int = 14
    clustering: float = 0.85  # 0 uniform .. 1 tight clusters
    extent: int = 4096
    tables: tuple = ()

    def with_defaults(self) -> "CorpusSpec":
        if self.tables:
            return self
        return CorpusSpec(
            self.seed, self.zoom_min, self.zoom_max, self.clustering, self.extent, default_tables()
        )


def default_tables() -> tuple:
    return (
        TableTemplate(
            name="place",
            geometry_mix=((GeometryType.POINT, 9), (GeometryType.MULTIPOINT, 1)),
            count_range=(30, 70),
            attrs=(
                AttrSpec("class", ScalarType.STRING, choices=("city", "town", "village", "hamlet", "suburb")),
                AttrSpec("name", ScalarType.STRING, cardinality=4000, null_rate=0.15),
                AttrSpec("rank", ScalarType.INT64, int_range=(1, 10)),
                AttrSpec("capital", ScalarType.BOOLEAN, null_rate=0.8),
            ),
        ),
        TableTemplate(
            name="transportation",
            geometry_mix=((GeometryType.LINESTRING, 8), (GeometryType.MULTILINESTRING, 1)),
            count_range=(90, 180),
            vertex_range=(4, 18),
            attrs=(
                AttrSpec(
                    "class",
                    ScalarType.STRING,
                    choices=(
                        "motorway", "trunk", "primary", "secondary", "tertiary",
                        "minor", "service", "path", "rail",
                    ),
                ),
                AttrSpec("brunnel", ScalarType.STRING, choices=("bridge", "tunnel", "ford"), null_rate=0.85),
                AttrSpec("oneway", ScalarType.INT64, int_range=(0, 1)),
                AttrSpec("layer", ScalarType.INT64, int_range=(0, 2)),
                AttrSpec("surface", ScalarType.STRING, choices=("paved", "unpaved", "asphalt", "gravel"), null_rate=0.4),
            ),
        ),
        TableTemplate(
            name="building",
            geometry_mix=((GeometryType.POLYGON, 12), (GeometryType.MULTIPOLYGON, 1)),
            count_range=(60, 140),
            vertex_range=(4, 8),
            min_zoom=12,
            attrs=(
                AttrSpec("class", ScalarType.STRING, choices=("residential", "commercial", "industrial", "shed")),
                AttrSpec("levels", ScalarType.INT64, int_range=(1, 8)),
            ),
        ),
        TableTemplate(
            name="water",
            geometry_mix=((GeometryType.POLYGON, 9), (GeometryType.MULTIPOLYGON, 1)),
            count_range=(15, 45),
            vertex_range=(6, 16),
            hole_rate=0.25,
            attrs=(
                AttrSpec("class", ScalarType.STRING, choices=("lake", "river", "pond", "swimming_pool")),
                AttrSpec("intermittent", ScalarType.BOOLEAN),
            ),
        ),
        TableTemplate(
            name="poi",
            geometry_mix=((GeometryType.POINT, 1),),
            count_range=(40, 120),
            min_zoom=10,
            attrs=(
                AttrSpec(
                    "class",
                    ScalarType.STRING,
                    choices=("shop", "restaurant", "cafe", "bank", "school", "park", "hospital"),
                ),
                AttrSpec("subclass", ScalarType.STRING, cardinality=40),
                AttrSpec("name", ScalarType.STRING, cardinality=6000, null_rate=0.35),
                AttrSpec("rank", ScalarType.INT64, int_range=(1, 30), null_rate=0.2),
            ),
        ),
    )


def zoom_path(spec: CorpusSpec) -> list[TileCoord]:
    coords = []
    for zoom in range(spec.zoom_min, spec.zoom_max + 1):
        n = 1 << zoom
        coords.append(TileCoord(zoom, min(int(_CENTER_FX * n), n - 1), min(int(_CENTER_FY * n), n - 1)))
    return coords


# -- geometry builders -------------------------------------------------------------


def _cluster_centers(rng: random.Random, extent: int, count: int) -> list[tuple]:
    return [(rng.randrange(extent), rng.randrange(extent)) for _ in range(count)]


def _spread(spec: CorpusSpec) -> int:
    return max(16, int(spec.extent * (0.02 + 0.48 * (1.0 - spec.clustering))))


def _clamp(v: int, extent: int) -> int:
    return max(-64, min(extent + 63, v))


def _point(rng, centers, spread, extent) -> tuple:
    cx, cy = rng.choice(centers)
    return (
        _clamp(cx + rng.randrange(-spread, spread + 1), extent),
        _clamp(cy + rng.randrange(-spread, spread + 1), extent),
    )


def _walk(rng, centers, spread, extent, steps: int) -> list[tuple]:
    x, y = _point(rng, centers, spread, extent)
    out = [(x, y)]
    step = max(4, spread // 6)
    while len(out) < steps:
        x = _clamp(x + rng.randrange(-step, step + 1), extent)
        y = _clamp(y + rng.randrange(-step, step + 1), extent)
        if (x, y) != out[-1]:
            out.append((x, y))
    return out


def _star_ring(rng, cx, cy, rmin, rmax, n, positive: bool):
    angles = [2 * math.pi * (i + 0.75 * rng.random()) / n for i in range(n)]
    pts = []
    for a in angles:
        r = rng.uniform(rmin, rmax)
        pts.append((cx + int(round(r * math.cos(a))), cy + int(round(r * math.sin(a)))))
    ring = []
    for p in pts:
        if not ring or ring[-1] != p:
            ring.append(p)
    if len(ring) > 1 and ring[0] == ring[-1]:
        ring.pop()
    if len(ring) < 3 or ring_twice_area(ring) == 0:
        return None
    if (ring_twice_area(ring) > 0) != positive:
        ring = [ring[0]] + ring[:0:-1]
    return ring


def _polygon_rings(rng, centers, spread, extent, template: TableTemplate):
    for _ in range(24):
        cx, cy = _point(rng, centers, spread, extent)
        radius = rng.randrange(10, max(14, min(220, spread)))
        n = rng.randrange(*template.vertex_range)
        if n < 4:
            n = 4
        outer = _star_ring(rng, cx, cy, 0.6 * radius, radius, n, True)
        if outer is None:
            continue
        if any(not (-64 <= x <= extent + 63 and -64 <= y <= extent + 63) for x, y in outer):
            continue
        rings = [outer]
        if radius >= 40 and rng.random() < template.hole_rate:
            for _ in range(rng.randrange(1, 3)):
                hole = _make_hole(rng, cx, cy, radius, rings)
                if hole is not None:
                    rings.append(hole)
        return rings
    return None


def _make_hole(rng, cx, cy, radius, rings):
    for _ in range(8):
        hr = rng.uniform(0.06, 0.14) * radius
        if hr < 3:
            return None
        hx = cx + int(rng.uniform(-0.22, 0.22) * radius)
        hy = cy + int(rng.uniform(-0.22, 0.22) * radius)
        hole = _star_ring(rng, hx, hy, 0.6 * hr, hr, rng.randrange(4, 7), False)
        if hole is None:
            continue
        if not all(ring_contains_point(rings[0], x, y) for x, y in hole):
            continue
        if any(rings_conflict(hole, ring) for ring in rings):
            continue
        # disjoint edges still allow one hole nested in another
        if any(ring_contains_point(r, hole[0][0], hole[0][1]) for r in rings[1:]):
            continue
        if any(ring_contains_point(hole, r[0][0], r[0][1]) for r in rings[1:]):
            continue
        return hole
    return None


def _make_geometry(rng, kind: GeometryType, centers, spread, extent, template):
    if kind == GeometryType.POINT:
        return Geometry.point(_point(rng, centers, spread, extent))
    if kind == GeometryType.MULTIPOINT:
        count = rng.randrange(2, 5)
        return Geometry.multi_point([_point(rng, centers, spread, extent) for _ in range(count)])
    if kind == GeometryType.LINESTRING:
        return Geometry.line_string(_walk(rng, centers, spread, extent, rng.randrange(*template.vertex_range)))
    if kind == GeometryType.MULTILINESTRING:
        count = rng.randrange(2, 4)
        return Geometry.multi_line_string(
            [_walk(rng, centers, spread, extent, rng.randrange(*template.vertex_range)) for _ in range(count)]
        )
    if kind == GeometryType.POLYGON:
        rings = _polygon_rings(rng, centers, spread, extent, template)
        return Geometry.polygon(rings) if rings else None
    count = rng.randrange(2, 4)
    polys = []
    for _ in range(count):
        rings = _polygon_rings(rng, centers, spread, extent, template)
        if rings:
            polys.append(rings)
    return Geometry.multi_polygon(polys) if len(polys) >= 2 else None


def _attr_value(rng, attr: AttrSpec):
    if attr.null_rate and rng.random() < attr.null_rate:
        return None
    if attr.type == ScalarType.STRING:
        if attr.choices:
            # Zipf-flavored skew toward the first entries
            pool = attr.choices
            idx = min(int(rng.expovariate(1.1)), len(pool) - 1)
            return pool[idx]
        return f"{attr.name}_{rng.randrange(max(attr.cardinality, 1))}"
    if attr.type == ScalarType.BOOLEAN:
        return rng.random() < 0.5
    lo, hi = attr.int_range
    return rng.randrange(lo, hi + 1)


def generate_table(spec: CorpusSpec, template: TableTemplate, coord: TileCoord) -> FeatureTable | None:
    if coord.z < template.min_zoom:
        return None
    rng = random.Random(f"{spec.seed}:{coord.z}/{coord.x}/{coord.y}:{template.name}")
    count = rng.randrange(*template.count_range)
    centers = _cluster_centers(rng, spec.extent, max(3, min(12, 3 + count // 20)))
    spread = _spread(spec)
    kinds = [k for k, w in template.geometry_mix for _ in range(w)]
    geometries = []
    while len(geometries) < count:
        kind = rng.choice(kinds)
        geom = _make_geometry(rng, kind, centers, spread, spec.extent, template)
        if geom is not None:
            geometries.append(geom)
    columns = tuple(
        Column(a.name, a.type, nullable=a.null_rate > 0, scope=AttributeScope.FEATURE)
        for a in template.attrs
    )
    values = {
        a.name: tuple(_attr_value(rng, a) for _ in range(count)) for a in template.attrs
    }
    return FeatureTable(
        name=template.name,
        ids=tuple(range(1, count + 1)),
        geometries=tuple(geometries),
        columns=columns,
        values=values,
        extent=spec.extent,
    )


def generate_tile(spec: CorpusSpec, coord: TileCoord) -> Tile:
    spec = spec.with_defaults()
    tables = []
    for template in spec.tables:
        table = generate_table(spec, template, coord)
        if table is not None:
            tables.append(table)
    return Tile(coord, tuple(tables))


def generate_corpus(spec: CorpusSpec, out_dir) -> list:
    """Write z/x/y.mvt plus z/x/y.json fixtures; returns the coordinates."""
    from .mvt import mvt_write

    spec = spec.with_defaults()
    out = Path(out_dir)
    coords = zoom_path(spec)
    for coord in coords:
        tile = generate_tile(spec, coord)
        tile_dir = out / str(coord.z) / str(coord.x)
        tile_dir.mkdir(parents=True, exist_ok=True)
        (tile_dir / f"{coord.y}.mvt").write_bytes(mvt_write(tile))
        (tile_dir / f"{coord.y}.json").write_text(tile_to_json(tile))
    manifest = {
        "seed": spec.seed,
        "zoom_min": spec.zoom_min,
        "zoom_max": spec.zoom_max,
        "clustering": spec.clustering,
        "extent": spec.extent,
        "tiles": [[c.z, c.x, c.y] for c in coords],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return coords


# -- JSON tile fixtures --------------------------------------------------------------


def _type_to_json(ctype) -> str:
    if isinstance(ctype, ScalarType):
        return ctype.value
    if isinstance(ctype, ListType):
        return f"list<{ctype.element.value}>"
    fields = ",".join(f"{n}:{t.value}" for n, t in ctype.fields)
    return f"struct<{fields}>"


def _type_from_json(text: str):
    if text.startswith("list<"):
        return ListType(ScalarType(text[5:-1]))
    if text.startswith("struct<"):
        fields = []
        for part in text[7:-1].split(","):
            name, _, stype = part.partition(":")
            fields.append((name, ScalarType(stype)))
        return StructType(tuple(fields))
    return ScalarType(text)


def _geometry_to_json(geom: Geometry) -> dict:
    def nest(parts):
        if isinstance(parts, tuple) and parts and isinstance(parts[0], int):
            return list(parts)
        return [nest(p) for p in parts]

    return {"kind": geom.kind.name, "dims": geom.dimensions, "parts": nest(geom.parts)}


def _geometry_from_json(obj: dict) -> Geometry:
    def nest(parts):
        if parts and isinstance(parts[0], int):
            return tuple(parts)
        return tuple(nest(p) for p in parts)

    return Geometry(GeometryType[obj["kind"]], nest(obj["parts"]), obj.get("dims", 2))


def tile_to_json(tile: Tile) -> str:
    doc = {
        "coord": [tile.coord.z, tile.coord.x, tile.coord.y],
        "tables": [
            {
                "name": t.name,
                "extent": t.extent,
                "dimensions": t.dimensions,
                "columns": [
                    {
                        "name": c.name,
                        "type": _type_to_json(c.type),
                        "nullable": c.nullable,
                        "scope": c.scope.value,
                    }
                    for c in t.columns
                ],
                "ids": list(t.ids),
                "geometries": [_geometry_to_json(g) for g in t.geometries],
                "values": {
                    name: [list(v) if isinstance(v, tuple) else v for v in vals]
                    for name, vals in t.values.items()
                },
            }
            for t in tile.tables
        ],
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def tile_from_json(text: str) -> Tile:
    doc = json.loads(text)
    z, x, y = doc["coord"]
    tables = []
    for td in doc["tables"]:
        columns = tuple(
            Column(
                cd["name"],
                _type_from_json(cd["type"]),
                nullable=cd["nullable"],
                scope=AttributeScope(cd["scope"]),
            )
            for cd in td["columns"]
        )
        values = {}
        for column in columns:
            raw = td["values"][column.name]
            if isinstance(column.type, ListType):
                values[column.name] = tuple(tuple(v) if v is not None else None for v in raw)
            else:
                values[column.name] = tuple(raw)
        tables.append(
            FeatureTable(
                name=td["name"],
                ids=tuple(td["ids"]),
                geometries=tuple(_geometry_from_json(g) for g in td["geometries"]),
                columns=columns,
                values=values,
                extent=td["extent"],
                dimensions=td["dimensions"],
            )
        )
    return Tile(TileCoord(z, x, y), tuple(tables))
