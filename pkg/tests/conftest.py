"""Shared random-model generators for the test suite.

Everything generated here satisfies the model invariants (ring orientation,
sizes, coordinate ranges), so round-trip failures always point at a codec.
"""

from __future__ import annotations

import math
import random

from coltile.geometry import ring_contains_point, rings_conflict
from coltile.model import (
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

EXTENT = 4096


def star_ring(rng: random.Random, cx, cy, rmin, rmax, n, positive):
    """A simple (never self-intersecting) ring around (cx, cy)."""
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


def random_polygon_rings(rng: random.Random, max_holes: int = 3, center=None, radius=None):
    """Valid polygon rings: star outer plus 0..max_holes disjoint holes."""
    while True:
        cx, cy = center or (rng.randrange(300, EXTENT - 300), rng.randrange(300, EXTENT - 300))
        rad = radius or rng.randrange(40, 280)
        outer = star_ring(rng, cx, cy, 0.6 * rad, rad, rng.randrange(4, 16), True)
        if outer is None:
            continue
        rings = [outer]
        for _ in range(rng.randrange(0, max_holes + 1)):
            for _attempt in range(8):
                hr = rng.uniform(0.06, 0.13) * rad
                if hr < 3:
                    break
                hx = cx + int(rng.uniform(-0.22, 0.22) * rad)
                hy = cy + int(rng.uniform(-0.22, 0.22) * rad)
                hole = star_ring(rng, hx, hy, 0.6 * hr, hr, rng.randrange(4, 8), False)
                if hole is None:
                    continue
                if not all(ring_contains_point(outer, x, y) for x, y in hole):
                    continue
                if any(rings_conflict(hole, r) for r in rings):
                    continue
                # disjoint edges still allow nesting; reject that too
                if any(ring_contains_point(r, hole[0][0], hole[0][1]) for r in rings[1:]):
                    continue
                if any(ring_contains_point(hole, r[0][0], r[0][1]) for r in rings[1:]):
                    continue
                rings.append(hole)
                break
        return rings


def random_vertex(rng: random.Random, dims: int):
    v = [rng.randrange(-64, EXTENT + 64) for _ in range(2)]
    if dims == 3:
        v.append(rng.randrange(0, 9000))
    return tuple(v)


def random_line(rng: random.Random, dims: int):
    x, y = rng.randrange(EXTENT), rng.randrange(EXTENT)
    out = [(x, y)]
    while len(out) < rng.randrange(2, 9):
        x += rng.randrange(-60, 61)
        y += rng.randrange(-60, 61)
        if (x, y) != out[-1]:
            out.append((x, y))
    if dims == 3:
        return [(vx, vy, rng.randrange(0, 9000)) for vx, vy in out]
    return out


def random_geometry(rng: random.Random, kind: GeometryType, dims: int) -> Geometry:
    if kind == GeometryType.POINT:
        return Geometry.point(random_vertex(rng, dims), dims)
    if kind == GeometryType.MULTIPOINT:
        return Geometry.multi_point(
            [random_vertex(rng, dims) for _ in range(rng.randrange(1, 5))], dims
        )
    if kind == GeometryType.LINESTRING:
        return Geometry.line_string(random_line(rng, dims), dims)
    if kind == GeometryType.MULTILINESTRING:
        return Geometry.multi_line_string(
            [random_line(rng, dims) for _ in range(rng.randrange(1, 4))], dims
        )

    def rings3(rings):
        if dims == 2:
            return rings
        return [[(x, y, rng.randrange(0, 9000)) for x, y in ring] for ring in rings]

    if kind == GeometryType.POLYGON:
        return Geometry.polygon(rings3(random_polygon_rings(rng)), dims)
    return Geometry.multi_polygon(
        [rings3(random_polygon_rings(rng, max_holes=1)) for _ in range(rng.randrange(1, 4))], dims
    )


_SCALARS = list(ScalarType)


def random_scalar(rng: random.Random, stype: ScalarType):
    if stype == ScalarType.BOOLEAN:
        return rng.random() < 0.5
    if stype == ScalarType.INT32:
        return rng.randrange(-(2**31), 2**31)
    if stype == ScalarType.UINT32:
        return rng.randrange(2**32)
    if stype == ScalarType.INT64:
        return rng.randrange(-(2**63), 2**63)
    if stype == ScalarType.UINT64:
        return rng.randrange(2**64)
    if stype == ScalarType.FLOAT32:
        import struct

        return struct.unpack("<f", struct.pack("<f", rng.uniform(-1e6, 1e6)))[0]
    if stype == ScalarType.FLOAT64:
        return rng.uniform(-1e12, 1e12)
    return "".join(rng.choice("abcdefgh é中") for _ in range(rng.randrange(0, 9)))


def random_column(rng: random.Random, name: str, scope=AttributeScope.FEATURE) -> Column:
    roll = rng.random()
    if roll < 0.6:
        ctype = rng.choice(_SCALARS)
    elif roll < 0.8:
        ctype = ListType(rng.choice(_SCALARS))
    else:
        count = rng.randrange(1, 4)
        ctype = StructType(tuple((f"f{i}", rng.choice(_SCALARS)) for i in range(count)))
    return Column(name, ctype, nullable=rng.random() < 0.5, scope=scope)


def random_value(rng: random.Random, column: Column):
    if column.nullable and rng.random() < 0.25:
        return None
    ctype = column.type
    if isinstance(ctype, ScalarType):
        return random_scalar(rng, ctype)
    if isinstance(ctype, ListType):
        return tuple(random_scalar(rng, ctype.element) for _ in range(rng.randrange(0, 4)))
    return {name: random_scalar(rng, stype) for name, stype in ctype.fields}


def random_table(rng: random.Random, name: str, max_rows: int = 8, dims=None) -> FeatureTable:
    dims = dims or rng.choice((2, 2, 2, 3))
    rows = rng.randrange(0, max_rows + 1)
    kinds = [rng.choice(list(GeometryType)) for _ in range(rows)]
    geometries = tuple(random_geometry(rng, k, dims) for k in kinds)
    columns = tuple(
        random_column(rng, f"col{i}") for i in range(rng.randrange(0, 4))
    )
    if rng.random() < 0.3:
        columns += (random_column(rng, "per_vertex", scope=AttributeScope.VERTEX),)
    vertex_count = sum(g.vertex_count() for g in geometries)
    values = {}
    for column in columns:
        count = vertex_count if column.scope == AttributeScope.VERTEX else rows
        values[column.name] = tuple(random_value(rng, column) for _ in range(count))
    ids = rng.sample(range(1, 10 * max_rows + 10), rows)
    if rng.random() < 0.5:
        ids.sort()
    return FeatureTable(
        name=name,
        ids=tuple(ids),
        geometries=geometries,
        columns=columns,
        values=values,
        extent=EXTENT,
        dimensions=dims,
    )


def random_tile(rng: random.Random, max_tables: int = 3, max_rows: int = 8) -> Tile:
    z = rng.randrange(0, 15)
    n = 1 << z
    coord = TileCoord(z, rng.randrange(n), rng.randrange(n))
    tables = tuple(
        random_table(rng, f"table{i}", max_rows) for i in range(rng.randrange(0, max_tables + 1))
    )
    return Tile(coord, tables)
