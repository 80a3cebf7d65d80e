"""Logical data model: tiles, feature tables, geometries, attribute values.

Coordinates are signed integers in tile grid units.  Everything here is
treated as immutable after construction; validation reports diagnostics
instead of mutating or raising.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Union

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1

Vertex = tuple  # (x, y) or (x, y, z) integer tuple


class DegenerateRingError(ValueError):
    """Ring has fewer than 3 vertices."""


class SchemaError(ValueError):
    """Values or geometries do not conform to a table schema."""


class ScalarType(enum.Enum):
    BOOLEAN = "boolean"
    INT32 = "int32"
    UINT32 = "uint32"
    INT64 = "int64"
    UINT64 = "uint64"
    FLOAT32 = "float32"
    FLOAT64 = "float64"
    STRING = "string"

    @property
    def is_integer(self) -> bool:
        return self in _INT_TYPES

    @property
    def is_signed(self) -> bool:
        return self in (ScalarType.INT32, ScalarType.INT64)

    @property
    def is_float(self) -> bool:
        return self in (ScalarType.FLOAT32, ScalarType.FLOAT64)


_INT_TYPES = (ScalarType.INT32, ScalarType.UINT32, ScalarType.INT64, ScalarType.UINT64)

_INT_RANGE = {
    ScalarType.INT32: (INT32_MIN, INT32_MAX),
    ScalarType.UINT32: (0, 2**32 - 1),
    ScalarType.INT64: (-(2**63), 2**63 - 1),
    ScalarType.UINT64: (0, 2**64 - 1),
}


@dataclass(frozen=True)
class ListType:
    """List of scalars; nesting stops here."""

    element: ScalarType


@dataclass(frozen=True)
class StructType:
    """Flat struct of named scalar fields."""

    fields: tuple[tuple[str, ScalarType], ...]

    def __post_init__(self) -> None:
        names = [n for n, _ in self.fields]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate struct field names: {names}")


ColumnType = Union[ScalarType, ListType, StructType]


class AttributeScope(enum.Enum):
    FEATURE = "feature"
    VERTEX = "vertex"


class GeometryType(enum.IntEnum):
    POINT = 1
    LINESTRING = 2
    POLYGON = 3
    MULTIPOINT = 4
    MULTILINESTRING = 5
    MULTIPOLYGON = 6

    @property
    def is_multi(self) -> bool:
        return self >= GeometryType.MULTIPOINT

    @property
    def base(self) -> "GeometryType":
        """Point/LineString/Polygon class of this type (multis collapse)."""
        return GeometryType(self - 3) if self.is_multi else self


@dataclass(frozen=True)
class TileCoord:
    z: int
    x: int
    y: int

    def __post_init__(self) -> None:
        if not 0 <= self.z <= 30:
            raise ValueError(f"zoom {self.z} outside [0, 30]")
        n = 1 << self.z
        if not (0 <= self.x < n and 0 <= self.y < n):
            raise ValueError(f"tile ({self.x},{self.y}) outside zoom-{self.z} grid")


@dataclass(frozen=True)
class Geometry:
    """A geometry value: type tag plus nested tuples of integer vertices.

    The nesting of ``parts`` depends on ``kind``:

    * Point        -- single vertex tuple
    * LineString   -- tuple of vertices
    * Polygon      -- tuple of rings, each a tuple of vertices; ring 0 is the
      exterior.  Rings are stored open (no repeated closing vertex).
    * MultiPoint   -- tuple of vertices
    * MultiLineString -- tuple of linestrings
    * MultiPolygon -- tuple of polygons
    """

    kind: GeometryType
    parts: tuple
    dimensions: int = 2

    @staticmethod
    def point(vertex: Vertex, dimensions: int = 2) -> "Geometry":
        return Geometry(GeometryType.POINT, tuple(vertex), dimensions)

    @staticmethod
    def line_string(vertices, dimensions: int = 2) -> "Geometry":
        return Geometry(GeometryType.LINESTRING, tuple(tuple(v) for v in vertices), dimensions)

    @staticmethod
    def polygon(rings, dimensions: int = 2) -> "Geometry":
        return Geometry(
            GeometryType.POLYGON,
            tuple(tuple(tuple(v) for v in ring) for ring in rings),
            dimensions,
        )

    @staticmethod
    def multi_point(vertices, dimensions: int = 2) -> "Geometry":
        return Geometry(GeometryType.MULTIPOINT, tuple(tuple(v) for v in vertices), dimensions)

    @staticmethod
    def multi_line_string(lines, dimensions: int = 2) -> "Geometry":
        return Geometry(
            GeometryType.MULTILINESTRING,
            tuple(tuple(tuple(v) for v in line) for line in lines),
            dimensions,
        )

    @staticmethod
    def multi_polygon(polygons, dimensions: int = 2) -> "Geometry":
        return Geometry(
            GeometryType.MULTIPOLYGON,
            tuple(tuple(tuple(tuple(v) for v in ring) for ring in poly) for poly in polygons),
            dimensions,
        )

    def vertices(self) -> Iterator[Vertex]:
        """All vertices in storage order."""
        k = self.kind
        if k == GeometryType.POINT:
            yield self.parts
        elif k in (GeometryType.LINESTRING, GeometryType.MULTIPOINT):
            yield from self.parts
        elif k in (GeometryType.POLYGON, GeometryType.MULTILINESTRING):
            for run in self.parts:
                yield from run
        else:
            for poly in self.parts:
                for ring in poly:
                    yield from ring

    def vertex_count(self) -> int:
        return sum(1 for _ in self.vertices())


@dataclass(frozen=True)
class Column:
    """Attribute column declaration."""

    name: str
    type: ColumnType
    nullable: bool = False
    scope: AttributeScope = AttributeScope.FEATURE


@dataclass(frozen=True)
class FeatureTable:
    """A thematic layer: schema plus columnar rows.

    ``values`` maps column name to one value per row (feature scope) or one
    value per vertex (vertex scope).  Null is ``None`` and only legal in
    nullable columns.
    """

    name: str
    ids: tuple[int, ...]
    geometries: tuple[Geometry, ...]
    columns: tuple[Column, ...] = ()
    values: dict = field(default_factory=dict)
    extent: int = 4096
    dimensions: int = 2
    id_synthetic: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "geometries", tuple(self.geometries))
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "values", {k: tuple(v) for k, v in self.values.items()})

    @property
    def row_count(self) -> int:
        return len(self.ids)

    def total_vertex_count(self) -> int:
        return sum(g.vertex_count() for g in self.geometries)

    def column(self, name: str) -> Column:
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(name)


@dataclass(frozen=True)
class Tile:
    coord: TileCoord
    tables: tuple[FeatureTable, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tables", tuple(self.tables))
        names = [t.name for t in self.tables]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate table names in tile: {names}")


def ring_twice_area(ring) -> int:
    """Twice the signed ring area as an exact integer (internal fast path)."""
    if len(ring) < 3:
        raise DegenerateRingError(f"ring needs >= 3 vertices, got {len(ring)}")
    total = 0
    px, py = ring[-1][0], ring[-1][1]
    for v in ring:
        x, y = v[0], v[1]
        total += x * py - px * y
        px, py = x, y
    return total


def ring_signed_area(ring) -> Fraction:
    """Signed area of an implicitly closed ring, in grid units squared.

    Exterior rings of this model have positive sign; reversing a ring negates
    the result exactly.  Raises DegenerateRingError for rings with fewer than
    3 vertices.
    """
    return Fraction(ring_twice_area(ring), 2)


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding: rule id, row (or None for table-level), detail."""

    rule: str
    row: int | None
    detail: str


def _check_scalar(value, stype: ScalarType) -> bool:
    if stype == ScalarType.BOOLEAN:
        return isinstance(value, bool)
    if stype.is_integer:
        if isinstance(value, bool) or not isinstance(value, int):
            return False
        lo, hi = _INT_RANGE[stype]
        return lo <= value <= hi
    if stype.is_float:
        return isinstance(value, float)
    return isinstance(value, str)


def _check_value(value, ctype: ColumnType) -> bool:
    if isinstance(ctype, ScalarType):
        return _check_scalar(value, ctype)
    if isinstance(ctype, ListType):
        return isinstance(value, (list, tuple)) and all(
            _check_scalar(v, ctype.element) for v in value
        )
    return (
        isinstance(value, dict)
        and set(value) == {n for n, _ in ctype.fields}
        and all(_check_scalar(value[n], t) for n, t in ctype.fields)
    )


def _validate_geometry(g: Geometry, row: int, dimensions: int, out: list[Diagnostic]) -> None:
    if g.dimensions != dimensions:
        out.append(
            Diagnostic("dimension-mismatch", row, f"geometry is {g.dimensions}D in a {dimensions}D table")
        )
    for v in g.vertices():
        if len(v) != g.dimensions:
            out.append(Diagnostic("vertex-arity", row, f"vertex {v} has {len(v)} components"))
            return
        if not all(INT32_MIN <= c <= INT32_MAX for c in v):
            out.append(Diagnostic("coord-range", row, f"vertex {v} outside int32"))
            return
    k = g.kind
    if k == GeometryType.MULTIPOINT and not g.parts:
        out.append(Diagnostic("geometry-count", row, "empty multipoint"))
    if k in (GeometryType.LINESTRING, GeometryType.MULTILINESTRING):
        lines = (g.parts,) if k == GeometryType.LINESTRING else g.parts
        if k == GeometryType.MULTILINESTRING and not lines:
            out.append(Diagnostic("geometry-count", row, "empty multilinestring"))
        for line in lines:
            if len(line) < 2:
                out.append(Diagnostic("line-size", row, f"linestring with {len(line)} vertices"))
    if k in (GeometryType.POLYGON, GeometryType.MULTIPOLYGON):
        polys = (g.parts,) if k == GeometryType.POLYGON else g.parts
        if k == GeometryType.MULTIPOLYGON and not polys:
            out.append(Diagnostic("geometry-count", row, "empty multipolygon"))
        for poly in polys:
            if not poly:
                out.append(Diagnostic("ring-count", row, "polygon without rings"))
                continue
            for ri, ring in enumerate(poly):
                if len(ring) < 3:
                    out.append(Diagnostic("ring-size", row, f"ring {ri} has {len(ring)} vertices"))
                    continue
                if ring[0] == ring[-1]:
                    out.append(Diagnostic("ring-closure", row, f"ring {ri} repeats its closing vertex"))
                    continue
                area2 = ring_twice_area(ring)
                if ri == 0 and area2 <= 0:
                    out.append(Diagnostic("ring-orientation", row, f"exterior ring has area {area2 / 2}"))
                elif ri > 0 and area2 >= 0:
                    out.append(Diagnostic("ring-orientation", row, f"interior ring {ri} has area {area2 / 2}"))


def validate_table(table: FeatureTable) -> list[Diagnostic]:
    """Check every table and geometry invariant; empty list means valid.

    Pure and idempotent: the same table always yields the same diagnostics.
    """
    out: list[Diagnostic] = []
    rows = len(table.ids)

    if table.extent <= 0 or table.extent & (table.extent - 1):
        out.append(Diagnostic("extent", None, f"extent {table.extent} is not a power of two"))
    if table.dimensions not in (2, 3):
        out.append(Diagnostic("dimensions", None, f"dimensions {table.dimensions} not 2 or 3"))

    if len(table.geometries) != rows:
        out.append(
            Diagnostic("geometry-count", None, f"{len(table.geometries)} geometries for {rows} ids")
        )

    seen: dict[int, int] = {}
    for row, fid in enumerate(table.ids):
        if fid in seen:
            out.append(Diagnostic("duplicate-id", row, f"id {fid} at rows {seen[fid]},{row}"))
        else:
            seen[fid] = row
        if not 0 <= fid <= 2**64 - 1:
            out.append(Diagnostic("id-range", row, f"id {fid} outside uint64"))

    for row, g in enumerate(table.geometries[:rows]):
        _validate_geometry(g, row, table.dimensions, out)

    declared = {c.name for c in table.columns}
    for name in table.values:
        if name not in declared:
            out.append(Diagnostic("column-unknown", None, f"values for undeclared column {name!r}"))

    vertex_total = table.total_vertex_count()
    for col in table.columns:
        vals = table.values.get(col.name)
        if vals is None:
            out.append(Diagnostic("column-missing", None, f"no values for column {col.name!r}"))
            continue
        expected = vertex_total if col.scope == AttributeScope.VERTEX else rows
        if len(vals) != expected:
            out.append(
                Diagnostic(
                    "column-length",
                    None,
                    f"column {col.name!r} has {len(vals)} values, expected {expected}",
                )
            )
            continue
        for row, v in enumerate(vals):
            if v is None:
                if not col.nullable:
                    out.append(Diagnostic("null-in-non-nullable", row, f"column {col.name!r}"))
            elif not _check_value(v, col.type):
                out.append(
                    Diagnostic("type-mismatch", row, f"column {col.name!r}: {v!r} is not {col.type}")
                )
    return out
