"""Geometry topology streams, vertex buffers, Morton codes, and tessellation.

Topology decomposes a geometry column into Type/Geometries/Rings/Vertices
count streams over one interleaved vertex buffer per table.  The vertex
dictionary replaces the buffer with sorted, deduplicated Morton codes plus a
per-vertex offset stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import Geometry, GeometryType


class CorruptTopologyError(ValueError):
    """Topology streams are mutually inconsistent."""


@dataclass(frozen=True)
class VertexBufferPlain:
    """Interleaved coordinates: x1,y1[,z1],x2,y2[,z2],..."""

    coordinates: tuple[int, ...]


@dataclass(frozen=True)
class VertexDictionary:
    """Sorted unique Morton codes of the biased 2D vertices."""

    codes: tuple[int, ...]
    bias: int
    shift: int


@dataclass(frozen=True)
class TopologySet:
    """Count streams + vertex buffer describing a geometry column.

    geometries: parts per multi* feature (absent when no multi* occurs)
    rings:      rings per polygon (absent when no polygon occurs)
    vertices:   vertex count per linestring/ring (absent for point-only tables)
    vertex_offsets: per-vertex index into the dictionary (dictionary form only)
    """

    dimensions: int
    type_stream: tuple[GeometryType, ...]
    geometries: tuple[int, ...] | None
    rings: tuple[int, ...] | None
    vertices: tuple[int, ...] | None
    vertex_buffer: VertexBufferPlain | VertexDictionary
    vertex_offsets: tuple[int, ...] | None = None

    def vertex_ref_count(self) -> int:
        if self.vertex_offsets is not None:
            return len(self.vertex_offsets)
        dims = self.dimensions
        coords = self.vertex_buffer.coordinates
        return len(coords) // dims


def build_topology(geometries) -> TopologySet:
    """Decompose geometries into topology streams and a plain vertex buffer.

    All geometries must share dimensionality; the sequence must be non-empty.
    ``rebuild_geometries`` is the exact inverse.
    """
    geometries = tuple(geometries)
    if not geometries:
        raise ValueError("cannot build topology for an empty geometry sequence")
    dims = geometries[0].dimensions
    types: list[GeometryType] = []
    parts_stream: list[int] = []
    rings_stream: list[int] = []
    verts_stream: list[int] = []
    coords: list[int] = []
    any_multi = False
    any_polygon = False
    any_linework = False

    for g in geometries:
        if g.dimensions != dims:
            raise ValueError(f"mixed dimensions: {g.dimensions} vs {dims}")
        k = g.kind
        types.append(k)
        if k == GeometryType.POINT:
            coords.extend(g.parts)
        elif k == GeometryType.MULTIPOINT:
            any_multi = True
            parts_stream.append(len(g.parts))
            for v in g.parts:
                coords.extend(v)
        elif k == GeometryType.LINESTRING:
            any_linework = True
            verts_stream.append(len(g.parts))
            for v in g.parts:
                coords.extend(v)
        elif k == GeometryType.MULTILINESTRING:
            any_multi = True
            any_linework = True
            parts_stream.append(len(g.parts))
            for line in g.parts:
                verts_stream.append(len(line))
                for v in line:
                    coords.extend(v)
        elif k == GeometryType.POLYGON:
            any_polygon = True
            any_linework = True
            rings_stream.append(len(g.parts))
            for ring in g.parts:
                verts_stream.append(len(ring))
                for v in ring:
                    coords.extend(v)
        else:
            any_multi = True
            any_polygon = True
            any_linework = True
            parts_stream.append(len(g.parts))
            for poly in g.parts:
                rings_stream.append(len(poly))
                for ring in poly:
                    verts_stream.append(len(ring))
                    for v in ring:
                        coords.extend(v)

    return TopologySet(
        dimensions=dims,
        type_stream=tuple(types),
        geometries=tuple(parts_stream) if any_multi else None,
        rings=tuple(rings_stream) if any_polygon else None,
        vertices=tuple(verts_stream) if any_linework else None,
        vertex_buffer=VertexBufferPlain(tuple(coords)),
    )


def _materialize_vertices(topology: TopologySet) -> list[tuple]:
    dims = topology.dimensions
    buf = topology.vertex_buffer
    if isinstance(buf, VertexDictionary):
        if dims != 2:
            raise CorruptTopologyError("vertex dictionary is 2D only")
        if topology.vertex_offsets is None:
            raise CorruptTopologyError("vertex dictionary without offsets")
        unique = [morton_decode(c, buf.bias, buf.shift) for c in buf.codes]
        size = len(unique)
        try:
            return [unique[i] for i in topology.vertex_offsets]
        except IndexError:
            raise CorruptTopologyError(f"vertex offset out of range {size}") from None
    coords = buf.coordinates
    if len(coords) % dims:
        raise CorruptTopologyError(f"buffer length {len(coords)} not a multiple of {dims}")
    if topology.vertex_offsets is not None:
        unique = [tuple(coords[i : i + dims]) for i in range(0, len(coords), dims)]
        try:
            return [unique[i] for i in topology.vertex_offsets]
        except IndexError:
            raise CorruptTopologyError(f"vertex offset out of range {len(unique)}") from None
    return [tuple(coords[i : i + dims]) for i in range(0, len(coords), dims)]


class _Cursor:
    __slots__ = ("items", "pos", "name")

    def __init__(self, items, name: str):
        self.items = items if items is not None else ()
        self.pos = 0
        self.name = name

    def take(self):
        if self.pos >= len(self.items):
            raise CorruptTopologyError(f"{self.name} stream exhausted")
        item = self.items[self.pos]
        self.pos += 1
        return item

    def done(self) -> bool:
        return self.pos == len(self.items)


def rebuild_geometries(topology: TopologySet) -> tuple[Geometry, ...]:
    """Exact inverse of build_topology; raises CorruptTopologyError on any
    count/buffer inconsistency."""
    verts = _Cursor(_materialize_vertices(topology), "vertex buffer")
    parts = _Cursor(topology.geometries, "geometries")
    rings = _Cursor(topology.rings, "rings")
    counts = _Cursor(topology.vertices, "vertices")
    dims = topology.dimensions

    def take_run() -> tuple:
        n = counts.take()
        if n < 1:
            raise CorruptTopologyError(f"non-positive vertex count {n}")
        return tuple(verts.take() for _ in range(n))

    out: list[Geometry] = []
    for kind in topology.type_stream:
        if kind == GeometryType.POINT:
            out.append(Geometry(kind, verts.take(), dims))
        elif kind == GeometryType.MULTIPOINT:
            n = parts.take()
            out.append(Geometry(kind, tuple(verts.take() for _ in range(n)), dims))
        elif kind == GeometryType.LINESTRING:
            out.append(Geometry(kind, take_run(), dims))
        elif kind == GeometryType.MULTILINESTRING:
            n = parts.take()
            out.append(Geometry(kind, tuple(take_run() for _ in range(n)), dims))
        elif kind == GeometryType.POLYGON:
            r = rings.take()
            out.append(Geometry(kind, tuple(take_run() for _ in range(r)), dims))
        elif kind == GeometryType.MULTIPOLYGON:
            n = parts.take()
            polys = []
            for _ in range(n):
                r = rings.take()
                polys.append(tuple(take_run() for _ in range(r)))
            out.append(Geometry(kind, tuple(polys), dims))
        else:
            raise CorruptTopologyError(f"unknown geometry type code {kind}")
    for cursor in (verts, parts, rings, counts):
        if not cursor.done():
            raise CorruptTopologyError(f"{cursor.name} stream has trailing entries")
    return tuple(out)


# -- Morton (Z-order) codes ----------------------------------------------------
#
# x occupies the even bit positions (bit 0 = lowest x bit), y the odd ones.


def _part1by1(n: int) -> int:
    n &= 0xFFFFFFFF
    n = (n | (n << 16)) & 0x0000FFFF0000FFFF
    n = (n | (n << 8)) & 0x00FF00FF00FF00FF
    n = (n | (n << 4)) & 0x0F0F0F0F0F0F0F0F
    n = (n | (n << 2)) & 0x3333333333333333
    n = (n | (n << 1)) & 0x5555555555555555
    return n


def _compact1by1(n: int) -> int:
    n &= 0x5555555555555555
    n = (n | (n >> 1)) & 0x3333333333333333
    n = (n | (n >> 2)) & 0x0F0F0F0F0F0F0F0F
    n = (n | (n >> 4)) & 0x00FF00FF00FF00FF
    n = (n | (n >> 8)) & 0x0000FFFF0000FFFF
    n = (n | (n >> 16)) & 0x00000000FFFFFFFF
    return n


def morton_encode(x: int, y: int, bias: int = 0, shift: int = 32) -> int:
    vx = x + bias
    vy = y + bias
    limit = 1 << shift
    if not (0 <= vx < limit and 0 <= vy < limit):
        raise ValueError(f"biased vertex ({vx},{vy}) outside [0,2^{shift})")
    return _part1by1(vx) | (_part1by1(vy) << 1)


def morton_decode(code: int, bias: int = 0, shift: int = 32) -> tuple[int, int]:
    if not 0 <= code < 1 << (2 * shift):
        raise ValueError(f"code {code} outside [0,2^{2 * shift})")
    return _compact1by1(code) - bias, _compact1by1(code >> 1) - bias


def encode_vertex_dictionary(
    vertices, extent: int, buffer_margin: int = 0
) -> tuple[VertexDictionary, list[int]]:
    """Dedupe 2D vertices into sorted Morton codes plus per-vertex ranks.

    bias = buffer_margin; shift covers [0, extent + 2*margin).  Raises
    ValueError for 3D input or coordinates outside the margin window.
    """
    verts = list(vertices)
    if any(len(v) != 2 for v in verts):
        raise ValueError("vertex dictionary supports 2D vertices only")
    shift = max(1, math.ceil(math.log2(extent + 2 * buffer_margin)))
    if shift > 32:
        raise ValueError(f"grid of 2^{shift} per axis exceeds the 32-bit Morton domain")
    codes = [morton_encode(x, y, buffer_margin, shift) for x, y in verts]
    unique = sorted(set(codes))
    rank = {c: i for i, c in enumerate(unique)}
    offsets = [rank[c] for c in codes]
    return VertexDictionary(tuple(unique), buffer_margin, shift), offsets



# -- polygon tessellation -------------------------------------------------------
#
# Exact integer-arithmetic triangulation.  Holes are removed first by channel
# decomposition: two disjoint strictly-visible segments between the outer
# boundary and a hole split the region into two simple (pinch-free) cycles.
# Hole-free cycles are then ear-clipped with an exact ear test.  Every clip
# emits one triangle per removed vertex, so a boundary of n vertices with h
# holes always yields n + 2h - 2 triangles.


@dataclass
class Tessellation:
    indices: list[int]  # 3 per triangle, into the polygon's own vertex order
    clean: bool  # False when degenerate input forced a best-effort clip

    @property
    def triangle_count(self) -> int:
        return len(self.indices) // 3


def _orient(ax, ay, bx, by, cx, cy) -> int:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_seg(ax, ay, bx, by, px, py) -> bool:
    # p is collinear with a-b; is it within the bounding box?
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def _blocks(a: tuple, b: tuple, c: tuple, d: tuple) -> bool:
    """Does segment c-d obstruct segment a-b?  Touching at a shared endpoint
    is the only allowed contact."""
    o1 = _orient(*a, *b, *c)
    o2 = _orient(*a, *b, *d)
    o3 = _orient(*c, *d, *a)
    o4 = _orient(*c, *d, *b)
    if (o1 > 0) != (o2 > 0) and (o3 > 0) != (o4 > 0) and 0 not in (o1, o2, o3, o4):
        return True
    if o1 == 0 and o2 == 0:
        # Collinear: block on any overlap longer than a single shared point.
        axis = 0 if a[0] != b[0] or c[0] != d[0] else 1
        lo = max(min(a[axis], b[axis]), min(c[axis], d[axis]))
        hi = min(max(a[axis], b[axis]), max(c[axis], d[axis]))
        if lo > hi:
            return False
        if lo < hi:
            return True
        point = a if a[axis] == lo else b
        return not ((point == a or point == b) and (point == c or point == d))
    for o, seg, point in ((o1, (a, b), c), (o2, (a, b), d), (o3, (c, d), a), (o4, (c, d), b)):
        if o == 0 and _on_seg(*seg[0], *seg[1], *point):
            if not ((point == a or point == b) and (point == c or point == d)):
                return True
    return False


# Cycles are lists of (x, y, original_index).  The outer cycle is clockwise
# in standard axes (negative standard area); holes are counter-clockwise.


def _cycle_area2(cycle) -> int:
    total = 0
    px, py, _ = cycle[-1]
    for x, y, _ in cycle:
        total += px * y - x * py
        px, py = x, y
    return total


def _cycle_edges(cycles):
    for cycle in cycles:
        prev = cycle[-1]
        for cur in cycle:
            yield prev, cur
            prev = cur


def _point_in_cycle_x2(px2: int, py2: int, cycle) -> bool:
    """Exact parity test; the point is given in doubled coordinates."""
    inside = False
    px, py, _ = cycle[-1]
    for x, y, _ in cycle:
        ay, by = 2 * py, 2 * y
        if (ay > py2) != (by > py2):
            # x of the crossing vs px2:  (px2 - ax) * (by - ay) ? (bx - ax) * (py2 - ay)
            ax, bx = 2 * px, 2 * x
            lhs = (px2 - ax) * (by - ay)
            rhs = (bx - ax) * (py2 - ay)
            if (lhs < rhs) if by > ay else (lhs > rhs):
                inside = not inside
        px, py = x, y
    return inside


def _segment_clear(u, v, cycles) -> bool:
    """Open segment u-v touches no edge and passes through no vertex."""
    a = (u[0], u[1])
    b = (v[0], v[1])
    for p, q in _cycle_edges(cycles):
        if _blocks(a, b, (p[0], p[1]), (q[0], q[1])):
            return False
    for cycle in cycles:
        for x, y, _ in cycle:
            if (x, y) != a and (x, y) != b:
                if _orient(*a, *b, x, y) == 0 and _on_seg(*a, *b, x, y):
                    return False
    return True


def _strictly_visible(u, v, outer, holes) -> bool:
    if (u[0], u[1]) == (v[0], v[1]):
        return False
    cycles = [outer] + holes
    if not _segment_clear(u, v, cycles):
        return False
    mx2 = u[0] + v[0]
    my2 = u[1] + v[1]
    if not _point_in_cycle_x2(mx2, my2, outer):
        return False
    return not any(_point_in_cycle_x2(mx2, my2, hole) for hole in holes)


def _channel_split(outer, holes):
    """Remove one hole by cutting two visibility channels to the outer cycle.

    Returns (regionA, regionB) where each region is (cycle, holes), or None
    when no valid channel exists.
    """
    for hi, hole in enumerate(holes):
        rest = holes[:hi] + holes[hi + 1 :]
        pairs = []
        for oi, u in enumerate(outer):
            for vi, v in enumerate(hole):
                if _strictly_visible(u, v, outer, holes):
                    pairs.append((oi, vi))
        for first in range(len(pairs)):
            oi, vi = pairs[first]
            u, v = outer[oi], hole[vi]
            for second in range(first + 1, len(pairs)):
                oj, vj = pairs[second]
                if oi == oj or vi == vj:
                    continue
                u2, v2 = outer[oj], hole[vj]
                coords = {(u[0], u[1]), (v[0], v[1]), (u2[0], u2[1]), (v2[0], v2[1])}
                if len(coords) != 4:
                    continue
                if _blocks((u[0], u[1]), (v[0], v[1]), (u2[0], u2[1]), (v2[0], v2[1])):
                    continue
                # Cycle A: outer arc u..u2, channel to hole, hole arc v2..v.
                # Cycle B: outer arc u2..u, channel, hole arc v..v2.
                if oi < oj:
                    arc_a = outer[oi : oj + 1]
                    arc_b = outer[oj:] + outer[: oi + 1]
                else:
                    arc_a = outer[oi:] + outer[: oj + 1]
                    arc_b = outer[oj : oi + 1]
                if vj > vi:
                    harc_a = hole[vj:] + hole[: vi + 1]
                    harc_b = hole[vi : vj + 1]
                else:
                    harc_a = hole[vj : vi + 1]
                    harc_b = hole[vi:] + hole[: vj + 1]
                cycle_a = arc_a + harc_a
                cycle_b = arc_b + harc_b
                area_a = _cycle_area2(cycle_a)
                area_b = _cycle_area2(cycle_b)
                if area_a >= 0 or area_b >= 0:
                    continue
                if area_a + area_b != _cycle_area2(outer) + _cycle_area2(hole):
                    continue
                holes_a: list = []
                holes_b: list = []
                ok = True
                for other in rest:
                    x, y, _ = other[0]
                    in_a = _point_in_cycle_x2(2 * x, 2 * y, cycle_a)
                    in_b = _point_in_cycle_x2(2 * x, 2 * y, cycle_b)
                    if in_a == in_b:
                        ok = False
                        break
                    (holes_a if in_a else holes_b).append(other)
                if not ok:
                    continue
                return (cycle_a, holes_a), (cycle_b, holes_b)
    return None


def _exact_ear_at(cycle, i: int) -> bool:
    n = len(cycle)
    a = cycle[i - 1]
    b = cycle[i]
    c = cycle[(i + 1) % n]
    if _orient(a[0], a[1], b[0], b[1], c[0], c[1]) >= 0:
        return False
    # Empty-triangle test: no other vertex strictly inside or on the chord.
    for j, p in enumerate(cycle):
        if p is a or p is b or p is c:
            continue
        d1 = _orient(a[0], a[1], b[0], b[1], p[0], p[1])
        d2 = _orient(b[0], b[1], c[0], c[1], p[0], p[1])
        d3 = _orient(c[0], c[1], a[0], a[1], p[0], p[1])
        if d1 < 0 and d2 < 0 and d3 < 0:
            return False
        if d3 == 0 and _on_seg(c[0], c[1], a[0], a[1], p[0], p[1]):
            if (p[0], p[1]) not in ((a[0], a[1]), (c[0], c[1])):
                return False
    # The chord must not cross any non-incident edge.
    pa = (a[0], a[1])
    pc = (c[0], c[1])
    prev = cycle[-1]
    for cur in cycle:
        if not (prev is a or prev is b or cur is b or cur is c):
            if _blocks(pa, pc, (prev[0], prev[1]), (cur[0], cur[1])):
                return False
        prev = cur
    return True


def _clip_simple_cycle(cycle, indices: list[int]) -> bool:
    """Ear-clip one hole-free cycle; returns False when a forced clip was
    needed (degenerate input)."""
    cycle = list(cycle)
    clean = True
    while len(cycle) > 3:
        n = len(cycle)
        clipped = False
        # Zero-area corners (spikes, collinear runs) are always safe to drop.
        for i in range(n):
            a = cycle[i - 1]
            b = cycle[i]
            c = cycle[(i + 1) % n]
            if _orient(a[0], a[1], b[0], b[1], c[0], c[1]) == 0:
                indices.extend((a[2], b[2], c[2]))
                del cycle[i]
                clipped = True
                break
        if clipped:
            continue
        for i in range(n):
            if _exact_ear_at(cycle, i):
                a = cycle[i - 1]
                c = cycle[(i + 1) % n]
                indices.extend((a[2], cycle[i][2], c[2]))
                del cycle[i]
                clipped = True
                break
        if clipped:
            continue
        # Degenerate: clip the flattest corner and keep going.
        clean = False
        best = min(
            range(n),
            key=lambda i: abs(
                _orient(*cycle[i - 1][:2], *cycle[i][:2], *cycle[(i + 1) % n][:2])
            ),
        )
        indices.extend((cycle[best - 1][2], cycle[best][2], cycle[(best + 1) % n][2]))
        del cycle[best]
    indices.extend((cycle[0][2], cycle[1][2], cycle[2][2]))
    return clean


def _rings_disjoint(outer, holes) -> bool:
    """True when no two edges cross and every hole lies inside the outer
    ring (the tessellation contract)."""
    cycles = [outer] + holes
    all_edges = []
    for ci, cycle in enumerate(cycles):
        n = len(cycle)
        for i in range(n):
            p = cycle[i]
            q = cycle[(i + 1) % n]
            all_edges.append((ci, i, (p[0], p[1]), (q[0], q[1])))
    for e1 in range(len(all_edges)):
        ci, i, a, b = all_edges[e1]
        for e2 in range(e1 + 1, len(all_edges)):
            cj, j, c, d = all_edges[e2]
            if ci == cj:
                n = len(cycles[ci])
                if (i + 1) % n == j or (j + 1) % n == i:
                    continue
            if _blocks(a, b, c, d):
                return False
    for hole in holes:
        x, y, _ = hole[0]
        if not _point_in_cycle_x2(2 * x, 2 * y, outer):
            return False
    return True


def tessellate_polygon(rings) -> Tessellation:
    """Triangulate one polygon (exterior ring first, then holes).

    Returns indices into the polygon's concatenated ring vertex order; a
    boundary of n vertices with h holes yields exactly n + 2h - 2 triangles.
    Degenerate input falls back to forced clipping with ``clean=False``.
    """
    rings = [list(r) for r in rings]
    if not rings or len(rings[0]) < 3:
        raise ValueError("polygon needs an exterior ring with >= 3 vertices")

    base = 0
    cycles = []
    for ring in rings:
        cycle = [(v[0], v[1], base + i) for i, v in enumerate(ring)]
        base += len(ring)
        cycles.append(cycle)

    # Normalize: outer clockwise in standard axes, holes counter-clockwise.
    outer = cycles[0]
    if _cycle_area2(outer) > 0:
        outer = [outer[0]] + outer[:0:-1]
    holes = []
    for cycle in cycles[1:]:
        if len(cycle) < 3:
            continue
        if _cycle_area2(cycle) < 0:
            cycle = [cycle[0]] + cycle[:0:-1]
        holes.append(cycle)

    indices: list[int] = []
    # Self-intersecting or overlapping rings violate the contract; flag them
    # up front and continue best-effort rather than raising.
    clean = _rings_disjoint(outer, holes)
    regions = [(outer, holes)]
    while regions:
        cycle, cycle_holes = regions.pop()
        if not cycle_holes:
            clean &= _clip_simple_cycle(cycle, indices)
            continue
        split = _channel_split(cycle, cycle_holes)
        if split is None:
            # No clean channel (degenerate geometry): absorb the holes with
            # zero-width corridors to the nearest outer vertex, best effort.
            clean = False
            merged = list(cycle)
            for hole in cycle_holes:
                hx, hy, hidx = hole[0]
                j = min(
                    range(len(merged)),
                    key=lambda i: (merged[i][0] - hx) ** 2 + (merged[i][1] - hy) ** 2,
                )
                merged = (
                    merged[: j + 1]
                    + hole
                    + [hole[0], merged[j]]
                    + merged[j + 1 :]
                )
            clean &= _clip_simple_cycle(merged, indices)
            continue
        regions.extend(split)
    return Tessellation(indices, clean)


def ring_contains_point(ring, x: int, y: int) -> bool:
    """Exact strict-interior test (boundary points are outside)."""
    cycle = [(v[0], v[1], 0) for v in ring]
    return _point_in_cycle_x2(2 * x, 2 * y, cycle)


def rings_conflict(a, b) -> bool:
    """Do any two edges of the rings cross, overlap, or graze?"""
    ea = list(zip(a, list(a[1:]) + [a[0]]))
    eb = list(zip(b, list(b[1:]) + [b[0]]))
    for p, q in ea:
        pq = ((p[0], p[1]), (q[0], q[1]))
        for c, d in eb:
            if _blocks(pq[0], pq[1], (c[0], c[1]), (d[0], d[1])):
                return True
    return False
