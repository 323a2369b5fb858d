"""2D polygon primitives for collision modeling.

Conventions used throughout the package:

* polygons are stored with counter-clockwise (CCW) vertex order,
* the interior of a CCW convex polygon is the left side of every edge,
  so ``signed_side(edge, p) >= 0`` for interior points,
* points exactly on an edge count as inside (collision constraints are
  non-strict inequalities).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


AREA_EPS = 1e-9


class GeometryError(ValueError):
    pass


class SelfIntersecting(GeometryError):
    """Input polygon has crossing edges."""


class Degenerate(GeometryError):
    """Input polygon has (near-)zero area."""


class EmptyResult(GeometryError):
    """An offset operation annihilated the region."""


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True)
class Segment:
    a: Point2
    b: Point2

    def __post_init__(self):
        if self.a.x == self.b.x and self.a.y == self.b.y:
            raise GeometryError("degenerate segment: a == b")

    def direction(self) -> tuple[float, float]:
        return (self.b.x - self.a.x, self.b.y - self.a.y)


def signed_side(seg: Segment, p: Point2) -> float:
    """Cross product ``l x (p - a)`` with l = b - a.

    Positive means p lies left of the directed segment a -> b; the
    magnitude is twice the area of the triangle (a, b, p).
    """
    lx, ly = seg.direction()
    return lx * (p.y - seg.a.y) - ly * (p.x - seg.a.x)


def _shoelace(vertices: list[Point2]) -> float:
    """Signed area; positive for CCW order."""
    s = 0.0
    n = len(vertices)
    for i in range(n):
        a = vertices[i]
        b = vertices[(i + 1) % n]
        s += a.x * b.y - b.x * a.y
    return 0.5 * s


def _as_points(vertices) -> list[Point2]:
    out = []
    for v in vertices:
        if isinstance(v, Point2):
            out.append(v)
        else:
            out.append(Point2(float(v[0]), float(v[1])))
    return out


@dataclass(frozen=True)
class ConvexPolygon:
    vertices: tuple[Point2, ...]

    def __post_init__(self):
        verts = tuple(_as_points(self.vertices))
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise GeometryError("polygon needs >= 3 vertices")
        area = _shoelace(list(verts))
        if area < AREA_EPS:
            if area <= -AREA_EPS:
                raise GeometryError("polygon must be CCW oriented")
            raise Degenerate(f"polygon area {area:g} below tolerance")
        n = len(verts)
        for i in range(n):
            cross = signed_side(Segment(verts[i], verts[(i + 1) % n]), verts[(i + 2) % n])
            if cross < -AREA_EPS:
                raise GeometryError("polygon is not convex")

    def edges(self) -> list[Segment]:
        n = len(self.vertices)
        return [Segment(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]

    def area(self) -> float:
        return _shoelace(list(self.vertices))

    def bbox(self) -> tuple[float, float, float, float]:
        xs = [v.x for v in self.vertices]
        ys = [v.y for v in self.vertices]
        return (min(xs), min(ys), max(xs), max(ys))

    def translated(self, dx: float, dy: float) -> "ConvexPolygon":
        return ConvexPolygon(tuple(Point2(v.x + dx, v.y + dy) for v in self.vertices))


@dataclass(frozen=True)
class PolygonSet:
    parts: tuple[ConvexPolygon, ...]

    def __post_init__(self):
        parts = tuple(self.parts)
        object.__setattr__(self, "parts", parts)
        if not parts:
            raise GeometryError("empty polygon set")

    def area(self) -> float:
        return sum(p.area() for p in self.parts)

    def bbox(self) -> tuple[float, float, float, float]:
        boxes = [p.bbox() for p in self.parts]
        return (
            min(b[0] for b in boxes),
            min(b[1] for b in boxes),
            max(b[2] for b in boxes),
            max(b[3] for b in boxes),
        )

    def contains(self, p: Point2) -> bool:
        return any(point_in_convex(part, p) for part in self.parts)


def point_in_convex(poly: ConvexPolygon, p: Point2) -> bool:
    """True iff p is inside or on the boundary of the CCW polygon."""
    return all(signed_side(e, p) >= 0.0 for e in poly.edges())


def point_in_simple(vertices: list[Point2], p: Point2) -> bool:
    """Ray-casting containment test for an arbitrary simple polygon.

    Boundary points may report either way; used as an oracle away from
    boundaries and for non-convex environment polygons.
    """
    n = len(vertices)
    inside = False
    j = n - 1
    for i in range(n):
        vi, vj = vertices[i], vertices[j]
        if (vi.y > p.y) != (vj.y > p.y):
            x_cross = (vj.x - vi.x) * (p.y - vi.y) / (vj.y - vi.y) + vi.x
            if p.x < x_cross:
                inside = not inside
        j = i
    return inside


def point_segment_distance(p: Point2, seg: Segment) -> float:
    ax, ay = seg.a.x, seg.a.y
    dx, dy = seg.direction()
    t = ((p.x - ax) * dx + (p.y - ay) * dy) / (dx * dx + dy * dy)
    t = min(1.0, max(0.0, t))
    cx, cy = ax + t * dx, ay + t * dy
    return math.hypot(p.x - cx, p.y - cy)


def _segments_properly_intersect(p1, p2, q1, q2) -> bool:
    """Proper crossing test (shared endpoints do not count)."""
    d1 = signed_side(Segment(q1, q2), p1)
    d2 = signed_side(Segment(q1, q2), p2)
    d3 = signed_side(Segment(p1, p2), q1)
    d4 = signed_side(Segment(p1, p2), q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and all(
        abs(d) > 1e-12 for d in (d1, d2, d3, d4)
    )


def _check_simple(vertices: list[Point2]) -> None:
    n = len(vertices)
    for i in range(n):
        a1, a2 = vertices[i], vertices[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b1, b2 = vertices[j], vertices[(j + 1) % n]
            if _segments_properly_intersect(a1, a2, b1, b2):
                raise SelfIntersecting(f"edges {i} and {j} cross")


def _ensure_ccw(vertices: list[Point2]) -> list[Point2]:
    return vertices if _shoelace(vertices) >= 0 else list(reversed(vertices))


def _triangulate_ear_clip(vertices: list[Point2]) -> list[tuple[int, int, int]]:
    """Ear clipping of a simple CCW polygon; returns vertex-index triangles."""
    idx = list(range(len(vertices)))
    triangles = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(vertices) ** 2:
            raise GeometryError("ear clipping failed to converge")
        n = len(idx)
        clipped = False
        for k in range(n):
            i0, i1, i2 = idx[(k - 1) % n], idx[k], idx[(k + 1) % n]
            a, b, c = vertices[i0], vertices[i1], vertices[i2]
            cross = signed_side(Segment(a, b), c)
            if cross <= AREA_EPS:
                continue  # reflex or collinear corner
            ear = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = vertices[j]
                if (
                    signed_side(Segment(a, b), p) >= -1e-12
                    and signed_side(Segment(b, c), p) >= -1e-12
                    and signed_side(Segment(c, a), p) >= -1e-12
                ):
                    ear = False
                    break
            if ear:
                triangles.append((i0, i1, i2))
                idx.pop(k)
                clipped = True
                break
        if not clipped:
            raise GeometryError("no ear found; polygon may be degenerate")
    triangles.append((idx[0], idx[1], idx[2]))
    return triangles


def _is_convex_cycle(vertices: list[Point2]) -> bool:
    n = len(vertices)
    for i in range(n):
        c = signed_side(Segment(vertices[i], vertices[(i + 1) % n]), vertices[(i + 2) % n])
        if c < -AREA_EPS:
            return False
    return True


def _drop_collinear(vertices: list[Point2]) -> list[Point2]:
    out = []
    n = len(vertices)
    for i in range(n):
        a, b, c = vertices[(i - 1) % n], vertices[i], vertices[(i + 1) % n]
        if abs(signed_side(Segment(a, b), c)) > AREA_EPS:
            out.append(b)
    return out if len(out) >= 3 else vertices


def convex_decompose(poly) -> PolygonSet:
    """Split a simple polygon into convex parts.

    Ear-clipping triangulation followed by greedy merging of parts across
    shared diagonals whenever the union stays convex (Hertel-Mehlhorn
    style).  Deterministic: merge candidates are processed in sorted
    order until a fixpoint.
    """
    vertices = _as_points(poly)
    if len(vertices) < 3:
        raise GeometryError("polygon needs >= 3 vertices")
    _check_simple(vertices)
    vertices = _ensure_ccw(vertices)
    area = _shoelace(vertices)
    if area < AREA_EPS:
        raise Degenerate(f"polygon area {area:g} below tolerance")

    parts: list[list[int]] = [list(tri) for tri in _triangulate_ear_clip(vertices)]

    def merged_cycle(pa: list[int], pb: list[int]) -> list[int] | None:
        shared = set(pa) & set(pb)
        if len(shared) != 2:
            return None
        na, nb = len(pa), len(pb)
        for i in range(na):
            u, v = pa[i], pa[(i + 1) % na]
            if u in shared and v in shared:
                # pb must traverse the shared diagonal the opposite way
                jv = pb.index(v)
                if pb[(jv + 1) % nb] != u:
                    return None
                # replace pa's edge u -> v with pb's chain from u to v
                chain = []
                k = (pb.index(u) + 1) % nb
                while pb[k] != v:
                    chain.append(pb[k])
                    k = (k + 1) % nb
                return pa[: i + 1] + chain + pa[i + 1 :]
        return None

    changed = True
    while changed:
        changed = False
        for i in range(len(parts)):
            for j in range(i + 1, len(parts)):
                cycle = merged_cycle(parts[i], parts[j])
                if cycle is None:
                    continue
                pts = [vertices[k] for k in cycle]
                if _is_convex_cycle(pts):
                    parts[i] = cycle
                    parts.pop(j)
                    changed = True
                    break
            if changed:
                break

    out = []
    for cycle in parts:
        pts = _drop_collinear([vertices[k] for k in cycle])
        out.append(ConvexPolygon(tuple(pts)))
    return PolygonSet(tuple(out))


def offset_simple_polygon(poly, delta: float) -> list[Point2]:
    """Offset every edge of a simple CCW polygon by ``delta`` along its
    outward normal (negative delta shrinks) and re-intersect neighbors.

    Raises EmptyResult when the offset collapses the region: flipped
    orientation, self-intersection, or a vertex ending up closer than
    ``|delta|`` to an original edge when shrinking.
    """
    vertices = _ensure_ccw(_as_points(poly))
    n = len(vertices)
    lines = []  # (point-on-line, direction)
    for i in range(n):
        a, b = vertices[i], vertices[(i + 1) % n]
        dx, dy = b.x - a.x, b.y - a.y
        norm = math.hypot(dx, dy)
        # outward normal of a CCW edge points right of the direction
        nx, ny = dy / norm, -dx / norm
        lines.append((Point2(a.x + delta * nx, a.y + delta * ny), (dx, dy)))

    new_vertices = []
    for i in range(n):
        (p1, d1) = lines[(i - 1) % n]
        (p2, d2) = lines[i]
        denom = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(denom) < 1e-12:
            raise EmptyResult("parallel adjacent offset edges")
        t = ((p2.x - p1.x) * d2[1] - (p2.y - p1.y) * d2[0]) / denom
        new_vertices.append(Point2(p1.x + t * d1[0], p1.y + t * d1[1]))

    if _shoelace(new_vertices) < AREA_EPS:
        raise EmptyResult("offset collapsed the polygon")
    try:
        _check_simple(new_vertices)
    except SelfIntersecting as exc:
        raise EmptyResult("offset produced a self-intersection") from exc
    if delta < 0:
        edges = [Segment(vertices[i], vertices[(i + 1) % n]) for i in range(n)]
        margin = -delta - 1e-6
        for v in new_vertices:
            if min(point_segment_distance(v, e) for e in edges) < margin:
                raise EmptyResult("offset vertex too close to original boundary")
            if not point_in_simple(vertices, v):
                raise EmptyResult("offset vertex left the polygon")
    return new_vertices


def deflate(poly: PolygonSet, r: float) -> PolygonSet:
    """Shrink every part inward by r (edge offset).

    For a single-part set this is the exact inward offset.  Multi-part
    sets are deflated part-wise, which is conservative: interior seam
    edges shrink too, so the result is a subset of the true deflation.
    """
    if r < 0:
        raise GeometryError("deflation radius must be >= 0")
    if r == 0.0:
        return poly
    parts = []
    for part in poly.parts:
        parts.append(ConvexPolygon(tuple(offset_simple_polygon(part.vertices, -r))))
    return PolygonSet(tuple(parts))


def inflate(poly: ConvexPolygon, r: float) -> ConvexPolygon:
    """Outer polygonal approximation of the Minkowski sum with a disk.

    Edges shift outward by r; each corner arc is replaced by its chord's
    tangent line at the arc midpoint, adding two vertices per original
    vertex.  The result contains the exact disk sum.
    """
    if r < 0:
        raise GeometryError("inflation radius must be >= 0")
    if r == 0.0:
        return poly
    verts = list(poly.vertices)
    n = len(verts)
    normals = []
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        dx, dy = b.x - a.x, b.y - a.y
        norm = math.hypot(dx, dy)
        normals.append((dy / norm, -dx / norm))

    def line_intersection(p1, d1, p2, d2):
        denom = d1[0] * d2[1] - d1[1] * d2[0]
        if abs(denom) < 1e-14:
            return None
        t = ((p2[0] - p1[0]) * d2[1] - (p2[1] - p1[1]) * d2[0]) / denom
        return (p1[0] + t * d1[0], p1[1] + t * d1[1])

    out = []
    for i in range(n):
        v = verts[i]
        n_prev = normals[(i - 1) % n]
        n_next = normals[i]
        mx, my = n_prev[0] + n_next[0], n_prev[1] + n_next[1]
        m_norm = math.hypot(mx, my)
        if m_norm < 1e-12:
            raise GeometryError("degenerate corner in inflate")
        mx, my = mx / m_norm, my / m_norm
        tangent_pt = (v.x + r * mx, v.y + r * my)
        tangent_dir = (-my, mx)
        ap = verts[(i - 1) % n]
        prev_pt = (ap.x + r * n_prev[0], ap.y + r * n_prev[1])
        prev_dir = (v.x - ap.x, v.y - ap.y)
        bn = verts[(i + 1) % n]
        next_pt = (v.x + r * n_next[0], v.y + r * n_next[1])
        next_dir = (bn.x - v.x, bn.y - v.y)
        q1 = line_intersection(prev_pt, prev_dir, tangent_pt, tangent_dir)
        q2 = line_intersection(tangent_pt, tangent_dir, next_pt, next_dir)
        for q in (q1, q2):
            if q is not None:
                out.append(Point2(q[0], q[1]))
    cleaned = _drop_collinear(out)
    return ConvexPolygon(tuple(cleaned))
