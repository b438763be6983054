"""Graded conforming triangulations of the truncated channel with obstacle.

The mesher is a batched Delaunay-refinement scheme: boundary polylines are
pre-split against a graded size field, interior points are seeded on a hex
lattice, and the point set is then refined (encroached-segment splitting plus
circumcenter insertion for low-quality or oversized triangles) until every
fluid triangle meets the minimum-angle bound and the local size targets.
Boundary subsegments are kept Gabriel (empty diametral disks), which makes
them Delaunay edges, so the triangulation conforms to the domain boundary
without a constrained-Delaunay kernel.

Symmetric node sets are produced by meshing a half (or quarter) domain and
mirror-merging, so the requested mirror invariances hold exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import GeometryError, InputError, MeshFailure
from .geometry import (
    DomainSpec,
    Rotation,
    Translation,
    obstacle_polygon,
    rotation_ring_fits,
    rotation_ring_polygon,
    rotation_ring_radius,
    validate_state,
)

SIZE_FLOOR = 1e-4        # hard floor for local refinement
MIN_ANGLE_DEG = 20.0     # acceptance bound on the smallest triangle angle
_REFINE_ANGLE_DEG = 20.8  # refinement drives angles above this
_MAX_ROUNDS = 200
_GROWTH = 0.35           # size-field growth rate away from graded boundaries
_SEED_FACTOR = 0.8       # hex seed pitch relative to target_h


class BoundaryTag(IntEnum):
    WALL = 0
    INFLOW = 1
    OUTFLOW = 2
    OBSTACLE = 3


_INTERNAL = 4    # symmetry-interface marker, consumed by the mirror merge
_CONSTRAINT = 5  # interior constraint edges (band cut lines, rotation ring);
#                  they shape the triangulation but are not boundary edges


@dataclass(frozen=True)
class Mesh:
    """Immutable triangulation with tagged boundary edges.

    nodes          : (n, 2) float array
    triangles      : (m, 3) int array, counterclockwise
    boundary_edges : (k, 2) int array of node pairs
    boundary_tags  : (k,) int array of BoundaryTag values
    min_angle      : smallest interior angle over all triangles, degrees
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    min_angle: float
    spec: DomainSpec | None = None
    target_h: float | None = None
    grading: float | None = None

    def __post_init__(self):
        for name in ("nodes", "triangles", "boundary_edges", "boundary_tags"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.nodes[self.triangles[:, k]] for k in range(3))
        return 0.5 * np.abs(_cross2(b - a, c - a))

    def total_area(self) -> float:
        return float(np.sum(self.triangle_areas()))


def _cross2(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def triangle_min_angles(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Smallest interior angle of each triangle, in degrees."""
    a, b, c = (nodes[triangles[:, k]] for k in range(3))
    la = np.linalg.norm(b - c, axis=1)
    lb = np.linalg.norm(c - a, axis=1)
    lc = np.linalg.norm(a - b, axis=1)
    angles = np.empty((triangles.shape[0], 3))
    for i, (opp, e1, e2) in enumerate(((la, lb, lc), (lb, lc, la), (lc, la, lb))):
        cosv = (e1**2 + e2**2 - opp**2) / (2.0 * e1 * e2)
        angles[:, i] = np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0)))
    return angles.min(axis=1)


def _circumcenters(nodes, triangles):
    a, b, c = (nodes[triangles[:, k]] for k in range(3))
    ab, ac = b - a, c - a
    d = 2.0 * _cross2(ab, ac)
    ab2 = np.sum(ab * ab, axis=1)
    ac2 = np.sum(ac * ac, axis=1)
    ux = (ac[:, 1] * ab2 - ab[:, 1] * ac2) / d
    uy = (ab[:, 0] * ac2 - ac[:, 0] * ab2) / d
    centers = a + np.stack([ux, uy], axis=1)
    radii = np.linalg.norm(centers - a, axis=1)
    return centers, radii


def _point_in_convex_poly(pts, poly, tol=1e-12):
    """Inside test for a counterclockwise convex polygon, boundary counts inside."""
    inside = np.ones(pts.shape[0], dtype=bool)
    n = poly.shape[0]
    for k in range(n):
        a = poly[k]
        b = poly[(k + 1) % n]
        cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        inside &= cross >= -tol
    return inside


def _poly_boundary_distance(pts, poly):
    """Distance from each point to the polygon boundary (closed polyline)."""
    n = poly.shape[0]
    dmin = np.full(pts.shape[0], np.inf)
    for k in range(n):
        a = poly[k]
        b = poly[(k + 1) % n]
        ab = b - a
        denom = float(ab @ ab)
        t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
        proj = a + t[:, None] * ab
        dmin = np.minimum(dmin, np.linalg.norm(pts - proj, axis=1))
    return dmin


class _SizeField:
    """Graded local edge-length target.

    target_h away from boundaries, grading*target_h at the obstacle and the
    walls, linear growth in between, and at least four layers across a thin
    obstacle/wall gap.
    """

    def __init__(self, spec: DomainSpec, target_h: float, grading: float):
        self.poly = obstacle_polygon(spec.state, spec.d)
        self.L = spec.L
        self.target_h = target_h
        self.hb = grading * target_h

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        d_obs = _poly_boundary_distance(pts, self.poly)
        d_wall = self.L - np.abs(pts[:, 1])
        s = np.minimum(
            self.target_h,
            np.minimum(self.hb + _GROWTH * d_obs, self.hb + _GROWTH * d_wall),
        )
        gap = np.maximum((d_obs + d_wall) / 4.0, SIZE_FLOOR)
        s = np.minimum(s, gap)
        return np.maximum(s, SIZE_FLOOR)


class _Pslg:
    """Planar straight-line input for the refiner: points, tagged segments and
    a fluid-region classifier."""

    def __init__(self, points, segments, tags, inside_fn, size_fn):
        self.points = [np.asarray(p, dtype=float) for p in points]
        self.segments = list(segments)
        self.tags = list(tags)
        self.inside = inside_fn
        self.size = size_fn


def _presplit_segments(pslg: _Pslg) -> None:
    """Recursively split every input segment until subsegments respect the
    local size field (midpoint rule)."""
    out_segs, out_tags = [], []
    for (i, j), tag in zip(pslg.segments, pslg.tags):
        stack = [(i, j)]
        while stack:
            a, b = stack.pop()
            pa, pb = pslg.points[a], pslg.points[b]
            mid = 0.5 * (pa + pb)
            length = float(np.linalg.norm(pb - pa))
            s = float(pslg.size(mid[None, :])[0])
            if length > s and length / 2.0 >= SIZE_FLOOR:
                m = len(pslg.points)
                pslg.points.append(mid)
                stack.append((m, b))
                stack.append((a, m))
            else:
                out_segs.append((a, b))
                out_tags.append(tag)
    pslg.segments = out_segs
    pslg.tags = out_tags


def _hex_seeds(bounds, pitch, keep_fn):
    """Deterministic hex-lattice interior points inside `bounds`."""
    x0, x1, y0, y1 = bounds
    dy = pitch * math.sqrt(3.0) / 2.0
    rows = int(math.floor((y1 - y0) / dy)) + 1
    pts = []
    for r in range(rows):
        y = y0 + r * dy
        if y >= y1:
            break
        off = 0.5 * pitch if r % 2 else 0.0
        xs = np.arange(x0 + off, x1, pitch)
        if xs.size:
            pts.append(np.stack([xs, np.full(xs.size, y)], axis=1))
    if not pts:
        return np.zeros((0, 2))
    pts = np.concatenate(pts, axis=0)
    return pts[keep_fn(pts)]


def _refine(pslg: _Pslg):
    """Run batched Delaunay refinement; returns (points, fluid_triangles,
    segments, tags)."""
    pts = np.array(pslg.points, dtype=float)
    segs = np.array(pslg.segments, dtype=np.int64)
    tags = np.array(pslg.tags, dtype=np.int64)

    for _ in range(_MAX_ROUNDS):
        tri = Delaunay(pts)
        simp = tri.simplices
        a, b, c = (pts[simp[:, k]] for k in range(3))
        signed = 0.5 * _cross2(b - a, c - a)
        flip = signed < 0
        if np.any(flip):
            simp = simp.copy()
            simp[flip, 1], simp[flip, 2] = simp[flip, 2], simp[flip, 1]
        centroids = (a + b + c) / 3.0
        fluid = pslg.inside(centroids) & (np.abs(signed) > 1e-16)

        tree = cKDTree(pts)
        mids = 0.5 * (pts[segs[:, 0]] + pts[segs[:, 1]])
        radii = 0.5 * np.linalg.norm(pts[segs[:, 0]] - pts[segs[:, 1]], axis=1)

        # encroached subsegments: any third point strictly inside the
        # diametral disk
        encroached = np.zeros(segs.shape[0], dtype=bool)
        hits = tree.query_ball_point(mids, radii * (1.0 - 1e-12))
        for k, lst in enumerate(hits):
            i, j = segs[k]
            for idx in lst:
                if idx != i and idx != j:
                    encroached[k] = True
                    break

        if np.any(encroached):
            pts, segs, tags = _split_segments(pts, segs, tags, np.where(encroached)[0])
            continue

        # quality / size pass over fluid triangles
        fl = np.where(fluid)[0]
        if fl.size == 0:
            raise MeshFailure("no fluid triangles produced")
        angles = triangle_min_angles(pts, simp[fl])
        centers, rads = _circumcenters(pts, simp[fl])
        svals = np.minimum(
            np.minimum.reduce([pslg.size(pts[simp[fl, k]]) for k in range(3)]),
            pslg.size(centroids[fl]),
        )
        bad = (angles < _REFINE_ANGLE_DEG) | (rads > 0.5 * svals)
        if not np.any(bad):
            return pts, simp[fl], segs, tags

        cand = centers[bad]
        cand_r = rads[bad]
        bad_tris = simp[fl][bad]

        # candidates that encroach a subsegment get diverted to segment splits
        split_set = set()
        cand_ok = np.ones(cand.shape[0], dtype=bool)
        ctree = cKDTree(cand)
        for k in range(segs.shape[0]):
            lst = ctree.query_ball_point(mids[k], radii[k] * (1.0 - 1e-12))
            if lst:
                split_set.add(k)
                cand_ok[lst] = False

        # candidates outside the domain fall back to a structural split
        inside_cand = pslg.inside(cand)
        seg_keys = {_edge_key(i, j, pts.shape[0]): k for k, (i, j) in enumerate(segs)}
        extra_pts = []
        for k in np.where(cand_ok & ~inside_cand)[0]:
            cand_ok[k] = False
            t = bad_tris[k]
            edges = [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
            lens = [np.linalg.norm(pts[i] - pts[j]) for i, j in edges]
            order = np.argsort(lens)[::-1]
            handled = False
            for e in order:
                i, j = edges[e]
                kk = seg_keys.get(_edge_key(i, j, pts.shape[0]))
                if kk is not None:
                    split_set.add(kk)
                    handled = True
                    break
            if not handled:
                i, j = edges[order[0]]
                extra_pts.append(0.5 * (pts[i] + pts[j]))

        new_pts = _thin_candidates(cand[cand_ok], cand_r[cand_ok])
        if extra_pts:
            new_pts = (
                np.concatenate([new_pts, np.array(extra_pts)], axis=0)
                if new_pts.size
                else np.array(extra_pts)
            )

        progressed = False
        if split_set:
            pts, segs, tags = _split_segments(pts, segs, tags, sorted(split_set))
            progressed = True
        if new_pts.size:
            keep = np.ones(new_pts.shape[0], dtype=bool)
            d, _ = tree.query(new_pts)
            keep &= d > SIZE_FLOOR
            if np.any(keep):
                pts = np.concatenate([pts, new_pts[keep]], axis=0)
                progressed = True
        if not progressed:
            if float(angles.min()) >= MIN_ANGLE_DEG:
                return pts, simp[fl], segs, tags
            raise MeshFailure(
                f"refinement stalled at min angle {angles.min():.3f} deg "
                f"(floor {SIZE_FLOOR})"
            )

    raise MeshFailure(f"refinement did not settle within {_MAX_ROUNDS} rounds")


def _edge_key(i, j, n):
    i, j = (i, j) if i < j else (j, i)
    return int(i) * int(n) + int(j)


def _split_segments(pts, segs, tags, which):
    new_points = []
    keep = np.ones(segs.shape[0], dtype=bool)
    add_segs, add_tags = [], []
    base = pts.shape[0]
    for k in which:
        i, j = segs[k]
        if np.linalg.norm(pts[i] - pts[j]) / 2.0 < SIZE_FLOOR:
            raise MeshFailure(
                "segment split below the hard size floor "
                f"{SIZE_FLOOR} near {0.5 * (pts[i] + pts[j])}"
            )
        m = base + len(new_points)
        new_points.append(0.5 * (pts[i] + pts[j]))
        keep[k] = False
        add_segs.extend([(i, m), (m, j)])
        add_tags.extend([tags[k], tags[k]])
    pts = np.concatenate([pts, np.array(new_points)], axis=0)
    segs = np.concatenate([segs[keep], np.array(add_segs, dtype=np.int64)], axis=0)
    tags = np.concatenate([tags[keep], np.array(add_tags, dtype=np.int64)], axis=0)
    return pts, segs, tags


def _thin_candidates(cand, cand_r):
    """Deterministic conflict filter for batched circumcenter insertion:
    larger insertion radii win, later conflicting candidates are deferred."""
    if cand.shape[0] == 0:
        return np.zeros((0, 2))
    order = np.lexsort((cand[:, 1], cand[:, 0], -cand_r))
    cand = cand[order]
    cand_r = cand_r[order]
    accepted = []
    acc_pts = []
    tree = None
    rebuilt = 0
    for k in range(cand.shape[0]):
        ok = True
        if acc_pts:
            if tree is None or rebuilt < len(acc_pts) - 256:
                tree = cKDTree(np.array(acc_pts))
                rebuilt = len(acc_pts)
            lst = tree.query_ball_point(cand[k], 0.6 * cand_r[k])
            if lst:
                ok = False
            else:
                for p in acc_pts[rebuilt:]:
                    if np.linalg.norm(p - cand[k]) < 0.6 * cand_r[k]:
                        ok = False
                        break
        if ok:
            accepted.append(k)
            acc_pts.append(cand[k])
    return cand[accepted]


# ---------------------------------------------------------------------------
# domain constructions


def _inside_fn(spec: DomainSpec, xlo, ylo):
    poly = obstacle_polygon(spec.state, spec.d)
    X, L = spec.X, spec.L

    def inside(pts):
        pts = np.atleast_2d(pts)
        ok = (pts[:, 0] < X) & (pts[:, 1] < L)
        ok &= pts[:, 0] > xlo
        ok &= pts[:, 1] > ylo
        return ok & ~_point_in_convex_poly(pts, poly)

    return inside


def _seed_keep_fn(spec: DomainSpec, size_fn, pitch, xlo, ylo):
    poly = obstacle_polygon(spec.state, spec.d)
    X, L = spec.X, spec.L

    def keep(pts):
        d_obs = _poly_boundary_distance(pts, poly)
        ok = d_obs > 1.2 * pitch
        ok &= ~_point_in_convex_poly(pts, poly)
        ok &= (L - np.abs(pts[:, 1])) > 1.2 * pitch
        ok &= (X - np.abs(pts[:, 0])) > 1.2 * pitch
        ok &= pts[:, 0] > xlo + 1.2 * pitch if xlo == 0.0 else pts[:, 0] > xlo
        ok &= pts[:, 1] > ylo + 1.2 * pitch if ylo == 0.0 else pts[:, 1] > ylo
        ok &= size_fn(pts) > 0.9 * pitch
        return ok

    return keep


class _Builder:
    """Accumulates PSLG points (deduplicated by exact coordinates) and tagged
    segment chains."""

    def __init__(self):
        self.points: list[tuple[float, float]] = []
        self.index: dict[tuple[float, float], int] = {}
        self.segments: list[tuple[int, int]] = []
        self.tags: list[int] = []

    def pt(self, x, y) -> int:
        key = (float(x), float(y))
        if key not in self.index:
            self.index[key] = len(self.points)
            self.points.append(key)
        return self.index[key]

    def chain(self, coords, tag, close=False):
        ids = [self.pt(x, y) for x, y in coords]
        pairs = list(zip(ids[:-1], ids[1:]))
        if close:
            pairs.append((ids[-1], ids[0]))
        for i, j in pairs:
            self.segments.append((i, j))
            self.tags.append(int(tag))


def _ring_if_fits(spec: DomainSpec):
    if isinstance(spec.state, Rotation) and rotation_ring_fits(spec.L, spec.d):
        return rotation_ring_polygon(spec.d)
    return None


def _full_pslg(spec: DomainSpec, size_fn) -> _Pslg:
    X, L, d = spec.X, spec.L, spec.d
    c = 4.0 * d
    b = _Builder()
    b.chain([(-X, -L), (-c, -L), (c, -L), (X, -L)], BoundaryTag.WALL)
    b.chain([(X, -L), (X, L)], BoundaryTag.OUTFLOW)
    b.chain([(X, L), (c, L), (-c, L), (-X, L)], BoundaryTag.WALL)
    b.chain([(-X, L), (-X, -L)], BoundaryTag.INFLOW)
    b.chain([tuple(p) for p in obstacle_polygon(spec.state, d)], BoundaryTag.OBSTACLE, close=True)
    b.chain([(c, -L), (c, L)], _CONSTRAINT)
    b.chain([(-c, -L), (-c, L)], _CONSTRAINT)
    ring = _ring_if_fits(spec)
    if ring is not None:
        b.chain([tuple(p) for p in ring], _CONSTRAINT, close=True)
    return _Pslg(b.points, b.segments, b.tags, _inside_fn(spec, -X, -L), size_fn)


def _half_pslg(spec: DomainSpec, size_fn) -> _Pslg:
    """Right half (x1 >= 0) of a Translation domain; the symmetry interface is
    tagged internally and consumed by the mirror merge."""
    X, L, d = spec.X, spec.L, spec.d
    h = spec.state.h
    c = 4.0 * d
    b = _Builder()
    b.chain([(0.0, -L), (c, -L), (X, -L)], BoundaryTag.WALL)
    b.chain([(X, -L), (X, L)], BoundaryTag.OUTFLOW)
    b.chain([(X, L), (c, L), (0.0, L)], BoundaryTag.WALL)
    b.chain([(0.0, L), (0.0, h + 1.0)], _INTERNAL)
    b.chain([(0.0, h + 1.0), (d, h + 1.0), (d, h - 1.0), (0.0, h - 1.0)], BoundaryTag.OBSTACLE)
    b.chain([(0.0, h - 1.0), (0.0, -L)], _INTERNAL)
    b.chain([(c, -L), (c, L)], _CONSTRAINT)
    return _Pslg(b.points, b.segments, b.tags, _inside_fn(spec, 0.0, -L), size_fn)


def _quarter_pslg(spec: DomainSpec, size_fn) -> _Pslg:
    """Upper-right quarter of the centered axis-aligned configuration
    (Translation(0) or Rotation(0))."""
    X, L, d = spec.X, spec.L, spec.d
    c = 4.0 * d
    ring = _ring_if_fits(spec)
    b = _Builder()
    if ring is None:
        b.chain([(d, 0.0), (c, 0.0), (X, 0.0)], _INTERNAL)
    else:
        rc = rotation_ring_radius(d)
        b.chain([(d, 0.0), (rc, 0.0), (c, 0.0), (X, 0.0)], _INTERNAL)
    b.chain([(X, 0.0), (X, L)], BoundaryTag.OUTFLOW)
    b.chain([(X, L), (c, L), (0.0, L)], BoundaryTag.WALL)
    if ring is None:
        b.chain([(0.0, L), (0.0, 1.0)], _INTERNAL)
    else:
        rc = rotation_ring_radius(d)
        b.chain([(0.0, L), (0.0, rc), (0.0, 1.0)], _INTERNAL)
    b.chain([(0.0, 1.0), (d, 1.0), (d, 0.0)], BoundaryTag.OBSTACLE)
    b.chain([(c, 0.0), (c, L)], _CONSTRAINT)
    if ring is not None:
        quadrant = [tuple(p) for p in ring[: len(ring) // 4 + 1]]
        b.chain(quadrant, _CONSTRAINT)
    return _Pslg(b.points, b.segments, b.tags, _inside_fn(spec, 0.0, 0.0), size_fn)


def _mirror_merge(pts, tris, segs, tags, axis):
    """Glue a mesh to its mirror image across {x_axis = 0}.

    Nodes on the symmetry line are shared; segments lying on it are consumed
    (they become interior edges).  Boundary tags map INFLOW<->OUTFLOW under
    the x1 mirror and are unchanged under the x2 mirror.
    """
    on_axis = pts[:, axis] == 0.0
    refl = pts.copy()
    refl[:, axis] = np.where(on_axis, 0.0, -refl[:, axis])

    n = pts.shape[0]
    new_id = np.full(n, -1, dtype=np.int64)
    fresh = ~on_axis
    new_id[fresh] = n + np.arange(int(fresh.sum()))
    # shared nodes on the symmetry line keep their original index
    new_id[on_axis] = np.arange(n)[on_axis]

    merged_pts = np.concatenate([pts, refl[fresh]], axis=0)
    mirrored = new_id[tris][:, [0, 2, 1]]
    merged_tris = np.concatenate([tris, mirrored], axis=0)

    seg_on_axis = on_axis[segs[:, 0]] & on_axis[segs[:, 1]]
    keep = ~seg_on_axis
    mseg = new_id[segs[keep]]
    mtag = tags[keep].copy()
    if axis == 0:
        swap_in = mtag == BoundaryTag.INFLOW
        swap_out = mtag == BoundaryTag.OUTFLOW
        mtag[swap_in] = BoundaryTag.OUTFLOW
        mtag[swap_out] = BoundaryTag.INFLOW
    merged_segs = np.concatenate([segs[keep], mseg], axis=0)
    merged_tags = np.concatenate([tags[keep], mtag], axis=0)
    return merged_pts, merged_tris, merged_segs, merged_tags


def _compress(pts, tris, segs):
    used = np.zeros(pts.shape[0], dtype=bool)
    used[tris.ravel()] = True
    used[segs.ravel()] = True
    if used.all():
        return pts, tris, segs
    remap = -np.ones(pts.shape[0], dtype=np.int64)
    remap[used] = np.arange(int(used.sum()))
    return pts[used], remap[tris], remap[segs]


def generate_mesh(spec: DomainSpec, target_h: float, grading: float = 0.25) -> Mesh:
    """Triangulate the truncated channel minus the obstacle.

    target_h is the interior edge-length target; element size next to the
    obstacle and the walls is at most grading*target_h.  With
    spec.symmetrize the node set is mirror-invariant: across x1=0 for any
    Translation state (plus x2=0 at h=0), and under the half-turn
    (x1,x2) -> (-x1,-x2) at Rotation(0).  Raises MeshFailure when the
    quality targets cannot be met above the hard size floor.
    """
    validate_state(spec)
    if not (target_h > 0.0):
        raise InputError(f"target_h must be positive, got {target_h}")
    if not (0.0 < grading <= 1.0):
        raise InputError(f"grading must lie in (0, 1], got {grading}")

    size_fn = _SizeField(spec, target_h, grading)
    pitch = _SEED_FACTOR * target_h
    state = spec.state

    if spec.symmetrize and isinstance(state, Translation) and state.h == 0.0:
        parts = _mesh_part(spec, _quarter_pslg(spec, size_fn), size_fn, pitch, 0.0, 0.0)
        parts = _mirror_merge(*parts, axis=0)
        parts = _mirror_merge(*parts, axis=1)
    elif spec.symmetrize and isinstance(state, Translation):
        parts = _mesh_part(spec, _half_pslg(spec, size_fn), size_fn, pitch, 0.0, -spec.L)
        parts = _mirror_merge(*parts, axis=0)
    elif spec.symmetrize and isinstance(state, Rotation) and state.theta == 0.0:
        parts = _mesh_part(spec, _quarter_pslg(spec, size_fn), size_fn, pitch, 0.0, 0.0)
        parts = _mirror_merge(*parts, axis=0)
        parts = _mirror_merge(*parts, axis=1)
    else:
        # rotated states have no mirror construction; symmetrize only binds at
        # the symmetric states
        parts = _mesh_part(spec, _full_pslg(spec, size_fn), size_fn, pitch, -spec.X, -spec.L)

    pts, tris, segs, tags = parts
    if np.any(tags == _INTERNAL):
        raise MeshFailure("internal symmetry interface not consumed")
    pts, tris, segs = _compress(pts, tris, segs)

    mesh = Mesh(
        nodes=pts,
        triangles=tris,
        boundary_edges=segs,
        boundary_tags=tags.astype(np.int64),
        min_angle=float(triangle_min_angles(pts, tris).min()),
        spec=spec,
        target_h=target_h,
        grading=grading,
    )
    audit_mesh(mesh)
    return mesh


def _mesh_part(spec, pslg, size_fn, pitch, xlo, ylo):
    _presplit_segments(pslg)
    seeds = _hex_seeds(
        (max(xlo, -spec.X) + pitch / 2, spec.X, max(ylo, -spec.L) + pitch / 2, spec.L),
        pitch,
        _seed_keep_fn(spec, size_fn, pitch, xlo, ylo),
    )
    for s in seeds:
        pslg.points.append(s)
    return _refine(pslg)


def audit_mesh(mesh: Mesh, area_rtol: float = 1e-10) -> dict:
    """Validate structural mesh invariants; raises MeshFailure on violation.

    Checks: every boundary edge bounds exactly one triangle; minimum angle;
    for generated meshes the covered area matches 4LX - 4d, obstacle nodes
    lie on the obstacle polygon, and the obstacle edges close into a single
    loop of the right perimeter.
    """
    pts, tris = mesh.nodes, mesh.triangles
    n = pts.shape[0]

    tri_edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    keys = np.sort(tri_edges, axis=1)
    keys = keys[:, 0] * n + keys[:, 1]
    uniq, counts = np.unique(keys, return_counts=True)
    count_of = dict(zip(uniq.tolist(), counts.tolist()))

    bkeys = np.sort(mesh.boundary_edges, axis=1)
    bkeys = bkeys[:, 0] * n + bkeys[:, 1]
    for bk in bkeys.tolist():
        if count_of.get(bk, 0) != 1:
            raise MeshFailure("boundary edge not matched by exactly one triangle")

    report = {"min_angle": mesh.min_angle}
    if mesh.min_angle < MIN_ANGLE_DEG - 1e-9:
        raise MeshFailure(f"min angle {mesh.min_angle:.3f} below {MIN_ANGLE_DEG}")

    if mesh.spec is not None:
        spec = mesh.spec
        exact = 4.0 * spec.L * spec.X - 4.0 * spec.d
        area = mesh.total_area()
        report["area_error"] = abs(area - exact) / exact
        if report["area_error"] > area_rtol:
            raise MeshFailure(
                f"covered area {area} deviates from {exact} by {report['area_error']:.2e}"
            )
        poly = obstacle_polygon(spec.state, spec.d)
        obs = mesh.boundary_tags == BoundaryTag.OBSTACLE
        onodes = np.unique(mesh.boundary_edges[obs])
        dist = _poly_boundary_distance(pts[onodes], poly)
        report["obstacle_node_dist"] = float(dist.max()) if dist.size else 0.0
        if dist.size and dist.max() > 1e-12:
            raise MeshFailure(f"obstacle node off polygon by {dist.max():.2e}")
        # single closed loop: every obstacle node has degree 2 and the total
        # length equals the perimeter
        deg = np.zeros(n, dtype=int)
        for i, j in mesh.boundary_edges[obs]:
            deg[i] += 1
            deg[j] += 1
        if onodes.size and not np.all(deg[onodes] == 2):
            raise MeshFailure("obstacle boundary is not a simple closed loop")
        length = float(
            np.linalg.norm(
                pts[mesh.boundary_edges[obs][:, 0]] - pts[mesh.boundary_edges[obs][:, 1]],
                axis=1,
            ).sum()
        )
        report["obstacle_perimeter"] = length
        exact_perim = 4.0 * spec.d + 4.0
        if abs(length - exact_perim) > 1e-10 * exact_perim:
            raise MeshFailure(f"obstacle loop length {length} != {exact_perim}")
    return report


def boundary_element_size(mesh: Mesh, tags=(BoundaryTag.OBSTACLE, BoundaryTag.WALL)) -> float:
    """Longest edge over triangles owning a boundary edge with the given tags."""
    sel = np.isin(mesh.boundary_tags, np.array([int(t) for t in tags]))
    if not np.any(sel):
        return 0.0
    n = mesh.num_nodes
    bkeys = np.sort(mesh.boundary_edges[sel], axis=1)
    bset = set((bkeys[:, 0] * n + bkeys[:, 1]).tolist())
    tris = mesh.triangles
    out = 0.0
    for t in range(tris.shape[0]):
        i, j, k = tris[t]
        touching = False
        for p, q in ((i, j), (j, k), (k, i)):
            a, b = (p, q) if p < q else (q, p)
            if a * n + b in bset:
                touching = True
                break
        if touching:
            pts = mesh.nodes[[i, j, k]]
            for p, q in ((0, 1), (1, 2), (2, 0)):
                out = max(out, float(np.linalg.norm(pts[p] - pts[q])))
    return out


def mirror_mesh(mesh: Mesh, axis: str = "x2") -> Mesh:
    """Mirror image of a mesh; axis='x2' flips the sign of x2 (maps state
    h -> -h, theta -> -theta), axis='x1' flips x1 (swaps inflow/outflow)."""
    if axis not in ("x1", "x2"):
        raise InputError(f"axis must be 'x1' or 'x2', got {axis!r}")
    col = 0 if axis == "x1" else 1
    pts = mesh.nodes.copy()
    pts[:, col] = np.where(pts[:, col] == 0.0, 0.0, -pts[:, col])
    tris = mesh.triangles[:, [0, 2, 1]].copy()
    tags = mesh.boundary_tags.copy()
    if axis == "x1":
        swap_in = tags == BoundaryTag.INFLOW
        swap_out = tags == BoundaryTag.OUTFLOW
        tags[swap_in] = BoundaryTag.OUTFLOW
        tags[swap_out] = BoundaryTag.INFLOW
    spec = mesh.spec
    if spec is not None:
        if isinstance(spec.state, Translation):
            state = Translation(-spec.state.h if axis == "x2" else spec.state.h)
        else:
            state = Rotation(-spec.state.theta)
        spec = replace(spec, state=state)
    return Mesh(
        nodes=pts,
        triangles=tris,
        boundary_edges=mesh.boundary_edges.copy(),
        boundary_tags=tags,
        min_angle=mesh.min_angle,
        spec=spec,
        target_h=mesh.target_h,
        grading=mesh.grading,
    )


def uniform_refine(mesh: Mesh) -> Mesh:
    """Split every triangle into four congruent children (red refinement).

    Edge midpoints become new vertices; boundary edges split in two and keep
    their tags.
    """
    tris = mesh.triangles
    n = mesh.num_nodes
    locals_ = np.concatenate([tris[:, [1, 2]], tris[:, [2, 0]], tris[:, [0, 1]]])
    keys = np.sort(locals_, axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    m = tris.shape[0]
    tri_edges = inv.reshape(3, m).T  # edge opposite local vertex k

    mids = 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])
    nodes = np.concatenate([mesh.nodes, mids], axis=0)
    e = n + tri_edges
    children = np.concatenate(
        [
            np.stack([tris[:, 0], e[:, 2], e[:, 1]], axis=1),
            np.stack([tris[:, 1], e[:, 0], e[:, 2]], axis=1),
            np.stack([tris[:, 2], e[:, 1], e[:, 0]], axis=1),
            np.stack([e[:, 0], e[:, 1], e[:, 2]], axis=1),
        ]
    )

    ekeys = uniq[:, 0] * (n + uniq.shape[0]) + uniq[:, 1]
    order = np.argsort(ekeys)
    skeys = ekeys[order]
    bsort = np.sort(mesh.boundary_edges, axis=1)
    bk = bsort[:, 0] * (n + uniq.shape[0]) + bsort[:, 1]
    eid = order[np.searchsorted(skeys, bk)]
    be1 = np.stack([mesh.boundary_edges[:, 0], n + eid], axis=1)
    be2 = np.stack([n + eid, mesh.boundary_edges[:, 1]], axis=1)
    bedges = np.concatenate([be1, be2], axis=0)
    btags = np.concatenate([mesh.boundary_tags, mesh.boundary_tags])

    return Mesh(
        nodes=nodes,
        triangles=children,
        boundary_edges=bedges,
        boundary_tags=btags,
        min_angle=mesh.min_angle,
        spec=mesh.spec,
        target_h=None if mesh.target_h is None else mesh.target_h / 2.0,
        grading=mesh.grading,
    )


def structured_rectangle_mesh(nx: int, ny: int, x0=0.0, y0=0.0, x1=1.0, y1=1.0) -> Mesh:
    """Uniform right-triangle mesh of a rectangle; all boundary edges tagged WALL.

    Used by manufactured-solution studies and small unit fixtures.
    """
    if nx < 1 or ny < 1:
        raise InputError("nx and ny must be at least 1")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="xy")
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)

    def nid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            v00, v10 = nid(i, j), nid(i + 1, j)
            v01, v11 = nid(i, j + 1), nid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    tris = np.array(tris, dtype=np.int64)

    segs, tags = [], []
    for i in range(nx):
        segs.append((nid(i, 0), nid(i + 1, 0)))
        segs.append((nid(i, ny), nid(i + 1, ny)))
        tags.extend([BoundaryTag.WALL, BoundaryTag.WALL])
    for j in range(ny):
        segs.append((nid(0, j), nid(0, j + 1)))
        segs.append((nid(nx, j), nid(nx, j + 1)))
        tags.extend([BoundaryTag.WALL, BoundaryTag.WALL])

    return Mesh(
        nodes=pts,
        triangles=tris,
        boundary_edges=np.array(segs, dtype=np.int64),
        boundary_tags=np.array(tags, dtype=np.int64),
        min_angle=float(triangle_min_angles(pts, tris).min()),
    )
