"""Plain-text mesh format.

    mesh2d v1
    nodes N
    x y            (N lines, full float round-trip precision)
    triangles M
    i j k          (M lines, 0-based)
    boundary K
    i j TAG        (K lines, TAG in WALL INFLOW OUTFLOW OBSTACLE)

Whitespace separated; `#` starts a comment.  Node order is preserved, so a
write/read cycle reproduces the arrays bit for bit.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .meshing import BoundaryTag, Mesh, triangle_min_angles


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write("mesh2d v1\n")
        fh.write(f"nodes {mesh.num_nodes}\n")
        for x, y in mesh.nodes:
            fh.write(f"{x!r} {y!r}\n")
        fh.write(f"triangles {mesh.num_triangles}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        fh.write(f"boundary {len(mesh.boundary_edges)}\n")
        for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            fh.write(f"{i} {j} {BoundaryTag(int(tag)).name}\n")


def _tokens(fh):
    for line in fh:
        body = line.split("#", 1)[0].strip()
        if body:
            yield body.split()


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        toks = _tokens(fh)
        try:
            header = next(toks)
        except StopIteration:
            raise InputError(f"{path}: empty mesh file")
        if header != ["mesh2d", "v1"]:
            raise InputError(f"{path}: expected 'mesh2d v1' header, got {' '.join(header)}")

        def expect(keyword):
            row = next(toks)
            if row[0] != keyword or len(row) != 2:
                raise InputError(f"{path}: expected '{keyword} <count>', got {' '.join(row)}")
            return int(row[1])

        n = expect("nodes")
        nodes = np.empty((n, 2))
        for k in range(n):
            row = next(toks)
            nodes[k] = (float(row[0]), float(row[1]))

        m = expect("triangles")
        tris = np.empty((m, 3), dtype=np.int64)
        for k in range(m):
            tris[k] = [int(v) for v in next(toks)]

        nb = expect("boundary")
        bedges = np.empty((nb, 2), dtype=np.int64)
        btags = np.empty(nb, dtype=np.int64)
        for k in range(nb):
            row = next(toks)
            bedges[k] = (int(row[0]), int(row[1]))
            try:
                btags[k] = BoundaryTag[row[2]]
            except KeyError:
                raise InputError(f"{path}: unknown boundary tag {row[2]!r}")

    if tris.size and (tris.min() < 0 or tris.max() >= n):
        raise InputError(f"{path}: triangle index out of range")
    if bedges.size and (bedges.min() < 0 or bedges.max() >= n):
        raise InputError(f"{path}: boundary index out of range")
    return Mesh(
        nodes=nodes,
        triangles=tris,
        boundary_edges=bedges,
        boundary_tags=btags,
        min_angle=float(triangle_min_angles(nodes, tris).min()) if m else 0.0,
    )
