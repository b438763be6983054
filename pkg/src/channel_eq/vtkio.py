"""Legacy ASCII VTK output of velocity-pressure fields.

Point data lives at the mesh vertices (the quadratic mid-edge values are
dropped; plotters interpolate linearly anyway).
"""

from __future__ import annotations

from .fem import Field
from .meshing import Mesh


def write_vtk(field: Field, path, title="channel-eq field") -> None:
    mesh: Mesh = field.dofmap.mesh
    nv = mesh.num_nodes
    u1 = field.component(0)[:nv]
    u2 = field.component(1)[:nv]
    p = field.pressure
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {nv} double\n")
        for x, y in mesh.nodes:
            fh.write(f"{x:.9g} {y:.9g} 0\n")
        m = mesh.num_triangles
        fh.write(f"CELLS {m} {4 * m}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"3 {i} {j} {k}\n")
        fh.write(f"CELL_TYPES {m}\n")
        fh.write("5\n" * m)
        fh.write(f"POINT_DATA {nv}\n")
        fh.write("VECTORS velocity double\n")
        for a, b in zip(u1, u2):
            fh.write(f"{a:.9g} {b:.9g} 0\n")
        fh.write("SCALARS pressure double 1\n")
        fh.write("LOOKUP_TABLE default\n")
        for v in p:
            fh.write(f"{v:.9g}\n")
