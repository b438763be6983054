"""Manufactured Stokes problem for discretization verification.

Velocity is the curl of the stream function sin^2(pi x) sin^2(pi y), so it
is exactly divergence free and vanishes on the unit-square boundary;
pressure is cos(2 pi x) cos(2 pi y) (zero mean).  The body force is the
analytic momentum residual.  The study runs on uniform refinements of a
deterministically jittered base grid; the jitter breaks the structured-mesh
superconvergence that would otherwise pollute the fitted pressure rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fem
from .errors import InputError
from .meshing import BoundaryTag, Mesh, structured_rectangle_mesh, triangle_min_angles, uniform_refine

_PI = math.pi


def exact_velocity(pts):
    x, y = pts[:, 0], pts[:, 1]
    u1 = (_PI / 2.0) * (1.0 - np.cos(2 * _PI * x)) * np.sin(2 * _PI * y)
    u2 = -(_PI / 2.0) * np.sin(2 * _PI * x) * (1.0 - np.cos(2 * _PI * y))
    return np.stack([u1, u2], axis=1)


def exact_velocity_gradient(pts):
    x, y = pts[:, 0], pts[:, 1]
    g = np.empty((len(pts), 2, 2))
    g[:, 0, 0] = _PI**2 * np.sin(2 * _PI * x) * np.sin(2 * _PI * y)
    g[:, 0, 1] = _PI**2 * (1.0 - np.cos(2 * _PI * x)) * np.cos(2 * _PI * y)
    g[:, 1, 0] = -(_PI**2) * np.cos(2 * _PI * x) * (1.0 - np.cos(2 * _PI * y))
    g[:, 1, 1] = -(_PI**2) * np.sin(2 * _PI * x) * np.sin(2 * _PI * y)
    return g


def exact_pressure(pts):
    return np.cos(2 * _PI * pts[:, 0]) * np.cos(2 * _PI * pts[:, 1])


def body_force(pts):
    x, y = pts[:, 0], pts[:, 1]
    lap1 = 2 * _PI**3 * np.sin(2 * _PI * y) * (2.0 * np.cos(2 * _PI * x) - 1.0)
    lap2 = 2 * _PI**3 * np.sin(2 * _PI * x) * (1.0 - 2.0 * np.cos(2 * _PI * y))
    gp1 = -2 * _PI * np.sin(2 * _PI * x) * np.cos(2 * _PI * y)
    gp2 = -2 * _PI * np.cos(2 * _PI * x) * np.sin(2 * _PI * y)
    return np.stack([-lap1 + gp1, -lap2 + gp2], axis=1)


def jittered_base_mesh(n: int = 8, amplitude: float = 0.3, seed: int = 1234) -> Mesh:
    """Structured n x n unit-square mesh with deterministic interior jitter."""
    base = structured_rectangle_mesh(n, n)
    nodes = base.nodes.copy()
    rng = np.random.default_rng(seed)
    interior = (
        (nodes[:, 0] > 0.0)
        & (nodes[:, 0] < 1.0)
        & (nodes[:, 1] > 0.0)
        & (nodes[:, 1] < 1.0)
    )
    nodes[interior] += (rng.random((int(interior.sum()), 2)) - 0.5) * (amplitude / n)
    return Mesh(
        nodes=nodes,
        triangles=base.triangles,
        boundary_edges=base.boundary_edges,
        boundary_tags=base.boundary_tags,
        min_angle=float(triangle_min_angles(nodes, base.triangles).min()),
    )


@dataclass
class ConvergenceRow:
    level: int
    h: float
    velocity_l2: float
    velocity_grad: float
    pressure_l2: float


@dataclass
class ConvergenceStudy:
    rows: list[ConvergenceRow]
    rate_velocity_l2: float
    rate_velocity_grad: float
    rate_pressure_l2: float


def solve_manufactured(mesh: Mesh) -> tuple[fem.DofMap, fem.Field]:
    dm = fem.build_spaces(mesh)
    system = fem.SaddleSystem(
        dm,
        fem.assemble_viscous(dm),
        fem.assemble_divergence(dm),
        rhs_vel=fem.body_force_vector(dm, body_force),
    )
    fem.apply_dirichlet(system, {BoundaryTag.WALL: (0.0, 0.0)})
    return dm, system.solve()


def stokes_convergence_study(refinements: int = 3, base_n: int = 8) -> ConvergenceStudy:
    """Errors and fitted rates on `refinements` uniformly refined meshes
    (levels 1..refinements above the jittered base)."""
    if refinements < 2:
        raise InputError("need at least 2 refinement levels to fit rates")
    mesh = jittered_base_mesh(base_n)
    rows = []
    for level in range(1, refinements + 1):
        mesh = uniform_refine(mesh)
        dm, fld = solve_manufactured(mesh)
        rows.append(
            ConvergenceRow(
                level=level,
                h=1.0 / (base_n * 2**level),
                velocity_l2=fem.velocity_l2_error(dm, fld.velocity, exact_velocity),
                velocity_grad=fem.velocity_h1_error(dm, fld.velocity, exact_velocity_gradient),
                pressure_l2=fem.pressure_l2_error(dm, fld.pressure, exact_pressure),
            )
        )
    hs = np.log([r.h for r in rows])

    def rate(vals):
        return float(np.polyfit(hs, np.log(vals), 1)[0])

    return ConvergenceStudy(
        rows=rows,
        rate_velocity_l2=rate([r.velocity_l2 for r in rows]),
        rate_velocity_grad=rate([r.velocity_grad for r in rows]),
        rate_pressure_l2=rate([r.pressure_l2 for r in rows]),
    )
