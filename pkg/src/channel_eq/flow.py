"""Steady flow solves on the truncated channel.

Stokes and Navier-Stokes with the parabolic far-field profile imposed as
Dirichlet data at the truncation lines, the auxiliary Stokes fields that
turn boundary forces into volume integrals, and the divergence-free
extensions of the far-field profile that vanish near the obstacle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import fem
from .errors import GeometryError, InputError, NoConvergence
from .fem import DofMap, Field, SaddleSystem
from .geometry import Rotation, Translation, obstacle_polygon
from .meshing import BoundaryTag, Mesh


@dataclass
class SolveConfig:
    """Nonlinear solve parameters.

    R is the Reynolds number, lam the flow-rate factor of the parabolic
    profile.  The solver walks a continuation path R_k = k*R/steps, doing
    picard_warmup Picard sweeps followed by Newton at each level; a level
    whose residual fails to decrease is retried at half the increment.
    """

    R: float = 0.0
    lam: float = 0.1
    newton_tol: float = 1e-10
    max_newton: int = 25
    picard_warmup: int = 3
    continuation_steps: int | None = None
    initial: str = "stokes"  # or "zero": uniqueness probe starting point

    def __post_init__(self):
        if self.R < 0 or self.lam < 0:
            raise InputError("R and lam must be nonnegative")
        if self.newton_tol <= 0:
            raise InputError("newton_tol must be positive")
        if self.max_newton < 1 or self.picard_warmup < 0:
            raise InputError("iteration counts out of range")
        if self.continuation_steps is not None and self.continuation_steps < 1:
            raise InputError("continuation_steps must be at least 1")
        if self.initial not in ("stokes", "zero"):
            raise InputError(f"unknown initial iterate {self.initial!r}")

    @property
    def steps(self) -> int:
        if self.continuation_steps is not None:
            return self.continuation_steps
        return max(1, math.ceil(self.R / 0.5))


class AuxKind(Enum):
    """Obstacle datum of the auxiliary Stokes problem: unit vertical
    translation for lift, unit counterclockwise spin about the pin for
    torque."""

    LIFT = "lift"
    TORQUE = "torque"

    def datum(self, pts: np.ndarray) -> np.ndarray:
        if self is AuxKind.LIFT:
            return np.stack([np.zeros(len(pts)), np.ones(len(pts))], axis=1)
        return np.stack([-pts[:, 1], pts[:, 0]], axis=1)


class Discretization:
    """Assembled operators shared by all solves on one mesh."""

    def __init__(self, mesh: Mesh):
        if mesh.spec is None:
            raise InputError("flow solves need a mesh generated from a DomainSpec")
        self.mesh = mesh
        self.dofmap = fem.build_spaces(mesh)
        self.A = fem.assemble_viscous(self.dofmap)
        self.B = fem.assemble_divergence(self.dofmap)

    def poiseuille(self, lam: float):
        L = self.mesh.spec.L

        def datum(pts):
            return np.stack(
                [lam * (L * L - pts[:, 1] ** 2), np.zeros(len(pts))], axis=1
            )

        return datum

    def flow_bc(self, lam: float) -> dict:
        datum = self.poiseuille(lam)
        return {
            BoundaryTag.WALL: (0.0, 0.0),
            BoundaryTag.OBSTACLE: (0.0, 0.0),
            BoundaryTag.INFLOW: datum,
            BoundaryTag.OUTFLOW: datum,
        }


def discretize(mesh: Mesh) -> Discretization:
    return Discretization(mesh)


def solve_stokes(mesh: Mesh, lam: float, disc: Discretization | None = None) -> Field:
    """Creeping-flow solution with the parabolic profile at inflow/outflow."""
    disc = disc or discretize(mesh)
    system = SaddleSystem(disc.dofmap, disc.A, disc.B)
    fem.apply_dirichlet(system, disc.flow_bc(lam))
    fld = system.solve(
        meta={"R": 0.0, "lambda": lam, "state": mesh.spec.state, "kind": "stokes"}
    )
    return fld


def solve_aux_w(mesh: Mesh, kind: AuxKind, disc: Discretization | None = None) -> Field:
    """Auxiliary Stokes field: kind datum on the obstacle, zero elsewhere."""
    disc = disc or discretize(mesh)
    system = SaddleSystem(disc.dofmap, disc.A, disc.B)
    bc = {
        BoundaryTag.WALL: (0.0, 0.0),
        BoundaryTag.INFLOW: (0.0, 0.0),
        BoundaryTag.OUTFLOW: (0.0, 0.0),
        BoundaryTag.OBSTACLE: kind.datum,
    }
    fem.apply_dirichlet(system, bc)
    return system.solve(
        meta={"R": 0.0, "lambda": 0.0, "state": mesh.spec.state, "kind": f"aux_{kind.value}"}
    )


def nonlinear_residual(disc: Discretization, system: SaddleSystem, field: Field, reynolds: float):
    """Weak Navier-Stokes residual restricted to free velocity dofs plus all
    divergence rows; returns (norm, velocity_residual, divergence_residual)."""
    dm = disc.dofmap
    conv = fem.convection_matrix(dm, field.velocity) @ field.velocity
    r_vel = disc.A @ field.velocity + reynolds * conv + disc.B.T @ field.pressure
    r_vel = r_vel - system.rhs_vel
    free = system.free_velocity_mask()
    r_div = disc.B @ field.velocity - system.rhs_div
    norm = math.hypot(float(np.linalg.norm(r_vel[free])), float(np.linalg.norm(r_div)))
    return norm, r_vel, r_div


def solve_navier_stokes(
    mesh: Mesh, cfg: SolveConfig, disc: Discretization | None = None
) -> Field:
    """Steady Navier-Stokes via continuation in R with Picard warm-up and
    Newton polishing.

    Raises NoConvergence (carrying the last residual and the R level
    reached) when the continuation cannot advance, which is the expected
    signal outside the small-data regime.
    """
    disc = disc or discretize(mesh)
    dm = disc.dofmap
    base = SaddleSystem(dm, disc.A, disc.B)
    fem.apply_dirichlet(base, disc.flow_bc(cfg.lam))

    history: list[tuple[str, float, float]] = []
    meta = {
        "R": cfg.R,
        "lambda": cfg.lam,
        "state": mesh.spec.state,
        "kind": "navier_stokes",
        "history": history,
    }

    stokes = base.solve()
    if cfg.initial == "stokes":
        current = stokes
    else:
        current = Field(dm, np.zeros(dm.n_velocity), np.zeros(dm.n_pressure))
        current.velocity[base.dirichlet_dofs] = base.dirichlet_values
    if cfg.R == 0.0:
        stokes.meta = meta
        history.append(("stokes", 0.0, 0.0))
        meta["residual"] = 0.0
        meta["iterations"] = 1
        return stokes

    r_reached = 0.0
    u_at = current
    targets = [cfg.R * (k + 1) / cfg.steps for k in range(cfg.steps)]
    last_res = math.inf
    while targets:
        rk = targets[0]
        advanced, res = _advance_level(disc, base, u_at, rk, cfg, history)
        if advanced is not None:
            u_at = advanced
            r_reached = rk
            targets.pop(0)
            last_res = res
            continue
        mid = 0.5 * (r_reached + rk)
        if mid - r_reached < max(1e-6, 1e-3 * cfg.R):
            raise NoConvergence(
                f"continuation stalled at R={r_reached:.4g} "
                f"(target {cfg.R}), last residual {res:.3e}",
                residual=res,
                reynolds=r_reached,
            )
        targets.insert(0, mid)

    meta["residual"] = last_res
    meta["iterations"] = len(history)
    u_at.meta = meta
    return u_at


def _advance_level(disc, base, start, rk, cfg, history):
    """One continuation level: Picard then Newton from `start` at R=rk.
    Returns (field or None, last residual)."""
    dm = disc.dofmap
    field = start.copy()
    res, _, _ = nonlinear_residual(disc, base, field, rk)
    history.append(("start", rk, res))

    for _ in range(cfg.picard_warmup):
        if res <= cfg.newton_tol:
            break
        system = SaddleSystem(
            dm, disc.A + rk * fem.convection_matrix(dm, field.velocity), disc.B
        )
        system.set_dirichlet(base.dirichlet_dofs, base.dirichlet_values)
        trial = system.solve()
        new_res, _, _ = nonlinear_residual(disc, base, trial, rk)
        if not math.isfinite(new_res) or new_res >= res:
            return None, min(res, new_res if math.isfinite(new_res) else res)
        field, res = trial, new_res
        history.append(("picard", rk, res))

    for _ in range(cfg.max_newton):
        if res <= cfg.newton_tol:
            return field, res
        nmat = fem.convection_matrix(dm, field.velocity)
        jac = disc.A + rk * (nmat + fem.convection_jacobian_extra(dm, field.velocity))
        _, r_vel, r_div = nonlinear_residual(disc, base, field, rk)
        system = SaddleSystem(dm, jac, disc.B, rhs_vel=-r_vel, rhs_div=-r_div)
        system.set_dirichlet(base.dirichlet_dofs, np.zeros(base.dirichlet_dofs.size))
        delta = system.solve()
        trial = Field(
            dm,
            field.velocity + delta.velocity,
            field.pressure + delta.pressure,
            field.meta,
        )
        new_res, _, _ = nonlinear_residual(disc, base, trial, rk)
        if not math.isfinite(new_res) or new_res >= res:
            return None, min(res, new_res if math.isfinite(new_res) else res)
        field, res = trial, new_res
        history.append(("newton", rk, res))

    if res <= cfg.newton_tol:
        return field, res
    return None, res


# ---------------------------------------------------------------------------
# solenoidal extensions of the far-field profile


def cutoff(x1: np.ndarray, d: float) -> np.ndarray:
    """C^2 blend in |x1|: 0 inside |x1|<=3d, 1 outside |x1|>=4d, quintic
    smoothstep in between (matching value, slope and curvature)."""
    t = (np.abs(np.asarray(x1, dtype=float)) - 3.0 * d) / d
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def _extension(mesh: Mesh, disc: Discretization, exclude_fn, label: str) -> Field:
    """Discrete divergence-free field equal to the parabolic profile at dofs
    with |x1|>=4d and zero on the excluded obstacle region.

    The interpolated cutoff profile is corrected by a prescribed-divergence
    Stokes solve on the band region so that the weak divergence vanishes.
    """
    spec = mesh.spec
    dm = disc.dofmap
    L, d = spec.L, spec.d
    coords = dm.scalar_coords

    zeta = cutoff(coords[:, 0], d)
    prof = zeta * (L * L - coords[:, 1] ** 2)
    c_int = np.concatenate([prof, np.zeros(dm.n_scalar)])

    # correction problem: free dofs strictly inside the band, outside the
    # excluded region and off the walls
    excluded = exclude_fn(coords)
    free_scalar = (
        (np.abs(coords[:, 0]) < 4.0 * d)
        & (np.abs(coords[:, 1]) < L)
        & ~excluded
    )
    fixed_scalar = ~free_scalar
    fixed = np.concatenate([fixed_scalar, fixed_scalar])
    fixed_dofs = np.where(fixed)[0]

    # active pressure dofs: vertices of triangles owning a free velocity dof
    tri_free = free_scalar[dm.tri_dofs].any(axis=1)
    act = np.zeros(dm.n_pressure, dtype=bool)
    act[np.unique(mesh.triangles[tri_free])] = True

    system = SaddleSystem(dm, disc.A, disc.B, rhs_div=disc.B @ c_int)
    system.set_dirichlet(fixed_dofs, np.zeros(fixed_dofs.size))
    system.active_pressure = act
    z = system.solve()

    vel = c_int - z.velocity
    return Field(
        dm,
        vel,
        np.zeros(dm.n_pressure),
        {"kind": label, "state": spec.state, "R": 0.0, "lambda": 1.0},
    )


def build_extension_a(mesh: Mesh, disc: Discretization | None = None) -> Field:
    """Unit-flow-rate extension for Translation states: vanishes on a margin
    box around the obstacle, equals (L^2-x2^2)e1 at dofs beyond |x1|=4d."""
    spec = mesh.spec
    if not isinstance(spec.state, Translation):
        raise GeometryError("build_extension_a expects a Translation state")
    L, d, h = spec.L, spec.d, spec.state.h
    # keep the exclusion margins small: the corrector then routes the flux
    # through the same wall clearances the mesh already resolves
    mx = min(d, 0.1)
    if d + mx >= 3.0 * d:
        raise GeometryError("obstacle margin box does not fit inside |x1| < 3d")
    m_top = min(0.1, (L - 1.0 - h) / 3.0)
    m_bot = min(0.1, (L - 1.0 + h) / 3.0)
    lo, hi = h - 1.0 - m_bot, h + 1.0 + m_top

    def exclude(pts):
        return (
            (np.abs(pts[:, 0]) <= d + mx)
            & (pts[:, 1] >= lo)
            & (pts[:, 1] <= hi)
        )

    disc = disc or discretize(mesh)
    return _extension(mesh, disc, exclude, "extension_a")


def build_extension_b(mesh: Mesh, disc: Discretization | None = None) -> Field:
    """Rotation-mode analogue: vanishes on a disk containing the obstacle in
    every rotation."""
    spec = mesh.spec
    if not isinstance(spec.state, Rotation):
        raise GeometryError("build_extension_b expects a Rotation state")
    d = spec.d
    radius = math.sqrt(1.0 + d * d)
    if radius >= 3.0 * d:
        raise GeometryError(
            f"rotation disk radius {radius:.3f} does not fit inside |x1| < 3d = {3 * d}"
        )
    margin = min(0.1, 0.5 * (3.0 * d - radius), (spec.L - radius) / 3.0)
    rr = radius + margin

    def exclude(pts):
        return np.hypot(pts[:, 0], pts[:, 1]) <= rr

    disc = disc or discretize(mesh)
    return _extension(mesh, disc, exclude, "extension_b")


def build_extension(mesh: Mesh, disc: Discretization | None = None) -> Field:
    """State-dispatching wrapper over the two extension builders."""
    if isinstance(mesh.spec.state, Translation):
        return build_extension_a(mesh, disc)
    return build_extension_b(mesh, disc)


def energy_norm(field: Field, lam: float, extension: Field) -> float:
    """Dirichlet norm of (u - lam * extension), the quantity bounded
    uniformly in the obstacle position in the small-data regime."""
    fem.require_same_dofmap(field, extension)
    diff = field.velocity - lam * extension.velocity
    return math.sqrt(fem.gradient_norm_squared(field.dofmap, diff))
