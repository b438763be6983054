"""Channel-with-obstacle domain description and admissibility checks.

The channel is the horizontal strip (-X, X) x (-L, L) after truncation.  The
obstacle is a rigid rectangle of half-length d and half-thickness 1 (lengths
are rescaled so the half-thickness is the unit).  It is placed either by a
vertical offset h of its center or by a rotation theta about the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CollisionError, GeometryError, RangeError

# Cutoff support used by the solenoidal far-field extension: the blend between
# "zero near the obstacle" and "exact parabolic profile" lives in 3d<=|x1|<=4d,
# so the channel must be truncated strictly outside |x1| = 4d.
TRUNCATION_MARGIN = 2.0


@dataclass(frozen=True)
class Translation:
    """Vertical obstacle offset h, admissible for |h| < L - 1."""

    h: float

    @property
    def position(self) -> float:
        return self.h


@dataclass(frozen=True)
class Rotation:
    """Rotation angle theta (radians) about the pin at the origin."""

    theta: float

    @property
    def position(self) -> float:
        return self.theta


ObstacleState = Translation | Rotation


@dataclass(frozen=True)
class DomainSpec:
    """Channel/obstacle geometry plus truncation and meshing symmetry flag.

    L     : channel half-height (dimensionless, > 1)
    d     : obstacle half-length (> 0)
    X     : truncation half-length (>= 4d + 2)
    state : obstacle placement
    symmetrize : request a mirror-symmetric node set (see meshing module)
    """

    L: float = 2.0
    d: float = 0.5
    X: float = 6.0
    state: ObstacleState = field(default_factory=lambda: Translation(0.0))
    symmetrize: bool = False

    def __post_init__(self):
        validate_state(self)

    def with_state(self, state: ObstacleState) -> "DomainSpec":
        return DomainSpec(self.L, self.d, self.X, state, self.symmetrize)


def validate_state(spec: DomainSpec) -> None:
    """Check admissibility of a DomainSpec; raise a geometry error if violated.

    Raises CollisionError when the translated obstacle touches a wall,
    RangeError when |theta| >= pi/2, and GeometryError for bad L, d, X or a
    rotation geometry without clearance (L^2 <= 1 + d^2).
    """
    L, d, X = spec.L, spec.d, spec.X
    if not (L > 1.0):
        raise GeometryError(f"channel half-height L={L} must exceed 1")
    if not (d > 0.0):
        raise GeometryError(f"obstacle half-length d={d} must be positive")
    if not (X >= 4.0 * d + TRUNCATION_MARGIN):
        raise GeometryError(
            f"truncation X={X} must be at least 4d+{TRUNCATION_MARGIN} = "
            f"{4.0 * d + TRUNCATION_MARGIN}"
        )
    state = spec.state
    if isinstance(state, Translation):
        if abs(state.h) >= L - 1.0:
            raise CollisionError(
                f"|h|={abs(state.h)} >= L-1={L - 1.0}: obstacle collides with a wall"
            )
    elif isinstance(state, Rotation):
        if L * L <= 1.0 + d * d:
            raise GeometryError(
                f"rotation requires L^2 > 1+d^2, got {L * L} <= {1.0 + d * d}"
            )
        if abs(state.theta) >= math.pi / 2.0:
            raise RangeError(f"|theta|={abs(state.theta)} >= pi/2")
    else:  # pragma: no cover - guarded by the union type
        raise GeometryError(f"unknown obstacle state {state!r}")


def obstacle_polygon(state: ObstacleState, d: float) -> np.ndarray:
    """Vertices of the placed obstacle, counterclockwise from the image of (d, -1).

    The reference rectangle is [-d, d] x [-1, 1]; Translation shifts it by
    (0, h), Rotation applies the rotation matrix of angle theta.
    Returns an array of shape (4, 2).
    """
    base = np.array(
        [[d, -1.0], [d, 1.0], [-d, 1.0], [-d, -1.0]], dtype=float
    )
    if isinstance(state, Translation):
        out = base.copy()
        out[:, 1] += state.h
        return out
    c, s = math.cos(state.theta), math.sin(state.theta)
    rot = np.array([[c, -s], [s, c]])
    return base @ rot.T


def gap_epsilon(state: Translation, L: float) -> float:
    """Half the wall clearance, (L - 1 - |h|)/2; positive for admissible h."""
    if not isinstance(state, Translation):
        raise GeometryError("gap_epsilon is defined for Translation states")
    eps = (L - 1.0 - abs(state.h)) / 2.0
    if eps <= 0.0:
        raise CollisionError(f"|h|={abs(state.h)} >= L-1={L - 1.0}")
    return eps


def state_clearance(spec: DomainSpec) -> float:
    """Distance from the obstacle to the nearest wall for the current state."""
    if isinstance(spec.state, Translation):
        return spec.L - 1.0 - abs(spec.state.h)
    poly = obstacle_polygon(spec.state, spec.d)
    return float(spec.L - np.abs(poly[:, 1]).max())


# ring polygon around a rotating obstacle: the far-field extension must
# vanish on a region containing the obstacle in every orientation, and the
# mesh carries the ring as interior constraint edges so that region is a
# union of elements
RING_SIDES = 24
RING_CLEARANCE = 0.1


def rotation_ring_radius(d: float) -> float:
    """Circumradius of the ring polygon: the inscribed radius clears the
    swept obstacle circle by RING_CLEARANCE."""
    swept = math.sqrt(1.0 + d * d)
    return (swept + RING_CLEARANCE) / math.cos(math.pi / RING_SIDES)


def rotation_ring_fits(L: float, d: float) -> bool:
    rc = rotation_ring_radius(d)
    return rc < 3.0 * d - 1e-9 and rc < L - RING_CLEARANCE


def rotation_ring_polygon(d: float) -> np.ndarray:
    """Counterclockwise ring vertices starting on the positive x1 axis.

    Built from one quadrant and exact quarter-turns, so the four on-axis
    vertices have exact zero coordinates (the symmetric mesh constructions
    share them across mirror lines).
    """
    rc = rotation_ring_radius(d)
    per_quadrant = RING_SIDES // 4
    quad = [
        (rc * math.cos(math.pi / 2 * k / per_quadrant),
         rc * math.sin(math.pi / 2 * k / per_quadrant))
        for k in range(per_quadrant)
    ]
    quad[0] = (rc, 0.0)
    full = (
        quad
        + [(-y, x) for x, y in quad]
        + [(-x, -y) for x, y in quad]
        + [(y, -x) for x, y in quad]
    )
    return np.array(full)
