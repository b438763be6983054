"""Restoring-force families for the two obstacle motions.

The vertical family must be strictly increasing and grow fast enough toward
the walls that the spring always beats the near-wall hydrodynamic load
(which scales like the -3/2 power of the clearance); the torsional family
is odd, strictly increasing and blows up at the quarter turn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

# blow-up guard: force magnitude this close to the endpoint must exceed
# BLOWUP_RATIO times the mid-interval magnitude
ENDPOINT_DISTANCE = 1e-3
BLOWUP_RATIO = 1e3


@dataclass(frozen=True)
class VerticalSpring:
    """f(h) = kappa * h * (limit^2 - h^2)^(-p) on (-limit, limit).

    limit is the admissible half-interval (channel half-height minus the
    obstacle half-thickness).  p > 3/2 makes the near-wall growth strong
    enough; the default p=2 gives f'(0) = kappa * limit^(-4)... evaluated
    analytically by derivative().
    """

    kappa: float = 1.0
    p: float = 2.0
    limit: float = 1.0

    def __post_init__(self):
        if self.kappa <= 0:
            raise InputError(f"kappa must be positive, got {self.kappa}")
        if self.p <= 1.5:
            raise InputError(f"strong-force exponent requires p > 3/2, got {self.p}")
        if self.limit <= 0:
            raise InputError(f"limit must be positive, got {self.limit}")

    def value(self, h):
        h = np.asarray(h, dtype=float)
        out = self.kappa * h * (self.limit**2 - h * h) ** (-self.p)
        return float(out) if out.ndim == 0 else out

    def derivative(self, h):
        h = np.asarray(h, dtype=float)
        base = self.limit**2 - h * h
        out = self.kappa * (base ** (-self.p) + 2.0 * self.p * h * h * base ** (-self.p - 1))
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TorsionSpring:
    """g(theta) = kappa * tan(theta) on (-pi/2, pi/2): odd, increasing,
    unbounded at the quarter turn."""

    kappa: float = 1.0

    def __post_init__(self):
        if self.kappa <= 0:
            raise InputError(f"kappa must be positive, got {self.kappa}")

    @property
    def limit(self) -> float:
        return math.pi / 2.0

    def value(self, theta):
        out = self.kappa * np.tan(np.asarray(theta, dtype=float))
        return float(out) if out.ndim == 0 else out

    def derivative(self, theta):
        c = np.cos(np.asarray(theta, dtype=float))
        out = self.kappa / (c * c)
        return float(out) if out.ndim == 0 else out


class UserTable:
    """Monotone sampled restoring force with linear interpolation.

    The table must be strictly increasing, pass through the origin (f(0)=0,
    required because the sign structure of the equilibrium function is what
    the certification leans on), and blow up toward the endpoints per
    validate_strong_force.
    """

    def __init__(self, positions, values):
        pos = np.asarray(positions, dtype=float)
        val = np.asarray(values, dtype=float)
        if pos.ndim != 1 or pos.shape != val.shape or pos.size < 5:
            raise InputError("table needs matching 1D arrays with at least 5 samples")
        if np.any(np.diff(pos) <= 0):
            raise InputError("table positions must be strictly increasing")
        if np.any(np.diff(val) <= 0):
            raise InputError("table force must be strictly increasing")
        k = int(np.argmin(np.abs(pos)))
        if abs(pos[k]) > 1e-12 or abs(val[k]) > 1e-12:
            raise InputError("table must contain the origin sample f(0)=0")
        self.positions = pos
        self.values = val
        self.limit = float(max(-pos[0], pos[-1]))
        mid = self._interp(self.limit / 2.0)
        hi = max(abs(val[0]), abs(val[-1]))
        if hi < BLOWUP_RATIO * max(abs(mid), 1e-300) / 10.0:
            raise InputError(
                "table does not blow up toward the endpoints "
                f"(edge/mid magnitude ratio {hi / max(abs(mid), 1e-300):.1f})"
            )

    def _interp(self, h):
        return np.interp(h, self.positions, self.values)

    def value(self, h):
        h = np.asarray(h, dtype=float)
        if np.any(h > self.positions[-1]) or np.any(h < self.positions[0]):
            raise InputError("position outside the tabulated range")
        out = self._interp(h)
        return float(out) if out.ndim == 0 else out

    def derivative(self, h, step=1e-6):
        return (self.value(h + step) - self.value(h - step)) / (2.0 * step)


def validate_strong_force(force, limit=None, ratio=BLOWUP_RATIO) -> float:
    """Numeric blow-up audit: the force magnitude at ENDPOINT_DISTANCE from
    the endpoint must exceed `ratio` times its mid-interval magnitude, and
    the magnitude must grow monotonically along a grid approaching the
    endpoint.  Returns the measured ratio.

    Use ratio=1e2 for torsional families, whose endpoint growth is weaker by
    design (tan saturates at 1/distance).
    """
    lim = limit if limit is not None else force.limit
    ds = np.array([lim / 2.0, 1e-1, 1e-2, ENDPOINT_DISTANCE])
    ds = np.unique(ds[ds < lim])[::-1]
    mags = np.array([abs(force.value(lim - d)) for d in ds])
    if np.any(np.diff(mags) <= 0):
        raise InputError("force magnitude is not increasing toward the endpoint")
    measured = mags[-1] / max(mags[0], 1e-300)
    if measured < ratio:
        raise InputError(
            f"endpoint blow-up ratio {measured:.1f} below required {ratio}"
        )
    return float(measured)
