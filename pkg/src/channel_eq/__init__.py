"""Steady fluid-structure equilibria of a rigid rectangle in 2D Poiseuille
channel flow: mixed finite elements, dual lift/torque formulas, and numerical
certification of the symmetric equilibrium."""

__version__ = "0.1.0"

from .geometry import DomainSpec, Rotation, Translation  # noqa: F401
from .meshing import BoundaryTag, Mesh, generate_mesh, mirror_mesh  # noqa: F401
