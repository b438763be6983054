"""Exception types shared across the package."""


class ChannelEqError(Exception):
    """Base class for all package errors."""


class GeometryError(ChannelEqError):
    """Inadmissible domain geometry (e.g. rotation clearance violated)."""


class CollisionError(GeometryError):
    """Obstacle touches or crosses a channel wall."""


class RangeError(GeometryError):
    """Rotation angle outside the open admissible interval."""


class MeshFailure(ChannelEqError):
    """Mesh generation could not reach the quality/size targets."""


class MissingTag(ChannelEqError):
    """A boundary tag has no Dirichlet datum."""


class SingularSystem(ChannelEqError):
    """The constrained linear system could not be factorized/solved."""


class NoConvergence(ChannelEqError):
    """Nonlinear iteration failed; carries the last residual and the flow
    regime that was reached."""

    def __init__(self, message, residual=None, reynolds=None):
        super().__init__(message)
        self.residual = residual
        self.reynolds = reynolds


class DofMismatch(ChannelEqError):
    """Fields passed to an operation do not share a DofMap."""


class InputError(ChannelEqError):
    """Invalid user input (config file, CLI arguments, degenerate study)."""
