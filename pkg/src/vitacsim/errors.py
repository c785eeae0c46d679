"""Exception types shared across the simulation stack."""


class VitacError(Exception):
    """Base class for all errors raised by this package."""


class MeshFormatError(VitacError):
    """Mesh file could not be parsed."""


class InvertedTetError(VitacError):
    """A tetrahedron has non-positive signed volume."""


class NonManifoldBoundaryError(VitacError):
    """Extracted boundary is not a closed 2-manifold."""


class MarkerOutOfBoundsError(VitacError):
    """A marker grid point does not project onto the marker surface."""

    def __init__(self, marker_index, message=None):
        self.marker_index = marker_index
        super().__init__(message or f"marker {marker_index} lies outside the marker surface")


class SingularConfigurationError(VitacError):
    """Element inversion encountered while evaluating elastic energy."""


class NonConvergenceError(VitacError):
    """Newton iteration exhausted its budget before reaching tolerance."""

    def __init__(self, residual, iterations, message=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            message or f"no convergence after {iterations} iterations (residual {residual:.3e})"
        )


class ResetError(VitacError):
    """Environment reset failed (e.g. the grip solve did not converge)."""


class ConfigError(VitacError):
    """Invalid or unparseable configuration."""


class ProtocolError(VitacError):
    """Malformed or out-of-order protocol message."""

    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


class ReplayRefusedError(VitacError):
    """Replay preconditions not met (version or config hash mismatch)."""
