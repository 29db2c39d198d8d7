"""Exception hierarchy shared across the package."""


class ElacuError(Exception):
    """Base class for all errors raised by this package."""


class InvalidGeometryError(ElacuError):
    """Block specification describes a degenerate or inverted box."""


class MeshConsistencyError(ElacuError):
    """Blocks do not tile the domain (gap, overlap, or footprint mismatch)."""


class SingularJacobianError(ElacuError):
    """Element mapping is degenerate (non-positive Jacobian determinant)."""


class PointLocationError(ElacuError):
    """A point could not be located inside the slave block footprint."""


class DegenerateParametersError(ElacuError):
    """Material parameters make a closed-form expression singular."""


class ConfigError(ElacuError):
    """Run configuration is malformed or inconsistent."""


class SolverError(ElacuError):
    """A linear or nonlinear solve failed."""


class StepFailureError(SolverError):
    """A time step could not be completed (iteration stall, NaN state)."""


class InstabilityError(SolverError):
    """Explicit time integration blew up; a smaller time step is needed."""
