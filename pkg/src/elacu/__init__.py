"""Coupled elastic / nonlinear-acoustic wave simulator.

Hybrid spectral-element discretization: conforming nodal Q_p spaces inside
each material block, interior-penalty dG transmission across the
acoustic-acoustic interface, Neumann force exchange across the
elasto-acoustic interface, and leapfrog / Newmark / generalized-alpha time
stepping.  See the README for the CLI and the convergence harness.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateParametersError,
    ElacuError,
    InstabilityError,
    InvalidGeometryError,
    MeshConsistencyError,
    PointLocationError,
    SingularJacobianError,
    SolverError,
    StepFailureError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DegenerateParametersError",
    "ElacuError",
    "InstabilityError",
    "InvalidGeometryError",
    "MeshConsistencyError",
    "PointLocationError",
    "SingularJacobianError",
    "SolverError",
    "StepFailureError",
]
