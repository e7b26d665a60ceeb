"""Twin unitaries, Schmidt machinery and a certified probability-rule pipeline."""

from .errors import (
    CertificationError,
    CommutationError,
    DimensionError,
    EnvkitError,
    NormError,
    NotCertifiableError,
    ValidationError,
)
from .hilbert import BipartiteState, DensityOperator, reduced_density, spectral
from .schmidt import canonical_schmidt, correlation_operator, subsystem_picture
from .tolerances import DEFAULT, Tolerances

__version__ = "0.1.0"
