"""Exception types raised by patchmg."""

import numpy as np


class DecompositionError(np.linalg.LinAlgError):
    """A matrix factorization failed (e.g. Cholesky of a non-SPD matrix)."""


class ResourceError(RuntimeError):
    """A size cap was exceeded (dense assembly, access traces)."""
