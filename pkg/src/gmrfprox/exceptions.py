"""Exception types raised across the package."""

import numpy as np


class ShapeError(ValueError):
    """Array dimensions are inconsistent with the grid or with each other."""


class InvalidKernelError(ValueError):
    """A neighborhood kernel has duplicate, self, or out-of-grid offsets."""


class ImproperPriorError(ValueError):
    """The precision spectrum vanishes at some frequency, so the field cannot be sampled."""


class SingularSystemError(np.linalg.LinAlgError):
    """A per-frequency system of the prox solve is not positive definite.

    Attributes
    ----------
    frequency : tuple of int
        ``(u, v)`` grid index of the first offending frequency.
    """

    def __init__(self, message, frequency=None):
        super().__init__(message)
        self.frequency = frequency


class ParseError(ValueError):
    """A CSV, PGM or config file could not be parsed."""
