"""Stationary 2D GMRF priors and their frequency-domain precision spectra.

A band ``h`` (one row of ``H``, seen as a ``rows x cols`` image) with prior
``(kernel, lam)`` carries the penalty ``(lam / 2) * ||h - Q^T h||^2``, whose
precision matrix ``lam (I - Q)(I - Q)^T`` is diagonalized by the 2D DFT with
eigenvalues ``lam * |1 - d|^2`` (``d`` the BCCB spectrum of ``Q``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ImproperPriorError, ShapeError
from .spectral import (
    GridShape,
    NeighborhoodKernel,
    bccb_spectrum,
    fft2_forward,
    fft2_inverse,
)

__all__ = [
    "GmrfPrior",
    "PrecisionSpectrum",
    "precision_spectrum",
    "gmrf_quadratic",
    "sample_gmrf",
    "IMPROPER_TOL",
]

# Spectrum entries at or below this are treated as exact nulls by the sampler.
IMPROPER_TOL = 1e-12


@dataclass(frozen=True)
class GmrfPrior:
    """Per-band GMRF prior: neighbor weights and scale ``lam > 0``.

    ``lam = 0`` is tolerated so the same type can describe the unregularized
    baseline; the sampler rejects it as improper.
    """

    kernel: NeighborhoodKernel
    lam: float

    def __post_init__(self):
        lam = float(self.lam)
        if not np.isfinite(lam) or lam < 0:
            raise ValueError(f"lambda must be a nonnegative finite number, got {self.lam!r}")
        object.__setattr__(self, "lam", lam)
        if not isinstance(self.kernel, NeighborhoodKernel):
            object.__setattr__(self, "kernel", NeighborhoodKernel.from_triples(self.kernel))

    def with_lambda(self, lam: float) -> "GmrfPrior":
        return GmrfPrior(self.kernel, lam)

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "kernel": self.kernel.to_triples()}

    @classmethod
    def from_dict(cls, block: dict) -> "GmrfPrior":
        return cls(NeighborhoodKernel.from_triples(block.get("kernel", [])), block["lambda"])


@dataclass(frozen=True)
class PrecisionSpectrum:
    """Eigenvalues ``m = lam |1 - d|^2`` of the precision matrix on a ``(rows, cols)`` grid."""

    values: np.ndarray
    shape: GridShape

    def __post_init__(self):
        if self.values.shape != self.shape.dims:
            raise ShapeError(f"spectrum of shape {self.values.shape} does not match grid {self.shape.dims}")


def precision_spectrum(prior: GmrfPrior, shape) -> PrecisionSpectrum:
    shape = GridShape.coerce(shape)
    d = bccb_spectrum(prior.kernel, shape).values
    return PrecisionSpectrum(prior.lam * np.abs(1.0 - d) ** 2, shape)


def _as_image(h, shape: GridShape) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.shape == shape.dims:
        return h
    if h.ndim != 1 or h.size != shape.n:
        raise ShapeError(f"band of shape {h.shape} does not match a grid with n={shape.n}")
    return h.reshape(shape.dims)


def gmrf_quadratic(prior: GmrfPrior, h, shape) -> float:
    """``(lam / 2) * ||h - Q^T h||^2`` evaluated by Parseval."""
    shape = GridShape.coerce(shape)
    h_hat = fft2_forward(_as_image(h, shape))
    m = precision_spectrum(prior, shape).values
    return float(0.5 * np.sum(m * np.abs(h_hat) ** 2) / shape.n)


def sample_gmrf(prior: GmrfPrior, shape, seed, *, drop_dc: bool = False) -> np.ndarray:
    """Draw one zero-mean field with precision ``lam (I - Q)(I - Q)^T``.

    White Gaussian noise is taken to the frequency domain (its spectrum is
    Hermitian by construction), colored by ``m ** -0.5`` and transformed back.

    Parameters
    ----------
    prior : GmrfPrior
    shape : GridShape or (rows, cols)
    seed : int or numpy.random.Generator
    drop_dc : bool, default False
        Zero the mean (DC) coefficient and exempt it from the properness
        check. Useful for intrinsic priors whose weights sum to one, when the
        field mean is irrelevant (e.g. it is rescaled afterwards).

    Returns
    -------
    ndarray of shape (n,)
        Row-major vectorized field.
    """
    shape = GridShape.coerce(shape)
    m = precision_spectrum(prior, shape).values
    keep = m > IMPROPER_TOL
    bad = ~keep
    if drop_dc:
        keep[0, 0] = bad[0, 0] = False
    if bad.any():
        u, v = (int(i) for i in np.argwhere(bad)[0])
        raise ImproperPriorError(
            f"precision spectrum is {m[u, v]:.3g} at frequency {(u, v)}; the prior has a flat direction"
        )
    rng = np.random.default_rng(seed)
    white = fft2_forward(rng.standard_normal(shape.dims))
    scale = np.zeros_like(m)
    np.divide(1.0, np.sqrt(m), out=scale, where=keep)
    return fft2_inverse(white * scale).real.ravel()
