"""2D FFT helpers and eigenvalues of block-circulant (BCCB) convolution matrices.

Conventions used throughout the package:

* the forward transform is un-normalized and the inverse carries ``1/n``
  (``scipy.fft`` "backward" normalization);
* an image of shape ``(rows, cols)`` is vectorized row-major, so pixel
  ``(r, c)`` is entry ``r * cols + c`` of a row of ``H``; the same order
  indexes frequencies ``(u, v)``;
* the BCCB matrix ``Q`` of a kernel acts as periodic convolution,
  ``(Q h)[r, c] = sum_l alpha_l * h[r - dr_l, c - dc_l]``, so its eigenvalues
  are the 2D DFT of the kernel embedded at its (wrapped) offsets;
* for real images the spectrum is Hermitian, so the ``cols // 2 + 1``
  leading columns (the "half grid" of ``rfft2``) determine it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.fft

from .exceptions import InvalidKernelError, ShapeError

__all__ = [
    "GridShape",
    "NeighborhoodKernel",
    "BccbSpectrum",
    "fft2_forward",
    "fft2_inverse",
    "rfft2_forward",
    "rfft2_inverse",
    "half_grid_weights",
    "bccb_spectrum",
    "bccb_matvec",
]

# scipy.fft thread count; -1 uses every available core.
FFT_WORKERS = -1


@dataclass(frozen=True)
class GridShape:
    """Image grid of ``rows x cols`` pixels with periodic boundaries."""

    rows: int
    cols: int

    def __post_init__(self):
        for name in ("rows", "cols"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ShapeError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def dims(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @classmethod
    def coerce(cls, shape) -> "GridShape":
        if isinstance(shape, GridShape):
            return shape
        rows, cols = shape
        return cls(rows, cols)


@dataclass(frozen=True)
class NeighborhoodKernel:
    """Neighbor offsets ``(dr, dc)`` with their GMRF weights.

    Weights are used exactly as given; no symmetrization is applied.
    """

    offsets: tuple[tuple[int, int], ...] = ()
    weights: tuple[float, ...] = ()

    def __post_init__(self):
        offsets = tuple((int(dr), int(dc)) for dr, dc in self.offsets)
        weights = tuple(float(w) for w in self.weights)
        if len(offsets) != len(weights):
            raise InvalidKernelError(
                f"{len(offsets)} offsets but {len(weights)} weights"
            )
        if (0, 0) in offsets:
            raise InvalidKernelError("offset (0, 0) is not allowed: a site is not its own neighbor")
        if len(set(offsets)) != len(offsets):
            raise InvalidKernelError(f"duplicate offsets in kernel: {offsets}")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "weights", weights)

    @property
    def q(self) -> int:
        """Neighborhood size."""
        return len(self.offsets)

    @classmethod
    def from_triples(cls, triples: Iterable[Sequence[float]]) -> "NeighborhoodKernel":
        """Build from ``[row_offset, col_offset, weight]`` triples."""
        triples = [tuple(t) for t in triples]
        for t in triples:
            if len(t) != 3:
                raise InvalidKernelError(f"expected [row_offset, col_offset, weight], got {list(t)}")
            if int(t[0]) != t[0] or int(t[1]) != t[1]:
                raise InvalidKernelError(f"offsets must be integers, got {list(t)}")
        return cls(
            offsets=tuple((int(t[0]), int(t[1])) for t in triples),
            weights=tuple(float(t[2]) for t in triples),
        )

    @classmethod
    def from_stencil(cls, stencil) -> "NeighborhoodKernel":
        """Build from an odd-sized 2D coefficient array centred on the site.

        Entry ``stencil[i, j]`` becomes the weight of offset
        ``(i - i_c, j - j_c)``; zero entries and the centre are dropped.
        """
        stencil = np.asarray(stencil, dtype=float)
        if stencil.ndim != 2 or stencil.shape[0] % 2 == 0 or stencil.shape[1] % 2 == 0:
            raise InvalidKernelError(f"stencil must be a 2D array with odd sides, got shape {stencil.shape}")
        ic, jc = stencil.shape[0] // 2, stencil.shape[1] // 2
        if stencil[ic, jc] != 0:
            raise InvalidKernelError("stencil centre must be zero")
        offsets, weights = [], []
        for i, j in zip(*np.nonzero(stencil)):
            offsets.append((int(i - ic), int(j - jc)))
            weights.append(float(stencil[i, j]))
        return cls(tuple(offsets), tuple(weights))

    def to_triples(self) -> list[list[float]]:
        return [[dr, dc, w] for (dr, dc), w in zip(self.offsets, self.weights)]

    def scaled(self, factor: float) -> "NeighborhoodKernel":
        return NeighborhoodKernel(self.offsets, tuple(factor * w for w in self.weights))

    def embed(self, shape: GridShape) -> np.ndarray:
        """Kernel image on the grid with offsets wrapped periodically."""
        shape = GridShape.coerce(shape)
        image = np.zeros(shape.dims)
        seen = set()
        for (dr, dc), w in zip(self.offsets, self.weights):
            if abs(dr) >= shape.rows or abs(dc) >= shape.cols:
                raise InvalidKernelError(
                    f"offset {(dr, dc)} does not fit a {shape.rows}x{shape.cols} grid"
                )
            pos = (dr % shape.rows, dc % shape.cols)
            if pos == (0, 0) or pos in seen:
                raise InvalidKernelError(
                    f"offset {(dr, dc)} aliases another site on a {shape.rows}x{shape.cols} grid"
                )
            seen.add(pos)
            image[pos] = w
        return image


@dataclass(frozen=True)
class BccbSpectrum:
    """Eigenvalues of ``Q``, stored as a ``(rows, cols)`` complex grid.

    The flattened (row-major) grid is the length-``n`` eigenvalue vector.
    """

    values: np.ndarray
    shape: GridShape

    def __post_init__(self):
        if self.values.shape != self.shape.dims:
            raise ShapeError(f"spectrum of shape {self.values.shape} does not match grid {self.shape.dims}")


def _check_grid(array: np.ndarray, shape) -> None:
    if array.ndim < 2:
        raise ShapeError(f"expected at least a 2D grid, got array of shape {array.shape}")
    if shape is not None and array.shape[-2:] != GridShape.coerce(shape).dims:
        raise ShapeError(
            f"grid of shape {array.shape[-2:]} does not match expected {GridShape.coerce(shape).dims}"
        )


def fft2_forward(field, shape=None) -> np.ndarray:
    """Un-normalized 2D DFT over the last two axes.

    Leading axes, if any, are treated as a batch of images.
    """
    field = np.asarray(field)
    _check_grid(field, shape)
    return scipy.fft.fft2(field, axes=(-2, -1), workers=FFT_WORKERS)


def fft2_inverse(spectrum, shape=None) -> np.ndarray:
    """Inverse of :func:`fft2_forward` (carries the ``1/n`` factor)."""
    spectrum = np.asarray(spectrum)
    _check_grid(spectrum, shape)
    return scipy.fft.ifft2(spectrum, axes=(-2, -1), workers=FFT_WORKERS)


def rfft2_forward(field, shape=None) -> np.ndarray:
    """Half-grid 2D DFT of real images: columns ``0 .. cols // 2`` of :func:`fft2_forward`."""
    field = np.asarray(field, dtype=float)
    _check_grid(field, shape)
    return scipy.fft.rfft2(field, axes=(-2, -1), workers=FFT_WORKERS)


def rfft2_inverse(half, shape) -> np.ndarray:
    """Real images whose Hermitian spectrum has ``half`` as its leading columns."""
    dims = GridShape.coerce(shape).dims
    half = np.asarray(half)
    if half.ndim < 2 or half.shape[-2:] != (dims[0], dims[1] // 2 + 1):
        raise ShapeError(f"half spectrum of shape {half.shape[-2:]} does not fit grid {dims}")
    return scipy.fft.irfft2(half, s=dims, axes=(-2, -1), workers=FFT_WORKERS)


def half_grid_weights(cols: int) -> np.ndarray:
    """Multiplicity of each half-grid column in the full spectrum (1 or 2)."""
    w = np.full(cols // 2 + 1, 2.0)
    w[0] = 1.0
    if cols % 2 == 0:
        w[-1] = 1.0
    return w


def bccb_spectrum(kernel: NeighborhoodKernel, shape) -> BccbSpectrum:
    """Eigenvalues of the BCCB matrix that convolves periodically with ``kernel``."""
    shape = GridShape.coerce(shape)
    return BccbSpectrum(fft2_forward(kernel.embed(shape)), shape)


def bccb_matvec(kernel: NeighborhoodKernel, field, shape=None) -> np.ndarray:
    """Apply ``Q`` to real image(s) through the frequency domain."""
    field = np.asarray(field, dtype=float)
    shape = GridShape(*field.shape[-2:]) if shape is None else GridShape.coerce(shape)
    spec = bccb_spectrum(kernel, shape).values
    return fft2_inverse(spec * fft2_forward(field, shape)).real
