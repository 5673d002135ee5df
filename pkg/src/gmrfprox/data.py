"""Synthetic instances and file formats (CSV matrices, 16-bit PGM bands, trace CSV)."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ParseError, ShapeError
from .gmrf import GmrfPrior, sample_gmrf
from .spectral import GridShape, NeighborhoodKernel

__all__ = [
    "TEXTURE_STENCILS",
    "default_priors",
    "Instance",
    "generate_observation",
    "make_basis",
    "make_synthetic_instance",
    "read_matrix_csv",
    "write_matrix_csv",
    "read_band_image",
    "write_band_image",
    "read_trace_csv",
    "write_trace_csv",
    "TRACE_COLUMNS",
]

# 3x3 neighbor stencils estimated on oriented textures; entry (i, j) weights
# the neighbor at offset (i - 1, j - 1). The first sums to exactly one, so its
# precision spectrum vanishes at DC.
TEXTURE_STENCILS = (
    ((-0.26, 0.55, 0.0), (0.13, 0.0, 0.0), (0.58, 0.0, 0.0)),
    ((-0.19, 0.78, 0.0), (0.35, 0.0, 0.0), (0.042, 0.0, 0.0)),
    ((-0.68, 0.79, 0.0), (0.84, 0.0, 0.0), (0.047, 0.0, 0.0)),
)

DEFAULT_LAMBDA = 0.05
TWIN_COSINE = 0.99


def default_priors(d: int = 3, lam: float = DEFAULT_LAMBDA) -> list[GmrfPrior]:
    """Texture-stencil priors, cycled if ``d`` exceeds the number of stencils."""
    return [
        GmrfPrior(NeighborhoodKernel.from_stencil(TEXTURE_STENCILS[i % len(TEXTURE_STENCILS)]), lam)
        for i in range(d)
    ]


@dataclass
class Instance:
    W: np.ndarray
    H_true: np.ndarray
    Y: np.ndarray
    priors: list[GmrfPrior]
    shape: GridShape
    snr_db: float
    seed: int

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def m(self) -> int:
        return self.W.shape[0]


def generate_observation(W, H_true, snr_db: float, seed) -> np.ndarray:
    """``Y = W H + N`` with white Gaussian ``N`` scaled to the requested SNR.

    ``sigma^2 = ||W H||_F^2 / (m n 10^(snr_db / 10))`` uses the realized
    signal energy. ``snr_db = inf`` disables the noise.
    """
    W = np.asarray(W, dtype=float)
    H_true = np.asarray(H_true, dtype=float)
    if W.ndim != 2 or H_true.ndim != 2 or W.shape[1] != H_true.shape[0]:
        raise ShapeError(f"cannot multiply W {W.shape} by H {H_true.shape}")
    X = W @ H_true
    if math.isinf(snr_db) and snr_db > 0:
        return X
    sigma2 = np.sum(X**2) / (X.size * 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    return X + math.sqrt(sigma2) * rng.standard_normal(X.shape)


def _bump(m: int, center: float, width: float) -> np.ndarray:
    c = np.arange(m, dtype=float)
    return np.exp(-0.5 * ((c - center) / width) ** 2)


def _cosine(a, b) -> float:
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def make_basis(d: int, m: int, rng) -> np.ndarray:
    """Nonnegative smooth spectral signatures (peak value 1).

    The second column is a close variant of the first (cosine >= 0.99),
    which makes ``W^T W`` badly conditioned.
    """
    rng = np.random.default_rng(rng)
    width = max(m / 3.0, 0.75)
    cols = [
        _bump(m, rng.uniform(-0.5, m - 0.5), width * rng.uniform(0.8, 1.2))
        + 0.05 * rng.uniform(size=m)
        for _ in range(d)
    ]
    if d >= 2:
        # largest blend toward column 1 that keeps cosine >= 0.99 with column 0
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if _cosine((1 - mid) * cols[0] + mid * cols[1], cols[0]) >= TWIN_COSINE:
                lo = mid
            else:
                hi = mid
        cols[1] = (1 - lo) * cols[0] + lo * cols[1]
    W = np.stack(cols, axis=1)
    return W / W.max(axis=0)


def make_synthetic_instance(
    d: int,
    m: int,
    shape,
    priors: Sequence[GmrfPrior] | None = None,
    snr_db: float = 25.0,
    seed: int = 0,
) -> Instance:
    """Sample ``H`` rows from the priors (rescaled to [0, 1]), a basis and noisy data.

    The field mean is dropped while sampling since each band is affinely
    rescaled afterwards, so intrinsic priors with a DC null are accepted.
    """
    shape = GridShape.coerce(shape)
    priors = default_priors(d) if priors is None else list(priors)
    if len(priors) != d:
        raise ShapeError(f"{len(priors)} priors given for d={d}")
    basis_seq, noise_seq, *band_seqs = np.random.SeedSequence(seed).spawn(2 + d)
    W = make_basis(d, m, np.random.default_rng(basis_seq))
    H = np.empty((d, shape.n))
    for i, prior in enumerate(priors):
        sampling_prior = prior if prior.lam > 0 else prior.with_lambda(1.0)
        h = sample_gmrf(sampling_prior, shape, np.random.default_rng(band_seqs[i]), drop_dc=True)
        lo, hi = h.min(), h.max()
        H[i] = (h - lo) / (hi - lo) if hi > lo else 0.5
    Y = generate_observation(W, H, snr_db, np.random.default_rng(noise_seq))
    return Instance(W, H, Y, priors, shape, float(snr_db), int(seed))


# ---------------------------------------------------------------- CSV matrices


def write_matrix_csv(path, matrix) -> None:
    """Write a 2D matrix as header-less CSV using shortest round-trip floats."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    if matrix.ndim != 2:
        raise ShapeError(f"expected a 2D matrix, got shape {matrix.shape}")
    with open(path, "w", newline="") as fh:
        for row in matrix:
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
            if len(rows[-1]) != len(rows[0]):
                raise ParseError(
                    f"{path}:{lineno}: ragged row with {len(rows[-1])} cells, expected {len(rows[0])}"
                )
    if not rows:
        raise ParseError(f"{path}: empty matrix file")
    return np.array(rows, dtype=float)


# ------------------------------------------------------------------- PGM bands

_PGM_MAX = 65535
_AFFINE_RE = re.compile(r"gmrfprox\s+lo=(\S+)\s+hi=(\S+)(?:\s+degenerate=(\d))?")


def write_band_image(path, h, shape) -> None:
    """Write one band as a 16-bit binary PGM.

    Values are mapped affinely from ``[min, max]`` to ``[0, 65535]``; the
    bounds go in a comment line so :func:`read_band_image` can undo the map.
    A constant band is written as zeros and flagged ``degenerate=1``.
    """
    shape = GridShape.coerce(shape)
    h = np.asarray(h, dtype=float).reshape(shape.dims)
    lo, hi = float(h.min()), float(h.max())
    degenerate = not hi > lo
    if degenerate:
        q = np.zeros(shape.dims, dtype=">u2")
    else:
        q = np.rint((h - lo) / (hi - lo) * _PGM_MAX).astype(">u2")
    header = (
        f"P5\n# gmrfprox lo={lo!r} hi={hi!r} degenerate={int(degenerate)}\n"
        f"{shape.cols} {shape.rows}\n{_PGM_MAX}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(q.tobytes())


def _pgm_header(data: bytes, path):
    """Return (tokens, comments, offset of first sample byte)."""
    tokens, comments = [], []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise ParseError(f"{path}: truncated PGM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise ParseError(f"{path}: unterminated PGM comment")
            comments.append(data[pos + 1 : end].decode("ascii", "replace").strip())
            pos = end + 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
                pos += 1
            tokens.append(data[start:pos].decode("ascii", "replace"))
    # exactly one whitespace byte separates maxval from the raster
    return tokens, comments, pos + 1


def read_band_image(path) -> tuple[np.ndarray, GridShape]:
    """Read a binary PGM; undo the affine map if the file carries one.

    Returns the row-major band vector and its grid shape.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, comments, offset = _pgm_header(data, path)
    if tokens[0] != "P5":
        raise ParseError(f"{path}: expected magic 'P5', got {tokens[0]!r}")
    try:
        cols, rows, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise ParseError(f"{path}: malformed PGM size/maxval {tokens[1:4]}") from None
    if cols < 1 or rows < 1 or not 0 < maxval <= _PGM_MAX:
        raise ParseError(f"{path}: invalid PGM dimensions or maxval {tokens[1:4]}")
    dtype = ">u2" if maxval > 255 else "u1"
    count = rows * cols
    if len(data) - offset < count * np.dtype(dtype).itemsize:
        raise ParseError(f"{path}: PGM raster shorter than {rows}x{cols} samples")
    q = np.frombuffer(data, dtype=dtype, count=count, offset=offset).astype(float)
    shape = GridShape(rows, cols)
    for comment in comments:
        match = _AFFINE_RE.search(comment)
        if match:
            lo, hi = float(match.group(1)), float(match.group(2))
            if match.group(3) == "1":
                return np.full(count, lo), shape
            return lo + q / maxval * (hi - lo), shape
    return q, shape


# ------------------------------------------------------------------ trace CSV

TRACE_COLUMNS = ("iter", "elapsed_seconds", "objective", "rel_change", "rel_err", "nmse")


def write_trace_csv(path, trace) -> None:
    """Write a solver trace; missing optional values are left empty."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for e in trace:
            cells = [str(e.iter)]
            for name in TRACE_COLUMNS[1:]:
                value = getattr(e, name)
                cells.append("" if value is None else repr(float(value)))
            fh.write(",".join(cells) + "\n")


def read_trace_csv(path, solver: str = ""):
    from .optimizers import SolverTrace, TraceEntry

    trace = SolverTrace(solver)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_COLUMNS:
            raise ParseError(f"{path}: expected header {','.join(TRACE_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRACE_COLUMNS):
                raise ParseError(f"{path}:{lineno}: expected {len(TRACE_COLUMNS)} cells")
            try:
                values = [int(row[0])] + [None if c == "" else float(c) for c in row[1:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            trace.append(TraceEntry(*values))
    return trace
