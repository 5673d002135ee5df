from contextlib import contextmanager

import numpy as np
import pytest

from gmrfprox import GmrfPrior, NeighborhoodKernel
from gmrfprox.data import TEXTURE_STENCILS


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def texture_kernels():
    return [NeighborhoodKernel.from_stencil(s) for s in TEXTURE_STENCILS]


def random_kernel(rng, shape, q=None):
    """Distinct non-zero offsets inside a 3x3 window (or smaller grids)."""
    rows, cols = shape
    candidates = [
        (dr, dc)
        for dr in range(-1, 2)
        for dc in range(-1, 2)
        if (dr, dc) != (0, 0) and abs(dr) < rows and abs(dc) < cols
    ]
    # drop offsets that alias each other on tiny grids
    seen, unique = set(), []
    for dr, dc in candidates:
        pos = (dr % rows, dc % cols)
        if pos not in seen and pos != (0, 0):
            seen.add(pos)
            unique.append((dr, dc))
    q = len(unique) if q is None else min(q, len(unique))
    picks = rng.choice(len(unique), size=q, replace=False)
    offsets = tuple(unique[i] for i in picks)
    weights = tuple(rng.uniform(-0.6, 0.6, size=q))
    return NeighborhoodKernel(offsets, weights)


def random_priors(rng, d, shape, lam_range=(0.05, 2.0)):
    return [
        GmrfPrior(random_kernel(rng, shape, q=int(rng.integers(0, 5))), rng.uniform(*lam_range))
        for _ in range(d)
    ]


ACCEPTANCE_LINES: list[str] = []


@contextmanager
def criterion(number, title):
    """Record one PASS/FAIL line for an acceptance criterion.

    The body fills ``status["detail"]`` with the measured numbers; any
    exception marks the criterion as failed and is re-raised.
    """
    status = {"detail": ""}
    try:
        yield status
    except BaseException as exc:
        message = str(exc).splitlines()[0] if str(exc) else ""
        ACCEPTANCE_LINES.append(f"FAIL  {number:<3} {title}: {status['detail']} {type(exc).__name__} {message}")
        raise
    else:
        ACCEPTANCE_LINES.append(f"PASS  {number:<3} {title}: {status['detail']}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
