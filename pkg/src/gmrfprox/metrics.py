"""Estimation quality and convergence measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["nmse", "rel_err", "ReferenceSolution", "reference_solution"]

REFERENCE_TOL = 1e-12
REFERENCE_MAX_ITERS = 100_000


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def nmse(H_hat, H_true) -> float:
    """``||H_hat - H_true||_F^2 / ||H_true||_F^2``."""
    H_hat, H_true = _pair(H_hat, H_true)
    denom = np.sum(H_true**2)
    if denom == 0:
        raise ZeroDivisionError("NMSE is undefined for an all-zero reference")
    return float(np.sum((H_hat - H_true) ** 2) / denom)


def rel_err(H, H_star) -> float:
    """``||H - H_star||_F / ||H_star||_F``."""
    H, H_star = _pair(H, H_star)
    denom = np.linalg.norm(H_star)
    if denom == 0:
        raise ZeroDivisionError("relative error is undefined for an all-zero reference")
    return float(np.linalg.norm(H - H_star) / denom)


@dataclass
class ReferenceSolution:
    H_star: np.ndarray
    produced_by: str
    iters: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.H_star)):
            raise ValueError("reference solution has non-finite entries")


def reference_solution(
    Y,
    W,
    priors,
    shape,
    box,
    gamma: float = 1.0,
    tol: float = REFERENCE_TOL,
    max_iters: int = REFERENCE_MAX_ITERS,
    cache=None,
) -> ReferenceSolution:
    """Tightly converged ADMM solution used as ``H*`` for relative errors."""
    from .optimizers import SolverConfig, admm

    config = SolverConfig(gamma=gamma, max_iters=max_iters, tol=tol, record_every=max_iters)
    H, trace = admm(Y, W, priors, shape, box, config, cache=cache)
    return ReferenceSolution(H, "admm", trace[-1].iter)
