"""Proximal solvers for box-constrained least squares with GMRF penalties.

All three solvers minimize ``f(H) + iota_C(H)`` where ``f`` is the smooth
objective of :mod:`gmrfprox.prox` and ``C`` a box. ADMM handles ``f`` through
its exact proximity operator; forward-backward and FISTA take gradient steps
on ``f`` and project onto the box.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from .gmrf import GmrfPrior
from .metrics import nmse, rel_err
from .prox import (
    FrequencySolveCache,
    ProxOperator,
    ProxProblem,
    build_cache,
    grad_smooth,
    objective,
)
from .spectral import GridShape

__all__ = [
    "BoxConstraint",
    "SolverConfig",
    "TraceEntry",
    "SolverTrace",
    "project_box",
    "lipschitz_constant",
    "suggest_admm_gamma",
    "admm",
    "forward_backward",
    "fista",
    "SOLVERS",
]


@dataclass(frozen=True)
class BoxConstraint:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"box needs lo < hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def unbounded(cls) -> "BoxConstraint":
        return cls(-np.inf, np.inf)


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls shared by the solvers.

    ``gamma`` is the ADMM penalty and is ignored by FB/FISTA, which step with
    ``1 / L``. ``target_rel_err`` stops a run early once the distance to a
    supplied reference solution drops below it (checked at record points).
    """

    gamma: float = 1.0
    max_iters: int = 500
    tol: float = 1e-8
    record_every: int = 1
    target_rel_err: float | None = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError(f"max_iters must be a positive integer, got {self.max_iters}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError(f"record_every must be a positive integer, got {self.record_every}")

    @classmethod
    def from_dict(cls, values: dict) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown solver settings: {sorted(unknown)}")
        return cls(**values)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TraceEntry:
    iter: int
    elapsed_seconds: float
    objective: float
    rel_change: float
    rel_err: float | None = None
    nmse: float | None = None


@dataclass
class SolverTrace:
    """Per-iteration records of one solver run."""

    solver: str = ""
    entries: list[TraceEntry] = field(default_factory=list)

    def append(self, entry: TraceEntry) -> None:
        if self.entries:
            last = self.entries[-1]
            if entry.iter <= last.iter:
                raise ValueError(f"trace iterations must increase: {entry.iter} after {last.iter}")
            if entry.elapsed_seconds < last.elapsed_seconds:
                raise ValueError("trace elapsed_seconds must be nondecreasing")
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, idx):
        return self.entries[idx]

    def column(self, name: str) -> np.ndarray:
        return np.array(
            [np.nan if getattr(e, name) is None else getattr(e, name) for e in self.entries],
            dtype=float,
        )

    def time_to_rel_err(self, threshold: float) -> float:
        """Elapsed seconds at the first record with ``rel_err <= threshold`` (``inf`` if never)."""
        for e in self.entries:
            if e.rel_err is not None and e.rel_err <= threshold:
                return e.elapsed_seconds
        return math.inf

    def iters_to_rel_err(self, threshold: float) -> float:
        for e in self.entries:
            if e.rel_err is not None and e.rel_err <= threshold:
                return e.iter
        return math.inf


def project_box(H, box: BoxConstraint) -> np.ndarray:
    return np.clip(H, box.lo, box.hi)


def lipschitz_constant(W, priors: Sequence[GmrfPrior], shape) -> float:
    """Upper bound ``sigma_max(W^T W) + max_i max_k m_i[k]`` on the gradient's Lipschitz constant."""
    cache = build_cache(W, priors, shape)
    return _lipschitz_from_cache(cache)


def _lipschitz_from_cache(cache: FrequencySolveCache) -> float:
    return float(np.linalg.eigvalsh(cache.WtW)[-1] + cache.spectra.max())


def suggest_admm_gamma(W) -> float:
    """Geometric mean of the extreme eigenvalues of ``W^T W``.

    A penalty between the weakest and strongest data curvature; on
    ill-conditioned bases it converges far faster than ``gamma = 1``.
    """
    W = np.asarray(W, dtype=float)
    ev = np.linalg.eigvalsh(W.T @ W)
    lo = max(ev[0], ev[-1] * 1e-12)
    return float(np.sqrt(lo * ev[-1]))


def _rel_change(new: np.ndarray, old: np.ndarray) -> float:
    return float(np.linalg.norm(new - old) / (1.0 + np.linalg.norm(old)))


class _Monitor:
    """Records trace entries; time spent recording is excluded from ``elapsed_seconds``."""

    def __init__(self, name, problem, cache, config, H_true, reference):
        self.trace = SolverTrace(name)
        self.problem = problem
        self.cache = cache
        self.config = config
        self.H_true = H_true
        self.reference = reference
        self._paused = 0.0
        self._t0 = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self._t0 - self._paused

    def record(self, it: int, X: np.ndarray, rel_change: float, last: bool) -> bool:
        """Append an entry if due; return True when the target error is reached."""
        if not last and it % self.config.record_every:
            return False
        elapsed = self.elapsed()
        start = time.perf_counter()
        err = None if self.reference is None else rel_err(X, self.reference)
        entry = TraceEntry(
            iter=it,
            elapsed_seconds=elapsed,
            objective=objective(self.problem, X, self.cache),
            rel_change=rel_change,
            rel_err=err,
            nmse=None if self.H_true is None else nmse(X, self.H_true),
        )
        self.trace.append(entry)
        self._paused += time.perf_counter() - start
        target = self.config.target_rel_err
        return err is not None and target is not None and err <= target


def _setup(Y, W, priors, shape, cache, H_true, reference):
    problem = ProxProblem(Y, W, priors, GridShape.coerce(shape))
    if cache is None:
        cache = build_cache(problem.W, problem.priors, problem.shape)
    else:
        cache.check_compatible(problem.W, problem.shape)
    d, n = problem.d, problem.n
    if H_true is not None:
        H_true = np.asarray(H_true, dtype=float).reshape(d, n)
    if reference is not None:
        reference = np.asarray(reference, dtype=float).reshape(d, n)
    return problem, cache, H_true, reference


def _initial(X0, d, n) -> np.ndarray:
    if X0 is None:
        return np.zeros((d, n))
    X0 = np.asarray(X0, dtype=float)
    if X0.shape != (d, n):
        raise ValueError(f"initial point has shape {X0.shape}, expected {(d, n)}")
    return X0.copy()


def admm(
    Y,
    W,
    priors: Sequence[GmrfPrior],
    shape,
    box: BoxConstraint,
    config: SolverConfig,
    U0=None,
    G0=None,
    H_true=None,
    reference=None,
    cache: FrequencySolveCache | None = None,
) -> tuple[np.ndarray, SolverTrace]:
    """ADMM with the closed-form prox of ``f`` and projection onto the box.

    Each iteration performs, in order::

        H <- prox_{f / gamma}(U + G)
        U <- proj_box(H - G)
        G <- G - H + U

    The run stops when the relative change of ``H`` falls to ``config.tol``
    or after ``config.max_iters`` iterations. The returned matrix is the
    box-feasible ``U`` iterate.
    """
    problem, cache, H_true, reference = _setup(Y, W, priors, shape, cache, H_true, reference)
    U = _initial(U0, problem.d, problem.n)
    G = _initial(G0, problem.d, problem.n)
    prox = ProxOperator(problem.Y, problem.W, cache, config.gamma)
    monitor = _Monitor("admm", problem, cache, config, H_true, reference)
    H_prev = U
    for it in range(1, config.max_iters + 1):
        H = prox(U + G)
        U = project_box(H - G, box)
        G = G - H + U
        change = _rel_change(H, H_prev)
        H_prev = H
        done = change <= config.tol or it == config.max_iters
        if monitor.record(it, U, change, done) or done:
            break
    return U, monitor.trace


def forward_backward(
    Y,
    W,
    priors: Sequence[GmrfPrior],
    shape,
    box: BoxConstraint,
    config: SolverConfig,
    H0=None,
    H_true=None,
    reference=None,
    cache: FrequencySolveCache | None = None,
) -> tuple[np.ndarray, SolverTrace]:
    """Projected gradient ``H <- proj_box(H - grad f(H) / L)``."""
    problem, cache, H_true, reference = _setup(Y, W, priors, shape, cache, H_true, reference)
    step = 1.0 / _lipschitz_from_cache(cache)
    H = _initial(H0, problem.d, problem.n)
    monitor = _Monitor("fb", problem, cache, config, H_true, reference)
    for it in range(1, config.max_iters + 1):
        H_new = project_box(H - step * grad_smooth(problem, H, cache), box)
        change = _rel_change(H_new, H)
        H = H_new
        done = change <= config.tol or it == config.max_iters
        if monitor.record(it, H, change, done) or done:
            break
    return H, monitor.trace


def fista(
    Y,
    W,
    priors: Sequence[GmrfPrior],
    shape,
    box: BoxConstraint,
    config: SolverConfig,
    H0=None,
    H_true=None,
    reference=None,
    cache: FrequencySolveCache | None = None,
) -> tuple[np.ndarray, SolverTrace]:
    """FISTA: the forward-backward step taken at an extrapolated point.

    Uses ``t_1 = 1`` and ``t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2``.
    """
    problem, cache, H_true, reference = _setup(Y, W, priors, shape, cache, H_true, reference)
    step = 1.0 / _lipschitz_from_cache(cache)
    H = _initial(H0, problem.d, problem.n)
    Z = H
    t = 1.0
    monitor = _Monitor("fista", problem, cache, config, H_true, reference)
    for it in range(1, config.max_iters + 1):
        H_new = project_box(Z - step * grad_smooth(problem, Z, cache), box)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        Z = H_new + ((t - 1.0) / t_new) * (H_new - H)
        change = _rel_change(H_new, H)
        H, t = H_new, t_new
        done = change <= config.tol or it == config.max_iters
        if monitor.record(it, H, change, done) or done:
            break
    return H, monitor.trace


SOLVERS = {"admm": admm, "fb": forward_backward, "fista": fista}
