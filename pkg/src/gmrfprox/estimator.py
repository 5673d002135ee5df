"""scikit-learn style wrapper around the GMRF-regularized least-squares solvers."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .gmrf import GmrfPrior
from .optimizers import SOLVERS, BoxConstraint, SolverConfig, suggest_admm_gamma
from .prox import ProxProblem, build_cache, objective, prox_solve
from .spectral import GridShape, NeighborhoodKernel

__all__ = ["GmrfRegression"]


def _coerce_kernel(kernel) -> NeighborhoodKernel:
    # ndarray -> centred stencil; list/tuple -> [dr, dc, weight] triples
    if kernel is None:
        return NeighborhoodKernel()
    if isinstance(kernel, NeighborhoodKernel):
        return kernel
    if isinstance(kernel, np.ndarray):
        return NeighborhoodKernel.from_stencil(kernel)
    return NeighborhoodKernel.from_triples(kernel)


class GmrfRegression(TransformerMixin, BaseEstimator):
    """Box-constrained least squares with one 2D GMRF prior per output band.

    Pixels are samples: ``X`` has shape ``(rows * cols, m)`` (row-major pixel
    order, one column per measured channel) and the transformed output has
    shape ``(rows * cols, d)``, the regression coefficients of each pixel on
    the columns of ``basis``.

    Parameters
    ----------
    basis : array-like of shape (m, d)
        Known channel signatures.
    image_shape : tuple of int
        ``(rows, cols)`` of the image grid.
    kernels : list, optional
        One kernel per band: a :class:`NeighborhoodKernel`, a list of
        ``[row_offset, col_offset, weight]`` triples, or a numpy array holding
        an odd-sided centred stencil. ``None`` means no neighbors (a ridge penalty).
    lambdas : float or sequence of float, default=0.05
        Prior scales; ``0`` disables a band's prior.
    solver : {"admm", "fb", "fista"}, default="admm"
    gamma : float or "auto", default=1.0
        ADMM penalty; ``"auto"`` uses :func:`suggest_admm_gamma`.
    box : tuple of float or None, default=(0.0, 1.0)
        Entrywise bounds on the coefficients. With ``None`` the problem is
        solved directly by the closed-form solver.
    max_iter : int, default=500
    tol : float, default=1e-8
    record_every : int, default=1

    Attributes
    ----------
    coef_ : ndarray of shape (rows * cols, d)
        Coefficients estimated by ``fit``.
    trace_ : SolverTrace or None
        Iteration trace of the last solve (``None`` for the direct solve).
    n_iter_ : int
    objective_ : float
        Final value of the smooth objective.
    """

    def __init__(
        self,
        basis,
        image_shape,
        kernels=None,
        lambdas=0.05,
        solver="admm",
        gamma=1.0,
        box=(0.0, 1.0),
        max_iter=500,
        tol=1e-8,
        record_every=1,
    ):
        self.basis = basis
        self.image_shape = image_shape
        self.kernels = kernels
        self.lambdas = lambdas
        self.solver = solver
        self.gamma = gamma
        self.box = box
        self.max_iter = max_iter
        self.tol = tol
        self.record_every = record_every

    def _validate_params(self):
        W = check_array(self.basis, dtype=float, ensure_min_samples=1)
        d = W.shape[1]
        shape = GridShape.coerce(self.image_shape)
        kernels = [None] * d if self.kernels is None else list(self.kernels)
        if len(kernels) != d:
            raise ValueError(f"{len(kernels)} kernels given for {d} basis columns")
        if isinstance(self.lambdas, numbers.Real):
            lambdas = [float(self.lambdas)] * d
        else:
            lambdas = [float(v) for v in self.lambdas]
            if len(lambdas) != d:
                raise ValueError(f"{len(lambdas)} lambdas given for {d} basis columns")
        priors = [GmrfPrior(_coerce_kernel(k), lam) for k, lam in zip(kernels, lambdas)]
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {sorted(SOLVERS)}, got {self.solver!r}")
        gamma = suggest_admm_gamma(W) if self.gamma == "auto" else float(self.gamma)
        box = None if self.box is None else BoxConstraint(*self.box)
        return W, shape, priors, gamma, box

    def _check_X(self, X, shape, m):
        X = check_array(X, dtype=float)
        if X.shape != (shape.n, m):
            raise ValueError(
                f"X has shape {X.shape}, expected ({shape.n}, {m}) for a "
                f"{shape.rows}x{shape.cols} image with {m} channels"
            )
        return X

    def _solve(self, X):
        W, shape, priors, gamma, box = self._validate_params()
        X = self._check_X(X, shape, W.shape[0])
        Y = X.T
        cache = build_cache(W, priors, shape)
        if box is None:
            problem = ProxProblem(Y, W, priors, shape)
            H = prox_solve(problem, cache)
            trace, n_iter = None, 0
        else:
            config = SolverConfig(
                gamma=gamma, max_iters=self.max_iter, tol=self.tol, record_every=self.record_every
            )
            H, trace = SOLVERS[self.solver](Y, W, priors, shape, box, config, cache=cache)
            n_iter = trace[-1].iter
        value = objective(ProxProblem(Y, W, priors, shape), H, cache)
        return H, trace, n_iter, value

    def fit(self, X, y=None):
        """Estimate the coefficient images of ``X``."""
        H, self.trace_, self.n_iter_, self.objective_ = self._solve(X)
        self.coef_ = H.T
        self.n_features_in_ = np.asarray(self.basis).shape[0]
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X, y).coef_

    def transform(self, X):
        """Solve for a new image with the fitted settings."""
        check_is_fitted(self, "coef_")
        H, _, _, _ = self._solve(X)
        return H.T

    def inverse_transform(self, H):
        """Map coefficients back to noiseless channel data, ``H W^T``."""
        check_is_fitted(self, "coef_")
        W = np.asarray(self.basis, dtype=float)
        H = check_array(H, dtype=float)
        if H.shape[1] != W.shape[1]:
            raise ValueError(f"H has {H.shape[1]} columns, expected {W.shape[1]}")
        return H @ W.T

    def score(self, X, y=None):
        """Negative smooth objective of ``transform(X)`` on ``X``."""
        W, shape, priors, _, _ = self._validate_params()
        X = self._check_X(X, shape, W.shape[0])
        H = self.transform(X).T
        return -objective(ProxProblem(X.T, W, priors, shape), H)
