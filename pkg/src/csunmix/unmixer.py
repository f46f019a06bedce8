"""Estimator-style front end.

Thin scikit-learn wrappers around the functional core: construct with
hyperparameters, ``fit`` an image, read estimates off fitted
attributes.  Images are accepted as ``HyperCube``, as ``(n_row, n_col,
L)`` arrays, or as flat ``(N, L)`` matrices (treated as an N x 1 grid,
which disables any meaningful spatial structure but keeps the solvers
usable on pixel lists).

``transform`` returns pixel-by-endmember abundances (N, R).  These
models are transductive — nothing is learned that transfers between
images except the fixed library — so ``transform`` simply solves the
given image with the configured settings.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import baselines
from .estimators import summarize
from .sampler import RunConfig, run_chain
from .types import HyperCube, Library
from .validation import as_float_array, require_finite


def coerce_cube(X) -> HyperCube:
    """Accept HyperCube, (n_row, n_col, L) image, or (N, L) pixel matrix."""
    if isinstance(X, HyperCube):
        return X
    arr = np.asarray(X)
    if arr.ndim == 3:
        arr = as_float_array(arr, "X", ndim=3)
        require_finite(arr, "X")
        n_row, n_col, n_bands = arr.shape
        data = arr.transpose(2, 1, 0).reshape(n_bands, n_row * n_col)
        return HyperCube(data, n_row, n_col)
    if arr.ndim == 2:
        arr = as_float_array(arr, "X", ndim=2)
        require_finite(arr, "X")
        return HyperCube(arr.T, arr.shape[0], 1)
    raise ValueError(f"X must be 2-d or 3-d, got shape {arr.shape}")


def coerce_library(library) -> Library:
    if library is None:
        raise ValueError("a spectral library is required; pass library=")
    if isinstance(library, Library):
        return library
    return Library(np.asarray(library))


class CollaborativeSparseUnmixer(TransformerMixin, BaseEstimator):
    """MCMC collaborative sparse unmixing with a spatial support prior.

    Parameters mirror ``RunConfig``; ``beta=None`` self-tunes the
    spatial couplings.  After ``fit``:

    ``support_``        (R, N) uint8 marginal-MMAP support
    ``abundances_``     (R, N) conditional posterior-mean abundances
    ``presence_``       (R, N) posterior presence frequencies
    ``active_count_``   (N,) actives per pixel
    ``beta_``           (R,) final spatial couplings
    ``sigma2_``         (L,) posterior-mean noise variances
    ``s2_``             (R,) posterior-mean abundance scales
    ``trace_``          the full ``ChainTrace``
    ``result_``         the bundled ``UnmixResult``
    """

    def __init__(
        self,
        library=None,
        n_mc: int = 3000,
        n_bi: int = 1000,
        beta=None,
        beta0: float = 0.3,
        gamma: float = 2.1,
        nu: float = 1.1,
        rho: float = 0.01,
        thin: int = 1,
        tmg_sweeps: int = 2,
        schedule: str = "raster",
        noise_prior=(0.0, 0.0),
        threads: int = 1,
        random_state=0,
    ):
        self.library = library
        self.n_mc = n_mc
        self.n_bi = n_bi
        self.beta = beta
        self.beta0 = beta0
        self.gamma = gamma
        self.nu = nu
        self.rho = rho
        self.thin = thin
        self.tmg_sweeps = tmg_sweeps
        self.schedule = schedule
        self.noise_prior = noise_prior
        self.threads = threads
        self.random_state = random_state

    def _config(self) -> RunConfig:
        seed = 0 if self.random_state is None else int(self.random_state)
        return RunConfig(
            n_mc=self.n_mc,
            n_bi=self.n_bi,
            seed=seed,
            beta=self.beta,
            beta0=self.beta0,
            gamma=self.gamma,
            nu=self.nu,
            rho=self.rho,
            thin=self.thin,
            tmg_sweeps=self.tmg_sweeps,
            schedule=self.schedule,
            noise_prior=tuple(self.noise_prior),
            threads=self.threads,
        )

    def fit(self, X, y=None):
        cube = coerce_cube(X)
        lib = coerce_library(self.library)
        trace = run_chain(cube, lib, self._config())
        result = summarize(trace)
        self.trace_ = trace
        self.result_ = result
        self.support_ = result.support.labels
        self.abundances_ = result.abundances.values
        self.presence_ = result.presence
        self.active_count_ = result.active_count
        self.beta_ = result.beta
        self.sigma2_ = result.sigma2
        self.s2_ = result.s2
        self.n_features_in_ = cube.n_bands
        return self

    def fit_transform(self, X, y=None):
        return self.fit(X).abundances_.T

    def transform(self, X):
        """Unmix ``X`` with the configured settings; returns (N, R)."""
        return self.fit(X).abundances_.T

    def predict(self, X):
        """MMAP endmember-presence map of ``X``, (N, R) uint8."""
        return self.fit(X).support_.T


class _BaselineUnmixer(TransformerMixin, BaseEstimator):
    """Shared plumbing for the deterministic baseline wrappers."""

    def fit_transform(self, X, y=None):
        return self.fit(X).abundances_.T

    def transform(self, X):
        return self.fit(X).abundances_.T

    def predict(self, X):
        return self.fit(X).support_.T


class NCLSUnmixer(_BaselineUnmixer):
    """Per-pixel nonnegative least squares with threshold support."""

    def __init__(self, library=None, rho: float = 0.01, threads: int = 1):
        self.library = library
        self.rho = rho
        self.threads = threads

    def fit(self, X, y=None):
        cube = coerce_cube(X)
        lib = coerce_library(self.library)
        res = baselines.ncls_image(cube, lib, threads=self.threads)
        self.result_ = res
        self.abundances_ = res.abundances.values
        self.support_ = baselines.threshold_support(res.abundances, self.rho)
        self.objective_ = res.objective
        self.n_features_in_ = cube.n_bands
        return self


class SunSALUnmixer(_BaselineUnmixer):
    """ADMM nonnegative l1 unmixing with threshold support."""

    def __init__(
        self,
        library=None,
        lam: float = 1e-3,
        rho: float = 0.01,
        max_iter: int = 1000,
        tol: float = 1e-6,
    ):
        self.library = library
        self.lam = lam
        self.rho = rho
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y=None):
        cube = coerce_cube(X)
        lib = coerce_library(self.library)
        res = baselines.sunsal_image(
            cube, lib, self.lam, max_iter=self.max_iter, tol=self.tol
        )
        self.result_ = res
        self.abundances_ = res.abundances.values
        self.support_ = baselines.threshold_support(res.abundances, self.rho)
        self.objective_ = res.objective
        self.converged_ = res.converged
        self.n_iter_ = res.iterations
        self.n_features_in_ = cube.n_bands
        return self
