"""Deterministic unmixing baselines.

* NCLS — per-pixel nonnegative least squares (scipy's active-set
  solver), plus an oracle variant restricted to a known support.
* A sparse variant solving, per pixel,
      min_a 0.5 * ||y - M a||^2 + lam * sum(a)   s.t.  a >= 0
  by ADMM with the standard split a/z and adaptive penalty.  All pixels
  share one factorisation, so the image-level solve is a handful of
  matrix products per iteration.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import nnls

from .types import AbundanceField, HyperCube, Library, check_dimensions
from .validation import as_float_array, require_binary, require_finite


@dataclass(frozen=True)
class BaselineResult:
    """Output of an image-level baseline solve."""

    abundances: AbundanceField
    method: str
    iterations: int
    objective: float
    converged: bool
    objective_trace: np.ndarray | None = None


def ncls(y: np.ndarray, lib: Library) -> np.ndarray:
    """Nonnegative least squares for a single pixel, (R,)."""
    y = as_float_array(y, "y")
    require_finite(y, "y")
    if y.shape != (lib.n_bands,):
        raise ValueError(f"y must have shape ({lib.n_bands},), got {y.shape}")
    return nnls(lib.data, y)[0]


def oracle_ncls(y: np.ndarray, lib: Library, support: np.ndarray) -> np.ndarray:
    """NCLS restricted to the active columns of a known support.

    Inactive entries are exactly zero.  With a full support this is
    plain NCLS.
    """
    y = as_float_array(y, "y")
    require_finite(y, "y")
    sup = require_binary(np.atleast_1d(support), "support")
    if sup.shape != (lib.n_endmembers,):
        raise ValueError(f"support must have shape ({lib.n_endmembers},)")
    out = np.zeros(lib.n_endmembers)
    active = np.flatnonzero(sup)
    if active.size == 0:
        return out
    out[active] = nnls(lib.data[:, active], y)[0]
    return out


def _ncls_block(m: np.ndarray, block: np.ndarray) -> np.ndarray:
    out = np.empty((m.shape[1], block.shape[1]))
    for j in range(block.shape[1]):
        out[:, j] = nnls(m, block[:, j])[0]
    return out


def ncls_image(cube: HyperCube, lib: Library, threads: int = 1) -> BaselineResult:
    """Per-pixel NCLS over a whole image."""
    check_dimensions(cube, lib)
    y = cube.data
    if threads > 1 and cube.n_pixels > 1:
        bounds = np.linspace(0, cube.n_pixels, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(
                    lambda se: _ncls_block(lib.data, y[:, se[0] : se[1]]),
                    zip(bounds[:-1], bounds[1:]),
                )
            )
        a = np.concatenate(parts, axis=1)
    else:
        a = _ncls_block(lib.data, y)
    resid = y - lib.data @ a
    return BaselineResult(
        abundances=AbundanceField(a),
        method="ncls",
        iterations=0,
        objective=float(0.5 * np.sum(resid**2)),
        converged=True,
    )


def oracle_ncls_image(
    cube: HyperCube, lib: Library, support: np.ndarray
) -> BaselineResult:
    """Per-pixel oracle NCLS given the true support field (R, N)."""
    check_dimensions(cube, lib)
    sup = require_binary(support, "support")
    if sup.shape != (lib.n_endmembers, cube.n_pixels):
        raise ValueError("support shape does not match cube/library")
    a = np.zeros((lib.n_endmembers, cube.n_pixels))
    for n in range(cube.n_pixels):
        a[:, n] = oracle_ncls(cube.data[:, n], lib, sup[:, n])
    resid = cube.data - lib.data @ a
    return BaselineResult(
        abundances=AbundanceField(a),
        method="oracle-ncls",
        iterations=0,
        objective=float(0.5 * np.sum(resid**2)),
        converged=True,
    )


def _l1_objective(y, m, a, lam) -> float:
    resid = y - m @ a
    return float(0.5 * np.sum(resid**2) + lam * np.sum(a))


def sunsal_image(
    cube: HyperCube,
    lib: Library,
    lam: float,
    max_iter: int = 1000,
    tol: float = 1e-6,
    mu: float = 1.0,
) -> BaselineResult:
    """ADMM solve of the nonnegative l1 problem for every pixel at once.

    Returns the projected split variable, so inactive abundances are
    exact zeros.  Non-convergence within ``max_iter`` is flagged on the
    result, not raised.  The reported objective is the best feasible
    value seen; its running minimum is non-increasing by construction.
    """
    check_dimensions(cube, lib)
    lam = float(lam)
    if lam < 0 or not np.isfinite(lam):
        raise ValueError(f"lam must be finite and >= 0, got {lam}")
    if mu <= 0:
        raise ValueError("mu must be > 0")
    y = cube.data
    m = lib.data
    r, n = lib.n_endmembers, cube.n_pixels
    gram = m.T @ m
    mty = m.T @ y
    factor = cho_factor(gram + mu * np.eye(r))
    x = np.maximum(cho_solve(factor, mty), 0.0)
    z = x.copy()
    u = np.zeros((r, n))
    scale = np.sqrt(r * n)
    best_obj = _l1_objective(y, m, z, lam)
    best_z = z.copy()
    trace = [best_obj]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        x = cho_solve(factor, mty + mu * (z - u))
        z_prev = z
        z = np.maximum(x + u - lam / mu, 0.0)
        u = u + x - z
        obj = _l1_objective(y, m, z, lam)
        if obj < best_obj:
            best_obj = obj
            best_z = z.copy()
        trace.append(best_obj)
        r_primal = np.linalg.norm(x - z) / scale
        r_dual = mu * np.linalg.norm(z - z_prev) / scale
        if r_primal < tol and r_dual < tol:
            converged = True
            break
        if r_primal > 10.0 * r_dual:
            mu *= 2.0
            u /= 2.0
            factor = cho_factor(gram + mu * np.eye(r))
        elif r_dual > 10.0 * r_primal:
            mu /= 2.0
            u *= 2.0
            factor = cho_factor(gram + mu * np.eye(r))
    return BaselineResult(
        abundances=AbundanceField(best_z),
        method="sunsal",
        iterations=it,
        objective=best_obj,
        converged=converged,
        objective_trace=np.asarray(trace),
    )


def sunsal(
    y: np.ndarray,
    lib: Library,
    lam: float,
    max_iter: int = 1000,
    tol: float = 1e-6,
) -> BaselineResult:
    """Single-pixel convenience wrapper around ``sunsal_image``."""
    y = as_float_array(y, "y")
    require_finite(y, "y")
    if y.shape != (lib.n_bands,):
        raise ValueError(f"y must have shape ({lib.n_bands},), got {y.shape}")
    cube = HyperCube(y[:, None], 1, 1)
    return sunsal_image(cube, lib, lam, max_iter=max_iter, tol=tol)


def threshold_support(abundances, rho: float) -> np.ndarray:
    """Binary support by strict thresholding: 1 where a > rho.

    Returns a raw (R, N) uint8 array; unlike sampled fields, empty
    pixel columns are permitted here.
    """
    a = abundances.values if isinstance(abundances, AbundanceField) else np.asarray(abundances)
    a = as_float_array(a, "abundances", ndim=2)
    rho = float(rho)
    if not np.isfinite(rho) or rho < 0:
        raise ValueError(f"rho must be finite and >= 0, got {rho}")
    return (a > rho).astype(np.uint8)


def sunsal_lambda_grid() -> np.ndarray:
    """Half-decade grid from 1e-4 to 1 used for regulariser selection."""
    return 10.0 ** np.linspace(-4.0, 0.0, 9)


def sunsal_best_lambda(
    cube: HyperCube,
    lib: Library,
    a_true: AbundanceField,
    lambdas: np.ndarray | None = None,
) -> tuple[float, BaselineResult]:
    """Pick the grid regulariser with the lowest abundance RMSE vs truth.

    An oracle selection: it peeks at the ground truth, so it can only
    flatter the sparse baseline.
    """
    grid = sunsal_lambda_grid() if lambdas is None else np.atleast_1d(lambdas)
    best = None
    best_lam = float(grid[0])
    best_err = np.inf
    for lam in grid:
        res = sunsal_image(cube, lib, float(lam))
        err = np.sqrt(
            np.mean((res.abundances.values - a_true.values) ** 2)
        )
        if err < best_err:
            best_err = err
            best = res
            best_lam = float(lam)
    return best_lam, best
