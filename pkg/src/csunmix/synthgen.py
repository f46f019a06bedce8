"""Synthetic scene generation.

Scenes follow the generative model itself: a support field drawn from
the spatial prior by Gibbs sweeps, half-normal abundance values, and
independent per-band Gaussian noise.  Field, values and noise come from
separate child generators of one root seed, so changing the noise level
leaves the drawn field and values untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, NumericError
from .mrf import sample_prior_field
from .rng import spawn_rngs
from .truncgauss import sample_halfnormal
from .types import (
    AbundanceField,
    GridGeometry,
    HyperCube,
    Library,
    SupportField,
    compose_abundances,
    mutual_coherence,
)
from .validation import as_float_array, check_vector_length, require_finite, require_positive


@dataclass(frozen=True)
class SceneSpec:
    """Recipe for one synthetic scene.

    ``beta`` (R,) are the spatial couplings, ``s`` (R,) the half-normal
    abundance scales (standard deviations, not variances) and
    ``sigma2`` either a scalar or per-band noise variances.
    """

    geom: GridGeometry
    lib: Library
    beta: np.ndarray
    s: np.ndarray = field(default_factory=lambda: np.array([0.3]))
    sigma2: np.ndarray = field(default_factory=lambda: np.array([8e-4]))
    prior_sweeps: int = 200
    seed: int = 0

    def __post_init__(self):
        r = self.lib.n_endmembers
        beta = check_vector_length(
            np.atleast_1d(as_float_array(self.beta, "beta")), r, "beta"
        )
        require_finite(beta, "beta")
        if beta.min() < 0:
            raise ValueError("beta must be nonnegative")
        s = check_vector_length(np.atleast_1d(as_float_array(self.s, "s")), r, "s")
        require_finite(s, "s")
        require_positive(s, "s")
        sigma2 = check_vector_length(
            np.atleast_1d(as_float_array(self.sigma2, "sigma2")),
            self.lib.n_bands,
            "sigma2",
        )
        require_finite(sigma2, "sigma2")
        require_positive(sigma2, "sigma2")
        if self.prior_sweeps < 1:
            raise ValueError("prior_sweeps must be >= 1")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "sigma2", sigma2)


def generate_scene(spec: SceneSpec) -> tuple[HyperCube, SupportField, AbundanceField]:
    """Draw (Y, Z_true, A_true) from the generative model."""
    rng_field, rng_values, rng_noise = spawn_rngs(spec.seed, 3)
    z = sample_prior_field(rng_field, spec.beta, spec.geom, sweeps=spec.prior_sweeps)
    n = spec.geom.n_pixels
    x = sample_halfnormal(rng_values, spec.s[:, None], size=(spec.lib.n_endmembers, n))
    a = compose_abundances(z, AbundanceField(x))
    clean = spec.lib.data @ a.values
    noise = rng_noise.normal(0.0, np.sqrt(spec.sigma2)[:, None], size=clean.shape)
    cube = HyperCube(clean + noise, spec.geom.n_row, spec.geom.n_col)
    return cube, z, a


def measure_snr(cube: HyperCube, lib: Library, a_true: AbundanceField) -> float:
    """Empirical SNR in dB: mean signal energy over mean noise energy.

    10 log10( mean_n ||M a_n||^2 / mean_n ||y_n - M a_n||^2 ).
    """
    clean = lib.data @ a_true.values
    noise = cube.data - clean
    p_sig = float(np.mean(np.sum(clean**2, axis=0)))
    p_noise = float(np.mean(np.sum(noise**2, axis=0)))
    if p_noise == 0.0:
        raise NumericError("zero noise power; SNR is undefined")
    return 10.0 * np.log10(p_sig / p_noise)


def sigma2_for_snr(
    spec: SceneSpec, target_db: float
) -> float:
    """Scalar noise variance that hits ``target_db`` on this scene.

    Because the field/value draws are independent of the noise stream,
    the clean image for ``spec`` can be formed once and the variance
    solved in closed form:  sigma^2 = mean||M a_n||^2 / (L 10^(dB/10)).
    """
    rng_field, rng_values, _ = spawn_rngs(spec.seed, 3)
    z = sample_prior_field(rng_field, spec.beta, spec.geom, sweeps=spec.prior_sweeps)
    x = sample_halfnormal(
        rng_values, spec.s[:, None], size=(spec.lib.n_endmembers, spec.geom.n_pixels)
    )
    a = compose_abundances(z, AbundanceField(x))
    clean = spec.lib.data @ a.values
    p_sig = float(np.mean(np.sum(clean**2, axis=0)))
    if p_sig == 0.0:
        raise NumericError("scene has zero signal power")
    return p_sig / (spec.lib.n_bands * 10.0 ** (target_db / 10.0))


def _staggered_bumps(n_bands: int, n_cols: int, spread: float) -> np.ndarray:
    """Smooth strictly positive columns with near-disjoint energy peaks."""
    t = np.linspace(0.0, 1.0, n_bands)
    centers = (np.arange(n_cols) + 0.5) / n_cols
    width = spread / n_cols
    bumps = np.exp(-0.5 * ((t[:, None] - centers[None, :]) / width) ** 2)
    return bumps + 1e-6


def make_correlated_library(
    rng: np.random.Generator,
    n_bands: int,
    n_endmembers: int,
    target: float,
    tol: float = 0.005,
    names=None,
) -> Library:
    """Build a strictly positive library with a chosen mutual coherence.

    Blends near-disjoint smooth bumps (coherence close to 0) with one
    shared envelope (coherence close to 1) and bisects the blend weight
    until the coherence is within ``tol`` of ``target``.  Raises
    ``CapabilityError`` when the target cannot be bracketed or hit in
    10^4 evaluations — with R > 2 the disjoint-bump end cannot reach
    exactly 0, so targets below that floor are infeasible.
    """
    if not (0.0 <= target < 1.0):
        raise ValueError(f"target coherence must be in [0, 1), got {target}")
    if n_endmembers < 2:
        raise ValueError("need at least two endmembers")
    if n_bands < 4 * n_endmembers:
        raise ValueError(
            f"need at least {4 * n_endmembers} bands for {n_endmembers} endmembers"
        )
    base = _staggered_bumps(n_bands, n_endmembers, spread=0.15)
    envelope = 0.5 + 0.5 * np.sin(np.pi * np.linspace(0.0, 1.0, n_bands)) ** 2
    envelope = envelope[:, None] + 0.05 * _staggered_bumps(n_bands, 1, 0.7)

    def blend(weight: float) -> np.ndarray:
        cols = (1.0 - weight) * base + weight * envelope
        return cols / np.linalg.norm(cols, axis=0, keepdims=True)

    evaluations = 0

    def coh(weight: float) -> float:
        nonlocal evaluations
        evaluations += 1
        if evaluations > 10_000:
            raise CapabilityError("coherence target not reached in 10^4 evaluations")
        return mutual_coherence(blend(weight))

    lo, hi = 0.0, 1.0 - 1e-9
    c_lo, c_hi = coh(lo), coh(hi)
    if not (c_lo - tol <= target <= c_hi + tol):
        raise CapabilityError(
            f"target {target} outside achievable range [{c_lo:.4g}, {c_hi:.4g}]"
        )
    w = lo
    c = c_lo
    while abs(c - target) > tol * 0.2:
        w = 0.5 * (lo + hi)
        c = coh(w)
        if c < target:
            lo = w
        else:
            hi = w
        if hi - lo < 1e-15:
            break
    if abs(c - target) > tol:
        raise CapabilityError(
            f"bisection stalled at coherence {c:.6f} for target {target}"
        )
    cols = blend(w)
    # reflectance-like positive scaling, reproducible from the same rng
    peaks = 0.4 + 0.5 * rng.random(n_endmembers)
    cols = cols / cols.max(axis=0, keepdims=True) * peaks[None, :]
    return Library(cols, names=tuple(names) if names else ())
