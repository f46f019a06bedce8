"""Truncated-Gaussian sampling on the positive orthant.

Three layers:

* ``sample_halfnormal`` — |N(0, s^2)| draws.
* ``sample_univariate_truncnorm`` — N(mean, sd^2) restricted to
  [lower, inf).  Standardised bounds up to 0.5 use plain rejection from
  the untruncated normal; larger bounds use the shifted-exponential
  proposal with rate (a + sqrt(a^2 + 4)) / 2, whose acceptance rate
  stays bounded away from zero for any ``a``.
* ``sample_orthant_gaussian`` / ``orthant_gibbs_sweeps`` — multivariate
  N(mean, cov) restricted to the positive orthant via coordinate Gibbs;
  each coordinate's full conditional is an exact univariate truncated
  normal, so the sweep leaves the target invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NumericError
from .validation import as_float_array, frozen_copy, require_finite

# switch point between the two rejection regimes, in standardised units
TAIL_SWITCH = 0.5
_MAX_REJECT_ROUNDS = 10_000


def sample_halfnormal(rng: np.random.Generator, scale, size=None) -> np.ndarray | float:
    """|N(0, scale^2)| draws; mean is scale * sqrt(2/pi)."""
    s = np.asarray(scale, dtype=np.float64)
    require_finite(s, "scale")
    if np.any(s <= 0):
        raise ValueError("scale must be strictly positive")
    out = np.abs(rng.normal(0.0, s, size=size))
    if size is None and s.ndim == 0:
        return float(out)
    return out


def _std_lower_truncnorm(rng: np.random.Generator, a: np.ndarray) -> np.ndarray:
    """Standard normal conditioned on being >= a, elementwise over ``a``."""
    out = np.empty_like(a)
    naive_idx = np.flatnonzero(a <= TAIL_SWITCH)
    for _ in range(_MAX_REJECT_ROUNDS):
        if naive_idx.size == 0:
            break
        z = rng.standard_normal(naive_idx.size)
        ok = z >= a[naive_idx]
        out[naive_idx[ok]] = z[ok]
        naive_idx = naive_idx[~ok]
    else:
        raise NumericError("truncated-normal rejection did not terminate (bulk regime)")

    tail_idx = np.flatnonzero(a > TAIL_SWITCH)
    for _ in range(_MAX_REJECT_ROUNDS):
        if tail_idx.size == 0:
            break
        at = a[tail_idx]
        lam = 0.5 * (at + np.sqrt(at * at + 4.0))
        x = at - np.log(rng.random(tail_idx.size)) / lam
        ok = rng.random(tail_idx.size) <= np.exp(-0.5 * (x - lam) ** 2)
        out[tail_idx[ok]] = x[ok]
        tail_idx = tail_idx[~ok]
    else:
        raise NumericError("truncated-normal rejection did not terminate (tail regime)")
    return out


def sample_univariate_truncnorm(rng: np.random.Generator, mean, sd, lower=0.0):
    """Draw from N(mean, sd^2) restricted to [lower, inf).

    Arguments broadcast; the result is a float when all are scalars.
    """
    mean_a, sd_a, lower_a = np.broadcast_arrays(
        np.asarray(mean, dtype=np.float64),
        np.asarray(sd, dtype=np.float64),
        np.asarray(lower, dtype=np.float64),
    )
    require_finite(mean_a, "mean")
    require_finite(sd_a, "sd")
    require_finite(lower_a, "lower")
    if np.any(sd_a <= 0):
        raise ValueError("sd must be strictly positive")
    a = ((lower_a - mean_a) / sd_a).ravel()
    z = _std_lower_truncnorm(rng, a).reshape(mean_a.shape)
    out = mean_a + sd_a * z
    # guard against rounding exactly onto the bound
    out = np.maximum(out, np.nextafter(lower_a, np.inf))
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class OrthantGaussian:
    """A Gaussian N(mean, cov) restricted to the positive orthant."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(as_float_array(self.mean, "mean"))
        if mean.ndim != 1:
            raise ValueError(f"mean must be a vector, got shape {mean.shape}")
        require_finite(mean, "mean")
        cov = as_float_array(self.cov, "cov", ndim=2)
        require_finite(cov, "cov")
        k = mean.shape[0]
        if cov.shape != (k, k):
            raise ValueError(f"cov must be ({k}, {k}), got {cov.shape}")
        if not np.allclose(cov, cov.T, rtol=1e-8, atol=1e-12):
            raise ValueError("cov must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("cov must be positive definite") from None
        object.__setattr__(self, "mean", frozen_copy(mean))
        object.__setattr__(self, "cov", frozen_copy(0.5 * (cov + cov.T)))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def precision(self) -> tuple[np.ndarray, np.ndarray]:
        """(precision matrix, potential vector precision @ mean)."""
        c, low = cho_factor(self.cov)
        prec = cho_solve((c, low), np.eye(self.dim))
        prec = 0.5 * (prec + prec.T)
        return prec, prec @ self.mean


def orthant_gibbs_sweeps(
    rng: np.random.Generator,
    prec: np.ndarray,
    pot: np.ndarray,
    x: np.ndarray,
    sweeps: int = 2,
) -> np.ndarray:
    """Coordinate-Gibbs sweeps for a batch of orthant-restricted Gaussians.

    prec   (B, k, k) precision matrices
    pot    (B, k)    potential vectors (precision @ mean)
    x      (B, k)    strictly positive current states, updated in place

    Coordinate r's full conditional is N(m, v) on (0, inf) with
    v = 1 / prec_rr and m = (pot_r - sum_{s != r} prec_rs x_s) * v.
    """
    if x.ndim != 2:
        raise ValueError(f"x must be (B, k), got shape {x.shape}")
    n_b, k = x.shape
    if prec.shape != (n_b, k, k) or pot.shape != (n_b, k):
        raise ValueError("prec/pot shapes do not match x")
    for _ in range(int(sweeps)):
        for r in range(k):
            prr = prec[:, r, r]
            off = np.einsum("bs,bs->b", prec[:, r, :], x) - prr * x[:, r]
            sd = 1.0 / np.sqrt(prr)
            mean = (pot[:, r] - off) / prr
            x[:, r] = sample_univariate_truncnorm(rng, mean, sd, 0.0)
    return x


def sample_orthant_gaussian(
    rng: np.random.Generator,
    g: OrthantGaussian,
    initial: np.ndarray | None = None,
    sweeps: int = 2,
) -> np.ndarray:
    """One (approximately stationary) draw via ``sweeps`` coordinate sweeps.

    The kernel targets the orthant Gaussian exactly; finitely many
    sweeps from a fixed start are an MCMC approximation, which is how
    the draw is used inside the larger samplers.
    """
    prec, pot = g.precision()
    if initial is None:
        sd = np.sqrt(np.diag(g.cov))
        x0 = np.maximum(np.abs(g.mean), 0.5 * sd)
    else:
        x0 = np.atleast_1d(as_float_array(initial, "initial")).copy()
        if x0.shape != (g.dim,):
            raise ValueError(f"initial must have shape ({g.dim},)")
        if np.any(x0 <= 0):
            raise ValueError("initial must be strictly positive")
    x = x0[None, :].copy()
    orthant_gibbs_sweeps(rng, prec[None, :, :], pot[None, :], x, sweeps=sweeps)
    return x[0]
