"""Point estimates from a sampler trace.

The support estimate is the marginal MMAP: endmember r is declared
present at pixel n when its posterior presence frequency is >= 1/2
(ties go to presence, which favours the non-empty-pixel constraint).
The abundance estimate is the conditional posterior mean given that the
pixel's whole label column equals the MMAP column, which is exactly
zero off the estimated support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampler import ChainTrace
from .types import AbundanceField, SupportField
from .validation import frozen_copy


def presence_frequencies(trace: ChainTrace) -> np.ndarray:
    """Posterior presence frequency of each (endmember, pixel), (R, N)."""
    kept = trace.kept_iterations()
    if kept.size == 0:
        raise ValueError("no post-burn-in iterations in the trace")
    counts = np.zeros(trace.n_endmembers * trace.n_pixels, dtype=np.int64)
    for t in kept:
        counts += np.unpackbits(trace.z_bits[t - 1], count=counts.size)
    return (counts / kept.size).reshape(trace.n_endmembers, trace.n_pixels)


def mmap_support(trace: ChainTrace) -> tuple[SupportField, np.ndarray]:
    """Marginal MMAP support and the presence-frequency map behind it.

    If every frequency in a pixel column falls below 1/2 (possible for
    R >= 3) the most frequent endmember is switched on so the estimate
    remains an admissible field.
    """
    prob = presence_frequencies(trace)
    labels = (prob >= 0.5).astype(np.uint8)
    empty = np.flatnonzero(labels.max(axis=0) == 0)
    if empty.size:
        labels[np.argmax(prob[:, empty], axis=0), empty] = 1
    return SupportField(labels), prob


def mmse_abundances(
    trace: ChainTrace, support: SupportField
) -> tuple[AbundanceField, int]:
    """Conditional posterior-mean abundances given the MMAP support.

    Averages the stored abundance samples over post-burn-in iterations
    whose label column matches ``support`` at that pixel; entries off
    the support are exactly zero.  Pixels whose column was never
    visited fall back to the unconditional mean of Z*X restricted to
    the support; the second return value counts those pixels.
    """
    iters, xs = trace.kept_x()
    if iters.size == 0:
        raise ValueError("no post-burn-in abundance samples in the trace")
    zhat = support.labels
    r, n = zhat.shape
    cond_sum = np.zeros((r, n))
    cond_cnt = np.zeros(n, dtype=np.int64)
    full_sum = np.zeros((r, n))
    for t, x in zip(iters, xs):
        z = trace.z_at(int(t))
        x64 = x.astype(np.float64)
        match = ~np.any(z != zhat, axis=0)
        cond_sum[:, match] += x64[:, match]
        cond_cnt[match] += 1
        full_sum += z * x64
    values = np.zeros((r, n))
    hit = cond_cnt > 0
    values[:, hit] = cond_sum[:, hit] / cond_cnt[hit]
    if not np.all(hit):
        values[:, ~hit] = full_sum[:, ~hit] / iters.size
    values *= zhat
    return AbundanceField(values), int(np.sum(~hit))


@dataclass(frozen=True)
class UnmixResult:
    """Bundled point estimates from one sampler run."""

    support: SupportField
    abundances: AbundanceField
    presence: np.ndarray        # (R, N) posterior presence frequencies
    active_count: np.ndarray    # (N,) actives per pixel in the MMAP support
    beta: np.ndarray            # (R,) final (frozen) spatial couplings
    sigma2: np.ndarray          # (L,) posterior-mean noise variances
    s2: np.ndarray              # (R,) posterior-mean abundance scales
    unmatched_pixels: int       # pixels estimated through the fallback rule

    def __post_init__(self):
        if np.any(self.active_count < 1):
            raise ValueError("MMAP support has an empty pixel column")
        object.__setattr__(self, "presence", frozen_copy(self.presence))
        object.__setattr__(self, "active_count", frozen_copy(self.active_count))
        object.__setattr__(self, "beta", frozen_copy(self.beta))
        object.__setattr__(self, "sigma2", frozen_copy(self.sigma2))
        object.__setattr__(self, "s2", frozen_copy(self.s2))


def summarize(trace: ChainTrace) -> UnmixResult:
    """All point estimates of one run in a single pass over the trace."""
    support, prob = mmap_support(trace)
    abund, unmatched = mmse_abundances(trace, support)
    post = slice(trace.n_bi, trace.n_mc)
    return UnmixResult(
        support=support,
        abundances=abund,
        presence=prob,
        active_count=support.active_count(),
        beta=trace.beta[-1].copy(),
        sigma2=trace.sigma2[post].mean(axis=0),
        s2=trace.s2[post].mean(axis=0),
        unmatched_pixels=unmatched,
    )
