"""Compiled inner loops for the label Gibbs sweeps.

The sweep visits pixels one at a time in the given order; within a
visit the conditional over the 2^R - 1 admissible label configurations
is sampled by inverse CDF from precomputed per-pixel likelihood logits
plus the neighbour interaction term.  Randomness enters only through
the pre-drawn uniforms ``u`` (one per pixel), so results are exactly
reproducible for a fixed generator state.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def label_sweep(z, beta, like, configs, u, nbrs, counts, order):
    """One in-place Gibbs sweep over pixel labels.

    z        (R, N) uint8, mutated in place
    beta     (R,) coupling parameters
    like     (ncfg, N) data logits (arbitrary per-pixel shift allowed)
    configs  (ncfg, R) admissible 0/1 configurations as int64
    u        (N,) uniforms, one per pixel in visit order position
    nbrs     (N, 8) padded neighbour indices
    counts   (N,) number of valid neighbours per pixel
    order    (N,) pixel visit order
    """
    n_cfg, n_r = configs.shape
    logits = np.empty(n_cfg)
    probs = np.empty(n_cfg)
    ones = np.empty(n_r)
    for t in range(order.shape[0]):
        n = order[t]
        d = counts[n]
        for r in range(n_r):
            k = 0.0
            for j in range(d):
                k += z[r, nbrs[n, j]]
            ones[r] = k
        best = -1.0e300
        for c in range(n_cfg):
            s = like[c, n]
            for r in range(n_r):
                # neighbours agreeing with c_r: ones[r] if c_r = 1,
                # d - ones[r] if c_r = 0; interaction weight 2*beta_r
                if configs[c, r] == 1:
                    s += 2.0 * beta[r] * ones[r]
                else:
                    s += 2.0 * beta[r] * (d - ones[r])
            logits[c] = s
            if s > best:
                best = s
        tot = 0.0
        for c in range(n_cfg):
            p = np.exp(logits[c] - best)
            tot += p
            probs[c] = tot
        x = u[t] * tot
        pick = n_cfg - 1
        for c in range(n_cfg):
            if x < probs[c]:
                pick = c
                break
        for r in range(n_r):
            z[r, n] = configs[pick, r]


@njit(cache=True)
def agreement_counts(z, nbrs, counts):
    """phi_r(Z) for every r: ordered neighbour pairs with equal labels."""
    n_r, n_pix = z.shape
    out = np.zeros(n_r, dtype=np.int64)
    for n in range(n_pix):
        d = counts[n]
        for j in range(d):
            m = nbrs[n, j]
            for r in range(n_r):
                if z[r, n] == z[r, m]:
                    out[r] += 1
    return out
