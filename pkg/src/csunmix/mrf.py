"""Spatially correlated support prior over binary label fields.

The prior over a label field ``Z`` (R endmembers x N pixels) is

    f(Z | beta)  propto  psi(Z) * exp( sum_r beta_r * phi_r(Z) )

where ``phi_r`` counts ordered neighbour pairs with equal labels in row
``r`` (each unordered pair contributes twice), and ``psi`` is 1 when
every pixel has at least one active endmember and 0 otherwise.  The
normalising constant is never needed: all sampling is done through
single-pixel conditionals, where it cancels.

Single-pixel conditionals enumerate the 2^R - 1 admissible
configurations, so R is capped at ``R_ENUM_MAX``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import CapabilityError, NumericError
from .kernels import agreement_counts, label_sweep
from .types import GridGeometry, Library, NoiseModel, SupportField, neighbors
from .validation import as_float_array, require_binary, require_finite

# Enumerating 2^R - 1 configurations per pixel visit is exponential in R;
# beyond this the tables stop fitting in cache and the method is not
# practical anyway.
R_ENUM_MAX = 16


@lru_cache(maxsize=32)
def admissible_configs(n_endmembers: int) -> np.ndarray:
    """All non-empty binary configurations, shape (2^R - 1, R), int64.

    Row ``i`` holds the bits of the integer ``i + 1`` with bit ``r``
    (least significant first) giving the label of endmember ``r``.
    """
    r = int(n_endmembers)
    if r < 1:
        raise ValueError(f"need at least one endmember, got {r}")
    if r > R_ENUM_MAX:
        raise CapabilityError(
            f"R={r} exceeds the enumeration limit R_ENUM_MAX={R_ENUM_MAX}"
        )
    codes = np.arange(1, 2**r, dtype=np.int64)
    cfgs = (codes[:, None] >> np.arange(r, dtype=np.int64)[None, :]) & 1
    cfgs = np.ascontiguousarray(cfgs)
    cfgs.flags.writeable = False
    return cfgs


def _labels_array(z) -> np.ndarray:
    if isinstance(z, SupportField):
        return z.labels
    arr = np.asarray(z)
    if arr.ndim != 2:
        raise ValueError(f"label field must be 2-d, got shape {arr.shape}")
    return require_binary(arr, "labels")


def psi(z) -> int:
    """Non-empty-pixel indicator: 1 iff every column has an active label."""
    labels = _labels_array(z)
    if labels.shape[1] == 0:
        return 1
    return int(np.all(labels.max(axis=0) == 1))


def phi_all(z, geom: GridGeometry) -> np.ndarray:
    """phi_r(Z) for all rows at once, shape (R,), int64."""
    labels = _labels_array(z)
    if labels.shape[1] != geom.n_pixels:
        raise ValueError(
            f"field has {labels.shape[1]} pixels, geometry has {geom.n_pixels}"
        )
    nbrs, counts = geom.neighbor_table
    return agreement_counts(labels, nbrs, counts)


def phi(z, r: int, geom: GridGeometry) -> int:
    """Ordered equal-label neighbour pairs in row ``r``."""
    vals = phi_all(z, geom)
    if not (0 <= r < vals.shape[0]):
        raise ValueError(f"row index {r} outside [0, {vals.shape[0]})")
    return int(vals[r])


def _check_beta(beta, n_endmembers: int) -> np.ndarray:
    b = np.atleast_1d(as_float_array(beta, "beta"))
    if b.shape != (n_endmembers,):
        raise ValueError(f"beta must have shape ({n_endmembers},), got {b.shape}")
    require_finite(b, "beta")
    if b.size and b.min() < 0:
        raise ValueError("beta must be nonnegative")
    return b


def conditional_label_logweights(
    n: int,
    z,
    x_n: np.ndarray,
    y_n: np.ndarray,
    lib: Library,
    noise: NoiseModel,
    beta,
    geom: GridGeometry,
) -> np.ndarray:
    """Unnormalised log-weights of pixel ``n``'s label configuration.

    For each admissible configuration ``c`` the log-weight is

        2 * sum_r beta_r * #{n' in V(n): z_{r,n'} = c_r}
        - 0.5 * (y_n - M (x_n * c))^T Sigma0^{-1} (y_n - M (x_n * c))

    The all-zero configuration is excluded (the non-empty constraint),
    and the current value of ``z`` at pixel ``n`` itself plays no role.
    """
    labels = _labels_array(z)
    m = lib.data
    n_r = m.shape[1]
    if labels.shape[0] != n_r:
        raise ValueError(f"label field has {labels.shape[0]} rows, library has {n_r}")
    if labels.shape[1] != geom.n_pixels:
        raise ValueError("label field does not match the grid geometry")
    x_n = as_float_array(x_n, "x_n")
    y_n = as_float_array(y_n, "y_n")
    if x_n.shape != (n_r,):
        raise ValueError(f"x_n must have shape ({n_r},), got {x_n.shape}")
    if y_n.shape != (m.shape[0],):
        raise ValueError(f"y_n must have shape ({m.shape[0]},), got {y_n.shape}")
    require_finite(x_n, "x_n")
    require_finite(y_n, "y_n")
    if noise.n_bands != m.shape[0]:
        raise ValueError("noise model does not match the library band count")
    b = _check_beta(beta, n_r)

    cfgs = admissible_configs(n_r)
    nb = neighbors(n, geom)
    d = nb.shape[0]
    ones = labels[:, nb].sum(axis=1).astype(np.float64)  # (R,)
    agree = cfgs * ones[None, :] + (1 - cfgs) * (d - ones)[None, :]
    mrf_term = 2.0 * (agree @ b)

    cfg_f = cfgs.astype(np.float64)
    recon = (m * x_n[None, :]) @ cfg_f.T  # (L, ncfg)
    resid = y_n[:, None] - recon
    quad = np.einsum("lc,l->c", resid**2, 1.0 / noise.variances)
    return mrf_term - 0.5 * quad


def sample_pixel_label(rng: np.random.Generator, logweights: np.ndarray) -> np.ndarray:
    """Draw one configuration (uint8 vector) from unnormalised log-weights."""
    lw = np.atleast_1d(as_float_array(logweights, "logweights"))
    if lw.ndim != 1 or lw.size < 1:
        raise ValueError("logweights must be a non-empty vector")
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise ValueError("logweights must be < +inf and not NaN")
    best = lw.max()
    if best == -np.inf:
        raise NumericError("all label configurations have zero weight")
    w = np.exp(lw - best)
    w /= w.sum()
    n_cfg = lw.size
    n_r = int(n_cfg).bit_length() if (n_cfg + 1) & n_cfg == 0 else None
    if n_r is None:
        raise ValueError(f"{n_cfg} weights do not correspond to 2^R - 1 configurations")
    idx = int(rng.choice(n_cfg, p=w))
    return admissible_configs(n_r)[idx].astype(np.uint8)


def pixel_order(geom: GridGeometry, schedule: str = "raster") -> np.ndarray:
    """Visit order for sweeps.

    ``raster``: ascending pixel index.  ``chromatic``: the four classes
    of the (row parity, column parity) colouring in turn; same-class
    pixels are never 8-neighbours, so within-class updates commute and
    the schedule is safe to parallelise.
    """
    n = geom.n_pixels
    if schedule == "raster":
        return np.arange(n, dtype=np.int64)
    if schedule == "chromatic":
        idx = np.arange(n, dtype=np.int64)
        row = idx % geom.n_row
        col = idx // geom.n_row
        color = (row % 2) + 2 * (col % 2)
        return idx[np.argsort(color, kind="stable")]
    raise ValueError(f"unknown schedule {schedule!r}")


def _uniform_admissible_field(
    rng: np.random.Generator, n_endmembers: int, n_pixels: int
) -> np.ndarray:
    cfgs = admissible_configs(n_endmembers)
    idx = rng.integers(0, cfgs.shape[0], size=n_pixels)
    return np.ascontiguousarray(cfgs[idx].T.astype(np.uint8))


def iter_prior_fields(
    rng: np.random.Generator,
    beta,
    geom: GridGeometry,
    sweeps: int,
    init=None,
    schedule: str = "raster",
):
    """Yield the working label array after each of ``sweeps`` prior sweeps.

    The yielded array is the live working buffer; copy it if you keep
    it.  The initial state (not yielded) is drawn uniformly over
    admissible configurations unless ``init`` is given.
    """
    b = np.atleast_1d(as_float_array(beta, "beta"))
    require_finite(b, "beta")
    if b.ndim != 1 or b.size < 1:
        raise ValueError("beta must be a non-empty vector")
    if b.min() < 0:
        raise ValueError("beta must be nonnegative")
    n_r = b.shape[0]
    cfgs = admissible_configs(n_r)
    n = geom.n_pixels
    if init is None:
        z = _uniform_admissible_field(rng, n_r, n)
    else:
        z = _labels_array(init).copy()
        if z.shape != (n_r, n):
            raise ValueError(f"init must have shape ({n_r}, {n}), got {z.shape}")
        if psi(z) != 1:
            raise ValueError("init violates the non-empty-pixel constraint")
    nbrs, counts = geom.neighbor_table
    order = pixel_order(geom, schedule)
    like = np.zeros((cfgs.shape[0], n))
    for _ in range(int(sweeps)):
        u = rng.random(n)
        label_sweep(z, b, like, cfgs, u, nbrs, counts, order)
        yield z


def sample_prior_field(
    rng: np.random.Generator,
    beta,
    geom: GridGeometry,
    sweeps: int = 1,
    init=None,
    schedule: str = "raster",
) -> SupportField:
    """Run ``sweeps`` Gibbs sweeps on the label prior and return the state."""
    z = None
    for z in iter_prior_fields(rng, beta, geom, sweeps, init=init, schedule=schedule):
        pass
    if z is None:  # sweeps == 0
        if init is not None:
            return init if isinstance(init, SupportField) else SupportField(_labels_array(init))
        b = np.atleast_1d(as_float_array(beta, "beta"))
        z = _uniform_admissible_field(rng, b.shape[0], geom.n_pixels)
    return SupportField(z)


def likelihood_logit_table(
    y: np.ndarray,
    m: np.ndarray,
    x: np.ndarray,
    sigma2: np.ndarray,
    cfgs: np.ndarray,
) -> np.ndarray:
    """Per-pixel data logits for every admissible configuration.

    Entry ``(c, n)`` equals ``-0.5 * r^T Sigma0^{-1} r`` for the residual
    ``r = y_n - M (x_n * c)`` up to a per-pixel constant (the ``c``-free
    term is dropped; per-pixel shifts cancel in the conditional).
    Built from matrix products only: with ``G = M^T Sigma0^{-1} M``,

        logit(c, n) = c . b_n - 0.5 * c^T (G * x_n x_n^T) c,
        b_n = x_n * (M^T Sigma0^{-1} y_n).

    Memory is Theta(2^R * N).
    """
    w = 1.0 / sigma2
    g = (m.T * w[None, :]) @ m  # (R, R)
    b = x * ((m.T * w[None, :]) @ y)  # (R, N)
    c = cfgs.astype(np.float64)
    term1 = c @ b
    diag_part = c @ (np.diag(g)[:, None] * x**2)
    iu, ju = np.triu_indices(g.shape[0], k=1)
    if iu.size:
        cpair = c[:, iu] * c[:, ju]  # (ncfg, P)
        ppair = 2.0 * g[iu, ju][:, None] * x[iu] * x[ju]  # (P, N)
        off_part = cpair @ ppair
    else:
        off_part = 0.0
    return term1 - 0.5 * (diag_part + off_part)
