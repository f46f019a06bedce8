"""Gibbs sampler for the collaborative sparse unmixing model.

One iteration updates, in order: the label field Z (one full sweep of
single-pixel conditionals), the abundance values X (coordinate Gibbs on
the positive orthant, all pixels in parallel), the per-band noise
variances, the per-endmember abundance scales, and — when no fixed
value is supplied — the spatial couplings beta by stochastic projected
gradient on the marginal likelihood, comparing clique statistics of the
posterior chain with those of an auxiliary prior chain.

Conditionals:

* x_n | ...  ~ N(mu_n, Sigma_n) on (0, inf)^R with
  Sigma_n^{-1} = D_n M^T S0^{-1} M D_n + diag(s^-2),
  mu_n = Sigma_n D_n M^T S0^{-1} y_n,  D_n = diag(z_n).
* sigma_l^2 | ... ~ InvGamma(a0 + N/2, b0 + ||row residual||^2 / 2);
  (a0, b0) = (0, 0) is the default improper Jeffreys choice.
* s_r^2 | ... ~ InvGamma(gamma + N/2, nu + sum_n x_{r,n}^2 / 2).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import nnls

from . import mrf
from .errors import NumericError
from .kernels import label_sweep
from .rng import make_rng
from .truncgauss import orthant_gibbs_sweeps
from .types import (
    BETA_MAX,
    GridGeometry,
    HyperCube,
    Library,
    check_dimensions,
)
from .validation import as_float_array, check_positive_int, require_finite

_SIGMA2_FLOOR = 1e-12
_X_INIT_FLOOR = 1e-3


@dataclass(frozen=True)
class RunConfig:
    """Sampler settings.

    ``beta=None`` turns on self-tuning (initialised at ``beta0``);
    a scalar or length-R vector keeps beta fixed.  ``beta_warmup``
    sweeps are spent bringing the tuner's auxiliary prior chain away
    from its uniform start before the first gradient is taken.
    ``noise_prior`` is the conjugate inverse-gamma (shape, scale) on
    each band variance; (0, 0) means the Jeffreys prior.
    ``sigma2_fixed`` / ``s2_fixed`` clamp those blocks entirely
    (useful for validation runs).  ``thin`` applies to the stored
    abundance trace only; labels are kept for every iteration in
    packed form.
    """

    n_mc: int = 3000
    n_bi: int = 1000
    seed: int = 0
    beta: object = None
    beta0: float = 0.3
    beta_warmup: int = 200
    delta0: float = 1.0
    decay: float = 0.8
    beta_max: float = BETA_MAX
    gamma: float = 2.1
    nu: float = 1.1
    rho: float = 0.01
    thin: int = 1
    tmg_sweeps: int = 2
    schedule: str = "raster"
    noise_prior: tuple = (0.0, 0.0)
    sigma2_fixed: object = None
    s2_fixed: object = None
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "n_mc", check_positive_int(self.n_mc, "n_mc"))
        object.__setattr__(self, "n_bi", check_positive_int(self.n_bi, "n_bi", minimum=0))
        if self.n_bi >= self.n_mc:
            raise ValueError(f"n_bi={self.n_bi} must be < n_mc={self.n_mc}")
        object.__setattr__(self, "thin", check_positive_int(self.thin, "thin"))
        object.__setattr__(self, "tmg_sweeps", check_positive_int(self.tmg_sweeps, "tmg_sweeps"))
        object.__setattr__(self, "threads", check_positive_int(self.threads, "threads"))
        if self.gamma <= 1:
            raise ValueError("gamma must be > 1")
        if self.nu <= 0:
            raise ValueError("nu must be > 0")
        if not (0 < self.rho < 1):
            raise ValueError("rho must be in (0, 1)")
        if self.decay <= 0.5 or self.decay > 1:
            raise ValueError("decay must lie in (0.5, 1]")
        if self.delta0 <= 0:
            raise ValueError("delta0 must be > 0")
        object.__setattr__(
            self, "beta_warmup",
            check_positive_int(self.beta_warmup, "beta_warmup", minimum=0),
        )
        if not (0 < self.beta_max <= BETA_MAX):
            raise ValueError(f"beta_max must be in (0, {BETA_MAX}]")
        a0, b0 = self.noise_prior
        if a0 < 0 or b0 < 0:
            raise ValueError("noise_prior components must be >= 0")
        if (a0 == 0) != (b0 == 0):
            raise ValueError("noise_prior must be (0, 0) or have both parts > 0")
        if self.schedule not in ("raster", "chromatic"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


@dataclass(frozen=True)
class ChainState:
    """Current values of all sampled blocks (arrays are not copied)."""

    z: np.ndarray       # (R, N) uint8
    x: np.ndarray       # (R, N) float64, strictly positive
    sigma2: np.ndarray  # (L,)
    s2: np.ndarray      # (R,)
    beta: np.ndarray    # (R,)
    iteration: int = 0

    def __post_init__(self):
        if self.z.shape != self.x.shape:
            raise ValueError("z and x shapes differ")
        r = self.z.shape[0]
        if self.s2.shape != (r,) or self.beta.shape != (r,):
            raise ValueError("s2/beta length does not match the field")


def ncls_abundances(cube: HyperCube, lib: Library) -> np.ndarray:
    """Per-pixel nonnegative least squares, (R, N)."""
    m = lib.data
    out = np.empty((lib.n_endmembers, cube.n_pixels))
    for n in range(cube.n_pixels):
        out[:, n] = nnls(m, cube.data[:, n])[0]
    return out


def init_state(rng: np.random.Generator, cube: HyperCube, lib: Library, cfg: RunConfig) -> ChainState:
    """Deterministic warm start from a nonnegative least-squares fit.

    z starts at the rho-thresholded NCLS support (empty pixels get
    their best-correlated endmember switched on), x at the NCLS values
    clamped away from zero, sigma^2 at per-band residual variances and
    s^2 at its prior mean nu / (gamma - 1).
    """
    check_dimensions(cube, lib)
    n_r = lib.n_endmembers
    mrf.admissible_configs(n_r)  # enforces the enumeration limit early
    a0 = ncls_abundances(cube, lib)
    z = (a0 > cfg.rho).astype(np.uint8)
    empty = np.flatnonzero(z.max(axis=0) == 0)
    if empty.size:
        corr = lib.data.T @ cube.data[:, empty]
        z[np.argmax(corr, axis=0), empty] = 1
    x = np.maximum(a0, _X_INIT_FLOOR)
    if cfg.sigma2_fixed is not None:
        sigma2 = _vector(cfg.sigma2_fixed, cube.n_bands, "sigma2_fixed")
    else:
        resid = cube.data - lib.data @ (z * a0)
        sigma2 = np.maximum((resid**2).mean(axis=1), _SIGMA2_FLOOR)
    if cfg.s2_fixed is not None:
        s2 = _vector(cfg.s2_fixed, n_r, "s2_fixed")
    else:
        s2 = np.full(n_r, cfg.nu / (cfg.gamma - 1.0))
    if cfg.beta is not None:
        beta = _vector(cfg.beta, n_r, "beta")
        if beta.min() < 0 or beta.max() > cfg.beta_max:
            raise ValueError(f"fixed beta must lie in [0, {cfg.beta_max}]")
    else:
        beta = _vector(cfg.beta0, n_r, "beta0")
    return ChainState(z=z, x=x, sigma2=sigma2, s2=s2, beta=beta, iteration=0)


def _vector(value, length: int, name: str) -> np.ndarray:
    v = np.atleast_1d(as_float_array(value, name))
    if v.shape == (1,) and length > 1:
        v = np.full(length, v[0])
    if v.shape != (length,):
        raise ValueError(f"{name} must be a scalar or length-{length} vector")
    require_finite(v, name)
    return v


def step_labels(
    rng: np.random.Generator,
    state: ChainState,
    cube: HyperCube,
    lib: Library,
    schedule: str = "raster",
) -> ChainState:
    """One full sweep of the single-pixel label conditionals."""
    geom = cube.geometry
    cfgs = mrf.admissible_configs(lib.n_endmembers)
    like = mrf.likelihood_logit_table(cube.data, lib.data, state.x, state.sigma2, cfgs)
    nbrs, counts = geom.neighbor_table
    order = mrf.pixel_order(geom, schedule)
    z = state.z.copy()
    u = rng.random(geom.n_pixels)
    label_sweep(z, state.beta, like, cfgs, u, nbrs, counts, order)
    return replace(state, z=z)


def step_abundances(
    rng: np.random.Generator,
    state: ChainState,
    cube: HyperCube,
    lib: Library,
    sweeps: int = 2,
) -> ChainState:
    """Coordinate-Gibbs update of X for all pixels at once.

    Inactive coordinates (z = 0) fall back to their half-normal prior;
    active ones follow the orthant-truncated conditional Gaussian.
    """
    m = lib.data
    w = 1.0 / state.sigma2
    g = (m.T * w[None, :]) @ m
    zf = state.z.astype(np.float64)
    prec = np.einsum("rn,sn->nrs", zf, zf) * g[None, :, :]
    idx = np.arange(lib.n_endmembers)
    prec[:, idx, idx] += 1.0 / state.s2[None, :]
    pot = (zf * ((m.T * w[None, :]) @ cube.data)).T  # (N, R)
    x = np.ascontiguousarray(state.x.T)
    orthant_gibbs_sweeps(rng, prec, pot, x, sweeps=sweeps)
    return replace(state, x=np.ascontiguousarray(x.T))


def step_noise(
    rng: np.random.Generator,
    state: ChainState,
    cube: HyperCube,
    lib: Library,
    prior: tuple = (0.0, 0.0),
) -> ChainState:
    """Conjugate inverse-gamma draw of each band's noise variance."""
    resid = cube.data - lib.data @ (state.z * state.x)
    n = cube.n_pixels
    shape = prior[0] + 0.5 * n
    scale = prior[1] + 0.5 * (resid**2).sum(axis=1)
    draws = rng.gamma(shape, 1.0, size=scale.shape)
    if np.any(draws <= 0):
        raise NumericError("degenerate gamma draw in the noise update")
    return replace(state, sigma2=np.maximum(scale / draws, _SIGMA2_FLOOR))


def step_scales(
    rng: np.random.Generator,
    state: ChainState,
    gamma: float = 2.1,
    nu: float = 1.1,
) -> ChainState:
    """Conjugate inverse-gamma draw of the abundance scales s_r^2."""
    n = state.x.shape[1]
    shape = gamma + 0.5 * n
    scale = nu + 0.5 * (state.x**2).sum(axis=1)
    draws = rng.gamma(shape, 1.0, size=scale.shape)
    if np.any(draws <= 0):
        raise NumericError("degenerate gamma draw in the scale update")
    return replace(state, s2=scale / draws)


@dataclass
class BetaTuner:
    """Projected stochastic-gradient tuner for the spatial couplings.

    The gradient of the log marginal likelihood w.r.t. beta_r is
    phi_r(Z) - E_prior[phi_r]; the expectation is tracked by a
    persistent auxiliary chain on the bare prior that advances one
    sweep per iteration.  Steps decay as delta0 * t^-decay, are
    normalised by the total number of ordered neighbour pairs, and are
    projected onto [0, beta_max].  After ``freeze_at`` iterations the
    running tail average (over the final ``avg_window`` updates) is
    frozen and used for the rest of the run.

    The first ``warmup`` iterations are a hold: the auxiliary chain
    advances one sweep per iteration from its uniform start while beta
    stays at its initial value, and the step-size clock starts after
    the hold.  Without it the first gradients compare a posterior chain
    that is still burning in its hyperparameters against an auxiliary
    field that is still essentially uniform; both mismatches point the
    same way and the large early steps kick the couplings into the
    slow-mixing regime they never recover from.
    """

    geom: GridGeometry
    beta: np.ndarray
    delta0: float = 1.0
    decay: float = 0.8
    beta_max: float = BETA_MAX
    freeze_at: int = 0
    avg_window: int = 1
    warmup: int = 200
    schedule: str = "raster"
    z_aux: np.ndarray | None = None
    t: int = 0
    frozen: np.ndarray | None = None
    _tail_sum: np.ndarray = field(init=False)
    _tail_count: int = field(init=False, default=0)

    def __post_init__(self):
        self.beta = np.array(self.beta, dtype=np.float64)
        self._tail_sum = np.zeros_like(self.beta)
        self.avg_window = max(1, min(self.avg_window, max(self.freeze_at, 1)))

    def step(self, rng: np.random.Generator, z_post: np.ndarray) -> np.ndarray:
        """Advance one iteration; returns the beta to use next."""
        if self.frozen is not None:
            return self.frozen
        self.t += 1
        if self.z_aux is None:
            self.z_aux = mrf._uniform_admissible_field(
                rng, self.beta.shape[0], self.geom.n_pixels
            )
        for z in mrf.iter_prior_fields(
            rng, self.beta, self.geom, 1, init=self.z_aux, schedule=self.schedule
        ):
            self.z_aux = z.copy()
        if self.t > self.warmup:
            grad = (
                mrf.phi_all(z_post, self.geom) - mrf.phi_all(self.z_aux, self.geom)
            ).astype(np.float64)
            grad /= self.geom.total_neighbor_pairs
            step = self.delta0 * (self.t - self.warmup) ** (-self.decay)
            self.beta = np.clip(self.beta + step * grad, 0.0, self.beta_max)
        if self.t > self.freeze_at - self.avg_window:
            self._tail_sum += self.beta
            self._tail_count += 1
        if self.t >= self.freeze_at > 0:
            self.frozen = self._tail_sum / self._tail_count
        return self.beta if self.frozen is None else self.frozen


def step_beta(
    rng: np.random.Generator,
    state: ChainState,
    tuner: BetaTuner,
) -> ChainState:
    """Self-tuning beta update (no-op once the tuner has frozen)."""
    return replace(state, beta=tuner.step(rng, state.z))


@dataclass(frozen=True)
class ChainTrace:
    """Stored sampler output.

    Labels are kept for every iteration, bit-packed (``z_bits`` row t-1
    is iteration t).  Abundances are stored as float32 for iterations
    ``x_iters`` (1-based, every ``thin``-th).  ``sigma2``, ``s2`` and
    ``beta`` are stored per iteration.
    """

    n_mc: int
    n_bi: int
    thin: int
    n_row: int
    n_col: int
    n_endmembers: int
    n_bands: int
    z_bits: np.ndarray
    x: np.ndarray
    x_iters: np.ndarray
    sigma2: np.ndarray
    s2: np.ndarray
    beta: np.ndarray

    @property
    def n_pixels(self) -> int:
        return self.n_row * self.n_col

    def z_at(self, t: int) -> np.ndarray:
        """Unpacked label field of iteration ``t`` (1-based)."""
        if not (1 <= t <= self.n_mc):
            raise ValueError(f"iteration {t} outside [1, {self.n_mc}]")
        flat = np.unpackbits(self.z_bits[t - 1], count=self.n_endmembers * self.n_pixels)
        return flat.reshape(self.n_endmembers, self.n_pixels)

    def kept_iterations(self) -> np.ndarray:
        """Post-burn-in iteration numbers (labels; every iteration)."""
        return np.arange(self.n_bi + 1, self.n_mc + 1)

    def kept_x(self) -> tuple[np.ndarray, np.ndarray]:
        """(iterations, values) of the post-burn-in stored abundances."""
        keep = self.x_iters > self.n_bi
        return self.x_iters[keep], self.x[keep]


def run_chain(
    cube: HyperCube,
    lib: Library,
    cfg: RunConfig,
    rng: np.random.Generator | None = None,
    progress=None,
) -> ChainTrace:
    """Run the full Gibbs sampler and record its trace.

    ``rng`` overrides the generator built from ``cfg.seed``;
    ``progress`` (if given) is called as ``progress(t, n_mc)`` after
    each iteration.
    """
    check_dimensions(cube, lib)
    rng = make_rng(cfg.seed) if rng is None else rng
    geom = cube.geometry
    n_r, n, n_l = lib.n_endmembers, cube.n_pixels, cube.n_bands
    state = init_state(rng, cube, lib, cfg)

    tuner = None
    if cfg.beta is None:
        tuner = BetaTuner(
            geom=geom,
            beta=state.beta,
            delta0=cfg.delta0,
            decay=cfg.decay,
            beta_max=cfg.beta_max,
            freeze_at=cfg.n_bi,
            avg_window=max(1, (cfg.n_bi - cfg.beta_warmup) // 5),
            warmup=cfg.beta_warmup,
            schedule=cfg.schedule,
        )

    nbits = n_r * n
    z_bits = np.empty((cfg.n_mc, (nbits + 7) // 8), dtype=np.uint8)
    x_iters = np.arange(1, cfg.n_mc + 1)[(np.arange(cfg.n_mc)) % cfg.thin == 0]
    x_store = np.empty((x_iters.shape[0], n_r, n), dtype=np.float32)
    sigma2 = np.empty((cfg.n_mc, n_l))
    s2 = np.empty((cfg.n_mc, n_r))
    beta = np.empty((cfg.n_mc, n_r))

    xi = 0
    for t in range(1, cfg.n_mc + 1):
        state = step_labels(rng, state, cube, lib, schedule=cfg.schedule)
        state = step_abundances(rng, state, cube, lib, sweeps=cfg.tmg_sweeps)
        if cfg.sigma2_fixed is None:
            state = step_noise(rng, state, cube, lib, prior=cfg.noise_prior)
        if cfg.s2_fixed is None:
            state = step_scales(rng, state, gamma=cfg.gamma, nu=cfg.nu)
        if tuner is not None:
            state = step_beta(rng, state, tuner)
        state = replace(state, iteration=t)

        z_bits[t - 1] = np.packbits(state.z.ravel())
        if xi < x_iters.shape[0] and x_iters[xi] == t:
            x_store[xi] = state.x
            xi += 1
        sigma2[t - 1] = state.sigma2
        s2[t - 1] = state.s2
        beta[t - 1] = state.beta
        if progress is not None:
            progress(t, cfg.n_mc)

    return ChainTrace(
        n_mc=cfg.n_mc,
        n_bi=cfg.n_bi,
        thin=cfg.thin,
        n_row=cube.n_row,
        n_col=cube.n_col,
        n_endmembers=n_r,
        n_bands=n_l,
        z_bits=z_bits,
        x=x_store,
        x_iters=x_iters,
        sigma2=sigma2,
        s2=s2,
        beta=beta,
    )
