"""Core data types for collaborative sparse unmixing.

Conventions used throughout the package:

* An image with ``n_row`` rows and ``n_col`` columns holds ``N = n_row *
  n_col`` pixels.  Pixel ``n`` sits at ``(row, col)`` with ``n = row +
  n_row * col`` (column-major raster).
* Observations are stored band-major: a cube is ``(L, N)``, one row per
  spectral band.
* Per-endmember image fields (supports, abundances) are ``(R, N)``.
* Spatial neighbourhoods are the 8 surrounding pixels, clipped at the
  image border (no wrap-around).

All containers are frozen dataclasses whose arrays are validated and
marked read-only at construction time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .validation import (
    as_float_array,
    check_positive_int,
    check_vector_length,
    frozen_copy,
    require_binary,
    require_finite,
    require_nonnegative,
    require_positive,
)

# Hard ceiling for the spatial-regularisation parameters.  Empirical
# tuning happens on [0, BETA_MAX]; larger values give essentially frozen
# label fields and destabilise the stochastic tuning step.
BETA_MAX = 2.0

_NEIGHBOR_STEPS = np.array(
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
    dtype=np.int64,
)


@dataclass(frozen=True)
class GridGeometry:
    """Rectangular pixel grid with 8-connected neighbourhoods."""

    n_row: int
    n_col: int

    def __post_init__(self):
        object.__setattr__(self, "n_row", check_positive_int(self.n_row, "n_row"))
        object.__setattr__(self, "n_col", check_positive_int(self.n_col, "n_col"))

    @property
    def n_pixels(self) -> int:
        return self.n_row * self.n_col

    def pixel_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.n_row and 0 <= col < self.n_col):
            raise ValueError(f"pixel ({row}, {col}) outside {self.n_row}x{self.n_col} grid")
        return row + self.n_row * col

    def pixel_coords(self, n: int) -> tuple[int, int]:
        if not (0 <= n < self.n_pixels):
            raise ValueError(f"pixel index {n} outside [0, {self.n_pixels})")
        return n % self.n_row, n // self.n_row

    @cached_property
    def neighbor_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Padded neighbour indices.

        Returns ``(nbrs, counts)`` where ``nbrs`` is ``(N, 8)`` int64 —
        row ``n`` lists the in-grid neighbours of pixel ``n`` first
        (ascending pixel index) and pads the tail with 0 — and
        ``counts[n]`` is the number of valid entries.
        """
        sentinel = np.iinfo(np.int64).max
        rows = np.arange(self.n_row)[:, None, None]
        cols = np.arange(self.n_col)[None, :, None]
        nr = rows + _NEIGHBOR_STEPS[None, None, :, 0]
        nc = cols + _NEIGHBOR_STEPS[None, None, :, 1]
        valid = (nr >= 0) & (nr < self.n_row) & (nc >= 0) & (nc < self.n_col)
        flat = np.where(valid, nr + self.n_row * nc, sentinel)
        flat.sort(axis=2)  # valid entries first (ascending), sentinels last
        counts = valid.sum(axis=2).astype(np.int64)
        flat[flat == sentinel] = 0
        # transpose so that C-flattening of the leading axes yields the
        # column-major pixel index n = row + n_row*col
        nbrs = np.ascontiguousarray(flat.transpose(1, 0, 2).reshape(self.n_pixels, 8))
        cnts = np.ascontiguousarray(counts.transpose(1, 0).reshape(self.n_pixels))
        nbrs.flags.writeable = False
        cnts.flags.writeable = False
        return nbrs, cnts

    @property
    def total_neighbor_pairs(self) -> int:
        """Number of ordered neighbour pairs, ``sum_n |V(n)|``."""
        return int(self.neighbor_table[1].sum())


def neighbors(n: int, geom: GridGeometry) -> np.ndarray:
    """In-grid 8-neighbourhood of pixel ``n``, ascending pixel indices."""
    nbrs, counts = geom.neighbor_table
    if not (0 <= n < geom.n_pixels):
        raise ValueError(f"pixel index {n} outside [0, {geom.n_pixels})")
    return nbrs[n, : counts[n]].copy()


@dataclass(frozen=True)
class HyperCube:
    """Observed image: ``data`` is (L, N) with pixels in column-major order."""

    data: np.ndarray
    n_row: int
    n_col: int

    def __post_init__(self):
        object.__setattr__(self, "n_row", check_positive_int(self.n_row, "n_row"))
        object.__setattr__(self, "n_col", check_positive_int(self.n_col, "n_col"))
        data = as_float_array(self.data, "data", ndim=2)
        require_finite(data, "data")
        if data.shape[1] != self.n_row * self.n_col:
            raise ValueError(
                f"data has {data.shape[1]} pixels but the grid is "
                f"{self.n_row}x{self.n_col} = {self.n_row * self.n_col}"
            )
        if data.shape[0] < 1:
            raise ValueError("data must have at least one band")
        object.__setattr__(self, "data", frozen_copy(data))

    @property
    def n_bands(self) -> int:
        return self.data.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.data.shape[1]

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.n_row, self.n_col)


@dataclass(frozen=True)
class Library:
    """Spectral library: ``data`` is (L, R), one column per endmember."""

    data: np.ndarray
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        data = as_float_array(self.data, "data", ndim=2)
        require_finite(data, "data")
        require_nonnegative(data, "data")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"library shape {data.shape} is degenerate")
        norms = np.linalg.norm(data, axis=0)
        if np.any(norms == 0):
            raise ValueError("library contains an all-zero column")
        names = tuple(self.names) if self.names else tuple(
            f"em_{r + 1}" for r in range(data.shape[1])
        )
        if len(names) != data.shape[1]:
            raise ValueError(
                f"{len(names)} names supplied for {data.shape[1]} endmembers"
            )
        if len(set(names)) != len(names):
            raise ValueError("endmember names must be unique")
        object.__setattr__(self, "data", frozen_copy(data))
        object.__setattr__(self, "names", names)

    @property
    def n_bands(self) -> int:
        return self.data.shape[0]

    @property
    def n_endmembers(self) -> int:
        return self.data.shape[1]


def mutual_coherence(lib: Library | np.ndarray) -> float:
    """Largest absolute cosine between distinct library columns.

    Invariant under per-column positive rescaling.  Requires R >= 2.
    """
    data = lib.data if isinstance(lib, Library) else as_float_array(lib, "lib", ndim=2)
    require_finite(data, "lib")
    if data.shape[1] < 2:
        raise ValueError("mutual coherence needs at least two columns")
    norms = np.linalg.norm(data, axis=0)
    if np.any(norms == 0):
        raise ValueError("zero column in library")
    unit = data / norms
    gram = np.abs(unit.T @ unit)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())


@dataclass(frozen=True)
class SupportField:
    """Binary endmember-presence map, (R, N), no empty pixel columns."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError(f"labels must be 2-d, got shape {labels.shape}")
        labels = require_binary(labels, "labels")
        if labels.shape[1] and not np.all(labels.max(axis=0) == 1):
            empty = int(np.sum(labels.max(axis=0) == 0))
            raise ValueError(f"{empty} pixel columns have no active endmember")
        object.__setattr__(self, "labels", frozen_copy(labels))

    @property
    def n_endmembers(self) -> int:
        return self.labels.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.labels.shape[1]

    def active_count(self) -> np.ndarray:
        """Per-pixel number of active endmembers (always >= 1)."""
        return self.labels.sum(axis=0).astype(np.int64)


@dataclass(frozen=True)
class AbundanceField:
    """Nonnegative per-endmember abundance values, (R, N)."""

    values: np.ndarray

    def __post_init__(self):
        values = as_float_array(self.values, "values", ndim=2)
        require_finite(values, "values")
        require_nonnegative(values, "values")
        object.__setattr__(self, "values", frozen_copy(values))

    @property
    def n_endmembers(self) -> int:
        return self.values.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NoiseModel:
    """Independent per-band Gaussian noise, variances (L,), all > 0."""

    variances: np.ndarray

    def __post_init__(self):
        v = as_float_array(self.variances, "variances")
        v = np.atleast_1d(v)
        if v.ndim != 1:
            raise ValueError(f"variances must be a vector, got shape {v.shape}")
        require_finite(v, "variances")
        require_positive(v, "variances")
        object.__setattr__(self, "variances", frozen_copy(v))

    @property
    def n_bands(self) -> int:
        return self.variances.shape[0]

    def covariance(self) -> np.ndarray:
        return np.diag(self.variances)


@dataclass(frozen=True)
class HyperParams:
    """Model hyperparameters.

    ``gamma``/``nu`` are the inverse-gamma shape/scale on the abundance
    scales s_r^2 (gamma > 1 so the prior mean nu/(gamma-1) exists),
    ``beta`` the per-endmember spatial coupling in [0, BETA_MAX], ``s2``
    the current abundance-scale values.
    """

    gamma: float = 2.1
    nu: float = 1.1
    beta: np.ndarray = field(default_factory=lambda: np.array([0.3]))
    s2: np.ndarray = field(default_factory=lambda: np.array([1.0]))

    def __post_init__(self):
        gamma = float(self.gamma)
        nu = float(self.nu)
        if not np.isfinite(gamma) or gamma <= 1.0:
            raise ValueError(f"gamma must be finite and > 1, got {gamma}")
        if not np.isfinite(nu) or nu <= 0.0:
            raise ValueError(f"nu must be finite and > 0, got {nu}")
        beta = np.atleast_1d(as_float_array(self.beta, "beta"))
        require_finite(beta, "beta")
        if beta.size and (beta.min() < 0.0 or beta.max() > BETA_MAX):
            raise ValueError(f"beta must lie in [0, {BETA_MAX}]")
        s2 = np.atleast_1d(as_float_array(self.s2, "s2"))
        require_finite(s2, "s2")
        require_positive(s2, "s2")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "beta", frozen_copy(beta))
        object.__setattr__(self, "s2", frozen_copy(s2))


def compose_abundances(support: SupportField, values: AbundanceField) -> AbundanceField:
    """Entrywise product A = Z * X; exact zeros wherever the support is 0."""
    if support.labels.shape != values.values.shape:
        raise ValueError(
            f"support {support.labels.shape} and values {values.values.shape} differ"
        )
    return AbundanceField(values.values * support.labels)


def check_dimensions(cube: HyperCube, lib: Library) -> None:
    """Raise unless the cube and library agree on the band count."""
    if cube.n_bands != lib.n_bands:
        raise ValueError(
            f"cube has {cube.n_bands} bands but library has {lib.n_bands}"
        )
