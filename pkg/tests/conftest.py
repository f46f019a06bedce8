"""Shared fixtures and helpers for the test suite."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make `oracles` importable

from csunmix import GridGeometry, HyperCube, Library
from csunmix.rng import make_rng


@pytest.fixture
def rng():
    """Fresh deterministic generator for a test."""
    return make_rng(1234)


def random_library(seed: int, n_bands: int, n_end: int) -> Library:
    """Strictly positive random library (no coherence target)."""
    gen = make_rng(seed)
    return Library(0.05 + gen.random((n_bands, n_end)))


def random_cube(seed: int, n_bands: int, n_row: int, n_col: int) -> HyperCube:
    gen = make_rng(seed)
    return HyperCube(gen.random((n_bands, n_row * n_col)), n_row, n_col)


def make_tiny_scene(seed: int = 0):
    """A small generated scene shared by several integration tests."""
    from csunmix.synthgen import SceneSpec, generate_scene, make_correlated_library

    lib = make_correlated_library(make_rng(3), 24, 3, 0.9)
    spec = SceneSpec(
        geom=GridGeometry(6, 6),
        lib=lib,
        beta=np.array([0.3, 0.3, 0.3]),
        s=0.4,
        sigma2=1e-3,
        prior_sweeps=30,
        seed=seed,
    )
    return (lib, spec) + generate_scene(spec)


@pytest.fixture(scope="session")
def tiny_scene():
    """(library, spec, cube, support, abundances); all arrays read-only."""
    return make_tiny_scene(0)
