"""Collaborative sparse unmixing of hyperspectral images.

A Gibbs sampler infers, jointly for all pixels, which library
endmembers are present (under a spatially correlated support prior)
and their abundances (positive, with hierarchical scales), alongside
per-band noise variances and self-tuned spatial couplings.  Point
estimates are the marginal MMAP support and conditional posterior-mean
abundances.  Deterministic NCLS and sparse-ADMM baselines, synthetic
scene generation, evaluation metrics, file formats, and a CLI round
out the toolbox.
"""

from .errors import CapabilityError, NumericError
from .estimators import UnmixResult, mmap_support, mmse_abundances, summarize
from .sampler import ChainState, ChainTrace, RunConfig, init_state, run_chain
from .types import (
    BETA_MAX,
    AbundanceField,
    GridGeometry,
    HyperCube,
    HyperParams,
    Library,
    NoiseModel,
    SupportField,
    compose_abundances,
    mutual_coherence,
    neighbors,
)
from .unmixer import CollaborativeSparseUnmixer, NCLSUnmixer, SunSALUnmixer

__version__ = "0.1.0"

__all__ = [
    "AbundanceField",
    "BETA_MAX",
    "CapabilityError",
    "ChainState",
    "ChainTrace",
    "CollaborativeSparseUnmixer",
    "GridGeometry",
    "HyperCube",
    "HyperParams",
    "Library",
    "NCLSUnmixer",
    "NoiseModel",
    "NumericError",
    "RunConfig",
    "SunSALUnmixer",
    "SupportField",
    "UnmixResult",
    "__version__",
    "compose_abundances",
    "init_state",
    "mmap_support",
    "mmse_abundances",
    "mutual_coherence",
    "neighbors",
    "run_chain",
    "summarize",
]
