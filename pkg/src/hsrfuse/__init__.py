"""Fuse a hyperspectral and a multispectral image into a super-resolution
image by coupled block-term (rank-(L,L,1)) tensor decomposition."""

__version__ = "0.1.0"

from .blockterm import (
    BlockTermFactors,
    RecoverabilityQuery,
    check_recoverability,
    random_blockterm,
    reconstruct,
)
from .degradation import BlurSpec, DegradationOps, add_noise, degrade_spatial, degrade_spectral
from .metrics import MetricReport, evaluate
from .regularizers import SchattenConfig, TvConfig
from .solver import FusionReport, SolverConfig, fuse, fuse_blind

__all__ = [
    "BlockTermFactors",
    "BlurSpec",
    "DegradationOps",
    "FusionReport",
    "MetricReport",
    "RecoverabilityQuery",
    "SchattenConfig",
    "SolverConfig",
    "TvConfig",
    "add_noise",
    "check_recoverability",
    "degrade_spatial",
    "degrade_spectral",
    "evaluate",
    "fuse",
    "fuse_blind",
    "random_blockterm",
    "reconstruct",
]
