"""Stochastic mirror descent with uniformly convex p-norm maps under heavy-tailed noise."""

__version__ = "0.1.0"

from .mirror import MirrorMap, resolve_map
from .noise import NoiseSpec, seeded_rng
from .oracles import HardInstance, SyntheticOracle
from .projection import Box, bregman_project
from .solvers import RunConfig, Trace, clipped_sgd_run, sgd_run, smd_run

__all__ = [
    "Box",
    "HardInstance",
    "MirrorMap",
    "NoiseSpec",
    "RunConfig",
    "SyntheticOracle",
    "Trace",
    "bregman_project",
    "clipped_sgd_run",
    "resolve_map",
    "seeded_rng",
    "sgd_run",
    "smd_run",
]
