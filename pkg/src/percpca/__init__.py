"""Simulation and exact verification toolkit for percolation probabilistic cellular automata."""

from .core import (
    ConeViolationError,
    InvalidNeighborhoodError,
    LineConfig,
    Neighborhood,
    NoiseField,
    RingConfig,
    make_neighborhood,
    periodic_neighbors,
    replica_seed,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "ConeViolationError",
    "InvalidNeighborhoodError",
    "LineConfig",
    "Neighborhood",
    "NoiseField",
    "RingConfig",
    "make_neighborhood",
    "periodic_neighbors",
    "replica_seed",
    "step",
]
