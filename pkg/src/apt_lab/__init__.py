"""Particle-entropy exploration on small grid worlds.

Modules: :mod:`geometry` (exact k-NN), :mod:`entropy` (particle entropy and
rewards), :mod:`representation` (contrastive encoder), :mod:`environments`,
:mod:`agent` (tabular Q-learning pre-training and fine-tuning) and
:mod:`experiments` (coverage, decay, comparisons, benchmarks).
"""

from .entropy import EntropyConfig, RewardNormalizer, intrinsic_rewards, particle_entropy
from .environments import GridWorld, PointMass, four_rooms, open_room
from .geometry import NeighborList, SpatialIndex, build_index, knn_query

__version__ = "0.1.0"

__all__ = [
    "EntropyConfig",
    "GridWorld",
    "NeighborList",
    "PointMass",
    "RewardNormalizer",
    "SpatialIndex",
    "build_index",
    "four_rooms",
    "intrinsic_rewards",
    "knn_query",
    "open_room",
    "particle_entropy",
]
