"""Branching random walk (directed polymer) on the binary tree: simulation and exact oracles."""

__version__ = "0.1.0"

from .errors import DomainError, ResourceError, TruncationError
from .field import ArrayField, FieldParams, IncrementOracle, NodeRef, lca_depth, path_sum
from .gibbs import BETA_C, GibbsParams, PartitionTable, build_table, free_energy, leader

__all__ = [
    "ArrayField", "BETA_C", "DomainError", "FieldParams", "GibbsParams", "IncrementOracle",
    "NodeRef", "PartitionTable", "ResourceError", "TruncationError", "build_table",
    "free_energy", "lca_depth", "leader", "path_sum",
]
