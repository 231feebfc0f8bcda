"""From-scratch gradient-boosted regression trees with a regularised objective (Type-C)."""

from .ensemble import (
    DEFAULT_GRID,
    BoostConfig,
    Ensemble,
    fit_ensemble,
    grid_search,
    load_ensemble,
    save_ensemble,
)
from .split import BinnedMatrix, Split, find_best_split, propose_candidates, split_gain
from .tree import Tree, fit_tree

__all__ = [
    "DEFAULT_GRID",
    "BinnedMatrix",
    "BoostConfig",
    "Ensemble",
    "Split",
    "Tree",
    "find_best_split",
    "fit_ensemble",
    "fit_tree",
    "grid_search",
    "load_ensemble",
    "propose_candidates",
    "save_ensemble",
    "split_gain",
]
