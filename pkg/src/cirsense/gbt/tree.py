from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .split import BinnedMatrix


@dataclass(frozen=True, eq=False)
class Tree:
    """Regression tree in array form; node 0 is the root.

    Leaves have ``feature == -1`` and ``left == right == -1``; ``value`` holds
    the leaf weight ``-G / (H + lambda)``.  Internal nodes send ``x < threshold``
    (or a missing value when ``default_left``) to ``left``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    default_left: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):
            if not self.is_leaf(node):
                depths[self.left[node]] = depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def leaf_values(self) -> np.ndarray:
        return self.value[self.feature < 0]

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        node = np.zeros(len(x), dtype=int)
        rows = np.arange(len(x))
        for _ in range(self.n_nodes):
            active = self.feature[node] >= 0
            if not active.any():
                break
            r, n = rows[active], node[active]
            v = x[r, self.feature[n]]
            go_left = np.where(np.isnan(v), self.default_left[n], v < self.threshold[n])
            node[r] = np.where(go_left, self.left[n], self.right[n])
        return self.value[node]


def fit_tree(
    gradients,
    hessians,
    features,
    max_depth: int = 5,
    reg_lambda: float = 1.0,
    gamma: float = 0.0,
    n_quantile_candidates: int = 32,
    binned: BinnedMatrix | None = None,
    rows=None,
) -> Tree:
    """Greedy depth-first growth on the regularised second-order objective.

    ``binned`` supplies precomputed candidate thresholds; otherwise they are
    proposed from ``features`` weighted by ``hessians``.  ``rows`` restricts
    fitting to a subset of samples.
    """
    g = np.asarray(gradients, dtype=float)
    h = np.asarray(hessians, dtype=float)
    if binned is None:
        binned = BinnedMatrix.from_data(features, h, n_quantile_candidates)
    rows = np.arange(len(g)) if rows is None else np.asarray(rows)

    feature, threshold, left, right, default_left, value = [], [], [], [], [], []

    def new_node(node_rows):
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        default_left.append(True)
        value.append(-g[node_rows].sum() / (h[node_rows].sum() + reg_lambda))
        return len(feature) - 1

    def grow(node, node_rows, depth):
        if depth >= max_depth:
            return
        split = binned.best_split(node_rows, g, h, reg_lambda, gamma)
        if split is None:
            return
        mask = binned.goes_left(node_rows, split)
        feature[node], threshold[node], default_left[node] = split.feature, split.threshold, split.default_left
        left_rows, right_rows = node_rows[mask], node_rows[~mask]
        left[node] = new_node(left_rows)
        right[node] = new_node(right_rows)
        grow(left[node], left_rows, depth + 1)
        grow(right[node], right_rows, depth + 1)

    grow(new_node(rows), rows, 0)
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(default_left, dtype=bool),
        np.array(value, dtype=float),
    )
