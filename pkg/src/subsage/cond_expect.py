"""Exact conditional expectation of tree and ensemble outputs given a known
feature subset, under feature independence.

At a branch on a known feature the recursion follows the data branch; at a
branch on an unknown feature it mixes both children by the node's annotated
probabilities; at a leaf it returns the leaf value. No sampling is involved,
so results are exact given the annotation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .dataset import Dataset
from .errors import InputError
from .tree_model import ROOT_ID, Ensemble, Tree


@dataclass(frozen=True)
class SubsetMask:
    """A known feature subset S together with the observed values x_S."""

    features: frozenset[int]
    values: Mapping[int, float]

    def __post_init__(self):
        object.__setattr__(self, "features", frozenset(self.features))
        if set(self.values) != set(self.features):
            raise InputError("SubsetMask values must cover exactly the masked features")

    @classmethod
    def from_row(cls, row, features: Iterable[int]) -> "SubsetMask":
        feats = frozenset(features)
        return cls(feats, {f: float(row[f]) for f in feats})

    @classmethod
    def empty(cls) -> "SubsetMask":
        return cls(frozenset(), {})


def _require_annotated(tree: Tree) -> None:
    if not tree.annotated:
        raise InputError("tree is not probability-annotated")


def cond_exp_tree(tree: Tree, mask: SubsetMask) -> float:
    """Expected tree output given the masked features, exact."""
    _require_annotated(tree)
    known = mask.features
    values = mask.values

    def rec(nid: int) -> float:
        node = tree.node(nid)
        if node.is_leaf:
            return node.leaf_value
        if node.feature in known:
            if values[node.feature] < node.threshold:
                return rec(node.left)
            return rec(node.right)
        p = node.prob_left
        return rec(node.left) * p + rec(node.right) * (1.0 - p)

    return rec(ROOT_ID)


def cond_exp_ensemble(ensemble: Ensemble, mask: SubsetMask) -> float:
    """base_score plus the sum of per-tree conditional expectations."""
    total = ensemble.base_score
    for tree in ensemble.trees:
        total += cond_exp_tree(tree, mask)
    return total


def tree_cond_exp_batch(
    tree: Tree,
    known: frozenset[int] | set[int],
    cols: np.ndarray,
) -> np.ndarray | float:
    """Vectorized per-row conditional expectation for one tree.

    ``cols`` is the (M, N) column matrix. Returns a scalar when no known
    feature appears in the tree (the value is row-independent), otherwise a
    length-N vector. Known-feature branches select with np.where, so each
    row's value is bit-identical to the scalar recursion.
    """
    _require_annotated(tree)
    relevant = known.intersection(tree.feature_set)

    def rec(nid: int):
        node = tree.node(nid)
        if node.is_leaf:
            return node.leaf_value
        left = rec(node.left)
        right = rec(node.right)
        if node.feature in relevant:
            go_left = cols[node.feature] < node.threshold
            return np.where(go_left, left, right)
        p = node.prob_left
        return left * p + right * (1.0 - p)

    return rec(ROOT_ID)


def cond_exp_batch(
    ensemble: Ensemble,
    subset: Iterable[int],
    data: Dataset,
) -> np.ndarray:
    """Per-row, per-tree conditional expectations as an (N, T) matrix.

    Column tau holds the expectation of tree tau given that the features in
    ``subset`` take each row's observed values.
    """
    if data.n_cols != ensemble.n_features:
        raise InputError(
            f"dataset has {data.n_cols} features, model expects {ensemble.n_features}"
        )
    known = frozenset(subset)
    for f in known:
        if f < 0 or f >= ensemble.n_features:
            raise InputError(f"subset feature {f} out of range")
    out = np.empty((data.n_rows, ensemble.n_trees))
    for t, tree in enumerate(ensemble.trees):
        out[:, t] = tree_cond_exp_batch(tree, known, data.columns)
    return out
