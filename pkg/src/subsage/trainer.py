"""Minimal second-order gradient boosting for shallow trees.

Implements Newton boosting with exact greedy split search: leaf values are
-G/(H + lambda), split gains are the usual half-sum of per-child score
improvements minus the min-gain penalty, and thresholds are midpoints
between consecutive distinct sorted values. Desk scale only; no histogram
binning, sparsity handling, or multiclass objectives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .errors import InputError
from .estimator import LossKind
from .tree_model import Ensemble, Node, Tree, branch, leaf


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    max_depth: int = 2
    subsample: float = 1.0
    colsample: float = 1.0
    reg_lambda: float = 1.0
    min_gain: float = 0.0
    max_rounds: int = 100
    early_stopping_rounds: int = 0
    loss: LossKind = LossKind.SQUARED_ERROR
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.learning_rate <= 1.0:
            raise InputError("learning rate must lie in (0, 1]")
        if self.max_depth not in (1, 2):
            raise InputError("max_depth must be 1 or 2")
        for name in ("subsample", "colsample"):
            f = getattr(self, name)
            if not 0.0 < f <= 1.0:
                raise InputError(f"{name} must lie in (0, 1]")
        if self.reg_lambda < 0 or self.min_gain < 0:
            raise InputError("reg_lambda and min_gain must be non-negative")
        if self.max_rounds < 1:
            raise InputError("max_rounds must be at least 1")


def _sigmoid(m: np.ndarray) -> np.ndarray:
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    em = np.exp(m[~pos])
    out[~pos] = em / (1.0 + em)
    return out


def _grad_hess(loss: LossKind, margins: np.ndarray, y: np.ndarray):
    if loss is LossKind.SQUARED_ERROR:
        return margins - y, np.ones_like(margins)
    p = _sigmoid(margins)
    return p - y, p * (1.0 - p)


def eval_loss(loss: LossKind, margins: np.ndarray, y: np.ndarray) -> float:
    if loss is LossKind.SQUARED_ERROR:
        return float(np.mean((y - margins) ** 2))
    return float(np.mean((1.0 - y) * margins + np.logaddexp(0.0, -margins)))


def _best_split(x: np.ndarray, g: np.ndarray, h: np.ndarray, lam: float, gamma: float):
    """Best (gain, threshold) for one feature, or None.

    Scans prefix sums over the sorted values; candidate thresholds are
    midpoints between consecutive distinct values, so any value equal to
    the left endpoint routes left under the strict-below convention.
    """
    order = np.argsort(x, kind="stable")
    xs = x[order]
    if xs[0] == xs[-1]:
        return None
    gs = np.cumsum(g[order])
    hs = np.cumsum(h[order])
    g_tot, h_tot = gs[-1], hs[-1]
    cut = np.nonzero(xs[:-1] < xs[1:])[0]
    gl, hl = gs[cut], hs[cut]
    gr, hr = g_tot - gl, h_tot - hl
    parent = g_tot**2 / (h_tot + lam)
    gains = 0.5 * (gl**2 / (hl + lam) + gr**2 / (hr + lam) - parent) - gamma
    best = int(np.argmax(gains))
    if gains[best] <= 0.0:
        return None
    t = 0.5 * (xs[cut[best]] + xs[cut[best] + 1])
    if not (xs[cut[best]] < t <= xs[cut[best] + 1]):
        return None
    return float(gains[best]), t


def _grow_tree(
    columns: np.ndarray,
    rows: np.ndarray,
    features: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    cfg: TrainConfig,
) -> Tree:
    nodes: list[Node] = []

    def make(node_id: int, idx: np.ndarray, depth: int) -> None:
        g_sum = float(g[idx].sum())
        h_sum = float(h[idx].sum())
        if depth < cfg.max_depth and len(idx) >= 2:
            g_node, h_node = g[idx], h[idx]
            best = None
            for f in features:
                found = _best_split(columns[f][idx], g_node, h_node, cfg.reg_lambda, cfg.min_gain)
                if found is not None and (best is None or found[0] > best[0]):
                    best = (found[0], int(f), found[1])
            if best is not None:
                _, f, t = best
                nodes.append(branch(node_id, f, t, 2 * node_id, 2 * node_id + 1))
                go_left = columns[f][idx] < t
                make(2 * node_id, idx[go_left], depth + 1)
                make(2 * node_id + 1, idx[~go_left], depth + 1)
                return
        value = -g_sum / (h_sum + cfg.reg_lambda) * cfg.learning_rate
        nodes.append(leaf(node_id, value))

    make(1, rows, 0)
    return Tree(nodes)


def _tree_margins(tree: Tree, columns: np.ndarray) -> np.ndarray:
    def rec(nid: int):
        node = tree.node(nid)
        if node.is_leaf:
            return node.leaf_value
        take_left = columns[node.feature] < node.threshold
        return np.where(take_left, rec(node.left), rec(node.right))

    out = rec(1)
    if np.isscalar(out):
        return np.full(columns.shape[1], out)
    return out


def train(train_data: Dataset, valid_data: Dataset, cfg: TrainConfig) -> Ensemble:
    """Boost shallow trees until max_rounds or validation stalls.

    With early stopping enabled the returned ensemble is truncated at the
    best validation round. Identical (data, cfg) inputs produce an
    identical model, including file bytes.
    """
    if train_data.feature_names != valid_data.feature_names:
        raise InputError("train/valid schemas differ")
    y = train_data.response
    if cfg.loss is LossKind.BINARY_CROSS_ENTROPY:
        for name, resp in (("train", y), ("valid", valid_data.response)):
            if not np.isin(resp, (0.0, 1.0)).all():
                raise InputError(f"{name} response must be binary for logistic loss")
        pbar = float(y.mean())
        if pbar in (0.0, 1.0):
            raise InputError("degenerate single-valued response")
        base = float(np.log(pbar / (1.0 - pbar)))
        objective = "binary-logistic"
    else:
        base = float(y.mean())
        objective = "regression"

    n, m = train_data.n_rows, train_data.n_cols
    cols = train_data.columns
    margins = np.full(n, base)
    margins_valid = np.full(valid_data.n_rows, base)
    rng = np.random.default_rng(cfg.seed)

    trees: list[Tree] = []
    best_loss = np.inf
    best_round = -1
    for rnd in range(cfg.max_rounds):
        g, h = _grad_hess(cfg.loss, margins, y)
        rows = np.arange(n)
        if cfg.subsample < 1.0:
            rows = np.sort(rng.choice(n, size=max(1, int(cfg.subsample * n)), replace=False))
        feats = np.arange(m)
        if cfg.colsample < 1.0:
            feats = np.sort(rng.choice(m, size=max(1, int(cfg.colsample * m)), replace=False))
        tree = _grow_tree(cols, rows, feats, g, h, cfg)
        trees.append(tree)
        margins += _tree_margins(tree, cols)
        margins_valid += _tree_margins(tree, valid_data.columns)
        vloss = eval_loss(cfg.loss, margins_valid, valid_data.response)
        if vloss < best_loss:
            best_loss = vloss
            best_round = rnd
        elif cfg.early_stopping_rounds and rnd - best_round >= cfg.early_stopping_rounds:
            break
    if cfg.early_stopping_rounds:
        trees = trees[: best_round + 1]
    return Ensemble(
        trees=tuple(trees),
        n_features=m,
        objective=objective,
        base_score=base,
    )
