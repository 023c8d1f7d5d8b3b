"""Sub-SAGE point estimation for tree ensembles.

The sub-SAGE score of feature k weighs estimated loss-difference terms over
the reduced coalition family Q_k: the empty set, every other single feature,
and the set of all features except k. Weights follow the Shapley pattern
renormalized so each of the three subset-size classes carries total weight
one third.

Loss differences are estimated in the tree-split form: only trees that
split on k (the set tau_k) change between S and S-union-{k}, so their
conditional expectations are evaluated twice while the remaining trees
contribute a shared term. The reduced form is algebraically identical to
the naive difference of mean losses and is verified against it in tests.

All estimates support row weights, which serve bootstrap replicates
(weights = multiplicity counts) and jackknife (one weight zeroed) without
materializing resampled datasets; unit weights reproduce the plain
estimate exactly because annotation probabilities are integer counts
divided by the effective sample size either way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from .dataset import Dataset
from .errors import InputError
from .tree_model import ROOT_ID, Ensemble, Tree

__all__ = [
    "LossKind",
    "SubsetFamily",
    "SubSageEstimate",
    "build_subset_family",
    "delta_loss_squared",
    "delta_loss_cross_entropy",
    "subsage_estimate",
    "subsage_stumps",
    "SubSageEngine",
]


class LossKind(Enum):
    SQUARED_ERROR = "squared_error"
    BINARY_CROSS_ENTROPY = "binary_cross_entropy"


_LOSS_OBJECTIVE = {
    LossKind.SQUARED_ERROR: "regression",
    LossKind.BINARY_CROSS_ENTROPY: "binary-logistic",
}


@dataclass(frozen=True)
class SubsetFamily:
    """The coalition family Q_k with per-subset weights summing to one."""

    feature: int
    n_features: int
    subsets: tuple[frozenset[int], ...]
    weights: tuple[float, ...]


@dataclass(frozen=True)
class SubSageEstimate:
    """Point estimate with the per-subset loss differences that formed it."""

    psi_hat: float
    per_subset_deltas: dict[frozenset[int], float]
    n_test: int


def _subset_weight(subset_size: int, m: int) -> float:
    # Exact rational, rounded once; factorials overflow float64 for m > ~34.
    frac = Fraction(
        math.factorial(subset_size) * math.factorial(m - subset_size - 1),
        3 * math.factorial(m - 1),
    )
    return float(frac)


def build_subset_family(m: int, k: int) -> SubsetFamily:
    """Q_k for feature k in an m-feature space.

    Requires m >= 3: with fewer features the all-but-k subset collapses
    onto a singleton and the three size classes degenerate.
    """
    if m < 3:
        raise InputError(f"subset family needs at least 3 features, got {m}")
    if k < 0 or k >= m:
        raise InputError(f"feature index {k} out of range for m={m}")
    others = [j for j in range(m) if j != k]
    subsets: list[frozenset[int]] = [frozenset()]
    weights: list[float] = [_subset_weight(0, m)]
    w_single = _subset_weight(1, m)
    for j in others:
        subsets.append(frozenset((j,)))
        weights.append(w_single)
    subsets.append(frozenset(others))
    weights.append(_subset_weight(m - 1, m))
    return SubsetFamily(
        feature=k, n_features=m, subsets=tuple(subsets), weights=tuple(weights)
    )


# ---------------------------------------------------------------------------
# Evaluation engine
# ---------------------------------------------------------------------------


class _ClassEval:
    """Per-(tree, known-feature-class) leaf decomposition.

    For a fixed class of known in-tree features, the conditional expectation
    of one tree over all rows is a sum over leaves of
        leaf_value * (product of indicator columns for known path nodes)
                   * (product of branch probabilities for unknown path nodes).
    The indicator products are row vectors fixed at build time; the
    probability products are recomputed per probability assignment, so a
    bootstrap draw only pays for small coefficient products and one matvec.
    """

    __slots__ = ("scalar_leaves", "mask_matrix", "masked_leaves")

    def __init__(self, leaf_paths, known, indicators):
        scalar_leaves = []
        masked = []
        for value, path in leaf_paths:
            p_factors = tuple(
                (thr, left) for thr, feat, left in path if feat not in known
            )
            mask_nodes = [(thr, left) for thr, feat, left in path if feat in known]
            if not mask_nodes:
                scalar_leaves.append((value, p_factors))
                continue
            mask = None
            for thr, left in mask_nodes:
                col = indicators[thr] if left else 1.0 - indicators[thr]
                mask = col if mask is None else mask * col
            masked.append((value, p_factors, mask))
        self.scalar_leaves = tuple(scalar_leaves)
        if masked:
            self.mask_matrix = np.column_stack([m for _, _, m in masked])
            self.masked_leaves = tuple((v, f) for v, f, _ in masked)
        else:
            self.mask_matrix = None
            self.masked_leaves = ()

    @staticmethod
    def _coeff(value, factors, p, q):
        c = value
        for thr, left in factors:
            c = c * (p[thr] if left else q[thr])
        return c

    def evaluate(self, p, q):
        s = 0.0
        for value, factors in self.scalar_leaves:
            s += self._coeff(value, factors, p, q)
        if self.mask_matrix is None:
            return s, None
        coeffs = np.array(
            [self._coeff(v, f, p, q) for v, f in self.masked_leaves]
        )
        return s, self.mask_matrix @ coeffs


def _leaf_paths(tree: Tree, thr_of_node: dict[int, int]):
    """(leaf_value, ((thr_index, feature, went_left), ...)) per leaf."""
    paths = []

    def walk(nid, acc):
        node = tree.node(nid)
        if node.is_leaf:
            paths.append((node.leaf_value, tuple(acc)))
            return
        thr = thr_of_node[nid]
        walk(node.left, acc + [(thr, node.feature, True)])
        walk(node.right, acc + [(thr, node.feature, False)])

    walk(ROOT_ID, [])
    return tuple(paths)


class SubSageEngine:
    """Shared state for estimating one feature's sub-SAGE on one dataset.

    Built once per (annotated ensemble, data, feature); every subsequent
    weighted estimate reuses the branch indicator table and the per-class
    leaf decompositions.
    """

    def __init__(self, ensemble: Ensemble, data: Dataset, k: int, loss: LossKind):
        if not ensemble.annotated:
            raise InputError("ensemble is not probability-annotated")
        if data.n_cols != ensemble.n_features:
            raise InputError(
                f"dataset has {data.n_cols} features, model expects "
                f"{ensemble.n_features}"
            )
        if k < 0 or k >= ensemble.n_features:
            raise InputError(f"feature index {k} out of range")
        want = _LOSS_OBJECTIVE[loss]
        if ensemble.objective != want:
            raise InputError(
                f"{loss.value} requires objective {want!r}, "
                f"model has {ensemble.objective!r}"
            )
        self.loss = loss
        self.k = k
        self.ensemble = ensemble
        self.n = data.n_rows
        self.y = data.response
        if loss is LossKind.BINARY_CROSS_ENTROPY and not np.isin(self.y, (0.0, 1.0)).all():
            raise InputError("binary cross-entropy requires responses in {0, 1}")
        self.family = build_subset_family(ensemble.n_features, k)

        # Distinct (feature, threshold) table with strict-below indicators.
        thr_index: dict[tuple[int, float], int] = {}
        p0: list[float] = []
        ind_cols: list[np.ndarray] = []
        self._thr_of_node: list[dict[int, int]] = []
        for tree in ensemble.trees:
            node_map = {}
            for node in tree.branch_nodes():
                key = (node.feature, node.threshold)
                if key not in thr_index:
                    thr_index[key] = len(thr_index)
                    ind_cols.append(
                        (data.column(node.feature) < node.threshold).astype(np.float64)
                    )
                    p0.append(node.prob_left)
                node_map[node.id] = thr_index[key]
            self._thr_of_node.append(node_map)
        self._indicators = (
            np.vstack(ind_cols) if ind_cols else np.empty((0, self.n))
        )
        self._p0 = np.asarray(p0)

        self._paths = [
            _leaf_paths(tree, self._thr_of_node[t])
            for t, tree in enumerate(ensemble.trees)
        ]
        self.tau = tuple(
            t for t, tree in enumerate(ensemble.trees) if k in tree.feature_set
        )
        self.tau_out = tuple(
            t for t in range(ensemble.n_trees) if t not in set(self.tau)
        )
        self._tau_with: dict[int, list[int]] = {}
        self._out_with: dict[int, list[int]] = {}
        for t in self.tau:
            for f in ensemble.trees[t].feature_set:
                if f != k:
                    self._tau_with.setdefault(f, []).append(t)
        for t in self.tau_out:
            for f in ensemble.trees[t].feature_set:
                self._out_with.setdefault(f, []).append(t)
        self.used_features = frozenset(
            f for tree in ensemble.trees for f in tree.feature_set
        )
        self._class_evals: dict[tuple[int, frozenset[int]], _ClassEval] = {}
        self._ones = np.ones(self.n)

    # -- probability refresh -------------------------------------------------

    def probs_for_weights(self, weights: np.ndarray) -> np.ndarray:
        """Branch probabilities recomputed from weighted column fractions.

        With multiplicity weights this equals annotating on the materialized
        replicate: both are exact integer counts divided by the total.
        """
        total = float(weights.sum())
        if total <= 0:
            raise InputError("weights must have positive total")
        return (self._indicators @ weights) / total

    # -- class evaluations ---------------------------------------------------

    def _class_eval(self, t: int, known: frozenset[int]) -> _ClassEval:
        key = (t, known)
        got = self._class_evals.get(key)
        if got is None:
            got = _ClassEval(self._paths[t], known, self._indicators)
            self._class_evals[key] = got
        return got

    # -- estimation ----------------------------------------------------------

    def _materialize(self, sv):
        s, v = sv
        if v is None:
            return np.full(self.n, s)
        return v + s

    def _reduce(self, a_sv, b_sv, c_sv, w, total):
        y = self.y
        a = self._materialize(a_sv)
        b = self._materialize(b_sv)
        c = self._materialize(c_sv)
        if self.loss is LossKind.SQUARED_ERROR:
            diff = b - a
            t_y = 2.0 * float(w @ (y * diff)) / total
            t_a = float(w @ (a * a)) / total
            t_b = float(w @ (b * b)) / total
            t_c = 2.0 * float(w @ (c * diff)) / total
            return t_y + t_a - t_b - t_c
        t_lin = float(w @ ((1.0 - y) * (a - b))) / total
        log_s = np.logaddexp(0.0, -(a + c))
        log_sk = np.logaddexp(0.0, -(b + c))
        t_log = float(w @ (log_s - log_sk)) / total
        return t_lin + t_log

    def deltas_for_weights(
        self, weights: np.ndarray | None = None
    ) -> dict[frozenset[int], float]:
        """Estimated loss difference for every subset in Q_k.

        Subsets are collapsed through the features the ensemble actually
        uses: a subset feature appearing in no tree cannot change any
        conditional expectation, so such subsets share their computation
        exactly.
        """
        if weights is None:
            w = self._ones
            total = float(self.n)
            p = self._p0
        else:
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (self.n,):
                raise InputError("weights length must match row count")
            total = float(w.sum())
            if total <= 0:
                raise InputError("weights must have positive total")
            p = self.probs_for_weights(w)
        q = 1.0 - p
        trees = self.ensemble.trees
        k = self.k

        draw_cache: dict[tuple[int, frozenset[int]], tuple] = {}

        def ev(t: int, known: frozenset[int]):
            key = (t, known)
            got = draw_cache.get(key)
            if got is None:
                got = self._class_eval(t, known).evaluate(p, q)
                draw_cache[key] = got
            return got

        empty = frozenset()
        only_k = frozenset((k,))

        def acc(pairs):
            s = 0.0
            v = None
            for es, evec in pairs:
                s += es
                if evec is not None:
                    v = evec.copy() if v is None else v + evec
            return (s, v)

        def corrected(base, plus_minus):
            s, v = base
            v = None if v is None else v.copy()
            for (ps, pv), (ms, mv) in plus_minus:
                s += ps - ms
                if pv is not None or mv is not None:
                    if v is None:
                        v = np.zeros(self.n)
                    if pv is not None:
                        v += pv
                    if mv is not None:
                        v -= mv
            return (s, v)

        a0 = acc(ev(t, empty) for t in self.tau)
        b0 = acc(ev(t, only_k) for t in self.tau)
        c0 = acc(ev(t, empty) for t in self.tau_out)
        c0 = (c0[0] + self.ensemble.base_score, c0[1])

        by_key: dict[frozenset[int], float] = {
            empty: self._reduce(a0, b0, c0, w, total)
        }
        for m in sorted(self.used_features - {k}):
            key = frozenset((m,))
            a = corrected(
                a0,
                [
                    (ev(t, key), ev(t, empty))
                    for t in self._tau_with.get(m, ())
                ],
            )
            b = corrected(
                b0,
                [
                    (ev(t, frozenset((m, k))), ev(t, only_k))
                    for t in self._tau_with.get(m, ())
                ],
            )
            c = corrected(
                c0,
                [
                    (ev(t, key), ev(t, empty))
                    for t in self._out_with.get(m, ())
                ],
            )
            by_key[key] = self._reduce(a, b, c, w, total)

        full_key = frozenset(self.used_features - {k})
        if full_key not in by_key:
            a = acc(
                ev(t, frozenset(trees[t].feature_set) - {k}) for t in self.tau
            )
            b = acc(ev(t, frozenset(trees[t].feature_set)) for t in self.tau)
            c = acc(ev(t, frozenset(trees[t].feature_set)) for t in self.tau_out)
            c = (c[0] + self.ensemble.base_score, c[1])
            by_key[full_key] = self._reduce(a, b, c, w, total)

        return {
            subset: by_key[frozenset(subset & self.used_features)]
            for subset in self.family.subsets
        }

    def psi_for_weights(self, weights: np.ndarray | None = None) -> float:
        deltas = self.deltas_for_weights(weights)
        return sum(
            w * deltas[s] for s, w in zip(self.family.subsets, self.family.weights)
        )

    def estimate(self, weights: np.ndarray | None = None) -> SubSageEstimate:
        deltas = self.deltas_for_weights(weights)
        psi = sum(
            w * deltas[s] for s, w in zip(self.family.subsets, self.family.weights)
        )
        return SubSageEstimate(
            psi_hat=psi, per_subset_deltas=deltas, n_test=self.n
        )


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def _validate_member(family: SubsetFamily, subset: frozenset[int]) -> None:
    if subset not in family.subsets:
        raise InputError(
            f"subset {sorted(subset)} is not in Q_{family.feature} "
            f"(empty, singletons, or all-but-{family.feature})"
        )


def delta_loss_squared(
    ensemble: Ensemble, k: int, subset, test: Dataset
) -> float:
    """Estimated squared-error loss reduction from adding feature k to S."""
    engine = SubSageEngine(ensemble, test, k, LossKind.SQUARED_ERROR)
    subset = frozenset(subset)
    _validate_member(engine.family, subset)
    return engine.deltas_for_weights()[subset]


def delta_loss_cross_entropy(
    ensemble: Ensemble, k: int, subset, test: Dataset
) -> float:
    """Estimated cross-entropy loss reduction from adding feature k to S.

    The loss is evaluated in margin space: conditional expectations of
    margins are taken first and the binary cross-entropy is applied outside
    the expectation, never through the sigmoid.
    """
    engine = SubSageEngine(ensemble, test, k, LossKind.BINARY_CROSS_ENTROPY)
    subset = frozenset(subset)
    _validate_member(engine.family, subset)
    return engine.deltas_for_weights()[subset]


def subsage_estimate(
    ensemble: Ensemble, k: int, test: Dataset, loss: LossKind
) -> SubSageEstimate:
    """Sub-SAGE point estimate for feature k on held-out data.

    The caller attests that ``test`` is independent of the data the model
    was fitted on; the library cannot verify this.
    """
    return SubSageEngine(ensemble, test, k, loss).estimate()


def subsage_stumps(ensemble: Ensemble, k: int, test: Dataset) -> SubSageEstimate:
    """Closed-form sub-SAGE for depth-1 regression ensembles.

    For stumps the loss difference is subset-independent in expectation and
    reduces to 2*Cov(y, g_k) - Var(g_k), where g_k sums the stumps that
    split on k. Covariance and variance use 1/(n-1) normalization; g_k is
    centered at its annotated expectation.
    """
    if ensemble.objective != "regression":
        raise InputError("stump closed form requires the regression objective")
    if not ensemble.annotated:
        raise InputError("ensemble is not probability-annotated")
    if any(tree.depth > 1 for tree in ensemble.trees):
        raise InputError("stump closed form requires every tree depth <= 1")
    if test.n_rows < 2:
        raise InputError("stump closed form needs at least 2 rows")
    if k < 0 or k >= ensemble.n_features:
        raise InputError(f"feature index {k} out of range")

    n = test.n_rows
    col = test.column(k)
    g = np.zeros(n)
    anchor = 0.0
    for tree in ensemble.trees:
        if k not in tree.feature_set:
            continue
        root = tree.root
        left = tree.node(root.left).leaf_value
        right = tree.node(root.right).leaf_value
        g += np.where(col < root.threshold, left, right)
        anchor += root.prob_left * left + (1.0 - root.prob_left) * right

    y = test.response
    centered_y = y - y.mean()
    centered_g = g - anchor
    cov = float(centered_y @ centered_g) / (n - 1)
    var = float(centered_g @ centered_g) / (n - 1)
    psi = 2.0 * cov - var

    family = build_subset_family(ensemble.n_features, k)
    deltas = {subset: psi for subset in family.subsets}
    return SubSageEstimate(psi_hat=psi, per_subset_deltas=deltas, n_test=n)
