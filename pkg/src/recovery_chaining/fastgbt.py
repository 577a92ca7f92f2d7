"""Boosted-tree classifier plus a fast single-row predictor.

``predict_proba`` in scikit-learn spends most of its time validating input,
which dominates when it is called once per environment step.
:class:`CompiledGBT` packs the fitted trees into flat arrays and walks all of
them at once.
"""

from __future__ import annotations

import numpy as np
from sklearn.ensemble import GradientBoostingClassifier, HistGradientBoostingClassifier


def make_classifier(n_estimators: int = 100, max_depth: int = 3, seed: int = 0) -> HistGradientBoostingClassifier:
    """Boosted depth-limited trees; histogram binning keeps refits cheap on growing data."""
    return HistGradientBoostingClassifier(max_iter=n_estimators, max_depth=max_depth, early_stopping=False,
                                          random_state=seed)


class CompiledGBT:
    def __init__(self, clf, n_features: int):
        if isinstance(clf, HistGradientBoostingClassifier):
            trees = [self._hist_tree(p[0].nodes) for p in clf._predictors]
            self.learning_rate = 1.0  # already folded into the leaf values
            self.init = float(np.ravel(clf._baseline_prediction)[0])
            self.cast32 = False
        elif isinstance(clf, GradientBoostingClassifier):
            trees = [self._sk_tree(est[0].tree_) for est in clf.estimators_]
            self.learning_rate = clf.learning_rate
            self.init = float(clf._raw_predict_init(np.zeros((1, n_features)))[0, 0])
            # this estimator compares float32-cast features against its thresholds
            self.cast32 = True
        else:
            raise TypeError(f"cannot compile {type(clf).__name__}")
        width = max(len(t[0]) for t in trees)
        n = len(trees)
        self.feature = np.zeros((n, width), dtype=np.intp)
        self.threshold = np.zeros((n, width))
        self.left = np.zeros((n, width), dtype=np.intp)
        self.right = np.zeros((n, width), dtype=np.intp)
        self.value = np.zeros((n, width))
        self.depth = 1
        for k, (feat, thr, left, right, val, leaf) in enumerate(trees):
            m = len(feat)
            self.feature[k, :m] = np.where(leaf, 0, feat)
            self.threshold[k, :m] = thr
            # leaves point at themselves so extra iterations are harmless
            self.left[k, :m] = np.where(leaf, np.arange(m), left)
            self.right[k, :m] = np.where(leaf, np.arange(m), right)
            self.value[k, :m] = val
            self.depth = max(self.depth, _depth(left, right, leaf))
        self.rows = np.arange(n)

    @staticmethod
    def _sk_tree(t):
        m = t.node_count
        leaf = t.children_left[:m] == -1
        return t.feature[:m], t.threshold[:m], t.children_left[:m], t.children_right[:m], t.value[:m, 0, 0], leaf

    @staticmethod
    def _hist_tree(nodes):
        leaf = nodes["is_leaf"].astype(bool)
        return (nodes["feature_idx"].astype(np.intp), nodes["num_threshold"], nodes["left"].astype(np.intp),
                nodes["right"].astype(np.intp), nodes["value"], leaf)

    def raw(self, x: np.ndarray) -> float:
        node = np.zeros(len(self.rows), dtype=np.intp)
        for _ in range(self.depth):
            f = self.feature[self.rows, node]
            go_left = x[f] <= self.threshold[self.rows, node]
            node = np.where(go_left, self.left[self.rows, node], self.right[self.rows, node])
        return self.init + self.learning_rate * float(self.value[self.rows, node].sum())

    def prob(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        if self.cast32:
            x = x.astype(np.float32).astype(np.float64)
        return float(1.0 / (1.0 + np.exp(-self.raw(x))))


def _depth(left, right, leaf) -> int:
    best, stack = 0, [(0, 0)]
    while stack:
        node, d = stack.pop()
        if leaf[node]:
            best = max(best, d)
        else:
            stack += [(int(left[node]), d + 1), (int(right[node]), d + 1)]
    return best
