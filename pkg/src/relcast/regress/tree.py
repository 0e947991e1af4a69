"""CART regression tree grown by greedy variance reduction.

The tree is stored as flat node arrays so it serializes as plain numbers.
Leaves have ``feature == -1``.  Samples with ``x[feature] <= threshold``
go to the left child.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass(frozen=True)
class TreeArrays:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depth, stack = 0, [(0, 0)]
        while stack:
            node, d = stack.pop()
            depth = max(depth, d)
            if self.feature[node] != LEAF:
                stack += [(self.left[node], d + 1), (self.right[node], d + 1)]
        return depth


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Lowest-SSE split; ties go to the lowest feature index, then lowest threshold."""
    n, d = X.shape
    best = None
    best_sse = np.inf
    for f in range(d):
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        total, total_sq = csum[-1], csq[-1]
        # candidate split after position i (left = [0..i])
        i = np.arange(min_leaf - 1, n - min_leaf)
        if i.size == 0:
            continue
        valid = xs[i] < xs[i + 1]
        if not valid.any():
            continue
        i = i[valid]
        nl = i + 1.0
        nr = n - nl
        sl, sr = csum[i], total - csum[i]
        sse = (csq[i] - sl * sl / nl) + ((total_sq - csq[i]) - sr * sr / nr)
        k = int(np.argmin(sse))  # first minimum = lowest threshold
        if sse[k] < best_sse - 1e-12 * max(1.0, abs(best_sse) if np.isfinite(best_sse) else 1.0):
            best_sse = sse[k]
            j = i[k]
            best = (f, 0.5 * (xs[j] + xs[j + 1]))
    return best


def grow_tree(X: np.ndarray, y: np.ndarray, max_depth: int | None = None, min_samples_leaf: int = 1) -> TreeArrays:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    root_idx = np.arange(len(y))
    stack = [(new_node(root_idx), root_idx, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if max_depth is not None and depth >= max_depth:
            continue
        if len(idx) < 2 * min_samples_leaf:
            continue
        ys = y[idx]
        if np.all(ys == ys[0]):
            continue
        split = _best_split(X[idx], ys, min_samples_leaf)
        if split is None:
            continue
        f, t = split
        mask = X[idx, f] <= t
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, t
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is expanded first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return TreeArrays(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
    )


def tree_predict(tree: TreeArrays, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    out = np.empty(len(X))
    feat, thr, lt, rt, val = tree.feature, tree.threshold, tree.left, tree.right, tree.value
    for r, x in enumerate(X):
        node = 0
        while feat[node] != LEAF:
            node = lt[node] if x[feat[node]] <= thr[node] else rt[node]
        out[r] = val[node]
    return out
