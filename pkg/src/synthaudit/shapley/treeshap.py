"""Path-dependent tree Shapley values and interaction values on the log-odds scale.

The recursion follows the polynomial-time path algorithm for trees: a path of
unique features is extended at every split, carrying a zero fraction (share
of training cover that follows the branch) and a one fraction (whether the
explained instance follows it). Routing decisions are computed up front in
numpy so the compiled kernel only sees plain arrays.

Interaction values condition the recursion on a feature being present
(``condition = 1``) or absent (``condition = -1``); half of the difference is
the pairwise term and the main effect keeps what is left of the Shapley value.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import ModelError
from ..trees import LEAF
from .types import LOG_ODDS, InteractionMatrix, ShapleyVector, feature_names_of


@njit(cache=True)
def _extend(feat, zero, one, pw, off, depth, zf, of, fi):
    feat[off + depth] = fi
    zero[off + depth] = zf
    one[off + depth] = of
    pw[off + depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        pw[off + i + 1] += of * pw[off + i] * (i + 1) / (depth + 1)
        pw[off + i] = zf * pw[off + i] * (depth - i) / (depth + 1)


@njit(cache=True)
def _unwind(feat, zero, one, pw, off, depth, idx):
    of = one[off + idx]
    zf = zero[off + idx]
    nxt = pw[off + depth]
    for i in range(depth - 1, -1, -1):
        if of != 0.0:
            tmp = pw[off + i]
            pw[off + i] = nxt * (depth + 1) / ((i + 1) * of)
            nxt = tmp - pw[off + i] * zf * (depth - i) / (depth + 1)
        else:
            pw[off + i] = pw[off + i] * (depth + 1) / (zf * (depth - i))
    for i in range(idx, depth):
        feat[off + i] = feat[off + i + 1]
        zero[off + i] = zero[off + i + 1]
        one[off + i] = one[off + i + 1]


@njit(cache=True)
def _unwound_sum(zero, one, pw, off, depth, idx):
    of = one[off + idx]
    zf = zero[off + idx]
    nxt = pw[off + depth]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if of != 0.0:
            tmp = nxt * (depth + 1) / ((i + 1) * of)
            total += tmp
            nxt = pw[off + i] - tmp * zf * (depth - i) / (depth + 1)
        elif zf != 0.0:
            total += pw[off + i] / zf * (depth + 1) / (depth - i)
    return total


@njit(cache=True)
def _tree_phi(root, cond, cond_feat, feature, left, right, value, cover, go, phi, feat, zero, one, pw, stack_i, stack_f):
    """Depth-first walk of one tree with an explicit stack.

    ``stack_i`` rows hold (node, depth, parent offset, parent feature) and
    ``stack_f`` rows hold (parent zero fraction, parent one fraction,
    condition fraction). Children are pushed cold first so the hot subtree
    is finished before its sibling reuses the parent's path segment.
    """
    top = 0
    stack_i[0, 0] = root
    stack_i[0, 1] = 0
    stack_i[0, 2] = 0
    stack_i[0, 3] = -1
    stack_f[0, 0] = 1.0
    stack_f[0, 1] = 1.0
    stack_f[0, 2] = 1.0
    while top >= 0:
        node = stack_i[top, 0]
        depth = stack_i[top, 1]
        poff = stack_i[top, 2]
        pf = stack_i[top, 3]
        pz = stack_f[top, 0]
        po = stack_f[top, 1]
        cfrac = stack_f[top, 2]
        top -= 1
        if cfrac == 0.0:
            continue
        off = poff + depth + 1
        for i in range(depth + 1):
            feat[off + i] = feat[poff + i]
            zero[off + i] = zero[poff + i]
            one[off + i] = one[poff + i]
            pw[off + i] = pw[poff + i]
        if cond == 0 or cond_feat != pf:
            _extend(feat, zero, one, pw, off, depth, pz, po, pf)
        f = feature[node]
        if f < 0:
            for i in range(1, depth + 1):
                w = _unwound_sum(zero, one, pw, off, depth, i)
                phi[feat[off + i]] += w * (one[off + i] - zero[off + i]) * value[node] * cfrac
            continue
        if go[node]:
            hot, cold = left[node], right[node]
        else:
            hot, cold = right[node], left[node]
        hz = cover[hot] / cover[node]
        cz = cover[cold] / cover[node]
        iz = 1.0
        io = 1.0
        idx = 0
        while idx <= depth:
            if feat[off + idx] == f:
                break
            idx += 1
        if idx != depth + 1:
            iz = zero[off + idx]
            io = one[off + idx]
            _unwind(feat, zero, one, pw, off, depth, idx)
            depth -= 1
        hc = cfrac
        cc = cfrac
        if cond > 0 and f == cond_feat:
            cc = 0.0
            depth -= 1
        elif cond < 0 and f == cond_feat:
            hc *= hz
            cc *= cz
            depth -= 1
        top += 1
        stack_i[top, 0] = cold
        stack_i[top, 1] = depth + 1
        stack_i[top, 2] = off
        stack_i[top, 3] = f
        stack_f[top, 0] = cz * iz
        stack_f[top, 1] = 0.0
        stack_f[top, 2] = cc
        top += 1
        stack_i[top, 0] = hot
        stack_i[top, 1] = depth + 1
        stack_i[top, 2] = off
        stack_i[top, 3] = f
        stack_f[top, 0] = hz * iz
        stack_f[top, 1] = io
        stack_f[top, 2] = hc


@njit(cache=True)
def _explain(go, roots, sizes, feature, left, right, value, cover, p, max_depth, interactions):
    n = go.shape[0]
    size = (max_depth + 4) * (max_depth + 5)
    feat = np.zeros(size, dtype=np.int64)
    zero = np.zeros(size)
    one = np.zeros(size)
    pw = np.zeros(size)
    phi = np.zeros((n, p))
    inter = np.zeros((n, p, p)) if interactions else np.zeros((0, p, p))
    on = np.zeros(p)
    off_ = np.zeros(p)
    used = np.zeros(p, dtype=np.bool_)
    base_phi = np.zeros(p)
    stack_i = np.zeros((2 * max_depth + 4, 4), dtype=np.int64)
    stack_f = np.zeros((2 * max_depth + 4, 3))
    for t in range(len(roots)):
        r = roots[t]
        if sizes[t] <= 1:
            continue
        used[:] = False
        for k in range(r, r + sizes[t]):
            if feature[k] >= 0:
                used[feature[k]] = True
        for i in range(n):
            g = go[i]
            base_phi[:] = 0.0
            _tree_phi(r, 0, -1, feature, left, right, value, cover, g, base_phi, feat, zero, one, pw,
                      stack_i, stack_f)
            phi[i] += base_phi
            if interactions:
                for j in range(p):
                    inter[i, j, j] += base_phi[j]
                    if not used[j]:
                        continue
                    on[:] = 0.0
                    off_[:] = 0.0
                    _tree_phi(r, 1, j, feature, left, right, value, cover, g, on, feat, zero, one, pw,
                              stack_i, stack_f)
                    _tree_phi(r, -1, j, feature, left, right, value, cover, g, off_, feat, zero, one, pw,
                              stack_i, stack_f)
                    for k in range(p):
                        if k != j:
                            half = (on[k] - off_[k]) / 2.0
                            inter[i, j, k] += half
                            inter[i, j, j] -= half
    return phi, inter


class _FlatTrees:
    """Concatenated node arrays with global child indices."""

    def __init__(self, model):
        trees = getattr(model, "trees", None)
        if trees is None:
            raise ModelError("tree engine needs a tree ensemble model")
        for t in trees:
            if t.n_nodes and not np.all(t.cover[t.feature == LEAF] > 0):
                raise ModelError("tree lacks positive leaf covers")
            internal = t.feature != LEAF
            if internal.any() and not np.all(t.cover[internal] > 0):
                raise ModelError("tree lacks positive node covers")
        self.trees = trees
        sizes = np.array([t.n_nodes for t in trees], dtype=np.int64)
        self.roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64) if len(trees) else np.zeros(0, np.int64)
        self.sizes = sizes
        cat = lambda parts, dtype: np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype)
        self.feature = cat([t.feature for t in trees], np.int64)
        self.left = cat([t.left + o for t, o in zip(trees, self.roots)], np.int64)
        self.right = cat([t.right + o for t, o in zip(trees, self.roots)], np.int64)
        self.value = cat([t.value for t in trees], np.float64)
        self.cover = cat([t.cover for t in trees], np.float64)
        self.max_depth = max([t.depth() for t in trees] + [0])
        self.base_score = float(getattr(model, "base_score", 0.0))

    def route(self, X: np.ndarray) -> np.ndarray:
        go = np.zeros((X.shape[0], len(self.feature)), dtype=np.bool_)
        for t, r in zip(self.trees, self.roots):
            for k in np.flatnonzero(t.feature != LEAF):
                go[:, r + k] = t.goes_left(int(k), X)
        return go

    def expected_value(self) -> float:
        return self.base_score + sum(t.expected_value() for t in self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.base_score + sum((t.predict(X) for t in self.trees), np.zeros(X.shape[0]))


def _batch(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X.reshape(1, -1) if X.ndim == 1 else X


def _run(model, X, interactions: bool, chunk: int = 2048):
    X = _batch(X)
    flat = _FlatTrees(model)
    n, p = X.shape
    phi = np.zeros((n, p))
    inter = np.zeros((n, p, p)) if interactions else None
    for s in range(0, n, chunk):
        Xc = X[s:s + chunk]
        ph, it = _explain(flat.route(Xc), flat.roots, flat.sizes, flat.feature, flat.left, flat.right,
                          flat.value, flat.cover, p, flat.max_depth, interactions)
        phi[s:s + chunk] = ph
        if interactions:
            inter[s:s + chunk] = it
    return phi, inter, flat.expected_value(), flat.predict(X)


def expected_value(model) -> float:
    return _FlatTrees(model).expected_value()


def tree_shap_batch(model, X) -> tuple[np.ndarray, float, np.ndarray]:
    """Contributions (n x p), base value and log-odds predictions for every row of X."""
    phi, _, base, pred = _run(model, X, False)
    return phi, base, pred


def tree_shap_interactions_batch(model, X) -> tuple[np.ndarray, float, np.ndarray]:
    """Interaction tensors (n x p x p), base value and log-odds predictions."""
    _, inter, base, pred = _run(model, X, True)
    return inter, base, pred


def tree_shap(model, instance, feature_names=None) -> ShapleyVector:
    x = _batch(instance)
    phi, base, pred = tree_shap_batch(model, x)
    return ShapleyVector(phi[0], base, float(pred[0]), LOG_ODDS, feature_names_of(model, x.shape[1], feature_names),
                         "tree")


def tree_shap_interactions(model, instance, feature_names=None) -> InteractionMatrix:
    x = _batch(instance)
    M, base, pred = tree_shap_interactions_batch(model, x)
    return InteractionMatrix(M[0], base, float(pred[0]), LOG_ODDS, feature_names_of(model, x.shape[1], feature_names))
