"""Random tree ensembles and brute-force attribution oracles shared by the tests."""
import itertools
from math import factorial

import numpy as np

from synthaudit.detector.gbdt import TreeEnsembleModel
from synthaudit.trees import Leaf, Split, Tree


def random_tree(rng, p, depth, levels=3, categorical=None):
    """Random tree over features taking values in ``range(levels)``.

    Splits only partition values that can still reach the node, so every leaf
    is reachable from the full product table.
    """
    categorical = np.zeros(p, bool) if categorical is None else categorical

    def node(d, allowed):
        free = [j for j in range(p) if len(allowed[j]) > 1]
        if d == 0 or not free or rng.random() < 0.2:
            return Leaf(float(rng.normal()), 1.0)
        j = int(rng.choice(free))
        vals = sorted(allowed[j])
        if categorical[j]:
            k = int(rng.integers(1, len(vals)))
            left = set(rng.choice(vals, k, replace=False).tolist())
            kw = {"categories": frozenset(left)}
        else:
            cut = int(rng.integers(1, len(vals)))
            left = set(vals[:cut])
            kw = {"threshold": vals[cut] - 0.5}
        la, ra = list(allowed), list(allowed)
        la[j], ra[j] = left, set(vals) - left
        return Split(j, node(d - 1, la), node(d - 1, ra), **kw)

    return Tree.from_nodes(node(depth, [set(range(levels)) for _ in range(p)]))


def random_model(rng, p, n_trees=3, depth=3, levels=3, categorical=None):
    trees = [random_tree(rng, p, depth, levels, categorical) for _ in range(n_trees)]
    return TreeEnsembleModel(trees, float(rng.normal()))


def product_table(p, levels=3):
    return np.array(list(itertools.product(range(levels), repeat=p)), dtype=float)


def with_covers(model, X):
    model.trees = [t.recompute_covers(X) for t in model.trees]
    model._forest = None
    return model


def coalition_value(f, x, background, S):
    """Mean of f over background rows with features in S set to x."""
    Z = background.copy()
    idx = list(S)
    Z[:, idx] = x[idx]
    return float(np.mean(f(Z)))


def permutation_shapley(f, x, background):
    """Shapley values as the average marginal contribution over all feature orderings."""
    p = len(x)
    phi = np.zeros(p)
    for order in itertools.permutations(range(p)):
        S = []
        prev = coalition_value(f, x, background, S)
        for j in order:
            S.append(j)
            cur = coalition_value(f, x, background, S)
            phi[j] += cur - prev
            prev = cur
    return phi / factorial(p)
