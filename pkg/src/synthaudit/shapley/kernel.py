"""KernelSHAP: constrained weighted least squares over sampled coalitions.

Coalition sizes are filled from the outside in (sizes 1 and p-1 first), each
size pair being enumerated completely while the remaining budget allows it;
the rest of the budget is spent on randomly drawn coalitions together with
their complements. The empty and full coalitions enter through the efficiency
constraint and count towards ``n_coalitions``.
"""
from __future__ import annotations

import logging
from itertools import combinations
from math import comb

import numpy as np

from ..errors import DataError, ModelError
from .exact import CoalitionGame, ints_from_masks
from .types import BackgroundSet, ShapleyVector, ValueFunctionSpec, feature_names_of

logger = logging.getLogger(__name__)

DEFAULT_COALITIONS = 2000


def sample_coalitions(p: int, n_coalitions: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Interior coalitions (neither empty nor full) and their regression weights."""
    budget = n_coalitions - 2
    if budget >= (1 << p) - 2:
        masks, weights = [], []
        for s in range(1, p):
            w = (p - 1) / (comb(p, s) * s * (p - s))
            for c in combinations(range(p), s):
                m = np.zeros(p, dtype=bool)
                m[list(c)] = True
                masks.append(m)
                weights.append(w)
        return np.array(masks).reshape(-1, p), np.array(weights)

    n_sizes = (p - 1 + 1) // 2            # ceil((p-1)/2)
    n_paired = (p - 1) // 2
    size_w = np.array([(p - 1.0) / (s * (p - s)) for s in range(1, n_sizes + 1)])
    size_w[:n_paired] *= 2
    size_w /= size_w.sum()

    masks, weights = [], []
    left = budget
    remaining = size_w.copy()
    n_full = 0
    for i in range(n_sizes):
        s = i + 1
        n_sub = comb(p, s) * (2 if s <= n_paired else 1)
        if left * remaining[i] / n_sub < 1.0 - 1e-8:
            break
        n_full += 1
        left -= n_sub
        if remaining[i] < 1.0:
            remaining /= 1.0 - remaining[i]
        w = size_w[i] / comb(p, s)
        if s <= n_paired:
            w /= 2.0
        for c in combinations(range(p), s):
            m = np.zeros(p, dtype=bool)
            m[list(c)] = True
            masks.append(m)
            weights.append(w)
            if s <= n_paired:
                masks.append(~m)
                weights.append(w)

    weight_left = size_w[n_full:].sum()
    if n_full < n_sizes and left > 0:
        probs = size_w[n_full:] / weight_left
        seen: dict[int, int] = {}
        extra_masks, extra_w = [], []
        tries = 0
        while left > 0 and tries < 100 * budget:
            tries += 1
            s = n_full + 1 + int(rng.choice(len(probs), p=probs))
            m = np.zeros(p, dtype=bool)
            m[rng.permutation(p)[:s]] = True
            for cand in ([m, ~m] if s <= n_paired else [m]):
                key = int(ints_from_masks(cand[None, :])[0])
                if key in seen:
                    extra_w[seen[key]] += 1.0
                elif left > 0:
                    seen[key] = len(extra_masks)
                    extra_masks.append(cand)
                    extra_w.append(1.0)
                    left -= 1
        if extra_masks:
            extra_w = np.array(extra_w)
            extra_w *= weight_left / extra_w.sum()
            masks.extend(extra_masks)
            weights.extend(extra_w.tolist())
    return np.array(masks, dtype=bool).reshape(-1, p), np.array(weights, dtype=float)


def solve_constrained(Z: np.ndarray, w: np.ndarray, y: np.ndarray, base: float, fx: float,
                      min_norm: bool = False) -> np.ndarray:
    """Weighted least squares for phi with sum(phi) = fx - base, last feature eliminated.

    With ``min_norm`` a rank-deficient design is solved by the minimum-norm
    least-squares solution instead of raising.
    """
    p = Z.shape[1]
    total = fx - base
    if p == 1:
        return np.array([total])
    Zf = Z.astype(float)
    target = (y - base) - Zf[:, -1] * total
    D = Zf[:, :-1] - Zf[:, -1:]
    A = (D * w[:, None]).T @ D
    b = (D * w[:, None]).T @ target
    if np.linalg.matrix_rank(A) < p - 1:
        if min_norm:
            head = np.linalg.lstsq(A, b, rcond=None)[0]
            return np.append(head, total - head.sum())
        raise np.linalg.LinAlgError("singular coalition design")
    head = np.linalg.solve(A, b)
    return np.append(head, total - head.sum())


def kernel_shap(model, instance, background: BackgroundSet | None, spec: ValueFunctionSpec | None = None,
                n_coalitions: int = DEFAULT_COALITIONS, seed: int = 0, max_retries: int = 3,
                feature_names=None) -> ShapleyVector:
    """Approximate Shapley values from ``n_coalitions`` coalitions (empty and full included)."""
    x = np.asarray(instance, dtype=float).ravel()
    p = len(x)
    if n_coalitions < p + 2:
        raise DataError(f"n_coalitions must be at least p + 2 = {p + 2}")
    game = CoalitionGame(model, x, background, spec, seed)
    ends = game.values(np.array([np.zeros(p, dtype=bool), np.ones(p, dtype=bool)]))
    base, fx = float(ends[0]), float(ends[1])
    names = feature_names_of(model, p, feature_names)
    if p == 0:
        return ShapleyVector(np.zeros(0), base, fx, game.spec.scale, names, "kernel")
    rng = np.random.default_rng([seed, 1])
    # complement pairs add one direction per two coalitions, so small budgets cannot reach full rank
    short = (1 << p) - 2 > n_coalitions - 2 and n_coalitions - 2 < 2 * (p - 1)
    for attempt in range(max_retries + 1):
        Z, w = sample_coalitions(p, n_coalitions, rng)
        if len(Z) == 0 and p == 1:
            phi = np.array([fx - base])
            break
        y = game.values(Z)
        try:
            phi = solve_constrained(Z, w, y, base, fx, min_norm=short)
            break
        except np.linalg.LinAlgError:
            logger.info("degenerate coalition design on attempt %d, resampling", attempt)
    else:
        raise ModelError(f"coalition design stayed degenerate after {max_retries} retries")
    return ShapleyVector(phi, base, fx, game.spec.scale, names, "kernel")
