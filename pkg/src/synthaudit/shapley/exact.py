"""Coalition value functions and exact Shapley values by full enumeration."""
from __future__ import annotations

from math import comb

import numpy as np

from ..errors import DataError
from .types import (BackgroundSet, InteractionMatrix, ShapleyVector, ValueFunctionSpec,
                    feature_names_of, model_output)

EXACT_LIMIT = 12


def masks_from_ints(ids: np.ndarray, p: int) -> np.ndarray:
    """Boolean coalition matrix; bit ``j`` of ``ids[k]`` marks feature ``j`` present."""
    return ((np.asarray(ids, dtype=np.int64)[:, None] >> np.arange(p)) & 1).astype(bool)


def ints_from_masks(masks: np.ndarray) -> np.ndarray:
    masks = np.atleast_2d(masks)
    return (masks.astype(np.int64) << np.arange(masks.shape[1])).sum(axis=1)


class CoalitionGame:
    """v(S) for one instance: model output with features in S fixed to the instance.

    Marginal mode averages over the weighted background rows. Conditional mode
    averages over ``spec.n_imputations`` draws from the sampler, seeded by
    ``(seed, S)`` so that any two engines see the same imputations for the same
    coalition.
    """

    def __init__(self, model, instance, background: BackgroundSet | None, spec: ValueFunctionSpec | None = None,
                 seed: int = 0, chunk_rows: int = 1 << 17):
        self.spec = spec or ValueFunctionSpec()
        self.f = model_output(model, self.spec.scale)
        self.x = np.asarray(instance, dtype=float).ravel()
        self.p = len(self.x)
        if self.spec.mode == "marginal":
            if background is None:
                raise DataError("marginal value function needs a background set")
            if background.rows.shape[1] != self.p:
                raise DataError("background and instance have different widths")
        self.background = background
        self.seed = seed
        self.chunk_rows = chunk_rows
        self.n_evals = 0

    def _imputations(self, mask: np.ndarray) -> np.ndarray:
        key = int(ints_from_masks(mask[None, :])[0])
        rng = np.random.default_rng([self.seed, key])
        return self.spec.sampler.draw(mask, self.x, self.spec.n_imputations, rng)

    def values(self, masks: np.ndarray) -> np.ndarray:
        masks = np.atleast_2d(np.asarray(masks, dtype=bool))
        m = masks.shape[0]
        out = np.empty(m)
        if self.spec.mode == "marginal":
            bg, w = self.background.rows, self.background.weights
            step = max(1, self.chunk_rows // bg.shape[0])
            for s in range(0, m, step):
                mk = masks[s:s + step]
                X = np.where(mk[:, None, :], self.x[None, None, :], bg[None, :, :])
                y = self.f(X.reshape(-1, self.p)).reshape(len(mk), bg.shape[0])
                out[s:s + step] = y @ w
                self.n_evals += X.shape[0] * X.shape[1]
        else:
            k = self.spec.n_imputations
            step = max(1, self.chunk_rows // k)
            for s in range(0, m, step):
                mk = masks[s:s + step]
                draws = np.stack([self._imputations(row) for row in mk])
                X = np.where(mk[:, None, :], self.x[None, None, :], draws)
                out[s:s + step] = self.f(X.reshape(-1, self.p)).reshape(len(mk), k).mean(axis=1)
                self.n_evals += X.shape[0] * X.shape[1]
        return out

    def prediction(self) -> float:
        return float(self.f(self.x[None, :])[0])


def shapley_weights(p: int) -> np.ndarray:
    """w[s] = s!(p-s-1)!/p! for coalition sizes s = 0..p-1."""
    return np.array([1.0 / (p * comb(p - 1, s)) for s in range(p)])


def shapley_from_table(v: np.ndarray, p: int) -> np.ndarray:
    """Shapley values from the full value table indexed by coalition bitmask."""
    ids = np.arange(1 << p)
    size = masks_from_ints(ids, p).sum(axis=1)
    w = shapley_weights(p) if p else np.zeros(0)
    phi = np.zeros(p)
    for j in range(p):
        bit = 1 << j
        S = ids[(ids & bit) == 0]
        phi[j] = np.sum(w[size[S]] * (v[S | bit] - v[S]))
    return phi


def interactions_from_table(v: np.ndarray, p: int) -> np.ndarray:
    """Shapley interaction index, split evenly off the diagonal; rows sum to the Shapley values."""
    ids = np.arange(1 << p)
    size = masks_from_ints(ids, p).sum(axis=1)
    M = np.zeros((p, p))
    if p >= 2:
        w = np.array([1.0 / ((p - 1) * comb(p - 2, s)) for s in range(p - 1)])
        for i in range(p):
            for j in range(i + 1, p):
                bi, bj = 1 << i, 1 << j
                S = ids[(ids & (bi | bj)) == 0]
                delta = v[S | bi | bj] - v[S | bi] - v[S | bj] + v[S]
                M[i, j] = M[j, i] = 0.5 * np.sum(w[size[S]] * delta)
    phi = shapley_from_table(v, p)
    M[np.diag_indices(p)] = phi - (M.sum(axis=1) - np.diag(M))
    return M


def _check_p(p: int, exact_limit: int) -> None:
    if p > exact_limit:
        raise DataError(f"{p} features exceed the exact enumeration limit of {exact_limit}")


def value_table(model, instance, background, spec=None, seed: int = 0) -> tuple[np.ndarray, CoalitionGame]:
    game = CoalitionGame(model, instance, background, spec, seed)
    ids = np.arange(1 << game.p)
    return game.values(masks_from_ints(ids, game.p)), game


def exact_shapley(model, instance, background: BackgroundSet | None, spec: ValueFunctionSpec | None = None,
                  exact_limit: int = EXACT_LIMIT, seed: int = 0, feature_names=None) -> ShapleyVector:
    """Shapley values by enumerating all 2^p coalitions."""
    p = np.asarray(instance).size
    _check_p(p, exact_limit)
    v, game = value_table(model, instance, background, spec, seed)
    return ShapleyVector(shapley_from_table(v, p), float(v[0]), float(v[-1]), game.spec.scale,
                         feature_names_of(model, p, feature_names), "exact")


def exact_interactions(model, instance, background: BackgroundSet | None, spec: ValueFunctionSpec | None = None,
                       exact_limit: int = EXACT_LIMIT, seed: int = 0, feature_names=None) -> InteractionMatrix:
    p = np.asarray(instance).size
    _check_p(p, exact_limit)
    v, game = value_table(model, instance, background, spec, seed)
    return InteractionMatrix(interactions_from_table(v, p), float(v[0]), float(v[-1]), game.spec.scale,
                             feature_names_of(model, p, feature_names))
