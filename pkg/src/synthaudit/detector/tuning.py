"""Sequential model-based hyperparameter search for the GBDT detector.

A tree-structured Parzen estimator: after a few random start-up trials the
observed configurations are split into the best quarter ("good") and the rest
("bad"); each parameter gets a truncated-Gaussian Parzen density per group
(plus a uniform prior component) and the next trial is the candidate drawn
from the good densities that maximises ``log l(x) - log g(x)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr, ndtri

from ..dataset import DetectionDataset
from ..errors import ModelError
from .gbdt import TrainConfig, fit_arrays
from .metrics import roc_auc

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Param:
    name: str
    low: float
    high: float
    log: bool = False
    integer: bool = False

    def to_internal(self, v: float) -> float:
        return math.log(v) if self.log else float(v)

    def from_internal(self, u: float):
        v = math.exp(u) if self.log else u
        v = min(max(v, self.low), self.high)
        return int(round(v)) if self.integer else float(v)

    @property
    def bounds(self) -> tuple[float, float]:
        return self.to_internal(self.low), self.to_internal(self.high)


SEARCH_SPACE = (
    Param("max_depth", 2, 10, integer=True),
    Param("learning_rate", 0.01, 0.3, log=True),
    Param("n_trees", 50, 1000, integer=True),
    Param("reg_lambda", 0.0, 10.0),
    Param("min_child_weight", 1.0, 20.0),
    Param("subsample", 0.5, 1.0),
)


@dataclass
class Trial:
    params: dict
    auc: float
    ok: bool = True


class _Parzen:
    """1-D truncated Gaussian mixture on ``[lo, hi]`` with a uniform prior component."""

    def __init__(self, points: np.ndarray, lo: float, hi: float, prior_weight: float = 1.0):
        self.lo, self.hi = lo, hi
        width = hi - lo
        n = len(points)
        self.mu = np.asarray(points, dtype=float)
        self.sigma = np.full(n, max(width / (1.0 + n) ** 0.2 / 2.0, width * 1e-3)) if n else np.zeros(0)
        w = np.ones(n + 1)
        w[-1] = prior_weight
        self.weights = w / w.sum()

    def _mass(self):
        return ndtr((self.hi - self.mu) / self.sigma) - ndtr((self.lo - self.mu) / self.sigma)

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        width = self.hi - self.lo
        dens = np.full(x.shape, self.weights[-1] / width)
        if len(self.mu):
            z = (x[:, None] - self.mu[None, :]) / self.sigma[None, :]
            k = np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2 * math.pi)) / self._mass()
            dens = dens + k @ self.weights[:-1]
        return np.log(dens)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        comp = rng.choice(len(self.weights), size=size, p=self.weights)
        out = rng.uniform(self.lo, self.hi, size=size)
        kern = comp < len(self.mu)
        if kern.any():
            mu, sd = self.mu[comp[kern]], self.sigma[comp[kern]]
            a, b = ndtr((self.lo - mu) / sd), ndtr((self.hi - mu) / sd)
            u = rng.uniform(a, b)
            out[kern] = np.clip(mu + sd * ndtri(np.clip(u, 1e-12, 1 - 1e-12)), self.lo, self.hi)
        return out


class TPESampler:
    def __init__(self, space=SEARCH_SPACE, seed: int = 0, n_startup: int = 5, n_candidates: int = 24,
                 gamma: float = 0.25, random_only: bool = False):
        self.space = space
        self.rng = np.random.default_rng(seed)
        self.n_startup = n_startup
        self.n_candidates = n_candidates
        self.gamma = gamma
        self.random_only = random_only

    def _random(self) -> dict:
        out = {}
        for p in self.space:
            lo, hi = p.bounds
            out[p.name] = p.from_internal(self.rng.uniform(lo, hi))
        return out

    def suggest(self, trials: list[Trial]) -> dict:
        done = [t for t in trials if t.ok]
        if self.random_only or len(done) < self.n_startup:
            return self._random()
        order = sorted(range(len(done)), key=lambda i: -done[i].auc)
        n_good = max(1, int(math.ceil(self.gamma * len(done))))
        good = [done[i] for i in order[:n_good]]
        bad = [done[i] for i in order[n_good:]]
        score = np.zeros(self.n_candidates)
        cand = {}
        for p in self.space:
            lo, hi = p.bounds
            l = _Parzen(np.array([p.to_internal(t.params[p.name]) for t in good]), lo, hi)
            g = _Parzen(np.array([p.to_internal(t.params[p.name]) for t in bad]), lo, hi)
            x = l.sample(self.rng, self.n_candidates)
            cand[p.name] = x
            score += l.logpdf(x) - g.logpdf(x)
        best = int(np.argmax(score))
        return {p.name: p.from_internal(cand[p.name][best]) for p in self.space}


def _cv_auc(X, y, schema, config: TrainConfig, folds: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=np.int64)
    for cls in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == cls))
        fold[idx] = np.arange(len(idx)) % folds
    aucs = []
    for k in range(folds):
        tr, va = fold != k, fold == k
        model = fit_arrays(X[tr], y[tr], config, schema=schema)
        aucs.append(roc_auc(y[va], model.predict_raw(X[va])))
    return float(np.mean(aucs))


def tune_with_history(train: DetectionDataset, budget: int = 20, seed: int = 0, folds: int = 3,
                      base: TrainConfig | None = None, random_search: bool = False) -> tuple[TrainConfig, list[Trial]]:
    if budget < 1:
        raise ModelError("tuning budget must be at least 1")
    if train.is_test is not None:
        X, y = train.part("train")
    else:
        X, y = train.data.values, train.labels
    base = base or TrainConfig(seed=seed)
    sampler = TPESampler(seed=seed, random_only=random_search)
    trials: list[Trial] = []
    for i in range(budget):
        params = sampler.suggest(trials)
        try:
            auc = _cv_auc(X, y, train.data.schema, replace(base, **params, seed=seed), folds, seed + 1)
            trials.append(Trial(params, auc))
            logger.info("trial %d: auc=%.4f %s", i, auc, params)
        except Exception as e:  # a failing trial is recorded and skipped
            logger.warning("trial %d failed: %s", i, e)
            trials.append(Trial(params, float("nan"), ok=False))
    done = [t for t in trials if t.ok]
    if not done:
        raise ModelError("all tuning trials failed")
    best = max(done, key=lambda t: t.auc)
    return replace(base, **best.params, seed=seed), trials


def tune(train: DetectionDataset, budget: int = 20, seed: int = 0, **kwargs) -> TrainConfig:
    """Configuration with the best cross-validated AUC among ``budget`` trials."""
    return tune_with_history(train, budget, seed, **kwargs)[0]
