"""Per-instance explanation bundles with interpretation tags."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from .exact import exact_shapley
from .kernel import DEFAULT_COALITIONS, kernel_shap
from .treeshap import tree_shap, tree_shap_interactions
from .types import (PROBABILITY, BackgroundSet, InteractionMatrix, ShapleyVector, ValueFunctionSpec,
                    feature_names_of)

ENGINES = ("tree", "interactions", "exact", "kernel", "conditional_kernel")
# which attribution the tags are read from, most preferred first
TAG_PRIORITY = ("conditional_kernel", "kernel", "exact", "tree", "interactions")

UNREALISTIC = "unrealistic value/combination"
UNDERREPRESENTED = "underrepresented in synthetic data"


@dataclass
class Tag:
    feature: str
    value: object
    attribution: float
    tag: str
    engine: str

    def to_dict(self) -> dict:
        return {"feature": self.feature, "value": self.value, "attribution": float(self.attribution),
                "tag": self.tag, "engine": self.engine}


@dataclass
class Explanation:
    instance: np.ndarray
    score: float
    vectors: dict[str, ShapleyVector] = field(default_factory=dict)
    interactions: InteractionMatrix | None = None
    tags: list[Tag] = field(default_factory=list)
    index: int | None = None

    def to_dict(self, schema=None) -> dict:
        values = _decode(self.instance, schema)
        return {
            "index": self.index,
            "score": float(self.score),
            "instance": values,
            "vectors": {k: v.to_dict() for k, v in sorted(self.vectors.items())},
            "interactions": None if self.interactions is None else self.interactions.to_dict(),
            "tags": [t.to_dict() for t in self.tags],
        }


def _decode(x: np.ndarray, schema) -> list:
    if schema is None:
        return [float(v) for v in x]
    return [c.decode(v) if c.is_categorical else float(v) for c, v in zip(schema, x)]


def interpretation_tags(vector: ShapleyVector, score: float, instance, margin: float = 0.25, top: int = 3,
                        min_share: float = 0.1, schema=None) -> list[Tag]:
    """Tag the strongest contributors of clearly synthetic-looking or clearly real-looking instances.

    Below ``0.5 - margin`` the most negative attributions are tagged as
    unrealistic; above ``0.5 + margin`` the most positive ones are tagged as
    underrepresented. A contributor must carry at least ``min_share`` of the
    total absolute attribution.
    """
    phi = vector.values
    total = np.abs(phi).sum()
    if total == 0:
        return []
    if score < 0.5 - margin:
        order, sign, label = np.argsort(phi, kind="stable"), -1.0, UNREALISTIC
    elif score > 0.5 + margin:
        order, sign, label = np.argsort(-phi, kind="stable"), 1.0, UNDERREPRESENTED
    else:
        return []
    values = _decode(np.asarray(instance, dtype=float), schema)
    tags = []
    for j in order:
        if len(tags) >= top or sign * phi[j] <= 0 or abs(phi[j]) < min_share * total:
            break
        tags.append(Tag(vector.feature_names[j], values[j], float(phi[j]), label, vector.engine))
    return tags


def explain_instance(model, instance, engines=("tree",), spec: ValueFunctionSpec | None = None,
                     background: BackgroundSet | None = None, sampler=None, n_coalitions: int = DEFAULT_COALITIONS,
                     n_imputations: int = 50, seed: int = 0, margin: float = 0.25, index: int | None = None,
                     schema=None) -> Explanation:
    """Run the requested attribution engines on one instance and attach tags."""
    x = np.asarray(instance, dtype=float).ravel()
    unknown = set(engines) - set(ENGINES)
    if unknown:
        raise DataError(f"unknown engines {sorted(unknown)}")
    names = feature_names_of(model, len(x))
    score = float(np.asarray(model.predict_proba(x[None, :]))[0])
    out = Explanation(x, score, index=index)
    marginal = spec or ValueFunctionSpec(scale=PROBABILITY)
    if "tree" in engines:
        out.vectors["tree"] = tree_shap(model, x, names)
    if "interactions" in engines:
        out.interactions = tree_shap_interactions(model, x, names)
    if "exact" in engines:
        out.vectors["exact"] = exact_shapley(model, x, background, marginal, seed=seed, feature_names=names)
    if "kernel" in engines:
        out.vectors["kernel"] = kernel_shap(model, x, background, marginal, n_coalitions, seed, feature_names=names)
    if "conditional_kernel" in engines:
        if sampler is None:
            raise DataError("conditional_kernel engine needs a conditional sampler")
        cspec = ValueFunctionSpec("conditional", sampler, n_imputations, marginal.scale)
        v = kernel_shap(model, x, None, cspec, n_coalitions, seed, feature_names=names)
        v.engine = "conditional_kernel"
        out.vectors["conditional_kernel"] = v
    for engine in TAG_PRIORITY:
        vec = out.interactions.shapley() if engine == "interactions" and out.interactions else out.vectors.get(engine)
        if vec is not None:
            out.tags = interpretation_tags(vec, score, x, margin, schema=schema)
            break
    return out
