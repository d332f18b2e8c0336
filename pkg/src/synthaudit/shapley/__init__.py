"""Shapley-value engines: exact enumeration, KernelSHAP, conditional imputation and TreeSHAP."""
from .conditional import ConditionalConfig, ConditionalSampler, fit_conditional_sampler
from .exact import EXACT_LIMIT, CoalitionGame, exact_interactions, exact_shapley, shapley_from_table
from .explain import UNDERREPRESENTED, UNREALISTIC, Explanation, Tag, explain_instance, interpretation_tags
from .kernel import DEFAULT_COALITIONS, kernel_shap
from .treeshap import (tree_shap, tree_shap_batch, tree_shap_interactions, tree_shap_interactions_batch)
from .types import (LOG_ODDS, PROBABILITY, BackgroundSet, InteractionMatrix, ShapleyVector, ValueFunctionSpec)

__all__ = [
    "ConditionalConfig", "ConditionalSampler", "fit_conditional_sampler",
    "EXACT_LIMIT", "CoalitionGame", "exact_interactions", "exact_shapley", "shapley_from_table",
    "UNDERREPRESENTED", "UNREALISTIC", "Explanation", "Tag", "explain_instance", "interpretation_tags",
    "DEFAULT_COALITIONS", "kernel_shap",
    "tree_shap", "tree_shap_batch", "tree_shap_interactions", "tree_shap_interactions_batch",
    "LOG_ODDS", "PROBABILITY", "BackgroundSet", "InteractionMatrix", "ShapleyVector", "ValueFunctionSpec",
]
