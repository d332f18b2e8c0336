from .baselines import LogisticModel, RandomForestModel, fit_baseline
from .gbdt import TrainConfig, TreeEnsembleModel, fit_arrays, fit_gbdt, predict_proba
from .metrics import MetricsReport, SplitMetrics, evaluate, roc_auc
from .tuning import tune, tune_with_history

__all__ = [
    "LogisticModel", "RandomForestModel", "fit_baseline",
    "TrainConfig", "TreeEnsembleModel", "fit_arrays", "fit_gbdt", "predict_proba",
    "MetricsReport", "SplitMetrics", "evaluate", "roc_auc",
    "tune", "tune_with_history",
]
