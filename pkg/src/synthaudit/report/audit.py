"""End-to-end audit: ingest, split, tune, train, evaluate, then the four explanation stages.

The detector is trained once per replication seed. Global importance is
collected on every replication; effects, instance explanations and
counterfactuals are computed for the first replication only.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..counterfactual import CounterfactualSet, MCCEConfig, generate_many
from ..dataset import TabularDataset, align, build_detection_dataset, load_csv, merge_schemas, train_test_split
from ..detector import TrainConfig, evaluate, fit_gbdt, tune
from ..effects import DELTA, PLOT_CURVES, RESOLUTION, EffectResult, feature_effect
from ..errors import DataError, SynthAuditError
from ..generator import SamplerConfig, fit_chain
from ..importance import (ImportanceReport, combine_reports, interaction_importance, permutation_importance,
                          shap_importance)
from ..shapley import (BackgroundSet, ConditionalConfig, Explanation, explain_instance, fit_conditional_sampler,
                       tree_shap_batch, tree_shap_interactions_batch)
from ..shapley.types import ShapleyVector
from .render import render_effects, render_force, render_importance, render_waterfall

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
STAGES = ("ingest", "split", "tune", "train", "evaluate", "importance", "effects", "shapley", "counterfactual",
          "report")


class AuditError(SynthAuditError):
    """A pipeline stage failed; ``stage`` names it and ``cause`` holds the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"audit failed in stage {stage!r}: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def is_validation(self) -> bool:
        return isinstance(self.cause, DataError)


def _from_dict(cls, d: dict | None, nested: dict | None = None):
    """Build a frozen config dataclass from a partial dict, rejecting unknown keys."""
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise DataError(f"{cls.__name__} section must be a JSON object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise DataError(f"unknown {cls.__name__} keys: {unknown}")
    kwargs = {}
    for k, v in d.items():
        if nested and k in nested:
            kwargs[k] = nested[k](v)
        elif isinstance(v, list):
            kwargs[k] = tuple(v)
        else:
            kwargs[k] = v
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise DataError(str(e)) from e


@dataclass(frozen=True)
class EffectsConfig:
    features: tuple[str, ...] | None = None
    resolution: int = RESOLUTION
    grid_method: str = "quantile"
    instance_sample: int | None = None
    delta: float = DELTA
    plot_curves: int = PLOT_CURVES


@dataclass(frozen=True)
class ShapleyConfig:
    engines: tuple[str, ...] = ("tree", "interactions", "kernel", "conditional_kernel")
    rows: tuple[int, ...] | None = None       # detection-dataset rows to explain; default most synthetic and most real
    n_coalitions: int = 2000
    n_imputations: int = 50
    background: int = 100
    margin: float = 0.25
    top_k: int = 20
    waterfall_top_k: int = 10
    importance_rows: int | None = 1000        # seeded sample of test rows for mean-|SHAP| and interaction importance


@dataclass(frozen=True)
class CounterfactualConfig:
    n_instances: int = 10
    mcce: MCCEConfig = field(default_factory=MCCEConfig)
    chain: SamplerConfig = field(default_factory=SamplerConfig)


@dataclass(frozen=True)
class AuditConfig:
    seed: int = 0
    replications: int = 10
    test_fraction: float = 0.3
    tune_budget: int = 10
    tune_folds: int = 3
    train: TrainConfig = field(default_factory=TrainConfig)
    pfi_loss: str = "log_loss"
    pfi_repeats: int = 10
    effects: EffectsConfig = field(default_factory=EffectsConfig)
    shapley: ShapleyConfig = field(default_factory=ShapleyConfig)
    counterfactual: CounterfactualConfig = field(default_factory=CounterfactualConfig)

    def __post_init__(self):
        if self.replications < 1:
            raise DataError("replications must be at least 1")
        if self.tune_budget < 0:
            raise DataError("tune_budget must be nonnegative")

    @property
    def seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.replications)]

    @classmethod
    def from_dict(cls, d: dict | None) -> "AuditConfig":
        cf = lambda v: _from_dict(CounterfactualConfig, v, {"mcce": MCCEConfig.from_dict,
                                                             "chain": SamplerConfig.from_dict})
        return _from_dict(cls, d, {"train": TrainConfig.from_dict,
                                   "effects": lambda v: _from_dict(EffectsConfig, v),
                                   "shapley": lambda v: _from_dict(ShapleyConfig, v),
                                   "counterfactual": cf})

    @classmethod
    def load(cls, path: str | Path | None) -> "AuditConfig":
        if path is None:
            return cls()
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read config {path}: {e}") from e


def jsonable(obj):
    """Plain JSON types; non-finite floats become None."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, ensure_ascii=False, allow_nan=False) + "\n"


@dataclass
class AuditReport:
    metadata: dict
    replications: list[dict] = field(default_factory=list)
    importance: dict[str, ImportanceReport] = field(default_factory=dict)
    effects: list[EffectResult] = field(default_factory=list)
    explanations: list[Explanation] = field(default_factory=list)
    counterfactuals: list[CounterfactualSet] = field(default_factory=list)
    findings: list[str] = field(default_factory=list)
    figures: list[dict] = field(default_factory=list)
    status: str = "complete"
    failed_stage: str | None = None
    error: str | None = None
    schema: tuple = ()

    def headline(self) -> dict:
        if not self.replications:
            return {}
        auc = np.array([r["metrics"]["test"]["auc"] for r in self.replications], dtype=float)
        acc = np.array([r["metrics"]["test"]["accuracy"] for r in self.replications], dtype=float)
        sd = lambda v: float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
        return {"test_auc_mean": float(np.mean(auc)), "test_auc_sd": sd(auc),
                "test_accuracy_mean": float(np.mean(acc)), "test_accuracy_sd": sd(acc),
                "n_flagged_regions": int(sum(len(e.regions) for e in self.effects))}

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "status": self.status,
            "metadata": self.metadata,
            "headline": self.headline(),
            "replications": self.replications,
            "importance": {k: v.to_dict() for k, v in self.importance.items()},
            "effects": [e.to_dict() for e in self.effects],
            "explanations": [e.to_dict(self.schema) for e in self.explanations],
            "counterfactuals": [c.to_dict() for c in self.counterfactuals],
            "findings": list(self.findings),
            "figures": list(self.figures),
        }
        if self.failed_stage is not None:
            out["failed_stage"] = self.failed_stage
            out["error"] = self.error
        return jsonable(out)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _frame_info(d: TabularDataset) -> dict:
    digest = hashlib.sha256(np.ascontiguousarray(d.values).tobytes()).hexdigest()
    return {"name": "<memory>", "sha256": digest, "rows": d.n, "columns": d.p}


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "feature"


def tag_findings(explanations: Sequence[Explanation]) -> list[str]:
    out = []
    for e in explanations:
        for t in e.tags:
            out.append(f"row {e.index}: {t.feature} = {t.value} looks {t.tag} "
                       f"({t.engine} attribution {t.attribution:+.4f}, score {e.score:.3f})")
    return out


def select_rows(scores: np.ndarray, test_rows: np.ndarray, rows: Sequence[int] | None) -> list[int]:
    """Explicit rows, or the most synthetic-looking and the most real-looking test rows."""
    if rows is not None:
        return [int(r) for r in rows]
    order = np.argsort(scores, kind="stable")
    picks = [int(test_rows[order[0]]), int(test_rows[order[-1]])]
    return list(dict.fromkeys(picks))


class _Run:
    """Stage bookkeeping: remembers the current stage and writes partial artifacts on failure."""

    def __init__(self, report: AuditReport, out: Path):
        self.report, self.out, self.stage = report, out, "ingest"

    def write(self) -> None:
        (self.out / "report.json").write_text(dumps(self.report.to_dict()), encoding="utf-8")

    def fail(self, e: BaseException) -> AuditError:
        self.report.status, self.report.failed_stage, self.report.error = "failed", self.stage, str(e)
        try:
            self.write()
        except Exception:   # the original error matters more than a failed partial write
            logger.exception("could not write partial report")
        return AuditError(self.stage, e)


def _figure(report: AuditReport, out: Path, canvas, name: str, section: str) -> None:
    (out / "figures").mkdir(exist_ok=True)
    canvas.save(out / "figures" / name)
    report.figures.append({"path": f"figures/{name}", "section": section})


def load_inputs(real_csv, synthetic_csv) -> tuple[TabularDataset, list[TabularDataset], dict]:
    paths = [Path(p) for p in ([synthetic_csv] if isinstance(synthetic_csv, (str, Path)) else synthetic_csv)]
    if not paths:
        raise DataError("no synthetic data given")
    real = load_csv(real_csv, provenance="real")
    synths = [load_csv(p, provenance="synthetic") for p in paths]
    schema = real.schema
    for s in synths:
        schema = tuple(merge_schemas(schema, s.schema))
    real = align(real, schema)
    synths = [align(s, schema) for s in synths]
    inputs = {"real": {"name": Path(real_csv).name, "sha256": _sha256(Path(real_csv)), "rows": real.n,
                       "columns": real.p},
              "synthetic": [{"name": p.name, "sha256": _sha256(p), "rows": s.n, "columns": s.p}
                            for p, s in zip(paths, synths)]}
    return real, synths, inputs


def run_audit(real_csv, synthetic_csv, config: AuditConfig | str | Path | None = None,
              out_dir: str | Path = "audit_out") -> AuditReport:
    """Run the full pipeline on CSV inputs and write report.json, figures/ and model.json to ``out_dir``."""
    if not isinstance(config, AuditConfig):
        config = AuditConfig.load(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = AuditReport({"schema_version": SCHEMA_VERSION, "seed": config.seed, "seeds": config.seeds,
                          "config": jsonable(config)})
    run = _Run(report, out)
    try:
        real, synths, inputs = load_inputs(real_csv, synthetic_csv)
        report.metadata["inputs"] = inputs
        report.schema = real.schema
        audit_datasets(real, synths, config, out, report, run)
        run.stage = "report"
        run.write()
    except AuditError:
        raise
    except Exception as e:
        raise run.fail(e) from e
    return report


def importance_sample(X: np.ndarray, cap: int | None, seed: int) -> np.ndarray:
    """At most ``cap`` rows of ``X``, drawn without replacement and kept in order."""
    if cap is None or cap >= len(X):
        return X
    rng = np.random.default_rng([seed, 5])
    return X[np.sort(rng.choice(len(X), cap, replace=False))]


def audit_datasets(real: TabularDataset, synths: Sequence[TabularDataset], config: AuditConfig, out: Path,
                   report: AuditReport, run: _Run) -> None:
    first = None
    train_config = config.train
    pfi_runs, shap_runs = [], []
    for r, seed in enumerate(config.seeds):
        run.stage = "split"
        d = train_test_split(build_detection_dataset(real, synths[r % len(synths)], seed), config.test_fraction, seed)
        if r == 0 and config.tune_budget > 0:
            run.stage = "tune"
            train_config = tune(d, config.tune_budget, seed, folds=config.tune_folds, base=config.train)
        run.stage = "train"
        model = fit_gbdt(d, replace(train_config, seed=seed))
        run.stage = "evaluate"
        metrics = evaluate(model, d)
        report.replications.append({"seed": seed, "synthetic": r % len(synths), "n_trees": len(model.trees),
                                    "metrics": metrics.to_dict()})
        run.stage = "importance"
        pfi_runs.append(permutation_importance(model, d, loss=config.pfi_loss, repeats=config.pfi_repeats, seed=seed))
        Xte, _ = d.part("test")
        phi, _, _ = tree_shap_batch(model, importance_sample(Xte, config.shapley.importance_rows, seed))
        shap_runs.append(shap_importance(phi, d.data.names))
        if r == 0:
            first = (d, model)
            model.save(out / "model.json")
    report.metadata["detector"] = {"config": asdict(train_config), "tuned": config.tune_budget > 0}
    d, model = first
    seeds = config.seeds
    report.importance["pfi"] = combine_reports(pfi_runs) if len(seeds) > 1 else pfi_runs[0]
    report.importance["mean_abs_shap"] = combine_reports(shap_runs) if len(seeds) > 1 else shap_runs[0]
    Xte, _ = d.part("test")
    sc = config.shapley
    rows = importance_sample(Xte, sc.importance_rows, seeds[0])
    M, _, _ = tree_shap_interactions_batch(model, rows)
    report.importance["interaction"] = interaction_importance(M, sc.top_k, d.data.names)
    _figure(report, out, render_importance(report.importance["pfi"], report.importance["mean_abs_shap"]),
            "importance.svg", "importance")
    _figure(report, out, render_importance(report.importance["interaction"], top_k=sc.top_k),
            "interactions.svg", "importance.interaction")
    run.write()

    run.stage = "effects"
    ec = config.effects
    for name in (ec.features or d.data.names):
        eff = feature_effect(model, d, name, ec.resolution, ec.grid_method, ec.instance_sample, seeds[0], ec.delta,
                             ec.plot_curves)
        report.effects.append(eff)
        report.findings.extend(eff.findings())
        _figure(report, out, render_effects(eff), f"effect_{_slug(name)}.svg", f"effects.{name}")
    run.write()

    run.stage = "shapley"
    explain_shapley(d, model, config, out, report)
    run.write()

    run.stage = "counterfactual"
    explain_counterfactuals(real, d, model, config, report)
    if report.counterfactuals:
        (out / "counterfactuals.txt").write_text(
            "\n\n".join(f"row {c.index} ({c.status})\n{c.table()}" for c in report.counterfactuals) + "\n",
            encoding="utf-8")


def explain_shapley(d, model, config: AuditConfig, out: Path, report: AuditReport) -> None:
    sc = config.shapley
    seed = config.seeds[0]
    test_rows = np.flatnonzero(d.is_test)
    Xtr, _ = d.part("train")
    scores = model.predict_proba(d.data.values[test_rows])
    background = BackgroundSet.sample(Xtr, sc.background, seed) if {"kernel", "exact"} & set(sc.engines) else None
    sampler = None
    if "conditional_kernel" in sc.engines:
        sampler = fit_conditional_sampler(d.subset("train").data, ConditionalConfig(seed=seed))
    for row in select_rows(scores, test_rows, sc.rows):
        if not 0 <= row < d.data.n:
            raise DataError(f"row {row} is outside the detection dataset")
        e = explain_instance(model, d.data.values[row], sc.engines, background=background, sampler=sampler,
                             n_coalitions=sc.n_coalitions, n_imputations=sc.n_imputations, seed=seed,
                             margin=sc.margin, index=row, schema=d.data.schema)
        report.explanations.append(e)
        by_scale: dict[str, list[ShapleyVector]] = {}
        for k in sorted(e.vectors):
            by_scale.setdefault(e.vectors[k].scale, []).append(e.vectors[k])
        for scale, vecs in sorted(by_scale.items()):
            _figure(report, out, render_force(vecs), f"force_row{row}_{scale}.svg", f"explanations.{row}")
        if e.interactions is not None:
            _figure(report, out, render_waterfall(e.interactions, sc.waterfall_top_k), f"waterfall_row{row}.svg",
                    f"explanations.{row}")
    report.findings.extend(tag_findings(report.explanations))


def explain_counterfactuals(real: TabularDataset, d, model, config: AuditConfig, report: AuditReport) -> None:
    cc = config.counterfactual
    if cc.n_instances < 1:
        return
    test_rows = np.flatnonzero(d.is_test & (d.labels == 0))
    scores = model.predict_proba(d.data.values[test_rows])
    detected = test_rows[scores <= 0.5]
    if len(detected) == 0:
        return
    rng = np.random.default_rng([config.seeds[0], 4])
    rows = np.sort(rng.choice(detected, min(cc.n_instances, len(detected)), replace=False))
    chain = fit_chain(real, replace(cc.chain, seed=config.seeds[0]))
    report.counterfactuals.extend(generate_many(model, d.data.values[rows], chain, cc.mcce, rows.tolist()))


def audit_frames(real: TabularDataset, synthetic: TabularDataset | Sequence[TabularDataset],
                 config: AuditConfig | None = None, out_dir: str | Path = "audit_out") -> AuditReport:
    """``run_audit`` for in-memory datasets (used by scripts and tests)."""
    config = config or AuditConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    synths = [synthetic] if isinstance(synthetic, TabularDataset) else list(synthetic)
    report = AuditReport({"schema_version": SCHEMA_VERSION, "seed": config.seed, "seeds": config.seeds,
                          "config": jsonable(config),
                          "inputs": {"real": _frame_info(real), "synthetic": [_frame_info(s) for s in synths]}},
                         schema=real.schema)
    run = _Run(report, out)
    try:
        audit_datasets(real, synths, config, out, report, run)
        run.stage = "report"
        run.write()
    except Exception as e:
        raise run.fail(e) from e
    return report


def load_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def schema_path() -> Path:
    return Path(__file__).with_name("schema.json")
