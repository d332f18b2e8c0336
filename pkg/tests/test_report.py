import json
import re
from functools import lru_cache

import jsonschema
import numpy as np
import pytest
from hypothesis import given, strategies as st

from synthaudit.counterfactual import MCCEConfig
from synthaudit.dataset import CATEGORICAL, NUMERIC, ColumnSchema, DetectionDataset, TabularDataset
from synthaudit.detector import TrainConfig
from synthaudit.effects import feature_effect
from synthaudit.errors import DataError
from synthaudit.importance import ImportanceEntry, ImportanceReport
from synthaudit.report import (AuditConfig, AuditError, CounterfactualConfig, EffectsConfig, ShapleyConfig,
                               audit_frames, load_report, render_effects, render_force, render_importance,
                               render_waterfall, run_audit, schema_path, waterfall_terms)
from synthaudit.report.audit import importance_sample
from synthaudit.report.svg import nice_ticks
from synthaudit.shapley.types import InteractionMatrix, ShapleyVector
from synthaudit.toydata import correlated_toy, planted_synthetic


def small_config(**kw) -> AuditConfig:
    base = dict(seed=0, replications=2, tune_budget=0, train=TrainConfig(n_trees=60), pfi_repeats=3,
                effects=EffectsConfig(resolution=12),
                shapley=ShapleyConfig(n_coalitions=100, n_imputations=5, background=20, importance_rows=200),
                counterfactual=CounterfactualConfig(n_instances=3, mcce=MCCEConfig(n_samples=2000)))
    base.update(kw)
    return AuditConfig(**base)


@lru_cache(maxsize=None)
def toy_pair(n=1500):
    real = correlated_toy(n, seed=0)
    return real, planted_synthetic(real, seed=0)


@pytest.fixture(scope="module")
def toy_audit(tmp_path_factory):
    real, synth = toy_pair()
    out = tmp_path_factory.mktemp("audit")
    return audit_frames(real, synth, small_config(), out), out


def classes(svg: str, cls: str) -> int:
    return len(re.findall(f'class="{cls}"', svg))


# --- importance figures ---------------------------------------------------------

def test_three_bars_sorted_descending():
    rep = ImportanceReport("PFI", [ImportanceEntry(("a",), 0.1, 0.0), ImportanceEntry(("b",), 0.3, 0.0),
                                   ImportanceEntry(("c",), 0.2, 0.0)], loss="log_loss")
    svg = render_importance(rep).to_string()
    assert re.findall(r'class="bar" data-feature="(\w)"', svg) == ["b", "c", "a"]
    assert classes(svg, "box") == 0


def test_replicated_entries_get_boxes():
    rng = np.random.default_rng(0)
    entries = [ImportanceEntry((f"f{j}",), 0.1 * j, 0.01, list(0.1 * j + 0.01 * rng.normal(size=10)))
               for j in range(4)]
    svg = render_importance(ImportanceReport("PFI", entries)).to_string()
    assert classes(svg, "box") == 4 and classes(svg, "whisker") == 8


def test_interaction_labels():
    entries = [ImportanceEntry(("a", "b"), 0.5, 0.0), ImportanceEntry(("a",), 0.2, 0.0)]
    svg = render_importance(ImportanceReport("interaction", entries), top_k=20).to_string()
    assert "a × b" in svg


def test_empty_importance_section():
    with pytest.raises(DataError):
        render_importance(ImportanceReport("PFI", []))
    with pytest.raises(DataError):
        render_importance()


# --- effect figures -------------------------------------------------------------

def toy_detection(n=400, seed=0, categories=3):
    rng = np.random.default_rng(seed)
    cats = tuple(f"c{k}" for k in range(categories))
    schema = (ColumnSchema("a", NUMERIC), ColumnSchema("g", CATEGORICAL, cats))
    v = np.column_stack([rng.normal(size=n), rng.integers(0, categories, n)])
    return DetectionDataset(TabularDataset(schema, v), np.arange(n) % 2)


class ProbaModel:
    def __init__(self, f):
        self.f = f

    def predict_proba(self, X):
        return self.f(np.asarray(X))


def test_constant_model_gives_flat_line_at_half():
    eff = feature_effect(ProbaModel(lambda X: np.full(len(X), 0.5)), toy_detection(), "a", resolution=10)
    svg = render_effects(eff).to_string()
    pts = re.search(r'<polyline points="([^"]+)"[^>]*class="pdp"', svg).group(1)
    ys = {p.split(",")[1] for p in pts.split()}
    assert ys == {"190"}                    # y axis maps [0, 1] to [330, 50]
    assert classes(svg, "flag-region") == 0


def test_flagged_region_is_shaded(toy_audit):
    report, _ = toy_audit
    hours = next(e for e in report.effects if e.feature == "hours")
    assert hours.regions
    svg = render_effects(hours).to_string()
    assert classes(svg, "flag-region") == len(hours.regions)
    assert 'data-kind="unrealistic synthetic region"' in svg


def test_fourteen_classes_give_fourteen_boxes():
    d = toy_detection(1400, categories=14)
    eff = feature_effect(ProbaModel(lambda X: 0.5 + 0.02 * (X[:, 1] - 7)), d, "g")
    svg = render_effects(eff).to_string()
    assert classes(svg, "box") == 14 and classes(svg, "pdp-marker") == 14


@given(st.floats(-1e6, 1e6), st.floats(0, 1e3))
def test_ticks_stay_inside_the_range(lo, width):
    # near-zero widths at large offsets used to stall the tick loop
    ticks = nice_ticks(lo, lo + width)
    assert 1 <= len(ticks) <= 11
    span = max(width, 1e-9 * max(abs(lo), 1e-300))
    assert all(lo - span * 1e-6 - 1e-9 <= t <= lo + width + span * 1e-6 + 1e-9 for t in ticks)


# --- force and waterfall --------------------------------------------------------

def vector(values, base=0.5, scale="probability", engine="kernel"):
    values = np.asarray(values, dtype=float)
    return ShapleyVector(values, base, base + values.sum(), scale, [f"x{j}" for j in range(len(values))], engine)


def segment_sum(svg: str) -> float:
    return sum(float(v) for v in re.findall(r'class="segment"[^>]*data-value="([^"]+)"', svg))


def test_zero_vector_gives_baseline_only_plot():
    svg = render_force(vector([0.0, 0.0, 0.0])).to_string()
    assert classes(svg, "segment") == 0
    assert classes(svg, "base-marker") == 1 and classes(svg, "prediction-marker") == 1


def test_force_segments_sum_to_prediction_minus_base():
    rng = np.random.default_rng(0)
    v = vector(rng.normal(0, 0.1, 8))
    svg = render_force(v).to_string()
    assert classes(svg, "segment") == 8
    # data-value is printed with six significant digits; the exact sum is checked on the plotted values
    assert segment_sum(svg) == pytest.approx(v.prediction - v.base_value, abs=1e-5)
    assert float(np.sum(v.values)) == pytest.approx(v.prediction - v.base_value, abs=1e-9)


def test_waterfall_rest_preserves_efficiency():
    rng = np.random.default_rng(1)
    M = rng.normal(0, 0.2, (6, 6))
    M = (M + M.T) / 2
    im = InteractionMatrix(M, -0.3, -0.3 + M.sum(), "log_odds", [f"f{j}" for j in range(6)])
    terms = waterfall_terms(im, top_k=5)
    assert len(terms) == 6 and terms[-1][0] == "rest (16 terms)"
    assert sum(v for _, v in terms) == pytest.approx(im.prediction - im.base_value, abs=1e-9)
    svg = render_waterfall(im, top_k=5).to_string()
    assert classes(svg, "segment") == 6 and "log-odds" in svg


def test_waterfall_of_vector_without_rest():
    v = vector([0.1, -0.2, 0.05])
    terms = waterfall_terms(v, top_k=10)
    assert [t for t, _ in terms] == ["x1", "x0", "x2"]
    with pytest.raises(DataError):
        waterfall_terms(v, top_k=0)


def test_mixed_scales_are_rejected():
    with pytest.raises(DataError):
        render_force([vector([0.1]), vector([0.1], scale="log_odds")])
    with pytest.raises(DataError):
        render_waterfall([vector([0.1]), vector([0.1], scale="log_odds")])


def test_axis_names_the_scale():
    assert "probability of real" in render_force(vector([0.1, -0.1])).to_string()
    assert "log-odds" in render_force(vector([0.1, -0.1], scale="log_odds")).to_string()


# --- the audit ------------------------------------------------------------------

def test_report_validates_against_schema(toy_audit):
    _, out = toy_audit
    doc = load_report(out / "report.json")
    jsonschema.validate(doc, json.loads(schema_path().read_text()))
    assert doc["status"] == "complete" and len(doc["replications"]) == 2


def test_every_figure_references_a_section(toy_audit):
    _, out = toy_audit
    doc = load_report(out / "report.json")
    sections = {"importance", "importance.interaction"} | {f"effects.{e['feature']}" for e in doc["effects"]} \
        | {f"explanations.{e['index']}" for e in doc["explanations"]}
    for fig in doc["figures"]:
        assert fig["section"] in sections
        assert (out / fig["path"]).exists()


def test_findings_list_each_flag_exactly_once(toy_audit):
    report, _ = toy_audit
    flags = [f for e in report.effects for f in e.findings()]
    n_tags = sum(len(e.tags) for e in report.explanations)
    assert len(report.findings) == len(flags) + n_tags
    assert len(set(report.findings)) == len(report.findings)
    for f in flags:
        assert report.findings.count(f) == 1


def test_reruns_are_byte_identical(tmp_path):
    real, synth = toy_pair(600)
    config = small_config(replications=1, counterfactual=CounterfactualConfig(n_instances=2,
                                                                              mcce=MCCEConfig(n_samples=500)))
    a, b = tmp_path / "a", tmp_path / "b"
    audit_frames(real, synth, config, a)
    audit_frames(real, synth, config, b)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files and files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_identical_inputs_are_indistinguishable(tmp_path):
    real, _ = toy_pair(2000)
    path = tmp_path / "real.csv"
    real.to_csv(path)
    report = run_audit(path, path, small_config(replications=1), tmp_path / "out")
    assert abs(report.headline()["test_auc_mean"] - 0.5) <= 0.05
    assert all(not e.regions for e in report.effects)


def test_missing_synthetic_file_fails_in_ingest(tmp_path):
    real, _ = toy_pair(600)
    real.to_csv(tmp_path / "real.csv")
    with pytest.raises(AuditError) as info:
        run_audit(tmp_path / "real.csv", tmp_path / "nope.csv", small_config(), tmp_path / "out")
    assert info.value.stage == "ingest"
    doc = load_report(tmp_path / "out" / "report.json")
    assert doc["status"] == "failed" and doc["failed_stage"] == "ingest"


def test_importance_sample_spans_the_test_part():
    X = np.arange(100.0)[:, None]           # test parts list real rows before synthetic ones
    a, b = importance_sample(X, 30, 1), importance_sample(X, 30, 1)
    assert np.array_equal(a, b) and len(a) == 30
    assert np.all(np.diff(a[:, 0]) > 0) and a[:, 0].max() >= 50
    assert importance_sample(X, None, 1) is X and importance_sample(X, 500, 1) is X


def test_config_round_trip_and_unknown_keys():
    c = AuditConfig.from_dict({"replications": 3, "effects": {"resolution": 7},
                               "counterfactual": {"mcce": {"n_samples": 50, "immutable": ["age"]}}})
    assert c.replications == 3 and c.effects.resolution == 7
    assert c.counterfactual.mcce.immutable == ("age",)
    with pytest.raises(DataError):
        AuditConfig.from_dict({"replicates": 3})
    with pytest.raises(DataError):
        AuditConfig.from_dict({"replications": 0})
