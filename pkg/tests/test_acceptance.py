"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -s`` to see the lines
interleaved with the progress output; without ``-s`` they are printed through
the terminal reporter anyway.
"""
import time

import numpy as np
import pytest

from helpers import product_table, random_model, with_covers
from synthaudit import cli
from synthaudit.counterfactual import FOUND, MCCEConfig
from synthaudit.dataset import (CATEGORICAL, NUMERIC, ColumnSchema, TabularDataset, build_detection_dataset,
                                column_statistics, load_csv, load_schema, train_test_split)
from synthaudit.detector import TrainConfig, evaluate, fit_gbdt
from synthaudit.detector.gbdt import TreeEnsembleModel
from synthaudit.effects import UNREALISTIC_REGION, feature_effect
from synthaudit.generator import baseline_synthesize
from synthaudit.importance import permutation_importance
from synthaudit.public_data import adult_queries, data_dir, prepare_adult, prepare_nursery
from synthaudit.report import AuditConfig, CounterfactualConfig, audit_frames
from synthaudit.shapley import (BackgroundSet, ValueFunctionSpec, exact_shapley, kernel_shap, tree_shap,
                                tree_shap_interactions)
from synthaudit.toydata import DEPENDENT_PAIRS, SPIKE, correlated_toy, planted_synthetic
from synthaudit.trees import Leaf, Split, Tree

PROB = ValueFunctionSpec(scale="probability")
LOG = ValueFunctionSpec(scale="log_odds")


@pytest.fixture
def verdict(request, capsys):
    """Print one PASS/FAIL line for the criterion, then fail the test if it did not hold."""
    def emit(number, ok, detail, seconds, budget):
        ok = bool(ok) and seconds < budget
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail} [{seconds:.1f}s / {budget:.0f}s]"
        with capsys.disabled():
            print("\n" + line, flush=True)
        assert ok, line
    return emit


# 1 -----------------------------------------------------------------------------

ADULT_TARGETS = {
    "mean(education_num | age=17)": (6.69, 0.01),
    "mean(age | education_num=4)": (49.12, 0.05),
    "P(education_num=4 | age=17)": (0.007, 0.001),
    "corr(age, education_num)": (0.03, 0.005),
    "corr(age, education_num | age<=20)": (0.54, 0.02),
}


def test_criterion_1_adult_statistics(verdict):
    t0 = time.perf_counter()
    d = missing = None
    try:
        csv_path, schema_path = prepare_adult(data_dir())
        d = load_csv(csv_path, load_schema(schema_path))
    except Exception as e:  # noqa: BLE001 - reported as the criterion's failure
        missing = f"adult data unavailable under {data_dir()}: {e}"
    if d is None:
        verdict(1, False, missing, time.perf_counter() - t0, 30)
    stats = column_statistics(d, adult_queries())
    got = {q["label"]: q["value"] for q in stats.conditionals}
    misses = []
    if (d.n, d.p) != (47876, 14):
        misses.append(f"shape {d.n}x{d.p} != 47876x14")
    for label, (target, tol) in ADULT_TARGETS.items():
        v = got[label]
        if v is None:
            misses.append(f"{label} undefined")
        elif abs(v - target) > tol:
            misses.append(f"{label} = {v:.4f} not in {target} ± {tol}")
    detail = "all statistics match" if not misses else "; ".join(misses)
    verdict(1, not misses, detail, time.perf_counter() - t0, 30)


# 2 -----------------------------------------------------------------------------

def test_criterion_2_nursery_ingestion(verdict):
    t0 = time.perf_counter()
    d = missing = None
    try:
        d = load_csv(prepare_nursery(data_dir()))
    except Exception as e:  # noqa: BLE001 - reported as the criterion's failure
        missing = f"nursery data unavailable under {data_dir()}: {e}"
    if d is None:
        verdict(2, False, missing, time.perf_counter() - t0, 5)
    all_cat = all(c.is_categorical for c in d.schema)
    ok = (d.n, d.p) == (12958, 9) and all_cat
    verdict(2, ok, f"{d.n}x{d.p}, all categorical: {all_cat}", time.perf_counter() - t0, 5)


# 3 -----------------------------------------------------------------------------

def test_criterion_3_shapley_oracle_equivalence(verdict):
    t0 = time.perf_counter()
    worst = {"kernel": 0.0, "tree": 0.0, "rows": 0.0}
    n_models = 24
    for seed in range(n_models):
        rng = np.random.default_rng(1000 + seed)
        p = int(rng.integers(2, 9))
        levels = 3 if p <= 5 else 2
        X = product_table(p, levels)
        m = with_covers(random_model(rng, p, int(rng.integers(1, 4)), int(rng.integers(1, 5)), levels,
                                     rng.random(p) < 0.3), X)
        bg = BackgroundSet.uniform(X)      # the exhaustive table is the cover-implied background
        for x in X[rng.choice(len(X), 3, replace=False)]:
            ex_p = exact_shapley(m, x, bg, PROB).values
            ks = kernel_shap(m, x, bg, PROB, n_coalitions=2 ** p, seed=seed).values
            worst["kernel"] = max(worst["kernel"], np.abs(ks - ex_p).max())
            ex_l = exact_shapley(m, x, bg, LOG).values
            ts = tree_shap(m, x).values
            worst["tree"] = max(worst["tree"], np.abs(ts - ex_l).max())
            M = tree_shap_interactions(m, x).matrix
            worst["rows"] = max(worst["rows"], np.abs(M.sum(axis=1) - ts).max())
    ok = worst["kernel"] <= 1e-6 and worst["tree"] <= 1e-6 and worst["rows"] <= 1e-9
    detail = (f"{n_models} models, max |kernel-exact| {worst['kernel']:.1e}, |tree-exact| {worst['tree']:.1e}, "
              f"|row sum - tree| {worst['rows']:.1e}")
    verdict(3, ok, detail, time.perf_counter() - t0, 120)


# 4 -----------------------------------------------------------------------------

def _mirrored(rng, p):
    base = random_model(rng, p, 1, 3, 3).trees[0]
    swap = np.where(base.feature == 0, 1, np.where(base.feature == 1, 0, base.feature))
    other = Tree(swap, base.threshold, base.left, base.right, base.default_left, base.value, base.cover,
                 base.left_categories)
    return TreeEnsembleModel([base, other], 0.0)


def test_criterion_4_axioms(verdict):
    t0 = time.perf_counter()
    failures, cases = [], 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        p = int(rng.integers(2, 5))
        X = product_table(p)
        m = with_covers(random_model(rng, p, int(rng.integers(1, 4)), 3), X)
        x = X[int(rng.integers(len(X)))]
        bg = BackgroundSet.uniform(X[::2])
        # efficiency on every engine
        e, k, t = (exact_shapley(m, x, bg, PROB), kernel_shap(m, x, bg, PROB, n_coalitions=p + 4, seed=seed),
                   tree_shap(m, x))
        if abs(e.efficiency_gap) > 1e-9 or abs(t.efficiency_gap) > 1e-9 or abs(k.efficiency_gap) > 1e-6:
            failures.append(f"efficiency {seed}")
        # dummy: an extra column no tree uses
        Xd = np.column_stack([X, np.arange(len(X)) % 3])
        xd = np.append(x, 1.0)
        bgd = BackgroundSet.uniform(Xd[::2])
        if abs(exact_shapley(m, xd, bgd, PROB).values[p]) > 1e-9 or tree_shap(m, xd).values[p] != 0.0:
            failures.append(f"dummy {seed}")
        # symmetry: features 0 and 1 enter through mirrored trees and take equal values
        ms = _mirrored(rng, 3)
        Xs = product_table(3)
        xs = np.array([1.0, 1.0, float(rng.integers(3))])
        vs = exact_shapley(ms, xs, BackgroundSet.uniform(Xs), LOG).values
        ts = tree_shap(with_covers(ms, Xs), xs).values
        if abs(vs[0] - vs[1]) > 1e-9 or abs(ts[0] - ts[1]) > 1e-9:
            failures.append(f"symmetry {seed}")
        # linearity with positive weights
        g = with_covers(random_model(rng, p, 2, 3), X)
        a, b = rng.uniform(0.1, 3, 2)
        comb = lambda Z: a * m.predict_raw(Z) + b * g.predict_raw(Z)
        lhs = exact_shapley(comb, x, bg, PROB).values
        rhs = a * exact_shapley(m.predict_raw, x, bg, PROB).values + b * exact_shapley(g.predict_raw, x, bg, PROB).values
        fg = TreeEnsembleModel(m.trees + g.trees, m.base_score + g.base_score)
        if np.abs(lhs - rhs).max() > 1e-9 or np.abs(tree_shap(fg, x).values - tree_shap(m, x).values
                                                    - tree_shap(g, x).values).max() > 1e-9:
            failures.append(f"linearity {seed}")
        cases += 1
    detail = f"{cases} randomized cases x 4 axioms, failures: {failures[:5] or 'none'}"
    verdict(4, not failures and cases >= 100, detail, time.perf_counter() - t0, 120)


# 5 -----------------------------------------------------------------------------

class Additive:
    def predict_proba(self, X):
        X = np.asarray(X)
        return 0.5 + 0.2 * np.tanh(X[:, 0]) + 0.05 * np.sin(X[:, 1]) + 0.03 * (X[:, 2] == 1)


def test_criterion_5_pdp_ice_identity(verdict):
    t0 = time.perf_counter()
    schema = (ColumnSchema("a", NUMERIC), ColumnSchema("b", NUMERIC), ColumnSchema("c", CATEGORICAL, ("x", "y", "z")))
    identity_gap, parallel_gap, runs = 0.0, 0.0, 0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        real = TabularDataset(schema, np.column_stack([rng.normal(size=600), rng.normal(size=600),
                                                       rng.integers(0, 3, 600)]), "real")
        synth = real.with_values(real.values + [0.5, 0, 0], "synthetic")
        d = train_test_split(build_detection_dataset(real, synth, seed), 0.3, seed)
        trained = fit_gbdt(d, TrainConfig(n_trees=30, seed=seed))
        for model in (trained, Additive()):
            for feature in ("a", "b", "c"):
                eff = feature_effect(model, d, feature, resolution=15, seed=seed)
                identity_gap = max(identity_gap, float(np.abs(eff.pdp - eff.ice.mean(axis=0)).max()))
                runs += 1
                if isinstance(model, Additive):
                    dev = eff.ice - eff.ice[:, :1]
                    parallel_gap = max(parallel_gap, float(np.abs(dev - dev[0]).max()))
    ok = identity_gap == 0.0 and parallel_gap <= 1e-9
    detail = f"{runs} effect runs, max |PDP - mean ICE| {identity_gap:.1e}, additive ICE spread {parallel_gap:.1e}"
    verdict(5, ok, detail, time.perf_counter() - t0, 60)


# 6 -----------------------------------------------------------------------------

def test_criterion_6_pfi_soundness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    n = 2000
    y = np.r_[np.ones(n // 2), np.zeros(n // 2)].astype(int)
    X = rng.normal(size=(n, 3))
    X[:, 0] = np.where(y == 1, 1, -1) * (np.abs(X[:, 0]) + 0.01)
    stump = TreeEnsembleModel([Tree.from_nodes(Split(0, Leaf(-10.0), Leaf(10.0), threshold=0.0))], 0.0)
    ll = permutation_importance(stump, X, y, loss="log_loss", repeats=5)
    acc = permutation_importance(stump, X, y, loss="one_minus_accuracy", repeats=10)
    unused = max(abs(ll.entry("x1").mean), abs(ll.entry("x2").mean), abs(acc.entry("x1").mean))
    informative = acc.entry("x0").mean
    ok = unused == 0.0 and abs(informative - 0.5) <= 0.05
    verdict(6, ok, f"unused-feature PFI {unused}, informative PFI(1-acc) {informative:.4f}",
            time.perf_counter() - t0, 60)


# 7 -----------------------------------------------------------------------------

def test_criterion_7_detector_sanity(verdict):
    t0 = time.perf_counter()
    schema = (ColumnSchema("a", NUMERIC), ColumnSchema("b", NUMERIC), ColumnSchema("c", CATEGORICAL, ("x", "y", "z")))

    def frame(n, seed, shift, provenance):
        rng = np.random.default_rng(seed)
        v = np.column_stack([rng.normal(shift, 1, n), rng.normal(size=n), rng.integers(0, 3, n)])
        return TabularDataset(schema, v, provenance)

    null_aucs = []
    for seed in range(5):
        d = train_test_split(build_detection_dataset(frame(1500, 2 * seed, 0.0, "real"),
                                                     frame(1500, 2 * seed + 1, 0.0, "synthetic"), seed), 0.3, seed)
        null_aucs.append(evaluate(fit_gbdt(d, TrainConfig(seed=seed)), d).test.auc)
    d = train_test_split(build_detection_dataset(frame(1000, 0, 0.0, "real"), frame(1000, 1, 6.0, "synthetic")))
    sep_auc = evaluate(fit_gbdt(d, TrainConfig(n_trees=50)), d).test.auc
    d = train_test_split(build_detection_dataset(frame(1500, 0, 0.0, "real"), frame(1500, 1, 0.5, "synthetic")))
    loss = np.array(fit_gbdt(d, TrainConfig(n_trees=60, early_stopping_rounds=0)).history["train_loss"])
    monotone = bool(np.all(np.diff(loss) <= 1e-12))
    ok = all(abs(a - 0.5) <= 0.05 for a in null_aucs) and sep_auc >= 0.99 and monotone
    detail = (f"null AUCs {[round(a, 3) for a in null_aucs]}, separable AUC {sep_auc:.4f}, "
              f"train loss non-increasing: {monotone}")
    verdict(7, ok, detail, time.perf_counter() - t0, 120)


# 8 -----------------------------------------------------------------------------

def test_criterion_8_end_to_end_toy_audit(verdict, tmp_path):
    t0 = time.perf_counter()
    real = correlated_toy(5000, seed=0)
    synth = planted_synthetic(real, seed=0)
    config = AuditConfig(seed=0, replications=10, tune_budget=10,
                         counterfactual=CounterfactualConfig(n_instances=10, mcce=MCCEConfig()))
    report = audit_frames(real, synth, config, tmp_path)
    auc = report.headline()["test_auc_mean"]

    pairs = [set(p) for p in DEPENDENT_PAIRS]
    top = {k: {e.label for e in report.importance[k].ranked()[:3]} for k in ("pfi", "mean_abs_shap")}
    pair_ok = any(pair <= top[k] for k in top for pair in pairs)

    hours = next(e for e in report.effects if e.feature == "hours")
    spike = [r for r in hours.regions if r.kind == UNREALISTIC_REGION and r.extreme < 0.45
             and r.start <= SPIKE[1] and r.end >= SPIKE[0]]

    sets = report.counterfactuals
    found = [s for s in sets if s.status == FOUND]
    valid = all(c.score > 0.5 for s in sets for c in s.candidates)
    sparsity = float(np.mean([s.candidates[0].sparsity for s in found])) if found else float("inf")
    ok = auc > 0.6 and pair_ok and bool(spike) and len(found) == 10 and valid and sparsity <= 3
    detail = (f"AUC {auc:.3f}, top-3 PFI {sorted(top['pfi'])}, top-3 |SHAP| {sorted(top['mean_abs_shap'])}, "
              f"spike flagged: {bool(spike)}, CFs found {len(found)}/10, valid {valid}, mean sparsity {sparsity:.2f}")
    verdict(8, ok, detail, time.perf_counter() - t0, 600)


# 9 -----------------------------------------------------------------------------

def test_criterion_9_chain_beats_independent(verdict):
    t0 = time.perf_counter()
    results = []
    for seed in range(3):
        real = correlated_toy(5000, seed=seed)
        aucs = []
        for mode in ("cart_chain", "independent"):
            synth = baseline_synthesize(real, mode, real.n, seed)
            d = train_test_split(build_detection_dataset(real, synth, seed), 0.3, seed)
            aucs.append(evaluate(fit_gbdt(d, TrainConfig(seed=seed)), d).test.auc)
        results.append(tuple(aucs))
    wins = sum(c < i for c, i in results)
    detail = f"{wins}/3 seeds, (chain, independent) AUCs {[(round(c, 3), round(i, 3)) for c, i in results]}"
    verdict(9, wins == 3, detail, time.perf_counter() - t0, 600)


# 10 ----------------------------------------------------------------------------

def test_criterion_10_byte_identical_reruns(verdict, tmp_path):
    t0 = time.perf_counter()
    real = correlated_toy(2000, seed=0)
    real.to_csv(tmp_path / "real.csv")
    planted_synthetic(real, seed=0).to_csv(tmp_path / "synth.csv")
    (tmp_path / "config.json").write_text('{"replications": 2, "tune_budget": 3, '
                                          '"counterfactual": {"n_instances": 3, "mcce": {"n_samples": 5000}}}')
    for run in ("a", "b"):
        code = cli.main(["audit", str(tmp_path / "real.csv"), str(tmp_path / "synth.csv"), "--config",
                         str(tmp_path / "config.json"), "--seed", "7", "--out", str(tmp_path / run)])
        assert code == 0
    a, b = tmp_path / "a", tmp_path / "b"
    files = sorted(str(p.relative_to(a)) for p in a.rglob("*") if p.is_file())
    same_set = files == sorted(str(p.relative_to(b)) for p in b.rglob("*") if p.is_file())
    differing = [f for f in files if not (b / f).exists() or (a / f).read_bytes() != (b / f).read_bytes()]
    n_json = sum(f.endswith(".json") for f in files)
    n_svg = sum(f.endswith(".svg") for f in files)
    ok = same_set and not differing and n_json >= 1 and n_svg >= 1
    detail = f"{len(files)} artifacts ({n_json} JSON, {n_svg} SVG), differing: {differing or 'none'}"
    verdict(10, ok, detail, time.perf_counter() - t0, 600)
