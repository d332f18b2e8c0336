import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from synthaudit.detector.gbdt import TreeEnsembleModel
from synthaudit.detector.metrics import log_loss
from synthaudit.errors import DataError
from synthaudit.importance import (ImportanceEntry, ImportanceReport, combine_reports, interaction_importance,
                                   permutation_importance, shap_importance)
from synthaudit.trees import Leaf, Split, Tree


def step_model(feature=0, p=3, margin=10.0):
    """Perfect classifier on ``x[feature] >= 0``; the other features are unused."""
    return TreeEnsembleModel([Tree.from_nodes(Split(feature, Leaf(-margin), Leaf(margin), threshold=0.0))], 0.0)


def balanced(n=2000, p=3, seed=0):
    rng = np.random.default_rng(seed)
    y = np.r_[np.ones(n // 2), np.zeros(n // 2)].astype(int)
    X = rng.normal(size=(n, p))
    X[:, 0] = np.where(y == 1, 1, -1) * np.abs(X[:, 0]) + np.where(y == 1, 0.01, -0.01)
    return X, y


def test_unused_feature_has_zero_importance():
    X, y = balanced()
    rep = permutation_importance(step_model(), X, y, loss="log_loss", repeats=5)
    assert rep.entry("x1").mean == 0.0 and rep.entry("x2").mean == 0.0
    assert rep.entry("x0").mean > 1.0


def test_perfect_single_feature_classifier_loses_half_accuracy():
    X, y = balanced()
    rep = permutation_importance(step_model(), X, y, loss="one_minus_accuracy", repeats=10)
    assert abs(rep.entry("x0").mean - 0.5) <= 0.05


def test_pfi_matches_direct_computation():
    X, y = balanced(200)
    m = step_model(margin=1.0)
    rep = permutation_importance(m, X, y, repeats=3, seed=7)
    base = log_loss(y, m.predict_proba(X))
    for j in range(3):
        diffs = []
        for r in range(3):
            Xp = X.copy()
            Xp[:, j] = X[np.random.default_rng([7, j, r]).permutation(len(y)), j]
            diffs.append(log_loss(y, m.predict_proba(Xp)) - base)
        assert rep.entries[j].values == pytest.approx(diffs, abs=1e-15)
        assert rep.entries[j].sd == pytest.approx(np.std(diffs, ddof=1))


@settings(max_examples=20)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 1000))
def test_more_repeats_extend_fewer(a, b, seed):
    X, y = balanced(100, seed=seed)
    m = step_model(margin=1.0)
    lo, hi = sorted((a, b))
    r1 = permutation_importance(m, X, y, repeats=lo, seed=seed)
    r2 = permutation_importance(m, X, y, repeats=hi, seed=seed)
    for e1, e2 in zip(r1.entries, r2.entries):
        assert e2.values[:lo] == e1.values


def test_pfi_argument_errors():
    X, y = balanced(20)
    with pytest.raises(DataError):
        permutation_importance(step_model(), X, y, loss="hinge")
    with pytest.raises(DataError):
        permutation_importance(step_model(), X, y, repeats=0)


def test_report_ranking_and_roundtrip():
    rep = ImportanceReport("PFI", [ImportanceEntry(("b",), 0.1, 0.0, [0.1]), ImportanceEntry(("a",), 0.3, 0.0, [0.3]),
                                   ImportanceEntry(("c",), 0.1, 0.0, [0.1])], "log_loss")
    assert [e.label for e in rep.ranked()] == ["a", "b", "c"]
    back = ImportanceReport.from_dict(rep.to_dict())
    assert back.means() == rep.means()


def test_shap_importance_is_mean_absolute_value():
    phi = np.array([[1.0, -2.0], [-3.0, 0.0]])
    rep = shap_importance(phi, ["u", "v"])
    assert rep.entry("u").mean == 2.0 and rep.entry("v").mean == 1.0


def test_interaction_importance_pairs_and_top_k():
    M = np.zeros((2, 3, 3))
    M[:, 0, 1] = M[:, 1, 0] = [0.5, -0.5]
    M[:, 2, 2] = 0.2
    rep = interaction_importance(M, top_k=2, feature_names=["a", "b", "c"])
    assert [e.features for e in rep.ranked()] == [("a", "b"), ("c",)]
    assert rep.entry("a", "b").mean == pytest.approx(1.0)


def test_interaction_importance_rejects_asymmetric():
    M = np.zeros((1, 2, 2))
    M[0, 0, 1] = 1.0
    with pytest.raises(DataError):
        interaction_importance(M)


def test_combine_reports_uses_replication_means():
    r1 = ImportanceReport("PFI", [ImportanceEntry(("a",), 1.0, 0.1, [0.9, 1.1])])
    r2 = ImportanceReport("PFI", [ImportanceEntry(("a",), 3.0, 0.1, [2.9, 3.1])])
    c = combine_reports([r1, r2])
    assert c.entry("a").values == [1.0, 3.0] and c.entry("a").mean == 2.0
    assert c.entry("a").sd == pytest.approx(np.sqrt(2.0))
    with pytest.raises(DataError):
        combine_reports([r1, ImportanceReport("mean_abs_shap", [])])


# --- worked examples ------------------------------------------------------------

def test_unused_feature_is_exactly_zero_for_accuracy_loss():
    X, y = balanced()
    rep = permutation_importance(step_model(), X, y, loss="one_minus_accuracy", repeats=3)
    assert rep.entry("x1").mean == 0.0 and rep.entry("x1").sd == 0.0


def test_duplicated_column_hides_importance_of_the_copy():
    X, y = balanced()
    X[:, 1] = X[:, 0]            # the model splits only on column 0
    rep = permutation_importance(step_model(), X, y, repeats=3)
    assert rep.entry("x1").mean == 0.0 and rep.entry("x0").mean > 1.0


def test_all_zero_attributions_give_zero_importance():
    rep = shap_importance(np.zeros((5, 3)))
    assert [e.mean for e in rep.entries] == [0.0, 0.0, 0.0]


def test_absolute_value_prevents_sign_cancellation():
    rep = shap_importance(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    assert [e.mean for e in rep.entries] == [1.0, 1.0]


def test_stump_carries_the_importance_mass():
    from synthaudit.shapley import BackgroundSet, exact_shapley
    X, _ = balanced(200)
    m = step_model(margin=1.0)
    vecs = [exact_shapley(m, X[i], BackgroundSet.uniform(X[:40])) for i in range(20)]
    means = np.array([e.mean for e in shap_importance(vecs).entries])
    assert means[0] >= 0.99 * means.sum()


def test_additive_model_has_no_pair_terms():
    from helpers import product_table, with_covers
    from synthaudit.shapley import tree_shap_interactions_batch
    trees = [Tree.from_nodes(Split(j, Leaf(-1.0 - j), Leaf(1.0 + j), threshold=0.5)) for j in range(3)]
    X = product_table(3, 2)
    m = with_covers(TreeEnsembleModel(trees, 0.0), X)
    M, _, _ = tree_shap_interactions_batch(m, X)
    rep = interaction_importance(M, top_k=10)
    assert all(e.mean <= 1e-9 for e in rep.entries if len(e.features) == 2)


def test_xor_pair_term_dominates():
    from helpers import product_table, with_covers
    from synthaudit.shapley import tree_shap_interactions_batch
    xor = Split(0, Split(1, Leaf(-1.0), Leaf(1.0), threshold=0.5), Split(1, Leaf(1.0), Leaf(-1.0), threshold=0.5),
                threshold=0.5)
    X = product_table(2, 2)
    m = with_covers(TreeEnsembleModel([Tree.from_nodes(xor)], 0.0), X)
    M, _, _ = tree_shap_interactions_batch(m, X)
    rep = interaction_importance(M)
    assert rep.ranked()[0].features == ("x0", "x1")
    assert rep.entry("x0", "x1").mean > rep.entry("x0").mean


def test_top_k_beyond_term_count_returns_everything():
    rep = interaction_importance(np.zeros((1, 3, 3)), top_k=100)
    assert len(rep.entries) == 6


def test_standard_error_shrinks_with_repeats():
    # the sd of two repeats is itself very noisy, so the standard error is averaged over three seeds
    m = step_model(margin=1.0)
    se = np.zeros(3)
    for seed in range(3):
        X, y = balanced(300, seed=seed)
        se += [permutation_importance(m, X, y, repeats=r, seed=seed).entry("x0").se for r in (2, 8, 32)]
    assert se[0] > se[1] > se[2]


def test_shifted_feature_ranks_above_unshifted():
    from synthaudit.dataset import NUMERIC, ColumnSchema, TabularDataset, build_detection_dataset, train_test_split
    from synthaudit.detector import TrainConfig, fit_gbdt
    from synthaudit.shapley import tree_shap_batch
    rng = np.random.default_rng(0)
    schema = (ColumnSchema("A", NUMERIC), ColumnSchema("B", NUMERIC))
    real = TabularDataset(schema, rng.normal(size=(1000, 2)), "real")
    synth = TabularDataset(schema, rng.normal(size=(1000, 2)) + [1.0, 0.0], "synthetic")
    d = train_test_split(build_detection_dataset(real, synth), 0.3, 0)
    m = fit_gbdt(d, TrainConfig(n_trees=50))
    pfi = permutation_importance(m, d, repeats=5)
    phi, _, _ = tree_shap_batch(m, d.part("test")[0])
    shap = shap_importance(phi, ["A", "B"])
    assert pfi.entry("A").mean > pfi.entry("B").mean
    assert shap.entry("A").mean > shap.entry("B").mean


def test_signed_interaction_terms_reconstruct_prediction():
    from helpers import product_table, random_model, with_covers
    from synthaudit.shapley import tree_shap_interactions
    rng = np.random.default_rng(4)
    X = product_table(4)
    m = with_covers(random_model(rng, 4, 3, 3), X)
    for x in X[::17]:
        M = tree_shap_interactions(m, x)
        total = sum(v for _, v in M.terms())
        assert total == pytest.approx(m.predict_raw(x[None])[0] - M.base_value, abs=1e-9)
