import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from synthaudit.dataset import CATEGORICAL, NUMERIC, ColumnSchema, TabularDataset, build_detection_dataset, \
    train_test_split
from synthaudit.detector import TrainConfig, evaluate, fit_gbdt
from synthaudit.errors import DataError
from synthaudit.generator import (BLOCK, ChainModel, SamplerConfig, baseline_synthesize, column_order, fit_chain,
                                  mutual_information, sample)
from synthaudit.toydata import correlated_toy

MIXED = (ColumnSchema("x", NUMERIC), ColumnSchema("y", NUMERIC), ColumnSchema("c", CATEGORICAL, ("a", "b", "c")))


def mixed(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    y = x + 0.3 * rng.normal(size=n)
    c = np.digitize(x, [-0.5, 0.7]).astype(float)
    return TabularDataset(MIXED, np.column_stack([x, y, c]), "real")


def detection_auc(real, synth, seed=0):
    d = train_test_split(build_detection_dataset(real, synth, seed), 0.3, seed)
    return evaluate(fit_gbdt(d, TrainConfig(seed=seed)), d).test.auc


def test_single_column_chain_is_empirical_marginal():
    rng = np.random.default_rng(0)
    d = TabularDataset((ColumnSchema("x", NUMERIC),), rng.normal(size=(200, 1)), "real")
    m = fit_chain(d)
    assert m.order == [0] and m.columns[0].tree is None
    s = sample(m, 500, seed=1)
    assert set(s.values[:, 0]) <= set(d.values[:, 0])


def test_identity_column_is_reproduced():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 10, 1000)
    d = TabularDataset(MIXED[:2], np.column_stack([x, x]), "real")
    m = fit_chain(d, SamplerConfig(order=("x", "y")))
    s = sample(m, 2000, seed=0).values
    assert np.corrcoef(s[:, 0], s[:, 1])[0, 1] >= 0.95
    # each y is drawn from the pool of the leaf x falls into, so |y - x| is at most that leaf's width
    col = m.columns[1]
    leaf = col.tree.apply(s)
    for k in np.unique(leaf):
        pool = col.pool[col.offsets[k]:col.offsets[k] + col.sizes[k]]
        assert np.abs(s[leaf == k, 1] - s[leaf == k, 0]).max() <= pool.max() - pool.min() + 1e-12


def test_independent_mode_breaks_dependence():
    real = mixed(4000)
    s = baseline_synthesize(real, "independent", 4000, seed=0).values
    assert abs(np.corrcoef(s[:, 0], s[:, 1])[0, 1]) < 0.06
    assert np.corrcoef(real.values[:, 0], real.values[:, 1])[0, 1] > 0.9


def test_empty_draw():
    s = sample(fit_chain(mixed(200)), 0, seed=0)
    assert s.n == 0 and s.p == 3


def test_fix_all_columns_gives_copies():
    m = fit_chain(mixed(300))
    s = sample(m, 50, seed=0, fixed={"x": 0.25, "y": -1.0, "c": "b"})
    assert np.all(s.values == [0.25, -1.0, 1.0])


def test_categorical_goodness_of_fit():
    real = mixed(5000)
    s = sample(fit_chain(real), 10_000, seed=3)
    obs = np.bincount(s.values[:, 2].astype(int), minlength=3)
    freq = np.bincount(real.values[:, 2].astype(int), minlength=3) / real.n
    assert stats.chisquare(obs, freq * obs.sum()).pvalue > 0.001


def test_marginal_means_within_three_standard_errors():
    real = mixed(5000)
    s = sample(fit_chain(real), 10_000, seed=5).values
    for j in (0, 1):
        se = real.values[:, j].std() / np.sqrt(10_000)
        assert abs(s[:, j].mean() - real.values[:, j].mean()) <= 3 * se


def test_sampling_is_deterministic_and_seed_dependent():
    m = fit_chain(mixed(1000))
    a, b, c = sample(m, 300, seed=1), sample(m, 300, seed=1), sample(m, 300, seed=2)
    assert np.array_equal(a.values, b.values)
    assert (a.values[:, 0] == c.values[:, 0]).mean() < 0.05


def test_block_prefix_is_stable():
    m = fit_chain(mixed(500))
    long, short = sample(m, BLOCK + 10, seed=4), sample(m, 100, seed=4)
    assert np.array_equal(long.values[:100], short.values)


@settings(max_examples=25)
@given(st.integers(0, 2 ** 16), st.floats(-2, 2), st.sampled_from(["a", "b", "c"]))
def test_fixed_values_are_respected(seed, x, c):
    m = fit_chain(mixed(400, seed=seed % 7))
    s = sample(m, 64, seed=seed, fixed={"x": x, "c": c})
    assert np.all(s.values[:, 0] == x) and np.all(s.values[:, 2] == MIXED[2].categories.index(c))


def test_fixing_a_column_leaves_other_streams_aligned():
    # the fixed column's draw is still consumed, so a column before it in the chain is unchanged
    m = fit_chain(mixed(800), SamplerConfig(order=("x", "y", "c")))
    free, fixed = sample(m, 200, seed=0), sample(m, 200, seed=0, fixed={"c": "a"})
    assert np.array_equal(free.values[:, :2], fixed.values[:, :2])


def test_fixed_value_outside_schema():
    m = fit_chain(mixed(200))
    with pytest.raises(DataError):
        sample(m, 5, fixed={"c": "zzz"})
    with pytest.raises(DataError):
        sample(m, 5, fixed={"c": 7.0})
    with pytest.raises(DataError):
        sample(m, 5, fixed={"x": np.inf})
    with pytest.raises(DataError):
        sample(m, 5, fixed={"nope": 1.0})


def test_config_and_fit_errors():
    with pytest.raises(DataError):
        SamplerConfig(mode="gan")
    with pytest.raises(DataError):
        SamplerConfig(max_depth=0)
    with pytest.raises(DataError):
        fit_chain(TabularDataset(MIXED, np.zeros((0, 3)), "real"))
    with pytest.raises(DataError):
        fit_chain(mixed(200), SamplerConfig(order=("x", "y")))
    with pytest.raises(DataError):
        sample(fit_chain(mixed(200)), -1)


def test_samples_stay_on_training_values():
    real = mixed(600)
    s = sample(fit_chain(real), 1000, seed=0).values
    for j in range(3):
        assert set(s[:, j]) <= set(real.values[:, j])


def test_save_load_round_trip(tmp_path):
    m = fit_chain(mixed(500))
    m.save(tmp_path / "chain.json")
    back = ChainModel.load(tmp_path / "chain.json")
    assert back.order == m.order
    assert np.array_equal(sample(back, 300, seed=9).values, sample(m, 300, seed=9).values)


def test_mutual_information_orders_columns():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 4, 5000)
    assert mutual_information(a, a) == pytest.approx(np.log(4), abs=0.01)
    assert mutual_information(a, rng.integers(0, 4, 5000)) < 0.01
    d = mixed(2000)
    # x, y and c all depend on each other; an added noise column should come last
    rng = np.random.default_rng(1)
    noisy = TabularDataset(MIXED + (ColumnSchema("z", NUMERIC),), np.column_stack([d.values, rng.normal(size=d.n)]),
                           "real")
    assert column_order(noisy)[-1] == 3
    assert column_order(d, first=("c",))[0] == 2


def test_independent_baseline_is_detectable():
    real = correlated_toy(4000, seed=0)
    assert detection_auc(real, baseline_synthesize(real, "independent", real.n, 0)) > 0.6


def test_chain_baseline_beats_independent():
    real = correlated_toy(4000, seed=1)
    chain = detection_auc(real, baseline_synthesize(real, "cart_chain", real.n, 1), 1)
    indep = detection_auc(real, baseline_synthesize(real, "independent", real.n, 1), 1)
    assert chain < indep


@pytest.mark.parametrize("mode", ["independent", "cart_chain"])
def test_zero_dependence_data_is_undetectable(mode):
    rng = np.random.default_rng(11)
    n = 4000
    real = TabularDataset(MIXED, np.column_stack([rng.normal(size=n), rng.exponential(size=n),
                                                  rng.integers(0, 3, n)]), "real")
    auc = detection_auc(real, baseline_synthesize(real, mode, n, 2), 2)
    assert abs(auc - 0.5) <= 0.07
