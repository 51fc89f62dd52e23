import numpy as np
import pytest

from loadcast import gbt
from loadcast.errors import EmptyMatrix, InvalidQuantile, SchemaMismatch
from loadcast.features import FeatureMatrix
from loadcast.gbt import BoostedEnsemble, GbtConfig, TreeNode

from conftest import make_matrix


def exhaustive_depth1_split(X, g, min_leaf=1):
    """Oracle: scan every (feature, midpoint) pair for the best gain."""
    n = len(g)
    total = g.sum()
    best = (-np.inf, None, None)
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = (a + b) / 2.0
            left = X[:, j] <= thr
            nl, nr = left.sum(), n - left.sum()
            if nl < min_leaf or nr < min_leaf:
                continue
            ls = g[left].sum()
            gain = ls**2 / nl + (total - ls) ** 2 / nr - total**2 / n
            if gain > best[0]:
                best = (gain, j, thr)
    return best


class TestFitSquared:
    def test_constant_target(self):
        fm = make_matrix(np.random.default_rng(0).normal(size=(50, 3)), np.full(50, 5.0))
        model = gbt.fit(fm, GbtConfig(n_trees=10, max_depth=2, seed=0))
        assert model.base_prediction == 5.0
        pred = gbt.predict(model, fm)
        assert np.all(pred == 5.0)
        # degenerate fit: uniform importance
        assert np.allclose(model.importance, 100.0 / 3)

    def test_step_function_learned_to_high_accuracy(self, rng):
        x = rng.uniform(size=(400, 1))
        y = (x[:, 0] > 0.5).astype(float)
        fm = make_matrix(x, y)
        model = gbt.fit(fm, GbtConfig(n_trees=50, max_depth=1, learning_rate=0.5, min_samples_leaf=1, seed=0))
        pred = gbt.predict(model, fm)
        rmse = np.sqrt(np.mean((pred - y) ** 2))
        assert rmse < 0.01

    def test_monotone_training_loss(self, rng):
        x = rng.normal(size=(300, 4))
        y = x[:, 0] * 3 + np.sin(x[:, 1]) + rng.normal(size=300)
        fm = make_matrix(x, y)
        model = gbt.fit(fm, GbtConfig(n_trees=40, max_depth=3, subsample=1.0, seed=1))
        diffs = np.diff(model.train_history)
        assert np.all(diffs <= 1e-12)

    def test_importance_sums_to_100(self, rng):
        x = rng.normal(size=(200, 5))
        y = x[:, 0] + 0.5 * x[:, 3] + rng.normal(size=200) * 0.1
        fm = make_matrix(x, y)
        model = gbt.fit(fm, GbtConfig(n_trees=30, max_depth=3, seed=2))
        assert abs(model.importance.sum() - 100.0) <= 1e-9
        assert np.all(model.importance >= 0)

    def test_empty_matrix(self):
        fm = make_matrix(np.empty((0, 2)), np.empty(0))
        with pytest.raises(EmptyMatrix):
            gbt.fit(fm, GbtConfig(n_trees=1, seed=0))


class TestFitPinball:
    def test_base_prediction_is_sample_quantile(self, rng):
        y = rng.uniform(size=200)
        fm = make_matrix(rng.normal(size=(200, 2)), y)
        model = gbt.fit(fm, GbtConfig(n_trees=1, max_depth=1, seed=0), "pinball", 0.8)
        assert model.base_prediction == np.quantile(y, 0.8)

    def test_converges_to_sample_quantile_on_noise_features(self, rng):
        y = rng.uniform(size=2000)
        fm = make_matrix(rng.normal(size=(2000, 3)), y)
        cfg = GbtConfig(n_trees=200, max_depth=2, learning_rate=0.1, min_samples_leaf=200, seed=5)
        model = gbt.fit(fm, cfg, "pinball", 0.9)
        pred = gbt.predict(model, fm)
        assert abs(pred.mean() - np.quantile(y, 0.9)) < 0.02

    def test_monotone_training_loss(self, rng):
        x = rng.normal(size=(300, 3))
        y = x[:, 0] + rng.normal(size=300)
        fm = make_matrix(x, y)
        model = gbt.fit(fm, GbtConfig(n_trees=40, max_depth=2, subsample=1.0, seed=1), "pinball", 0.7)
        assert np.all(np.diff(model.train_history) <= 1e-12)

    def test_invalid_quantile(self, rng):
        fm = make_matrix(rng.normal(size=(10, 1)), rng.normal(size=10))
        for bad in (0.0, 1.0, -0.5, None):
            with pytest.raises(InvalidQuantile):
                gbt.fit(fm, GbtConfig(n_trees=1, seed=0), "pinball", bad)


class TestExactSplitOracle:
    @pytest.mark.parametrize("seed", range(8))
    def test_depth1_matches_exhaustive_search(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(8, 33))
        X = rng.normal(size=(n, 2))
        y = rng.normal(size=n)
        fm = make_matrix(X, y)
        model = gbt.fit(fm, GbtConfig(n_trees=1, max_depth=1, min_samples_leaf=1, learning_rate=1.0, seed=0))
        root = model.trees[0]
        g = y - y.mean()  # first-round pseudo-residuals
        gain, feature, threshold = exhaustive_depth1_split(X, g)
        assert root.feature_index == feature
        assert root.threshold == pytest.approx(threshold, rel=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_oracle_with_binary_column(self, seed):
        # one 0/1 column and one continuous column exercise both search paths
        rng = np.random.default_rng(100 + seed)
        n = 32
        X = np.column_stack([rng.integers(0, 2, size=n).astype(float), rng.normal(size=n)])
        y = 2.0 * X[:, 0] + rng.normal(size=n) * 0.5
        fm = make_matrix(X, y)
        model = gbt.fit(fm, GbtConfig(n_trees=1, max_depth=1, min_samples_leaf=1, learning_rate=1.0, seed=0))
        root = model.trees[0]
        gain, feature, threshold = exhaustive_depth1_split(X, y - y.mean())
        assert root.feature_index == feature
        assert root.threshold == pytest.approx(threshold, rel=1e-12)

    def test_min_samples_leaf_respected(self, rng):
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        fm = make_matrix(X, y)
        model = gbt.fit(fm, GbtConfig(n_trees=5, max_depth=3, min_samples_leaf=10, seed=0))

        def leaf_counts(node, idx):
            if node.is_leaf:
                return [len(idx)]
            left = X[idx, node.feature_index] <= node.threshold
            return leaf_counts(node.left, idx[left]) + leaf_counts(node.right, idx[~left])

        for tree in model.trees:
            assert min(leaf_counts(tree, np.arange(30))) >= 10


class TestPredict:
    def test_empty_ensemble_returns_base(self, rng):
        fm = make_matrix(rng.normal(size=(7, 2)), rng.normal(size=7))
        model = BoostedEnsemble(
            base_prediction=3.25,
            trees=[],
            learning_rate=0.1,
            loss="squared",
            quantile=None,
            importance=np.array([50.0, 50.0]),
            feature_names=list(fm.column_names),
        )
        assert np.all(gbt.predict(model, fm) == 3.25)

    def test_deterministic(self, rng):
        fm = make_matrix(rng.normal(size=(60, 3)), rng.normal(size=60))
        model = gbt.fit(fm, GbtConfig(n_trees=20, max_depth=3, seed=4))
        a = gbt.predict(model, fm)
        b = gbt.predict(model, fm)
        assert np.array_equal(a, b)

    def test_permuted_columns_rejected(self, rng):
        fm = make_matrix(rng.normal(size=(30, 2)), rng.normal(size=30), names=["a", "b"])
        model = gbt.fit(fm, GbtConfig(n_trees=2, seed=0))
        permuted = make_matrix(fm.rows[:, ::-1], fm.targets, names=["b", "a"])
        with pytest.raises(SchemaMismatch):
            gbt.predict(model, permuted)

    def test_prediction_identity(self, rng):
        # prediction = base + lr * sum of tree values, checked tree by tree
        fm = make_matrix(rng.normal(size=(40, 2)), rng.normal(size=40))
        model = gbt.fit(fm, GbtConfig(n_trees=5, max_depth=2, seed=0))
        total = np.zeros(40)
        for tree in model.trees:
            total += gbt._eval_tree(tree, fm.rows)
        expected = model.base_prediction + model.learning_rate * total
        assert np.allclose(gbt.predict(model, fm), expected, rtol=1e-15)


class TestImportanceRanking:
    def test_cumulative_is_running_sum(self):
        values = [81.54, 6.67, 5.70, 1.45, 1.40]
        names = [f"f{i}" for i in range(5)]
        ranking = gbt.rank_importances(names, values)
        cums = [e.cumulative for e in ranking]
        assert cums == pytest.approx([81.54, 88.21, 93.91, 95.36, 96.76], abs=1e-9)

    def test_single_feature(self, rng):
        fm = make_matrix(rng.normal(size=(50, 1)), rng.normal(size=50), names=["only"])
        model = gbt.fit(fm, GbtConfig(n_trees=5, max_depth=2, seed=0))
        ranking = gbt.importance_ranking(model)
        assert ranking == [("only", 100.0, 100.0)]

    def test_constant_target_uniform_lexicographic(self):
        fm = make_matrix(np.random.default_rng(0).normal(size=(40, 3)), np.full(40, 2.0), names=["c", "a", "b"])
        model = gbt.fit(fm, GbtConfig(n_trees=3, seed=0))
        ranking = gbt.importance_ranking(model)
        assert [e.name for e in ranking] == ["a", "b", "c"]
        assert all(e.importance == pytest.approx(100.0 / 3) for e in ranking)

    def test_descending_with_name_tiebreak(self):
        ranking = gbt.rank_importances(["z", "m", "a"], [10.0, 80.0, 10.0])
        assert [e.name for e in ranking] == ["m", "a", "z"]


class TestPersistence:
    def test_round_trip_predictions_bitwise(self, rng, tmp_path):
        fm = make_matrix(rng.normal(size=(80, 4)), rng.normal(size=80))
        model = gbt.fit(fm, GbtConfig(n_trees=25, max_depth=3, seed=9), "pinball", 0.25)
        path = tmp_path / "model.json"
        gbt.save_json(model, path)
        loaded = gbt.load_json(path)
        assert np.array_equal(gbt.predict(model, fm), gbt.predict(loaded, fm))
        assert loaded.feature_names == model.feature_names
        assert loaded.quantile == 0.25
        assert np.array_equal(loaded.importance, model.importance)
        assert loaded.config == model.config

    def test_rejects_foreign_document(self, tmp_path):
        path = tmp_path / "bogus.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError):
            gbt.load_json(path)


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_trees": 0},
            {"max_depth": 0},
            {"learning_rate": 0.0},
            {"learning_rate": 1.5},
            {"min_samples_leaf": 0},
            {"subsample": 0.0},
            {"subsample": 1.1},
        ],
    )
    def test_bounds(self, kwargs):
        with pytest.raises(ValueError):
            GbtConfig(**kwargs)
