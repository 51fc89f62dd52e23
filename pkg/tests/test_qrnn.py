import warnings

import numpy as np
import pytest

from loadcast import qrnn
from loadcast.errors import (
    DegenerateTarget,
    EmptyMatrix,
    InvalidQuantile,
    SchemaMismatch,
)
from loadcast.qrnn import QrnnConfig, QuantileForecast

from conftest import make_matrix


def small_net(rng_seed, n_rows=32, n_features=4, hidden=(8, 5), activation="sigmoid",
              quantiles=(0.1, 0.5, 0.9)):
    rng = np.random.default_rng(rng_seed)
    X = rng.normal(size=(n_rows, n_features))
    y = rng.normal(size=n_rows) * 2 + 1
    fm = make_matrix(X, y)
    cfg = QrnnConfig(
        hidden_layers=hidden,
        quantiles=quantiles,
        epochs=1,
        batch_size=8,
        learning_rate=0.01,
        seed=rng_seed,
        activation=activation,
    )
    return qrnn.fit(fm, cfg), fm


class TestConfigValidation:
    def test_quantiles_must_ascend(self):
        with pytest.raises(ValueError):
            QrnnConfig(quantiles=(0.5, 0.1))

    def test_quantiles_in_open_interval(self):
        with pytest.raises(InvalidQuantile):
            QrnnConfig(quantiles=(0.0, 0.5))

    def test_unknown_activation(self):
        with pytest.raises(ValueError):
            QrnnConfig(activation="softplus")

    def test_default_grid_is_19_levels(self):
        cfg = QrnnConfig()
        assert len(cfg.quantiles) == 19
        assert cfg.quantiles[0] == 0.05 and cfg.quantiles[-1] == 0.95


class TestFit:
    def test_deterministic_given_seed(self, rng):
        X = rng.normal(size=(200, 3))
        y = X[:, 0] + rng.normal(size=200)
        cfg = QrnnConfig(hidden_layers=(6,), quantiles=(0.25, 0.75), epochs=3,
                         batch_size=32, learning_rate=0.05, seed=11)
        a = qrnn.fit(make_matrix(X, y), cfg)
        b = qrnn.fit(make_matrix(X, y), cfg)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
        for ba, bb in zip(a.biases, b.biases):
            assert np.array_equal(ba, bb)

    def test_degenerate_target(self, rng):
        fm = make_matrix(rng.normal(size=(20, 2)), np.full(20, 7.0))
        with pytest.raises(DegenerateTarget):
            qrnn.fit(fm, QrnnConfig(epochs=1, seed=0))

    def test_empty_matrix(self):
        fm = make_matrix(np.empty((0, 2)), np.empty(0))
        with pytest.raises(EmptyMatrix):
            qrnn.fit(fm, QrnnConfig(epochs=1, seed=0))

    def test_objective_decreases_from_epoch_zero(self, rng):
        X = rng.normal(size=(500, 3))
        y = 2 * X[:, 0] - X[:, 1] + rng.normal(size=500) * 0.5
        cfg = QrnnConfig(hidden_layers=(8,), quantiles=(0.1, 0.5, 0.9), epochs=10,
                         batch_size=64, learning_rate=0.05, seed=3)
        net = qrnn.fit(make_matrix(X, y), cfg)
        assert net.train_history[-1] < net.train_history[0]

    def test_constant_columns_get_unit_std(self, rng):
        X = np.column_stack([np.full(50, 3.0), rng.normal(size=50)])
        y = rng.normal(size=50)
        net = qrnn.fit(make_matrix(X, y), QrnnConfig(epochs=1, seed=0))
        assert net.x_std[0] == 1.0

    def test_calibration_on_gaussian_targets(self, rng):
        # learned level-q outputs approach the sample quantiles
        n = 10000
        y = 50.0 + 10.0 * rng.normal(size=n)
        fm = make_matrix(np.ones((n, 1)), y)
        cfg = QrnnConfig(hidden_layers=(10,), quantiles=(0.1, 0.5, 0.9), epochs=20,
                         batch_size=128, learning_rate=0.05, seed=4)
        net = qrnn.fit(fm, cfg)
        fc = qrnn.predict(net, fm)
        sigma = y.std()
        for j, q in enumerate(cfg.quantiles):
            assert abs(fc.values[0, j] - np.quantile(y, q)) < 0.1 * sigma


class TestPredict:
    def test_rows_non_decreasing(self):
        for seed in range(5):
            net, fm = small_net(seed)
            fc = qrnn.predict(net, fm)
            assert np.all(np.diff(fc.values, axis=1) >= 0)

    def test_single_row_shape(self):
        net, fm = small_net(1)
        one = fm.select_rows(np.array([0]))
        fc = qrnn.predict(net, one)
        assert fc.values.shape == (1, 3)

    def test_far_inputs_finite_and_flagged(self):
        net, fm = small_net(2)
        wild = make_matrix(fm.rows * 0 + 10.0 * 50, fm.targets)  # ~10 sigma away
        with pytest.warns(UserWarning, match="standard deviations"):
            fc = qrnn.predict(net, wild)
        assert np.all(np.isfinite(fc.values))
        assert fc.extrapolation_count == fm.n_rows

    def test_schema_mismatch(self):
        net, fm = small_net(3)
        renamed = make_matrix(fm.rows, fm.targets, names=["w", "x", "y", "z"])
        with pytest.raises(SchemaMismatch):
            qrnn.predict(net, renamed)


class TestQuantileForecast:
    def test_rejects_crossing_rows(self):
        with pytest.raises(ValueError, match="non-decreasing"):
            QuantileForecast([0], (0.1, 0.9), np.array([[2.0, 1.0]]))

    def test_level_column_lookup(self):
        fc = QuantileForecast([0, 1], (0.1, 0.9), np.array([[1.0, 2.0], [3.0, 4.0]]))
        assert fc.level_column(0.9).tolist() == [2.0, 4.0]


class TestGradCheck:
    @pytest.mark.parametrize("seed", range(6))
    def test_small_nets_sigmoid(self, seed):
        net, fm = small_net(seed)
        assert qrnn.grad_check(net, fm, 1e-5) < 1e-4

    @pytest.mark.parametrize("seed", range(3))
    def test_small_nets_tanh(self, seed):
        net, fm = small_net(50 + seed, activation="tanh")
        assert qrnn.grad_check(net, fm, 1e-5) < 1e-4

    def test_relu_net(self):
        net, fm = small_net(99, activation="relu")
        assert qrnn.grad_check(net, fm, 1e-5) < 1e-4

    def test_zero_weight_net_finite(self):
        net, fm = small_net(7)
        for W in net.weights:
            W[:] = 0.0
        for b in net.biases:
            b[:] = 0.0
        err = qrnn.grad_check(net, fm, 1e-5)
        assert np.isfinite(err)

    def test_exact_kink_is_excluded(self, rng):
        # a prediction placed exactly on its target sits on the loss kink;
        # the check masks it instead of reporting a spurious error
        X = rng.normal(size=(16, 2))
        y = rng.normal(size=16)
        fm = make_matrix(X, y)
        cfg = QrnnConfig(hidden_layers=(4,), quantiles=(0.5,), epochs=1,
                         batch_size=8, learning_rate=0.01, seed=0)
        net = qrnn.fit(fm, cfg)
        for W in net.weights:
            W[:] = 0.0
        for b in net.biases:
            b[:] = 0.0
        # with all-zero parameters every output is 0; target 0 = y_mean
        y2 = y.copy()
        y2[0] = net.y_mean
        fm2 = make_matrix(X, y2)
        assert qrnn.grad_check(net, fm2, 1e-5) < 1e-4

    def test_rejects_large_matrices(self, rng):
        net, _ = small_net(1)
        big = make_matrix(rng.normal(size=(100, 4)), rng.normal(size=100))
        with pytest.raises(ValueError):
            qrnn.grad_check(net, big, 1e-5)


class TestPersistence:
    def test_round_trip_predictions(self, tmp_path, rng):
        X = rng.normal(size=(60, 3))
        y = X[:, 0] + rng.normal(size=60)
        fm = make_matrix(X, y)
        cfg = QrnnConfig(hidden_layers=(7, 4), quantiles=(0.05, 0.5, 0.95), epochs=4,
                         batch_size=16, learning_rate=0.05, seed=21)
        net = qrnn.fit(fm, cfg)
        path = tmp_path / "net.json"
        qrnn.save_json(net, path)
        loaded = qrnn.load_json(path)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = qrnn.predict(net, fm).values
            b = qrnn.predict(loaded, fm).values
        assert np.allclose(a, b, rtol=1e-12, atol=0)
        assert loaded.config == net.config
        assert loaded.feature_names == net.feature_names

    def test_rejects_foreign_document(self, tmp_path):
        path = tmp_path / "bogus.json"
        path.write_text('{"format": "other"}')
        with pytest.raises(ValueError):
            qrnn.load_json(path)
