import numpy as np
import pytest

from loadcast.errors import LengthMismatch, LevelNotForecast
from loadcast.metrics import (
    EvalReport,
    IntervalSpec,
    evaluate_forecast,
    interval_width,
    mean_pinball,
    picp,
    point_metrics,
    winkler,
)
from loadcast.qrnn import QuantileForecast, pinball

from conftest import make_matrix


def forecast_from(values, levels):
    values = np.asarray(values, dtype=np.float64)
    instants = list(range(values.shape[0]))
    return QuantileForecast(instants, levels, values)


class TestPinball:
    def test_exact_forecast(self):
        assert pinball(8.0, 8.0, 0.5) == pytest.approx(0.0, abs=1e-12)

    def test_over_forecast_branch(self):
        # (1 - 0.9) * (10 - 8)
        assert pinball(10.0, 8.0, 0.9) == pytest.approx(0.2, abs=1e-12)

    def test_under_forecast_branch(self):
        # 0.9 * (10 - 8)
        assert pinball(8.0, 10.0, 0.9) == pytest.approx(1.8, abs=1e-12)

    def test_nonnegative_property(self, rng):
        for _ in range(300):
            p, a = rng.normal(size=2) * 100
            q = rng.uniform(0.01, 0.99)
            assert pinball(p, a, q) >= 0.0


class TestMeanPinball:
    def test_perfect_forecast(self):
        fc = forecast_from([[5.0, 5.0, 5.0]], (0.25, 0.5, 0.75))
        assert mean_pinball(fc, np.array([5.0])) == pytest.approx(0.0, abs=1e-12)

    def test_single_median_loss(self):
        fc = forecast_from([[10.0]], (0.5,))
        assert mean_pinball(fc, np.array([8.0])) == pytest.approx(1.0, abs=1e-12)

    def test_mean_over_instants(self):
        fc = forecast_from([[10.0], [8.0]], (0.5,))
        assert mean_pinball(fc, np.array([8.0, 8.0])) == pytest.approx(0.5, abs=1e-12)

    def test_permutation_invariance(self, rng):
        values = np.sort(rng.normal(size=(40, 3)) * 10, axis=1)
        actuals = rng.normal(size=40) * 10
        fc = forecast_from(values, (0.1, 0.5, 0.9))
        perm = rng.permutation(40)
        fc_p = forecast_from(values[perm], (0.1, 0.5, 0.9))
        assert mean_pinball(fc, actuals) == pytest.approx(
            mean_pinball(fc_p, actuals[perm]), rel=1e-12
        )

    def test_length_mismatch(self):
        fc = forecast_from([[1.0]], (0.5,))
        with pytest.raises(LengthMismatch):
            mean_pinball(fc, np.array([1.0, 2.0]))


INTERVAL_90 = IntervalSpec(0.05, 0.95)


class TestWinkler:
    def make(self, y):
        fc = forecast_from([[90.0, 110.0]], (0.05, 0.95))
        return winkler(fc, np.array([y]), INTERVAL_90)

    def test_covered_equals_width(self):
        assert self.make(100.0) == pytest.approx(20.0, abs=1e-12)

    def test_below_interval(self):
        # 20 + 2 * 5 / 0.10
        assert self.make(85.0) == pytest.approx(120.0, abs=1e-12)

    def test_above_interval(self):
        assert self.make(115.0) == pytest.approx(120.0, abs=1e-12)

    def test_boundary_counts_as_covered(self):
        assert self.make(90.0) == pytest.approx(20.0, abs=1e-12)
        assert self.make(110.0) == pytest.approx(20.0, abs=1e-12)

    def test_alpha_is_derived(self):
        assert INTERVAL_90.alpha == pytest.approx(0.10, abs=1e-12)
        assert IntervalSpec(0.25, 0.75).alpha == pytest.approx(0.5, abs=1e-12)

    def test_winkler_at_least_width_equality_iff_full_coverage(self, rng):
        for _ in range(50):
            lo = rng.normal(size=20) * 10
            hi = lo + rng.uniform(1, 10, size=20)
            fc = forecast_from(np.column_stack([lo, hi]), (0.05, 0.95))
            actuals = rng.normal(size=20) * 15
            w = winkler(fc, actuals, INTERVAL_90)
            width = interval_width(fc, INTERVAL_90)
            cov = picp(fc, actuals, INTERVAL_90)
            assert w >= width - 1e-12
            if cov == 1.0:
                assert w == pytest.approx(width, abs=1e-12)
            else:
                assert w > width

    def test_level_not_forecast(self):
        fc = forecast_from([[1.0, 2.0]], (0.25, 0.75))
        with pytest.raises(LevelNotForecast):
            winkler(fc, np.array([1.5]), INTERVAL_90)


class TestPicp:
    def test_full_coverage(self):
        fc = forecast_from([[0.0, 10.0]] * 3, (0.05, 0.95))
        assert picp(fc, np.array([5.0, 0.0, 10.0]), INTERVAL_90) == 1.0

    def test_zero_coverage(self):
        fc = forecast_from([[0.0, 10.0]] * 2, (0.05, 0.95))
        assert picp(fc, np.array([-1.0, 11.0]), INTERVAL_90) == 0.0

    def test_three_of_four(self):
        fc = forecast_from([[0.0, 10.0]] * 4, (0.05, 0.95))
        actuals = np.array([5.0, 5.0, 5.0, 20.0])
        assert picp(fc, actuals, INTERVAL_90) == pytest.approx(0.75, abs=1e-12)


class TestPointMetrics:
    def test_perfect(self):
        mae, rmse, mape = point_metrics(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
        assert (mae, rmse, mape) == (0.0, 0.0, 0.0)

    def test_hand_computed(self):
        mae, rmse, mape = point_metrics(np.array([10.0]), np.array([8.0]))
        assert mae == pytest.approx(2.0, abs=1e-12)
        assert rmse == pytest.approx(2.0, abs=1e-12)
        assert mape == pytest.approx(25.0, abs=1e-12)

    def test_zero_actual_guards_mape(self):
        mae, rmse, mape = point_metrics(np.array([1.0, 2.0]), np.array([0.0, 2.0]))
        assert mape is None
        assert mae == pytest.approx(0.5, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            point_metrics(np.array([1.0]), np.array([1.0, 2.0]))


class TestConstantQuantileOptimality:
    def test_sample_quantile_beats_constant_grid(self, rng):
        # oracle: dense grid search over constant forecasts on small n
        actuals = rng.normal(size=80) * 25 + 100
        for q in (0.1, 0.5, 0.9):
            best = np.quantile(actuals, q)
            fc_best = forecast_from(np.full((80, 1), best), (q,))
            loss_best = mean_pinball(fc_best, actuals)
            grid = np.concatenate([actuals, np.linspace(actuals.min(), actuals.max(), 200)])
            for c in grid:
                fc_c = forecast_from(np.full((80, 1), c), (q,))
                assert loss_best <= mean_pinball(fc_c, actuals) + 1e-12


class TestEvaluateForecast:
    def test_composes_all_metrics(self, rng):
        levels = tuple(round(0.05 * i, 2) for i in range(1, 20))
        raw = np.sort(rng.normal(size=(50, 19)) * 5 + 100, axis=1)
        fc = forecast_from(raw, levels)
        actuals = rng.normal(size=50) * 5 + 100
        rep = evaluate_forecast(fc, actuals)
        assert rep.pinball == pytest.approx(mean_pinball(fc, actuals), rel=1e-12)
        assert rep.winkler == pytest.approx(winkler(fc, actuals), rel=1e-12)
        assert rep.picp == picp(fc, actuals)
        mae, rmse, mape = point_metrics(fc.level_column(0.5), actuals)
        assert rep.mae == mae and rep.rmse == rmse and rep.mape == mape
        assert 0.0 <= rep.picp <= 1.0
        assert rep.winkler >= rep.pi_width

    def test_csv_row_matches_expected_order(self):
        rep = EvalReport(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.5)
        assert rep.CSV_FIELDS == ("mae", "rmse", "pi_width", "pinball", "winkler", "picp")
        assert rep.csv_values() == ["1.0", "2.0", "4.0", "5.0", "6.0", "0.5"]
