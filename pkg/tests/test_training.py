import io
import json

import numpy as np
import numpy.testing as npt
import pytest

import tskicfnn as tk
import tskicfnn.training as training
from oracles import gradient_errors, random_model


def linear_dataset(n_rows=200, seed=7):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, (n_rows, 1))
    return tk.Dataset(name="linear", inputs=x, targets=2.0 * x[:, 0] + 1.0)


def small_dataset(n_rows=60, n=2, seed=17):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, (n_rows, n))
    y = 0.5 * x[:, 0] - 0.25 * x[:, -1] + 0.3
    return tk.Dataset(name="small", inputs=x, targets=y)


class TestLrUpdate:
    def test_agreement_keeps_rate(self):
        state = tk.LrState(eta=np.array([1e-3]), delta_avg=np.array([1.0]))
        out = tk.lr_update(state, np.array([1.0]), alpha=0.7, zeta=0.9)
        npt.assert_allclose(out.eta, [1e-3])
        npt.assert_allclose(out.delta_avg, [1.0])

    def test_large_flip_keeps_rate(self):
        # the average is moved before the sign test, so a hard flip drags the
        # average across zero and the product stays positive
        state = tk.LrState(eta=np.array([1e-3]), delta_avg=np.array([1.0]))
        out = tk.lr_update(state, np.array([-1.0]), alpha=0.7, zeta=0.9)
        npt.assert_allclose(out.delta_avg, [-0.4])
        npt.assert_allclose(out.eta, [1e-3])

    def test_small_flip_decays_rate(self):
        state = tk.LrState(eta=np.array([1e-3]), delta_avg=np.array([1.0]))
        out = tk.lr_update(state, np.array([-0.1]), alpha=0.7, zeta=0.9)
        npt.assert_allclose(out.delta_avg, [0.23])
        npt.assert_allclose(out.eta, [0.9e-3])

    def test_zero_update_keeps_rate(self):
        state = tk.LrState(eta=np.array([1e-3]), delta_avg=np.array([1.0]))
        out = tk.lr_update(state, np.array([0.0]), alpha=0.7, zeta=0.9)
        npt.assert_allclose(out.eta, [1e-3])

    def test_rates_never_increase(self):
        rng = np.random.default_rng(61)
        state = tk.LrState(eta=np.full(8, 1e-3), delta_avg=np.zeros(8))
        previous = state.eta.copy()
        for _ in range(500):
            state = tk.lr_update(state, rng.normal(size=8), alpha=0.7, zeta=0.9)
            assert np.all(state.eta <= previous + 1e-18)
            assert np.all(state.eta > 0.0)
            previous = state.eta.copy()


class TestGradients:
    def test_against_finite_differences(self):
        rng = np.random.default_rng(71)
        for _ in range(20):
            n = int(rng.integers(1, 5))
            r = int(rng.integers(1, 4))
            n_rows = int(rng.integers(2, 21))
            model = random_model(rng, n, r)
            inputs = rng.uniform(-1.0, 1.0, (n_rows, n))
            psi = rng.uniform(-0.2, 1.2, (n_rows, r))
            targets = rng.uniform(-1.0, 1.0, n_rows)
            worst = gradient_errors(model, inputs, psi, targets)
            assert worst["premise"] < 1e-5, worst
            assert worst["consequent"] < 1e-5, worst
            assert worst["backprop"] < 1e-5, worst


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(tk.ConfigurationError):
            tk.TrainConfig(eta0=0.0)
        with pytest.raises(tk.ConfigurationError):
            tk.TrainConfig(alpha=1.0)
        with pytest.raises(tk.ConfigurationError):
            tk.TrainConfig(zeta=0.0)
        with pytest.raises(tk.ConfigurationError):
            tk.TrainConfig(iter_max=0)
        with pytest.raises(tk.ConfigurationError):
            tk.TrainConfig(mode="newton")


class TestStepwise:
    def test_linear_sanity(self):
        data = linear_dataset()
        model0 = tk.init_random(1, 1, seed=0, feature_range=(np.array([-1.0]), np.array([1.0])))
        cfg = tk.TrainConfig(delta_mu=1e-10, delta_e=1e-10, epsilon=1e-12, mode="stepwise")
        fitted, report = tk.train(model0, data, cfg)
        assert report.final_train_rmse < 1e-3
        npt.assert_allclose(fitted.rules[0].consequent, [1.0, 2.0], atol=1e-3)

    def test_deterministic(self):
        data = small_dataset()
        model0 = tk.init_random(2, 2, seed=3)
        cfg = tk.TrainConfig(iter_max=5, t_max=40, tprime_max=40, mode="stepwise")
        fitted_a, report_a = tk.train(model0, data, cfg)
        fitted_b, report_b = tk.train(model0, data, cfg)
        assert tk.model_digest(fitted_a) == tk.model_digest(fitted_b)
        assert report_a.to_dict() == report_b.to_dict()

    def test_solve_targets_called_once_per_epoch(self, monkeypatch):
        calls = {"n": 0}
        original = training.solve_targets

        def counting(*args, **kwargs):
            calls["n"] += 1
            return original(*args, **kwargs)

        monkeypatch.setattr(training, "solve_targets", counting)
        data = small_dataset()
        model0 = tk.init_random(2, 2, seed=5)
        cfg = tk.TrainConfig(iter_max=4, t_max=10, tprime_max=10, mode="stepwise")
        _, report = tk.train(model0, data, cfg)
        assert calls["n"] == report.epochs_run

    def test_best_snapshot_semantics(self):
        data = small_dataset()
        model0 = tk.init_random(2, 2, seed=9)
        cfg = tk.TrainConfig(iter_max=6, t_max=30, tprime_max=30, mode="stepwise")
        fitted, report = tk.train(model0, data, cfg)
        initial_j3 = tk.output_objective(model0, data.inputs, data.targets)
        returned_j3 = tk.output_objective(fitted, data.inputs, data.targets)
        candidates = [initial_j3] + list(report.j3_history)
        npt.assert_allclose(returned_j3, min(candidates), rtol=1e-12)
        assert report.best_epoch == int(np.argmin(candidates))

    def test_histories_match_epochs(self):
        data = small_dataset()
        model0 = tk.init_random(2, 2, seed=11)
        cfg = tk.TrainConfig(iter_max=3, t_max=10, tprime_max=10, mode="stepwise")
        _, report = tk.train(model0, data, cfg)
        n = report.epochs_run
        assert len(report.j1_history) == n
        assert len(report.j2_history) == n
        assert len(report.j3_history) == n
        assert len(report.rmse_history) == n
        assert len(report.degenerate_rows) == n
        assert all(np.isfinite(v) for v in report.j1_history)

    def test_zero_residual_stops_early(self):
        data = linear_dataset()
        model0 = tk.Model(input_dim=1, rules=[tk.RuleParams(
            center=np.zeros(1), transform=np.eye(1),
            shape_regulator=1.0, consequent=np.array([1.0, 2.0]))])
        cfg = tk.TrainConfig(mode="stepwise")
        fitted, report = tk.train(model0, data, cfg)
        assert report.final_train_rmse == 0.0
        assert report.epochs_run <= 2

    def test_divergence_names_epoch_and_phase(self):
        rng = np.random.default_rng(13)
        x = rng.uniform(0.0, 1.0, (2000, 2))
        data = tk.Dataset(name="big", inputs=x, targets=x[:, 0])
        model0 = tk.init_random(2, 2, seed=1)
        cfg = tk.TrainConfig(eta0=1.0, t_max=5, tprime_max=300, iter_max=3,
                             mode="stepwise")
        with pytest.raises(tk.TrainingDiverged, match=r"epoch \d+, phase"):
            tk.train(model0, data, cfg)

    def test_shape_regulators_stay_clamped(self):
        data = small_dataset(n_rows=120)
        model0 = tk.init_random(2, 3, seed=21)
        cfg = tk.TrainConfig(eta0=0.05, t_max=80, tprime_max=1, iter_max=4,
                             mode="stepwise")
        try:
            fitted, _ = tk.train(model0, data, cfg)
        except tk.TrainingDiverged:
            pytest.skip("aggressive rate diverged before the clamp could be observed")
        for rule in fitted.rules:
            assert 0.1 <= rule.shape_regulator <= 10.0

    def test_progress_log_stream(self):
        data = small_dataset()
        model0 = tk.init_random(2, 2, seed=23)
        cfg = tk.TrainConfig(iter_max=3, t_max=10, tprime_max=10, mode="stepwise")
        stream = io.StringIO()
        _, report = tk.train(model0, data, cfg, log_stream=stream)
        lines = [json.loads(line) for line in stream.getvalue().splitlines()]
        assert len(lines) == report.epochs_run
        assert set(lines[0]) == {"epoch", "j1", "j2", "j3", "rmse"}
        assert lines[0]["epoch"] == 1

    def test_report_json_excludes_timing_by_default(self):
        data = small_dataset()
        model0 = tk.init_random(2, 2, seed=29)
        cfg = tk.TrainConfig(iter_max=2, t_max=5, tprime_max=5, mode="stepwise")
        _, report = tk.train(model0, data, cfg)
        assert "wall_time_seconds" not in report.to_dict()
        assert "wall_time_seconds" in report.to_dict(include_timing=True)
        assert report.wall_time_seconds > 0.0


class TestBackprop:
    def test_linear_sanity(self):
        data = linear_dataset()
        model0 = tk.init_random(1, 1, seed=0, feature_range=(np.array([-1.0]), np.array([1.0])))
        cfg = tk.TrainConfig(delta_mu=1e-10, delta_e=1e-10, epsilon=1e-12, mode="backprop")
        _, report = tk.train(model0, data, cfg)
        assert report.final_train_rmse < 1e-3

    def test_premise_histories_absent(self):
        data = small_dataset()
        model0 = tk.init_random(2, 2, seed=31)
        cfg = tk.TrainConfig(iter_max=3, t_max=10, tprime_max=10, mode="backprop")
        _, report = tk.train(model0, data, cfg)
        assert all(v is None for v in report.j1_history)
        assert all(v is None for v in report.j2_history)
        assert len(report.j3_history) == report.epochs_run

    def test_reduces_objective(self):
        data = small_dataset(n_rows=100)
        model0 = tk.init_random(2, 2, seed=37)
        cfg = tk.TrainConfig(iter_max=10, t_max=50, tprime_max=50, mode="backprop")
        fitted, _ = tk.train(model0, data, cfg)
        before = tk.output_objective(model0, data.inputs, data.targets)
        after = tk.output_objective(fitted, data.inputs, data.targets)
        assert after < before

    def test_divergence_names_epoch_and_phase(self):
        rng = np.random.default_rng(41)
        x = rng.uniform(0.0, 1.0, (2000, 2))
        data = tk.Dataset(name="big", inputs=x, targets=x[:, 0])
        model0 = tk.init_random(2, 2, seed=1)
        cfg = tk.TrainConfig(eta0=1.0, t_max=5, tprime_max=300, iter_max=3,
                             mode="backprop")
        with pytest.raises(tk.TrainingDiverged, match="backprop"):
            tk.train(model0, data, cfg)


class TestTrainDispatch:
    def test_unknown_mode_rejected(self):
        with pytest.raises(tk.ConfigurationError):
            tk.TrainConfig(mode="bogus")

    def test_paired_modes_share_initial_digest(self):
        data = small_dataset()
        model0 = tk.init_random(2, 2, seed=43)
        cfg_s = tk.TrainConfig(iter_max=2, t_max=5, tprime_max=5, mode="stepwise")
        cfg_b = tk.TrainConfig(iter_max=2, t_max=5, tprime_max=5, mode="backprop")
        _, rep_s = tk.train(model0, data, cfg_s)
        _, rep_b = tk.train(model0, data, cfg_b)
        assert rep_s.initial_model_digest == rep_b.initial_model_digest
