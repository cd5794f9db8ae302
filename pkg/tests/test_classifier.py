import math

import numpy as np
import pytest

from bbclf import classifier as clf
from bbclf.errors import ContractError, DivergenceError, ValidationError


class TestInit:
    def test_default_scale_parameter_count(self):
        model = clf.init_model(clf.MLPConfig(input_dim=1024, num_classes=2))
        assert model.param_count == 1_051_650

    def test_tiny_parameter_count(self):
        model = clf.init_model(clf.MLPConfig(input_dim=4, num_classes=2, hidden_dim=4))
        assert model.param_count == 30

    def test_seed_determinism(self):
        cfg = clf.MLPConfig(input_dim=8, num_classes=3, seed=42)
        a, b = clf.init_model(cfg), clf.init_model(cfg)
        for pa, pb in zip(a.params(), b.params()):
            np.testing.assert_array_equal(pa, pb)

    def test_weights_bounded_by_fan_in_scale(self):
        cfg = clf.MLPConfig(input_dim=64, num_classes=2, hidden_dim=16, seed=1)
        model = clf.init_model(cfg)
        assert np.abs(model.w1).max() <= (1 / 64) ** 0.5
        assert np.abs(model.w2).max() <= (1 / 16) ** 0.5
        assert np.all(model.b1 == 0) and np.all(model.b2 == 0)

    def test_hidden_defaults_to_input_dim(self):
        cfg = clf.MLPConfig(input_dim=12, num_classes=2)
        assert clf.init_model(cfg).w1.shape == (12, 12)


class TestForward:
    def test_zero_weights_uniform(self):
        model = clf.MLPModel(
            w1=np.zeros((4, 6)), b1=np.zeros(4), w2=np.zeros(3, ), b2=np.zeros(3)
        )
        model.w2 = np.zeros((3, 4))
        probs = clf.forward(model, np.ones(6))
        np.testing.assert_allclose(probs, [1 / 3] * 3, atol=1e-12)

    def test_normalized_for_random_inputs(self):
        cfg = clf.MLPConfig(input_dim=10, num_classes=4, seed=0)
        model = clf.init_model(cfg)
        x = np.random.default_rng(1).standard_normal((100, 10))
        probs = clf.forward(model, x)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(probs > 0)

    def test_hand_computed_two_by_two(self):
        # Scalar-math oracle, independent of the vectorized kernels.
        w1 = np.array([[0.5, -0.5], [1.0, 0.25]])
        b1 = np.array([0.1, -0.2])
        w2 = np.array([[2.0, -1.0], [0.5, 1.5]])
        b2 = np.array([0.0, 0.3])
        x = np.array([1.0, -1.0])

        h0 = math.tanh(0.5 * 1.0 + -0.5 * -1.0 + 0.1)
        h1 = math.tanh(1.0 * 1.0 + 0.25 * -1.0 + -0.2)
        z0 = 2.0 * h0 - 1.0 * h1 + 0.0
        z1 = 0.5 * h0 + 1.5 * h1 + 0.3
        e0, e1 = math.exp(z0), math.exp(z1)
        expected = np.array([e0 / (e0 + e1), e1 / (e0 + e1)])

        model = clf.MLPModel(w1=w1, b1=b1, w2=w2, b2=b2)
        np.testing.assert_allclose(clf.forward(model, x), expected, atol=1e-12)

    def test_dimension_mismatch(self):
        model = clf.init_model(clf.MLPConfig(input_dim=8, num_classes=2))
        with pytest.raises(ContractError):
            clf.forward(model, np.ones(5))


class TestCeLoss:
    def test_perfect_prediction_is_zero(self):
        probs = np.array([[1.0, 0.0], [0.0, 1.0]])
        labels = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert clf.ce_loss(probs, labels) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_binary_is_ln2(self):
        probs = np.array([[0.5, 0.5]])
        labels = np.array([[1.0, 0.0]])
        assert clf.ce_loss(probs, labels) == pytest.approx(math.log(2), abs=1e-12)

    def test_mixed_batch_hand_computed(self):
        probs = np.array([[0.5, 0.5], [0.25, 0.75], [1.0, 0.0]])
        labels = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        expected = (math.log(2) + math.log(4) + 0.0) / 3
        assert clf.ce_loss(probs, labels) == pytest.approx(expected, abs=1e-12)
        assert clf.ce_loss(probs, labels) == pytest.approx(0.6931, abs=1e-4)

    def test_zero_probability_clamped_with_warning(self, caplog):
        probs = np.array([[0.0, 1.0]])
        labels = np.array([[1.0, 0.0]])
        with caplog.at_level("WARNING"):
            loss = clf.ce_loss(probs, labels)
        assert loss == pytest.approx(-math.log(1e-12))
        assert "clamped" in caplog.text

    def test_uniform_equals_log_num_classes(self):
        for c in (2, 3, 5, 8):
            probs = np.full((10, c), 1.0 / c)
            labels = np.eye(c)[np.zeros(10, dtype=int)]
            assert clf.ce_loss(probs, labels) == pytest.approx(math.log(c), abs=1e-12)


class TestTrain:
    @staticmethod
    def _planted(rng, directions, n, noise=0.1):
        y = rng.integers(0, 2, n)
        x = directions[y] + noise * rng.standard_normal((n, directions.shape[1]))
        return x, y

    def test_reaches_least_squares_oracle_level(self):
        rng = np.random.default_rng(0)
        directions = rng.standard_normal((2, 16))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        x_train, y_train = self._planted(rng, directions, 400)
        x_dev, y_dev = self._planted(rng, directions, 32)

        # Independent closed-form oracle on the same data.
        a = np.column_stack([x_train, np.ones(len(x_train))])
        w, *_ = np.linalg.lstsq(a, np.eye(2)[y_train], rcond=None)
        a_dev = np.column_stack([x_dev, np.ones(len(x_dev))])
        oracle_acc = np.mean((a_dev @ w).argmax(axis=1) == y_dev)
        assert oracle_acc >= 0.95

        cfg = clf.MLPConfig(input_dim=16, num_classes=2, hidden_dim=16, seed=0)
        model, history = clf.train(
            clf.init_model(cfg), (x_train, y_train), (x_dev, y_dev), cfg
        )
        best_dev = max(history.dev_accuracy)
        assert best_dev >= 0.95
        assert best_dev >= oracle_acc - 0.02

    def test_scripted_dev_curve_early_stop(self):
        curve = [0.5, 0.9, 0.8, 0.8, 0.8, 0.8, 0.8, 0.99]
        snapshots = {}

        def scripted_eval(model, epoch):
            snapshots[epoch] = model.copy()
            return curve[epoch - 1]

        cfg = clf.MLPConfig(
            input_dim=6, num_classes=2, hidden_dim=4, seed=0, patience=5, max_epochs=100
        )
        rng = np.random.default_rng(2)
        x = rng.standard_normal((40, 6))
        y = rng.integers(0, 2, 40)
        best, history = clf.train(
            clf.init_model(cfg), (x, y), (x[:8], y[:8]), cfg, dev_eval_fn=scripted_eval
        )
        assert history.stopped_epoch == 7
        assert history.best_epoch == 2
        assert history.dev_accuracy == curve[:7]
        # Returned weights are the epoch-2 checkpoint, not the last ones.
        for got, want in zip(best.params(), snapshots[2].params()):
            np.testing.assert_array_equal(got, want)
        for got, last in zip(best.params(), snapshots[7].params()):
            assert not np.array_equal(got, last)

    def test_dev_tie_keeps_earliest_epoch(self):
        curve = [0.5, 0.9, 0.9, 0.9, 0.7, 0.7, 0.7, 0.7]

        def scripted_eval(model, epoch):
            return curve[epoch - 1]

        cfg = clf.MLPConfig(
            input_dim=4, num_classes=2, hidden_dim=4, seed=0, patience=5, max_epochs=8
        )
        rng = np.random.default_rng(11)
        x = rng.standard_normal((20, 4))
        y = rng.integers(0, 2, 20)
        _, history = clf.train(
            clf.init_model(cfg), (x, y), (x, y), cfg, dev_eval_fn=scripted_eval
        )
        assert history.best_epoch == 2

    def test_early_stop_patience_gap(self):
        # Whenever training stops before max_epochs, the stop index is at
        # least `patience` epochs past the best epoch.
        curve = [0.3, 0.6, 0.55, 0.5, 0.6, 0.5, 0.5]

        def scripted_eval(model, epoch):
            return curve[(epoch - 1) % len(curve)]

        cfg = clf.MLPConfig(
            input_dim=4, num_classes=2, hidden_dim=4, seed=0, patience=3, max_epochs=50
        )
        rng = np.random.default_rng(3)
        x = rng.standard_normal((20, 4))
        y = rng.integers(0, 2, 20)
        _, history = clf.train(
            clf.init_model(cfg), (x, y), (x, y), cfg, dev_eval_fn=scripted_eval
        )
        assert history.stopped_epoch < cfg.max_epochs
        assert history.stopped_epoch - history.best_epoch >= cfg.patience

    def test_single_step_decreases_loss(self):
        rng = np.random.default_rng(4)
        cfg = clf.MLPConfig(
            input_dim=5, num_classes=3, hidden_dim=4, seed=1, learning_rate=1e-3
        )
        model = clf.init_model(cfg)
        x = rng.standard_normal((12, 5))
        y = clf.one_hot(rng.integers(0, 3, 12), 3)
        loss_before, *grads = clf.loss_and_grads(model, x, y)
        # Plain gradient-descent step with a small rate.
        for p, g in zip(model.params(), grads):
            p -= 1e-2 * g
        loss_after, *_ = clf.loss_and_grads(model, x, y)
        assert loss_after < loss_before

    def test_divergence_reports_epoch_and_lr(self):
        cfg = clf.MLPConfig(
            input_dim=4, num_classes=2, hidden_dim=4, seed=0, learning_rate=1e-3
        )
        model = clf.init_model(cfg)
        model.w1[0, 0] = np.nan
        x = np.random.default_rng(5).standard_normal((8, 4))
        y = np.zeros(8, dtype=int)
        with pytest.raises(DivergenceError) as err:
            clf.train(model, (x, y), (x, y), cfg)
        assert err.value.epoch == 1
        assert err.value.learning_rate == 1e-3

    def test_bitwise_deterministic_history(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((60, 8))
        y = rng.integers(0, 2, 60)
        cfg = clf.MLPConfig(
            input_dim=8, num_classes=2, hidden_dim=8, seed=9, max_epochs=15
        )

        def run():
            model, history = clf.train(
                clf.init_model(cfg), (x, y), (x[:10], y[:10]), cfg
            )
            return [p.tobytes() for p in model.params()], (
                history.train_loss,
                history.dev_accuracy,
                history.best_epoch,
                history.stopped_epoch,
            )

        assert run() == run()


class TestPredict:
    def _fixed_prob_model(self, probs):
        # Zero hidden layer; b2 = log(probs) gives exactly those outputs.
        c = len(probs)
        return clf.MLPModel(
            w1=np.zeros((2, 2)),
            b1=np.zeros(2),
            w2=np.zeros((c, 2)),
            b2=np.log(np.asarray(probs)),
        )

    def test_argmax(self):
        model = self._fixed_prob_model([0.7, 0.3])
        assert clf.predict(model, np.zeros(2)) == 0
        model = self._fixed_prob_model([0.2, 0.5, 0.3])
        assert clf.predict(model, np.zeros(2)) == 1

    def test_exact_tie_goes_to_first_label(self):
        model = self._fixed_prob_model([0.5, 0.5])
        assert clf.predict(model, np.zeros(2)) == 0


class TestArtifact:
    def test_roundtrip(self, tmp_path):
        cfg = clf.MLPConfig(input_dim=6, num_classes=3, hidden_dim=5, seed=2)
        model = clf.init_model(cfg)
        path = tmp_path / "mlp.model"
        clf.save_model(model, cfg, path)
        loaded, loaded_cfg = clf.load_model(path)
        assert loaded_cfg == cfg
        for a, b in zip(model.params(), loaded.params()):
            np.testing.assert_array_equal(a, b)

    def test_checksum_validation(self, tmp_path):
        import json

        cfg = clf.MLPConfig(input_dim=4, num_classes=2, seed=0)
        path = tmp_path / "mlp.model"
        clf.save_model(clf.init_model(cfg), cfg, path)
        payload = json.loads(path.read_text())
        payload["params"]["b1"][0] = 123.456  # checksum left stale
        path.write_text(json.dumps(payload))
        with pytest.raises(ValidationError, match="checksum"):
            clf.load_model(path)

    def test_parameter_count_validated(self, tmp_path):
        import json

        cfg = clf.MLPConfig(input_dim=4, num_classes=2, seed=0)
        path = tmp_path / "mlp.model"
        clf.save_model(clf.init_model(cfg), cfg, path)
        payload = json.loads(path.read_text())
        payload["config"]["input_dim"] = 8  # inconsistent with stored params
        import hashlib

        payload["checksum"] = hashlib.sha256(
            json.dumps(payload["params"], sort_keys=True).encode()
        ).hexdigest()
        path.write_text(json.dumps(payload))
        with pytest.raises(ValidationError, match="parameters"):
            clf.load_model(path)


class TestStandardize:
    def test_train_matrix_standardized(self):
        rng = np.random.default_rng(7)
        x = rng.normal(3.0, 2.0, (200, 5))
        scaled = clf.standardize(x)
        np.testing.assert_allclose(scaled.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(scaled.std(axis=0), 1.0, atol=1e-12)

    def test_other_matrices_share_transform(self):
        rng = np.random.default_rng(8)
        x = rng.normal(3.0, 2.0, (100, 4))
        other = rng.normal(3.0, 2.0, (30, 4))
        scaled_x, scaled_other = clf.standardize(x, other)
        mu, sigma = x.mean(axis=0), x.std(axis=0)
        np.testing.assert_allclose(scaled_other, (other - mu) / sigma)
