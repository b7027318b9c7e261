import numpy as np
import pytest

from wardseq.exceptions import ConfigError, ShapeError
from wardseq.losses import make_loss
from wardseq.models import ModelConfig, SequenceModel, grad_check

LSTM_SMALL = ModelConfig("lstm", n_features=5, blocks=2, hidden_size=8, dropout=0.0, seed=0)
TRANSFORMER_SMALL = ModelConfig(
    "transformer", n_features=5, blocks=1, head_size=4, heads=2, ff_dim=8, dropout=0.0, seed=0
)


def random_batch(rng, b=4, t=6, f=5, pads=None):
    x = rng.standard_normal((b, t, f))
    mask = np.ones((b, t), dtype=bool)
    for row, p in enumerate(pads or []):
        mask[row, :p] = False
    x[~mask] = 0.0
    return x, mask


class TestForwardContracts:
    @pytest.mark.parametrize("config", [LSTM_SMALL, TRANSFORMER_SMALL])
    def test_outputs_are_probabilities(self, config):
        model = SequenceModel(config)
        x, mask = random_batch(np.random.default_rng(0), pads=[2, 0, 1, 0])
        probs, _ = model.forward(x, mask)
        assert probs.shape == (4,)
        assert ((probs > 0) & (probs < 1)).all()

    @pytest.mark.parametrize("config", [LSTM_SMALL, TRANSFORMER_SMALL])
    def test_duplicated_samples_get_duplicated_outputs(self, config):
        model = SequenceModel(config)
        x, mask = random_batch(np.random.default_rng(1), b=2)
        doubled = np.concatenate([x, x])
        dmask = np.concatenate([mask, mask])
        probs, _ = model.forward(doubled, dmask)
        np.testing.assert_array_equal(probs[:2], probs[2:])

    @pytest.mark.parametrize("config", [LSTM_SMALL, TRANSFORMER_SMALL])
    def test_eval_mode_deterministic(self, config):
        model = SequenceModel(config)
        x, mask = random_batch(np.random.default_rng(2), pads=[3])
        a, _ = model.forward(x, mask, training=False)
        b, _ = model.forward(x, mask, training=False)
        np.testing.assert_array_equal(a, b)

    def test_training_mode_deterministic_given_rng_seed(self):
        config = ModelConfig("lstm", n_features=5, blocks=2, hidden_size=8, dropout=0.3, seed=0)
        model = SequenceModel(config)
        x, mask = random_batch(np.random.default_rng(3))
        a, _ = model.forward(x, mask, training=True, rng=np.random.default_rng(7))
        b, _ = model.forward(x, mask, training=True, rng=np.random.default_rng(7))
        c, _ = model.forward(x, mask, training=True, rng=np.random.default_rng(8))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_feature_width_mismatch(self):
        model = SequenceModel(LSTM_SMALL)
        x, mask = random_batch(np.random.default_rng(4), f=7)
        with pytest.raises(ShapeError, match="5 features"):
            model.forward(x, mask)

    def test_bad_architecture_rejected(self):
        with pytest.raises(ConfigError):
            ModelConfig("gru", n_features=5)


class TestMaskingInvariance:
    @pytest.mark.parametrize("config", [LSTM_SMALL, TRANSFORMER_SMALL])
    def test_masked_perturbation_bitwise_identical(self, config):
        model = SequenceModel(config)
        rng = np.random.default_rng(5)
        x, mask = random_batch(rng, pads=[4, 2, 0, 5])
        base, _ = model.forward(x, mask)
        for trial in range(50):
            poisoned = x.copy()
            noise = np.random.default_rng(trial).standard_normal(x.shape) * 100
            poisoned[~mask] = noise[~mask]
            probs, _ = model.forward(poisoned, mask)
            assert (probs == base).all()

    @pytest.mark.parametrize("config", [LSTM_SMALL, TRANSFORMER_SMALL])
    def test_masked_positions_get_no_gradient(self, config):
        model = SequenceModel(config)
        rng = np.random.default_rng(6)
        x, mask = random_batch(rng, pads=[3, 1, 0, 2])
        labels = rng.integers(0, 2, 4).astype(float)
        loss_fn = make_loss("bce")
        probs, cache = model.forward(x, mask)
        _, dprobs = loss_fn(probs, labels)
        grads = model.backward(cache, dprobs)
        assert set(grads) == set(model.parameters())


class TestGradCheck:
    def test_lstm_stack(self):
        rng = np.random.default_rng(10)
        x, mask = random_batch(rng, b=3, t=4, pads=[2, 0, 1])
        labels = rng.integers(0, 2, 3).astype(float)
        err = grad_check(SequenceModel(LSTM_SMALL), x, mask, labels, make_loss("bce"))
        assert err < 1e-4

    def test_transformer_encoder(self):
        rng = np.random.default_rng(11)
        x, mask = random_batch(rng, b=3, t=4, pads=[1, 0, 2])
        labels = rng.integers(0, 2, 3).astype(float)
        err = grad_check(SequenceModel(TRANSFORMER_SMALL), x, mask, labels, make_loss("bce"))
        assert err < 1e-4

    def test_focal_loss_path(self):
        rng = np.random.default_rng(12)
        x, mask = random_batch(rng, b=3, t=4)
        labels = rng.integers(0, 2, 3).astype(float)
        err = grad_check(SequenceModel(LSTM_SMALL), x, mask, labels, make_loss("focal", gamma=2.0))
        assert err < 1e-4

    def test_zero_upstream_gives_zero_grads(self):
        model = SequenceModel(LSTM_SMALL)
        x, mask = random_batch(np.random.default_rng(13))
        _, cache = model.forward(x, mask)
        grads = model.backward(cache, np.zeros(4))
        for arr in grads.values():
            assert (arr == 0.0).all()

    def test_deterministic(self):
        rng = np.random.default_rng(14)
        x, mask = random_batch(rng, b=2, t=3)
        labels = np.array([1.0, 0.0])
        model = SequenceModel(LSTM_SMALL)
        a = grad_check(model, x, mask, labels, make_loss("bce"))
        b = grad_check(model, x, mask, labels, make_loss("bce"))
        assert a == b


class TestCheckpoint:
    @pytest.mark.parametrize("config", [LSTM_SMALL, TRANSFORMER_SMALL])
    def test_bit_exact_round_trip(self, config, tmp_path):
        model = SequenceModel(config)
        # push parameters away from the initializer to make the test real
        for arr in model.parameters().values():
            arr += np.random.default_rng(0).standard_normal(arr.shape) * 0.1
        path = tmp_path / "ckpt.json"
        model.save(path)
        clone = SequenceModel.load(path)
        for name, arr in model.parameters().items():
            restored = clone.parameters()[name]
            assert arr.tobytes() == restored.tobytes(), name
        x, mask = random_batch(np.random.default_rng(1))
        a, _ = model.forward(x, mask)
        b, _ = clone.forward(x, mask)
        np.testing.assert_array_equal(a, b)

    def test_wrong_format_rejected(self):
        with pytest.raises(ConfigError):
            SequenceModel.from_json('{"format": "something-else"}')

    def test_param_count_reported(self):
        model = SequenceModel(LSTM_SMALL)
        total = sum(a.size for a in model.parameters().values())
        assert model.param_count == total
        # 2 blocks: 4H(F+H+1) + 4H(H+H+1) + 2*2H + head (H+1)
        h, f = 8, 5
        expected = (
            (f * 4 * h + h * 4 * h + 4 * h)
            + (h * 4 * h + h * 4 * h + 4 * h)
            + 2 * (2 * h)
            + (h + 1)
        )
        assert model.param_count == expected


class TestPooling:
    def test_lstm_defaults_to_last_step(self):
        assert LSTM_SMALL.resolved_pooling == "last_unmasked"

    def test_transformer_defaults_to_masked_mean(self):
        assert TRANSFORMER_SMALL.resolved_pooling == "masked_mean"

    def test_mean_pooling_ignores_masked_steps(self):
        config = ModelConfig("lstm", n_features=5, blocks=1, hidden_size=8,
                             dropout=0.0, pooling="masked_mean", seed=0)
        model = SequenceModel(config)
        x, mask = random_batch(np.random.default_rng(20), pads=[0, 3, 5, 1])
        base, _ = model.forward(x, mask)
        poisoned = x.copy()
        poisoned[~mask] = -50.0
        probs, _ = model.forward(poisoned, mask)
        np.testing.assert_array_equal(base, probs)
