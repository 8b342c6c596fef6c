import io

import numpy as np
import pytest

import charlid.train
from charlid import (
    AdamState,
    Batch,
    TrainConfig,
    adam_step,
    backward,
    batches,
    build_alphabet,
    build_label_set,
    cross_entropy,
    dataset_metrics,
    encode_corpus,
    forward,
    init_params,
    train_fixed_epochs,
    train_model,
)
from charlid.train import epoch_shuffle_seed, step_dropout_seed
from helpers import random_inputs, small_config, synthetic_corpus


def encoded_separable(n_per_class, seed, config):
    corpus = synthetic_corpus(n_per_class, seed, max_len=config.max_len)
    alphabet = build_alphabet(corpus)
    labels = build_label_set(corpus)
    assert alphabet.size == config.alphabet_size
    return encode_corpus(corpus, alphabet, labels, config.max_len)


def separable_config(**overrides):
    # 15 distinct chars + PAD/UNK
    return small_config(alphabet_size=17, max_len=20, **overrides)


class TestAdamStep:
    def test_first_step_hand_computed(self):
        config = small_config()
        params = init_params(config, seed=0)
        params.out_bias[:] = 0.0
        grads = params.zeros_like()
        grads.out_bias[0] = 0.5
        state = AdamState.for_params(params)
        adam_step(params, grads, state, TrainConfig())
        # m_hat = g, v_hat = g^2 at t=1, so the step is -lr * g / (|g| + eps)
        expected = -0.001 * 0.5 / (0.5 + 1e-8)
        assert abs(float(params.out_bias[0]) - expected) < 1e-9
        assert abs(expected - (-0.000999999980)) < 1e-12

    def test_zero_gradient_is_a_no_op(self):
        config = small_config()
        params = init_params(config, seed=1)
        before = params.copy()
        state = AdamState.for_params(params)
        adam_step(params, params.zeros_like(), state, TrainConfig())
        assert state.t == 1
        for (_, a), (_, b) in zip(params.tensors(), before.tensors()):
            assert np.array_equal(a, b)

    def test_first_step_scale_invariance(self):
        config = small_config()
        params = init_params(config, seed=2)
        params.out_bias[:] = 0.0
        grads = params.zeros_like()
        grads.out_bias[0] = 0.3
        grads.out_bias[1] = 0.6
        adam_step(params, grads, AdamState.for_params(params), TrainConfig())
        assert abs(float(params.out_bias[0]) - float(params.out_bias[1])) < 1e-9

    def test_nonfinite_gradient_names_tensor(self):
        config = small_config()
        params = init_params(config, seed=3)
        grads = params.zeros_like()
        grads.fc_weight[0, 0] = np.nan
        with pytest.raises(ValueError, match="fc.weight"):
            adam_step(params, grads, AdamState.for_params(params), TrainConfig())

    def test_step_counter_tracks_updates(self):
        config = small_config()
        params = init_params(config, seed=4)
        state = AdamState.for_params(params)
        grads = params.zeros_like()
        for _ in range(7):
            adam_step(params, grads, state, TrainConfig())
        assert state.t == 7

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_fifty_steps_reduce_loss_on_repeated_batch(self, seed):
        config = small_config()
        params = init_params(config, seed=seed)
        inputs, labels = random_inputs(config, batch_size=8, seed=seed)
        batch = Batch(inputs=inputs, labels=labels)
        tc = TrainConfig(learning_rate=1e-4, seed=seed)
        state = AdamState.for_params(params)
        loss_before = cross_entropy(forward(params, config, batch)[0], labels)
        for _ in range(50):
            _, cache = forward(params, config, batch, train_mode=True, dropout_seed=0)
            grads = backward(params, config, cache, labels)
            adam_step(params, grads, state, tc)
        loss_after = cross_entropy(forward(params, config, batch)[0], labels)
        assert loss_after < loss_before


class TestTrainConfigValidation:
    def test_rejects_zero_fixed_epochs(self):
        with pytest.raises(ValueError):
            TrainConfig(fixed_epochs=0)

    def test_rejects_bad_batch_size(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)

    def test_rejects_bad_betas(self):
        with pytest.raises(ValueError):
            TrainConfig(beta1=1.0)


class TestEarlyStopping:
    def scripted_run(self, monkeypatch, dev_losses, patience):
        """Run train_model with dataset_metrics scripted on the dev set."""
        config = separable_config()
        data = encoded_separable(4, seed=0, config=config)
        script = iter(dev_losses)
        snapshots = []
        real_metrics = dataset_metrics

        def fake_metrics(params, cfg, dataset, batch_size=256):
            snapshots.append(params.copy())
            return next(script), 0.0

        monkeypatch.setattr(charlid.train, "dataset_metrics", fake_metrics)
        tc = TrainConfig(batch_size=4, patience=patience, max_epochs=len(dev_losses), seed=0)
        params, history = train_model(data, data, config, tc)
        monkeypatch.setattr(charlid.train, "dataset_metrics", real_metrics)
        return params, history, snapshots

    def test_patience_counts_epochs_since_best(self, monkeypatch):
        dev_losses = [1.0, 0.9] + [0.95, 0.96] + [0.97] * 9
        params, history, snapshots = self.scripted_run(monkeypatch, dev_losses, patience=10)
        assert history.best_epoch == 2
        assert history.stopped_epoch == 12
        assert history.dev_losses == dev_losses[:12]
        for (_, got), (_, want) in zip(params.tensors(), snapshots[1].tensors()):
            assert np.array_equal(got, want)

    def test_runs_to_max_epochs_when_improving(self, monkeypatch):
        dev_losses = [1.0 - 0.01 * i for i in range(6)]
        _, history, _ = self.scripted_run(monkeypatch, dev_losses, patience=3)
        assert history.best_epoch == 6
        assert history.stopped_epoch == 6

    def test_best_epoch_is_argmin_of_history(self):
        config = separable_config()
        data = encoded_separable(5, seed=1, config=config)
        tc = TrainConfig(batch_size=8, patience=3, max_epochs=15, seed=2)
        _, history = train_model(data, data, config, tc)
        assert history.best_epoch == int(np.argmin(history.dev_losses)) + 1
        assert history.best_epoch <= history.stopped_epoch

    def test_empty_dev_rejected(self):
        config = separable_config()
        data = encoded_separable(3, seed=2, config=config)
        with pytest.raises(ValueError, match="dev"):
            train_model(data, [], config, TrainConfig())

    def test_empty_train_rejected(self):
        config = separable_config()
        data = encoded_separable(3, seed=2, config=config)
        with pytest.raises(ValueError, match="empty"):
            train_model([], data, config, TrainConfig())


class TestDeterminism:
    def test_same_seed_reproduces_history_and_params(self):
        config = separable_config(dropout_embed=0.2, dropout_fc=0.3)
        data = encoded_separable(5, seed=3, config=config)
        train_part, dev_part = data[:10], data[10:]
        tc = TrainConfig(batch_size=4, patience=2, max_epochs=6, seed=11)
        params_a, hist_a = train_model(train_part, dev_part, config, tc)
        params_b, hist_b = train_model(train_part, dev_part, config, tc)
        assert hist_a.train_losses == hist_b.train_losses
        assert hist_a.dev_losses == hist_b.dev_losses
        for (_, a), (_, b) in zip(params_a.tensors(), params_b.tensors()):
            assert np.array_equal(a, b)


class TestTrainFixedEpochs:
    def test_single_epoch_is_one_adam_step(self):
        config = separable_config()
        data = encoded_separable(4, seed=4, config=config)[:10]
        tc = TrainConfig(batch_size=16, seed=5, fixed_epochs=1)
        trained = train_fixed_epochs(data, config, tc)

        # replicate by hand: one batch, one update, t = 1
        epoch_batches = batches(data, 16, epoch_shuffle_seed(5, 1))
        assert len(epoch_batches) == 1
        params = init_params(config, seed=5)
        state = AdamState.for_params(params)
        _, cache = forward(
            params, config, epoch_batches[0], train_mode=True, dropout_seed=step_dropout_seed(5, 1, 0)
        )
        grads = backward(params, config, cache, epoch_batches[0].labels)
        adam_step(params, grads, state, tc)
        assert state.t == 1
        for (_, a), (_, b) in zip(trained.tensors(), params.tensors()):
            assert np.array_equal(a, b)

    def test_requires_fixed_epochs(self):
        config = separable_config()
        data = encoded_separable(3, seed=5, config=config)
        with pytest.raises(ValueError, match="fixed_epochs"):
            train_fixed_epochs(data, config, TrainConfig())

    def test_learns_separable_data(self):
        config = separable_config(dropout_embed=0.2, dropout_fc=0.5)
        data = encoded_separable(17, seed=6, config=config)[:50]
        tc = TrainConfig(batch_size=16, seed=7, fixed_epochs=100)
        params = train_fixed_epochs(data, config, tc)
        _, acc = dataset_metrics(params, config, data)
        assert acc == 1.0


class TestLogging:
    def test_epoch_lines_are_tsv(self):
        config = separable_config()
        data = encoded_separable(4, seed=8, config=config)
        stream = io.StringIO()
        tc = TrainConfig(batch_size=8, patience=2, max_epochs=3, seed=9)
        train_model(data, data, config, tc, log_streams=[stream])
        lines = stream.getvalue().strip().split("\n")
        assert len(lines) == 3
        for epoch, line in enumerate(lines, start=1):
            cells = line.split("\t")
            assert int(cells[0]) == epoch
            float(cells[1]), float(cells[2]), float(cells[3])

    def test_fixed_epochs_lines_have_placeholders(self):
        config = separable_config()
        data = encoded_separable(3, seed=9, config=config)
        stream = io.StringIO()
        tc = TrainConfig(batch_size=8, seed=10, fixed_epochs=2)
        train_fixed_epochs(data, config, tc, log_streams=[stream])
        lines = stream.getvalue().strip().split("\n")
        assert len(lines) == 2
        assert lines[0].split("\t")[2:] == ["-", "-"]
