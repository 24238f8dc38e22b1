import math

import numpy as np
import pytest

from inkscribe.netgraph import (
    Example,
    OptimizerState,
    TrainConfig,
    adadelta_step,
    desk_arch,
    forward,
    init_params,
    load_checkpoint,
    micro_arch,
    save_checkpoint,
    train,
)
from inkscribe.netgraph.checkpoint import CheckpointError


class _Scalar:
    """Stand-in parameter container with one named weight per layer."""

    def __init__(self, value):
        self.weights = [{"w": np.array(value, dtype=float)}]


class TestAdaDelta:
    def test_zero_gradient_keeps_parameters(self):
        p = _Scalar([1.0, -2.0])
        state = OptimizerState.for_params(p)
        assert adadelta_step(p, [{"w": np.zeros(2)}], state)
        np.testing.assert_array_equal(p.weights[0]["w"], [1.0, -2.0])

    def test_first_step_closed_form(self):
        rho, eps, g = 0.9, 1e-6, 0.3
        p = _Scalar([0.0])
        state = OptimizerState.for_params(p, rho, eps)
        adadelta_step(p, [{"w": np.array([g])}], state)
        expected = -math.sqrt(eps) / math.sqrt((1 - rho) * g * g + eps) * g
        assert p.weights[0]["w"][0] == pytest.approx(expected, rel=1e-12)

    def test_two_steps_move_against_gradient(self):
        for g in (0.5, -0.5):
            p = _Scalar([0.0])
            state = OptimizerState.for_params(p)
            trace = [0.0]
            for _ in range(2):
                adadelta_step(p, [{"w": np.array([g])}], state)
                trace.append(float(p.weights[0]["w"][0]))
            steps = np.diff(trace)
            assert np.all(np.sign(steps) == -np.sign(g))

    def test_accumulators_stay_non_negative(self):
        rng = np.random.default_rng(0)
        p = _Scalar(rng.normal(size=5))
        state = OptimizerState.for_params(p)
        for _ in range(1000):
            adadelta_step(p, [{"w": rng.normal(size=5) * rng.exponential(3)}], state)
            assert np.all(state.sq_grad[0]["w"] >= 0)
            assert np.all(state.sq_update[0]["w"] >= 0)
        assert np.all(np.isfinite(p.weights[0]["w"]))

    def test_non_finite_gradient_rejected(self):
        p = _Scalar([1.0, 2.0])
        state = OptimizerState.for_params(p)
        assert not adadelta_step(p, [{"w": np.array([np.nan, 0.0])}], state)
        assert state.rejected == 1
        np.testing.assert_array_equal(p.weights[0]["w"], [1.0, 2.0])
        assert not state.sq_grad[0]["w"].any()


def _micro_example(seed=0, label=(1, 2)):
    x = np.random.default_rng(seed).normal(size=(2, 6, 10))
    return Example(x, label)


class TestTrain:
    def test_overfit_single_sample(self):
        ex = _micro_example()
        res = train([ex], micro_arch(3), TrainConfig(iterations=50, batch_size=1, seed=1, log_every=0))
        losses = np.array(res.losses)
        assert len(losses) == 50
        assert np.all(np.diff(losses) < 0)

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            train([], micro_arch(3))

    def test_deterministic(self):
        data = [_micro_example(s, lab) for s, lab in enumerate([(1,), (2, 1), (1, 2), (2,)])]
        cfg = TrainConfig(iterations=6, batch_size=2, seed=5, log_every=0)
        a = train(data, micro_arch(3), cfg)
        b = train(data, micro_arch(3), cfg)
        assert a.losses == b.losses
        for wa, wb in zip(a.params.weights, b.params.weights):
            for k in wa:
                assert np.array_equal(wa[k], wb[k])

    def test_impossible_label_skipped(self):
        # T = 4 cannot hold five labels
        data = [_micro_example(0, (1, 2, 1, 2, 1)), _micro_example(1, (1,))]
        res = train(data, micro_arch(3), TrainConfig(iterations=4, batch_size=2, log_every=0))
        assert res.skipped == 4
        assert all(math.isfinite(v) for v in res.losses)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_returns_last_good(self):
        def poison(it, loss, params):
            if it == 1:
                params.weights[-2]["b"][0] = np.nan

        res = train([_micro_example()], micro_arch(3),
                    TrainConfig(iterations=5, batch_size=1, log_every=0), callback=poison)
        assert res.diverged
        assert len(res.losses) == 2
        for w in res.params.weights:
            for v in w.values():
                assert np.all(np.isfinite(v))

    def test_non_finite_input_gradient_is_rejected(self):
        # NaN features vanish through the ReLU in the forward pass but poison
        # the convolution gradient; the optimizer refuses those steps
        bad = Example(np.full((2, 6, 10), np.nan), (1,))
        init = init_params(micro_arch(3), 2, seed=0)
        res = train([bad], micro_arch(3), TrainConfig(iterations=3, batch_size=1, log_every=0),
                    params=init.copy())
        assert not res.diverged
        assert np.array_equal(res.params.weights[0]["W"], init.weights[0]["W"])

    def test_batchnorm_activations_centred_after_training(self):
        # train a little on real line features, then inspect train-mode BN outputs
        from inkscribe.experiment import DeskTask, featurize, make_lines

        task = DeskTask(n_train=8)
        arch = desk_arch(11, blstm_cells=8)
        data = featurize(make_lines(task, "train"), 1, task, arch)
        res = train(data, arch, TrainConfig(iterations=10, batch_size=2, log_every=0))
        from inkscribe.netgraph import layers as L

        params = res.params
        x = data[0].dense()
        seen = 0
        for layer, w, s in zip(params.arch, params.weights, params.state):
            if layer.kind == "conv":
                x, _ = L.conv_forward(x, w["W"], w["b"], layer.stride, layer.padding)
            elif layer.kind == "pool":
                x, _ = L.pool_forward(x, layer.kernel, layer.stride)
            elif layer.kind == "relu":
                x = np.maximum(x, 0)
            elif layer.kind == "batchnorm":
                x, _ = L.batchnorm_forward(x, w["gamma"], w["beta"], {k: v.copy() for k, v in s.items()}, True)
                means = x.mean(axis=(1, 2))
                assert np.all(np.abs(means) <= 0.5)
                seen += 1
            else:
                break
        assert seen == 4


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        params = init_params(micro_arch(3), 2, seed=9)
        params.state[1]["running_mean"][:] = [0.5, -1.0, 2.0]
        params.iteration = 17
        save_checkpoint(params, tmp_path / "ck", {"sig_level": "2", "alphabet": "a b"})
        loaded, meta = load_checkpoint(tmp_path / "ck")
        assert meta == {"sig_level": "2", "alphabet": "a b"}
        assert loaded.arch == params.arch
        assert loaded.iteration == 17 and loaded.seed == 9 and loaded.in_channels == 2
        for (i, n, a), (j, m, b) in zip(params.named_arrays(), loaded.named_arrays()):
            assert (i, n) == (j, m)
            assert np.array_equal(a, b)
        x = np.random.default_rng(0).normal(size=(2, 6, 10))
        assert np.array_equal(forward(params, x)[0], forward(loaded, x)[0])

    def test_blob_is_little_endian_f8(self, tmp_path):
        params = init_params(micro_arch(3), 1, seed=0)
        save_checkpoint(params, tmp_path / "ck")
        blob = (tmp_path / "ck" / "params.bin").read_bytes()
        total = sum(a.size for _, _, a in params.named_arrays())
        assert len(blob) == 8 * total
        first = next(params.named_arrays())[2].ravel()[0]
        assert np.frombuffer(blob[:8], dtype="<f8")[0] == first

    def test_truncated_blob(self, tmp_path):
        save_checkpoint(init_params(micro_arch(3), 1, seed=0), tmp_path / "ck")
        blob = tmp_path / "ck" / "params.bin"
        blob.write_bytes(blob.read_bytes()[:-8])
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "ck")

    def test_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "nothing")
