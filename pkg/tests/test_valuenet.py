import itertools

import numpy as np
import pytest

from drsort import valuenet
from drsort.seeding import stream
from drsort.verify import max_relative_gradient_error


def naive_forward(params, x):
    """Independent re-implementation of the forward pass."""
    h = np.asarray(x, dtype=float)
    for layer in range(params.n_layers):
        pre = np.empty(params.layer_dims[layer + 1])
        for j in range(params.layer_dims[layer + 1]):
            acc = params.biases[layer][j]
            for i in range(params.layer_dims[layer]):
                acc += h[i] * params.weights[layer][i, j]
            pre[j] = acc
        h = np.maximum(pre, 0.0) if layer < params.n_layers - 1 else pre
    return h


class TestMlpForward:
    def test_zero_net_outputs_zero(self):
        params = valuenet.init_mlp([3, 4, 2], stream(0, "z"))
        for w in params.weights:
            w[:] = 0.0
        assert np.array_equal(valuenet.mlp_forward(params, np.ones(3)), np.zeros(2))

    def test_identity_single_layer(self):
        params = valuenet.init_mlp([3, 3], stream(0, "i"))
        params.weights[0][:] = np.eye(3)
        params.biases[0][:] = 0.0
        x = np.array([0.3, -1.2, 2.0])
        assert np.array_equal(valuenet.mlp_forward(params, x), x)

    def test_matches_naive_oracle(self):
        rng = stream(1, "naive")
        for _ in range(10):
            params = valuenet.init_mlp([4, 6, 5, 2], rng)
            x = rng.normal(size=4)
            got = valuenet.mlp_forward(params, x)
            assert got == pytest.approx(naive_forward(params, x), abs=1e-12)

    def test_batch_matches_single(self):
        rng = stream(2, "batch")
        params = valuenet.init_mlp([4, 8, 1], rng)
        xs = rng.normal(size=(6, 4))
        batched = valuenet.mlp_forward(params, xs)
        for k in range(6):
            assert batched[k] == pytest.approx(valuenet.mlp_forward(params, xs[k]), abs=1e-12)

    def test_dimension_mismatch_raises(self):
        params = valuenet.init_mlp([4, 2], stream(0, "d"))
        with pytest.raises(ValueError, match="dimension"):
            valuenet.mlp_forward(params, np.ones(5))


class TestGradientStep:
    def test_zero_gradient_leaves_params_unchanged(self):
        for kind in ("sgd", "adam"):
            params = valuenet.init_mlp([3, 4, 1], stream(3, "zg"))
            before = [w.copy() for w in params.weights]
            opt = valuenet.Optimizer(kind=kind, learning_rate=0.1)
            out, cache = valuenet.mlp_forward_cached(params, np.ones((2, 3)))
            valuenet.mlp_gradient_step(params, cache, np.zeros_like(out), opt)
            for w, w0 in zip(params.weights, before):
                assert np.array_equal(w, w0)

    def test_single_weight_sgd_matches_hand_calculus(self):
        # scalar net y = w*x, loss L = (y - t)^2, dL/dw = 2(y-t)x
        params = valuenet.init_mlp([1, 1], stream(4, "sw"))
        params.weights[0][:] = 1.5
        params.biases[0][:] = 0.0
        x, target, lr = 2.0, 1.0, 0.05
        out, cache = valuenet.mlp_forward_cached(params, np.array([x]))
        grad_out = np.array([2.0 * (out[0] - target)])
        opt = valuenet.Optimizer(kind="sgd", learning_rate=lr)
        valuenet.mlp_gradient_step(params, cache, grad_out, opt)
        y = 1.5 * x
        expected = 1.5 - lr * 2.0 * (y - target) * x
        assert params.weights[0][0, 0] == pytest.approx(expected, abs=1e-12)

    def test_gradients_match_finite_differences(self):
        rng = stream(5, "fd")
        for dims in ([3, 5, 1], [4, 8, 8, 2], [2, 16, 3]):
            params = valuenet.init_mlp(dims, rng)
            assert max_relative_gradient_error(params, rng) < 1e-4

    def test_adam_moves_toward_target(self):
        rng = stream(6, "adam")
        params = valuenet.init_mlp([2, 8, 1], rng)
        opt = valuenet.Optimizer(kind="adam", learning_rate=1e-2)
        xs = rng.normal(size=(16, 2))
        targets = (xs[:, :1] * 0.5 - 0.25)
        losses = []
        for _ in range(300):
            out, cache = valuenet.mlp_forward_cached(params, xs)
            err = out - targets
            losses.append(float(np.mean(err**2)))
            valuenet.mlp_gradient_step(params, cache, 2 * err / len(xs), opt)
        assert losses[-1] < 0.02 * losses[0]

    def test_unknown_optimizer_rejected(self):
        params = valuenet.init_mlp([2, 1], stream(0, "uo"))
        opt = valuenet.Optimizer(kind="newton")
        out, cache = valuenet.mlp_forward_cached(params, np.ones((1, 2)))
        with pytest.raises(ValueError, match="optimizer"):
            valuenet.mlp_gradient_step(params, cache, np.ones_like(out), opt)


class TestSharedLocalQ:
    def setup_method(self):
        self.a_max = 2
        self.params = valuenet.init_mlp(valuenet.default_q_dims(self.a_max, (8, 8)), stream(7, "q"))

    def test_weight_sharing_identical_inputs(self):
        obs = np.linspace(0, 1, valuenet.OBS_DIM)
        assert valuenet.local_q(self.params, obs, 1, self.a_max) == valuenet.local_q(
            self.params, obs, 1, self.a_max
        )

    def test_outputs_finite(self):
        rng = stream(8, "fin")
        for _ in range(20):
            obs = rng.uniform(size=valuenet.OBS_DIM)
            a = int(rng.integers(self.a_max + 1))
            assert np.isfinite(valuenet.local_q(self.params, obs, a, self.a_max))

    def test_vdn_joint_is_sum_of_locals(self):
        rng = stream(9, "vdn")
        obs = rng.uniform(size=(4, valuenet.OBS_DIM))
        actions = np.array([0, 2, 1, 0])
        joint = valuenet.vdn_joint_q(self.params, obs, actions, self.a_max)
        total = 0.0
        for i in range(4):
            total = total + valuenet.local_q(self.params, obs[i], int(actions[i]), self.a_max)
        assert joint == total  # same left-to-right float summation

    def test_single_agent_equals_local(self):
        rng = stream(10, "one")
        obs = rng.uniform(size=(1, valuenet.OBS_DIM))
        assert valuenet.vdn_joint_q(self.params, obs, np.array([1]), self.a_max) == pytest.approx(
            valuenet.local_q(self.params, obs[0], 1, self.a_max), abs=1e-12
        )

    def test_permuting_identical_agents_keeps_joint_value(self):
        obs = np.tile(np.linspace(0, 1, valuenet.OBS_DIM), (2, 1))
        forward = valuenet.vdn_joint_q(self.params, obs, np.array([0, 2]), self.a_max)
        reverse = valuenet.vdn_joint_q(self.params, obs, np.array([2, 0]), self.a_max)
        assert forward == pytest.approx(reverse, abs=1e-12)

    def test_action_value_table_matches_local_q(self):
        rng = stream(11, "tab")
        obs = rng.uniform(size=(3, valuenet.OBS_DIM))
        table = valuenet.action_value_table(self.params, obs, self.a_max)
        for i in range(3):
            for a in range(self.a_max + 1):
                assert table[i, a] == pytest.approx(
                    valuenet.local_q(self.params, obs[i], a, self.a_max), abs=1e-12
                )

    def test_action_onehot_bounds(self):
        with pytest.raises(ValueError):
            valuenet.action_onehot(3, 2)


class TestTdTarget:
    def setup_method(self):
        self.a_max = 1
        self.params = valuenet.init_mlp(valuenet.default_q_dims(self.a_max, (8, 8)), stream(12, "td"))

    def test_terminal_returns_reward(self):
        obs = np.zeros((3, valuenet.OBS_DIM))
        got = valuenet.td_target(
            self.params, -4.0, obs, gamma=0.9, budget_limit=2, a_max=self.a_max, terminal=True
        )
        assert got == -4.0

    def test_gamma_zero_returns_reward(self):
        obs = np.random.default_rng(0).uniform(size=(3, valuenet.OBS_DIM))
        got = valuenet.td_target(
            self.params, 1.25, obs, gamma=0.0, budget_limit=2, a_max=self.a_max
        )
        assert got == pytest.approx(1.25, abs=1e-12)

    def test_bootstrap_matches_exhaustive_enumeration(self):
        rng = stream(13, "enum")
        n, budget, gamma = 4, 2, 0.9
        obs = rng.uniform(size=(n, valuenet.OBS_DIM))
        table = valuenet.action_value_table(self.params, obs, self.a_max)
        best = max(
            sum(table[i, a] for i, a in enumerate(actions))
            for actions in itertools.product(range(self.a_max + 1), repeat=n)
            if sum(actions) <= budget
        )
        got = valuenet.td_target(
            self.params, 1.0, obs, gamma=gamma, budget_limit=budget, a_max=self.a_max
        )
        assert got == pytest.approx(1.0 + gamma * best, abs=1e-9)

    def test_batch_matches_scalar(self):
        rng = stream(14, "tdb")
        obs = rng.uniform(size=(5, 3, valuenet.OBS_DIM))
        rewards = rng.normal(size=5)
        terminals = np.array([False, True, False, False, True])
        got = valuenet.td_target_batch(
            self.params, rewards, obs, terminals, gamma=0.8, budget_limit=2, a_max=self.a_max
        )
        for k in range(5):
            want = valuenet.td_target(
                self.params, rewards[k], obs[k],
                gamma=0.8, budget_limit=2, a_max=self.a_max, terminal=bool(terminals[k]),
            )
            assert got[k] == pytest.approx(want, abs=1e-9)


class TestReplayBuffer:
    def test_fifo_eviction(self):
        buf = valuenet.ReplayBuffer(2)
        for item in ("a", "b", "c"):
            buf.push(item)
        assert len(buf) == 2
        assert sorted(buf._items) == ["b", "c"]

    def test_empty_sample_raises(self):
        with pytest.raises(ValueError, match="empty"):
            valuenet.ReplayBuffer(4).sample(1, stream(0, "s"))

    def test_batch_larger_than_size_raises(self):
        buf = valuenet.ReplayBuffer(4)
        buf.push("a")
        with pytest.raises(ValueError, match="batch_size"):
            buf.sample(2, stream(0, "s"))

    def test_single_item_sample(self):
        buf = valuenet.ReplayBuffer(4)
        buf.push("only")
        assert buf.sample(1, stream(0, "s")) == ["only"]

    def test_sampling_is_uniform(self):
        from scipy.stats import chisquare

        buf = valuenet.ReplayBuffer(10)
        for i in range(10):
            buf.push(i)
        rng = stream(15, "chi")
        tallies = np.zeros(10)
        for item in buf.sample(10_000, rng):
            tallies[item] += 1
        stat, p = chisquare(tallies)
        assert p > 0.01

    def test_deterministic_given_seed(self):
        buf = valuenet.ReplayBuffer(8)
        for i in range(8):
            buf.push(i)
        a = buf.sample(16, stream(16, "det"))
        b = buf.sample(16, stream(16, "det"))
        assert a == b


class TestTargetSync:
    def test_forward_agreement_after_sync(self):
        params = valuenet.init_mlp([3, 4, 1], stream(17, "ts"))
        target = valuenet.target_sync(params)
        x = np.ones(3)
        assert valuenet.mlp_forward(params, x) == pytest.approx(
            valuenet.mlp_forward(target, x), abs=0
        )

    def test_no_aliasing_after_gradient_step(self):
        params = valuenet.init_mlp([3, 4, 1], stream(18, "alias"))
        target = valuenet.target_sync(params)
        x = np.ones((1, 3))
        out, cache = valuenet.mlp_forward_cached(params, x)
        opt = valuenet.Optimizer(kind="sgd", learning_rate=0.5)
        before = valuenet.mlp_forward(target, x[0]).copy()
        valuenet.mlp_gradient_step(params, cache, np.ones_like(out), opt)
        assert np.array_equal(valuenet.mlp_forward(target, x[0]), before)
        assert not np.array_equal(valuenet.mlp_forward(params, x[0]), before)

    def test_scripted_sync_schedule(self):
        params = valuenet.init_mlp([2, 3, 1], stream(19, "sched"))
        target = valuenet.target_sync(params)
        opt = valuenet.Optimizer(kind="sgd", learning_rate=0.1)
        sync_every = 3
        for step in range(1, 10):
            out, cache = valuenet.mlp_forward_cached(params, np.ones((1, 2)))
            valuenet.mlp_gradient_step(params, cache, np.ones_like(out), opt)
            if step % sync_every == 0:
                target = valuenet.target_sync(params)
                assert valuenet.params_digest(target) == valuenet.params_digest(params)
            else:
                assert valuenet.params_digest(target) != valuenet.params_digest(params)


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        rng = stream(20, "ckpt")
        params = valuenet.init_mlp([4, 8, 3], rng, dtype=np.float32)
        opt = valuenet.Optimizer(kind="adam", learning_rate=1e-3)
        out, cache = valuenet.mlp_forward_cached(params, rng.normal(size=(4, 4)))
        valuenet.mlp_gradient_step(params, cache, np.ones_like(out), opt)
        path = tmp_path / "ckpt.json"
        valuenet.save_checkpoint(
            path, params, kind="vdn", optimizer=opt,
            rng_state=rng.bit_generator.state, config_digest="abc123",
        )
        loaded = valuenet.load_checkpoint(path)
        again = loaded["params"]
        assert again.layer_dims == params.layer_dims
        assert again.dtype == np.float32
        for w, w2 in zip(params.weights, again.weights):
            assert np.array_equal(w, w2)
        for b, b2 in zip(params.biases, again.biases):
            assert np.array_equal(b, b2)
        opt2 = loaded["optimizer"]
        assert opt2.step_count == opt.step_count
        for m, m2 in zip(opt.m_w, opt2.m_w):
            assert np.array_equal(m, m2)
        assert loaded["config_hash"] == "abc123"
        from drsort.seeding import restore_generator

        resumed = restore_generator(loaded["rng_state"])
        assert resumed.integers(1 << 30) == rng.integers(1 << 30)

    def test_version_mismatch_rejected(self, tmp_path):
        import json

        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"format_version": 99}))
        with pytest.raises(ValueError, match="format version"):
            valuenet.load_checkpoint(path)
