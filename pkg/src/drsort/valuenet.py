"""Small fully connected Q-networks with manual gradients.

One shared local network Q' serves every agent: its input is the agent
observation (which embeds the agent index) concatenated with a one-hot
action encoding, and the joint action value is the sum of local values,
accumulated left-to-right by agent index. Hidden layers use ReLU, the
output is linear.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import budget
from .warehouse import OBS_DIM


@dataclass
class MlpParams:
    layer_dims: list[int]
    weights: list[np.ndarray]  # weights[l]: (d_in, d_out)
    biases: list[np.ndarray]  # biases[l]: (d_out,)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def dtype(self) -> np.dtype:
        return self.weights[0].dtype


def init_mlp(layer_dims: list[int], rng: np.random.Generator, dtype=np.float64) -> MlpParams:
    """He-scaled normal weights, zero biases."""
    if len(layer_dims) < 2:
        raise ValueError("need at least input and output dims")
    weights, biases = [], []
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, d_out)).astype(dtype))
        biases.append(np.zeros(d_out, dtype=dtype))
    return MlpParams(layer_dims=list(layer_dims), weights=weights, biases=biases)


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Forward pass; accepts a single input (d,) or a batch (B, d)."""
    out, _ = mlp_forward_cached(params, x)
    return out


def mlp_forward_cached(params: MlpParams, x: np.ndarray):
    """Forward pass keeping layer inputs for backpropagation."""
    x = np.asarray(x, dtype=params.dtype)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != params.layer_dims[0]:
        raise ValueError("input dimension mismatch")
    inputs = []
    last = params.n_layers - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        h = h @ w
        h += b
        if layer != last:
            np.maximum(h, 0.0, out=h)
    out = h[0] if single else h
    return out, inputs


def mlp_backward(params: MlpParams, inputs: list[np.ndarray], grad_out: np.ndarray):
    """Gradients of sum(grad_out * output) w.r.t. all weights and biases."""
    grad = np.asarray(grad_out, dtype=params.dtype)
    if grad.ndim == 1:
        grad = grad[None, :]
    grads_w = [None] * params.n_layers
    grads_b = [None] * params.n_layers
    last = params.n_layers - 1
    for layer in range(last, -1, -1):
        h_in = inputs[layer]
        if layer != last:
            # ReLU was applied to this layer's output; its post-activation
            # value is the next layer's cached input. grad was freshly
            # allocated by the matmul below, so masking in place is safe.
            post = inputs[layer + 1]
            np.multiply(grad, post > 0.0, out=grad)
        grads_w[layer] = h_in.T @ grad
        grads_b[layer] = grad.sum(axis=0)
        if layer > 0:
            grad = grad @ params.weights[layer].T
    return grads_w, grads_b


@dataclass
class Optimizer:
    """Plain SGD or Adam over MlpParams."""

    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m_w: list[np.ndarray] = field(default_factory=list)
    v_w: list[np.ndarray] = field(default_factory=list)
    m_b: list[np.ndarray] = field(default_factory=list)
    v_b: list[np.ndarray] = field(default_factory=list)

    def _ensure_state(self, params: MlpParams) -> None:
        if not self.m_w:
            self.m_w = [np.zeros_like(w) for w in params.weights]
            self.v_w = [np.zeros_like(w) for w in params.weights]
            self.m_b = [np.zeros_like(b) for b in params.biases]
            self.v_b = [np.zeros_like(b) for b in params.biases]

    def apply(self, params: MlpParams, grads_w, grads_b) -> None:
        if self.kind == "sgd":
            for w, b, gw, gb in zip(params.weights, params.biases, grads_w, grads_b):
                w -= self.learning_rate * gw
                b -= self.learning_rate * gb
            return
        if self.kind != "adam":
            raise ValueError(f"unknown optimizer kind: {self.kind!r}")
        self._ensure_state(params)
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1**t
        bias2 = 1.0 - self.beta2**t
        for layer in range(params.n_layers):
            for value, grad, m, v in (
                (params.weights[layer], grads_w[layer], self.m_w[layer], self.v_w[layer]),
                (params.biases[layer], grads_b[layer], self.m_b[layer], self.v_b[layer]),
            ):
                m *= self.beta1
                m += (1.0 - self.beta1) * grad
                v *= self.beta2
                v += (1.0 - self.beta2) * grad * grad
                value -= self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def mlp_gradient_step(
    params: MlpParams,
    inputs: list[np.ndarray],
    grad_out: np.ndarray,
    optimizer: Optimizer,
) -> None:
    """Backpropagate the output gradient and apply one optimizer update."""
    grads_w, grads_b = mlp_backward(params, inputs, grad_out)
    optimizer.apply(params, grads_w, grads_b)


def target_sync(params: MlpParams) -> MlpParams:
    """Deep copy with no aliasing against the live parameters."""
    return copy.deepcopy(params)


# ---------------------------------------------------------------------------
# Shared local Q' network over (observation, one-hot action)
# ---------------------------------------------------------------------------


def q_input_dim(a_max: int, obs_dim: int = OBS_DIM) -> int:
    return obs_dim + a_max + 1


def default_q_dims(a_max: int, hidden: tuple[int, int] = (64, 64)) -> list[int]:
    return [q_input_dim(a_max), *hidden, 1]


def action_onehot(action_value: int, a_max: int) -> np.ndarray:
    if not 0 <= action_value <= a_max:
        raise ValueError("action value out of range")
    onehot = np.zeros(a_max + 1)
    onehot[action_value] = 1.0
    return onehot


def q_inputs(observations: np.ndarray, actions: np.ndarray, a_max: int) -> np.ndarray:
    """Stack (N, OBS_DIM) observations with one-hot actions into (N, in_dim)."""
    observations = np.atleast_2d(np.asarray(observations, dtype=float))
    actions = np.asarray(actions, dtype=int)
    n = observations.shape[0]
    rows = np.zeros((n, observations.shape[1] + a_max + 1))
    rows[:, : observations.shape[1]] = observations
    rows[np.arange(n), observations.shape[1] + actions] = 1.0
    return rows


def local_q(
    params: MlpParams, observation: np.ndarray, action_value: int, a_max: int
) -> float:
    """Shared Q' evaluated for one agent's observation and action."""
    row = q_inputs(observation[None, :], np.array([action_value]), a_max)
    return float(mlp_forward(params, row)[0, 0])


def vdn_joint_q(params: MlpParams, observations: np.ndarray, actions: np.ndarray, a_max: int) -> float:
    """Joint value: sum of local values, left-to-right by agent index.

    Evaluates local_q per agent so the additivity contract holds exactly.
    """
    total = 0.0
    for i in range(observations.shape[0]):
        total = total + local_q(params, observations[i], int(actions[i]), a_max)
    return total


def action_value_table(params: MlpParams, observations: np.ndarray, a_max: int) -> np.ndarray:
    """(N, A_max+1) table of Q'(i, o_i, a) for the budgeted argmax."""
    n = observations.shape[0]
    rows = np.repeat(observations, a_max + 1, axis=0)
    acts = np.tile(np.arange(a_max + 1), n)
    inputs = q_inputs(rows, acts, a_max)
    return mlp_forward(params, inputs)[:, 0].reshape(n, a_max + 1)


def action_value_table_batch(
    params: MlpParams, observations: np.ndarray, a_max: int
) -> np.ndarray:
    """Tables for a batch: (B, N, OBS_DIM) -> (B, N, A_max+1)."""
    b, n, obs_dim = observations.shape
    flat = observations.reshape(b * n, obs_dim)
    rows = np.repeat(flat, a_max + 1, axis=0)
    acts = np.tile(np.arange(a_max + 1), b * n)
    inputs = q_inputs(rows, acts, a_max)
    return mlp_forward(params, inputs)[:, 0].reshape(b, n, a_max + 1)


def td_target(
    target_params: MlpParams,
    reward: float,
    next_observations: np.ndarray,
    *,
    gamma: float,
    budget_limit: int,
    a_max: int,
    terminal: bool = False,
) -> float:
    """reward + gamma * budget-constrained max_a' joint target value."""
    if terminal:
        return float(reward)
    table = action_value_table(target_params, next_observations, a_max)
    return float(reward) + gamma * budget.max_joint_value(table, budget_limit)


def td_target_batch(
    target_params: MlpParams,
    rewards: np.ndarray,
    next_observations: np.ndarray,
    terminals: np.ndarray,
    *,
    gamma: float,
    budget_limit: int,
    a_max: int,
) -> np.ndarray:
    tables = action_value_table_batch(target_params, next_observations, a_max)
    bootstrap = budget.max_joint_value_batch(tables, budget_limit)
    return np.asarray(rewards, dtype=float) + gamma * bootstrap * (
        1.0 - np.asarray(terminals, dtype=float)
    )


# ---------------------------------------------------------------------------
# Replay buffer
# ---------------------------------------------------------------------------


@dataclass
class Transition:
    observations: np.ndarray  # (N, OBS_DIM)
    action: np.ndarray  # (N,)
    group: int  # 0-based group index
    reward: float  # joint scalar (trainer-scaled)
    next_observations: np.ndarray
    terminal: bool
    # bootstrap value memoized per target-network era; recomputing it for
    # the same target parameters is the training loop's dominant cost
    bootstrap_era: int = -1
    bootstrap_value: float = 0.0


class ReplayBuffer:
    """FIFO ring buffer with uniform with-replacement sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, item) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._cursor] = item
            self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        if batch_size > len(self._items):
            raise ValueError("batch_size exceeds buffer size")
        indices = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in indices]


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def config_hash(payload) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()[:16]


def _optimizer_to_doc(opt: Optimizer | None) -> dict | None:
    if opt is None:
        return None
    return {
        "kind": opt.kind,
        "learning_rate": opt.learning_rate,
        "beta1": opt.beta1,
        "beta2": opt.beta2,
        "eps": opt.eps,
        "step_count": opt.step_count,
        "m_w": [m.ravel().tolist() for m in opt.m_w],
        "v_w": [v.ravel().tolist() for v in opt.v_w],
        "m_b": [m.tolist() for m in opt.m_b],
        "v_b": [v.tolist() for v in opt.v_b],
    }


def _optimizer_from_doc(doc: dict | None, params: MlpParams) -> Optimizer | None:
    if doc is None:
        return None
    opt = Optimizer(
        kind=doc["kind"],
        learning_rate=doc["learning_rate"],
        beta1=doc["beta1"],
        beta2=doc["beta2"],
        eps=doc["eps"],
        step_count=doc["step_count"],
    )
    dtype = params.dtype
    if doc["m_w"]:
        opt.m_w = [
            np.asarray(flat, dtype=dtype).reshape(w.shape)
            for flat, w in zip(doc["m_w"], params.weights)
        ]
        opt.v_w = [
            np.asarray(flat, dtype=dtype).reshape(w.shape)
            for flat, w in zip(doc["v_w"], params.weights)
        ]
        opt.m_b = [np.asarray(v, dtype=dtype) for v in doc["m_b"]]
        opt.v_b = [np.asarray(v, dtype=dtype) for v in doc["v_b"]]
    return opt


def save_checkpoint(
    path,
    params: MlpParams,
    *,
    kind: str,
    optimizer: Optimizer | None = None,
    rng_state: dict | None = None,
    config_digest: str = "",
    meta: dict | None = None,
) -> None:
    """Write a versioned JSON checkpoint; floats round-trip bit-exactly."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "kind": kind,
        "layer_dims": params.layer_dims,
        "dtype": np.dtype(params.dtype).name,
        "weights": [w.ravel().tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "optimizer": _optimizer_to_doc(optimizer),
        "rng_state": rng_state,
        "config_hash": config_digest,
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> dict:
    """Read a checkpoint into {params, optimizer, rng_state, ...}."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError("unsupported checkpoint format version")
    dims = [int(d) for d in doc["layer_dims"]]
    dtype = np.dtype(doc.get("dtype", "float64"))
    weights = [
        np.asarray(flat, dtype=dtype).reshape(d_in, d_out)
        for flat, d_in, d_out in zip(doc["weights"], dims[:-1], dims[1:])
    ]
    biases = [np.asarray(b, dtype=dtype) for b in doc["biases"]]
    params = MlpParams(layer_dims=dims, weights=weights, biases=biases)
    return {
        "kind": doc["kind"],
        "params": params,
        "optimizer": _optimizer_from_doc(doc.get("optimizer"), params),
        "rng_state": doc.get("rng_state"),
        "config_hash": doc.get("config_hash", ""),
        "meta": doc.get("meta", {}),
    }


def params_digest(params: MlpParams) -> str:
    """Stable content hash of the parameter values."""
    hasher = hashlib.sha256()
    for w, b in zip(params.weights, params.biases):
        hasher.update(np.ascontiguousarray(w).tobytes())
        hasher.update(np.ascontiguousarray(b).tobytes())
    return hasher.hexdigest()
