"""Exact tabular distributionally robust Bellman machinery.

For a finite family of per-group expected rewards R_g and a shared
transition kernel P, the robust backup replaces the immediate reward with
its minimum over groups:

    T(Q)(s,a) = min_g R_g[s,a] + gamma * sum_s' P[s,a,s'] * max_a' Q[s',a'].

When the groups also carry their own transition kernels P_g, the
approximate operator takes a single joint minimum over groups of
reward-plus-continuation, which upper-bounds the robust backup:

    U(Q)(s,a) = min_g { R_g[s,a] + gamma * sum_s' P_g[s,a,s'] * max_a' Q[s',a'] }.

Both operators are gamma-contractions in the sup norm.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

TRANSITION_TOL = 1e-12


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP with per-group rewards and shared or per-group transitions.

    rewards: (m, S, A); transitions: (S, A, S) shared, or (m, S, A, S)
    per-group.
    """

    rewards: np.ndarray
    transitions: np.ndarray
    gamma: float

    def __post_init__(self):
        rewards = np.asarray(self.rewards, dtype=float)
        transitions = np.asarray(self.transitions, dtype=float)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "transitions", transitions)
        if rewards.ndim != 3:
            raise ValueError("rewards must have shape (m, S, A)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if transitions.ndim not in (3, 4):
            raise ValueError("transitions must have shape (S, A, S) or (m, S, A, S)")
        row_sums = transitions.sum(axis=-1)
        if np.any(np.abs(row_sums - 1.0) > TRANSITION_TOL):
            raise ValueError("each transition row must sum to 1")

    @property
    def n_groups(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_states(self) -> int:
        return self.rewards.shape[1]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[2]

    @property
    def per_group_transitions(self) -> bool:
        return self.transitions.ndim == 4


def worst_case_reward(group_rewards: np.ndarray) -> float:
    """min over groups of the expected reward at one (s, a)."""
    group_rewards = np.asarray(group_rewards, dtype=float)
    if group_rewards.size == 0:
        raise ValueError("need at least one group reward")
    return float(group_rewards.min())


def _simplex_grid(m: int, resolution: int):
    """All weight vectors with entries k/resolution on the m-simplex."""
    for combo in itertools.combinations_with_replacement(range(m), resolution):
        counts = np.bincount(combo, minlength=m)
        yield counts / resolution


def simplex_min_oracle(
    group_rewards: np.ndarray,
    resolution: int = 20,
    rng: np.random.Generator | None = None,
    n_dirichlet: int = 10_000,
) -> float:
    """Brute-force minimum of sum_g q_g r_g over the simplex.

    Dense grid plus random Dirichlet draws; test oracle for the
    vertex-optimum reduction of the worst-case expected reward.
    """
    group_rewards = np.asarray(group_rewards, dtype=float)
    m = group_rewards.size
    if m > 5:
        raise ValueError("simplex oracle limited to m <= 5")
    best = math.inf
    for q in _simplex_grid(m, resolution):
        best = min(best, float(q @ group_rewards))
    if rng is not None and n_dirichlet > 0:
        draws = rng.dirichlet(np.ones(m), size=n_dirichlet)
        best = min(best, float((draws @ group_rewards).min()))
    return best


def dr_bellman_apply(mdp: TabularMdp, q_table: np.ndarray) -> np.ndarray:
    """One application of the robust backup T (shared transitions only)."""
    if mdp.per_group_transitions:
        raise ValueError(
            "per-group transitions supplied; use approx_bellman_apply for the joint-min operator"
        )
    q_table = np.asarray(q_table, dtype=float)
    greedy_values = q_table.max(axis=1)
    continuation = mdp.gamma * (mdp.transitions @ greedy_values)
    return mdp.rewards.min(axis=0) + continuation


def approx_bellman_apply(mdp: TabularMdp, q_table: np.ndarray) -> np.ndarray:
    """One application of the joint-min upper-bound operator U."""
    q_table = np.asarray(q_table, dtype=float)
    greedy_values = q_table.max(axis=1)
    if mdp.per_group_transitions:
        continuation = mdp.gamma * (mdp.transitions @ greedy_values)
    else:
        continuation = mdp.gamma * (mdp.transitions @ greedy_values)[None, :, :]
    return (mdp.rewards + continuation).min(axis=0)


def lower_bound_apply(mdp: TabularMdp, q_table: np.ndarray) -> np.ndarray:
    """Backup taking separate minima over reward and continuation terms.

    This is the robust operator for per-group transition families; U
    dominates it elementwise.
    """
    q_table = np.asarray(q_table, dtype=float)
    greedy_values = q_table.max(axis=1)
    if mdp.per_group_transitions:
        continuation = (mdp.gamma * (mdp.transitions @ greedy_values)).min(axis=0)
    else:
        continuation = mdp.gamma * (mdp.transitions @ greedy_values)
    return mdp.rewards.min(axis=0) + continuation


def default_max_iters(mdp: TabularMdp, tolerance: float) -> int:
    """Standard value-iteration iteration bound with a safety margin."""
    max_abs_reward = float(np.abs(mdp.rewards).max())
    if max_abs_reward == 0.0:
        return 16
    bound = math.log(tolerance * (1.0 - mdp.gamma) / max_abs_reward) / math.log(mdp.gamma)
    return int(math.ceil(bound)) + 16


@dataclass(frozen=True)
class ValueIterationResult:
    q_table: np.ndarray
    residuals: tuple[float, ...]
    iterations: int

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else 0.0


def dr_value_iteration(
    mdp: TabularMdp,
    tolerance: float = 1e-10,
    max_iters: int | None = None,
) -> ValueIterationResult:
    """Iterate the robust backup to its fixed point.

    Uses T for shared transitions and U for per-group transitions.
    Raises if max_iters is exhausted, reporting the last residual.
    """
    if max_iters is None:
        max_iters = default_max_iters(mdp, tolerance)
    backup = approx_bellman_apply if mdp.per_group_transitions else dr_bellman_apply
    q_table = np.zeros((mdp.n_states, mdp.n_actions))
    residuals: list[float] = []
    for iteration in range(1, max_iters + 1):
        updated = backup(mdp, q_table)
        residual = float(np.abs(updated - q_table).max())
        residuals.append(residual)
        q_table = updated
        if residual < tolerance:
            return ValueIterationResult(
                q_table=q_table, residuals=tuple(residuals), iterations=iteration
            )
    raise RuntimeError(
        f"value iteration did not converge in {max_iters} iterations; "
        f"last residual {residuals[-1]:.3e}"
    )


def greedy_policy(q_table: np.ndarray) -> np.ndarray:
    """Greedy action per state; ties go to the smaller action index."""
    return np.asarray(np.argmax(q_table, axis=1), dtype=int)


def mdp_from_json(text: str) -> TabularMdp:
    doc = json.loads(text)
    return TabularMdp(
        rewards=np.asarray(doc["rewards"], dtype=float),
        transitions=np.asarray(doc["transitions"], dtype=float),
        gamma=float(doc["gamma"]),
    )


def mdp_to_json(mdp: TabularMdp) -> str:
    return json.dumps(
        {
            "rewards": mdp.rewards.tolist(),
            "transitions": mdp.transitions.tolist(),
            "gamma": mdp.gamma,
        }
    )
