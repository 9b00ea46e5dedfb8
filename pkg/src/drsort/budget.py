"""Exact solver for the budgeted joint-action integer program.

The joint action maximizes sum_i values[i][a_i] subject to
sum_i a_i <= budget and 0 <= a_i <= A_max. This is a multiple-choice
knapsack with unit weights per action level, solved exactly by dynamic
programming over (agent, remaining budget) in O(N * budget * A_max).

Tie-breaking is a frozen contract: among optimal joint actions, the
lexicographically smallest vector (smaller action first, then smaller
agent index) is returned. The objective is accumulated right-to-left
(values[i] + rest), which is also the order the brute-force oracle uses,
so DP and enumeration agree on exact floats.
"""

from __future__ import annotations

import itertools

import numpy as np

BRUTE_FORCE_LIMIT = 10_000_000


def _check_table(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError("action-value table must be 2-D (agents x actions)")
    if not np.all(np.isfinite(values)):
        raise ValueError("action-value table contains non-finite entries")
    return values


def _suffix_table(values: np.ndarray, budget: int) -> np.ndarray:
    """dp[i][b] = best achievable value for agents i..N-1 with budget b."""
    n_agents, n_actions = values.shape
    dp = np.zeros((n_agents + 1, budget + 1))
    for i in range(n_agents - 1, -1, -1):
        row = np.full(budget + 1, -np.inf)
        for a in range(min(n_actions - 1, budget) + 1):
            cand = values[i, a] + dp[i + 1, : budget + 1 - a]
            row[a:] = np.maximum(row[a:], cand)
        dp[i] = row
    return dp


def _binary_argmax(values: np.ndarray, budget: int) -> np.ndarray:
    """Fast path for two-level actions: pick the largest positive gains.

    Equivalent to the DP with its tie-break: on equal gains the chute
    goes to the larger agent index (the lexicographically smaller joint
    action), and zero-gain agents stay at action 0.
    """
    n_agents = values.shape[0]
    gains = values[:, 1] - values[:, 0]
    order = np.lexsort((-np.arange(n_agents), -gains))
    k = min(budget, int(np.count_nonzero(gains > 0.0)))
    action = np.zeros(n_agents, dtype=int)
    action[order[:k]] = 1
    return action


def solve_budget_argmax(values: np.ndarray, budget: int) -> np.ndarray:
    """Optimal feasible joint action for the given value table.

    Returns an integer vector of length N. budget=0 forces the all-zero
    action (always feasible).
    """
    values = _check_table(values)
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    n_agents, n_actions = values.shape
    if n_actions == 2:
        return _binary_argmax(values, budget)
    dp = _suffix_table(values, budget)
    action = np.zeros(n_agents, dtype=int)
    remaining = budget
    for i in range(n_agents):
        for a in range(min(n_actions - 1, remaining) + 1):
            if values[i, a] + dp[i + 1, remaining - a] == dp[i, remaining]:
                action[i] = a
                remaining -= a
                break
    return action


def max_joint_value(values: np.ndarray, budget: int) -> float:
    """Optimal objective value only (no reconstruction)."""
    values = _check_table(values)
    return float(_suffix_table(values, budget)[0, budget])


def max_joint_value_batch(tables: np.ndarray, budget: int) -> np.ndarray:
    """Vectorized optimal values for a (B, N, A+1) stack of tables.

    Optimizes the same objective as max_joint_value; the floating-point
    association may differ (training-loop bootstrap path, not the
    exactness-tested solver).
    """
    tables = np.asarray(tables, dtype=float)
    n_batch, n_agents, n_actions = tables.shape
    if n_actions == 2:
        base = tables[:, :, 0].sum(axis=1)
        gains = np.maximum(tables[:, :, 1] - tables[:, :, 0], 0.0)
        if budget < n_agents:
            top = np.partition(gains, n_agents - budget, axis=1)[:, n_agents - budget:]
            return base + top.sum(axis=1)
        return base + gains.sum(axis=1)
    dp = np.zeros((n_batch, budget + 1))
    for i in range(n_agents - 1, -1, -1):
        row = np.full((n_batch, budget + 1), -np.inf)
        for a in range(min(n_actions - 1, budget) + 1):
            cand = tables[:, i, a][:, None] + dp[:, : budget + 1 - a]
            row[:, a:] = np.maximum(row[:, a:], cand)
        dp = row
    return dp[:, budget]


def joint_value(values: np.ndarray, action: np.ndarray) -> float:
    """Objective of one joint action, accumulated right-to-left."""
    values = np.asarray(values, dtype=float)
    total = 0.0
    for i in range(len(action) - 1, -1, -1):
        total = values[i, action[i]] + total
    return total


def brute_force_argmax(values: np.ndarray, budget: int) -> np.ndarray:
    """Exhaustive-enumeration oracle with the same tie-break as the DP."""
    values = _check_table(values)
    n_agents, n_actions = values.shape
    if n_actions**n_agents > BRUTE_FORCE_LIMIT:
        raise ValueError("instance too large for brute force")
    best_action = None
    best_value = -np.inf
    for action in itertools.product(range(min(n_actions - 1, budget) + 1), repeat=n_agents):
        if sum(action) > budget:
            continue
        value = joint_value(values, np.asarray(action))
        if value > best_value:
            best_value = value
            best_action = action
    return np.asarray(best_action, dtype=int)


_COUNT_CACHE: dict[tuple[int, int, int], np.ndarray] = {}


def count_feasible(n_agents: int, a_max: int, budget: int) -> np.ndarray:
    """counts[i][b] = number of feasible suffix assignments for agents i.. with budget b."""
    key = (n_agents, a_max, budget)
    cached = _COUNT_CACHE.get(key)
    if cached is not None:
        return cached
    counts = np.zeros((n_agents + 1, budget + 1), dtype=np.int64)
    counts[n_agents] = 1
    for i in range(n_agents - 1, -1, -1):
        for b in range(budget + 1):
            counts[i, b] = sum(counts[i + 1, b - a] for a in range(min(a_max, b) + 1))
    counts.setflags(write=False)
    _COUNT_CACHE[key] = counts
    return counts


def sample_feasible_uniform(
    n_agents: int, a_max: int, budget: int, rng: np.random.Generator
) -> np.ndarray:
    """Exact uniform draw over {a : sum a_i <= budget, 0 <= a_i <= a_max}.

    Sequential conditional sampling against the suffix-count table.
    """
    counts = count_feasible(n_agents, a_max, budget)
    action = np.zeros(n_agents, dtype=int)
    remaining = budget
    for i in range(n_agents):
        total = counts[i, remaining]
        pick = rng.integers(total)
        acc = 0
        for a in range(min(a_max, remaining) + 1):
            acc += counts[i + 1, remaining - a]
            if pick < acc:
                action[i] = a
                remaining -= a
                break
    return action
