"""Simplified robotic sortation warehouse simulator.

Each of N destinations is an agent. At every step the joint action
reallocates the M available eject chutes (full per-step reallocation),
packages arrive per an induction count vector, and a destination with at
least one assigned chute sorts all of its arrivals (infinite chute
capacity); destinations without a chute send all arrivals to the
recirculation buffer. With carryover enabled, recirculated packages
re-arrive at the next step. Reward per agent is
-recirculated_i - action_penalty * requests_i.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

OBS_DIM = 5


@dataclass(frozen=True)
class EnvConfig:
    n_destinations: int = 20
    n_chutes: int = 10
    episode_steps: int = 10
    step_volume: int = 1200
    action_max: int = 1
    action_penalty: float = 0.0
    recirc_carryover: bool = True

    def __post_init__(self):
        if self.n_destinations < 1 or self.n_chutes < 1:
            raise ValueError("n_destinations and n_chutes must be positive")
        if self.episode_steps < 1:
            raise ValueError("episode_steps must be >= 1")
        if self.step_volume < 0 or self.action_max < 1 or self.action_penalty < 0:
            raise ValueError("invalid step_volume / action_max / action_penalty")


def appendix_b_config() -> EnvConfig:
    """Binary actions, no action penalty, 20 destinations, 10 chutes."""
    return EnvConfig()


def main_formulation_config() -> EnvConfig:
    """Up to 10 chutes per agent and the -2a action penalty."""
    return EnvConfig(action_max=10, action_penalty=2.0)


@dataclass(frozen=True)
class WarehouseState:
    t: int
    chutes_assigned: np.ndarray
    recirc_backlog: np.ndarray
    cum_recirc: int
    cum_sorted: int


@dataclass(frozen=True)
class StepOutcome:
    rewards: np.ndarray
    sorted: np.ndarray
    recirculated: np.ndarray
    next_state: WarehouseState
    arrivals: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class EpisodeMetrics:
    recirc_rate: float
    throughput: int
    recirc_amount: int


def reset(config: EnvConfig, rng: np.random.Generator | None = None) -> WarehouseState:
    n = config.n_destinations
    return WarehouseState(
        t=0,
        chutes_assigned=np.zeros(n, dtype=int),
        recirc_backlog=np.zeros(n, dtype=int),
        cum_recirc=0,
        cum_sorted=0,
    )


def step(
    state: WarehouseState,
    action: np.ndarray,
    induction: np.ndarray,
    config: EnvConfig,
) -> StepOutcome:
    """Advance one step under the given joint action and induction sample."""
    action = np.asarray(action, dtype=int)
    induction = np.asarray(induction, dtype=int)
    n = config.n_destinations
    if action.shape != (n,) or induction.shape != (n,):
        raise ValueError("action and induction must have one entry per destination")
    if np.any(action < 0) or np.any(action > config.action_max) or action.sum() > config.n_chutes:
        raise ValueError("infeasible joint action")

    arrivals = induction + (state.recirc_backlog if config.recirc_carryover else 0)
    chuted = action > 0
    sorted_counts = np.where(chuted, arrivals, 0)
    recirculated = arrivals - sorted_counts
    rewards = -recirculated.astype(float) - config.action_penalty * action

    next_state = WarehouseState(
        t=state.t + 1,
        chutes_assigned=action.copy(),
        recirc_backlog=recirculated.copy() if config.recirc_carryover else np.zeros(n, dtype=int),
        cum_recirc=state.cum_recirc + int(recirculated.sum()),
        cum_sorted=state.cum_sorted + int(sorted_counts.sum()),
    )
    return StepOutcome(
        rewards=rewards,
        sorted=sorted_counts,
        recirculated=recirculated,
        next_state=next_state,
        arrivals=arrivals,
    )


def observe(state: WarehouseState, agent_index: int, config: EnvConfig) -> np.ndarray:
    """Fixed 5-feature local observation for agent_index (1-based).

    Features, all scaled to [0, 1]:
      0. normalized agent index
      1. chutes still assignable / M
      2. chutes assigned to this agent / A_max
      3. normalized step index t / T
      4. this agent's recirculation backlog / V, clipped at 1
    """
    if not 1 <= agent_index <= config.n_destinations:
        raise ValueError("agent_index out of range")
    i = agent_index - 1
    n = config.n_destinations
    available = config.n_chutes - int(state.chutes_assigned.sum())
    backlog_scale = max(config.step_volume, 1)
    return np.array(
        [
            i / (n - 1) if n > 1 else 0.0,
            available / config.n_chutes,
            state.chutes_assigned[i] / config.action_max,
            state.t / config.episode_steps,
            min(state.recirc_backlog[i] / backlog_scale, 1.0),
        ]
    )


def observe_all(state: WarehouseState, config: EnvConfig) -> np.ndarray:
    """(N, OBS_DIM) matrix of all agents' observations."""
    n = config.n_destinations
    available = config.n_chutes - int(state.chutes_assigned.sum())
    backlog_scale = max(config.step_volume, 1)
    obs = np.empty((n, OBS_DIM))
    obs[:, 0] = np.arange(n) / (n - 1) if n > 1 else 0.0
    obs[:, 1] = available / config.n_chutes
    obs[:, 2] = state.chutes_assigned / config.action_max
    obs[:, 3] = state.t / config.episode_steps
    obs[:, 4] = np.minimum(state.recirc_backlog / backlog_scale, 1.0)
    return obs


def episode_metrics(outcomes: list[StepOutcome], config: EnvConfig) -> EpisodeMetrics:
    """Recirculation rate, throughput, and recirculation amount for one episode.

    The rate denominator counts package-passes: induction plus carryover
    re-arrivals, so each recirculation event is counted once per pass.
    """
    if not outcomes:
        raise ValueError("episode_metrics requires at least one step outcome")
    total_sorted = int(sum(int(o.sorted.sum()) for o in outcomes))
    total_recirc = int(sum(int(o.recirculated.sum()) for o in outcomes))
    total_arrivals = total_sorted + total_recirc
    rate = total_recirc / total_arrivals if total_arrivals > 0 else 0.0
    return EpisodeMetrics(
        recirc_rate=rate, throughput=total_sorted, recirc_amount=total_recirc
    )


def trace_record(t: int, action, induction, outcome: StepOutcome) -> dict:
    """One JSON-lines trajectory record."""
    return {
        "t": t,
        "action": [int(a) for a in action],
        "induction": [int(x) for x in induction],
        "sorted": [int(x) for x in outcome.sorted],
        "recirculated": [int(x) for x in outcome.recirculated],
        "rewards": [float(r) for r in outcome.rewards],
    }


def clone_state(state: WarehouseState) -> WarehouseState:
    """Independent copy safe to advance without touching the original."""
    return replace(
        state,
        chutes_assigned=state.chutes_assigned.copy(),
        recirc_backlog=state.recirc_backlog.copy(),
    )
