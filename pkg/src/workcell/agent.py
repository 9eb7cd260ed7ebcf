"""Tabular Q-learning with a two-phase bootstrap.

Phase 1 trains on the task reward alone until the greedy policy solves the
tower task. Phase 2 warm-starts from that table and adds the human reward
stream, so the total per-step reward is R = R_task + R_human. The human
term for an action is whatever signal the reward source delivers for that
action's execution window, zero when nothing arrives.

Action selection is epsilon-greedy over the valid actions of the current
state; argmax ties break on lexicographic action order so runs are
reproducible under a fixed seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from .world import Domain, GroundAction, RewardConfig, WorldState, encode


@dataclass
class LearnConfig:
    alpha: float = 0.1
    gamma: float = 0.95
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay: float = 0.995  # per-episode multiplicative
    max_steps: int = 40
    episodes: int = 3000
    # Fraction of episodes that begin from a random reachable state instead
    # of the all-ontable start; spreads value estimates across the space.
    exploring_start_prob: float = 0.5
    # Weight on the human reward term when composing R = R_task + R_human.
    # Task rewards are O(100); the raw human value is in [-1, 1], so it is
    # amplified to shift action preferences within a useful episode budget.
    human_reward_scale: float = 3.0

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must be in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must be in [0, 1)")


@dataclass
class RewardSignal:
    """One human-derived feedback value, bounded to [-1, 1] before weighting."""

    value: float
    action_index: int
    source: str = "human"

    def to_dict(self) -> dict:
        return {
            "type": "RewardSignal",
            "value": self.value,
            "action_index": self.action_index,
            "source": self.source,
        }


class QTable:
    """Map from (state key, action) to value estimate; unseen pairs are 0."""

    def __init__(self) -> None:
        self._q: dict[tuple[str, GroundAction], float] = {}

    def get(self, state_key: str, action: GroundAction) -> float:
        return self._q.get((state_key, action), 0.0)

    def set(self, state_key: str, action: GroundAction, value: float) -> None:
        self._q[(state_key, action)] = value

    def best(
        self, state_key: str, actions: tuple[GroundAction, ...]
    ) -> tuple[GroundAction, float]:
        """Greedy action and value; ties go to the lexicographically first."""
        best_a = actions[0]
        best_v = self.get(state_key, best_a)
        for a in actions[1:]:
            v = self.get(state_key, a)
            if v > best_v:
                best_a, best_v = a, v
        return best_a, best_v

    def max_value(self, state_key: str, actions: tuple[GroundAction, ...]) -> float:
        return self.best(state_key, actions)[1]

    def __len__(self) -> int:
        return len(self._q)

    def values(self):
        return self._q.values()

    def copy(self) -> "QTable":
        out = QTable()
        out._q = dict(self._q)
        return out

    def save(self, path: str) -> None:
        nested: dict[str, dict[str, float]] = {}
        for (key, action), value in self._q.items():
            nested.setdefault(key, {})[str(action)] = value
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(nested, fh, sort_keys=True)

    @staticmethod
    def load(path: str) -> "QTable":
        with open(path, encoding="utf-8") as fh:
            nested = json.load(fh)
        out = QTable()
        for key, entries in nested.items():
            for action_str, value in entries.items():
                out._q[(key, GroundAction.parse(action_str))] = value
        return out


def select_action(
    q: QTable,
    domain: Domain,
    state: WorldState,
    epsilon: float,
    rng: random.Random,
) -> GroundAction:
    actions = domain.valid_actions(state)
    if not actions:
        raise ValueError("no valid actions in state")
    if epsilon > 0 and rng.random() < epsilon:
        return actions[rng.randrange(len(actions))]
    return q.best(encode(state), actions)[0]


def q_update(
    q: QTable,
    domain: Domain,
    state: WorldState,
    action: GroundAction,
    reward: float,
    next_state: WorldState,
    cfg: LearnConfig,
) -> None:
    """One-step Q-learning backup; terminal next states bootstrap from 0."""
    key = encode(state)
    if domain.is_goal(next_state):
        target = reward
    else:
        next_actions = domain.valid_actions(next_state)
        target = reward + cfg.gamma * q.max_value(encode(next_state), next_actions)
    old = q.get(key, action)
    q.set(key, action, old + cfg.alpha * (target - old))


def greedy_rollout(
    q: QTable,
    domain: Domain,
    start: WorldState,
    reward_cfg: RewardConfig,
    max_steps: int = 40,
) -> tuple[list[GroundAction], bool]:
    """Follow the greedy policy from ``start``; returns (actions, reached_goal)."""
    state = start
    actions: list[GroundAction] = []
    for _ in range(max_steps):
        if domain.is_goal(state):
            return actions, True
        valid = domain.valid_actions(state)
        action = q.best(encode(state), valid)[0]
        state, _ = domain.apply(state, action, reward_cfg)
        actions.append(action)
    return actions, domain.is_goal(state)


@dataclass
class EpisodeStats:
    """Per-episode trace record.

    ``steps`` is the length of the episode the current policy produces
    (greedy evaluation after the training episode); the ``total_*`` sums are
    the training episode's accumulated rewards, with total_R = total_RT +
    total_RH by construction.
    """

    episode: int
    steps: int
    total_R: float
    total_RT: float
    total_RH: float
    behavior_steps: int = 0

    def to_line(self) -> str:
        return json.dumps(
            {
                "episode": self.episode,
                "steps": self.steps,
                "total_R": self.total_R,
                "total_RT": self.total_RT,
                "total_RH": self.total_RH,
            },
            sort_keys=True,
        )


@dataclass
class TrainResult:
    qtable: QTable
    episodes: list[EpisodeStats]
    greedy_lengths: list[int]
    greedy_rollouts: list[tuple[str, ...]]
    converged_episode: Optional[int]
    converged: bool
    aborted: bool = False

    def write_trace(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for ep in self.episodes:
                fh.write(ep.to_line() + "\n")


class RewardSource(Protocol):
    """Delivers the human reward attributed to one executed action."""

    closed: bool

    def reward_for(self, events: list, window_s: float) -> float: ...


class NullRewardSource:
    """Always-zero human feedback; phase 2 degenerates to phase 1."""

    closed = False

    def reward_for(self, events: list, window_s: float) -> float:
        return 0.0


CONVERGENCE_STREAK = 50
OPTIMAL_LENGTH_FROM_START = 5


def first_convergence_episode(greedy_lengths: list[int]) -> Optional[int]:
    """First episode opening a run of 50 consecutive length-5 greedy evals."""
    run = 0
    for idx, length in enumerate(greedy_lengths):
        run = run + 1 if length == OPTIMAL_LENGTH_FROM_START else 0
        if run == CONVERGENCE_STREAK:
            return idx - CONVERGENCE_STREAK + 2  # episodes are 1-based
    return None


def _run_training(
    domain: Domain,
    cfg: LearnConfig,
    reward_cfg: RewardConfig,
    rng: random.Random,
    q: QTable,
    reward_source: RewardSource | None,
    epsilon_start: float,
    event_window_s: float,
) -> TrainResult:
    start = WorldState.initial(domain.blocks)
    epsilon = epsilon_start
    episodes: list[EpisodeStats] = []
    greedy_lengths: list[int] = []
    greedy_rollouts: list[tuple[str, ...]] = []
    aborted = False
    for episode in range(1, cfg.episodes + 1):
        if reward_source is not None and reward_source.closed:
            aborted = True
            break
        if cfg.exploring_start_prob > 0 and rng.random() < cfg.exploring_start_prob:
            state = domain.random_reachable(rng)
        else:
            state = start
        total_rt = 0.0
        total_rh = 0.0
        steps = 0
        for _ in range(cfg.max_steps):
            if domain.is_goal(state):
                break
            action = select_action(q, domain, state, epsilon, rng)
            next_state, rt = domain.apply(state, action, reward_cfg)
            rh = 0.0
            if reward_source is not None:
                events = _action_events(action, next_state, domain)
                rh = (
                    reward_source.reward_for(events, event_window_s)
                    * cfg.human_reward_scale
                )
            r = rt + rh
            q_update(q, domain, state, action, r, next_state, cfg)
            total_rt += rt
            total_rh += rh
            state = next_state
            steps += 1
        rollout, reached = greedy_rollout(q, domain, start, reward_cfg, cfg.max_steps)
        length = len(rollout) if reached else cfg.max_steps
        greedy_lengths.append(length)
        greedy_rollouts.append(tuple(str(a) for a in rollout))
        episodes.append(
            EpisodeStats(episode, length, total_rt + total_rh, total_rt, total_rh, steps)
        )
        epsilon = max(cfg.epsilon_end, epsilon * cfg.epsilon_decay)
    converged_episode = first_convergence_episode(greedy_lengths)
    return TrainResult(
        qtable=q,
        episodes=episodes,
        greedy_lengths=greedy_lengths,
        greedy_rollouts=greedy_rollouts,
        converged_episode=converged_episode,
        converged=converged_episode is not None,
        aborted=aborted,
    )


def _action_events(
    action: GroundAction, next_state: WorldState, domain: Domain
) -> list[dict]:
    """Workspace events an executed action would emit, for the human model."""
    events: list[dict] = []
    if action.kind == "pickup":
        events.append({"kind": "robot_grasped", "block": action.params[0]})
    events.append({"kind": "action_done", "action": str(action)})
    if domain.is_goal(next_state):
        events.append({"kind": "goal_completed"})
    return events


def train_phase1(
    domain: Domain,
    cfg: LearnConfig,
    reward_cfg: RewardConfig,
    rng: random.Random,
) -> TrainResult:
    """Learn the tower task from the task reward alone."""
    return _run_training(
        domain,
        cfg,
        reward_cfg,
        rng,
        QTable(),
        reward_source=None,
        epsilon_start=cfg.epsilon_start,
        event_window_s=0.0,
    )


PHASE2_EPSILON_START = 0.3


def bootstrap_phase2(
    q0: QTable,
    reward_source: RewardSource,
    cfg: LearnConfig,
    reward_cfg: RewardConfig,
    domain: Domain,
    rng: random.Random,
    event_window_s: float = 1.5,
    epsilon_start: float = PHASE2_EPSILON_START,
) -> TrainResult:
    """Refine a phase-1 table against the live human reward stream.

    Exploration restarts at a reduced epsilon so the bootstrapped policy is
    revised rather than forgotten. Training aborts cleanly at an episode
    boundary if the reward source closes.
    """
    return _run_training(
        domain,
        cfg,
        reward_cfg,
        rng,
        q0.copy(),
        reward_source=reward_source,
        epsilon_start=epsilon_start,
        event_window_s=event_window_s,
    )
