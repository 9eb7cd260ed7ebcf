"""Shortest-plan search over the block domain.

Plain breadth-first search on canonical state keys; the state space for six
blocks is small enough that no heuristic is needed. Actions are expanded in
lexicographic order so the returned plan is deterministic. Used both for
online replanning when a human claims a block and as the optimality oracle
for the learning tests.
"""

from __future__ import annotations

import math
from collections import deque
from typing import Optional

from .world import Domain, GroundAction, RewardConfig, WorldState, encode

_REWARDS = RewardConfig()  # transitions only; rewards ignored here


def bfs_plan(
    domain: Domain,
    state: WorldState,
    excluded: frozenset[str] | set[str] = frozenset(),
) -> Optional[list[GroundAction]]:
    """Minimum-length action sequence reaching the goal, or ``None``.

    No action in the returned plan mentions a block in ``excluded``.
    """
    excluded = frozenset(excluded)
    if domain.is_goal(state):
        return []
    start_key = encode(state)
    frontier = deque([state])
    parents: dict[str, tuple[str, GroundAction]] = {}
    seen = {start_key}
    while frontier:
        current = frontier.popleft()
        current_key = encode(current)
        for action in domain.valid_actions(current):
            if excluded and not excluded.isdisjoint(action.blocks):
                continue
            nxt, _ = domain.apply(current, action, _REWARDS)
            key = encode(nxt)
            if key in seen:
                continue
            seen.add(key)
            parents[key] = (current_key, action)
            if domain.is_goal(nxt):
                plan: list[GroundAction] = []
                while key != start_key:
                    key, act = parents[key]
                    plan.append(act)
                plan.reverse()
                return plan
            frontier.append(nxt)
    return None


def optimal_length(
    domain: Domain,
    state: WorldState,
    excluded: frozenset[str] | set[str] = frozenset(),
) -> float:
    """Length of the shortest plan; ``inf`` when the goal is unreachable."""
    plan = bfs_plan(domain, state, excluded)
    return math.inf if plan is None else len(plan)
