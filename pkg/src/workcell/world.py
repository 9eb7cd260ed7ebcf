"""BlocksWorld domain: factored state, action grounding, transitions, rewards.

Six blocks sit on a 1 m table. The stored state is the set of ground
``on(x,y)`` and ``ontable(x)`` facts (30 + 6 possible for six blocks) plus a
single ``tower3_formed`` flag; ``clear``, ``held`` and ``hand_empty`` are
derived, never stored. The goal predicate flips when a ``form3tower`` check
action is run on a completed three-block tower.

Rewards: every action costs ``step_penalty``; achieving the goal adds
``goal_reward``; any action that reduces the number of ``ontable`` facts
(the table is emptying, towers are growing) adds ``stacking_bonus``. The
bonus is evaluated on the per-action ontable delta, so it lands on the
pickup that lifts a block off the table.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Optional

DEFAULT_BLOCKS = ("blue", "green", "orange", "purple", "red", "yellow")

ACTION_KINDS = ("form3tower", "pickup", "putdown", "stack")


class PreconditionError(ValueError):
    """An action was applied in a state where a precondition literal fails."""

    def __init__(self, action: "GroundAction", literal: str) -> None:
        super().__init__(f"{action} requires {literal}")
        self.action = action
        self.literal = literal


class InvalidStateError(ValueError):
    """A state violates the domain invariants."""


@dataclass(frozen=True, order=True)
class GroundAction:
    """A fully instantiated action, ordered lexicographically for tie-breaks."""

    kind: str
    params: tuple[str, ...]

    def __str__(self) -> str:
        return f"{self.kind}({','.join(self.params)})"

    @property
    def blocks(self) -> tuple[str, ...]:
        return self.params

    @staticmethod
    def parse(text: str) -> "GroundAction":
        kind, _, rest = text.partition("(")
        params = tuple(p for p in rest.rstrip(")").split(",") if p)
        if kind not in ACTION_KINDS:
            raise ValueError(f"unknown action kind {kind!r}")
        return GroundAction(kind, params)


@dataclass(frozen=True)
class WorldState:
    """Immutable stored-predicate set."""

    on: frozenset[tuple[str, str]]
    ontable: frozenset[str]
    tower3_formed: bool = False

    @staticmethod
    def initial(blocks: Iterable[str] = DEFAULT_BLOCKS) -> "WorldState":
        return WorldState(on=frozenset(), ontable=frozenset(blocks))


@dataclass(frozen=True)
class DerivedFacts:
    clear: frozenset[str]
    held: Optional[str]
    hand_empty: bool


@dataclass
class RewardConfig:
    step_penalty: float = -1.0
    goal_reward: float = 100.0
    stacking_bonus: float = 5.0

    def __post_init__(self) -> None:
        if self.step_penalty >= 0:
            raise ValueError("step_penalty must be negative")
        if self.goal_reward <= 0:
            raise ValueError("goal_reward must be positive")


def encode(state: WorldState) -> str:
    """Canonical, injective string key for a state (sorted predicate list)."""
    parts = [f"on({x},{y})" for x, y in sorted(state.on)]
    parts += [f"ontable({b})" for b in sorted(state.ontable)]
    if state.tower3_formed:
        parts.append("tower3")
    return "|".join(parts)


def decode(key: str) -> WorldState:
    """Inverse of :func:`encode`."""
    on = set()
    ontable = set()
    tower3 = False
    for part in key.split("|"):
        if not part:
            continue
        if part == "tower3":
            tower3 = True
        elif part.startswith("on("):
            x, y = part[3:-1].split(",")
            on.add((x, y))
        elif part.startswith("ontable("):
            ontable.add(part[8:-1])
        else:
            raise ValueError(f"unparseable predicate {part!r}")
    return WorldState(frozenset(on), frozenset(ontable), tower3)


class Domain:
    """Grounded BlocksWorld over a fixed block set.

    Grounding over six blocks yields 6 pickup + 6 putdown + 30 stack
    manipulation actions and 120 form3tower goal checks. Transition results
    and valid-action sets are memoized per state key; all methods are pure
    with respect to the passed state.
    """

    def __init__(self, blocks: Iterable[str] = DEFAULT_BLOCKS) -> None:
        self.blocks = tuple(sorted(blocks))
        if len(set(self.blocks)) != len(self.blocks):
            raise ValueError("duplicate block ids")
        self.actions = self._ground()
        self._valid_cache: dict[str, tuple[GroundAction, ...]] = {}

    def _ground(self) -> tuple[GroundAction, ...]:
        acts: list[GroundAction] = []
        for x in self.blocks:
            acts.append(GroundAction("pickup", (x,)))
            acts.append(GroundAction("putdown", (x,)))
            for y in self.blocks:
                if x != y:
                    acts.append(GroundAction("stack", (x, y)))
        for b in self.blocks:
            for m in self.blocks:
                for t in self.blocks:
                    if len({b, m, t}) == 3:
                        acts.append(GroundAction("form3tower", (b, m, t)))
        return tuple(sorted(acts))

    # -- state queries ---------------------------------------------------

    def derived(self, state: WorldState) -> DerivedFacts:
        supported = {x for x, _ in state.on} | set(state.ontable)
        held = None
        for b in self.blocks:
            if b not in supported:
                held = b
                break
        covered = {y for _, y in state.on}
        clear = frozenset(
            b for b in self.blocks if b not in covered and b != held
        )
        return DerivedFacts(clear=clear, held=held, hand_empty=held is None)

    def validate(self, state: WorldState) -> None:
        """Raise :class:`InvalidStateError` on any broken invariant."""
        firsts = [x for x, _ in state.on]
        if len(firsts) != len(set(firsts)):
            raise InvalidStateError("a block rests on two supports")
        for x, _ in state.on:
            if x in state.ontable:
                raise InvalidStateError(f"{x} both on a block and on the table")
        unknown = ({b for pair in state.on for b in pair} | set(state.ontable)) - set(
            self.blocks
        )
        if unknown:
            raise InvalidStateError(f"unknown blocks {sorted(unknown)}")
        seconds = [y for _, y in state.on]
        if len(seconds) != len(set(seconds)):
            raise InvalidStateError("a block supports two blocks")
        supported = {x for x, _ in state.on} | set(state.ontable)
        held = [b for b in self.blocks if b not in supported]
        if len(held) > 1:
            raise InvalidStateError(f"more than one held block: {held}")
        # acyclicity of the on-relation
        above = dict(state.on)
        for start in above:
            seen = set()
            cur = start
            while cur in above:
                if cur in seen:
                    raise InvalidStateError("cycle in on-relation")
                seen.add(cur)
                cur = above[cur]

    def valid_actions(self, state: WorldState) -> tuple[GroundAction, ...]:
        key = encode(state)
        cached = self._valid_cache.get(key)
        if cached is not None:
            return cached
        d = self.derived(state)
        on = state.on
        acts: list[GroundAction] = []
        for a in self.actions:
            k = a.kind
            if k == "pickup":
                (x,) = a.params
                ok = d.hand_empty and x in d.clear
            elif k == "putdown":
                ok = d.held == a.params[0]
            elif k == "stack":
                x, y = a.params
                ok = d.held == x and y in d.clear
            else:  # form3tower
                b, m, t = a.params
                ok = (
                    d.hand_empty
                    and b in state.ontable
                    and (m, b) in on
                    and (t, m) in on
                    and t in d.clear
                )
            if ok:
                acts.append(a)
        result = tuple(acts)
        self._valid_cache[key] = result
        return result

    # -- transitions -----------------------------------------------------

    def _check(self, cond: bool, action: GroundAction, literal: str) -> None:
        if not cond:
            raise PreconditionError(action, literal)

    def apply(
        self,
        state: WorldState,
        action: GroundAction,
        cfg: RewardConfig,
    ) -> tuple[WorldState, float]:
        """Apply ``action`` to ``state``, returning the next state and task reward."""
        d = self.derived(state)
        on = set(state.on)
        ontable = set(state.ontable)
        tower3 = state.tower3_formed
        k = action.kind
        if k == "pickup":
            (x,) = action.params
            self._check(d.hand_empty, action, "hand_empty")
            self._check(x in d.clear, action, f"clear({x})")
            ontable.discard(x)
            on = {(a, b) for a, b in on if a != x}
        elif k == "putdown":
            (x,) = action.params
            self._check(d.held == x, action, f"held({x})")
            ontable.add(x)
        elif k == "stack":
            x, y = action.params
            self._check(d.held == x, action, f"held({x})")
            self._check(y in d.clear, action, f"clear({y})")
            on.add((x, y))
        elif k == "form3tower":
            b, m, t = action.params
            self._check(d.hand_empty, action, "hand_empty")
            self._check(b in ontable, action, f"ontable({b})")
            self._check((m, b) in on, action, f"on({m},{b})")
            self._check((t, m) in on, action, f"on({t},{m})")
            self._check(t in d.clear, action, f"clear({t})")
            tower3 = True
        else:
            raise ValueError(f"unknown action kind {k!r}")
        nxt = WorldState(frozenset(on), frozenset(ontable), tower3)
        reward = cfg.step_penalty
        if tower3 and not state.tower3_formed:
            reward += cfg.goal_reward
        if len(nxt.ontable) < len(state.ontable):
            reward += cfg.stacking_bonus
        return nxt, reward

    def is_goal(self, state: WorldState) -> bool:
        return state.tower3_formed

    def random_reachable(
        self,
        rng: random.Random,
        max_depth: int = 8,
        start: Optional[WorldState] = None,
    ) -> WorldState:
        """Random-walk from the start state; used for fuzzing and exploring starts."""
        state = start if start is not None else WorldState.initial(self.blocks)
        for _ in range(rng.randrange(max_depth + 1)):
            acts = self.valid_actions(state)
            if not acts:
                break
            action = rng.choice(acts)
            if action.kind == "form3tower":
                continue  # keep walks inside the non-terminal region
            state, _ = self.apply(state, action, _WALK_REWARDS)
        return state


_WALK_REWARDS = RewardConfig()
