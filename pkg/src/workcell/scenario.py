"""Scenario and script files: the JSON inputs that configure a run."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .affect import AffectWeights, PreferenceProfile
from .world import DEFAULT_BLOCKS, Domain, RewardConfig, WorldState


class ScenarioError(ValueError):
    """Scenario file failed validation; the message names the offending field."""


@dataclass
class Scenario:
    blocks: tuple[str, ...] = DEFAULT_BLOCKS
    initial: WorldState = field(default_factory=WorldState.initial)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    profile: PreferenceProfile = field(default_factory=PreferenceProfile)
    weights: AffectWeights = field(default_factory=AffectWeights)

    def domain(self) -> Domain:
        return Domain(self.blocks)


def _require(cond: bool, fieldname: str, detail: str) -> None:
    if not cond:
        raise ScenarioError(f"scenario field {fieldname!r}: {detail}")


def scenario_from_dict(data: dict) -> Scenario:
    blocks = tuple(data.get("blocks", DEFAULT_BLOCKS))
    _require(len(blocks) == len(set(blocks)), "blocks", "duplicate ids")
    _require(len(blocks) >= 3, "blocks", "need at least 3 blocks for a tower")

    init = data.get("initial", {})
    ontable = init.get("ontable", list(blocks))
    on = [tuple(pair) for pair in init.get("on", [])]
    for b in ontable:
        _require(b in blocks, "initial.ontable", f"unknown block {b!r}")
    for pair in on:
        _require(len(pair) == 2, "initial.on", f"pair {pair!r} is not binary")
        for b in pair:
            _require(b in blocks, "initial.on", f"unknown block {b!r}")
    state = WorldState(frozenset(on), frozenset(ontable), bool(init.get("tower3_formed", False)))

    rewards_data = data.get("rewards", {})
    try:
        rewards = RewardConfig(
            step_penalty=float(rewards_data.get("step_penalty", -1.0)),
            goal_reward=float(rewards_data.get("goal_reward", 100.0)),
            stacking_bonus=float(rewards_data.get("stacking_bonus", 5.0)),
        )
    except ValueError as exc:
        raise ScenarioError(f"scenario field 'rewards': {exc}") from exc

    affect_data = data.get("affect", {})
    preferred = data.get("preferred_block", affect_data.get("preferred_block"))
    if preferred is not None:
        _require(preferred in blocks, "preferred_block", f"unknown block {preferred!r}")
    try:
        profile = PreferenceProfile(
            preferred_block=preferred,
            stress_jump=float(affect_data.get("stress_jump", 0.6)),
            excitement_jump=float(affect_data.get("excitement_jump", 0.5)),
            decay_rate=float(affect_data.get("decay_rate", 0.5)),
        )
        weights = AffectWeights(
            w_excitement=float(affect_data.get("w_excitement", 1.0)),
            w_stress=float(affect_data.get("w_stress", 1.0)),
        )
    except ValueError as exc:
        raise ScenarioError(f"scenario field 'affect': {exc}") from exc

    scenario = Scenario(blocks, state, rewards, profile, weights)
    try:
        scenario.domain().validate(state)
    except Exception as exc:
        raise ScenarioError(f"scenario field 'initial': {exc}") from exc
    return scenario


def load_scenario(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("scenario root must be a JSON object")
    return scenario_from_dict(data)


SCRIPT_KINDS = ("claim", "release", "control", "blink", "affect_override")


@dataclass(frozen=True)
class ScriptEvent:
    at_ms: int
    kind: str
    data: dict


def load_script(path: str) -> list[ScriptEvent]:
    """Timed claims/blinks/overrides substituting for the live console."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    events = data.get("events", []) if isinstance(data, dict) else data
    out: list[ScriptEvent] = []
    for i, ev in enumerate(events):
        kind = ev.get("kind")
        if kind not in SCRIPT_KINDS:
            raise ScenarioError(f"script event {i}: unknown kind {kind!r}")
        if "at_ms" not in ev:
            raise ScenarioError(f"script event {i}: missing at_ms")
        data_fields = {k: v for k, v in ev.items() if k not in ("at_ms", "kind")}
        out.append(ScriptEvent(int(ev["at_ms"]), kind, data_fields))
    out.sort(key=lambda e: (e.at_ms,))
    return out
