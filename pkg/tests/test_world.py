from __future__ import annotations

import random

import pytest

from workcell.world import (
    DEFAULT_BLOCKS,
    Domain,
    GroundAction,
    InvalidStateError,
    PreconditionError,
    RewardConfig,
    WorldState,
    decode,
    encode,
)


def state(on=(), ontable=DEFAULT_BLOCKS, tower3=False) -> WorldState:
    return WorldState(frozenset(on), frozenset(ontable), tower3)


def test_grounding_counts(domain):
    kinds = {}
    for a in domain.actions:
        kinds[a.kind] = kinds.get(a.kind, 0) + 1
    assert kinds == {"pickup": 6, "putdown": 6, "stack": 30, "form3tower": 120}


def test_all_ontable_all_clear(domain):
    d = domain.derived(WorldState.initial())
    assert d.clear == frozenset(DEFAULT_BLOCKS)
    assert d.hand_empty and d.held is None


def test_derived_on_pair(domain):
    d = domain.derived(state(on=[("red", "blue")], ontable=[b for b in DEFAULT_BLOCKS if b != "red"]))
    assert "blue" not in d.clear
    assert "red" in d.clear


def test_derived_held(domain):
    d = domain.derived(state(ontable=[b for b in DEFAULT_BLOCKS if b != "red"]))
    assert d.held == "red"
    assert not d.hand_empty


def test_initial_valid_actions_are_the_six_pickups(domain):
    acts = domain.valid_actions(WorldState.initial())
    assert len(acts) == 6
    assert all(a.kind == "pickup" for a in acts)
    assert {a.params[0] for a in acts} == set(DEFAULT_BLOCKS)


def test_held_gives_putdown_plus_stacks(domain):
    s = state(ontable=[b for b in DEFAULT_BLOCKS if b != "red"])
    acts = domain.valid_actions(s)
    # putdown(red) plus stack(red, each of the 5 clear blocks)
    assert len(acts) == 6
    assert GroundAction("putdown", ("red",)) in acts
    assert sum(1 for a in acts if a.kind == "stack") == 5


def test_form3tower_valid_on_complete_tower(domain):
    s = state(
        on=[("red", "blue"), ("green", "red")],
        ontable=["blue", "orange", "purple", "yellow"],
    )
    assert GroundAction("form3tower", ("blue", "red", "green")) in domain.valid_actions(s)


def test_pickup_from_table_reward(domain):
    # step penalty -1 plus stacking bonus +5: the ontable count drops 6 -> 5
    cfg = RewardConfig()
    nxt, reward = domain.apply(WorldState.initial(), GroundAction("pickup", ("red",)), cfg)
    assert domain.derived(nxt).held == "red"
    assert reward == -1.0 + 5.0


def test_stack_reward_no_ontable_change(domain):
    cfg = RewardConfig()
    s = state(ontable=[b for b in DEFAULT_BLOCKS if b != "red"])  # red held
    nxt, reward = domain.apply(s, GroundAction("stack", ("red", "blue")), cfg)
    assert ("red", "blue") in nxt.on
    assert len(nxt.ontable) == len(s.ontable)
    assert reward == -1.0


def test_putdown_reward_never_bonused(domain):
    cfg = RewardConfig()
    s = state(ontable=[b for b in DEFAULT_BLOCKS if b != "red"])
    nxt, reward = domain.apply(s, GroundAction("putdown", ("red",)), cfg)
    assert "red" in nxt.ontable
    assert reward == -1.0


def test_form3tower_reward(domain):
    cfg = RewardConfig()
    s = state(
        on=[("red", "blue"), ("green", "red")],
        ontable=["blue", "orange", "purple", "yellow"],
    )
    nxt, reward = domain.apply(s, GroundAction("form3tower", ("blue", "red", "green")), cfg)
    assert nxt.tower3_formed
    assert reward == -1.0 + 100.0


def test_invalid_action_names_failed_literal(domain):
    cfg = RewardConfig()
    with pytest.raises(PreconditionError) as err:
        domain.apply(WorldState.initial(), GroundAction("putdown", ("red",)), cfg)
    assert "held(red)" in str(err.value)


def test_pickup_covered_block_rejected(domain):
    cfg = RewardConfig()
    s = state(on=[("red", "blue")], ontable=[b for b in DEFAULT_BLOCKS if b != "red"])
    with pytest.raises(PreconditionError) as err:
        domain.apply(s, GroundAction("pickup", ("blue",)), cfg)
    assert "clear(blue)" in str(err.value)


def test_encode_equal_sets_equal_keys():
    a = state(on=[("red", "blue"), ("green", "red")], ontable=["blue", "orange", "purple", "yellow"])
    b = state(on=[("green", "red"), ("red", "blue")], ontable=["yellow", "purple", "orange", "blue"])
    assert encode(a) == encode(b)


def test_encode_differs_on_one_fact():
    a = state(on=[("red", "blue")], ontable=[b for b in DEFAULT_BLOCKS if b != "red"])
    b = state(on=[("red", "green")], ontable=[x for x in DEFAULT_BLOCKS if x != "red"])
    assert encode(a) != encode(b)


def test_encode_decode_roundtrip_over_random_walks(domain):
    rng = random.Random(0)
    for _ in range(1000):
        s = domain.random_reachable(rng)
        assert decode(encode(s)) == s


def test_random_walk_fuzz_preserves_invariants(domain):
    cfg = RewardConfig()
    rng = random.Random(1)
    for _ in range(1000):
        s = domain.random_reachable(rng)
        domain.validate(s)
        for action in domain.valid_actions(s):
            nxt, _ = domain.apply(s, action, cfg)
            domain.validate(nxt)


def test_support_fact_accounting(domain):
    rng = random.Random(2)
    for _ in range(300):
        s = domain.random_reachable(rng)
        held = 0 if domain.derived(s).hand_empty else 1
        assert len(s.ontable) + len(s.on) + held == len(DEFAULT_BLOCKS)


def test_bfs_closure_finite_and_valid(domain):
    from collections import deque

    cfg = RewardConfig()
    seen = {encode(WorldState.initial())}
    frontier = deque([WorldState.initial()])
    while frontier:
        s = frontier.popleft()
        for a in domain.valid_actions(s):
            nxt, _ = domain.apply(s, a, cfg)
            key = encode(nxt)
            if key not in seen:
                domain.validate(nxt)
                seen.add(key)
                if not nxt.tower3_formed:
                    frontier.append(nxt)
    assert 1000 < len(seen) < 20000


def test_reward_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(step_penalty=0.5)
    with pytest.raises(ValueError):
        RewardConfig(goal_reward=-1.0)


def test_invalid_state_detection(domain):
    with pytest.raises(InvalidStateError):
        domain.validate(state(on=[("red", "blue")], ontable=DEFAULT_BLOCKS))  # red twice
    with pytest.raises(InvalidStateError):
        domain.validate(
            state(on=[("red", "blue"), ("green", "blue")], ontable=["blue", "orange", "purple", "yellow"])
        )


def test_action_parse_roundtrip():
    for text in ("pickup(red)", "stack(red,blue)", "form3tower(blue,red,green)"):
        assert str(GroundAction.parse(text)) == text
