"""Acceptance suite: one test per exit criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
complete. The learning criteria share trained tables through module-scoped
fixtures, so the whole suite stays within a few minutes.
"""

from __future__ import annotations

import json
import math
import random
import time

import numpy as np
import pytest

from workcell.affect import BusRewardSource, PreferenceProfile, SimulatedHuman
from workcell.agent import (
    LearnConfig,
    QTable,
    bootstrap_phase2,
    greedy_rollout,
    train_phase1,
)
from workcell.bus import Broker, load_log
from workcell.cli import main
from workcell.eeg import detect_p300, extract_features, synth_stream, train_classifier
from workcell.gateway import NotFoundError, TieredState
from workcell.planner import bfs_plan, optimal_length
from workcell.world import Domain, RewardConfig, WorldState

RC = RewardConfig()
SEEDS = (1, 2, 3, 4, 5)

# Coverage schedule for the production table: constant full exploration plus
# exploring starts converges the whole reachable region, which criteria 2
# and 3 need; criterion 1 measures the spec-default schedule.
DEFAULT_CFG = LearnConfig(episodes=3000)
COVERAGE_CFG = LearnConfig(episodes=40000, epsilon_end=1.0)
PHASE2_CFG = LearnConfig(episodes=2000)


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture(scope="module")
def phase1_default_runs(domain):
    out = {}
    for seed in SEEDS:
        t0 = time.monotonic()
        result = train_phase1(domain, DEFAULT_CFG, RC, random.Random(seed))
        out[seed] = (result, time.monotonic() - t0)
    return out


@pytest.fixture(scope="module")
def phase1_coverage_tables(domain):
    return {
        seed: train_phase1(domain, COVERAGE_CFG, RC, random.Random(seed)).qtable
        for seed in SEEDS
    }


def test_criterion_1_phase1_convergence(domain, phase1_default_runs):
    details = []
    ok = True
    for seed, (result, elapsed) in phase1_default_runs.items():
        rollout, reached = greedy_rollout(result.qtable, domain, WorldState.initial(), RC)
        length = len(rollout) if reached else math.inf
        conv = result.converged_episode
        seed_ok = reached and length == 5 and conv is not None and conv <= 3000 and elapsed < 120
        ok = ok and seed_ok
        details.append(f"seed {seed}: len={length} conv={conv} t={elapsed:.1f}s")
    report(1, ok, "; ".join(details) + " (paper reference ~800 iterations)")
    assert ok


def test_criterion_2_oracle_agreement(domain, phase1_coverage_tables):
    table = phase1_coverage_tables[1]
    rng = random.Random(42)
    states = [domain.random_reachable(rng) for _ in range(50)]
    equal = 0
    worst = 0
    for s in states:
        opt = optimal_length(domain, s)
        rollout, reached = greedy_rollout(table, domain, s, RC)
        length = len(rollout) if reached else LearnConfig().max_steps
        if length == opt:
            equal += 1
        worst = max(worst, length - opt)
    ok = equal >= 45 and worst <= 2
    report(2, ok, f"equal {equal}/50 (need >=45), worst excess {worst} (need <=2)")
    assert ok


def _avoidance_episode(result, block: str, max_steps: int) -> int | None:
    for i, (rollout, length) in enumerate(
        zip(result.greedy_rollouts, result.greedy_lengths)
    ):
        if length < max_steps and rollout and all(block not in a for a in rollout):
            return i + 1
    return None


def test_criterion_3_phase2_preference_learning(domain, phase1_coverage_tables):
    avoid_hits = 0
    boot_wins = 0
    details = []
    for seed in SEEDS:
        broker = Broker()
        human = SimulatedHuman(broker, PreferenceProfile(preferred_block="green"))
        boot = bootstrap_phase2(
            phase1_coverage_tables[seed],
            BusRewardSource(human),
            PHASE2_CFG,
            RC,
            domain,
            random.Random(seed + 100),
        )
        broker.close()
        boot_ep = _avoidance_episode(boot, "green", PHASE2_CFG.max_steps)
        final_free = (
            boot.greedy_lengths[-1] < PHASE2_CFG.max_steps
            and all("green" not in a for a in boot.greedy_rollouts[-1])
        )
        if boot_ep is not None and final_free:
            avoid_hits += 1

        broker2 = Broker()
        human2 = SimulatedHuman(broker2, PreferenceProfile(preferred_block="green"))
        scratch = bootstrap_phase2(
            QTable(),
            BusRewardSource(human2),
            PHASE2_CFG,
            RC,
            domain,
            random.Random(seed + 100),
            epsilon_start=1.0,
        )
        broker2.close()
        scratch_ep = _avoidance_episode(scratch, "green", PHASE2_CFG.max_steps)
        if boot_ep is not None and (scratch_ep is None or boot_ep < scratch_ep):
            boot_wins += 1
        details.append(f"seed {seed}: boot={boot_ep} scratch={scratch_ep}")
    ok = avoid_hits >= 4 and boot_wins >= 4
    report(
        3,
        ok,
        f"avoidance {avoid_hits}/5 (need >=4), bootstrap wins {boot_wins}/5 (need >=4); "
        + "; ".join(details),
    )
    assert ok


def test_criterion_4_blink_loop(corpus, classifier, tmp_path):
    # held-out accuracy on the bundled 200-window corpus
    feats = [(extract_features(w), label) for w, label in corpus]
    idx = list(range(len(feats)))
    random.Random(5).shuffle(idx)
    folds = [idx[i::5] for i in range(5)]
    accs = []
    for k in range(5):
        test_idx = set(folds[k])
        train = [feats[i] for i in idx if i not in test_idx]
        clf = train_classifier(train)
        ok_n = sum(1 for i in test_idx if clf.classify(feats[i][0]).label == feats[i][1])
        accs.append(ok_n / len(test_idx))
    accuracy = sum(accs) / len(accs)

    # headless run: scripted blink must stop the robot within bounds
    scenario = tmp_path / "scenario.json"
    scenario.write_text(json.dumps({"preferred_block": "green"}))
    script = tmp_path / "script.json"
    script.write_text(json.dumps({"events": [{"at_ms": 2000, "kind": "blink"}]}))
    log_path = tmp_path / "events.jsonl"
    code = main(
        [
            "run",
            "--scenario",
            str(scenario),
            "--headless",
            "--seed",
            "11",
            "--duration-s",
            "4",
            "--script",
            str(script),
            "--log",
            str(log_path),
        ]
    )
    assert code == 0
    records = load_log(str(log_path))
    stops = [
        r
        for r in records
        if r["queue"] == "robot_command" and r["body"]["command"] == "STOP"
    ]
    halts = [
        r
        for r in records
        if r["queue"] == "workspace_events" and r["body"].get("kind") == "stopped"
    ]
    stop_latency = stops[0]["timestamp_ms"] - 2000 if stops else math.inf
    freeze_latency = (
        halts[0]["timestamp_ms"] - stops[0]["timestamp_ms"] if stops and halts else math.inf
    )
    # pose must hold once halted
    poses = [r["body"]["end_effector"] for r in records if r["queue"] == "arm_pose"
             and r["timestamp_ms"] > halts[0]["timestamp_ms"]]
    frozen = all(p == poses[0] for p in poses)

    ok = accuracy >= 0.95 and stop_latency <= 500 and freeze_latency <= 50 and frozen
    report(
        4,
        ok,
        f"5-fold accuracy {accuracy:.3f} (need >=0.95), stop latency {stop_latency} ms "
        f"(need <=500), freeze {freeze_latency} ms (need <=50), pose frozen {frozen}",
    )
    assert ok


def test_criterion_5_p300_auc():
    epochs = synth_stream("p300_oddball", 100, np.random.default_rng(21))
    odd = [w for w in epochs if w.stimulus_tag.endswith("/odd")]
    std = [w for w in epochs if w.stimulus_tag.endswith("/std")]
    scores_odd = [detect_p300(std, w) for w in odd]
    scores_std = [
        detect_p300(std[:i] + std[i + 1 :], w) for i, w in enumerate(std)
    ]
    wins = sum(1.0 for so in scores_odd for ss in scores_std if so > ss)
    ties = sum(0.5 for so in scores_odd for ss in scores_std if so == ss)
    auc = (wins + ties) / (len(scores_odd) * len(scores_std))
    ok = auc >= 0.9
    report(
        5,
        ok,
        f"AUC {auc:.3f} over {len(odd)} oddball / {len(std)} standard epochs (need >=0.9); "
        "validates the pipeline, not the paper's hardware result",
    )
    assert ok


def test_criterion_6_interactive_replan(classifier, tmp_path):
    scenario = tmp_path / "scenario.json"
    scenario.write_text(json.dumps({"preferred_block": "green"}))
    script = tmp_path / "script.json"
    script.write_text(
        json.dumps({"events": [{"at_ms": 600, "kind": "claim", "block": "green"}]})
    )
    log_path = tmp_path / "events.jsonl"
    code = main(
        [
            "run",
            "--scenario",
            str(scenario),
            "--headless",
            "--seed",
            "7",
            "--duration-s",
            "14",
            "--script",
            str(script),
            "--log",
            str(log_path),
        ]
    )
    assert code == 0
    records = load_log(str(log_path))
    events = [r for r in records if r["queue"] == "workspace_events"]
    plans = [r["body"]["plan"] for r in events if r["body"].get("kind") == "plan_changed"]
    initial_plan, new_plan = plans[0], plans[-1]
    claim_ts = next(
        r["timestamp_ms"] for r in events if r["body"].get("kind") == "claim"
    )
    replan_ts = next(
        r["timestamp_ms"]
        for r in events
        if r["body"].get("kind") == "plan_changed" and r["timestamp_ms"] >= claim_ts
    )
    executed_after = [
        r["body"]["action"]
        for r in events
        if r["body"].get("kind") == "action_done" and r["timestamp_ms"] >= claim_ts
    ]
    goal = any(r["body"].get("kind") == "goal_completed" for r in events)

    # wall-clock replan cost, measured directly on the planning call
    t0 = time.perf_counter()
    plan = bfs_plan(Domain(), WorldState.initial(), frozenset({"green"}))
    replan_wall_ms = (time.perf_counter() - t0) * 1000

    uses_green_initially = any("green" in a for a in initial_plan)
    new_plan_green_free = all("green" not in a for a in new_plan)
    new_plan_uses_orange = any("orange" in a for a in new_plan)
    executed_green_free = all("green" not in a for a in executed_after)
    ok = (
        uses_green_initially
        and new_plan_green_free
        and new_plan_uses_orange
        and executed_green_free
        and goal
        and replan_ts - claim_ts <= 250
        and plan is not None
        and replan_wall_ms < 250
    )
    report(
        6,
        ok,
        f"initial plan uses green {uses_green_initially}, replan green-free "
        f"{new_plan_green_free}, uses orange {new_plan_uses_orange}, executed "
        f"green-free {executed_green_free}, goal {goal}, replan {replan_ts - claim_ts} ms "
        f"sim / {replan_wall_ms:.1f} ms wall (need <=250)",
    )
    assert ok


def test_criterion_7_cache_property_suite():
    clock = {"ms": 0}
    state = TieredState(lambda: clock["ms"])
    limit = 500
    rng = random.Random(1234)
    written_at: dict[str, int] = {}
    values: dict[str, int] = {}
    expected_reads = 0
    writes = 0
    stale_checks = 0
    for _ in range(10_000):
        op = rng.random()
        key = rng.choice(["plan", "joints", "markers", "affective"])
        if op < 0.3:
            writes += 1
            values[key] = writes
            written_at[key] = clock["ms"]
            state.put(key, writes)
        elif op < 0.8:
            if key not in values:
                try:
                    state.get(key, limit)
                    assert False, "missing key must not resolve"
                except NotFoundError:
                    expected_reads += 1
                continue
            before = state.store.reads
            fresh = clock["ms"] - written_at[key] <= limit
            value = state.get(key, limit)
            cost = state.store.reads - before
            assert value == values[key]
            if fresh:
                assert cost == 0
            else:
                stale_checks += 1
                expected_reads += 1
                assert cost == 1
                written_at[key] = clock["ms"]
                # refreshed entry serves the next read for free
                again = state.store.reads
                assert state.get(key, limit) == value
                assert state.store.reads == again
        else:
            clock["ms"] += rng.randrange(0, 350)
    ok = state.store.reads == expected_reads and stale_checks > 100
    report(
        7,
        ok,
        f"{writes} writes, {stale_checks} stale reads, store reads "
        f"{state.store.reads} == expected {expected_reads}",
    )
    assert ok


def test_criterion_8_headless_determinism(tmp_path):
    scenario = tmp_path / "scenario.json"
    scenario.write_text(json.dumps({"preferred_block": "green"}))
    script = tmp_path / "script.json"
    script.write_text(
        json.dumps(
            {
                "events": [
                    {"at_ms": 900, "kind": "claim", "block": "green"},
                    {"at_ms": 2500, "kind": "blink"},
                    {"at_ms": 4000, "kind": "control", "command": "resume"},
                    {"at_ms": 5000, "kind": "affect_override", "metric": "stress", "value": 1.0},
                ]
            }
        )
    )
    logs = []
    for run_idx in (1, 2):
        log_path = tmp_path / f"events{run_idx}.jsonl"
        code = main(
            [
                "run",
                "--scenario",
                str(scenario),
                "--headless",
                "--seed",
                "99",
                "--duration-s",
                "9",
                "--script",
                str(script),
                "--log",
                str(log_path),
            ]
        )
        assert code == 0
        logs.append(log_path.read_bytes())
    ok = logs[0] == logs[1] and len(logs[0]) > 10_000
    report(8, ok, f"two runs, {len(logs[0])} bytes each, byte-identical {logs[0] == logs[1]}")
    assert ok
