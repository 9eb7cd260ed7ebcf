from __future__ import annotations

import json
import random
import threading
import urllib.request

import pytest

from workcell.bus import Broker
from workcell.gateway import (
    GatewayService,
    KeyValueStore,
    NotFoundError,
    ReadThroughCache,
    StoreUpdater,
    TieredState,
    panel_snapshot,
)
from workcell.runtime import Runtime
from workcell.scenario import Scenario


class FakeClock:
    def __init__(self) -> None:
        self.ms = 0

    def now(self) -> int:
        return self.ms

    def advance(self, d: int) -> None:
        self.ms += d


def make_tier():
    clock = FakeClock()
    state = TieredState(clock.now)
    return clock, state


# -- cache semantics -----------------------------------------------------------


def test_fresh_read_hits_cache_only():
    clock, state = make_tier()
    state.put("plan", {"v": 1})
    assert state.get("plan", 500) == {"v": 1}
    assert state.store.reads == 0


def test_stale_read_goes_to_store_and_refreshes():
    clock, state = make_tier()
    state.put("plan", {"v": 1})
    clock.advance(501)
    assert state.get("plan", 500) == {"v": 1}
    assert state.store.reads == 1
    # the refresh reset the entry age
    assert state.cache.entry_age_ms("plan") == 0


def test_two_stale_reads_cost_one_store_query():
    clock, state = make_tier()
    state.put("plan", {"v": 1})
    clock.advance(750)
    state.get("plan", 500)
    state.get("plan", 500)
    assert state.store.reads == 1


def test_absent_key_raises_not_found():
    _, state = make_tier()
    with pytest.raises(NotFoundError):
        state.get("nope", 500)


def test_store_version_monotonic_per_key():
    store = KeyValueStore()
    versions = [store.put("k", i) for i in range(10)]
    assert versions == list(range(1, 11))
    assert store.version("k") == 10


def test_store_write_ahead_log(tmp_path):
    path = tmp_path / "store.wal"
    store = KeyValueStore(wal_path=str(path))
    store.put("plan", {"state": "running"})
    store.put("plan", {"state": "done"})
    store.close()
    lines = [json.loads(l) for l in path.read_text().splitlines()]
    assert [l["version"] for l in lines] == [1, 2]
    assert lines[1]["value"] == {"state": "done"}


def test_randomized_interleavings_match_reference_model():
    # reference model tracks what the cache should do; counters must agree
    clock, state = make_tier()
    rng = random.Random(42)
    keys = ["a", "b", "c"]
    limit = 500
    model_written_at: dict[str, int] = {}
    model_value: dict[str, int] = {}
    expected_reads = 0
    writes = 0
    for step in range(10_000):
        op = rng.random()
        key = rng.choice(keys)
        if op < 0.35:
            writes += 1
            model_value[key] = writes
            model_written_at[key] = clock.ms
            state.put(key, writes)
        elif op < 0.75:
            if key not in model_value:
                with pytest.raises(NotFoundError):
                    state.get(key, limit)
                expected_reads += 1  # the store was queried and came up empty
                continue
            fresh = clock.ms - model_written_at[key] <= limit
            if not fresh:
                expected_reads += 1
                model_written_at[key] = clock.ms
            value = state.get(key, limit)
            assert value == model_value[key]
            # freshness guarantee: entry provenance within the limit
            assert clock.ms - model_written_at[key] <= limit
        else:
            clock.advance(rng.randrange(0, 400))
    assert state.store.reads == expected_reads


# -- routing ---------------------------------------------------------------------


@pytest.fixture
def live_runtime(classifier):
    runtime = Runtime(Scenario(), seed=3, classifier=classifier)
    runtime.executor.submit({"kind": "control", "command": "start"})
    runtime.tick()
    yield runtime
    runtime.broker.close()


def pump(runtime, n=1):
    for _ in range(n):
        runtime.tick()


def pump_async(runtime, ticks=30):
    """Tick on a side thread so a blocking POST bridge gets answered."""
    import time

    def loop():
        for _ in range(ticks):
            runtime.tick()
            time.sleep(0.005)

    t = threading.Thread(target=loop)
    t.start()
    return t


def test_get_plan_during_run(live_runtime):
    status, payload = live_runtime.service.handle("GET", "/api/v1/plan", {}, None)
    assert status == 200
    assert payload["state"] == "running"
    assert len(payload["plan"]) == 5


def test_get_joints_and_markers(live_runtime):
    status, joints = live_runtime.service.handle("GET", "/api/v1/joints", {}, None)
    assert status == 200 and len(joints["joints"]) == 6
    status, markers = live_runtime.service.handle("GET", "/api/v1/markers", {}, None)
    assert status == 200
    assert {a["marker"] for a in markers["annotations"]} <= {
        "pickup_next",
        "reserved_later",
        "claimed_faded",
    }


def test_get_affective(live_runtime):
    status, payload = live_runtime.service.handle("GET", "/api/v1/affective", {}, None)
    assert status == 200
    assert payload["type"] == "AffectiveSample"
    assert 0.0 <= payload["stress"] <= 1.0


def test_post_claim_replans_without_block(live_runtime):
    t = pump_async(live_runtime)
    status, payload = live_runtime.service.handle(
        "POST", "/api/v1/claim", {}, {"block": "green"}
    )
    t.join()
    assert status == 200
    assert "green" in payload["claimed"]
    assert all("green" not in a for a in payload["plan"])


def test_post_claim_is_idempotent(live_runtime):
    for _ in range(2):
        t = pump_async(live_runtime)
        status, payload = live_runtime.service.handle(
            "POST", "/api/v1/claim", {}, {"block": "yellow"}
        )
        t.join()
        assert status == 200
    assert payload["claimed"].count("yellow") == 1


def test_post_control_stop_halts_next_tick(live_runtime):
    t = pump_async(live_runtime)
    status, payload = live_runtime.service.handle(
        "POST", "/api/v1/control", {}, {"command": "stop"}
    )
    t.join()
    assert status == 200
    assert payload["state"] == "halted"


def test_unknown_route_404(live_runtime):
    status, _ = live_runtime.service.handle("GET", "/api/v1/unknown", {}, None)
    assert status == 404
    status, _ = live_runtime.service.handle("POST", "/api/v1/unknown", {}, {})
    assert status == 404


def test_malformed_bodies_400(live_runtime):
    status, _ = live_runtime.service.handle("POST", "/api/v1/claim", {}, {})
    assert status == 400
    status, _ = live_runtime.service.handle(
        "POST", "/api/v1/control", {}, {"command": "dance"}
    )
    assert status == 400
    status, _ = live_runtime.service.handle(
        "POST", "/api/v1/affect_override", {}, {"metric": "mood", "value": 1}
    )
    assert status == 400


def test_claiming_grasped_block_409(live_runtime):
    # run until the robot holds a block, then claim it
    held = None
    for _ in range(200):
        pump(live_runtime)
        if live_runtime.executor.held_block:
            held = live_runtime.executor.held_block
            break
    assert held
    t = pump_async(live_runtime)
    status, payload = live_runtime.service.handle(
        "POST", "/api/v1/claim", {}, {"block": held}
    )
    t.join()
    assert status == 409


def test_affect_override_routes_to_human(live_runtime):
    status, _ = live_runtime.service.handle(
        "POST", "/api/v1/affect_override", {}, {"metric": "stress", "value": 1.0}
    )
    assert status == 200
    pump(live_runtime, 4)
    status, payload = live_runtime.service.handle("GET", "/api/v1/affective", {}, None)
    assert payload["stress"] > 0.9


def test_alerts_since_filter(live_runtime):
    live_runtime.broker.publish("alerts", {"kind": "x", "timestamp_ms": 100})
    live_runtime.broker.publish("alerts", {"kind": "y", "timestamp_ms": 900})
    pump(live_runtime)
    _, payload = live_runtime.service.handle(
        "GET", "/api/v1/alerts", {"since": ["500"]}, None
    )
    kinds = [a["kind"] for a in payload["alerts"]]
    assert "y" in kinds and "x" not in kinds


def test_raw_eeg_window_query(live_runtime):
    pump(live_runtime, 30)  # > 1 s simulated, so windows exist
    _, payload = live_runtime.service.handle(
        "GET", "/api/v1/raw_eeg", {"window": ["2"]}, None
    )
    assert len(payload["windows"]) == 2
    assert payload["windows"][0]["channels"] == ["AF3", "F3", "AF4", "F4"]


def test_blink_endpoint_halts_robot(live_runtime):
    status, _ = live_runtime.service.handle("POST", "/api/v1/blink", {}, {})
    assert status == 200
    pump(live_runtime, 2)
    assert live_runtime.executor.status()["state"] == "halted"
    assert live_runtime.executor.status()["halt_cause"] == "blink"


# -- HTTP end to end ---------------------------------------------------------------


def test_http_server_end_to_end(classifier):
    runtime = Runtime(Scenario(), seed=4, classifier=classifier)
    server = runtime.serve(0, autostart=True)
    try:
        base = f"http://127.0.0.1:{server.port}"
        with urllib.request.urlopen(f"{base}/api/v1/plan", timeout=5) as resp:
            plan = json.loads(resp.read())
        assert plan["state"] in ("running", "done")

        req = urllib.request.Request(
            f"{base}/api/v1/claim",
            data=json.dumps({"block": "green"}).encode(),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        with urllib.request.urlopen(req, timeout=5) as resp:
            payload = json.loads(resp.read())
        assert "green" in payload["claimed"]

        with urllib.request.urlopen(f"{base}/api/v1/stream", timeout=5) as resp:
            line = resp.readline()
            snapshot = json.loads(line)
        assert "panels" in snapshot and "ts" in snapshot
    finally:
        server.stop()
        runtime.shutdown()


def test_updater_feeds_panels(live_runtime):
    pump(live_runtime, 10)
    panels = panel_snapshot(live_runtime.state)
    assert panels["plan"] is not None
    assert panels["joints"] is not None
    assert panels["markers"] is not None
    assert panels["affective"] is not None
