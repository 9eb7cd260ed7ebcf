"""Full-system wiring: simulated clock, fixed-order tick loop, live serving.

Headless runs advance a simulated millisecond clock in 50 ms ticks and pump
every component in a fixed order, so two runs with the same seed and script
produce byte-identical event logs. Live runs execute the same loop on a
background thread paced to wall time, with the HTTP gateway serving reads
from the queue-fed store concurrently.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .affect import SimulatedHuman
from .bus import Broker, QueueName
from .eeg import (
    EegMonitor,
    LinearEventClassifier,
    background_window,
    blink_window,
    make_corpus,
    train_default_classifier,
)
from .executor import RobotExecutor
from .gateway import GatewayService, StoreUpdater, TieredState, panel_snapshot
from .scenario import Scenario, ScriptEvent
from .world import WorldState

TICK_MS = 50
EEG_STRIDE_MS = 250


class SimClock:
    """Monotonic millisecond clock advanced by the tick loop."""

    def __init__(self) -> None:
        self._now_ms = 0
        self._lock = threading.Lock()

    def now_ms(self) -> int:
        with self._lock:
            return self._now_ms

    def advance(self, ms: int) -> int:
        with self._lock:
            self._now_ms += ms
            return self._now_ms


class EegSource:
    """Streams seeded background windows onto the EEG queue at the stride."""

    def __init__(self, broker: Broker, clock: SimClock, seed: int) -> None:
        self.broker = broker
        self.clock = clock
        self.rng = np.random.default_rng(seed)
        self._next_ms = EEG_STRIDE_MS

    def tick(self) -> None:
        now = self.clock.now_ms()
        while self._next_ms <= now:
            window = background_window(self.rng, start_ms=self._next_ms)
            self.broker.publish(QueueName.EEG, window, on_full="drop_oldest")
            self._next_ms += EEG_STRIDE_MS

    def inject_blink(self) -> None:
        window = blink_window(self.rng, start_ms=self.clock.now_ms())
        self.broker.publish(QueueName.EEG, window)


class Runtime:
    """Owns every component of a run and steps them deterministically."""

    def __init__(
        self,
        scenario: Scenario,
        seed: int = 0,
        log_path: Optional[str] = None,
        log_sync: bool = False,
        classifier: Optional[LinearEventClassifier] = None,
        script: Optional[list[ScriptEvent]] = None,
    ) -> None:
        self.scenario = scenario
        self.seed = seed
        self.clock = SimClock()
        self.broker = Broker(
            clock_ms=self.clock.now_ms, log_path=log_path, log_sync=log_sync
        )
        self.domain = scenario.domain()
        self.executor = RobotExecutor(
            self.domain,
            self.broker,
            reward_cfg=scenario.rewards,
            initial=scenario.initial,
        )
        self.human = SimulatedHuman(
            self.broker, scenario.profile, scenario.weights
        )
        self.classifier = classifier or train_default_classifier()
        self.monitor = EegMonitor(
            self.broker, self.classifier, affect_reader=lambda: self.human.latest
        )
        self.eeg_source = EegSource(self.broker, self.clock, seed)
        self.state = TieredState(self.clock.now_ms)
        self.updater = StoreUpdater(self.broker, self.state)
        self.service = GatewayService(
            self.state,
            self.executor,
            self.broker,
            human=self.human,
            blink_injector=self.eeg_source.inject_blink,
        )
        self.script = sorted(script or [], key=lambda e: e.at_ms)
        self._script_idx = 0
        self._stop = threading.Event()

    # -- script injection ---------------------------------------------------

    def _inject_due(self, now_ms: int) -> None:
        while self._script_idx < len(self.script) and (
            self.script[self._script_idx].at_ms <= now_ms
        ):
            ev = self.script[self._script_idx]
            self._script_idx += 1
            if ev.kind == "blink":
                self.eeg_source.inject_blink()
            elif ev.kind == "control":
                self.executor.submit({"kind": "control", **ev.data})
            elif ev.kind in ("claim", "release"):
                self.executor.submit({"kind": ev.kind, **ev.data})
            elif ev.kind == "affect_override":
                self.broker.publish(
                    "workspace_events",
                    {"kind": "affect_override", **ev.data},
                    on_full="drop_oldest",
                )

    # -- the loop -------------------------------------------------------------

    def tick(self) -> None:
        """One 50 ms step: inject, monitor, execute, feel, sense, publish."""
        now = self.clock.advance(TICK_MS)
        self._inject_due(now)
        self.monitor.drain()
        self.executor.drain_commands()
        self.executor.tick(TICK_MS / 1000.0)
        self.human.tick(TICK_MS / 1000.0)
        self.eeg_source.tick()
        self.monitor.check_stress(now)
        self.updater.drain()

    def run_headless(self, duration_ms: int, autostart: bool = True) -> None:
        if autostart:
            self.executor.submit({"kind": "control", "command": "start"})
        ticks = duration_ms // TICK_MS
        for _ in range(ticks):
            self.tick()

    def serve(self, port: int, static_root: Optional[str] = None, autostart: bool = False):
        """Start the paced loop thread and the HTTP server; returns the server."""
        from .gateway import ConsoleHttpServer

        server = ConsoleHttpServer(self.service, port=port, static_root=static_root)
        server.start()
        if autostart:
            self.executor.submit({"kind": "control", "command": "start"})

        def loop() -> None:
            next_wall = time.monotonic()
            while not self._stop.is_set():
                self.tick()
                next_wall += TICK_MS / 1000.0
                delay = next_wall - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                else:
                    next_wall = time.monotonic()

        self._loop_thread = threading.Thread(target=loop, daemon=True)
        self._loop_thread.start()
        return server

    def shutdown(self) -> None:
        self._stop.set()
        thread = getattr(self, "_loop_thread", None)
        if thread is not None:
            thread.join(timeout=2)
        self.broker.close()

    def panels(self) -> dict:
        return panel_snapshot(self.state)


def replay_panels(records: list[dict]) -> dict:
    """Rebuild the console panel state from an event log, byte-identically."""
    clock = SimClock()
    state = TieredState(clock.now_ms)
    from .gateway import apply_record

    for rec in records:
        apply_record(state, rec)
    return panel_snapshot(state)
