"""Simulated human affective state and the reward stream derived from it.

Five metrics (engagement, stress, relaxation, excitement, interest) live in
[0, 1] and decay exponentially toward a resting baseline. Workspace events
perturb them: the robot grasping the human's preferred block spikes stress,
completing the goal spikes excitement, and console overrides set a metric
directly. Samples stream to the RAW_AFFECTIVE queue; at every action
boundary a single reward value, a weighted excitement-minus-stress mean
over that action's window, goes to the REWARD queue.

The dynamics are an explicit substitute for headset-derived metrics so that
learning runs are reproducible; a live operator can still drive the values
through the console override endpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .bus import Broker, Consumer, QueueName
from .agent import RewardSignal

METRICS = ("engagement", "stress", "relaxation", "excitement", "interest")

BASELINE = 0.2


@dataclass(frozen=True)
class AffectiveSample:
    timestamp_ms: int
    engagement: float
    stress: float
    relaxation: float
    excitement: float
    interest: float

    def metric(self, name: str) -> float:
        return getattr(self, name)

    def to_dict(self) -> dict:
        out = {"type": "AffectiveSample", "timestamp_ms": self.timestamp_ms}
        for m in METRICS:
            out[m] = getattr(self, m)
        return out

    @staticmethod
    def at_baseline(timestamp_ms: int = 0, level: float = BASELINE) -> "AffectiveSample":
        return AffectiveSample(timestamp_ms, level, level, level, level, level)


@dataclass
class AffectWeights:
    w_excitement: float = 1.0
    w_stress: float = 1.0

    def __post_init__(self) -> None:
        if self.w_excitement < 0 or self.w_stress < 0:
            raise ValueError("weights must be non-negative")


@dataclass
class PreferenceProfile:
    preferred_block: Optional[str] = None
    stress_jump: float = 0.6
    excitement_jump: float = 0.5
    decay_rate: float = 0.5  # per second, toward baseline
    baseline: float = BASELINE

    def __post_init__(self) -> None:
        if not 0 < self.stress_jump <= 1 or not 0 < self.excitement_jump <= 1:
            raise ValueError("jumps must be in (0, 1]")
        if self.decay_rate <= 0:
            raise ValueError("decay_rate must be positive")


def _clamp(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def _mentions(action_str: Optional[str], block: Optional[str]) -> bool:
    if not action_str or not block:
        return False
    _, _, rest = action_str.partition("(")
    return block in rest.rstrip(")").split(",")


def step_affect(
    current: AffectiveSample,
    events: Iterable[dict],
    dt: float,
    profile: PreferenceProfile,
    timestamp_ms: Optional[int] = None,
) -> AffectiveSample:
    """Advance the metrics by ``dt`` seconds, then apply event jumps/overrides."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    decay = math.exp(-profile.decay_rate * dt)
    values = {
        m: profile.baseline + (current.metric(m) - profile.baseline) * decay
        for m in METRICS
    }
    aversive = False
    for ev in events:
        kind = ev.get("kind")
        if kind == "robot_grasped" and ev.get("block") == profile.preferred_block:
            aversive = True
        elif kind == "action_done" and _mentions(ev.get("action"), profile.preferred_block):
            # frustration fires whenever the robot uses the reserved block,
            # not only when it grasps it
            aversive = True
        elif kind == "goal_completed":
            values["excitement"] = _clamp(values["excitement"] + profile.excitement_jump)
        elif kind == "affect_override":
            metric = ev.get("metric")
            if metric in METRICS:
                values[metric] = _clamp(float(ev.get("value", 0.0)))
    if aversive:
        values["stress"] = _clamp(values["stress"] + profile.stress_jump)
    ts = timestamp_ms if timestamp_ms is not None else current.timestamp_ms + int(dt * 1000)
    return AffectiveSample(ts, **{m: _clamp(v) for m, v in values.items()})


def human_reward(
    samples: list[AffectiveSample],
    weights: AffectWeights,
    action_index: int = 0,
) -> RewardSignal:
    """Weighted excitement-minus-stress mean over one action window, in [-1, 1]."""
    if not samples:
        return RewardSignal(0.0, action_index, "human")
    mean_exc = sum(s.excitement for s in samples) / len(samples)
    mean_str = sum(s.stress for s in samples) / len(samples)
    value = weights.w_excitement * mean_exc - weights.w_stress * mean_str
    value = max(-1.0, min(1.0, value))
    return RewardSignal(value, action_index, "human")


SAMPLE_RATE_HZ = 8.0


class SimulatedHuman:
    """Event-driven affect simulator publishing samples and per-action rewards.

    In the live loop it is ticked at the runtime cadence and consumes
    workspace events from a broadcast topic; in headless training the
    trainer drives whole action windows synchronously through
    :meth:`simulate_window`.
    """

    def __init__(
        self,
        broker: Broker,
        profile: PreferenceProfile,
        weights: AffectWeights | None = None,
        rate_hz: float = SAMPLE_RATE_HZ,
        events_topic: str = "workspace_events",
        group: str = "human",
    ) -> None:
        self.broker = broker
        self.profile = profile
        self.weights = weights or AffectWeights()
        self.rate_hz = rate_hz
        self._events = Consumer(broker, events_topic, group)
        self._sample = AffectiveSample.at_baseline(broker.now_ms(), profile.baseline)
        self._window: list[AffectiveSample] = []
        self._next_sample_ms = 0.0
        self._action_count = 0
        self.drops = 0

    @property
    def latest(self) -> AffectiveSample:
        return self._sample

    def _publish_sample(self) -> None:
        try:
            self.broker.publish(
                QueueName.RAW_AFFECTIVE, self._sample, on_full="drop_oldest"
            )
        except Exception:
            self.drops += 1
        self._window.append(self._sample)

    def _publish_reward(self) -> None:
        signal = human_reward(self._window, self.weights, self._action_count)
        self._action_count += 1
        self.broker.publish(QueueName.REWARD, signal)
        self._window = []

    def tick(self, dt: float) -> None:
        """Advance by ``dt`` seconds of simulated time inside the live loop."""
        now = self.broker.now_ms()
        events = [m.body if isinstance(m.body, dict) else m.body for m in self._events.drain()]
        boundaries = sum(1 for ev in events if ev.get("kind") == "action_done")
        self._sample = step_affect(self._sample, events, dt, self.profile, now)
        while now >= self._next_sample_ms:
            self._publish_sample()
            self._next_sample_ms += 1000.0 / self.rate_hz
        for _ in range(boundaries):
            self._publish_reward()

    def simulate_window(self, events: list[dict], window_s: float) -> None:
        """Synchronously play one action window: jumps at start, samples at rate."""
        n = max(1, int(round(window_s * self.rate_hz)))
        dt = window_s / n
        first = True
        for _ in range(n):
            self._sample = step_affect(
                self._sample,
                events if first else (),
                dt,
                self.profile,
                self._sample.timestamp_ms + int(dt * 1000),
            )
            first = False
            self._publish_sample()
        self._publish_reward()


class BusRewardSource:
    """Agent-facing reward source: drives the human, then reads the REWARD queue.

    ``reward_for`` simulates the action window on the human model, then
    consumes whatever signal landed on REWARD for that action; absence of a
    signal counts as zero.
    """

    def __init__(self, human: SimulatedHuman, group: str = "agent") -> None:
        self.human = human
        self._consumer = Consumer(human.broker, QueueName.REWARD.value, group)

    @property
    def closed(self) -> bool:
        return self._consumer.closed

    def reward_for(self, events: list[dict], window_s: float) -> float:
        self.human.simulate_window(events, window_s)
        total = 0.0
        for msg in self._consumer.drain():
            body = msg.body
            if isinstance(body, RewardSignal):
                total += body.value
            elif isinstance(body, dict):
                total += float(body.get("value", 0.0))
        return total
