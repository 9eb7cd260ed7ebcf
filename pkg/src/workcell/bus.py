"""In-process message broker with named queues, topics, and a replayable log.

Four well-known queues (EEG, RAW_AFFECTIVE, REWARD, ROBOT_COMMAND) exist from
broker construction; free-form topic channels are created on first use and
carry dashboard streams. Delivery is FIFO per channel and exactly-once per
consumer group; consumers in the same group compete for messages, distinct
groups each see the full stream.

Queues are bounded. Publishing to a full channel fails fast with
:class:`BackPressureError` unless the producer opts into dropping the oldest
retained message (telemetry streams do). Every accepted publish is appended
to an event log which can be replayed in the original global order, and
optionally mirrored to a JSON-lines file.
"""

from __future__ import annotations

import json
import threading
import time
from collections import deque
from dataclasses import dataclass, field, is_dataclass, asdict
from enum import Enum
from typing import Any, Callable, Iterator, Optional

DEFAULT_CAPACITY = 65536


class QueueName(str, Enum):
    """The broker's built-in queues."""

    EEG = "eeg"
    RAW_AFFECTIVE = "raw_affective"
    REWARD = "reward"
    ROBOT_COMMAND = "robot_command"


BUILTIN_QUEUES = tuple(q.value for q in QueueName)


class BackPressureError(RuntimeError):
    """Raised when a bounded channel cannot accept another message."""


@dataclass(frozen=True)
class BusMessage:
    """One enveloped payload on a channel.

    ``seq`` increases strictly per channel starting at 1; ``timestamp_ms`` is
    milliseconds since run start as reported by the broker clock.
    """

    queue: str
    seq: int
    timestamp_ms: int
    body: Any

    def record(self) -> dict:
        """Log-record form of this message (body coerced to plain JSON types)."""
        return {
            "seq": self.seq,
            "queue": self.queue,
            "timestamp_ms": self.timestamp_ms,
            "body": to_jsonable(self.body),
        }


def to_jsonable(body: Any) -> Any:
    """Coerce a payload to plain JSON-serializable types."""
    if hasattr(body, "to_dict"):
        return body.to_dict()
    if is_dataclass(body) and not isinstance(body, type):
        out = asdict(body)
        out["type"] = type(body).__name__
        return out
    if isinstance(body, dict):
        return {k: to_jsonable(v) for k, v in body.items()}
    if isinstance(body, (list, tuple)):
        return [to_jsonable(v) for v in body]
    return body


def dumps_canonical(obj: Any) -> str:
    """Deterministic JSON rendering used for log lines and snapshots."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class _Channel:
    """Backlog plus per-group cursors for one queue or topic."""

    def __init__(self, name: str, capacity: int) -> None:
        self.name = name
        self.capacity = capacity
        self.backlog: deque[BusMessage] = deque()
        self.base_seq = 1  # seq of backlog[0] when non-empty
        self.next_seq = 1
        self.groups: dict[str, int] = {}  # group -> next seq to deliver
        self.published = 0
        self.dropped = 0

    def pending_for(self, group: str) -> int:
        cursor = self.groups.get(group, self.base_seq)
        return max(0, self.next_seq - cursor)

    def gc(self) -> None:
        # Trim messages already delivered to every known group. With no
        # groups attached everything is retained for a late consumer.
        if not self.groups:
            return
        low = min(self.groups.values())
        while self.backlog and self.backlog[0].seq < low:
            self.backlog.popleft()
        self.base_seq = self.backlog[0].seq if self.backlog else self.next_seq


class EventLog:
    """Append-only record of every accepted publish, in global order."""

    def __init__(self, path: Optional[str] = None, sync: bool = False) -> None:
        self.records: list[dict] = []
        self._path = path
        self._sync = sync
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def append(self, message: BusMessage) -> None:
        rec = message.record()
        self.records.append(rec)
        if self._fh is not None:
            self._fh.write(dumps_canonical(rec) + "\n")
            if self._sync:
                self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.flush()
            self._fh.close()
            self._fh = None

    def __len__(self) -> int:
        return len(self.records)


def load_log(path: str) -> list[dict]:
    """Read a JSON-lines event log back into record dicts."""
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def replay(log: EventLog | list[dict], from_seq: int = 0) -> Iterator[BusMessage]:
    """Yield logged messages in original global order.

    ``from_seq`` filters on each record's per-queue sequence number, so
    ``replay(log, 0)`` reproduces the whole run. Records beyond the end of
    the log simply yield nothing.
    """
    records = log.records if isinstance(log, EventLog) else log
    for rec in records:
        if rec["seq"] >= from_seq:
            yield BusMessage(
                queue=rec["queue"],
                seq=rec["seq"],
                timestamp_ms=rec["timestamp_ms"],
                body=rec["body"],
            )


class Broker:
    """Thread-safe in-process broker.

    Producers never block: at capacity, ``publish`` raises unless
    ``on_full="drop_oldest"``. Consumers may block up to a timeout and get
    ``None`` when nothing arrives. A monotonic millisecond clock can be
    injected for simulated-time runs; the default is wall time since
    construction.
    """

    def __init__(
        self,
        capacity: int = DEFAULT_CAPACITY,
        clock_ms: Optional[Callable[[], int]] = None,
        log_path: Optional[str] = None,
        log_sync: bool = False,
    ) -> None:
        self.capacity = capacity
        self._lock = threading.Lock()
        self._cond = threading.Condition(self._lock)
        self._channels: dict[str, _Channel] = {
            name: _Channel(name, capacity) for name in BUILTIN_QUEUES
        }
        self.log = EventLog(log_path, log_sync)
        if clock_ms is None:
            t0 = time.monotonic()
            clock_ms = lambda: int((time.monotonic() - t0) * 1000)
        self._clock_ms = clock_ms
        self._closed = False

    @property
    def queues(self) -> tuple[str, ...]:
        with self._lock:
            return tuple(self._channels)

    def now_ms(self) -> int:
        return self._clock_ms()

    def _channel(self, queue: str | QueueName) -> _Channel:
        name = queue.value if isinstance(queue, QueueName) else queue
        ch = self._channels.get(name)
        if ch is None:
            ch = _Channel(name, self.capacity)
            self._channels[name] = ch
        return ch

    def publish(self, queue: str | QueueName, body: Any, on_full: str = "error") -> int:
        """Append ``body`` to ``queue`` and return its sequence number."""
        with self._cond:
            if self._closed:
                raise RuntimeError("broker is closed")
            ch = self._channel(queue)
            ch.gc()
            if len(ch.backlog) >= ch.capacity:
                if on_full == "drop_oldest":
                    dropped = ch.backlog.popleft()
                    ch.dropped += 1
                    ch.base_seq = dropped.seq + 1
                    for group, cursor in ch.groups.items():
                        if cursor < ch.base_seq:
                            ch.groups[group] = ch.base_seq
                else:
                    raise BackPressureError(
                        f"queue {ch.name!r} at capacity {ch.capacity}"
                    )
            msg = BusMessage(ch.name, ch.next_seq, self._clock_ms(), body)
            ch.backlog.append(msg)
            ch.next_seq += 1
            ch.published += 1
            self.log.append(msg)
            self._cond.notify_all()
            return msg.seq

    def register_group(self, queue: str | QueueName, group: str) -> None:
        """Attach ``group`` at the current retention base, creating the channel."""
        with self._lock:
            ch = self._channel(queue)
            if group not in ch.groups:
                ch.groups[group] = ch.base_seq

    def consume(
        self,
        queue: str | QueueName,
        timeout_ms: int = 0,
        group: str = "default",
    ) -> Optional[BusMessage]:
        """Take the next message for ``group``, or ``None`` on timeout."""
        deadline = time.monotonic() + timeout_ms / 1000.0
        with self._cond:
            ch = self._channel(queue)
            if group not in ch.groups:
                ch.groups[group] = ch.base_seq
            while True:
                cursor = ch.groups[group]
                if cursor < ch.next_seq:
                    msg = ch.backlog[cursor - ch.base_seq]
                    ch.groups[group] = cursor + 1
                    ch.gc()
                    return msg
                if self._closed:
                    return None
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return None
                self._cond.wait(remaining)

    def drain(self, queue: str | QueueName, group: str = "default") -> list[BusMessage]:
        """Consume every message currently pending for ``group``."""
        out = []
        while True:
            msg = self.consume(queue, timeout_ms=0, group=group)
            if msg is None:
                return out
            out.append(msg)

    def pending(self, queue: str | QueueName, group: str = "default") -> int:
        with self._lock:
            return self._channel(queue).pending_for(group)

    def published_count(self, queue: str | QueueName) -> int:
        with self._lock:
            return self._channel(queue).published

    def dropped_count(self, queue: str | QueueName) -> int:
        with self._lock:
            return self._channel(queue).dropped

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()
        self.log.close()

    @property
    def closed(self) -> bool:
        return self._closed


@dataclass
class Consumer:
    """Bound (broker, queue, group) handle for one consuming component.

    The group is registered immediately, so everything published after
    construction is delivered even if consumption starts later.
    """

    broker: Broker
    queue: str
    group: str = "default"

    def __post_init__(self) -> None:
        self.broker.register_group(self.queue, self.group)

    def get(self, timeout_ms: int = 0) -> Optional[BusMessage]:
        return self.broker.consume(self.queue, timeout_ms, self.group)

    def drain(self) -> list[BusMessage]:
        return self.broker.drain(self.queue, self.group)

    @property
    def closed(self) -> bool:
        return self.broker.closed
