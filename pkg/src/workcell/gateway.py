"""REST gateway: staleness-limited read-through cache over a queue-fed store.

Reads go to the cache first and fall through to the backing store only when
the cached entry is older than the staleness limit; every store read
refreshes the cache entry. The store itself is kept current by an updater
that consumes the dashboard topics and queues, so HTTP handlers never touch
the executor directly for state. Writes (controls, claims, overrides)
publish onto the bus or are bridged into the executor between ticks.

Both tiers are in-process maps standing in for the external cache and
database of the original deployment; the tiered read semantics and the
instrumentation around them are what matters for the tests.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Callable, Optional
from urllib.parse import parse_qs, urlparse

from .affect import METRICS, SimulatedHuman
from .bus import Broker, Consumer, QueueName, dumps_canonical, to_jsonable
from .eeg import ALERTS_TOPIC
from .executor import (
    EVENTS_TOPIC,
    MARKERS_TOPIC,
    POSE_TOPIC,
    STATUS_TOPIC,
    ClaimConflictError,
    RobotExecutor,
    TransitionError,
)

DEFAULT_STALENESS_MS = 500
RAW_EEG_KEEP = 20
ALERTS_KEEP = 100


class NotFoundError(KeyError):
    """Key absent from both cache and store."""


class KeyValueStore:
    """Backing store with per-key versions, read instrumentation and WAL."""

    def __init__(self, wal_path: Optional[str] = None) -> None:
        self._data: dict[str, Any] = {}
        self._versions: dict[str, int] = {}
        self._lock = threading.Lock()
        self.reads = 0
        self.reads_by_key: dict[str, int] = {}
        self._wal = open(wal_path, "w", encoding="utf-8") if wal_path else None

    def put(self, key: str, value: Any) -> int:
        with self._lock:
            version = self._versions.get(key, 0) + 1
            self._versions[key] = version
            self._data[key] = value
            if self._wal is not None:
                self._wal.write(
                    dumps_canonical({"key": key, "version": version, "value": value})
                    + "\n"
                )
            return version

    def read(self, key: str) -> Any:
        with self._lock:
            self.reads += 1
            self.reads_by_key[key] = self.reads_by_key.get(key, 0) + 1
            if key not in self._data:
                raise NotFoundError(key)
            return self._data[key]

    def version(self, key: str) -> int:
        with self._lock:
            return self._versions.get(key, 0)

    def contains(self, key: str) -> bool:
        with self._lock:
            return key in self._data

    def snapshot(self) -> dict[str, Any]:
        with self._lock:
            return dict(self._data)

    def close(self) -> None:
        if self._wal is not None:
            self._wal.flush()
            self._wal.close()
            self._wal = None


@dataclass
class CacheEntry:
    value: Any
    written_at: int


class ReadThroughCache:
    """Cache tier consulted before the store; refreshed on every store read."""

    def __init__(self, store: KeyValueStore, clock_ms: Callable[[], int]) -> None:
        self.store = store
        self.clock_ms = clock_ms
        self._entries: dict[str, CacheEntry] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def put(self, key: str, value: Any) -> None:
        """Write-through entry point used by the updater."""
        with self._lock:
            self._entries[key] = CacheEntry(value, self.clock_ms())

    def get(self, key: str, staleness_limit_ms: int = DEFAULT_STALENESS_MS) -> Any:
        now = self.clock_ms()
        with self._lock:
            entry = self._entries.get(key)
            if entry is not None and now - entry.written_at <= staleness_limit_ms:
                self.hits += 1
                return entry.value
        # stale or absent: one store read, then refresh the entry
        value = self.store.read(key)
        with self._lock:
            self.misses += 1
            self._entries[key] = CacheEntry(value, now)
        return value

    def entry_age_ms(self, key: str) -> Optional[int]:
        with self._lock:
            entry = self._entries.get(key)
            return None if entry is None else self.clock_ms() - entry.written_at


class TieredState:
    """Store plus cache with a single write path, as the updater sees it."""

    def __init__(
        self, clock_ms: Callable[[], int], wal_path: Optional[str] = None
    ) -> None:
        self.store = KeyValueStore(wal_path)
        self.cache = ReadThroughCache(self.store, clock_ms)

    def put(self, key: str, value: Any) -> None:
        self.store.put(key, value)
        self.cache.put(key, value)

    def get(self, key: str, staleness_limit_ms: int = DEFAULT_STALENESS_MS) -> Any:
        return self.cache.get(key, staleness_limit_ms)


def apply_record(state: TieredState, record: dict) -> None:
    """Fold one event-log record into the dashboard state.

    The live updater and offline replay share this reducer, so replaying a
    recorded session rebuilds the panels byte for byte.
    """
    queue = record["queue"]
    body = record["body"]
    if queue == STATUS_TOPIC:
        state.put("plan", body)
    elif queue == POSE_TOPIC:
        state.put("joints", body)
    elif queue == MARKERS_TOPIC:
        state.put("markers", body)
    elif queue == QueueName.RAW_AFFECTIVE.value:
        state.put("affective", body)
    elif queue == QueueName.EEG.value:
        kept = list(state.store.snapshot().get("raw_eeg", []))
        kept.append(
            {
                "start_ms": body.get("start_ms"),
                "rate_hz": body.get("rate_hz"),
                "channels": body.get("channels"),
                "samples": body.get("samples"),
            }
        )
        state.put("raw_eeg", kept[-RAW_EEG_KEEP:])
    elif queue == ALERTS_TOPIC:
        kept = list(state.store.snapshot().get("alerts", []))
        kept.append(body)
        state.put("alerts", kept[-ALERTS_KEEP:])
    elif queue == EVENTS_TOPIC:
        kept = list(state.store.snapshot().get("events", []))
        kept.append(body)
        state.put("events", kept[-ALERTS_KEEP:])


class StoreUpdater:
    """Consumes the dashboard topics/queues and feeds the tiered state."""

    SOURCES = (
        STATUS_TOPIC,
        POSE_TOPIC,
        MARKERS_TOPIC,
        EVENTS_TOPIC,
        ALERTS_TOPIC,
        QueueName.RAW_AFFECTIVE.value,
        QueueName.EEG.value,
    )

    def __init__(self, broker: Broker, state: TieredState, group: str = "gateway") -> None:
        self.broker = broker
        self.state = state
        self._consumers = [Consumer(broker, src, group) for src in self.SOURCES]

    def drain(self) -> int:
        handled = 0
        for consumer in self._consumers:
            for msg in consumer.drain():
                apply_record(self.state, msg.record())
                handled += 1
        return handled


def panel_snapshot(state: TieredState) -> dict:
    """Canonical view of everything the console renders."""
    snap = state.store.snapshot()
    raw_eeg = snap.get("raw_eeg", [])
    return {
        "plan": snap.get("plan"),
        "joints": snap.get("joints"),
        "markers": snap.get("markers"),
        "affective": snap.get("affective"),
        "alerts": snap.get("alerts", []),
        "raw_eeg_count": len(raw_eeg),
        "raw_eeg_latest": raw_eeg[-1] if raw_eeg else None,
        "events_tail": snap.get("events", [])[-10:],
    }


class GatewayService:
    """Pure request router; the HTTP layer delegates everything here."""

    def __init__(
        self,
        state: TieredState,
        executor: RobotExecutor,
        broker: Broker,
        human: Optional[SimulatedHuman] = None,
        blink_injector: Optional[Callable[[], None]] = None,
        staleness_ms: int = DEFAULT_STALENESS_MS,
        reply_timeout_s: float = 1.0,
    ) -> None:
        self.state = state
        self.executor = executor
        self.broker = broker
        self.human = human
        self.blink_injector = blink_injector
        self.staleness_ms = staleness_ms
        self.reply_timeout_s = reply_timeout_s

    def _bridge(self, request: dict) -> tuple[int, dict]:
        reply = self.executor.submit(request)
        try:
            result = reply.wait(self.reply_timeout_s)
        except ClaimConflictError as exc:
            return 409, {"error": str(exc)}
        except (TransitionError, ValueError) as exc:
            return 400, {"error": str(exc)}
        except TimeoutError as exc:
            return 503, {"error": str(exc)}
        return 200, result  # executor status dict

    def handle(
        self, method: str, path: str, query: dict[str, list[str]], body: Optional[dict]
    ) -> tuple[int, dict]:
        try:
            if method == "GET":
                return self._handle_get(path, query)
            if method == "POST":
                return self._handle_post(path, body or {})
        except NotFoundError as exc:
            return 404, {"error": f"no data for {exc.args[0]!r} yet"}
        return 404, {"error": f"no route {method} {path}"}

    def _handle_get(self, path: str, query: dict[str, list[str]]) -> tuple[int, dict]:
        if path == "/api/v1/plan":
            return 200, self.state.get("plan", self.staleness_ms)
        if path == "/api/v1/joints":
            return 200, self.state.get("joints", self.staleness_ms)
        if path == "/api/v1/markers":
            return 200, self.state.get("markers", self.staleness_ms)
        if path == "/api/v1/affective":
            return 200, self.state.get("affective", self.staleness_ms)
        if path == "/api/v1/alerts":
            since = int(query.get("since", ["0"])[0])
            try:
                alerts = self.state.get("alerts", self.staleness_ms)
            except NotFoundError:
                alerts = []
            return 200, {
                "alerts": [a for a in alerts if a.get("timestamp_ms", 0) >= since]
            }
        if path == "/api/v1/raw_eeg":
            n = int(query.get("window", [str(RAW_EEG_KEEP)])[0])
            try:
                windows = self.state.get("raw_eeg", self.staleness_ms)
            except NotFoundError:
                windows = []
            return 200, {"windows": windows[-n:]}
        return 404, {"error": f"no route GET {path}"}

    def _handle_post(self, path: str, body: dict) -> tuple[int, dict]:
        if path == "/api/v1/control":
            command = body.get("command")
            if command not in ("start", "stop", "resume"):
                return 400, {"error": f"unknown command {command!r}"}
            return self._bridge({"kind": "control", "command": command})
        if path == "/api/v1/claim":
            block = body.get("block")
            if not isinstance(block, str):
                return 400, {"error": "claim body needs a block"}
            return self._bridge({"kind": "claim", "block": block})
        if path == "/api/v1/release":
            block = body.get("block")
            if not isinstance(block, str):
                return 400, {"error": "release body needs a block"}
            return self._bridge({"kind": "release", "block": block})
        if path == "/api/v1/affect_override":
            metric = body.get("metric")
            value = body.get("value")
            if metric not in METRICS or not isinstance(value, (int, float)):
                return 400, {"error": "need metric in METRICS and numeric value"}
            self.broker.publish(
                EVENTS_TOPIC,
                {"kind": "affect_override", "metric": metric, "value": float(value)},
                on_full="drop_oldest",
            )
            return 200, {"ok": True, "metric": metric, "value": float(value)}
        if path == "/api/v1/blink":
            if self.blink_injector is None:
                return 400, {"error": "no blink injector configured"}
            self.blink_injector()
            return 200, {"ok": True}
        return 404, {"error": f"no route POST {path}"}


class ConsoleHttpServer:
    """Thin HTTP/1.1 layer over :class:`GatewayService` plus the push stream."""

    def __init__(
        self,
        service: GatewayService,
        port: int = 0,
        static_root: Optional[str] = None,
        stream_interval_s: float = 0.25,
    ) -> None:
        self.service = service
        self.static_root = Path(static_root) if static_root else None
        self.stream_interval_s = stream_interval_s
        handler = self._make_handler()
        self.httpd = ThreadingHTTPServer(("127.0.0.1", port), handler)
        self.httpd.daemon_threads = True
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    def _make_handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):  # quiet
                pass

            def _send_json(self, status: int, payload: dict) -> None:
                data = json.dumps(to_jsonable(payload)).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(data)

            def do_OPTIONS(self):
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
                self.send_header("Access-Control-Allow-Headers", "Content-Type")
                self.send_header("Content-Length", "0")
                self.end_headers()

            def do_GET(self):
                parsed = urlparse(self.path)
                if parsed.path == "/api/v1/stream":
                    self._stream()
                    return
                if server.static_root is not None and not parsed.path.startswith("/api/"):
                    self._static(parsed.path)
                    return
                status, payload = server.service.handle(
                    "GET", parsed.path, parse_qs(parsed.query), None
                )
                self._send_json(status, payload)

            def do_POST(self):
                parsed = urlparse(self.path)
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length) if length else b""
                try:
                    body = json.loads(raw) if raw else {}
                except json.JSONDecodeError:
                    self._send_json(400, {"error": "malformed JSON body"})
                    return
                status, payload = server.service.handle(
                    "POST", parsed.path, parse_qs(parsed.query), body
                )
                self._send_json(status, payload)

            def _stream(self):
                self.send_response(200)
                self.send_header("Content-Type", "application/x-ndjson")
                self.send_header("Cache-Control", "no-store")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Connection", "close")
                self.end_headers()
                pause = threading.Event()
                try:
                    while not server.service.broker.closed:
                        snapshot = panel_snapshot(server.service.state)
                        line = dumps_canonical(
                            {"ts": server.service.broker.now_ms(), "panels": snapshot}
                        )
                        self.wfile.write(line.encode() + b"\n")
                        self.wfile.flush()
                        pause.wait(server.stream_interval_s)
                except (BrokenPipeError, ConnectionResetError):
                    pass
                self.close_connection = True

            def _static(self, path: str):
                rel = "index.html" if path in ("/", "") else path.lstrip("/")
                target = (server.static_root / rel).resolve()
                if not str(target).startswith(str(server.static_root.resolve())) or (
                    not target.is_file()
                ):
                    self._send_json(404, {"error": "not found"})
                    return
                mime = {
                    ".html": "text/html",
                    ".js": "text/javascript",
                    ".css": "text/css",
                    ".map": "application/json",
                }.get(target.suffix, "application/octet-stream")
                data = target.read_bytes()
                self.send_response(200)
                self.send_header("Content-Type", mime)
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        return Handler

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=2)
