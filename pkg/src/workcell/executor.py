"""Robot agent: plan execution in simulated time with human interruption.

The executor owns the world state and the current plan. Each tick it moves
the arm toward the active action's target at fixed speed; when the target
is reached the action is applied to the world and workspace events are
emitted. Claims arriving from the human exclude blocks and trigger an
online replan from the current state; STOP commands freeze motion within
the tick they are processed.

Kinematics are deliberately simple: blocks live on a fixed grid over a 1 m
table, the end effector moves in straight lines, and the joint vector is an
analytic function of the effector position. Continuity and a plausible
joint feed for the dashboard are all that matters here.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Optional

from .bus import Broker, Consumer, QueueName, to_jsonable
from .planner import bfs_plan
from .world import Domain, GroundAction, RewardConfig, WorldState

TICK_HZ = 20
ARM_SPEED_M_S = 0.4
REACH_MIN_M = 0.3
INFLUENCE_MARGIN_M = 0.1
FLOOR_CIRCLE_FACTOR = 0.5

BLOCK_SIZE_M = 0.05
TABLE_Y = 0.35
HOME_POSE = (0.0, 0.0, 0.3)

STATUS_TOPIC = "exec_status"
POSE_TOPIC = "arm_pose"
MARKERS_TOPIC = "markers"
EVENTS_TOPIC = "workspace_events"

PICKUP_NEXT = "pickup_next"
RESERVED_LATER = "reserved_later"
CLAIMED_FADED = "claimed_faded"


class TransitionError(RuntimeError):
    """An executor control call arrived in an incompatible state."""


class ClaimConflictError(RuntimeError):
    """The human tried to claim the block the robot is holding."""


@dataclass(frozen=True)
class IntentionAnnotation:
    block: str
    marker: str
    plan_step: int

    def to_dict(self) -> dict:
        return {"block": self.block, "marker": self.marker, "plan_step": self.plan_step}


def joints_from_effector(pos: tuple[float, float, float]) -> tuple[float, ...]:
    """Six bounded joint angles synthesized from the effector position."""
    x, y, z = pos
    r = math.hypot(x, y)
    j0 = math.atan2(y, x) if r > 1e-9 else 0.0
    j1 = math.atan2(z - 0.1, r + 0.2)
    j2 = -0.5 * j1
    j3 = 0.3 * math.sin(j0)
    j4 = max(-1.0, min(1.0, r)) * 0.8
    j5 = 0.2 * math.sin(2 * j0)
    return (j0, j1, j2, j3, j4, j5)


def influence_radius(
    effector: tuple[float, float, float],
    target: Optional[tuple[float, float, float]],
) -> dict:
    """Safety geometry: reach sphere around the base, circle under the target."""
    dist = math.sqrt(sum(c * c for c in effector))
    sphere = max(REACH_MIN_M, dist + INFLUENCE_MARGIN_M)
    out: dict = {"sphere_radius_m": sphere, "floor_circle": None}
    if target is not None:
        out["floor_circle"] = {
            "center": [target[0], target[1], 0.0],
            "radius_m": FLOOR_CIRCLE_FACTOR * effector[2],
        }
    return out


class RobotExecutor:
    """Simulated arm executing plans step by step.

    All mutation happens on the owner's thread: control requests (start,
    stop, claim, ...) may be submitted from other threads via
    :meth:`submit` and are applied between ticks by :meth:`drain_commands`.
    """

    def __init__(
        self,
        domain: Domain,
        broker: Broker,
        reward_cfg: RewardConfig | None = None,
        initial: WorldState | None = None,
        speed_m_s: float = ARM_SPEED_M_S,
    ) -> None:
        self.domain = domain
        self.broker = broker
        self.reward_cfg = reward_cfg or RewardConfig()
        self.world = initial if initial is not None else WorldState.initial(domain.blocks)
        self.speed = speed_m_s
        self.state = "idle"
        self.plan: Optional[list[GroundAction]] = []
        self.step_index = 0
        self.claimed: set[str] = set()
        self.halt_cause: Optional[str] = None
        self.held_block: Optional[str] = None
        self.effector = HOME_POSE
        self._target: Optional[tuple[float, float, float]] = None
        self.positions = self._layout(domain.blocks)
        self._home_cells = dict(self.positions)
        self._commands = Consumer(broker, QueueName.ROBOT_COMMAND.value, "executor")
        self._inbox: list[tuple[dict, Callable[[object], None] | None]] = []
        self._inbox_lock = threading.Lock()
        self.executed: list[GroundAction] = []
        self.steps_done = 0

    # -- geometry ---------------------------------------------------------

    @staticmethod
    def _layout(blocks: tuple[str, ...]) -> dict[str, tuple[float, float, float]]:
        n = len(blocks)
        xs = [0.15 + 0.7 * i / max(1, n - 1) for i in range(n)]
        return {
            b: (xs[i], TABLE_Y, BLOCK_SIZE_M / 2) for i, b in enumerate(blocks)
        }

    def _stack_top(self, base: str) -> tuple[float, float, float]:
        x, y, z = self.positions[base]
        return (x, y, z + BLOCK_SIZE_M)

    def _action_target(self, action: GroundAction) -> tuple[float, float, float]:
        k = action.kind
        if k == "pickup":
            return self.positions[action.params[0]]
        if k == "putdown":
            return self._home_cells[action.params[0]]
        if k == "stack":
            return self._stack_top(action.params[1])
        # form3tower: inspect the tower top
        return self._stack_top(action.params[2])

    # -- control ----------------------------------------------------------

    def start(self) -> dict:
        if self.state not in ("idle", "done"):
            raise TransitionError(f"cannot start while {self.state}")
        self._emit_event({"kind": "run_started"})
        self._replan()
        if self.plan is None:
            self.state = "halted"
            self.halt_cause = "no_plan"
        else:
            self.state = "running"
            self.halt_cause = None
        return self.status()

    def stop(self, cause: str = "operator") -> dict:
        if self.state not in ("running", "halted"):
            raise TransitionError(f"cannot stop while {self.state}")
        self.state = "halted"
        self.halt_cause = cause
        self._emit_event({"kind": "stopped", "cause": cause})
        return self.status()

    def resume(self) -> dict:
        if self.state != "halted":
            raise TransitionError(f"cannot resume while {self.state}")
        if self.plan is None:
            raise TransitionError("cannot resume without a plan")
        self.state = "running"
        self.halt_cause = None
        self._emit_event({"kind": "resumed"})
        return self.status()

    def claim(self, block: str) -> dict:
        if block not in self.domain.blocks:
            raise ValueError(f"unknown block {block!r}")
        if block == self.held_block:
            raise ClaimConflictError(f"robot is holding {block}")
        if block not in self.claimed:
            self.claimed.add(block)
            self._emit_event({"kind": "claim", "block": block})
            remaining = self.plan[self.step_index :] if self.plan else []
            if any(block in a.blocks for a in remaining):
                self._replan()
        return self.status()

    def release(self, block: str) -> dict:
        if block in self.claimed:
            self.claimed.discard(block)
            self._emit_event({"kind": "release", "block": block})
            if self.state == "halted" and self.halt_cause == "no_plan":
                self._replan()
                if self.plan is not None:
                    self.state = "running"
                    self.halt_cause = None
        return self.status()

    def _replan(self, announce: bool = True) -> None:
        plan = bfs_plan(self.domain, self.world, frozenset(self.claimed))
        self.plan = plan
        self.step_index = 0
        self._target = None
        if plan is None:
            if self.state == "running":
                self.state = "halted"
                self.halt_cause = "no_plan"
            if announce:
                self._emit_event({"kind": "plan_failed"})
            return
        if announce:
            self._emit_event(
                {"kind": "plan_changed", "plan": [str(a) for a in plan]}
            )

    # -- cross-thread command bridge ---------------------------------------

    def submit(self, request: dict) -> "PendingReply":
        """Queue a control request; it is applied between ticks."""
        reply = PendingReply()
        with self._inbox_lock:
            self._inbox.append((request, reply.set))
        return reply

    def _apply_request(self, request: dict) -> object:
        kind = request.get("kind")
        if kind == "control":
            command = request.get("command", "")
            if command == "start":
                return self.start()
            if command == "stop":
                return self.stop(request.get("cause", "operator"))
            if command == "resume":
                return self.resume()
            raise ValueError(f"unknown command {command!r}")
        if kind == "claim":
            return self.claim(request["block"])
        if kind == "release":
            return self.release(request["block"])
        raise ValueError(f"unknown request {kind!r}")

    def drain_commands(self) -> None:
        """Apply queued ROBOT_COMMAND messages and control requests."""
        for msg in self._commands.drain():
            body = msg.body if isinstance(msg.body, dict) else to_jsonable(msg.body)
            command = body.get("command")
            cause = body.get("cause", "command")
            try:
                if command == "STOP" and self.state == "running":
                    self.stop(cause)
                elif command in ("RESUME",) and self.state == "halted":
                    self.resume()
                elif command == "START" and self.state in ("idle", "done"):
                    self.start()
            except TransitionError:
                pass
        with self._inbox_lock:
            pending = self._inbox
            self._inbox = []
        for request, callback in pending:
            try:
                result = self._apply_request(request)
            except Exception as exc:  # reply carries the error to the caller
                result = exc
            if callback is not None:
                callback(result)

    # -- simulation ---------------------------------------------------------

    def tick(self, dt: float) -> list[dict]:
        """Advance simulated time; returns the workspace events emitted."""
        events: list[dict] = []
        if self.state == "running" and self.plan is not None:
            if self.step_index >= len(self.plan):
                self.state = "done"
            else:
                action = self.plan[self.step_index]
                if self._target is None:
                    self._target = self._action_target(action)
                reached = self._advance_arm(dt)
                if reached:
                    events.extend(self._execute(action))
        self._publish_snapshots()
        return events

    def _advance_arm(self, dt: float) -> bool:
        assert self._target is not None
        ex, ey, ez = self.effector
        tx, ty, tz = self._target
        dx, dy, dz = tx - ex, ty - ey, tz - ez
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        step = self.speed * dt
        if dist <= step:
            self.effector = self._target
            return True
        f = step / dist
        self.effector = (ex + dx * f, ey + dy * f, ez + dz * f)
        if self.held_block is not None:
            self.positions[self.held_block] = self.effector
        return False

    def _execute(self, action: GroundAction) -> list[dict]:
        self.world, _ = self.domain.apply(self.world, action, self.reward_cfg)
        events: list[dict] = []
        k = action.kind
        if k == "pickup":
            block = action.params[0]
            self.held_block = block
            self.positions[block] = self.effector
            events.append({"kind": "robot_grasped", "block": block})
        elif k == "putdown":
            block = action.params[0]
            self.positions[block] = self._home_cells[block]
            self.held_block = None
        elif k == "stack":
            x, y = action.params
            self.positions[x] = self._stack_top(y)
            self.held_block = None
        events.append(
            {"kind": "action_done", "action": str(action), "step": self.step_index}
        )
        self.executed.append(action)
        self.steps_done += 1
        if self.domain.is_goal(self.world) and k == "form3tower":
            events.append({"kind": "goal_completed"})
        self.step_index += 1
        self._target = None
        if self.step_index >= len(self.plan):
            self.state = "done"
        for ev in events:
            self._emit_event(ev)
        return events

    def _emit_event(self, event: dict) -> None:
        self.broker.publish(EVENTS_TOPIC, event, on_full="drop_oldest")

    # -- snapshots -----------------------------------------------------------

    def annotations(self) -> list[IntentionAnnotation]:
        """Markers mirroring the remaining plan plus human claims."""
        out = [IntentionAnnotation(b, CLAIMED_FADED, -1) for b in sorted(self.claimed)]
        if not self.plan:
            return out
        remaining = list(enumerate(self.plan))[self.step_index :]
        arrow_block: Optional[str] = None
        arrow_step = -1
        for step, action in remaining:
            if action.kind == "pickup":
                arrow_block = action.params[0]
                arrow_step = step
                break
        seen: set[str] = set()
        if arrow_block is not None:
            out.append(IntentionAnnotation(arrow_block, PICKUP_NEXT, arrow_step))
            seen.add(arrow_block)
        for step, action in remaining:
            for b in action.blocks:
                if b not in seen and b not in self.claimed:
                    out.append(IntentionAnnotation(b, RESERVED_LATER, step))
                    seen.add(b)
        return out

    def pose(self) -> dict:
        return {
            "end_effector": list(self.effector),
            "joints": list(joints_from_effector(self.effector)),
            "target_block": self.held_block,
        }

    def influence(self) -> dict:
        return influence_radius(self.effector, self._target)

    def status(self) -> dict:
        return {
            "state": self.state,
            "plan": [str(a) for a in self.plan] if self.plan else [],
            "step_index": self.step_index,
            "claimed": sorted(self.claimed),
            "halt_cause": self.halt_cause,
            "goal_reached": self.domain.is_goal(self.world),
        }

    def markers(self) -> dict:
        return {
            "annotations": [a.to_dict() for a in self.annotations()],
            "influence": self.influence(),
            "blocks": {b: list(p) for b, p in sorted(self.positions.items())},
        }

    def _publish_snapshots(self) -> None:
        self.broker.publish(STATUS_TOPIC, self.status(), on_full="drop_oldest")
        self.broker.publish(POSE_TOPIC, self.pose(), on_full="drop_oldest")
        self.broker.publish(MARKERS_TOPIC, self.markers(), on_full="drop_oldest")


class PendingReply:
    """Tiny future for control requests crossing into the executor thread."""

    def __init__(self) -> None:
        self._event = threading.Event()
        self._value: object = None

    def set(self, value: object) -> None:
        self._value = value
        self._event.set()

    def wait(self, timeout_s: float = 1.0) -> object:
        if not self._event.wait(timeout_s):
            raise TimeoutError("executor did not answer in time")
        if isinstance(self._value, Exception):
            raise self._value
        return self._value
