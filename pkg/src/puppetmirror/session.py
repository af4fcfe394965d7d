"""Expression-design session engine.

A session walks a designer through six emotions. For each emotion: calibrate
the puppet to a known start pose, practice freely, record a take of at most
5 seconds, review the take replayed on the robot, then accept it or redo.

The :class:`Session` core is network-free and synchronous; it reports
through callbacks. :class:`SessionService` adapts it to the relay.
"""
from __future__ import annotations

import asyncio
import dataclasses
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Optional

from .client import RelayClient
from .model import (
    CALIBRATION_PAN_DEG,
    CALIBRATION_TILT_DEG,
    DEFAULT_TIMESTEP_MS,
    EMOTION_ORDER,
    MAX_CLIP_MS,
    EmotionLabel,
    ExpressionClip,
    Pose,
    TrajectorySample,
    degrees_to_ticks,
    quantize_degrees,
    ticks_to_degrees,
)
from .wire import (
    PosePayload,
    topic_puppet_pose,
    topic_robot_cmd,
    topic_robot_state,
    topic_session_ctl,
    topic_session_status,
)

CALIBRATION_TOLERANCE_DEG = 5.0

EVENTS = ("calibrate", "practice", "record", "stop", "accept", "redo", "advance")


class Phase(str, Enum):
    IDLE = "Idle"
    CALIBRATING = "Calibrating"
    PRACTICING = "Practicing"
    RECORDING = "Recording"
    REVIEWING = "Reviewing"
    EMOTION_DONE = "EmotionDone"
    SESSION_COMPLETE = "SessionComplete"


class SessionProtocolError(Exception):
    """An operator event that the current phase does not admit."""


class EmptyClip(Exception):
    """Recording stopped before any sample arrived."""


@dataclass(frozen=True)
class SessionPlan:
    session_id: str
    designer_id: str
    emotion_order: tuple[EmotionLabel, ...] = EMOTION_ORDER
    timestep_ms: int = DEFAULT_TIMESTEP_MS

    def __post_init__(self) -> None:
        if not self.session_id or not self.designer_id:
            raise ValueError("session_id and designer_id are required")
        if self.timestep_ms <= 0:
            raise ValueError("timestep_ms must be > 0")
        if sorted(e.value for e in self.emotion_order) != sorted(e.value for e in EMOTION_ORDER):
            raise ValueError("emotion_order must be a permutation of the six emotions")

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "designer_id": self.designer_id,
            "emotion_order": [e.value for e in self.emotion_order],
            "timestep_ms": self.timestep_ms,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionPlan":
        order = tuple(EmotionLabel(v) for v in data.get("emotion_order", [e.value for e in EMOTION_ORDER]))
        return cls(
            session_id=data["session_id"],
            designer_id=data["designer_id"],
            emotion_order=order,
            timestep_ms=int(data.get("timestep_ms", DEFAULT_TIMESTEP_MS)),
        )


def load_plan(path) -> SessionPlan:
    with open(path, "r", encoding="utf-8") as fh:
        return SessionPlan.from_dict(json.load(fh))


def _default_now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class Session:
    """Single-owner state machine; all mutation happens in handle_* calls.

    Callbacks:
      on_status(dict)        fired after every phase change (and when the
                             calibration gate flips while calibrating)
      on_command(PosePayload) every command the engine sends to the robot
      on_clip(ExpressionClip) a take to persist; re-fired with final=True on
                             accept (persist = overwrite by clip_id)
    """

    plan: SessionPlan
    on_status: Optional[Callable[[dict], None]] = None
    on_command: Optional[Callable[[PosePayload], None]] = None
    on_clip: Optional[Callable[[ExpressionClip], None]] = None
    now_fn: Callable[[], str] = _default_now

    phase: Phase = Phase.IDLE
    iteration: int = 1
    elapsed_ms: int = 0
    clips: list = field(default_factory=list)

    def __post_init__(self) -> None:
        self._emotion_idx = -1
        self._calibration_ok = False
        self._last_pose: Pose | None = None
        self._cmd_seq = 0
        self._cmd_t = 0
        self._recording = False
        self._record_from_t = 0
        self._samples: list[TrajectorySample] = []
        self._last_clip_id: str | None = None

    # -- state inspection ---------------------------------------------------

    @property
    def current_emotion(self) -> EmotionLabel | None:
        if 0 <= self._emotion_idx < len(self.plan.emotion_order):
            if self.phase not in (Phase.IDLE, Phase.SESSION_COMPLETE):
                return self.plan.emotion_order[self._emotion_idx]
        return None

    def snapshot(self) -> dict:
        emotion = self.current_emotion
        return {
            "session_id": self.plan.session_id,
            "phase": self.phase.value,
            "emotion": emotion.value if emotion else None,
            "iteration": self.iteration,
            "elapsed_ms": self.elapsed_ms,
            "calibration_ok": self._calibration_ok,
            "clip_id": self._last_clip_id,
            "emotion_index": self._emotion_idx,
        }

    # -- event handling -----------------------------------------------------

    def handle_ctl(self, event: str) -> None:
        event = event.strip().lower()
        if event not in EVENTS:
            raise SessionProtocolError(f"unknown event {event!r}")
        handler = {
            "calibrate": self._ev_calibrate,
            "practice": self._ev_practice,
            "record": self._ev_record,
            "stop": self._ev_stop,
            "accept": self._ev_accept,
            "redo": self._ev_redo,
            "advance": self._ev_advance,
        }[event]
        handler()

    def _reject(self, event: str) -> None:
        raise SessionProtocolError(f"event {event!r} not allowed in phase {self.phase.value}")

    def _ev_calibrate(self) -> None:
        if self.phase == Phase.IDLE:
            self._emotion_idx = 0
            self.iteration = 1
        elif self.phase == Phase.EMOTION_DONE:
            # another take of the same emotion after it was already accepted
            self.iteration += 1
        else:
            self._reject("calibrate")
        self._enter_calibrating()

    def _ev_practice(self) -> None:
        if self.phase != Phase.CALIBRATING:
            self._reject("practice")
        self._calibration_ok = self._gate(self._last_pose)
        if not self._calibration_ok:
            raise SessionProtocolError("calibration pose not reached")
        self.phase = Phase.PRACTICING
        self._emit_status()

    def _ev_record(self) -> None:
        if self.phase != Phase.PRACTICING:
            self._reject("record")
        self.phase = Phase.RECORDING
        self._recording = True
        self._record_from_t = self._cmd_t
        self._samples = []
        self.elapsed_ms = 0
        self._emit_status()

    def _ev_stop(self) -> None:
        if self.phase != Phase.RECORDING:
            self._reject("stop")
        if not self._samples:
            self._recording = False
            self.phase = Phase.PRACTICING
            self._emit_status()
            raise EmptyClip("no samples recorded before stop")
        self._finish_recording()

    def _ev_accept(self) -> None:
        if self.phase != Phase.REVIEWING:
            self._reject("accept")
        emotion = self.current_emotion
        for i, clip in enumerate(self.clips):
            if clip.final and clip.emotion == emotion:
                demoted = dataclasses.replace(clip, final=False)
                self.clips[i] = demoted
                self._emit_clip(demoted)
        latest = self.clips[-1]
        accepted = dataclasses.replace(latest, final=True)
        self.clips[-1] = accepted
        self._emit_clip(accepted)
        self.phase = Phase.EMOTION_DONE
        self._emit_status()

    def _ev_redo(self) -> None:
        if self.phase != Phase.REVIEWING:
            self._reject("redo")
        self.iteration += 1
        self.elapsed_ms = 0
        self.phase = Phase.PRACTICING
        self._emit_status()

    def _ev_advance(self) -> None:
        if self.phase != Phase.EMOTION_DONE:
            self._reject("advance")
        self._emotion_idx += 1
        self.elapsed_ms = 0
        if self._emotion_idx >= len(self.plan.emotion_order):
            self.phase = Phase.SESSION_COMPLETE
            self._emit_status()
            return
        self.iteration = 1
        self._enter_calibrating()

    def _enter_calibrating(self) -> None:
        self.phase = Phase.CALIBRATING
        self._calibration_ok = False
        self.elapsed_ms = 0
        self._send_command(degrees_to_ticks(Pose(CALIBRATION_PAN_DEG, CALIBRATION_TILT_DEG)))
        self._emit_status()

    # -- telemetry ----------------------------------------------------------

    def on_puppet_pose(self, payload: PosePayload) -> None:
        pose = ticks_to_degrees_payload(payload)
        self._last_pose = pose
        if self.phase == Phase.CALIBRATING:
            ok = self._gate(pose)
            if ok != self._calibration_ok:
                self._calibration_ok = ok
                self._emit_status()
        if self.phase in (Phase.CALIBRATING, Phase.PRACTICING, Phase.RECORDING):
            self._send_command(degrees_to_ticks(pose))

    def on_robot_state(self, payload: PosePayload) -> None:
        if not self._recording or payload.t_ms < self._record_from_t:
            return
        clip_t = payload.t_ms - self._record_from_t
        if clip_t > MAX_CLIP_MS:
            self._finish_recording()
            return
        pose = ticks_to_degrees_payload(payload)
        sample = TrajectorySample(
            t_ms=clip_t,
            pose=Pose(quantize_degrees(pose.pan), quantize_degrees(pose.tilt)),
        )
        self._samples.append(sample)
        self.elapsed_ms = clip_t
        if clip_t == MAX_CLIP_MS:
            self._finish_recording()

    # -- internals ----------------------------------------------------------

    def _gate(self, pose: Pose | None) -> bool:
        if pose is None:
            return False
        return (
            abs(pose.pan - CALIBRATION_PAN_DEG) <= CALIBRATION_TOLERANCE_DEG
            and abs(pose.tilt - CALIBRATION_TILT_DEG) <= CALIBRATION_TOLERANCE_DEG
        )

    def _send_command(self, ticks) -> None:
        payload = PosePayload(
            seq=self._cmd_seq,
            t_ms=self._cmd_t,
            pan_ticks=ticks.pan_ticks,
            tilt_ticks=ticks.tilt_ticks,
        )
        self._cmd_seq += 1
        self._cmd_t += self.plan.timestep_ms
        if self.on_command is not None:
            self.on_command(payload)

    def _finish_recording(self) -> None:
        self._recording = False
        emotion = self.current_emotion
        assert emotion is not None
        clip = ExpressionClip(
            clip_id=f"{self.plan.session_id}-{emotion.value}-{self.iteration:02d}",
            emotion=emotion,
            designer_id=self.plan.designer_id,
            iteration=self.iteration,
            timestep_ms=self.plan.timestep_ms,
            samples=tuple(self._samples),
            final=False,
            recorded_at=self.now_fn(),
        )
        clip.validate()
        self.clips.append(clip)
        self._last_clip_id = clip.clip_id
        self._emit_clip(clip)
        self.phase = Phase.REVIEWING
        self._emit_status()
        self._replay(clip)

    def _replay(self, clip: ExpressionClip) -> None:
        """Re-publish the take to the robot; the payload sequence is a pure
        function of the stored samples (seq from 0, t from the clip)."""
        if self.on_command is None:
            return
        for seq, sample in enumerate(clip.samples):
            ticks = degrees_to_ticks(sample.pose)
            self.on_command(
                PosePayload(seq=seq, t_ms=sample.t_ms, pan_ticks=ticks.pan_ticks, tilt_ticks=ticks.tilt_ticks)
            )

    def _emit_status(self) -> None:
        if self.on_status is not None:
            self.on_status(self.snapshot())

    def _emit_clip(self, clip: ExpressionClip) -> None:
        if self.on_clip is not None:
            self.on_clip(clip)


def ticks_to_degrees_payload(payload: PosePayload) -> Pose:
    from .model import ServoTicks

    return ticks_to_degrees(ServoTicks(payload.pan_ticks, payload.tilt_ticks))


class SessionService:
    """Relay adapter: one ordered intake queue over ctl/pose/state topics.

    Replay commands are paced at the plan timestep unless pace=False, which
    makes full-session runs instantaneous and deterministic.
    """

    def __init__(
        self,
        client: RelayClient,
        plan: SessionPlan,
        clip_sink: Optional[Callable[[ExpressionClip], None]] = None,
        pace: bool = True,
        now_fn: Callable[[], str] = _default_now,
    ):
        self.client = client
        self.plan = plan
        self.pace = pace
        self.clip_sink = clip_sink
        self.ready = asyncio.Event()  # set once all subscriptions are live
        self._outbox: list[tuple[str, bytes, bool]] = []
        self._replay_burst = False
        self.session = Session(
            plan,
            on_status=self._queue_status,
            on_command=self._queue_command,
            on_clip=self._sink_clip,
            now_fn=now_fn,
        )
        self._status_topic = topic_session_status(plan.session_id)
        self._cmd_topic = topic_robot_cmd(plan.session_id)

    def _queue_status(self, status: dict) -> None:
        data = json.dumps(status, sort_keys=True).encode("utf-8")
        self._outbox.append((self._status_topic, data, False))

    def _queue_command(self, payload: PosePayload) -> None:
        # pace only replay bursts; live forwards are already paced upstream
        self._outbox.append((self._cmd_topic, payload.encode(), self._replay_burst))

    def _sink_clip(self, clip: ExpressionClip) -> None:
        if self.clip_sink is not None:
            self.clip_sink(clip)

    async def _flush(self) -> None:
        outbox, self._outbox = self._outbox, []
        for topic, data, paced in outbox:
            await self.client.publish(topic, data)
            if paced and self.pace:
                await asyncio.sleep(self.plan.timestep_ms / 1000.0)

    async def run(self) -> None:
        """Serve until the session reaches SessionComplete."""
        queue: asyncio.Queue = asyncio.Queue()
        sid = self.plan.session_id
        ctl = topic_session_ctl(sid)
        pose = topic_puppet_pose(sid)
        state = topic_robot_state(sid)
        sub = await self.client.subscribe(ctl, queue)
        await self.client.subscribe(pose, queue)
        await self.client.subscribe(state, queue)
        self.ready.set()
        while self.session.phase != Phase.SESSION_COMPLETE:
            frame = await sub.get()
            try:
                if frame.topic == ctl:
                    event = frame.payload.decode("utf-8", "replace")
                    self._dispatch_ctl(event)
                elif frame.topic == pose:
                    self.session.on_puppet_pose(PosePayload.decode(frame.payload))
                elif frame.topic == state:
                    self._with_replay_pacing(PosePayload.decode(frame.payload))
            except (SessionProtocolError, EmptyClip) as exc:
                self._queue_status(
                    {
                        "error": "empty_clip" if isinstance(exc, EmptyClip) else "protocol",
                        "detail": str(exc),
                        **self.session.snapshot(),
                    }
                )
            except ValueError as exc:  # malformed payloads
                self._queue_status({"error": "payload", "detail": str(exc), **self.session.snapshot()})
            await self._flush()
        await self._flush()

    def _dispatch_ctl(self, event: str) -> None:
        self._replay_burst = True
        try:
            self.session.handle_ctl(event)
        finally:
            self._replay_burst = False

    def _with_replay_pacing(self, payload: PosePayload) -> None:
        # a robot state can trigger auto-stop, whose replay should be paced
        self._replay_burst = True
        try:
            self.session.on_robot_state(payload)
        finally:
            self._replay_burst = False
