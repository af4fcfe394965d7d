"""Simulated 2-DOF pan/tilt robot.

The robot consumes timestamped tick commands and tracks them with a
first-order rate limit: each axis moves toward its target by at most
``max_speed_dps * dt`` (converted to ticks) per update, never overshooting.
There is no inertia model; the rate limit is the only dynamic.
"""
from __future__ import annotations

import asyncio
from dataclasses import dataclass
from typing import Iterable, Sequence

from .client import RelayClient, RelayConnectionLost
from .model import (
    TICK_MAX,
    TICK_SPAN_DEG,
    ServoTicks,
    TrajectorySample,
    ticks_to_degrees,
)
from .wire import PosePayload, topic_robot_cmd, topic_robot_state


@dataclass(frozen=True)
class ServoConfig:
    max_speed_dps: float = 360.0
    timestep_ms: int = 20

    def __post_init__(self) -> None:
        if self.max_speed_dps <= 0:
            raise ValueError("max_speed_dps must be > 0")
        if self.timestep_ms <= 0:
            raise ValueError("timestep_ms must be > 0")

    def max_step_ticks(self, dt_ms: int) -> int:
        """Largest per-axis tick move the servo can make in dt_ms."""
        return int(round(self.max_speed_dps * dt_ms / 1000.0 * TICK_MAX / TICK_SPAN_DEG))


@dataclass(frozen=True)
class RobotState:
    current: ServoTicks
    target: ServoTicks
    last_update: int = 0


def command(state: RobotState, target: ServoTicks) -> RobotState:
    """Replace the target; the pose only moves when time advances in step()."""
    return RobotState(current=state.current, target=target, last_update=state.last_update)


def _move_axis(current: int, target: int, limit: int) -> int:
    delta = target - current
    if delta > limit:
        return current + limit
    if delta < -limit:
        return current - limit
    return target


def step(state: RobotState, dt_ms: int, config: ServoConfig) -> RobotState:
    if dt_ms <= 0:
        return state
    limit = config.max_step_ticks(dt_ms)
    current = ServoTicks(
        pan_ticks=_move_axis(state.current.pan_ticks, state.target.pan_ticks, limit),
        tilt_ticks=_move_axis(state.current.tilt_ticks, state.target.tilt_ticks, limit),
    )
    return RobotState(current=current, target=state.target, last_update=state.last_update + dt_ms)


def _advance(state: RobotState | None, t_ms: int, target: ServoTicks, config: ServoConfig) -> RobotState:
    """Apply one timestamped command. A first command, or a command whose
    timestamp runs backwards (a replay restarting its clock), snaps the pose."""
    if state is None or t_ms < state.last_update:
        return RobotState(current=target, target=target, last_update=t_ms)
    if t_ms == state.last_update:
        return command(state, target)
    moved = step(state, t_ms - state.last_update, config)
    return RobotState(current=moved.current, target=target, last_update=t_ms)


def trace_ticks(
    commands: Iterable[tuple[int, ServoTicks]],
    config: ServoConfig | None = None,
) -> list[tuple[int, ServoTicks]]:
    """Achieved tick pose at each command timestamp."""
    config = config or ServoConfig()
    state: RobotState | None = None
    out: list[tuple[int, ServoTicks]] = []
    for t_ms, target in commands:
        state = _advance(state, t_ms, target, config)
        out.append((t_ms, state.current))
    return out


def trace(
    commands: Iterable[tuple[int, ServoTicks]],
    config: ServoConfig | None = None,
) -> list[TrajectorySample]:
    """Achieved-pose trace in degrees, one sample per command."""
    return [
        TrajectorySample(t_ms=t_ms, pose=ticks_to_degrees(ticks))
        for t_ms, ticks in trace_ticks(commands, config)
    ]


class RobotService:
    """Relay-attached robot: consumes robot/<id>/cmd, echoes robot/<id>/state.

    The state payload carries the seq and t_ms of the command that produced
    it, so downstream recorders can align samples with the command clock.
    """

    def __init__(self, client: RelayClient, session_id: str, config: ServoConfig | None = None):
        self.client = client
        self.session_id = session_id
        self.config = config or ServoConfig()
        self.state: RobotState | None = None
        self._task: asyncio.Task | None = None

    async def start(self) -> None:
        self._sub = await self.client.subscribe(topic_robot_cmd(self.session_id))
        self._task = asyncio.ensure_future(self._run())

    async def _run(self) -> None:
        state_topic = topic_robot_state(self.session_id)
        try:
            while True:
                frame = await self._sub.get()
                try:
                    cmd = PosePayload.decode(frame.payload)
                except Exception:
                    continue  # malformed command frames are dropped, not fatal
                target = ServoTicks(cmd.pan_ticks, cmd.tilt_ticks)
                self.state = _advance(self.state, cmd.t_ms, target, self.config)
                echo = PosePayload(
                    seq=cmd.seq,
                    t_ms=cmd.t_ms,
                    pan_ticks=self.state.current.pan_ticks,
                    tilt_ticks=self.state.current.tilt_ticks,
                )
                await self.client.publish(state_topic, echo.encode())
        except (RelayConnectionLost, asyncio.CancelledError):
            pass

    async def stop(self) -> None:
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass
            self._task = None


def run_script(
    script: Sequence[ServoTicks],
    timestep_ms: int = 20,
    config: ServoConfig | None = None,
) -> list[tuple[int, ServoTicks]]:
    """Convenience: feed a tick script at a fixed timestep starting at t=0."""
    cmds = [(i * timestep_ms, ticks) for i, ticks in enumerate(script)]
    return trace_ticks(cmds, config)
