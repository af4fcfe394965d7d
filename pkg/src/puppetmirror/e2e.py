"""Full-pipeline run on loopback: relay, robot, session engine, scripted
puppet, clip store, and analysis report, wired only through the relay
protocol. Deterministic when run with a fixed seed and pace=False (virtual
timestamps, no wall-clock pacing)."""
from __future__ import annotations

import asyncio
import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .broker import FaultProfile, RelayBroker
from .client import RelayClient
from .model import (
    CALIBRATION_POSE,
    DEFAULT_TIMESTEP_MS,
    EMOTION_ORDER,
    EmotionLabel,
    degrees_to_ticks,
)
from .puppet import WaveformSpec, generate_poses, play_poses
from .report import write_report
from .robot import RobotService, ServoConfig
from .session import SessionPlan, SessionService
from .store import load_clip, scan
from .wire import PosePayload, topic_puppet_pose, topic_session_ctl, topic_session_status

STATUS_TIMEOUT_S = 30.0

# One synthetic script per emotion, centered on the calibration pose. The
# step waveform deliberately exceeds the servo rate limit: abruptness is the
# point of the surprise template.
DEFAULT_SCRIPTS: dict[EmotionLabel, WaveformSpec] = {
    EmotionLabel.HAPPINESS: WaveformSpec(
        "sine", "tilt", amplitude_deg=15.0, frequency_hz=1.5, center_pan_deg=-90.0
    ),
    EmotionLabel.ANGER: WaveformSpec(
        "triangle", "pan", amplitude_deg=25.0, frequency_hz=1.2, center_pan_deg=-90.0
    ),
    EmotionLabel.SADNESS: WaveformSpec(
        "triangle", "tilt", amplitude_deg=-40.0, frequency_hz=0.05, center_pan_deg=-90.0
    ),
    EmotionLabel.FEAR: WaveformSpec(
        "gaussian-bell", "tilt", amplitude_deg=-35.0, center_pan_deg=-90.0
    ),
    EmotionLabel.SURPRISE: WaveformSpec(
        "step", "pan", amplitude_deg=35.0, center_pan_deg=-90.0
    ),
    EmotionLabel.DISGUST: WaveformSpec(
        "sine", "pan", amplitude_deg=10.0, frequency_hz=0.4, center_pan_deg=-90.0
    ),
}


class StageError(RuntimeError):
    """A pipeline stage failed; the message carries the stage tag."""


class VirtualClock:
    """Deterministic recorded_at source for no-pace runs."""

    def __init__(self, step_ms: int = DEFAULT_TIMESTEP_MS):
        self.epoch = datetime(2000, 1, 1, tzinfo=timezone.utc)
        self.step_ms = step_ms
        self._calls = 0

    def __call__(self) -> str:
        stamp = self.epoch + timedelta(milliseconds=self._calls * self.step_ms)
        self._calls += 1
        return stamp.isoformat()


async def _await_status(sub, pred, stage: str, timeout: float = STATUS_TIMEOUT_S) -> dict:
    while True:
        try:
            frame = await sub.get(timeout)
        except asyncio.TimeoutError as exc:
            raise StageError(f"[{stage}] timed out waiting for session status") from exc
        status = json.loads(frame.payload.decode("utf-8"))
        if "error" in status:
            raise StageError(f"[{stage}] session reported {status['error']}: {status.get('detail')}")
        if pred(status):
            return status


async def run_end_to_end(
    out_dir,
    session_id: str = "e2e",
    designer_id: str = "scripted",
    seed: int = 0,
    pace: bool = False,
    latency_ms: int = 0,
    jitter_ms: int = 0,
    max_speed_dps: float = 360.0,
    timestep_ms: int = DEFAULT_TIMESTEP_MS,
    scripts: dict[EmotionLabel, WaveformSpec] | None = None,
    figures: bool = True,
) -> dict:
    out_dir = Path(out_dir)
    clips_dir = out_dir / "clips"
    scripts = scripts or DEFAULT_SCRIPTS
    plan = SessionPlan(
        session_id=session_id,
        designer_id=designer_id,
        emotion_order=EMOTION_ORDER,
        timestep_ms=timestep_ms,
    )

    broker = RelayBroker(
        faults=FaultProfile(base_latency_ms=latency_ms, jitter_ms=jitter_ms, drop_probability=0.0),
        seed=seed,
    )
    try:
        await broker.start(host="127.0.0.1", port=0, ws_port=None)
    except OSError as exc:
        raise StageError(f"[relay] cannot start: {exc}") from exc

    robot_client = session_client = driver_client = None
    robot = None
    service_task = None
    try:
        robot_client = await RelayClient.connect(port=broker.port)
        robot = RobotService(
            robot_client, session_id, ServoConfig(max_speed_dps=max_speed_dps, timestep_ms=timestep_ms)
        )
        await robot.start()

        session_client = await RelayClient.connect(port=broker.port)

        def sink(clip):
            from .store import save_clip

            save_clip(clip, clips_dir, overwrite=True)

        now_fn = VirtualClock(timestep_ms) if not pace else None
        service = SessionService(
            session_client,
            plan,
            clip_sink=sink,
            pace=pace,
            **({"now_fn": now_fn} if now_fn else {}),
        )
        service_task = asyncio.ensure_future(service.run())

        driver_client = await RelayClient.connect(port=broker.port)
        status_sub = await driver_client.subscribe(topic_session_status(session_id))
        await service.ready.wait()

        ctl_topic = topic_session_ctl(session_id)
        pose_topic = topic_puppet_pose(session_id)
        seq = 0
        calib_ticks = degrees_to_ticks(CALIBRATION_POSE)

        for index, emotion in enumerate(plan.emotion_order):
            stage = f"drive:{emotion.value}"
            if index == 0:
                # advance auto-calibrates the next emotion; only the first
                # one needs an explicit calibrate
                await driver_client.publish(ctl_topic, b"calibrate")
            await _await_status(
                status_sub,
                lambda s, e=emotion: s["phase"] == "Calibrating" and s["emotion"] == e.value,
                stage,
            )
            calib = PosePayload(
                seq=seq, t_ms=0, pan_ticks=calib_ticks.pan_ticks, tilt_ticks=calib_ticks.tilt_ticks
            )
            seq += 1
            await driver_client.publish(pose_topic, calib.encode())
            await _await_status(status_sub, lambda s: s.get("calibration_ok") is True, stage)
            await driver_client.publish(ctl_topic, b"practice")
            await _await_status(status_sub, lambda s: s["phase"] == "Practicing", stage)
            await driver_client.publish(ctl_topic, b"record")
            await _await_status(status_sub, lambda s: s["phase"] == "Recording", stage)
            poses = generate_poses(scripts[emotion], timestep_ms)
            seq += await play_poses(
                driver_client, session_id, poses, timestep_ms, pace=pace, start_seq=seq
            )
            await _await_status(status_sub, lambda s: s["phase"] == "Reviewing", stage)
            await driver_client.publish(ctl_topic, b"accept")
            await _await_status(status_sub, lambda s: s["phase"] == "EmotionDone", stage)
            await driver_client.publish(ctl_topic, b"advance")

        await _await_status(status_sub, lambda s: s["phase"] == "SessionComplete", "drive:finish")
        try:
            await asyncio.wait_for(service_task, timeout=STATUS_TIMEOUT_S)
        except asyncio.TimeoutError as exc:
            raise StageError("[session] service did not finish after SessionComplete") from exc
        await broker.drain()
    finally:
        if service_task is not None and not service_task.done():
            service_task.cancel()
            try:
                await service_task
            except (asyncio.CancelledError, Exception):
                pass
        if robot is not None:
            await robot.stop()
        for client in (robot_client, session_client, driver_client):
            if client is not None:
                await client.close()
        await broker.close()

    result = scan(clips_dir)
    if result.warnings:
        raise StageError(f"[store] corrupt clips after run: {result.warnings}")
    final_entries = [e for e in result.entries if e.final]
    if len(final_entries) != len(EMOTION_ORDER):
        raise StageError(
            f"[session] expected {len(EMOTION_ORDER)} final clips, found {len(final_entries)}"
        )
    clips = [load_clip(e.path) for e in final_entries]
    report = write_report(clips, out_dir / "analysis", figures=figures)
    return {
        "clips_dir": str(clips_dir),
        "clip_count": len(result.entries),
        "final_count": len(final_entries),
        "report_json": report["json_path"],
        "report_csv": report["csv_path"],
        "figures": report["figures"],
        "rows": report["rows"],
    }


def run_end_to_end_sync(*args, **kwargs) -> dict:
    return asyncio.run(run_end_to_end(*args, **kwargs))
