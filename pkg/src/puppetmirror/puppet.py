"""Scripted puppet: synthetic pose waveforms and a relay publisher.

Replaces the human puppeteer for automated runs. A waveform drives one axis
around a center pose; the other axis holds its center value.
"""
from __future__ import annotations

import asyncio
import math
from dataclasses import dataclass

from .client import RelayClient
from .model import (
    DEFAULT_TIMESTEP_MS,
    PAN_MAX_DEG,
    PAN_MIN_DEG,
    TILT_MAX_DEG,
    TILT_MIN_DEG,
    ExpressionClip,
    Pose,
    degrees_to_ticks,
)
from .wire import PosePayload, topic_puppet_pose

WAVEFORMS = ("sine", "triangle", "step", "gaussian-bell")


@dataclass(frozen=True)
class WaveformSpec:
    waveform: str
    axis: str  # "pan" | "tilt"
    amplitude_deg: float
    frequency_hz: float = 1.0
    duration_ms: int = 5000
    center_pan_deg: float = 0.0
    center_tilt_deg: float = 0.0

    def __post_init__(self) -> None:
        if self.waveform not in WAVEFORMS:
            raise ValueError(f"waveform must be one of {WAVEFORMS}")
        if self.axis not in ("pan", "tilt"):
            raise ValueError("axis must be pan or tilt")
        if self.duration_ms <= 0:
            raise ValueError("duration_ms must be > 0")
        if self.frequency_hz <= 0:
            raise ValueError("frequency_hz must be > 0")
        lo, hi = (PAN_MIN_DEG, PAN_MAX_DEG) if self.axis == "pan" else (TILT_MIN_DEG, TILT_MAX_DEG)
        center = self.center_pan_deg if self.axis == "pan" else self.center_tilt_deg
        if not (lo <= center - abs(self.amplitude_deg) and center + abs(self.amplitude_deg) <= hi):
            raise ValueError("waveform exceeds the pose range on its axis")
        if not PAN_MIN_DEG <= self.center_pan_deg <= PAN_MAX_DEG:
            raise ValueError("center_pan_deg out of range")
        if not TILT_MIN_DEG <= self.center_tilt_deg <= TILT_MAX_DEG:
            raise ValueError("center_tilt_deg out of range")

    def value_at(self, t_s: float) -> float:
        a = self.amplitude_deg
        if self.waveform == "sine":
            return a * math.sin(2.0 * math.pi * self.frequency_hz * t_s)
        if self.waveform == "triangle":
            p = (self.frequency_hz * t_s) % 1.0
            if p < 0.25:
                return a * 4.0 * p
            if p < 0.75:
                return a * (2.0 - 4.0 * p)
            return a * (4.0 * p - 4.0)
        if self.waveform == "step":
            return a if t_s >= self.duration_ms / 2000.0 else 0.0
        # gaussian-bell, sigma = duration/6 so the tails settle near zero
        duration_s = self.duration_ms / 1000.0
        sigma = duration_s / 6.0
        return a * math.exp(-((t_s - duration_s / 2.0) ** 2) / (2.0 * sigma * sigma))


def generate_poses(spec: WaveformSpec, timestep_ms: int = DEFAULT_TIMESTEP_MS) -> list[Pose]:
    """One pose per timestep from t=0 through duration inclusive."""
    n = spec.duration_ms // timestep_ms + 1
    poses = []
    for i in range(n):
        w = spec.value_at(i * timestep_ms / 1000.0)
        if spec.axis == "pan":
            poses.append(Pose(spec.center_pan_deg + w, spec.center_tilt_deg))
        else:
            poses.append(Pose(spec.center_pan_deg, spec.center_tilt_deg + w))
    return poses


async def play_poses(
    client: RelayClient,
    session_id: str,
    poses,
    timestep_ms: int = DEFAULT_TIMESTEP_MS,
    pace: bool = True,
    start_seq: int = 0,
) -> int:
    """Publish poses as PosePayload frames on puppet/<id>/pose.

    Paced mode schedules against the loop clock, so timer drift does not
    accumulate. Returns the number of frames published.
    """
    topic = topic_puppet_pose(session_id)
    loop = asyncio.get_running_loop()
    t0 = loop.time()
    for i, pose in enumerate(poses):
        if pace:
            delay = t0 + i * timestep_ms / 1000.0 - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
        ticks = degrees_to_ticks(pose)
        payload = PosePayload(
            seq=start_seq + i,
            t_ms=i * timestep_ms,
            pan_ticks=ticks.pan_ticks,
            tilt_ticks=ticks.tilt_ticks,
        )
        await client.publish(topic, payload.encode())
    return len(poses)


def clip_poses(clip: ExpressionClip) -> list[Pose]:
    return [s.pose for s in clip.samples]
