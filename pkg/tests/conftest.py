"""Shared test helpers."""
from __future__ import annotations

from puppetmirror.model import (
    EmotionLabel,
    ExpressionClip,
    Pose,
    TrajectorySample,
    quantize_degrees,
)


def make_clip(
    poses,
    emotion: EmotionLabel = EmotionLabel.ANGER,
    timestep_ms: int = 20,
    clip_id: str = "t-clip",
    designer_id: str = "tester",
    iteration: int = 1,
    final: bool = False,
    quantize: bool = True,
) -> ExpressionClip:
    samples = []
    for i, pose in enumerate(poses):
        if not isinstance(pose, Pose):
            pose = Pose(*pose)
        if quantize:
            pose = Pose(quantize_degrees(pose.pan), quantize_degrees(pose.tilt))
        samples.append(TrajectorySample(t_ms=i * timestep_ms, pose=pose))
    clip = ExpressionClip(
        clip_id=clip_id,
        emotion=emotion,
        designer_id=designer_id,
        iteration=iteration,
        timestep_ms=timestep_ms,
        samples=tuple(samples),
        final=final,
        recorded_at="2000-01-01T00:00:00+00:00",
    )
    clip.validate()
    return clip


def axis_clip(values, axis: str = "pan", **kwargs) -> ExpressionClip:
    if axis == "pan":
        poses = [Pose(v, 0.0) for v in values]
    else:
        poses = [Pose(0.0, v) for v in values]
    return make_clip(poses, **kwargs)


def profile_from_speed(speed, dt_ms: int = 20):
    """SpeedProfile with a directly chosen combined-speed series, for feeding
    exact shapes into the peak and smoothness statistics."""
    from puppetmirror.analysis import SpeedProfile

    t = tuple(i * dt_ms for i in range(len(speed)))
    return SpeedProfile(
        timestep_ms=dt_ms,
        t_ms=t,
        speed=tuple(float(v) for v in speed),
        pan_rate=tuple(float(v) for v in speed),
        tilt_rate=(0.0,) * len(speed),
    )
