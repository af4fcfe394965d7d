"""Shared domain types for the pan/tilt puppeteering pipeline.

Everything here is an immutable value type or a pure function; instances are
safe to share between tasks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

PAN_MIN_DEG = -150.0
PAN_MAX_DEG = 150.0
TILT_MIN_DEG = -90.0
TILT_MAX_DEG = 90.0

# Both axes share one affine tick map over a 300 degree span, [-150, +150];
# the tilt axis simply occupies a clamped sub-range of it.
TICK_MAX = 1023
TICK_SPAN_DEG = 300.0
TICK_WIDTH_DEG = TICK_SPAN_DEG / TICK_MAX  # ~0.2933 deg per tick

DEFAULT_TIMESTEP_MS = 20
MAX_CLIP_MS = 5000

CALIBRATION_PAN_DEG = -90.0
CALIBRATION_TILT_DEG = 0.0


class EmotionLabel(Enum):
    ANGER = "anger"
    DISGUST = "disgust"
    FEAR = "fear"
    HAPPINESS = "happiness"
    SADNESS = "sadness"
    SURPRISE = "surprise"


#: Canonical listing order, used for default session plans and for the rows
#: of the confusion matrix.
EMOTION_ORDER: tuple[EmotionLabel, ...] = (
    EmotionLabel.ANGER,
    EmotionLabel.DISGUST,
    EmotionLabel.FEAR,
    EmotionLabel.HAPPINESS,
    EmotionLabel.SADNESS,
    EmotionLabel.SURPRISE,
)


def clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


@dataclass(frozen=True)
class Pose:
    """One pan/tilt configuration in degrees; clamped into range on construction."""

    pan: float
    tilt: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "pan", clamp(float(self.pan), PAN_MIN_DEG, PAN_MAX_DEG))
        object.__setattr__(self, "tilt", clamp(float(self.tilt), TILT_MIN_DEG, TILT_MAX_DEG))


CALIBRATION_POSE = Pose(CALIBRATION_PAN_DEG, CALIBRATION_TILT_DEG)


@dataclass(frozen=True)
class ServoTicks:
    """Quantized servo positions, one tick value per axis in [0, 1023]."""

    pan_ticks: int
    tilt_ticks: int

    def __post_init__(self) -> None:
        for name in ("pan_ticks", "tilt_ticks"):
            v = getattr(self, name)
            if not isinstance(v, int) or not 0 <= v <= TICK_MAX:
                raise ValueError(f"{name} must be an integer in [0, {TICK_MAX}], got {v!r}")


def axis_degrees_to_ticks(deg: float) -> int:
    """Quantize a single-axis angle onto the 0..1023 tick scale (clamping)."""
    tick = round((deg - PAN_MIN_DEG) * TICK_MAX / TICK_SPAN_DEG)
    return min(TICK_MAX, max(0, tick))


def axis_ticks_to_degrees(tick: int) -> float:
    """Exact affine inverse of :func:`axis_degrees_to_ticks` for one axis."""
    return tick * TICK_SPAN_DEG / TICK_MAX + PAN_MIN_DEG


def degrees_to_ticks(pose: Pose) -> ServoTicks:
    return ServoTicks(
        pan_ticks=axis_degrees_to_ticks(pose.pan),
        tilt_ticks=axis_degrees_to_ticks(pose.tilt),
    )


def ticks_to_degrees(ticks: ServoTicks) -> Pose:
    # Pose construction clamps tilt back into its mechanical sub-range.
    return Pose(
        pan=axis_ticks_to_degrees(ticks.pan_ticks),
        tilt=axis_ticks_to_degrees(ticks.tilt_ticks),
    )


def quantize_degrees(deg: float) -> float:
    """Round to the 4-decimal precision used for persisted samples.

    Four decimals resolve well below one tick width, so quantizing recorded
    degrees this way loses nothing relative to the servo hardware.
    """
    return round(deg, 4)


class InvalidClip(ValueError):
    """An ExpressionClip violating its structural invariants."""


@dataclass(frozen=True)
class TrajectorySample:
    """One timestamped pose; ``t_ms`` counts from the start of the clip."""

    t_ms: int
    pose: Pose


@dataclass(frozen=True)
class ExpressionClip:
    """A recorded expression: a ≤5 s pose trajectory labeled with an emotion."""

    clip_id: str
    emotion: EmotionLabel
    designer_id: str
    iteration: int
    timestep_ms: int
    samples: tuple[TrajectorySample, ...]
    final: bool = False
    recorded_at: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        self.validate()

    def validate(self) -> None:
        if self.iteration < 1:
            raise InvalidClip(f"iteration must be positive, got {self.iteration}")
        if self.timestep_ms < 1:
            raise InvalidClip(f"timestep_ms must be positive, got {self.timestep_ms}")
        if not self.samples:
            raise InvalidClip("clip has no samples")
        prev = -1
        for s in self.samples:
            if s.t_ms < 0 or s.t_ms % self.timestep_ms != 0:
                raise InvalidClip(f"sample time {s.t_ms} is not a multiple of {self.timestep_ms} ms")
            if s.t_ms <= prev:
                raise InvalidClip(f"sample times not strictly increasing at t={s.t_ms}")
            prev = s.t_ms
        if self.duration_ms > MAX_CLIP_MS:
            raise InvalidClip(f"clip duration {self.duration_ms} ms exceeds {MAX_CLIP_MS} ms")

    @property
    def duration_ms(self) -> int:
        return self.samples[-1].t_ms

    @property
    def sample_count(self) -> int:
        return len(self.samples)
