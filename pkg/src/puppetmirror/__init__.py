"""puppetmirror: pose relay, simulated pan/tilt robot, expression-design
sessions, clip persistence, motion analysis, and rating aggregation."""

from .model import (
    CALIBRATION_POSE,
    DEFAULT_TIMESTEP_MS,
    EMOTION_ORDER,
    MAX_CLIP_MS,
    EmotionLabel,
    ExpressionClip,
    InvalidClip,
    Pose,
    ServoTicks,
    TrajectorySample,
    degrees_to_ticks,
    ticks_to_degrees,
)
from .wire import Frame, FrameError, FrameType, PosePayload, decode_frame, encode_frame

__version__ = "0.1.0"

__all__ = [
    "CALIBRATION_POSE",
    "DEFAULT_TIMESTEP_MS",
    "EMOTION_ORDER",
    "MAX_CLIP_MS",
    "EmotionLabel",
    "ExpressionClip",
    "InvalidClip",
    "Pose",
    "ServoTicks",
    "TrajectorySample",
    "degrees_to_ticks",
    "ticks_to_degrees",
    "Frame",
    "FrameError",
    "FrameType",
    "PosePayload",
    "decode_frame",
    "encode_frame",
    "__version__",
]
