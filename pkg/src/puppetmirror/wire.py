"""Binary wire protocol for the telemetry relay.

Frame layout (big-endian throughout):

    magic      2 bytes   0x50 0x4C ("PL")
    frame_type 1 byte    1=PUBLISH 2=SUBSCRIBE 3=UNSUBSCRIBE 4=PING 5=PONG
    topic_len  2 bytes
    topic      topic_len bytes, UTF-8
    payload_len 4 bytes
    payload    payload_len bytes

Only PUBLISH carries a payload; SUBSCRIBE/UNSUBSCRIBE/PUBLISH require a
non-empty topic. The same layout is carried verbatim over TCP and, one frame
per binary message, over the websocket bridge.
"""
from __future__ import annotations

import asyncio
import struct
from dataclasses import dataclass
from enum import IntEnum

from .model import TICK_MAX

MAGIC = b"PL"
MAX_TOPIC_BYTES = 0xFFFF
MAX_PAYLOAD_BYTES = 0xFFFFFFFF


class FrameType(IntEnum):
    PUBLISH = 1
    SUBSCRIBE = 2
    UNSUBSCRIBE = 3
    PING = 4
    PONG = 5


class FrameError(Exception):
    """Malformed frame or frame violating the protocol invariants."""


@dataclass(frozen=True)
class Frame:
    frame_type: FrameType
    topic: str = ""
    payload: bytes = b""

    def check(self) -> None:
        if self.frame_type not in FrameType.__members__.values():
            raise FrameError(f"unknown frame type {self.frame_type!r}")
        if self.frame_type in (FrameType.PUBLISH, FrameType.SUBSCRIBE, FrameType.UNSUBSCRIBE):
            if not self.topic:
                raise FrameError(f"{FrameType(self.frame_type).name} frame requires a topic")
        if self.frame_type != FrameType.PUBLISH and self.payload:
            raise FrameError(f"{FrameType(self.frame_type).name} frame must not carry a payload")


def encode_frame(frame: Frame) -> bytes:
    frame.check()
    topic = frame.topic.encode("utf-8")
    if len(topic) > MAX_TOPIC_BYTES:
        raise FrameError(f"topic exceeds {MAX_TOPIC_BYTES} bytes")
    if len(frame.payload) > MAX_PAYLOAD_BYTES:
        raise FrameError("payload too large")
    return b"".join(
        (
            MAGIC,
            bytes((int(frame.frame_type),)),
            len(topic).to_bytes(2, "big"),
            topic,
            len(frame.payload).to_bytes(4, "big"),
            bytes(frame.payload),
        )
    )


def decode_frame(data: bytes) -> Frame:
    """Decode a buffer holding exactly one frame."""
    frame, consumed = decode_frame_prefix(data)
    if consumed != len(data):
        raise FrameError(f"{len(data) - consumed} trailing bytes after frame")
    return frame


def decode_frame_prefix(data: bytes) -> tuple[Frame, int]:
    """Decode one frame off the front of ``data``; returns (frame, bytes consumed)."""
    if len(data) < 5:
        raise FrameError("truncated frame header")
    if data[:2] != MAGIC:
        raise FrameError(f"bad magic {data[:2]!r}")
    type_byte = data[2]
    try:
        frame_type = FrameType(type_byte)
    except ValueError:
        raise FrameError(f"unknown frame type {type_byte}") from None
    topic_len = int.from_bytes(data[3:5], "big")
    off = 5 + topic_len
    if len(data) < off + 4:
        raise FrameError("truncated frame body")
    try:
        topic = data[5:off].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FrameError(f"topic is not valid UTF-8: {exc}") from None
    payload_len = int.from_bytes(data[off : off + 4], "big")
    end = off + 4 + payload_len
    if len(data) < end:
        raise FrameError("truncated payload")
    frame = Frame(frame_type=frame_type, topic=topic, payload=bytes(data[off + 4 : end]))
    frame.check()
    return frame, end


async def read_frame(reader: asyncio.StreamReader) -> Frame:
    """Read one frame from a byte stream; raises FrameError on protocol violations."""
    header = await reader.readexactly(5)
    if header[:2] != MAGIC:
        raise FrameError(f"bad magic {header[:2]!r}")
    type_byte = header[2]
    try:
        frame_type = FrameType(type_byte)
    except ValueError:
        raise FrameError(f"unknown frame type {type_byte}") from None
    topic_len = int.from_bytes(header[3:5], "big")
    topic_bytes = await reader.readexactly(topic_len) if topic_len else b""
    payload_len = int.from_bytes(await reader.readexactly(4), "big")
    payload = await reader.readexactly(payload_len) if payload_len else b""
    try:
        topic = topic_bytes.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FrameError(f"topic is not valid UTF-8: {exc}") from None
    frame = Frame(frame_type=frame_type, topic=topic, payload=payload)
    frame.check()
    return frame


_POSE_STRUCT = struct.Struct(">IIHH")

POSE_PAYLOAD_SIZE = _POSE_STRUCT.size  # 12 bytes


@dataclass(frozen=True)
class PosePayload:
    """Telemetry payload: sequence number, telemetry time, quantized pose."""

    seq: int
    t_ms: int
    pan_ticks: int
    tilt_ticks: int

    def encode(self) -> bytes:
        self.check()
        return _POSE_STRUCT.pack(self.seq, self.t_ms, self.pan_ticks, self.tilt_ticks)

    def check(self) -> None:
        if not 0 <= self.seq <= 0xFFFFFFFF:
            raise FrameError(f"seq {self.seq} out of u32 range")
        if not 0 <= self.t_ms <= 0xFFFFFFFF:
            raise FrameError(f"t_ms {self.t_ms} out of u32 range")
        for name, v in (("pan_ticks", self.pan_ticks), ("tilt_ticks", self.tilt_ticks)):
            if not 0 <= v <= TICK_MAX:
                raise FrameError(f"{name} {v} out of [0, {TICK_MAX}]")

    @classmethod
    def decode(cls, data: bytes) -> "PosePayload":
        if len(data) != POSE_PAYLOAD_SIZE:
            raise FrameError(f"pose payload must be {POSE_PAYLOAD_SIZE} bytes, got {len(data)}")
        seq, t_ms, pan_ticks, tilt_ticks = _POSE_STRUCT.unpack(data)
        payload = cls(seq=seq, t_ms=t_ms, pan_ticks=pan_ticks, tilt_ticks=tilt_ticks)
        payload.check()
        return payload


# Topic conventions.

def topic_puppet_pose(session_id: str) -> str:
    return f"puppet/{session_id}/pose"


def topic_robot_cmd(session_id: str) -> str:
    return f"robot/{session_id}/cmd"


def topic_robot_state(session_id: str) -> str:
    return f"robot/{session_id}/state"


def topic_session_ctl(session_id: str) -> str:
    return f"session/{session_id}/ctl"


def topic_session_status(session_id: str) -> str:
    return f"session/{session_id}/status"
