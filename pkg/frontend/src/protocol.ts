/**
 * Binary frame codec for the pose relay, carried one frame per websocket
 * binary message.
 *
 * Layout, big-endian throughout:
 *
 *     magic       2 bytes   0x50 0x4C ("PL")
 *     frame type  1 byte    1=PUBLISH 2=SUBSCRIBE 3=UNSUBSCRIBE 4=PING 5=PONG
 *     topic len   2 bytes
 *     topic       UTF-8
 *     payload len 4 bytes
 *     payload     bytes
 *
 * Only PUBLISH carries a payload; PUBLISH, SUBSCRIBE and UNSUBSCRIBE require
 * a non-empty topic. These rules are enforced on both encode and decode so a
 * frame that crosses this boundary is always well formed.
 */

export enum FrameType {
  Publish = 1,
  Subscribe = 2,
  Unsubscribe = 3,
  Ping = 4,
  Pong = 5,
}

/** Malformed frame or a frame violating the protocol invariants. */
export class FrameError extends Error {}

export interface Frame {
  readonly type: FrameType;
  readonly topic: string;
  readonly payload: Uint8Array;
}

const MAGIC0 = 0x50;
const MAGIC1 = 0x4c;
const HEADER_BYTES = 5;
const MAX_TOPIC_BYTES = 0xffff;
const U32_MAX = 0xffffffff;

const utf8Encoder = new TextEncoder();
const utf8Decoder = new TextDecoder("utf-8", { fatal: true });

const EMPTY = new Uint8Array(0);

function checkFrame(type: number, topic: string, payload: Uint8Array): void {
  if (!Number.isInteger(type) || FrameType[type] === undefined) {
    throw new FrameError(`unknown frame type ${type}`);
  }
  const topical =
    type === FrameType.Publish || type === FrameType.Subscribe || type === FrameType.Unsubscribe;
  if (topical && topic.length === 0) {
    throw new FrameError(`${FrameType[type]} frame requires a topic`);
  }
  if (type !== FrameType.Publish && payload.length > 0) {
    throw new FrameError(`${FrameType[type]} frame must not carry a payload`);
  }
}

export function makeFrame(type: FrameType, topic = "", payload: Uint8Array = EMPTY): Frame {
  checkFrame(type, topic, payload);
  return { type, topic, payload };
}

export function encodeFrame(frame: Frame): Uint8Array {
  checkFrame(frame.type, frame.topic, frame.payload);
  const topic = utf8Encoder.encode(frame.topic);
  if (topic.length > MAX_TOPIC_BYTES) throw new FrameError(`topic exceeds ${MAX_TOPIC_BYTES} bytes`);
  if (frame.payload.length > U32_MAX) throw new FrameError("payload too large");
  const out = new Uint8Array(HEADER_BYTES + topic.length + 4 + frame.payload.length);
  const view = new DataView(out.buffer);
  out[0] = MAGIC0;
  out[1] = MAGIC1;
  out[2] = frame.type;
  view.setUint16(3, topic.length);
  out.set(topic, HEADER_BYTES);
  view.setUint32(HEADER_BYTES + topic.length, frame.payload.length);
  out.set(frame.payload, HEADER_BYTES + topic.length + 4);
  return out;
}

/** Decode a buffer holding exactly one frame; trailing bytes are an error. */
export function decodeFrame(data: Uint8Array): Frame {
  if (data.length < HEADER_BYTES) throw new FrameError("truncated frame header");
  if (data[0] !== MAGIC0 || data[1] !== MAGIC1) throw new FrameError("bad magic");
  const type = data[2]!;
  if (FrameType[type] === undefined) throw new FrameError(`unknown frame type ${type}`);
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const topicLen = view.getUint16(3);
  const bodyAt = HEADER_BYTES + topicLen;
  if (data.length < bodyAt + 4) throw new FrameError("truncated frame body");
  let topic: string;
  try {
    topic = utf8Decoder.decode(data.subarray(HEADER_BYTES, bodyAt));
  } catch {
    throw new FrameError("topic is not valid UTF-8");
  }
  const payloadLen = view.getUint32(bodyAt);
  const end = bodyAt + 4 + payloadLen;
  if (data.length < end) throw new FrameError("truncated payload");
  if (data.length > end) throw new FrameError(`${data.length - end} trailing bytes after frame`);
  const payload = data.slice(bodyAt + 4, end);
  checkFrame(type, topic, payload);
  return { type, topic, payload };
}

// Pose telemetry payload: sequence number, telemetry time, quantized pose.

export const POSE_PAYLOAD_BYTES = 12;
export const TICK_MAX = 1023;

export interface PosePayload {
  readonly seq: number;
  readonly tMs: number;
  readonly panTicks: number;
  readonly tiltTicks: number;
}

function checkU32(name: string, value: number): void {
  if (!Number.isInteger(value) || value < 0 || value > U32_MAX) {
    throw new FrameError(`${name} ${value} out of u32 range`);
  }
}

function checkTicks(name: string, value: number): void {
  if (!Number.isInteger(value) || value < 0 || value > TICK_MAX) {
    throw new FrameError(`${name} ${value} out of [0, ${TICK_MAX}]`);
  }
}

export function encodePose(pose: PosePayload): Uint8Array {
  checkU32("seq", pose.seq);
  checkU32("tMs", pose.tMs);
  checkTicks("panTicks", pose.panTicks);
  checkTicks("tiltTicks", pose.tiltTicks);
  const out = new Uint8Array(POSE_PAYLOAD_BYTES);
  const view = new DataView(out.buffer);
  view.setUint32(0, pose.seq);
  view.setUint32(4, pose.tMs);
  view.setUint16(8, pose.panTicks);
  view.setUint16(10, pose.tiltTicks);
  return out;
}

export function decodePose(data: Uint8Array): PosePayload {
  if (data.length !== POSE_PAYLOAD_BYTES) {
    throw new FrameError(`pose payload must be ${POSE_PAYLOAD_BYTES} bytes, got ${data.length}`);
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const pose = {
    seq: view.getUint32(0),
    tMs: view.getUint32(4),
    panTicks: view.getUint16(8),
    tiltTicks: view.getUint16(10),
  };
  checkTicks("panTicks", pose.panTicks);
  checkTicks("tiltTicks", pose.tiltTicks);
  return pose;
}

// Degree <-> tick map. Both axes share one affine map over the pan span so a
// tick means the same angle everywhere; tilt simply never leaves the middle
// of the range.

export const PAN_MIN_DEG = -150;
export const PAN_MAX_DEG = 150;
export const TILT_MIN_DEG = -90;
export const TILT_MAX_DEG = 90;

const DEG_SPAN = PAN_MAX_DEG - PAN_MIN_DEG;

export interface Pose {
  readonly panDeg: number;
  readonly tiltDeg: number;
}

export function degreesToTicks(deg: number): number {
  const tick = Math.round(((deg - PAN_MIN_DEG) / DEG_SPAN) * TICK_MAX);
  return Math.min(TICK_MAX, Math.max(0, tick));
}

export function ticksToDegrees(tick: number): number {
  return PAN_MIN_DEG + (tick / TICK_MAX) * DEG_SPAN;
}

// Topic conventions shared with the relay peers.

export function puppetPoseTopic(sessionId: string): string {
  return `puppet/${sessionId}/pose`;
}

export function robotCmdTopic(sessionId: string): string {
  return `robot/${sessionId}/cmd`;
}

export function robotStateTopic(sessionId: string): string {
  return `robot/${sessionId}/state`;
}

export function sessionCtlTopic(sessionId: string): string {
  return `session/${sessionId}/ctl`;
}

export function sessionStatusTopic(sessionId: string): string {
  return `session/${sessionId}/status`;
}
