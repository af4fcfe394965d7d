import {
  decodeFrame,
  degreesToTicks,
  encodeFrame,
  encodePose,
  Frame,
  FrameType,
  makeFrame,
  Pose,
  puppetPoseTopic,
} from "./protocol.js";

/** The slice of a browser WebSocket the client touches; injectable in tests. */
export interface WsLike {
  binaryType: string;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: ArrayBuffer }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  send(data: Uint8Array): void;
  close(): void;
}

export type WsFactory = (url: string) => WsLike;

/**
 * Relay client over the websocket bridge.
 *
 * Reconnects with doubling backoff and replays every subscription on each
 * new link. The pose sequence counter lives here rather than per socket, so
 * numbering keeps rising across reconnects and the receiving side sees a gap
 * instead of a restart. Publishes while the link is down are dropped; the
 * relay is at-most-once end to end, so the UI does not pretend otherwise.
 */
export class RelayWsClient {
  onframe: (frame: Frame) => void = () => {};
  onlink: (up: boolean) => void = () => {};

  private ws: WsLike | null = null;
  private up = false;
  private stopped = true;
  private seq = 0;
  private retryMs: number;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private readonly topics = new Set<string>();

  constructor(
    private readonly url: string,
    private readonly factory: WsFactory,
    private readonly baseRetryMs = 250,
    private readonly maxRetryMs = 4000,
  ) {
    this.retryMs = baseRetryMs;
  }

  get connected(): boolean {
    return this.up;
  }

  nextSeq(): number {
    const n = this.seq;
    this.seq = (this.seq + 1) >>> 0;
    return n;
  }

  start(): void {
    if (!this.stopped) return;
    this.stopped = false;
    this.open();
  }

  stop(): void {
    this.stopped = true;
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    const ws = this.ws;
    this.ws = null;
    this.up = false;
    ws?.close();
  }

  subscribe(topic: string): void {
    this.topics.add(topic);
    if (this.up) this.send(makeFrame(FrameType.Subscribe, topic));
  }

  publish(topic: string, payload: Uint8Array): void {
    if (!this.up) return;
    this.send(makeFrame(FrameType.Publish, topic, payload));
  }

  private send(frame: Frame): void {
    this.ws?.send(encodeFrame(frame));
  }

  private open(): void {
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.binaryType = "arraybuffer";
    ws.onopen = () => {
      if (this.ws !== ws) return;
      this.up = true;
      this.retryMs = this.baseRetryMs;
      for (const topic of this.topics) this.send(makeFrame(FrameType.Subscribe, topic));
      this.onlink(true);
    };
    ws.onmessage = (ev) => {
      this.onframe(decodeFrame(new Uint8Array(ev.data)));
    };
    ws.onerror = () => {};
    ws.onclose = () => {
      // a stale socket closing must not clobber its replacement
      if (this.ws !== ws) return;
      const wasUp = this.up;
      this.up = false;
      this.ws = null;
      if (wasUp) this.onlink(false);
      if (this.stopped) return;
      this.retryTimer = setTimeout(() => {
        this.retryTimer = null;
        this.open();
      }, this.retryMs);
      this.retryMs = Math.min(this.retryMs * 2, this.maxRetryMs);
    };
  }
}

export const POSE_INTERVAL_MS = 20;

export interface PoseSource {
  pose(): Pose;
}

/**
 * Publishes the current pad pose once per 20 ms tick, engaged or not, since
 * a released pad holds its posture. Frames owed are counted against the
 * clock: a timer that fires late sends everything due rather than letting
 * the cadence drift, so a 5 s stretch always yields 250 frames.
 */
export class PosePublisher {
  private startedAtMs = 0;
  private sent = 0;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly client: Pick<RelayWsClient, "publish" | "nextSeq">,
    private readonly sessionId: string,
    private readonly source: PoseSource,
    private readonly intervalMs = POSE_INTERVAL_MS,
  ) {}

  get framesSent(): number {
    return this.sent;
  }

  get running(): boolean {
    return this.timer !== null;
  }

  start(nowMs: number = Date.now()): void {
    if (this.timer !== null) return;
    this.startedAtMs = nowMs;
    this.sent = 0;
    this.timer = setInterval(() => this.pump(Date.now()), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  /** Send every frame due by nowMs; exposed for deterministic driving. */
  pump(nowMs: number): void {
    const due = Math.floor((nowMs - this.startedAtMs) / this.intervalMs);
    while (this.sent < due) this.tick();
  }

  /** Emit exactly one frame carrying the current pose. */
  tick(): void {
    this.sent += 1;
    const pose = this.source.pose();
    const payload = encodePose({
      seq: this.client.nextSeq(),
      tMs: this.sent * this.intervalMs,
      panTicks: degreesToTicks(pose.panDeg),
      tiltTicks: degreesToTicks(pose.tiltDeg),
    });
    this.client.publish(puppetPoseTopic(this.sessionId), payload);
  }
}
