import { afterEach, beforeEach, describe, expect, test, vi } from "vitest";

import { PosePublisher, RelayWsClient, WsLike } from "../src/client.js";
import { PadState } from "../src/pad.js";
import {
  decodeFrame,
  decodePose,
  Frame,
  FrameType,
  PosePayload,
} from "../src/protocol.js";

class FakeWs implements WsLike {
  binaryType = "blob";
  onopen: (() => void) | null = null;
  onmessage: ((ev: { data: ArrayBuffer }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;
  sent: Uint8Array[] = [];
  closed = false;

  constructor(public readonly url: string) {}

  send(data: Uint8Array): void {
    this.sent.push(data.slice());
  }

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  // test-side controls
  open(): void {
    this.onopen?.();
  }

  serverClose(): void {
    this.onclose?.();
  }

  serverSend(data: Uint8Array): void {
    this.onmessage?.({ data: data.slice().buffer as ArrayBuffer });
  }

  frames(): Frame[] {
    return this.sent.map(decodeFrame);
  }

  poses(topic: string): PosePayload[] {
    return this.frames()
      .filter((f) => f.type === FrameType.Publish && f.topic === topic)
      .map((f) => decodePose(f.payload));
  }
}

function harness(baseRetryMs = 250) {
  const sockets: FakeWs[] = [];
  const createdAt: number[] = [];
  const factory = (url: string) => {
    const ws = new FakeWs(url);
    sockets.push(ws);
    createdAt.push(Date.now());
    return ws;
  };
  const client = new RelayWsClient("ws://relay.test/", factory, baseRetryMs);
  return { sockets, createdAt, client };
}

const POSE_TOPIC = "puppet/s1/pose";

beforeEach(() => {
  vi.useFakeTimers({ now: 0 });
});

afterEach(() => {
  vi.useRealTimers();
});

describe("relay websocket client", () => {
  test("subscriptions are sent on connect and replayed after reconnect", () => {
    const { sockets, client } = harness();
    client.subscribe("session/s1/status");
    client.start();
    expect(sockets).toHaveLength(1);
    sockets[0]!.open();
    expect(client.connected).toBe(true);
    client.subscribe("robot/s1/state");
    expect(sockets[0]!.frames().map((f) => [f.type, f.topic])).toEqual([
      [FrameType.Subscribe, "session/s1/status"],
      [FrameType.Subscribe, "robot/s1/state"],
    ]);

    sockets[0]!.serverClose();
    expect(client.connected).toBe(false);
    vi.advanceTimersByTime(250);
    expect(sockets).toHaveLength(2);
    sockets[1]!.open();
    expect(sockets[1]!.frames().map((f) => [f.type, f.topic])).toEqual([
      [FrameType.Subscribe, "session/s1/status"],
      [FrameType.Subscribe, "robot/s1/state"],
    ]);
    client.stop();
  });

  test("incoming binary messages surface as decoded frames", () => {
    const { sockets, client } = harness();
    const seen: Frame[] = [];
    client.onframe = (f) => seen.push(f);
    client.start();
    sockets[0]!.open();
    sockets[0]!.serverSend(
      new Uint8Array([0x50, 0x4c, 0x04, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00]),
    );
    expect(seen).toHaveLength(1);
    expect(seen[0]!.type).toBe(FrameType.Ping);
    client.stop();
  });

  test("reconnect backoff doubles, then resets after a healthy link", () => {
    const { sockets, createdAt, client } = harness(250);
    client.start();
    sockets[0]!.serverClose(); // never opened
    vi.advanceTimersByTime(250);
    sockets[1]!.serverClose();
    vi.advanceTimersByTime(500);
    sockets[2]!.serverClose();
    vi.advanceTimersByTime(1000);
    expect(createdAt).toEqual([0, 250, 750, 1750]);

    sockets[3]!.open(); // healthy link resets the backoff
    sockets[3]!.serverClose();
    vi.advanceTimersByTime(250);
    expect(sockets).toHaveLength(5);
    expect(createdAt[4]! - createdAt[3]!).toBe(250);
    client.stop();
  });

  test("stop() closes without scheduling a reconnect", () => {
    const { sockets, client } = harness();
    client.start();
    sockets[0]!.open();
    client.stop();
    vi.advanceTimersByTime(60_000);
    expect(sockets).toHaveLength(1);
  });

  test("publishes during an outage are dropped, not queued", () => {
    const { sockets, client } = harness();
    client.start();
    sockets[0]!.open();
    client.publish(POSE_TOPIC, new Uint8Array(12));
    sockets[0]!.serverClose();
    client.publish(POSE_TOPIC, new Uint8Array(12)); // lost: link is at-most-once
    vi.advanceTimersByTime(250);
    sockets[1]!.open();
    expect(sockets[0]!.poses(POSE_TOPIC)).toHaveLength(1);
    expect(sockets[1]!.poses(POSE_TOPIC)).toHaveLength(0);
    client.stop();
  });
});

describe("pose publish loop", () => {
  function publisherHarness() {
    const h = harness();
    const pad = new PadState(300, 180);
    const publisher = new PosePublisher(h.client, "s1", pad);
    h.client.start();
    h.sockets[0]!.open();
    return { ...h, pad, publisher };
  }

  test("five seconds of engagement produce 250 frames, 20 ms apart", () => {
    const { sockets, pad, publisher, client } = publisherHarness();
    pad.engage(150, 90);
    publisher.start(Date.now());
    vi.advanceTimersByTime(5000);
    publisher.stop();

    // shipping tolerance is 250 +/- 1; the loop is exact under a fake clock
    expect(Math.abs(publisher.framesSent - 250)).toBeLessThanOrEqual(1);
    expect(publisher.framesSent).toBe(250);
    const poses = sockets[0]!.poses(POSE_TOPIC);
    expect(poses).toHaveLength(250);
    poses.forEach((p, i) => {
      expect(p.tMs).toBe(20 * (i + 1));
      expect(p.seq).toBe(i);
    });
    client.stop();
  });

  test("an idle second still publishes 50 identical held poses", () => {
    const { sockets, publisher, client } = publisherHarness();
    publisher.start(Date.now());
    vi.advanceTimersByTime(1000);
    publisher.stop();

    const poses = sockets[0]!.poses(POSE_TOPIC);
    expect(poses).toHaveLength(50);
    for (const p of poses) {
      // rest pose (-90, 0) quantized: pan 204.6 -> 205, tilt 511.5 -> 512
      expect(p.panTicks).toBe(205);
      expect(p.tiltTicks).toBe(512);
    }
    client.stop();
  });

  test("a corner-to-corner drag reaches the tick extremes", () => {
    const { sockets, pad, publisher, client } = publisherHarness();
    publisher.start(Date.now());
    pad.engage(0, 0);
    vi.advanceTimersByTime(500);
    pad.moveTo(300, 180);
    vi.advanceTimersByTime(500);
    publisher.stop();

    const poses = sockets[0]!.poses(POSE_TOPIC);
    expect(poses).toHaveLength(50);
    expect(poses[0]).toMatchObject({ panTicks: 0, tiltTicks: 818 });
    expect(poses[49]).toMatchObject({ panTicks: 1023, tiltTicks: 205 });
    const panSeen = new Set(poses.map((p) => p.panTicks));
    expect(panSeen.has(0)).toBe(true);
    expect(panSeen.has(1023)).toBe(true);
    client.stop();
  });

  test("a late timer sends every frame it owes instead of drifting", () => {
    // drive the loop by hand from its t=0 origin, no interval involved
    const { publisher, client } = publisherHarness();
    publisher.pump(1000);
    expect(publisher.framesSent).toBe(50);
    publisher.pump(1019); // not yet time for frame 51
    expect(publisher.framesSent).toBe(50);
    publisher.pump(1020);
    expect(publisher.framesSent).toBe(51);
    client.stop();
  });

  test("sequence numbers keep rising across a reconnect, never reset", () => {
    const { sockets, publisher, client } = publisherHarness();
    publisher.pump(60); // frames 1..3 on the first link
    sockets[0]!.serverClose();
    publisher.pump(100); // two frames owed while down: sent nowhere, seq still consumed
    vi.advanceTimersByTime(250);
    sockets[1]!.open();
    publisher.pump(120);

    const before = sockets[0]!.poses(POSE_TOPIC).map((p) => p.seq);
    const after = sockets[1]!.poses(POSE_TOPIC).map((p) => p.seq);
    expect(before).toEqual([0, 1, 2]);
    expect(after).toEqual([5]);
    const all = [...before, ...after];
    for (let i = 1; i < all.length; i++) expect(all[i]!).toBeGreaterThan(all[i - 1]!);
    client.stop();
  });
});
