/**
 * End-to-end conformance against the real backend: a relay, a simulated
 * robot and a session engine are spawned as subprocesses, and the UI-side
 * modules talk to them through the actual websocket bridge. Asserts that
 * pad-emitted frames are accepted as-is, that a 5 s engagement is observed
 * server-side as 250 +/- 1 frames, that the engine stops a take on its own
 * at the recording cap, and that live status snapshots gate the controls
 * the same way the unit table does.
 */
import { spawn, ChildProcessByStdio } from "node:child_process";
import crypto from "node:crypto";
import fs from "node:fs";
import net from "node:net";
import os from "node:os";
import path from "node:path";
import { Readable } from "node:stream";
import { setTimeout as sleep } from "node:timers/promises";

import { afterAll, expect, test } from "vitest";

import { PosePublisher } from "../src/client.js";
import { PadState } from "../src/pad.js";
import { enabledControls, parseStatus, SessionStatus } from "../src/session.js";
import {
  decodeFrame,
  decodePose,
  degreesToTicks,
  encodeFrame,
  encodePose,
  FrameType,
  makeFrame,
  PosePayload,
  puppetPoseTopic,
  robotStateTopic,
  sessionCtlTopic,
  sessionStatusTopic,
} from "../src/protocol.js";

const SID = "conf";
const WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

/** Minimal RFC 6455 client: masked binary frames out, unmasked frames in. */
class NodeWs {
  onbinary: (data: Buffer) => void = () => {};
  private buf = Buffer.alloc(0);

  private constructor(private readonly sock: net.Socket) {}

  static connect(port: number, timeoutMs = 5000): Promise<NodeWs> {
    return new Promise((resolve, reject) => {
      const sock = net.connect(port, "127.0.0.1");
      const key = crypto.randomBytes(16).toString("base64");
      const timer = setTimeout(() => {
        sock.destroy();
        reject(new Error("websocket handshake timeout"));
      }, timeoutMs);
      let head = Buffer.alloc(0);
      let upgraded = false;
      const ws = new NodeWs(sock);
      sock.on("error", (err) => {
        if (!upgraded) {
          clearTimeout(timer);
          reject(err);
        }
      });
      sock.on("connect", () => {
        sock.write(
          `GET / HTTP/1.1\r\n` +
            `Host: 127.0.0.1:${port}\r\n` +
            `Upgrade: websocket\r\n` +
            `Connection: Upgrade\r\n` +
            `Sec-WebSocket-Key: ${key}\r\n` +
            `Sec-WebSocket-Version: 13\r\n\r\n`,
        );
      });
      sock.on("data", (chunk: Buffer) => {
        if (upgraded) {
          ws.feed(chunk);
          return;
        }
        head = Buffer.concat([head, chunk]);
        const end = head.indexOf("\r\n\r\n");
        if (end < 0) return;
        clearTimeout(timer);
        const response = head.subarray(0, end).toString("latin1");
        if (!response.startsWith("HTTP/1.1 101")) {
          sock.destroy();
          reject(new Error(`upgrade refused: ${response.split("\r\n")[0]}`));
          return;
        }
        const accept = crypto
          .createHash("sha1")
          .update(key + WS_GUID)
          .digest("base64");
        if (!response.includes(accept)) {
          sock.destroy();
          reject(new Error("bad websocket accept key"));
          return;
        }
        upgraded = true;
        const rest = head.subarray(end + 4);
        if (rest.length) ws.feed(Buffer.from(rest));
        resolve(ws);
      });
    });
  }

  private feed(chunk: Buffer): void {
    this.buf = Buffer.concat([this.buf, chunk]);
    for (;;) {
      if (this.buf.length < 2) return;
      const opcode = this.buf[0]! & 0x0f;
      if ((this.buf[1]! & 0x80) !== 0) throw new Error("server frames must not be masked");
      let len = this.buf[1]! & 0x7f;
      let off = 2;
      if (len === 126) {
        if (this.buf.length < 4) return;
        len = this.buf.readUInt16BE(2);
        off = 4;
      } else if (len === 127) {
        if (this.buf.length < 10) return;
        len = Number(this.buf.readBigUInt64BE(2));
        off = 10;
      }
      if (this.buf.length < off + len) return;
      const payload = Buffer.from(this.buf.subarray(off, off + len));
      this.buf = this.buf.subarray(off + len);
      if (opcode === 0x2) this.onbinary(payload);
      else if (opcode === 0x9) this.sendRaw(0xa, payload);
      else if (opcode === 0x8) {
        this.sendRaw(0x8, Buffer.alloc(0));
        this.sock.destroy();
        return;
      }
    }
  }

  sendBinary(data: Uint8Array): void {
    this.sendRaw(0x2, Buffer.from(data));
  }

  private sendRaw(opcode: number, payload: Buffer): void {
    const mask = crypto.randomBytes(4);
    const n = payload.length;
    let header: Buffer;
    if (n < 126) header = Buffer.from([0x80 | opcode, 0x80 | n]);
    else if (n <= 0xffff) {
      header = Buffer.alloc(4);
      header[0] = 0x80 | opcode;
      header[1] = 0x80 | 126;
      header.writeUInt16BE(n, 2);
    } else {
      header = Buffer.alloc(10);
      header[0] = 0x80 | opcode;
      header[1] = 0x80 | 127;
      header.writeBigUInt64BE(BigInt(n), 2);
    }
    const masked = Buffer.from(payload);
    for (let i = 0; i < masked.length; i++) masked[i] = masked[i]! ^ mask[i % 4]!;
    this.sock.write(Buffer.concat([header, mask, masked]));
  }

  close(): void {
    try {
      this.sendRaw(0x8, Buffer.alloc(0));
    } catch {
      // already gone
    }
    this.sock.destroy();
  }
}

type CliProc = ChildProcessByStdio<null, Readable, Readable>;

interface Child {
  proc: CliProc;
  waitFor(re: RegExp, timeoutMs?: number): Promise<RegExpMatchArray>;
  stderrTail(): string;
}

const children: Child[] = [];
let ws: NodeWs | null = null;
let tmpDir: string | null = null;

function spawnCli(args: string[]): Child {
  const proc = spawn("python3", ["-m", "puppetmirror.cli", ...args], {
    stdio: ["ignore", "pipe", "pipe"],
  });
  const lines: string[] = [];
  const errChunks: string[] = [];
  let buf = "";
  const pending: Array<{ re: RegExp; resolve: (m: RegExpMatchArray) => void }> = [];
  proc.stdout.setEncoding("utf8");
  proc.stderr.setEncoding("utf8");
  proc.stderr.on("data", (chunk: string) => errChunks.push(chunk));
  proc.stdout.on("data", (chunk: string) => {
    buf += chunk;
    let idx;
    while ((idx = buf.indexOf("\n")) >= 0) {
      const line = buf.slice(0, idx);
      buf = buf.slice(idx + 1);
      lines.push(line);
      for (let i = pending.length - 1; i >= 0; i--) {
        const m = line.match(pending[i]!.re);
        if (m) {
          pending[i]!.resolve(m);
          pending.splice(i, 1);
        }
      }
    }
  });
  const child: Child = {
    proc,
    waitFor(re: RegExp, timeoutMs = 10000): Promise<RegExpMatchArray> {
      for (const line of lines) {
        const m = line.match(re);
        if (m) return Promise.resolve(m);
      }
      return new Promise((resolve, reject) => {
        const timer = setTimeout(
          () => reject(new Error(`timeout waiting for ${re} (stderr: ${child.stderrTail()})`)),
          timeoutMs,
        );
        pending.push({
          re,
          resolve: (m) => {
            clearTimeout(timer);
            resolve(m);
          },
        });
      });
    },
    stderrTail(): string {
      return errChunks.join("").split("\n").slice(-8).join(" | ");
    },
  };
  children.push(child);
  return child;
}

function awaitCond(pred: () => boolean, what: string, timeoutMs = 15000): Promise<void> {
  return new Promise((resolve, reject) => {
    const t0 = Date.now();
    const timer = setInterval(() => {
      if (pred()) {
        clearInterval(timer);
        resolve();
      } else if (Date.now() - t0 > timeoutMs) {
        clearInterval(timer);
        reject(new Error(`timeout waiting for ${what}`));
      }
    }, 25);
  });
}

function procExit(proc: CliProc, timeoutMs = 15000): Promise<number | null> {
  return new Promise((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("subprocess did not exit")), timeoutMs);
    proc.once("exit", (code) => {
      clearTimeout(timer);
      resolve(code);
    });
  });
}

afterAll(() => {
  ws?.close();
  for (const child of children) {
    if (child.proc.exitCode === null) child.proc.kill("SIGTERM");
  }
  if (tmpDir) fs.rmSync(tmpDir, { recursive: true, force: true });
});

test(
  "pad frames drive the real relay, robot and session engine",
  { timeout: 90_000 },
  async () => {
    tmpDir = fs.mkdtempSync(path.join(os.tmpdir(), "ui-conformance-"));
    const clipsDir = path.join(tmpDir, "clips");
    const planPath = path.join(tmpDir, "plan.json");
    const emotions = ["anger", "disgust", "fear", "happiness", "sadness", "surprise"];
    fs.writeFileSync(
      planPath,
      JSON.stringify({
        session_id: SID,
        designer_id: "webui",
        emotion_order: emotions,
        timestep_ms: 20,
      }),
    );

    const relay = spawnCli(["relay", "--port", "0", "--ws-port", "0"]);
    const tcp = await relay.waitFor(/relay listening on 127\.0\.0\.1:(\d+) \(tcp\)/);
    const wsLine = await relay.waitFor(/relay websocket bridge on 127\.0\.0\.1:(\d+)/);
    const tcpPort = Number(tcp[1]);
    const wsPort = Number(wsLine[1]);

    const robot = spawnCli([
      "simulate-robot",
      "--session",
      SID,
      "--relay",
      `127.0.0.1:${tcpPort}`,
    ]);
    await robot.waitFor(/robot mirroring session/);

    const engine = spawnCli([
      "session",
      "run",
      "--plan",
      planPath,
      "--relay",
      `127.0.0.1:${tcpPort}`,
      "--out",
      clipsDir,
      "--no-pace",
    ]);

    ws = await NodeWs.connect(wsPort);
    const statusLog: SessionStatus[] = [];
    const stateLog: PosePayload[] = [];
    let poseEchoes = 0;
    ws.onbinary = (data) => {
      const frame = decodeFrame(new Uint8Array(data));
      if (frame.type !== FrameType.Publish) return;
      if (frame.topic === sessionStatusTopic(SID)) statusLog.push(parseStatus(frame.payload));
      else if (frame.topic === robotStateTopic(SID)) stateLog.push(decodePose(frame.payload));
      else if (frame.topic === puppetPoseTopic(SID)) poseEchoes += 1;
    };
    const sendFrame = (type: FrameType, topic: string, payload?: Uint8Array) =>
      ws!.sendBinary(encodeFrame(makeFrame(type, topic, payload)));
    sendFrame(FrameType.Subscribe, sessionStatusTopic(SID));
    sendFrame(FrameType.Subscribe, robotStateTopic(SID));
    sendFrame(FrameType.Subscribe, puppetPoseTopic(SID));
    const ctl = (event: string) =>
      sendFrame(FrameType.Publish, sessionCtlTopic(SID), new TextEncoder().encode(event));

    // before any status the UI assumes the engine's start phase
    expect([...enabledControls(null)]).toEqual(["calibrate"]);

    // the engine subscribes asynchronously, so nudge until a status lands;
    // a duplicate calibrate only produces a harmless rejection status
    const t0 = Date.now();
    while (statusLog.length === 0) {
      if (Date.now() - t0 > 15000) {
        throw new Error(`engine never produced a status (stderr: ${engine.stderrTail()})`);
      }
      ctl("calibrate");
      await sleep(200);
    }
    const calibrating = statusLog[0]!;
    expect(calibrating.phase).toBe("Calibrating");
    expect(calibrating.calibration_ok).toBe(false);
    expect([...enabledControls(calibrating)]).toEqual([]); // practice locked until the gate

    // the published pad bytes are what a browser session would emit
    const published: PosePayload[] = [];
    let seq = 0;
    const shim = {
      publish: (topic: string, payload: Uint8Array) => {
        published.push(decodePose(payload));
        sendFrame(FrameType.Publish, topic, payload);
      },
      nextSeq: () => seq++,
    };
    const pad = new PadState(300, 180);
    const publisher = new PosePublisher(shim, SID, pad);

    // the pad's rest pose is the calibration posture; one frame opens the gate
    shim.publish(
      puppetPoseTopic(SID),
      encodePose({
        seq: shim.nextSeq(),
        tMs: 0,
        panTicks: degreesToTicks(pad.pose().panDeg),
        tiltTicks: degreesToTicks(pad.pose().tiltDeg),
      }),
    );
    await awaitCond(
      () => statusLog.some((s) => s.phase === "Calibrating" && s.calibration_ok),
      "calibration gate",
    );
    const gated = statusLog.find((s) => s.phase === "Calibrating" && s.calibration_ok)!;
    expect([...enabledControls(gated)]).toEqual(["practice"]);

    ctl("practice");
    await awaitCond(() => statusLog.some((s) => s.phase === "Practicing"), "Practicing");
    expect([...enabledControls(statusLog.find((s) => s.phase === "Practicing")!)]).toEqual([
      "record",
    ]);

    // five seconds of engagement on the virtual 20 ms grid: a smooth drag
    // from the rest position to the opposite corner, 250 publish ticks
    pad.engage(60, 90);
    for (let k = 1; k <= 250; k++) {
      pad.moveTo(60 + (k * 240) / 250, 90 + (k * 90) / 250);
      publisher.pump(k * 20);
    }
    pad.release();
    expect(publisher.framesSent).toBe(250);

    // observed server-side: the relay redistributes every accepted pad frame
    await awaitCond(() => poseEchoes >= 251, "pad frames echoed by the relay");
    await sleep(300); // let stragglers land before counting
    const engagementFrames = poseEchoes - 1; // minus the calibration nudge
    expect(Math.abs(engagementFrames - 250)).toBeLessThanOrEqual(1);

    // the robot trace: one state per command, pursuing one timestep behind
    await awaitCond(() => stateLog.length >= 252, "robot trace to settle");
    await sleep(300);
    const practiceTrace = stateLog.slice();
    expect(practiceTrace.length).toBeGreaterThanOrEqual(252);
    for (let i = 1; i < practiceTrace.length; i++) {
      expect(practiceTrace[i]!.seq).toBeGreaterThan(practiceTrace[i - 1]!.seq);
    }
    // every reported posture is something the pad published (the drag stays
    // inside the servo rate limit, so pursuit lands exactly on targets)
    const sentTicks = new Set(published.map((p) => `${p.panTicks}/${p.tiltTicks}`));
    for (const s of practiceTrace) {
      expect(
        sentTicks.has(`${s.panTicks}/${s.tiltTicks}`),
        `state ${s.seq} at ${s.panTicks}/${s.tiltTicks} matches no published pose`,
      ).toBe(true);
    }
    // one-timestep lag: the final state echoes the next-to-last pad pose
    const lastState = practiceTrace[practiceTrace.length - 1]!;
    const expectedTail = published[published.length - 2]!;
    expect(lastState.panTicks).toBe(expectedTail.panTicks);
    expect(lastState.tiltTicks).toBe(expectedTail.tiltTicks);

    // recording: the engine stops the take by itself at the 5 s cap, the
    // UI never sends a stop
    ctl("record");
    await awaitCond(() => statusLog.some((s) => s.phase === "Recording"), "Recording");
    expect([...enabledControls(statusLog.find((s) => s.phase === "Recording")!)]).toEqual([
      "stop",
    ]);
    for (let k = 251; k <= 540; k++) publisher.pump(k * 20); // well past the cap
    await awaitCond(
      () => statusLog.some((s) => s.phase === "Reviewing"),
      "auto-stop into Reviewing",
      30000,
    );
    const reviewing = statusLog.find((s) => s.phase === "Reviewing")!;
    expect(reviewing.clip_id).toBeTruthy();
    expect([...enabledControls(reviewing)].sort()).toEqual(["accept", "redo"]);

    ctl("accept");
    await awaitCond(() => statusLog.some((s) => s.phase === "EmotionDone"), "EmotionDone");
    ctl("advance");

    // drive the remaining emotions the same way, compactly: the engine
    // auto-calibrates after each advance, the pad snaps back to rest
    let clock = 540; // virtual 20 ms ticks consumed so far
    for (let i = 1; i < emotions.length; i++) {
      const here = (phase: string) => (s: SessionStatus) =>
        s.phase === phase && s.emotion_index === i;
      await awaitCond(() => statusLog.some(here("Calibrating")), `Calibrating #${i}`);
      pad.engage(60, 90); // rest position
      pad.release();
      publisher.pump(++clock * 20);
      await awaitCond(
        () => statusLog.some((s) => here("Calibrating")(s) && s.calibration_ok),
        `calibration gate #${i}`,
      );
      ctl("practice");
      await awaitCond(() => statusLog.some(here("Practicing")), `Practicing #${i}`);
      ctl("record");
      await awaitCond(() => statusLog.some(here("Recording")), `Recording #${i}`);
      clock += 260; // enough ticks to cross the 5 s recording cap
      publisher.pump(clock * 20);
      await awaitCond(() => statusLog.some(here("Reviewing")), `Reviewing #${i}`, 30000);
      ctl("accept");
      await awaitCond(() => statusLog.some(here("EmotionDone")), `EmotionDone #${i}`);
      ctl("advance");
    }
    await awaitCond(
      () => statusLog.some((s) => s.phase === "SessionComplete"),
      "SessionComplete",
    );

    // the engine run finishes cleanly with one accepted take per emotion
    expect(await procExit(engine.proc)).toBe(0);
    const clipFiles = fs.readdirSync(clipsDir).sort();
    expect(clipFiles).toEqual(emotions.map((e) => `webui_${e}_1.clip.json`).sort());
    const clip = JSON.parse(
      fs.readFileSync(path.join(clipsDir, "webui_anger_1.clip.json"), "utf8"),
    );
    expect(clip.samples.length).toBe(251); // 0..5000 ms inclusive on the 20 ms grid
  },
);
