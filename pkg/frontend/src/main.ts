import { PosePublisher, RelayWsClient, WsLike } from "./client.js";
import { drawHead, MirrorModel } from "./mirror.js";
import { PadState } from "./pad.js";
import {
  CONTROL_EVENTS,
  ControlEvent,
  enabledControls,
  parseStatus,
  RecordingCountdown,
  SessionStatus,
  statusLine,
  toastFor,
} from "./session.js";
import {
  decodePose,
  FrameType,
  robotStateTopic,
  sessionCtlTopic,
  sessionStatusTopic,
} from "./protocol.js";

const PROMPTS: Partial<Record<string, string>> = {
  Idle: "Press calibrate to begin.",
  Calibrating: "Drag the pad to the marked rest position and hold it there.",
  Practicing: "Practice the motion for the current expression word, then record.",
  Recording: "Recording. The take stops by itself when the counter reaches zero.",
  Reviewing: "Watch the playback, then accept the take or redo it.",
  EmotionDone: "Take saved. Advance to the next word, or calibrate for another take.",
  SessionComplete: "All words recorded. You can close this page.",
};

function mustGet<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function main(): void {
  const params = new URLSearchParams(window.location.search);
  const sessionId = params.get("session") ?? "studio";
  const relay = params.get("relay") ?? `${window.location.hostname || "127.0.0.1"}:7448`;

  const padEl = mustGet<HTMLDivElement>("pad");
  const puckEl = mustGet<HTMLDivElement>("puck");
  const canvas = mustGet<HTMLCanvasElement>("mirror");
  const statusEl = mustGet<HTMLSpanElement>("status-line");
  const linkEl = mustGet<HTMLSpanElement>("link-badge");
  const countdownEl = mustGet<HTMLSpanElement>("countdown");
  const promptEl = mustGet<HTMLParagraphElement>("prompt");
  const toastEl = mustGet<HTMLDivElement>("toast");

  const padSize = () => {
    const r = padEl.getBoundingClientRect();
    return { w: Math.max(1, r.width), h: Math.max(1, r.height) };
  };
  const pad = new PadState(padSize().w, padSize().h);
  const mirror = new MirrorModel();
  const countdown = new RecordingCountdown();
  const client = new RelayWsClient(
    `ws://${relay}/`,
    (url) => new WebSocket(url) as unknown as WsLike,
  );
  const publisher = new PosePublisher(client, sessionId, pad);

  let lastStatus: SessionStatus | null = null;
  let toastText: string | null = null;
  let toastUntilMs = 0;

  const buttons = new Map<ControlEvent, HTMLButtonElement>();
  for (const event of CONTROL_EVENTS) {
    const btn = mustGet<HTMLButtonElement>(`btn-${event}`);
    btn.addEventListener("click", () => {
      client.publish(sessionCtlTopic(sessionId), new TextEncoder().encode(event));
    });
    buttons.set(event, btn);
  }

  function applyStatus(status: SessionStatus): void {
    lastStatus = status;
    const toast = toastFor(status);
    if (toast !== null) {
      toastText = toast;
      toastUntilMs = Date.now() + 4000;
    }
    if (status.phase === "Recording") {
      if (!countdown.running) countdown.start(Date.now());
    } else {
      countdown.cancel();
    }
    const enabled = enabledControls(status);
    for (const [event, btn] of buttons) btn.disabled = !enabled.has(event);
  }

  client.onframe = (frame) => {
    if (frame.type !== FrameType.Publish) return;
    if (frame.topic === sessionStatusTopic(sessionId)) {
      applyStatus(parseStatus(frame.payload));
    } else if (frame.topic === robotStateTopic(sessionId)) {
      mirror.apply(decodePose(frame.payload), Date.now());
    }
  };
  client.onlink = (up) => {
    if (up) return;
    // until the first status after a reconnect, gate buttons pessimistically
    for (const btn of buttons.values()) btn.disabled = true;
  };

  padEl.addEventListener("pointerdown", (ev) => {
    padEl.setPointerCapture(ev.pointerId);
    const r = padEl.getBoundingClientRect();
    pad.resize(r.width, r.height);
    pad.engage(ev.clientX - r.left, ev.clientY - r.top);
  });
  padEl.addEventListener("pointermove", (ev) => {
    const r = padEl.getBoundingClientRect();
    pad.moveTo(ev.clientX - r.left, ev.clientY - r.top);
  });
  const lift = () => pad.release();
  padEl.addEventListener("pointerup", lift);
  padEl.addEventListener("pointercancel", lift);

  const ctx = canvas.getContext("2d");

  function render(): void {
    const now = Date.now();
    const { x, y } = pad.puck();
    puckEl.style.left = `${x}px`;
    puckEl.style.top = `${y}px`;

    if (ctx) drawHead(ctx, canvas.width, canvas.height, mirror.pose(), mirror.linkLost(now));

    const lost = !client.connected || mirror.linkLost(now);
    linkEl.textContent = lost ? "link lost" : "link ok";
    linkEl.className = lost ? "badge lost" : "badge ok";

    statusEl.textContent = statusLine(lastStatus);
    const phase = lastStatus?.phase ?? "Idle";
    promptEl.textContent = PROMPTS[phase] ?? "";
    countdownEl.textContent =
      phase === "Recording" ? `${countdown.tick(now).toFixed(1)} s` : "";

    if (toastText !== null && now < toastUntilMs) {
      toastEl.textContent = toastText;
      toastEl.classList.add("show");
    } else {
      toastEl.classList.remove("show");
    }
    requestAnimationFrame(render);
  }

  // buttons start gated as if the engine were in its start phase
  const startEnabled = enabledControls(null);
  for (const [event, btn] of buttons) btn.disabled = !startEnabled.has(event);

  client.subscribe(sessionStatusTopic(sessionId));
  client.subscribe(robotStateTopic(sessionId));
  client.start();
  publisher.start();
  requestAnimationFrame(render);
}

window.addEventListener("DOMContentLoaded", main);
