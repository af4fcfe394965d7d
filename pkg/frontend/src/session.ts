/**
 * Session status mirroring and control gating.
 *
 * The engine owns every sequencing rule; this module never decides whether
 * an action is legal, it only reflects which control events the engine will
 * accept given the last status snapshot it published. Everything here is a
 * pure function of that snapshot so the buttons can never drift out of sync
 * with the engine's actual phase.
 */

export type Phase =
  | "Idle"
  | "Calibrating"
  | "Practicing"
  | "Recording"
  | "Reviewing"
  | "EmotionDone"
  | "SessionComplete";

export type ControlEvent =
  | "calibrate"
  | "practice"
  | "record"
  | "stop"
  | "accept"
  | "redo"
  | "advance";

export const CONTROL_EVENTS: readonly ControlEvent[] = [
  "calibrate",
  "practice",
  "record",
  "stop",
  "accept",
  "redo",
  "advance",
];

/** Shape of one engine status message (JSON over the status topic). */
export interface SessionStatus {
  session_id: string;
  phase: Phase;
  emotion: string | null;
  iteration: number;
  elapsed_ms: number;
  calibration_ok: boolean;
  clip_id: string | null;
  emotion_index: number;
  error?: string;
  detail?: string;
}

const utf8Decoder = new TextDecoder("utf-8");

export function parseStatus(payload: Uint8Array): SessionStatus {
  const raw = JSON.parse(utf8Decoder.decode(payload));
  if (typeof raw !== "object" || raw === null || typeof raw.phase !== "string") {
    throw new Error("status message has no phase");
  }
  return raw as SessionStatus;
}

/** The engine publishes statuses only on transitions, so before the first
 * one arrives the UI assumes the engine's start phase. */
export const START_PHASE: Phase = "Idle";

export function enabledControls(status: SessionStatus | null): ReadonlySet<ControlEvent> {
  const phase = status === null ? START_PHASE : status.phase;
  switch (phase) {
    case "Idle":
      return new Set(["calibrate"]);
    case "Calibrating":
      // the engine refuses practice until the puppet has reached the
      // calibration pose, so the button waits for the gate as well
      return status !== null && status.calibration_ok
        ? new Set(["practice"])
        : new Set();
    case "Practicing":
      return new Set(["record"]);
    case "Recording":
      return new Set(["stop"]);
    case "Reviewing":
      return new Set(["accept", "redo"]);
    case "EmotionDone":
      return new Set(["calibrate", "advance"]);
    case "SessionComplete":
      return new Set();
  }
}

/** Toast text for an engine rejection, or null for a clean status. */
export function toastFor(status: SessionStatus): string | null {
  if (!status.error) return null;
  const detail = status.detail ? `: ${status.detail}` : "";
  return `engine rejected input (${status.error})${detail}`;
}

/** One-line summary for the header: phase, expression word, take number. */
export function statusLine(status: SessionStatus | null): string {
  if (status === null) return "waiting for session";
  if (status.phase === "SessionComplete") return "session complete";
  if (!status.emotion) return status.phase;
  return `${status.phase}: ${status.emotion}, take ${status.iteration}`;
}

export const RECORD_LIMIT_MS = 5000;

/**
 * Wall-clock countdown shown while recording. The engine stops the take on
 * its own at the cap; this widget just displays the remaining time and fires
 * onDone exactly once when it reaches zero, with no user action involved.
 */
export class RecordingCountdown {
  private armedAtMs: number | null = null;
  private fired = false;

  constructor(private readonly onDone: () => void = () => {}) {}

  get running(): boolean {
    return this.armedAtMs !== null;
  }

  start(nowMs: number): void {
    this.armedAtMs = nowMs;
    this.fired = false;
  }

  cancel(): void {
    this.armedAtMs = null;
  }

  /** Seconds left, clamped at zero. */
  tick(nowMs: number): number {
    if (this.armedAtMs === null) return RECORD_LIMIT_MS / 1000;
    const leftMs = Math.max(0, RECORD_LIMIT_MS - (nowMs - this.armedAtMs));
    if (leftMs === 0 && !this.fired) {
      this.fired = true;
      this.onDone();
    }
    return leftMs / 1000;
  }
}
