import { Pose, PosePayload, ticksToDegrees } from "./protocol.js";

/** A state report older than this means the robot link is considered lost. */
export const LINK_LOST_AFTER_MS = 500;

/**
 * Latest reported robot posture plus staleness bookkeeping. Review playback
 * needs no special handling here: the engine replays the take over the same
 * state topic, so whatever arrives is simply the newest thing to show.
 */
export class MirrorModel {
  private last: Pose | null = null;
  private lastSeq = -1;
  private updatedAtMs = Number.NEGATIVE_INFINITY;

  apply(state: PosePayload, nowMs: number): void {
    this.last = {
      panDeg: ticksToDegrees(state.panTicks),
      tiltDeg: ticksToDegrees(state.tiltTicks),
    };
    this.lastSeq = state.seq;
    this.updatedAtMs = nowMs;
  }

  pose(): Pose | null {
    return this.last;
  }

  seq(): number {
    return this.lastSeq;
  }

  /** Strictly older than the threshold; a report exactly 500 ms old is live. */
  linkLost(nowMs: number): boolean {
    return nowMs - this.updatedAtMs > LINK_LOST_AFTER_MS;
  }
}

/**
 * Side view of the head: a neck post and a face plate. Tilt rocks the plate
 * about the horizontal axis; pan turns it about the vertical axis, shown as
 * cosine foreshortening plus a nose marker that slides toward the facing
 * direction.
 */
export function drawHead(
  ctx: CanvasRenderingContext2D,
  width: number,
  height: number,
  pose: Pose | null,
  linkLost: boolean,
): void {
  ctx.clearRect(0, 0, width, height);
  if (pose === null) return;
  const cx = width / 2;
  const cy = height * 0.55;
  const tiltRad = (pose.tiltDeg * Math.PI) / 180;
  const panRad = (pose.panDeg * Math.PI) / 180;
  const ink = linkLost ? "#9a9a9a" : "#20262e";

  ctx.save();
  ctx.strokeStyle = ink;
  ctx.lineWidth = Math.max(3, width * 0.02);
  ctx.beginPath();
  ctx.moveTo(cx, height * 0.92);
  ctx.lineTo(cx, cy);
  ctx.stroke();

  const halfSpan = width * 0.3;
  // never collapse the plate to a sliver, even edge-on
  const halfW = halfSpan * Math.max(0.18, Math.abs(Math.cos(panRad)));
  const plateH = Math.max(8, height * 0.09);
  ctx.translate(cx, cy);
  ctx.rotate(-tiltRad);
  ctx.fillStyle = ink;
  ctx.fillRect(-halfW, -plateH / 2, halfW * 2, plateH);
  ctx.fillStyle = linkLost ? "#c4c4c4" : "#e4572e";
  const noseX = halfSpan * Math.sin(panRad) * 0.85;
  ctx.beginPath();
  ctx.arc(noseX, -plateH, Math.max(3, width * 0.02), 0, Math.PI * 2);
  ctx.fill();
  ctx.restore();
}
