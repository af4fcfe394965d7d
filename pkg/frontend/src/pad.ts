import {
  PAN_MAX_DEG,
  PAN_MIN_DEG,
  Pose,
  TILT_MAX_DEG,
  TILT_MIN_DEG,
} from "./protocol.js";

/** Starting posture; matches the calibration pose the engine expects. */
export const REST_POSE: Pose = { panDeg: -90, tiltDeg: 0 };

function clamp(value: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, value));
}

/**
 * Pointer-to-pose mapping for the drag pad.
 *
 * The pad rectangle covers the full motion range: x runs left to right over
 * pan, y runs top to bottom with the top edge meaning tilt fully up. Releases
 * hold the last pose rather than springing back, so the puppet keeps its
 * posture between gestures and the publish loop always has a current pose.
 */
export class PadState {
  private panDeg: number;
  private tiltDeg: number;
  private down = false;

  constructor(private width: number, private height: number, start: Pose = REST_POSE) {
    if (!(width > 0) || !(height > 0)) throw new RangeError("pad needs a positive size");
    this.panDeg = start.panDeg;
    this.tiltDeg = start.tiltDeg;
  }

  get engaged(): boolean {
    return this.down;
  }

  pose(): Pose {
    return { panDeg: this.panDeg, tiltDeg: this.tiltDeg };
  }

  resize(width: number, height: number): void {
    if (!(width > 0) || !(height > 0)) return;
    this.width = width;
    this.height = height;
  }

  /** Pad coordinates of the current pose, for drawing the puck. */
  puck(): { x: number; y: number } {
    return {
      x: ((this.panDeg - PAN_MIN_DEG) / (PAN_MAX_DEG - PAN_MIN_DEG)) * this.width,
      y: ((TILT_MAX_DEG - this.tiltDeg) / (TILT_MAX_DEG - TILT_MIN_DEG)) * this.height,
    };
  }

  engage(x: number, y: number): void {
    this.down = true;
    this.moveTo(x, y);
  }

  moveTo(x: number, y: number): void {
    if (!this.down) return;
    const fx = clamp(x / this.width, 0, 1);
    const fy = clamp(y / this.height, 0, 1);
    this.panDeg = PAN_MIN_DEG + fx * (PAN_MAX_DEG - PAN_MIN_DEG);
    this.tiltDeg = TILT_MAX_DEG - fy * (TILT_MAX_DEG - TILT_MIN_DEG);
  }

  release(): void {
    this.down = false;
  }
}
