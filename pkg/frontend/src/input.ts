/**
 * Keyboard/pointer surrogate for the haptic handle.
 *
 * Pointer drag moves the handle in the horizontal plane (x right, y away),
 * wheel or Q/E raises and lowers it; the magnitude is clamped to the 160 mm
 * device radius before every send. Digits pick the scale, X/Y/Z toggle axis
 * locks, space toggles the gripper, R recenters the handle.
 */

import { clampToBall, Vec3 } from './math.js';
import { HAPTIC_RADIUS } from './protocol.js';

const DRAG_GAIN = 0.0008;   // meters of handle travel per pixel
const WHEEL_GAIN = 0.00015; // meters per wheel delta unit

export class InputState {
  haptic: Vec3 = [0, 0, 0];
  gripperClosed = false;
  scale: number | undefined;
  locks: [boolean, boolean, boolean] | undefined;
  active = false;          // true while the operator is interacting
  private dragging = false;

  pointerDown(): void {
    this.dragging = true;
    this.active = true;
  }

  pointerUp(): void {
    this.dragging = false;
  }

  pointerMove(dxPx: number, dyPx: number): void {
    if (!this.dragging) return;
    this.haptic = clampToBall([
      this.haptic[0] + dxPx * DRAG_GAIN,
      this.haptic[1] - dyPx * DRAG_GAIN,
      this.haptic[2],
    ], HAPTIC_RADIUS);
  }

  wheel(delta: number): void {
    this.active = true;
    this.haptic = clampToBall([
      this.haptic[0],
      this.haptic[1],
      this.haptic[2] - delta * WHEEL_GAIN,
    ], HAPTIC_RADIUS);
  }

  key(k: string): void {
    this.active = true;
    if (k >= '1' && k <= '5') {
      this.scale = Number(k);
    } else if (k === ' ') {
      this.gripperClosed = !this.gripperClosed;
    } else if (k === 'r') {
      this.haptic = [0, 0, 0];
    } else if (k === 'q' || k === 'e') {
      this.wheel(k === 'q' ? -40 : 40);
    } else if (k === 'x' || k === 'y' || k === 'z') {
      const idx = { x: 0, y: 1, z: 2 }[k]!;
      const locks: [boolean, boolean, boolean] =
        this.locks !== undefined ? [...this.locks] : [false, false, false];
      locks[idx] = !locks[idx];
      if (locks.filter(Boolean).length > 2) return; // server would reject
      this.locks = locks;
    }
  }

  gripperFraction(): number {
    return this.gripperClosed ? 1 : 0;
  }
}
