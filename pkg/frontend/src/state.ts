/**
 * Console-side session state: one-slot latest-state buffer plus HUD metrics.
 *
 * The running trajectory length uses the same summation as the server-side
 * session metrics (sum of |ee deltas| from the start event) and freezes at
 * the grasp event.
 */

import { vNorm, vSub, Vec3 } from './math.js';
import { StateMsg } from './protocol.js';

export type ConnectionStatus = 'connecting' | 'connected' | 'error' | 'closed';

export class ConsoleState {
  status: ConnectionStatus = 'connecting';
  latest: StateMsg | null = null;
  lastReceivedAt = 0;       // ms epoch of the newest state
  statesReceived = 0;
  controlsSent = 0;
  sessionStartT: number | null = null;
  grasped = false;

  private trajectory = 0;
  private started = false;
  private lastEE: Vec3 | null = null;

  /** Fold one state message into the buffer and HUD accumulators. */
  accept(msg: StateMsg, nowMs: number = Date.now()): void {
    this.latest = msg;
    this.lastReceivedAt = nowMs;
    this.statesReceived += 1;

    for (const ev of msg.events) {
      if (ev.name === 'start') {
        this.started = true;
        this.sessionStartT = msg.t;
        this.trajectory = 0;
        this.lastEE = msg.ee;
      } else if (ev.name === 'grasp') {
        if (this.started && this.lastEE) {
          this.trajectory += vNorm(vSub(msg.ee, this.lastEE));
          this.lastEE = msg.ee;
        }
        this.grasped = true; // freeze the counter
      }
    }
    if (this.started && !this.grasped) {
      if (this.lastEE) this.trajectory += vNorm(vSub(msg.ee, this.lastEE));
      this.lastEE = msg.ee;
    }
  }

  /** Meters traveled since the start event (frozen after grasp). */
  trajectoryLength(): number {
    return this.trajectory;
  }

  elapsedSeconds(): number {
    if (this.latest === null || this.sessionStartT === null) return 0;
    return this.latest.t - this.sessionStartT;
  }

  /** True when the displayed pose is fresh enough to trust (<= 100 ms old). */
  isFresh(nowMs: number = Date.now()): boolean {
    return this.latest !== null && nowMs - this.lastReceivedAt <= 100;
  }
}
