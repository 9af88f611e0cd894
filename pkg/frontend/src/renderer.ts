/**
 * Canvas twin view: arm segments from client-side FK, the tube, the
 * estimated ghost, the grasp mark, and the HUD readout.
 *
 * Three projection presets echo the usual virtual-scene cameras:
 * isometric, top (x/y), and side (y/z).
 */

import { forwardKinematics } from './fk.js';
import { Vec3 } from './math.js';
import { ConsoleState } from './state.js';

export type ViewPreset = 'iso' | 'top' | 'side';

const SCALE_PX = 420;          // pixels per meter
const ISO_AZIM = Math.PI / 4;
const ISO_ELEV = Math.atan(1 / Math.SQRT2);

export interface SceneHints {
  tubeCenter: Vec3;
  tubeRadius: number;
  tubeHeight: number;
  graspMark: Vec3;
}

export class Renderer {
  view: ViewPreset = 'iso';

  constructor(private ctx: CanvasRenderingContext2D,
              private width: number, private height: number,
              private hints: SceneHints) {}

  project(p: Vec3): [number, number] {
    let u: number, v: number;
    if (this.view === 'top') {
      u = p[0];
      v = p[1];
    } else if (this.view === 'side') {
      u = p[1];
      v = p[2];
    } else {
      const ca = Math.cos(ISO_AZIM), sa = Math.sin(ISO_AZIM);
      const ce = Math.cos(ISO_ELEV), se = Math.sin(ISO_ELEV);
      const x = p[0] * ca + p[1] * sa;
      const y = -p[0] * sa * se + p[1] * ca * se + p[2] * ce;
      u = x;
      v = y;
    }
    return [this.width * 0.45 + u * SCALE_PX,
            this.height * 0.72 - v * SCALE_PX];
  }

  draw(state: ConsoleState): void {
    const ctx = this.ctx;
    ctx.fillStyle = '#10141a';
    ctx.fillRect(0, 0, this.width, this.height);
    this.drawGrid();
    this.drawTube();

    const msg = state.latest;
    if (msg) {
      this.drawArm(msg.joints, msg.gripper);
      for (const est of msg.estimates) this.drawGhost(est.center as Vec3);
    }
    this.drawHud(state);
  }

  private drawGrid(): void {
    const ctx = this.ctx;
    ctx.strokeStyle = '#1e2630';
    ctx.lineWidth = 1;
    for (let i = -4; i <= 8; i++) {
      const a = this.project([i * 0.1, -0.4, 0]);
      const b = this.project([i * 0.1, 0.8, 0]);
      ctx.beginPath(); ctx.moveTo(a[0], a[1]); ctx.lineTo(b[0], b[1]); ctx.stroke();
      const c = this.project([-0.4, i * 0.1, 0]);
      const d = this.project([0.8, i * 0.1, 0]);
      ctx.beginPath(); ctx.moveTo(c[0], c[1]); ctx.lineTo(d[0], d[1]); ctx.stroke();
    }
  }

  private drawArm(joints: number[], gripper: number): void {
    const ctx = this.ctx;
    const { origins, ee } = forwardKinematics(joints);
    ctx.strokeStyle = '#7fb4ff';
    ctx.lineWidth = 5;
    ctx.lineJoin = 'round';
    ctx.beginPath();
    const base = this.project(origins[0]);
    ctx.moveTo(base[0], base[1]);
    for (let i = 1; i < origins.length; i++) {
      const p = this.project(origins[i]);
      ctx.lineTo(p[0], p[1]);
    }
    ctx.stroke();
    for (const o of origins) {
      const p = this.project(o);
      ctx.fillStyle = '#b9d4ff';
      ctx.beginPath(); ctx.arc(p[0], p[1], 3, 0, 2 * Math.PI); ctx.fill();
    }
    const tip = this.project(ee);
    ctx.strokeStyle = gripper > 0.5 ? '#ffd166' : '#9effa0';
    ctx.lineWidth = 2;
    const w = 6 + 8 * (1 - gripper);
    ctx.strokeRect(tip[0] - w / 2, tip[1] - 5, w, 10);
  }

  private drawTube(): void {
    const ctx = this.ctx;
    const { tubeCenter, tubeRadius, tubeHeight, graspMark } = this.hints;
    const bottom: Vec3 = [tubeCenter[0], tubeCenter[1], tubeCenter[2] - tubeHeight / 2];
    const top: Vec3 = [tubeCenter[0], tubeCenter[1], tubeCenter[2] + tubeHeight / 2];
    const b = this.project(bottom);
    const t = this.project(top);
    const rpx = tubeRadius * SCALE_PX;
    ctx.strokeStyle = '#7fe3a0';
    ctx.lineWidth = 2;
    ctx.strokeRect(Math.min(b[0], t[0]) - rpx, Math.min(b[1], t[1]),
                   rpx * 2 + Math.abs(b[0] - t[0]), Math.abs(b[1] - t[1]) || rpx * 2);
    const g = this.project(graspMark);
    ctx.strokeStyle = '#ff8c69';
    ctx.beginPath();
    ctx.moveTo(g[0] - 4, g[1] - 4); ctx.lineTo(g[0] + 4, g[1] + 4);
    ctx.moveTo(g[0] - 4, g[1] + 4); ctx.lineTo(g[0] + 4, g[1] - 4);
    ctx.stroke();
  }

  private drawGhost(center: Vec3): void {
    const ctx = this.ctx;
    const p = this.project(center);
    const rpx = this.hints.tubeRadius * SCALE_PX;
    ctx.setLineDash([4, 3]);
    ctx.strokeStyle = '#e6e6fa';
    ctx.lineWidth = 1.5;
    ctx.strokeRect(p[0] - rpx, p[1] - this.hints.tubeHeight * SCALE_PX / 2,
                   rpx * 2, this.hints.tubeHeight * SCALE_PX);
    ctx.setLineDash([]);
  }

  private drawHud(state: ConsoleState): void {
    const ctx = this.ctx;
    ctx.fillStyle = '#cfd8e3';
    ctx.font = '13px monospace';
    const msg = state.latest;
    const lines = [
      `status: ${state.status}${state.isFresh() ? '' : ' (stale)'}`,
      msg ? `tick ${msg.tick}  scale x${msg.scale}  locks ${msg.locks.map(Number).join('')}` : 'waiting for state...',
      msg ? `gripper ${(msg.gripper * 100).toFixed(0)}%` : '',
      `elapsed ${state.elapsedSeconds().toFixed(1)} s`,
      `trajectory ${state.trajectoryLength().toFixed(3)} m${state.grasped ? ' (grasped)' : ''}`,
      `view: ${this.view} (v to cycle)`,
    ];
    lines.forEach((line, i) => ctx.fillText(line, 10, 18 + i * 16));
  }
}
