/**
 * Message types and helpers shared with the teleop server (protocol v1).
 *
 * The console talks JSON over a WebSocket (one payload per text frame); the
 * same payloads run length-delimited over raw TCP, which the node test
 * harness uses.
 */

import { Vec3, clampToBall } from './math.js';

export const PROTOCOL_VERSION = 1;
export const HAPTIC_RADIUS = 0.16;

export interface Estimate {
  cls: string;
  center: [number, number, number];
  source: 'bbox' | 'mask';
  t: number;
}

export interface StateEvent {
  name: string;
  data: Record<string, unknown>;
}

export interface StateMsg {
  type: 'state';
  v: number;
  tick: number;
  t: number;
  joints: number[];
  ee: [number, number, number];
  gripper: number;
  estimates: Estimate[];
  scale: number;
  locks: [boolean, boolean, boolean];
  events: StateEvent[];
}

export interface ControlMsg {
  type: 'control';
  v: number;
  pos: [number, number, number];
  gripper: number;
  scale?: number;
  locks?: [boolean, boolean, boolean];
  t: number;
}

export function parseState(text: string): StateMsg | null {
  let d: unknown;
  try {
    d = JSON.parse(text);
  } catch {
    return null;
  }
  const msg = d as StateMsg;
  if (msg?.type !== 'state' || !Array.isArray(msg.joints) || msg.joints.length !== 6) {
    return null;
  }
  return msg;
}

/** Build a protocol-valid control message; position clamped to the haptic ball. */
export function makeControl(pos: Vec3, gripper: number,
                            scale?: number,
                            locks?: [boolean, boolean, boolean]): ControlMsg {
  const clamped = clampToBall(pos, HAPTIC_RADIUS);
  const msg: ControlMsg = {
    type: 'control',
    v: PROTOCOL_VERSION,
    pos: [clamped[0], clamped[1], clamped[2]],
    gripper: Math.min(1, Math.max(0, gripper)),
    t: Date.now() / 1000,
  };
  if (scale !== undefined) msg.scale = scale;
  if (locks !== undefined) msg.locks = locks;
  return msg;
}

/** Length-delimited framing used by the raw TCP transport. */
export function encodeFrame(payload: string): Uint8Array {
  const body = new TextEncoder().encode(payload);
  const head = new TextEncoder().encode(`${body.length}\n`);
  const out = new Uint8Array(head.length + body.length + 1);
  out.set(head, 0);
  out.set(body, head.length);
  out[out.length - 1] = 0x0a;
  return out;
}

/** Incremental decoder for the length-delimited TCP stream. */
export class FrameDecoder {
  private buf = new Uint8Array(0);

  feed(data: Uint8Array): string[] {
    const joined = new Uint8Array(this.buf.length + data.length);
    joined.set(this.buf, 0);
    joined.set(data, this.buf.length);
    this.buf = joined;
    const out: string[] = [];
    for (;;) {
      const nl = this.buf.indexOf(0x0a);
      if (nl < 0) break;
      const len = parseInt(new TextDecoder().decode(this.buf.subarray(0, nl)), 10);
      if (!Number.isFinite(len) || len <= 0) throw new Error('bad frame length');
      const end = nl + 1 + len;
      if (this.buf.length < end + 1) break;
      out.push(new TextDecoder().decode(this.buf.subarray(nl + 1, end)));
      this.buf = this.buf.slice(end + 1);
    }
    return out;
  }
}
