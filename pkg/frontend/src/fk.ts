/**
 * Client-side forward kinematics for the UR3 chain.
 *
 * Mirrors the server's DH table so the rendered arm and the streamed
 * end-effector position must agree; the test suite holds them to 1e-6 m
 * on recorded sessions.
 */

import { Mat4, Vec3, mat4Identity, mat4Mul, mat4Translation } from './math.js';

export const UR3_A = [0, -0.24365, -0.21325, 0, 0, 0];
export const UR3_D = [0.1519, 0, 0, 0.11235, 0.08535, 0.0819];
export const UR3_ALPHA = [Math.PI / 2, 0, 0, Math.PI / 2, -Math.PI / 2, 0];

function dhMatrix(a: number, d: number, alpha: number, theta: number): Mat4 {
  const ct = Math.cos(theta), st = Math.sin(theta);
  const ca = Math.cos(alpha), sa = Math.sin(alpha);
  return new Float64Array([
    ct, -st * ca, st * sa, a * ct,
    st, ct * ca, -ct * sa, a * st,
    0, sa, ca, d,
    0, 0, 0, 1,
  ]);
}

/** Frame origins (base + after each joint) and the end-effector position. */
export function forwardKinematics(q: number[]): { origins: Vec3[]; ee: Vec3 } {
  if (q.length !== 6) throw new Error(`expected 6 joint angles, got ${q.length}`);
  let t = mat4Identity();
  const origins: Vec3[] = [mat4Translation(t)];
  for (let i = 0; i < 6; i++) {
    t = mat4Mul(t, dhMatrix(UR3_A[i], UR3_D[i], UR3_ALPHA[i], q[i]));
    origins.push(mat4Translation(t));
  }
  return { origins, ee: origins[6] };
}
