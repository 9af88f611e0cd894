/** Small fixed-size linear algebra helpers (row-major 4x4 as flat arrays). */

export type Vec3 = [number, number, number];
export type Mat4 = Float64Array; // 16 entries, row-major

export function mat4Identity(): Mat4 {
  const m = new Float64Array(16);
  m[0] = m[5] = m[10] = m[15] = 1;
  return m;
}

export function mat4Mul(a: Mat4, b: Mat4): Mat4 {
  const out = new Float64Array(16);
  for (let r = 0; r < 4; r++) {
    for (let c = 0; c < 4; c++) {
      let s = 0;
      for (let k = 0; k < 4; k++) s += a[r * 4 + k] * b[k * 4 + c];
      out[r * 4 + c] = s;
    }
  }
  return out;
}

export function mat4Translation(m: Mat4): Vec3 {
  return [m[3], m[7], m[11]];
}

export function vSub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function vAdd(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function vScale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function vNorm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

/** Clamp a vector to a ball of the given radius about the origin. */
export function clampToBall(a: Vec3, radius: number): Vec3 {
  const n = vNorm(a);
  if (n <= radius || n === 0) return a;
  return vScale(a, radius / n);
}
