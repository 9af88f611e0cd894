"""Vectorized numpy ray-cast kernel (fallback when the compiled one is absent).

Primitives are encoded as parallel arrays so the compiled kernel and this one
share one calling convention:

  kinds[i]  -- 0 plane, 1 axis-aligned box, 2 vertical capped cylinder
  params[i] -- plane:    nx ny nz c        (n . x = c)
               box:      xmin ymin zmin xmax ymax zmax
               cylinder: cx cy cz radius half_height

Rays are origin + t * dir with unnormalized dir; the returned t equals the
camera-frame Z when dir is built with a unit z-component.
"""

import numpy as np

PLANE, BOX, CYLINDER = 0, 1, 2

_T_MIN = 1e-9
_EPS = 1e-12


def cast_rays(origin, dirs, kinds, params, max_depth):
    """Nearest-hit distances and object indices for a bundle of rays.

    origin: (3,), dirs: (..., 3).  Returns (t, hit) where t is 0.0 and hit is
    -1 for rays that miss everything or only hit beyond max_depth.
    """
    origin = np.asarray(origin, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    shape = dirs.shape[:-1]
    best_t = np.full(shape, np.inf)
    best_i = np.full(shape, -1, dtype=np.int32)

    for i in range(len(kinds)):
        k = int(kinds[i])
        p = params[i]
        if k == PLANE:
            t = _plane_t(origin, dirs, p)
        elif k == BOX:
            t = _box_t(origin, dirs, p)
        elif k == CYLINDER:
            t = _cylinder_t(origin, dirs, p)
        else:
            raise ValueError(f"unknown primitive kind {k}")
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_i = np.where(closer, np.int32(i), best_i)

    miss = ~np.isfinite(best_t) | (best_t > max_depth)
    best_t = np.where(miss, 0.0, best_t)
    best_i = np.where(miss, np.int32(-1), best_i)
    return best_t, best_i


def _plane_t(origin, dirs, p):
    n = p[:3]
    denom = dirs @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (p[3] - origin @ n) / denom
    t = np.where(np.abs(denom) > _EPS, t, np.inf)
    return np.where(t > _T_MIN, t, np.inf)


def _box_t(origin, dirs, p):
    lo, hi = p[:3], p[3:6]
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origin) / dirs
        t2 = (hi - origin) / dirs
    near = np.minimum(t1, t2)
    far = np.maximum(t1, t2)
    # a zero direction component leaves nan; the slab then constrains nothing
    # unless the origin lies outside it
    for ax in range(3):
        zero = np.abs(dirs[..., ax]) <= _EPS
        inside = (origin[ax] >= lo[ax]) & (origin[ax] <= hi[ax])
        near[..., ax] = np.where(zero, np.where(inside, -np.inf, np.inf), near[..., ax])
        far[..., ax] = np.where(zero, np.where(inside, np.inf, -np.inf), far[..., ax])
    tnear = near.max(axis=-1)
    tfar = far.min(axis=-1)
    t = np.where(tnear > _T_MIN, tnear, tfar)
    hit = (tnear <= tfar) & (t > _T_MIN)
    return np.where(hit, t, np.inf)


def _cylinder_t(origin, dirs, p):
    cx, cy, cz, r, hh = p[0], p[1], p[2], p[3], p[4]
    ox, oy, oz = origin[0] - cx, origin[1] - cy, origin[2] - cz
    dx, dy, dz = dirs[..., 0], dirs[..., 1], dirs[..., 2]

    best = np.full(dx.shape, np.inf)

    a = dx * dx + dy * dy
    b = 2.0 * (ox * dx + oy * dy)
    c = ox * ox + oy * oy - r * r
    disc = b * b - 4.0 * a * c
    ok = (a > _EPS) & (disc >= 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.where(disc >= 0.0, disc, 0.0))
        for sign in (-1.0, 1.0):
            t = (-b + sign * sq) / (2.0 * a)
            z = oz + t * dz
            valid = ok & (t > _T_MIN) & (np.abs(z) <= hh)
            best = np.where(valid & (t < best), t, best)
        # end caps
        for zcap in (-hh, hh):
            t = (zcap - oz) / dz
            xx = ox + t * dx
            yy = oy + t * dy
            valid = (np.abs(dz) > _EPS) & (t > _T_MIN) & (xx * xx + yy * yy <= r * r)
            best = np.where(valid & (t < best), t, best)
    return best
