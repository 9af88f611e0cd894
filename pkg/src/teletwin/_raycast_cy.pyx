# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled ray-cast kernel; mirrors _raycast_py.cast_rays exactly.

Same primitive encoding as the numpy fallback: kinds 0 plane / 1 box /
2 vertical capped cylinder, parameter rows as documented there.  The pixel
loop runs without the GIL so rendering can overlap the control tick loop.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, sqrt

cnp.import_array()

DEF T_MIN = 1e-9
DEF EPS = 1e-12


def cast_rays(origin, dirs, kinds, params, double max_depth):
    origin = np.ascontiguousarray(origin, dtype=np.float64)
    d = np.ascontiguousarray(dirs, dtype=np.float64)
    shape = d.shape[:-1]
    if len(kinds) == 0:
        return (np.zeros(shape, dtype=np.float64),
                np.full(shape, -1, dtype=np.int32))

    cdef double[:, ::1] flat = d.reshape(-1, 3)
    cdef double[::1] org = origin
    cdef cnp.int32_t[::1] kind_arr = np.ascontiguousarray(kinds, dtype=np.int32)
    cdef double[:, ::1] par = np.ascontiguousarray(params, dtype=np.float64).reshape(len(kinds), -1)

    cdef Py_ssize_t n_rays = flat.shape[0]
    cdef Py_ssize_t n_obj = kind_arr.shape[0]
    out_t_arr = np.zeros(n_rays, dtype=np.float64)
    out_i_arr = np.empty(n_rays, dtype=np.int32)
    cdef double[::1] out_t = out_t_arr
    cdef cnp.int32_t[::1] out_i = out_i_arr

    cdef double ox = org[0], oy = org[1], oz = org[2]
    cdef double dx, dy, dz, best, t
    cdef int best_i, k
    cdef Py_ssize_t ri, oi

    with nogil:
        for ri in range(n_rays):
            dx = flat[ri, 0]
            dy = flat[ri, 1]
            dz = flat[ri, 2]
            best = INFINITY
            best_i = -1
            for oi in range(n_obj):
                k = kind_arr[oi]
                if k == 0:
                    t = _plane_t(ox, oy, oz, dx, dy, dz, &par[oi, 0])
                elif k == 1:
                    t = _box_t(ox, oy, oz, dx, dy, dz, &par[oi, 0])
                else:
                    t = _cylinder_t(ox, oy, oz, dx, dy, dz, &par[oi, 0])
                if t < best:
                    best = t
                    best_i = <int> oi
            if best_i < 0 or best > max_depth:
                out_t[ri] = 0.0
                out_i[ri] = -1
            else:
                out_t[ri] = best
                out_i[ri] = best_i

    return out_t_arr.reshape(shape), out_i_arr.reshape(shape)


cdef inline double _plane_t(double ox, double oy, double oz,
                            double dx, double dy, double dz,
                            double* p) noexcept nogil:
    cdef double denom = dx * p[0] + dy * p[1] + dz * p[2]
    if fabs(denom) <= EPS:
        return INFINITY
    cdef double t = (p[3] - (ox * p[0] + oy * p[1] + oz * p[2])) / denom
    if t > T_MIN:
        return t
    return INFINITY


cdef inline double _box_t(double ox, double oy, double oz,
                          double dx, double dy, double dz,
                          double* p) noexcept nogil:
    cdef double tnear = -INFINITY
    cdef double tfar = INFINITY
    cdef double o, d, lo, hi, t1, t2, tmp
    cdef int ax
    for ax in range(3):
        if ax == 0:
            o = ox; d = dx
        elif ax == 1:
            o = oy; d = dy
        else:
            o = oz; d = dz
        lo = p[ax]
        hi = p[3 + ax]
        if fabs(d) <= EPS:
            if o < lo or o > hi:
                return INFINITY
            continue
        t1 = (lo - o) / d
        t2 = (hi - o) / d
        if t1 > t2:
            tmp = t1; t1 = t2; t2 = tmp
        if t1 > tnear:
            tnear = t1
        if t2 < tfar:
            tfar = t2
    if tnear > tfar:
        return INFINITY
    cdef double t = tnear if tnear > T_MIN else tfar
    if t > T_MIN:
        return t
    return INFINITY


cdef inline double _cylinder_t(double ox, double oy, double oz,
                               double dx, double dy, double dz,
                               double* p) noexcept nogil:
    cdef double rx = ox - p[0]
    cdef double ry = oy - p[1]
    cdef double rz = oz - p[2]
    cdef double r = p[3]
    cdef double hh = p[4]
    cdef double best = INFINITY
    cdef double a = dx * dx + dy * dy
    cdef double b = 2.0 * (rx * dx + ry * dy)
    cdef double c = rx * rx + ry * ry - r * r
    cdef double disc = b * b - 4.0 * a * c
    cdef double sq, t, z, xx, yy
    if a > EPS and disc >= 0.0:
        sq = sqrt(disc)
        t = (-b - sq) / (2.0 * a)
        z = rz + t * dz
        if t > T_MIN and fabs(z) <= hh and t < best:
            best = t
        t = (-b + sq) / (2.0 * a)
        z = rz + t * dz
        if t > T_MIN and fabs(z) <= hh and t < best:
            best = t
    if fabs(dz) > EPS:
        t = (-hh - rz) / dz
        xx = rx + t * dx
        yy = ry + t * dy
        if t > T_MIN and xx * xx + yy * yy <= r * r and t < best:
            best = t
        t = (hh - rz) / dz
        xx = rx + t * dx
        yy = ry + t * dy
        if t > T_MIN and xx * xx + yy * yy <= r * r and t < best:
            best = t
    return best
