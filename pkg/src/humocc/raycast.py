"""Exact voxel traversal (Amanatides-Woo) over dense occupancy grids."""

from __future__ import annotations

import math

import numba
import numpy as np

from .core import OccupancyGrid

HIT = 0
MISS = 1
ORIGIN_OUTSIDE = 2


@numba.njit(cache=True)
def _cast_one(vox, lo, vs, ox, oy, oz, dx, dy, dz, visited, mark):
    nx, ny, nz = vox.shape
    p = (ox - lo[0], oy - lo[1], oz - lo[2])
    d = (dx, dy, dz)
    ext = (nx * vs[0], ny * vs[1], nz * vs[2])

    t_enter = -math.inf
    t_exit = math.inf
    for a in range(3):
        if d[a] == 0.0:
            if p[a] < 0.0 or p[a] >= ext[a]:
                return ORIGIN_OUTSIDE, 0.0, 0
        else:
            t0 = (0.0 - p[a]) / d[a]
            t1 = (ext[a] - p[a]) / d[a]
            if t0 > t1:
                t0, t1 = t1, t0
            t_enter = max(t_enter, t0)
            t_exit = min(t_exit, t1)

    inside = (0.0 <= p[0] < ext[0]) and (0.0 <= p[1] < ext[1]) and (0.0 <= p[2] < ext[2])
    if inside:
        t = 0.0
    else:
        if t_exit < t_enter or t_exit <= 0.0 or t_enter < 0.0:
            return ORIGIN_OUTSIDE, 0.0, 0
        t = t_enter

    ix = int(math.floor((p[0] + t * d[0]) / vs[0]))
    iy = int(math.floor((p[1] + t * d[1]) / vs[1]))
    iz = int(math.floor((p[2] + t * d[2]) / vs[2]))
    ix = min(max(ix, 0), nx - 1)
    iy = min(max(iy, 0), ny - 1)
    iz = min(max(iz, 0), nz - 1)

    sx = 1 if dx > 0.0 else (-1 if dx < 0.0 else 0)
    sy = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
    sz = 1 if dz > 0.0 else (-1 if dz < 0.0 else 0)

    while True:
        s = vox[ix, iy, iz]
        if s != 0 and s != 255:
            return HIT, t, int(s)
        if mark:
            visited[ix, iy, iz] = True
        # next boundary crossing on each axis, recomputed from the ray origin
        tx = math.inf
        if sx > 0:
            tx = ((ix + 1) * vs[0] - p[0]) / dx
        elif sx < 0:
            tx = (ix * vs[0] - p[0]) / dx
        ty = math.inf
        if sy > 0:
            ty = ((iy + 1) * vs[1] - p[1]) / dy
        elif sy < 0:
            ty = (iy * vs[1] - p[1]) / dy
        tz = math.inf
        if sz > 0:
            tz = ((iz + 1) * vs[2] - p[2]) / dz
        elif sz < 0:
            tz = (iz * vs[2] - p[2]) / dz
        if tx <= ty and tx <= tz:
            ix += sx
            t = max(t, tx)
        elif ty <= tz:
            iy += sy
            t = max(t, ty)
        else:
            iz += sz
            t = max(t, tz)
        if ix < 0 or ix >= nx or iy < 0 or iy >= ny or iz < 0 or iz >= nz:
            return MISS, 0.0, 0


@numba.njit(cache=True)
def _cast_many(vox, lo, vs, origins, dirs, visited, mark, status, depth, cls):
    m = dirs.shape[0]
    shared = origins.shape[0] == 1
    for r in range(m):
        o = 0 if shared else r
        st, t, c = _cast_one(vox, lo, vs, origins[o, 0], origins[o, 1], origins[o, 2],
                             dirs[r, 0], dirs[r, 1], dirs[r, 2], visited, mark)
        status[r] = st
        depth[r] = t
        cls[r] = c


def cast_rays(grid: OccupancyGrid, origins, dirs, mark_traversed=False):
    """Cast rays through ``grid`` and report first OCCUPIED hits.

    ``origins`` is a single 3-vector or one per ray. Returns ``(status,
    depth, class_id)`` arrays, plus the boolean traversal mask when
    ``mark_traversed`` is set (voxels passed through before the first hit).
    """
    dirs = np.ascontiguousarray(np.reshape(dirs, (-1, 3)), dtype=np.float64)
    origins = np.ascontiguousarray(np.reshape(origins, (-1, 3)), dtype=np.float64)
    if origins.shape[0] not in (1, dirs.shape[0]):
        raise ValueError("need one origin or one per ray")
    m = dirs.shape[0]
    status = np.empty(m, np.int8)
    depth = np.empty(m, np.float64)
    cls = np.empty(m, np.int32)
    visited = np.zeros(grid.spec.dims if mark_traversed else (1, 1, 1), np.bool_)
    vox = np.ascontiguousarray(grid.voxels)
    _cast_many(vox, grid.spec.origin, grid.spec.voxel_size, origins, dirs,
               visited, mark_traversed, status, depth, cls)
    if mark_traversed:
        return status, depth, cls, visited
    return status, depth, cls

