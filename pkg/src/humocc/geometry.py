"""Rigid transforms, camera projection, box containment and BEV resampling."""

from __future__ import annotations

import enum
import math
from typing import NamedTuple

import numpy as np

from .core import BevFeatureMap, Box3D, CameraModel, PointCloud, Se3Pose
from .errors import DegeneratePoseError, NoConvergenceError, NotPlanarError

_BEHIND_EPS = 1e-6
_SNAP = 1e-9


def compose(a: Se3Pose, b: Se3Pose) -> Se3Pose:
    """``a o b``: apply ``b`` first, then ``a``."""
    return a @ b


def inverse(pose: Se3Pose) -> Se3Pose:
    return pose.inverse()


def transform_points(pose: Se3Pose, cloud):
    """Apply ``pose`` to a PointCloud (attributes kept) or to a raw N x 3 array."""
    if isinstance(cloud, PointCloud):
        return cloud.with_points(pose.apply(cloud.points))
    return pose.apply(cloud)


def gravity_align(pose: Se3Pose) -> Se3Pose:
    """Drop roll and pitch from ``pose``, keeping its heading and translation."""
    R = pose.rotation
    horiz = math.hypot(R[0, 0], R[1, 0])
    if horiz < math.sin(1e-6):
        raise DegeneratePoseError("forward axis is vertical; heading undefined")
    yaw = math.atan2(R[1, 0], R[0, 0])
    return Se3Pose.from_yaw(yaw, pose.translation)


def is_planar(pose: Se3Pose, tol=1e-6):
    R = pose.rotation
    return max(abs(R[2, 0]), abs(R[2, 1]), abs(R[0, 2]), abs(R[1, 2])) < tol


# -- camera -----------------------------------------------------------------

class ProjStatus(enum.IntEnum):
    OK = 0
    BEHIND_CAMERA = 1
    OUT_OF_IMAGE = 2


class Projection(NamedTuple):
    u: float
    v: float
    status: ProjStatus


def distort(dist, x, y):
    """Radial-tangential distortion of normalized image coordinates."""
    k1, k2, k3, p1, p2 = dist
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    return xd, yd


def _distort_jacobian(dist, x, y):
    k1, k2, k3, p1, p2 = dist
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    dr = k1 + r2 * (2.0 * k2 + 3.0 * k3 * r2)
    a = radial + 2.0 * x * x * dr + 2.0 * p1 * y + 6.0 * p2 * x
    b = 2.0 * x * y * dr + 2.0 * p1 * x + 2.0 * p2 * y
    c = 2.0 * x * y * dr + 2.0 * p1 * x + 2.0 * p2 * y
    d = radial + 2.0 * y * y * dr + 6.0 * p1 * y + 2.0 * p2 * x
    return a, b, c, d


def undistort_normalized(cam: CameraModel, xd, yd, tol=1e-13, max_iter=50):
    """Invert ``distort`` by Newton iteration.

    Works on scalars or arrays. Raises NoConvergenceError if any element has
    not converged after ``max_iter`` steps.
    """
    scalar = np.isscalar(xd) and np.isscalar(yd)
    xd = np.atleast_1d(np.asarray(xd, dtype=np.float64))
    yd = np.atleast_1d(np.asarray(yd, dtype=np.float64))
    x, y = xd.copy(), yd.copy()
    if not any(cam.dist):
        return (float(x[0]), float(y[0])) if scalar else (x, y)
    active = np.ones(x.shape, bool)
    for _ in range(max_iter):
        fx, fy = distort(cam.dist, x[active], y[active])
        ex, ey = fx - xd[active], fy - yd[active]
        done = np.maximum(np.abs(ex), np.abs(ey)) <= tol * np.maximum(
            1.0, np.maximum(np.abs(xd[active]), np.abs(yd[active])))
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        if not active.any():
            break
        keep = ~done
        ex, ey = ex[keep], ey[keep]
        xa, ya = x[active], y[active]
        a, b, c, d = _distort_jacobian(cam.dist, xa, ya)
        det = a * d - b * c
        with np.errstate(divide="ignore", invalid="ignore"):
            x[active] = xa - (d * ex - b * ey) / det
            y[active] = ya - (a * ey - c * ex) / det
        bad = ~np.isfinite(x) | ~np.isfinite(y)
        if bad.any():
            raise NoConvergenceError("undistortion diverged")
    else:
        raise NoConvergenceError(f"undistortion did not converge in {max_iter} iterations")
    # a root on the far side of the fold (radial factor or Jacobian flipped) is not a
    # physical preimage, e.g. k1 = -0.5, x' = 2 "converges" to x = -2
    r2 = x * x + y * y
    k1, k2, k3 = cam.dist[:3]
    a, b, c, d = _distort_jacobian(cam.dist, x, y)
    if np.any(1.0 + r2 * (k1 + r2 * (k2 + r2 * k3)) <= 0) or np.any(a * d - b * c <= 0):
        raise NoConvergenceError("point lies outside the invertible region of the distortion")
    return (float(x[0]), float(y[0])) if scalar else (x, y)


def project_points(cam: CameraModel, pts_ego, use_distortion=True):
    """Project N x 3 ego-frame points. Returns ``(uv, status)`` arrays.

    ``uv`` is NaN for points behind the camera.
    """
    pc = cam.extrinsic.apply(np.reshape(pts_ego, (-1, 3)))
    z = pc[:, 2]
    front = z > _BEHIND_EPS
    uv = np.full((len(pc), 2), np.nan)
    x = pc[front, 0] / z[front]
    y = pc[front, 1] / z[front]
    if use_distortion:
        x, y = distort(cam.dist, x, y)
    uv[front, 0] = cam.fx * x + cam.cx
    uv[front, 1] = cam.fy * y + cam.cy
    w, h = cam.resolution
    status = np.full(len(pc), int(ProjStatus.BEHIND_CAMERA), np.int8)
    with np.errstate(invalid="ignore"):
        inside = (uv[:, 0] >= 0) & (uv[:, 0] < w) & (uv[:, 1] >= 0) & (uv[:, 1] < h)
    status[front] = ProjStatus.OUT_OF_IMAGE
    status[front & inside] = ProjStatus.OK
    return uv, status


def project(cam: CameraModel, p_ego) -> Projection:
    uv, status = project_points(cam, np.asarray(p_ego, dtype=np.float64)[None, :])
    return Projection(float(uv[0, 0]), float(uv[0, 1]), ProjStatus(int(status[0])))


# -- boxes ------------------------------------------------------------------

def to_box_frame(box: Box3D, pts):
    """Express points in the box frame: translate by -center, rotate by -yaw."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    d = np.reshape(pts, (-1, 3)) - box.center
    out = np.empty_like(d)
    out[:, 0] = c * d[:, 0] + s * d[:, 1]
    out[:, 1] = -s * d[:, 0] + c * d[:, 1]
    out[:, 2] = d[:, 2]
    return out


def from_box_frame(box: Box3D, local):
    return box.pose().apply(local)


def points_in_box(box: Box3D, cloud):
    pts = cloud.points if isinstance(cloud, PointCloud) else cloud
    local = to_box_frame(box, pts)
    half = box.size / 2.0
    return np.all(np.abs(local) <= half, axis=1)


# -- resampling -------------------------------------------------------------

def _snap(c):
    r = np.round(c)
    return np.where(np.abs(c - r) < _SNAP, r, c)


def bilinear_sample(feat, uv):
    """Bilinear lookup with zero padding.

    ``feat`` is a BevFeatureMap or an H x W x C array; ``uv`` holds
    ``(u, v)`` = (column, row) coordinates, shape (..., 2). Coordinates
    outside ``[0, W-1] x [0, H-1]`` give zeros.
    """
    data = feat.data if isinstance(feat, BevFeatureMap) else np.asarray(feat, dtype=np.float64)
    if data.ndim == 2:
        data = data[..., None]
    h, w, c = data.shape
    uv = np.asarray(uv, dtype=np.float64)
    lead = uv.shape[:-1]
    uv = uv.reshape(-1, 2)
    u = _snap(uv[:, 0])
    v = _snap(uv[:, 1])
    valid = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    out = np.zeros((len(u), c))
    if valid.any():
        u, v = u[valid], v[valid]
        j0 = np.floor(u).astype(np.int64)
        i0 = np.floor(v).astype(np.int64)
        fu = (u - j0)[:, None]
        fv = (v - i0)[:, None]
        j1 = np.minimum(j0 + 1, w - 1)
        i1 = np.minimum(i0 + 1, h - 1)
        top = data[i0, j0] * (1.0 - fu) + data[i0, j1] * fu
        bot = data[i1, j0] * (1.0 - fu) + data[i1, j1] * fu
        out[valid] = top * (1.0 - fv) + bot * fv
    return out.reshape(lead + (c,))


def warp_bev(feat: BevFeatureMap, t_rel: Se3Pose) -> BevFeatureMap:
    """Resample ``feat`` into the frame where ``t_rel`` maps points back to ``feat``'s frame.

    Backward warping: every output cell center is pushed through ``t_rel`` and
    the source map is sampled bilinearly there.
    """
    if not is_planar(t_rel):
        raise NotPlanarError("relative motion has roll/pitch components")
    (x0, _), (y0, _) = feat.extent
    dx, dy = feat.cell
    gx, gy = feat.cell_centers()
    R, t = t_rel.rotation, t_rel.translation
    sx = R[0, 0] * gx + R[0, 1] * gy + t[0]
    sy = R[1, 0] * gx + R[1, 1] * gy + t[1]
    rows = (sx - x0) / dx - 0.5
    cols = (sy - y0) / dy - 0.5
    out = bilinear_sample(feat.data, np.stack([cols, rows], axis=-1))
    return feat.replace(out)
