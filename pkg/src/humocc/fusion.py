"""Camera feature sampling at projected BEV reference points.

Learned deformable-attention weights and offsets are replaced by a uniform
mean over every valid (reference point, camera) sample, which keeps the
projection geometry (distorted vs. plain pinhole) as the thing under test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BevFeatureMap, GridSpec
from .geometry import ProjStatus, bilinear_sample, project_points

DEFAULT_SAMPLES_PER_PILLAR = 4


@dataclass(frozen=True, eq=False)
class ReferencePointSet:
    spec: GridSpec
    points: np.ndarray  # X x Y x P x 3, ego frame

    @property
    def samples_per_pillar(self):
        return self.points.shape[2]


@dataclass(frozen=True, eq=False)
class ReferenceProjections:
    uv: np.ndarray  # X x Y x P x ncam x 2, feature-map pixels
    valid: np.ndarray  # X x Y x P x ncam
    feature_sizes: tuple  # per camera (width, height)
    spec: GridSpec

    def coverage(self):
        """Fraction of BEV cells with at least one valid sample."""
        return float(self.valid.any(axis=(2, 3)).mean())


def make_reference_points(spec: GridSpec, samples_per_pillar=DEFAULT_SAMPLES_PER_PILLAR):
    if samples_per_pillar < 1:
        raise ValueError("samples_per_pillar must be >= 1")
    nx, ny, _ = spec.dims
    (x0, _), (y0, _), (z0, z1) = spec.ranges
    vx, vy, _ = spec.voxel
    xs = x0 + (np.arange(nx) + 0.5) * vx
    ys = y0 + (np.arange(ny) + 0.5) * vy
    zs = z0 + (np.arange(samples_per_pillar) + 0.5) * (z1 - z0) / samples_per_pillar
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    return ReferencePointSet(spec, np.stack([gx, gy, gz], axis=-1))


def project_reference_points(rps: ReferencePointSet, cams, feature_scale=1.0,
                             use_distortion=True) -> ReferenceProjections:
    if feature_scale <= 0:
        raise ValueError("feature_scale must be positive")
    pts = rps.points.reshape(-1, 3)
    lead = rps.points.shape[:3]
    uvs, valids, sizes = [], [], []
    for cam in cams:
        w = int(round(cam.resolution[0] * feature_scale))
        h = int(round(cam.resolution[1] * feature_scale))
        uv, status = project_points(cam, pts, use_distortion)
        uv = uv * feature_scale
        with np.errstate(invalid="ignore"):
            ok = ((status != ProjStatus.BEHIND_CAMERA)
                  & (uv[:, 0] >= 0) & (uv[:, 0] <= w - 1)
                  & (uv[:, 1] >= 0) & (uv[:, 1] <= h - 1))
        uvs.append(uv.reshape(lead + (2,)))
        valids.append(ok.reshape(lead))
        sizes.append((w, h))
    return ReferenceProjections(np.stack(uvs, axis=3), np.stack(valids, axis=3),
                                tuple(sizes), rps.spec)


def sample_camera_features(feats, proj: ReferenceProjections) -> BevFeatureMap:
    """Mean of bilinear samples over all valid (point, camera) pairs per BEV cell."""
    nx, ny, p, ncam = proj.valid.shape
    if len(feats) != ncam:
        raise ValueError(f"{len(feats)} feature maps for {ncam} cameras")
    c = np.asarray(feats[0]).shape[-1]
    total = np.zeros((nx, ny, c))
    count = proj.valid.sum(axis=(2, 3)).astype(np.float64)
    for k, fmap in enumerate(feats):
        fmap = np.asarray(fmap, dtype=np.float64)
        h, w = fmap.shape[:2]
        if (w, h) != proj.feature_sizes[k]:
            raise ValueError(f"camera {k}: feature map {w}x{h} != expected {proj.feature_sizes[k]}")
        mask = proj.valid[..., k]
        if not mask.any():
            continue
        samples = bilinear_sample(fmap, proj.uv[..., k, :][mask])
        cell_ids = np.nonzero(mask)
        np.add.at(total, (cell_ids[0], cell_ids[1]), samples)
    out = np.divide(total, count[..., None], out=np.zeros_like(total),
                    where=count[..., None] > 0)
    spec = proj.spec
    return BevFeatureMap((spec.x_range, spec.y_range), out)
