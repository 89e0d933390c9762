"""Occupancy ground-truth generation from annotated LiDAR clips.

Static points from every frame are accumulated in one reference ego frame;
dynamic objects are accumulated in their own box frames and placed back at
each frame's box pose; the merged cloud is voxelized with a per-voxel
majority vote and, optionally, ray-traced to mark unobserved space.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (FREE, UNOBSERVED, GridSpec, OccupancyGrid, PointCloud, Scene, Se3Pose,
                   taxonomy_for, voxel_indices)
from .errors import FrameError, MissingPoseError, UnlabeledPointsError
from .geometry import from_box_frame, points_in_box, to_box_frame
from .metrics import RaySet
from .raycast import cast_rays

log = logging.getLogger(__name__)

DEFAULT_LIDAR_ORIGIN = (0.0, 0.0, 0.15)


@dataclass(frozen=True, eq=False)
class FrameAnnotation:
    frame_id: int
    ego_pose: Se3Pose | None  # world-from-ego
    cloud: PointCloud  # ego frame, labeled
    boxes: tuple = ()
    timestamp: float = 0.0

    def __post_init__(self):
        boxes = tuple(self.boxes)
        ids = [b.track_id for b in boxes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"frame {self.frame_id}: duplicate track ids in boxes")
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "frame_id", int(self.frame_id))

    @property
    def point_labels(self):
        return self.cloud.label

    def __eq__(self, other):
        if not isinstance(other, FrameAnnotation):
            return NotImplemented
        return (self.frame_id == other.frame_id and self.timestamp == other.timestamp
                and self.ego_pose == other.ego_pose and self.cloud == other.cloud
                and self.boxes == other.boxes)


@dataclass(frozen=True, eq=False)
class ClipDataset:
    clip_id: str
    scene: Scene
    frames: tuple
    cameras: tuple = ()
    lidar_origin: tuple = DEFAULT_LIDAR_ORIGIN
    lidar: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "scene", Scene.parse(self.scene))
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "cameras", tuple(self.cameras))
        object.__setattr__(self, "lidar_origin", tuple(float(v) for v in self.lidar_origin))

    @property
    def taxonomy(self):
        return taxonomy_for(self.scene)

    def frame(self, frame_id):
        for fa in self.frames:
            if fa.frame_id == frame_id:
                return fa
        raise KeyError(frame_id)

    def __len__(self):
        return len(self.frames)

    def __eq__(self, other):
        if not isinstance(other, ClipDataset):
            return NotImplemented
        return (self.clip_id == other.clip_id and self.scene == other.scene
                and self.frames == other.frames and self.cameras == other.cameras
                and self.lidar_origin == other.lidar_origin and self.lidar == other.lidar)


@dataclass(frozen=True, eq=False)
class DynamicTrack:
    track_id: int
    class_id: int
    boxes: dict  # frame_id -> Box3D
    points: PointCloud  # canonical box frame


def split_frame(fa: FrameAnnotation):
    """Partition a frame's points into static background and per-track dynamic points.

    Ordinary boxes take every point they contain; special-posture boxes only
    take contained points whose label equals the box class. Overlaps go to the
    smallest track id.
    """
    cloud = fa.cloud
    owner = np.full(len(cloud), -1, np.int64)
    for box in sorted(fa.boxes, key=lambda b: b.track_id):
        mask = points_in_box(box, cloud.points) & (owner < 0)
        if box.special_posture:
            if cloud.label is None:
                raise UnlabeledPointsError("special-posture split needs point labels")
            mask &= cloud.label == box.class_id
        owner[mask] = box.track_id
    static = cloud.select(owner < 0)
    dynamic = {b.track_id: cloud.select(owner == b.track_id)
               for b in sorted(fa.boxes, key=lambda b: b.track_id)}
    return static, dynamic


def _require_poses(frames):
    for fa in frames:
        if fa.ego_pose is None:
            raise MissingPoseError(f"frame {fa.frame_id} has no ego pose")


def accumulate_static(frames, ref_frame, splits=None) -> PointCloud:
    """Concatenate every frame's static points expressed in ``ref_frame``'s ego frame."""
    frames = list(frames)
    _require_poses(frames)
    by_id = {fa.frame_id: fa for fa in frames}
    if ref_frame not in by_id:
        raise KeyError(f"reference frame {ref_frame} not in clip")
    ref_from_world = by_id[ref_frame].ego_pose.inverse()
    parts = []
    for i, fa in enumerate(frames):
        static = splits[i][0] if splits is not None else split_frame(fa)[0]
        parts.append(static.with_points((ref_from_world @ fa.ego_pose).apply(static.points)))
    return PointCloud.concat(parts, frame_id=ref_frame)


def build_tracks(frames, splits=None):
    """Accumulate each track's points in its canonical (box-local) frame."""
    frames = list(frames)
    acc = {}
    for i, fa in enumerate(frames):
        dynamic = splits[i][1] if splits is not None else split_frame(fa)[1]
        for box in fa.boxes:
            entry = acc.setdefault(box.track_id, {"class_id": box.class_id, "boxes": {},
                                                  "parts": []})
            entry["boxes"][fa.frame_id] = box
            pts = dynamic.get(box.track_id)
            if pts is not None and len(pts):
                entry["parts"].append(pts.with_points(to_box_frame(box, pts.points)))
    return [DynamicTrack(tid, e["class_id"], e["boxes"], PointCloud.concat(e["parts"]))
            for tid, e in sorted(acc.items())]


def compose_frame_cloud(static_acc: PointCloud, tracks, fa: FrameAnnotation,
                        ref_pose: Se3Pose) -> PointCloud:
    """Merged cloud for ``fa``: accumulated background plus stitched dynamic tracks.

    ``ref_pose`` is the world-from-ego pose of the frame ``static_acc`` is
    expressed in.
    """
    if fa.ego_pose is None:
        raise MissingPoseError(f"frame {fa.frame_id} has no ego pose")
    cur_from_ref = fa.ego_pose.inverse() @ ref_pose
    parts = [static_acc.with_points(cur_from_ref.apply(static_acc.points))]
    for track in tracks:
        box = track.boxes.get(fa.frame_id)
        if box is None or not len(track.points):
            continue
        parts.append(track.points.with_points(from_box_frame(box, track.points.points)))
    return PointCloud.concat(parts, frame_id=fa.frame_id)


def voxelize(cloud: PointCloud, spec: GridSpec, scene=None, min_points=1) -> OccupancyGrid:
    """Majority-vote semantic voxelization (ties go to the smallest class id)."""
    if cloud.label is None:
        raise UnlabeledPointsError("voxelization needs labeled points")
    labels = cloud.label
    if np.any(labels == FREE):
        raise UnlabeledPointsError(f"{int(np.sum(labels == FREE))} points carry label 0")
    if scene is not None:
        k = taxonomy_for(scene).num_classes
        if labels.size and int(labels.max()) > k:
            raise ValueError(f"label {int(labels.max())} invalid for {Scene.parse(scene).name}")
    nx, ny, nz = spec.dims
    idx = voxel_indices(spec, cloud.points)
    inside = idx[:, 0] >= 0
    if not inside.any():
        return OccupancyGrid.free(spec, scene)
    lin = (idx[inside, 0] * ny + idx[inside, 1]) * nz + idx[inside, 2]
    keys = lin * 256 + labels[inside].astype(np.int64)
    uk, counts = np.unique(keys, return_counts=True)
    vox_of, cls_of = np.divmod(uk, 256)
    # per voxel: highest count first, then smallest class id
    order = np.lexsort((cls_of, -counts, vox_of))
    vox_sorted = vox_of[order]
    first = np.r_[True, vox_sorted[1:] != vox_sorted[:-1]]
    winners = order[first]
    totals = np.bincount(np.searchsorted(np.unique(vox_of), vox_of), weights=counts)
    out = np.zeros(nx * ny * nz, np.uint8)
    dense_ok = totals >= min_points
    out[vox_of[winners][dense_ok]] = cls_of[winners][dense_ok]
    return OccupancyGrid(spec, out.reshape(spec.dims), scene)


def visibility_mask(grid: OccupancyGrid, sensor_origin, rays: RaySet) -> OccupancyGrid:
    """Mark non-occupied voxels never crossed by a ray (before its first hit) UNOBSERVED."""
    occupied = grid.occupied()
    if len(rays) == 0:
        seen = np.zeros(grid.spec.dims, bool)
    else:
        _, _, _, seen = cast_rays(grid, sensor_origin, rays.directions, mark_traversed=True)
    vox = grid.voxels.copy()
    vox[~occupied & ~seen] = UNOBSERVED
    vox[~occupied & seen] = FREE
    return grid.replace(vox)


def frame_rays(clip: ClipDataset, fa: FrameAnnotation) -> RaySet:
    return RaySet.towards(clip.lidar_origin, fa.cloud.points)


@dataclass
class _ClipContext:
    static_acc: PointCloud
    ref_pose: Se3Pose
    tracks: list
    spec: GridSpec
    scene: Scene
    lidar_origin: tuple
    visibility: bool


def prepare_clip(clip: ClipDataset, spec: GridSpec, visibility=True, ref_frame=None):
    """The sequential pass: split every frame, accumulate background, build tracks."""
    frames = list(clip.frames)
    _require_poses(frames)
    splits = [split_frame(fa) for fa in frames]
    ref = frames[0].frame_id if ref_frame is None else ref_frame
    static_acc = accumulate_static(frames, ref, splits)
    tracks = build_tracks(frames, splits)
    return _ClipContext(static_acc, clip.frame(ref).ego_pose, tracks, spec, clip.scene,
                        clip.lidar_origin, visibility)


def frame_gt(ctx: _ClipContext, fa: FrameAnnotation) -> OccupancyGrid:
    try:
        merged = compose_frame_cloud(ctx.static_acc, ctx.tracks, fa, ctx.ref_pose)
        grid = voxelize(merged, ctx.spec, ctx.scene)
        if ctx.visibility:
            grid = visibility_mask(grid, ctx.lidar_origin,
                                   RaySet.towards(ctx.lidar_origin, fa.cloud.points))
        return grid
    except FrameError:
        raise
    except Exception as exc:
        raise FrameError(fa.frame_id, exc) from exc


_WORKER_CTX = None


def _init_worker(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _worker_frame(fa):
    return frame_gt(_WORKER_CTX, fa)


def generate_clip_gt(clip: ClipDataset, spec: GridSpec = None, visibility=True, jobs=1):
    """One occupancy grid per frame, in frame order."""
    spec = GridSpec() if spec is None else spec
    ctx = prepare_clip(clip, spec, visibility)
    if jobs <= 1:
        return [frame_gt(ctx, fa) for fa in clip.frames]
    with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(ctx,)) as pool:
        return list(pool.map(_worker_frame, clip.frames))

