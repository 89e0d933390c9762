"""On-disk formats: binary clouds, labels, poses and grids; JSON rig, boxes and manifest.

All binary formats are little-endian and start with a 4-byte magic and a u32
version. Floats in JSON documents are written with Python's shortest
round-trip repr, so every value reads back bit-identically.

Clip directory layout::

    manifest.json
    rig.json
    poses.bin                 HOPS: F world-from-ego 4x4 f64 matrices
    frames/000000.hopc        HOPC point cloud
    frames/000000.holb        HOLB per-point labels
    frames/000000.boxes.json  annotation boxes
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .core import Box3D, CameraModel, GridSpec, OccupancyGrid, PointCloud, Scene, Se3Pose
from .errors import MalformedFileError, SpecMismatchError, VersionMismatchError
from .gt_pipeline import ClipDataset, FrameAnnotation
from .metrics import parse_report

CLOUD_MAGIC = b"HOPC"
LABEL_MAGIC = b"HOLB"
POSE_MAGIC = b"HOPS"
GRID_MAGIC = b"HOGD"
FORMAT_VERSION = 1
CLIP_FORMAT = "humocc-clip"
BOXES_FORMAT = "humocc-boxes"
RIG_FORMAT = "humocc-rig"

_PREFIX = struct.Struct("<4sIQ")  # magic, version, count
# magic, version, dims (3 x u16), taxonomy id, reserved, origin (3 x f64), voxel (3 x f64)
_GRID_HEADER = struct.Struct("<4sI3HBB3d3d")
GRID_HEADER_SIZE = _GRID_HEADER.size  # 64
_CLOUD_DTYPE = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("i", "<f4")])


def _atomic_write(path, data: bytes):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def _check_prefix(path, data, magic, record_size):
    """Validate magic/version/count and the payload length; returns the count."""
    if len(data) < _PREFIX.size:
        if data[:len(magic)] != magic[:len(data)]:
            raise MalformedFileError(path, f"bad magic, expected {magic.decode()}", 0)
        raise MalformedFileError(path, f"truncated header ({len(data)} of {_PREFIX.size} bytes)",
                                 len(data))
    got, version, n = _PREFIX.unpack_from(data)
    if got != magic:
        raise MalformedFileError(path, f"bad magic {got!r}, expected {magic.decode()}", 0)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(path, f"version {version} not supported "
                                         f"(expected {FORMAT_VERSION})", 4)
    expected = _PREFIX.size + n * record_size
    if len(data) < expected:
        # offset of the first incomplete record
        whole = (len(data) - _PREFIX.size) // record_size
        raise MalformedFileError(
            path, f"truncated payload: header declares {n} records, file holds {whole}",
            _PREFIX.size + whole * record_size)
    if len(data) > expected:
        raise MalformedFileError(path, f"{len(data) - expected} trailing bytes", expected)
    return n


# -- point clouds and labels -------------------------------------------------

def encode_cloud(cloud: PointCloud) -> bytes:
    rec = np.empty(len(cloud), _CLOUD_DTYPE)
    rec["x"], rec["y"], rec["z"] = cloud.points.T
    rec["i"] = cloud.intensity
    return _PREFIX.pack(CLOUD_MAGIC, FORMAT_VERSION, len(cloud)) + rec.tobytes()


def decode_cloud(data: bytes, path="<bytes>", frame_id=0) -> PointCloud:
    n = _check_prefix(path, data, CLOUD_MAGIC, _CLOUD_DTYPE.itemsize)
    rec = np.frombuffer(data, _CLOUD_DTYPE, count=n, offset=_PREFIX.size)
    pts = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    bad = ~np.isfinite(pts).all(axis=1)
    if bad.any():
        k = int(np.argmax(bad))
        raise MalformedFileError(path, f"non-finite coordinate in point {k}",
                                 _PREFIX.size + k * _CLOUD_DTYPE.itemsize)
    return PointCloud(pts, rec["i"].astype(np.float64), None, frame_id)


def write_cloud(path, cloud: PointCloud):
    _atomic_write(path, encode_cloud(cloud))


def read_cloud(path, frame_id=0) -> PointCloud:
    return decode_cloud(_read_bytes(path), path, frame_id)


def encode_labels(labels) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return _PREFIX.pack(LABEL_MAGIC, FORMAT_VERSION, len(labels)) + labels.tobytes()


def decode_labels(data: bytes, path="<bytes>"):
    n = _check_prefix(path, data, LABEL_MAGIC, 1)
    return np.frombuffer(data, np.uint8, count=n, offset=_PREFIX.size).copy()


def write_labels(path, labels):
    _atomic_write(path, encode_labels(labels))


def read_labels(path):
    return decode_labels(_read_bytes(path), path)


# -- poses -------------------------------------------------------------------

def encode_poses(poses) -> bytes:
    """Missing poses (``None``) are stored as all-NaN matrices."""
    mats = np.full((len(poses), 4, 4), np.nan)
    for k, p in enumerate(poses):
        if p is not None:
            mats[k] = p.matrix()
    return _PREFIX.pack(POSE_MAGIC, FORMAT_VERSION, len(poses)) + mats.astype("<f8").tobytes()


def decode_poses(data: bytes, path="<bytes>"):
    n = _check_prefix(path, data, POSE_MAGIC, 128)
    mats = np.frombuffer(data, "<f8", count=16 * n, offset=_PREFIX.size).reshape(n, 4, 4)
    out = []
    for k, m in enumerate(mats):
        if np.isnan(m).all():
            out.append(None)
            continue
        try:
            out.append(Se3Pose.from_matrix(m))
        except ValueError as exc:
            raise MalformedFileError(path, f"pose {k}: {exc}", _PREFIX.size + 128 * k) from exc
    return out


def write_poses(path, poses):
    _atomic_write(path, encode_poses(poses))


def read_poses(path):
    return decode_poses(_read_bytes(path), path)


# -- grids -------------------------------------------------------------------

def encode_grid(grid: OccupancyGrid) -> bytes:
    dims = grid.spec.dims
    if max(dims) > 0xFFFF:
        raise ValueError(f"grid dims {dims} exceed the u16 header field")
    tax = 0 if grid.scene is None else int(grid.scene)
    header = _GRID_HEADER.pack(GRID_MAGIC, FORMAT_VERSION, *dims, tax, 0,
                               *grid.spec.origin, *grid.spec.voxel)
    return header + np.ascontiguousarray(grid.voxels, np.uint8).tobytes()


def decode_grid(data: bytes, path="<bytes>", expected_spec: GridSpec = None) -> OccupancyGrid:
    if len(data) < GRID_HEADER_SIZE:
        if data[:4] != GRID_MAGIC[:len(data[:4])]:
            raise MalformedFileError(path, "bad magic, expected HOGD", 0)
        raise MalformedFileError(path, f"truncated header ({len(data)} of {GRID_HEADER_SIZE} "
                                       "bytes)", len(data))
    magic, version, nx, ny, nz, tax, _, *rest = _GRID_HEADER.unpack_from(data)
    if magic != GRID_MAGIC:
        raise MalformedFileError(path, f"bad magic {magic!r}, expected HOGD", 0)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(path, f"version {version} not supported "
                                         f"(expected {FORMAT_VERSION})", 4)
    dims = (nx, ny, nz)
    origin, voxel = rest[:3], rest[3:]
    try:
        spec = GridSpec.from_origin(origin, voxel, dims)
    except ValueError as exc:
        raise MalformedFileError(path, f"inconsistent grid header: {exc}", 8) from exc
    if expected_spec is not None and expected_spec.dims != dims:
        raise SpecMismatchError(f"{path}: grid dims {dims} != expected {expected_spec.dims}")
    expected = GRID_HEADER_SIZE + nx * ny * nz
    if len(data) < expected:
        raise MalformedFileError(path, f"truncated payload: {len(data) - GRID_HEADER_SIZE} of "
                                       f"{nx * ny * nz} voxels", len(data))
    if len(data) > expected:
        raise MalformedFileError(path, f"{len(data) - expected} trailing bytes", expected)
    if tax > len(Scene):
        raise MalformedFileError(path, f"unknown taxonomy id {tax}", 14)
    vox = np.frombuffer(data, np.uint8, offset=GRID_HEADER_SIZE).reshape(dims)
    try:
        return OccupancyGrid(spec, vox, Scene(tax) if tax else None)
    except ValueError as exc:
        raise MalformedFileError(path, str(exc), GRID_HEADER_SIZE) from exc


def write_grid(path, grid: OccupancyGrid):
    _atomic_write(path, encode_grid(grid))


def read_grid(path, expected_spec: GridSpec = None) -> OccupancyGrid:
    return decode_grid(_read_bytes(path), path, expected_spec)


# -- JSON documents ----------------------------------------------------------

def _dump_json(path, doc):
    text = json.dumps(doc, indent=1, sort_keys=True, ensure_ascii=False, allow_nan=False)
    _atomic_write(path, (text + "\n").encode("utf-8"))


def _load_json(path, fmt):
    try:
        doc = json.loads(_read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        offset = getattr(exc, "pos", getattr(exc, "start", None))
        raise MalformedFileError(path, f"invalid JSON document: {exc}", offset) from exc
    if not isinstance(doc, dict) or doc.get("format") != fmt:
        raise MalformedFileError(path, f"not a {fmt} document")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionMismatchError(path, f"version {doc.get('version')} not supported "
                                         f"(expected {FORMAT_VERSION})")
    return doc


def _field(path, obj, key, what):
    try:
        return obj[key]
    except (KeyError, TypeError):
        raise MalformedFileError(path, f"{what}: missing field '{key}'") from None


def box_to_dict(b: Box3D):
    return {"track_id": b.track_id, "class_id": b.class_id,
            "center": [float(v) for v in b.center], "size": [float(v) for v in b.size],
            "yaw": float(b.yaw), "special_posture": bool(b.special_posture)}


def box_from_dict(d) -> Box3D:
    return Box3D(d["center"], d["size"], d["yaw"], d["track_id"], d["class_id"],
                 d["special_posture"])


def write_boxes(path, boxes):
    _dump_json(path, {"format": BOXES_FORMAT, "version": FORMAT_VERSION,
                      "boxes": [box_to_dict(b) for b in boxes]})


def read_boxes(path):
    doc = _load_json(path, BOXES_FORMAT)
    out = []
    for k, d in enumerate(_field(path, doc, "boxes", "boxes document")):
        try:
            out.append(box_from_dict(d))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedFileError(path, f"box {k}: {exc!r}") from exc
    return tuple(out)


def camera_to_dict(cam: CameraModel):
    return {"name": cam.name, "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
            "dist": [float(v) for v in cam.dist], "resolution": [int(v) for v in cam.resolution],
            "extrinsic": cam.extrinsic.matrix().tolist()}


def camera_from_dict(d) -> CameraModel:
    return CameraModel(d["fx"], d["fy"], d["cx"], d["cy"], tuple(d["dist"]),
                       tuple(d["resolution"]), Se3Pose.from_matrix(d["extrinsic"]),
                       d.get("name", ""))


def write_rig(path, cameras, lidar_origin, lidar=None):
    _dump_json(path, {"format": RIG_FORMAT, "version": FORMAT_VERSION,
                      "cameras": [camera_to_dict(c) for c in cameras],
                      "lidar": {"origin": [float(v) for v in lidar_origin],
                                **(lidar or {})}})


def read_rig(path):
    """Returns ``(cameras, lidar_origin, lidar_extra)``."""
    doc = _load_json(path, RIG_FORMAT)
    try:
        cams = tuple(camera_from_dict(c) for c in doc["cameras"])
        lidar = dict(doc["lidar"])
        origin = tuple(lidar.pop("origin"))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFileError(path, f"invalid rig document: {exc!r}") from exc
    return cams, origin, lidar


# -- clips -------------------------------------------------------------------

def frame_stem(frame_id):
    return f"frames/{frame_id:06d}"


def write_clip(path, clip: ClipDataset):
    """Write ``clip`` under directory ``path``; frame ids must be 0..F-1 in order."""
    root = Path(path)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    ids = [fa.frame_id for fa in clip.frames]
    if ids != list(range(len(ids))):
        raise ValueError("frame ids must be dense from 0 and in order")
    entries = []
    for fa in clip.frames:
        stem = frame_stem(fa.frame_id)
        entry = {"frame_id": fa.frame_id, "timestamp": float(fa.timestamp),
                 "cloud": stem + ".hopc", "boxes": stem + ".boxes.json"}
        write_cloud(root / entry["cloud"], fa.cloud)
        if fa.cloud.label is not None:
            entry["labels"] = stem + ".holb"
            write_labels(root / entry["labels"], fa.cloud.label)
        write_boxes(root / entry["boxes"], fa.boxes)
        entries.append(entry)
    write_poses(root / "poses.bin", [fa.ego_pose for fa in clip.frames])
    write_rig(root / "rig.json", clip.cameras, clip.lidar_origin, clip.lidar)
    _dump_json(root / "manifest.json", {
        "format": CLIP_FORMAT, "version": FORMAT_VERSION, "clip_id": clip.clip_id,
        "scene": clip.scene.name.lower(), "frame_count": len(entries),
        "rig": "rig.json", "poses": "poses.bin", "frames": entries})


def read_manifest(path):
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise FileNotFoundError(f"{mpath}: no clip manifest")
    doc = _load_json(mpath, CLIP_FORMAT)
    for key in ("clip_id", "scene", "frame_count", "rig", "poses", "frames"):
        _field(mpath, doc, key, "manifest")
    try:
        Scene.parse(doc["scene"])
    except ValueError as exc:
        raise MalformedFileError(mpath, f"scene: {exc}") from exc
    frames = doc["frames"]
    if len(frames) != doc["frame_count"]:
        raise MalformedFileError(mpath, f"frame_count {doc['frame_count']} but "
                                        f"{len(frames)} frame entries")
    for k, e in enumerate(frames):
        fid = _field(mpath, e, "frame_id", f"frame entry {k}")
        if fid != k:
            raise MalformedFileError(mpath, f"frame ids not dense from 0: entry {k} is "
                                            f"frame {fid}")
        for key in ("cloud", "boxes", "labels"):
            if key == "labels" and key not in e:
                continue
            ref = root / _field(mpath, e, key, f"frame {fid}")
            if not ref.is_file():
                raise MalformedFileError(mpath, f"frame {fid}: missing {key} file {e[key]}")
    for key in ("rig", "poses"):
        if not (root / doc[key]).is_file():
            raise MalformedFileError(mpath, f"missing {key} file {doc[key]}")
    return doc


def read_clip(path) -> ClipDataset:
    root = Path(path)
    doc = read_manifest(root)
    cams, origin, lidar = read_rig(root / doc["rig"])
    poses = read_poses(root / doc["poses"])
    if len(poses) != doc["frame_count"]:
        raise MalformedFileError(root / doc["poses"], f"{len(poses)} poses for "
                                                      f"{doc['frame_count']} frames")
    frames = []
    for e, pose in zip(doc["frames"], poses):
        fid = e["frame_id"]
        cloud = read_cloud(root / e["cloud"], fid)
        if "labels" in e:
            lpath = root / e["labels"]
            labels = read_labels(lpath)
            if len(labels) != len(cloud):
                raise MalformedFileError(lpath, f"frame {fid}: {len(labels)} labels for "
                                                f"{len(cloud)} points")
            cloud = PointCloud(cloud.points, cloud.intensity, labels, fid)
        boxes = read_boxes(root / e["boxes"])
        frames.append(FrameAnnotation(fid, pose, cloud, boxes,
                                      float(_field(root, e, "timestamp", f"frame {fid}"))))
    return ClipDataset(doc["clip_id"], doc["scene"], frames, cams, origin, lidar)


# -- grid directories and reports -------------------------------------------

def grid_name(frame_id):
    return f"{frame_id:06d}.hogd"


def list_grids(path):
    """Sorted ``{frame_id: file}`` for every ``NNNNNN.hogd`` in a directory."""
    out = {}
    for p in sorted(Path(path).glob("*.hogd")):
        if p.stem.isdigit():
            out[int(p.stem)] = p
    return out


def write_report(path, text: str):
    _atomic_write(path, text.encode("utf-8"))


def read_report(path):
    return parse_report(_read_bytes(path).decode("utf-8"))
