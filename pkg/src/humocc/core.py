"""Shared domain types: poses, clouds, boxes, taxonomies and dense grids."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

FREE = 0
UNOBSERVED = 255

_ORTHO_TOL = 1e-9


def _frozen(arr, dtype=np.float64, shape=None):
    out = np.array(arr, dtype=dtype, copy=True)
    if shape is not None and out.shape != shape:
        raise ValueError(f"expected shape {shape}, got {out.shape}")
    out.setflags(write=False)
    return out


class Scene(enum.IntEnum):
    HOME = 1
    INDUSTRIAL = 2
    OUTDOOR = 3

    @classmethod
    def parse(cls, value):
        if isinstance(value, Scene):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown scene kind {value!r}") from None


_TAXONOMY_NAMES = {
    Scene.HOME: (
        "pedestrian", "robot", "chair", "table", "floor", "wall", "window",
        "door", "plant", "appliance", "furniture", "objects", "other",
    ),
    Scene.INDUSTRIAL: (
        "pedestrian", "floor", "wall", "conveyor", "static objects",
        "dynamic objects", "robot", "others",
    ),
    Scene.OUTDOOR: (
        "pedestrian", "bicycle", "vehicle", "road", "curb", "building", "pole",
        "tree", "shrub", "grass", "obstacle", "others",
    ),
}


@dataclass(frozen=True)
class SemanticTaxonomy:
    """Ordered point classes for one scene kind. Id 0 is reserved for FREE."""

    scene: Scene
    classes: tuple

    @property
    def num_classes(self):
        return len(self.classes)

    def name(self, class_id):
        for cid, name in self.classes:
            if cid == class_id:
                return name
        if class_id == FREE:
            return "free"
        raise KeyError(class_id)

    def id(self, name):
        for cid, cname in self.classes:
            if cname == name:
                return cid
        raise KeyError(name)

    def names(self):
        return [name for _, name in self.classes]

    def is_valid(self, class_id):
        return 1 <= int(class_id) <= self.num_classes


def taxonomy_for(scene) -> SemanticTaxonomy:
    scene = Scene.parse(scene)
    names = _TAXONOMY_NAMES[scene]
    return SemanticTaxonomy(scene, tuple((i + 1, n) for i, n in enumerate(names)))


@dataclass(frozen=True, eq=False)
class Se3Pose:
    """Rigid transform ``p -> R p + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = _frozen(self.rotation, shape=(3, 3))
        t = _frozen(self.translation, shape=(3,))
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose must be finite")
        if np.linalg.norm(R.T @ R - np.eye(3)) >= _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) >= _ORTHO_TOL:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected 4x4 matrix, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_yaw(cls, yaw, translation=(0.0, 0.0, 0.0)):
        c, s = math.cos(yaw), math.sin(yaw)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), translation)

    @classmethod
    def from_euler_zyx(cls, yaw, pitch, roll, translation=(0.0, 0.0, 0.0)):
        cz, sz = math.cos(yaw), math.sin(yaw)
        cy, sy = math.cos(pitch), math.sin(pitch)
        cx, sx = math.cos(roll), math.sin(roll)
        Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]], dtype=float)
        Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]], dtype=float)
        Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]], dtype=float)
        return cls(Rz @ Ry @ Rx, translation)

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def yaw(self):
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def apply(self, pts):
        return np.asarray(pts, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self):
        Rt = self.rotation.T
        return Se3Pose(Rt, -Rt @ self.translation)

    def __matmul__(self, other):
        return Se3Pose(self.rotation @ other.rotation,
                       self.rotation @ other.translation + self.translation)

    def __eq__(self, other):
        if not isinstance(other, Se3Pose):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    def allclose(self, other, atol=1e-9):
        return (np.allclose(self.rotation, other.rotation, atol=atol, rtol=0)
                and np.allclose(self.translation, other.translation, atol=atol, rtol=0))


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    intensity: np.ndarray | None = None
    label: np.ndarray | None = None
    frame_id: int = 0

    def __post_init__(self):
        pts = _frozen(np.reshape(self.points, (-1, 3)))
        n = len(pts)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        inten = np.zeros(n) if self.intensity is None else self.intensity
        inten = _frozen(inten, shape=(n,))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "intensity", inten)
        if self.label is not None:
            object.__setattr__(self, "label", _frozen(self.label, np.uint8, (n,)))
        object.__setattr__(self, "frame_id", int(self.frame_id))

    @classmethod
    def empty(cls, labeled=True, frame_id=0):
        return cls(np.zeros((0, 3)), np.zeros(0),
                   np.zeros(0, np.uint8) if labeled else None, frame_id)

    def __len__(self):
        return len(self.points)

    def select(self, mask):
        return PointCloud(self.points[mask], self.intensity[mask],
                          None if self.label is None else self.label[mask], self.frame_id)

    def with_points(self, points):
        return PointCloud(points, self.intensity, self.label, self.frame_id)

    @staticmethod
    def concat(clouds, frame_id=0):
        clouds = list(clouds)
        if not clouds:
            return PointCloud.empty(frame_id=frame_id)
        labeled = all(c.label is not None for c in clouds)
        return PointCloud(
            np.concatenate([c.points for c in clouds]),
            np.concatenate([c.intensity for c in clouds]),
            np.concatenate([c.label for c in clouds]) if labeled else None,
            frame_id,
        )

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        if (self.label is None) != (other.label is None):
            return False
        return (self.frame_id == other.frame_id
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.intensity, other.intensity)
                and (self.label is None or np.array_equal(self.label, other.label)))


def normalize_angle(a):
    """Wrap an angle into (-pi, pi]."""
    a = math.remainder(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


@dataclass(frozen=True, eq=False)
class Box3D:
    center: np.ndarray
    size: np.ndarray
    yaw: float = 0.0
    track_id: int = 0
    class_id: int = 1
    special_posture: bool = False

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(self.center, shape=(3,)))
        size = _frozen(self.size, shape=(3,))
        if np.any(size <= 0):
            raise ValueError("box size components must be > 0")
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))
        object.__setattr__(self, "track_id", int(self.track_id))
        object.__setattr__(self, "class_id", int(self.class_id))
        object.__setattr__(self, "special_posture", bool(self.special_posture))

    def pose(self):
        """Box-to-parent transform."""
        return Se3Pose.from_yaw(self.yaw, self.center)

    def __eq__(self, other):
        if not isinstance(other, Box3D):
            return NotImplemented
        return (np.array_equal(self.center, other.center)
                and np.array_equal(self.size, other.size)
                and self.yaw == other.yaw
                and self.track_id == other.track_id
                and self.class_id == other.class_id
                and self.special_posture == other.special_posture)


@dataclass(frozen=True)
class GridSpec:
    x_range: tuple = (-10.0, 10.0)
    y_range: tuple = (-10.0, 10.0)
    z_range: tuple = (-1.5, 0.9)
    voxel: tuple = (0.1, 0.1, 0.1)

    def __post_init__(self):
        for name in ("x_range", "y_range", "z_range", "voxel"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        dims = []
        for (lo, hi), v in zip(self.ranges, self.voxel):
            if v <= 0 or hi <= lo:
                raise ValueError("grid ranges must be increasing and voxels positive")
            n = (hi - lo) / v
            if abs(n - round(n)) > 1e-6:
                raise ValueError(f"range ({lo}, {hi}) is not a whole number of {v} m voxels")
            dims.append(int(round(n)))
        object.__setattr__(self, "_dims", tuple(dims))

    @property
    def ranges(self):
        return (self.x_range, self.y_range, self.z_range)

    @property
    def dims(self):
        return self._dims

    @property
    def origin(self):
        return np.array([self.x_range[0], self.y_range[0], self.z_range[0]])

    @property
    def upper(self):
        return np.array([self.x_range[1], self.y_range[1], self.z_range[1]])

    @property
    def voxel_size(self):
        return np.array(self.voxel)

    @classmethod
    def from_origin(cls, origin, voxel, dims):
        origin = [float(o) for o in origin]
        # snap the upper bound so e.g. -1.5 + 24 * 0.1 comes back as 0.9
        ranges = [(o, round(o + v * n, 9)) for o, v, n in zip(origin, voxel, dims)]
        spec = cls(ranges[0], ranges[1], ranges[2], tuple(voxel))
        if spec.dims != tuple(int(d) for d in dims):
            raise ValueError("origin/voxel/dims are inconsistent")
        return spec

    def voxel_centers(self):
        """(X, Y, Z, 3) array of voxel centers."""
        axes = [o + (np.arange(n) + 0.5) * v
                for o, v, n in zip(self.origin, self.voxel, self.dims)]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1)

    def center(self, index):
        return self.origin + (np.asarray(index, dtype=np.float64) + 0.5) * self.voxel_size


def voxel_index(spec: GridSpec, p):
    """Voxel containing ``p``, or ``None`` when it lies outside the grid.

    Intervals are half-open, so points on the upper boundary are outside.
    """
    idx = voxel_indices(spec, np.asarray(p, dtype=np.float64)[None, :])[0]
    if idx[0] < 0:
        return None
    return tuple(int(i) for i in idx)


def voxel_indices(spec: GridSpec, pts):
    """Vectorized ``voxel_index``; out-of-range rows are (-1, -1, -1)."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    idx = np.floor((pts - spec.origin) / spec.voxel_size).astype(np.int64)
    inside = np.all((idx >= 0) & (idx < np.array(spec.dims)), axis=1)
    idx[~inside] = -1
    return idx


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    spec: GridSpec
    voxels: np.ndarray
    scene: Scene | None = None

    def __post_init__(self):
        vox = np.asarray(self.voxels)
        if vox.shape != self.spec.dims:
            raise ValueError(f"voxel array {vox.shape} does not match spec dims {self.spec.dims}")
        vox = _frozen(vox, np.uint8)
        if self.scene is not None:
            scene = Scene.parse(self.scene)
            k = taxonomy_for(scene).num_classes
            occ = vox[(vox != FREE) & (vox != UNOBSERVED)]
            if occ.size and occ.max() > k:
                raise ValueError(f"class id {int(occ.max())} invalid for {scene.name}")
            object.__setattr__(self, "scene", scene)
        object.__setattr__(self, "voxels", vox)

    @classmethod
    def free(cls, spec, scene=None):
        return cls(spec, np.zeros(spec.dims, np.uint8), scene)

    @property
    def taxonomy(self):
        return None if self.scene is None else taxonomy_for(self.scene)

    def occupied(self):
        return (self.voxels != FREE) & (self.voxels != UNOBSERVED)

    def replace(self, voxels):
        return OccupancyGrid(self.spec, voxels, self.scene)

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (self.spec == other.spec and self.scene == other.scene
                and np.array_equal(self.voxels, other.voxels))


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera with 5-term radial-tangential distortion.

    ``dist`` is ``(k1, k2, k3, p1, p2)``; ``extrinsic`` maps ego-frame points
    into the camera frame (x right, y down, z forward).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    dist: tuple = (0.0, 0.0, 0.0, 0.0, 0.0)
    resolution: tuple = (960, 768)
    extrinsic: Se3Pose = field(default_factory=Se3Pose.identity)
    name: str = ""

    def __post_init__(self):
        w, h = (int(v) for v in self.resolution)
        object.__setattr__(self, "resolution", (w, h))
        object.__setattr__(self, "dist", tuple(float(d) for d in self.dist))
        if len(self.dist) != 5:
            raise ValueError("dist must hold (k1, k2, k3, p1, p2)")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < w and 0 <= self.cy < h):
            raise ValueError("principal point outside the image")

    def with_dist(self, dist):
        return CameraModel(self.fx, self.fy, self.cx, self.cy, dist, self.resolution,
                           self.extrinsic, self.name)

    def __eq__(self, other):
        if not isinstance(other, CameraModel):
            return NotImplemented
        return ((self.fx, self.fy, self.cx, self.cy, self.dist, self.resolution, self.name)
                == (other.fx, other.fy, other.cx, other.cy, other.dist, other.resolution,
                    other.name)
                and self.extrinsic == other.extrinsic)


@dataclass(frozen=True, eq=False)
class BevFeatureMap:
    """H x W x C features over the ego XY plane.

    Row index follows x, column index follows y; cell (i, j) is centered at
    ``(x_min + (i + .5) * dx, y_min + (j + .5) * dy)``.
    """

    extent: tuple
    data: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        (x0, x1), (y0, y1) = self.extent
        object.__setattr__(self, "extent", ((float(x0), float(x1)), (float(y0), float(y1))))
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[..., None]
        if data.ndim != 3:
            raise ValueError("BEV data must be H x W x C")
        if not np.all(np.isfinite(data)):
            raise ValueError("BEV features must be finite")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def shape(self):
        return self.data.shape

    @property
    def cell(self):
        (x0, x1), (y0, y1) = self.extent
        h, w, _ = self.data.shape
        return ((x1 - x0) / h, (y1 - y0) / w)

    def cell_centers(self):
        (x0, _), (y0, _) = self.extent
        dx, dy = self.cell
        h, w, _ = self.data.shape
        xs = x0 + (np.arange(h) + 0.5) * dx
        ys = y0 + (np.arange(w) + 0.5) * dy
        return np.meshgrid(xs, ys, indexing="ij")

    def replace(self, data, timestamp=None):
        return BevFeatureMap(self.extent, data, self.timestamp if timestamp is None else timestamp)


@dataclass
class ConfusionMatrix:
    """Voxel confusion counts; rows are ground truth, columns prediction."""

    counts: np.ndarray

    @classmethod
    def zeros(cls, num_classes):
        return cls(np.zeros((num_classes + 1, num_classes + 1), np.int64))

    @property
    def num_classes(self):
        return self.counts.shape[0] - 1

    @property
    def total(self):
        return int(self.counts.sum())

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)
