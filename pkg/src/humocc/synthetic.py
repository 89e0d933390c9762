"""Deterministic synthetic rooms, sensor rig and analytic occupancy oracle.

World frame: z up, floor top surface at z = 0. The ego frame is gravity
aligned with its origin ``ego_height`` above the floor, so with the default
1.45 m the floor falls in the middle of the bottom voxel layer of the
default grid; the LiDAR sits 0.15 m above the ego origin (1.6 m mount).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (Box3D, CameraModel, GridSpec, OccupancyGrid, PointCloud, Scene, Se3Pose,
                   taxonomy_for)
from .dataset_io import camera_from_dict, camera_to_dict
from .gt_pipeline import ClipDataset, FrameAnnotation

CAMERA_HFOV_DEG = 118.0
CAMERA_VFOV_DEG = 92.0
LIDAR_RINGS = 40
LIDAR_VFOV_DEG = 59.0
MOUNT_HEIGHT = 1.6
DEFAULT_FRAMES = 200
DEFAULT_DIST = (-0.05, 0.005, 0.0, 0.0, 0.0)

BOX_MARGIN = 0.015
ACTOR_HOVER = 0.03
SPECIAL_PAD = 0.15


@dataclass(frozen=True)
class SensorRig:
    cameras: tuple
    rings: int = LIDAR_RINGS
    vfov_deg: float = LIDAR_VFOV_DEG
    azimuth_step_deg: float = 0.4
    lidar_origin: tuple = (0.0, 0.0, 0.15)
    ego_height: float = MOUNT_HEIGHT - 0.15
    max_range: float = 40.0

    def ray_directions(self):
        """Unit ray directions in the (gravity-aligned) ego frame."""
        half = self.vfov_deg / 2.0
        elev = np.deg2rad(np.linspace(-half, half, self.rings))
        n_az = int(round(360.0 / self.azimuth_step_deg))
        az = np.deg2rad(np.arange(n_az) * self.azimuth_step_deg)
        E, A = np.meshgrid(elev, az, indexing="ij")
        d = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1)
        return d.reshape(-1, 3)

    def lidar_config(self):
        return {"rings": self.rings, "vfov_deg": self.vfov_deg,
                "azimuth_step_deg": self.azimuth_step_deg, "ego_height": self.ego_height,
                "max_range": self.max_range}


def camera_yaws():
    """One camera front, one back, two per side."""
    return (0.0, 60.0, 120.0, 180.0, -120.0, -60.0)


def make_camera(yaw_deg, dist=DEFAULT_DIST, resolution=(960, 768), radius=0.06, height=0.12,
                name=""):
    w, h = resolution
    fx = (w / 2.0) / math.tan(math.radians(CAMERA_HFOV_DEG / 2.0))
    fy = (h / 2.0) / math.tan(math.radians(CAMERA_VFOV_DEG / 2.0))
    psi = math.radians(yaw_deg)
    c, s = math.cos(psi), math.sin(psi)
    # ego-from-camera: columns are camera x (right), y (down), z (forward)
    R = np.array([[s, 0.0, c], [-c, 0.0, s], [0.0, -1.0, 0.0]])
    ego_from_cam = Se3Pose(R, (radius * c, radius * s, height))
    return CameraModel(fx, fy, w / 2.0, h / 2.0, dist, resolution, ego_from_cam.inverse(),
                       name or f"cam_{int(yaw_deg):+04d}")


def default_rig(dist=DEFAULT_DIST, azimuth_step_deg=0.4) -> SensorRig:
    cams = tuple(make_camera(y, dist) for y in camera_yaws())
    return SensorRig(cams, azimuth_step_deg=azimuth_step_deg)


@dataclass(frozen=True)
class Primitive:
    """Solid yawed box in world coordinates."""

    center: tuple
    size: tuple
    class_id: int
    yaw: float = 0.0
    name: str = ""


@dataclass(frozen=True)
class Actor:
    """Box-shaped dynamic object walking a closed waypoint loop at constant speed."""

    track_id: int
    class_id: int
    size: tuple
    waypoints: tuple
    speed: float = 0.5
    phase: float = 0.0  # metres along the loop at t = 0
    special_posture: bool = False

    def _loop(self):
        wp = np.asarray(self.waypoints, dtype=np.float64)
        seg = np.roll(wp, -1, axis=0) - wp
        lengths = np.linalg.norm(seg, axis=1)
        return wp, seg, lengths

    def pose_at(self, t):
        """World center and heading at time ``t``."""
        wp, seg, lengths = self._loop()
        total = lengths.sum()
        if total == 0 or self.speed == 0:
            s = 0.0
        else:
            s = (self.phase + self.speed * t) % total
        cum = np.r_[0.0, np.cumsum(lengths)]
        k = int(np.searchsorted(cum, s, side="right") - 1)
        k = min(max(k, 0), len(lengths) - 1)
        frac = 0.0 if lengths[k] == 0 else (s - cum[k]) / lengths[k]
        xy = wp[k] + frac * seg[k]
        yaw = math.atan2(seg[k][1], seg[k][0]) if lengths[k] > 0 else 0.0
        center = (float(xy[0]), float(xy[1]), ACTOR_HOVER + self.size[2] / 2.0)
        return center, yaw

    def primitive_at(self, t):
        center, yaw = self.pose_at(t)
        return Primitive(center, tuple(self.size), self.class_id, yaw, f"actor{self.track_id}")

    def annotation_at(self, t):
        """World-frame annotation box: slightly padded for ordinary posture; for
        special posture, widened and pushed into the floor so it catches
        background points that only per-point labels can separate."""
        center, yaw = self.pose_at(t)
        l, w, h = self.size
        if self.special_posture:
            bottom = -0.05
            top = ACTOR_HOVER + h + BOX_MARGIN
            size = (l + 2 * SPECIAL_PAD, w + 2 * SPECIAL_PAD, top - bottom)
            center = (center[0], center[1], (top + bottom) / 2.0)
        else:
            size = (l + 2 * BOX_MARGIN, w + 2 * BOX_MARGIN, h + 2 * BOX_MARGIN)
        return center, size, yaw


@dataclass(frozen=True)
class EgoLoop:
    """Elliptical walking path; one lap every ``period`` frames."""

    center: tuple = (0.0, 0.0)
    radii: tuple = (1.5, 1.0)
    period: int = DEFAULT_FRAMES

    def pose(self, frame, height):
        th = 2.0 * math.pi * frame / self.period
        rx, ry = self.radii
        x = self.center[0] + rx * math.cos(th)
        y = self.center[1] + ry * math.sin(th)
        yaw = math.atan2(ry * math.cos(th), -rx * math.sin(th))
        return Se3Pose.from_yaw(yaw, (x, y, height))


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    scene: Scene
    room: tuple  # (x_min, x_max, y_min, y_max, height)
    primitives: tuple
    actors: tuple
    rig: SensorRig = field(default_factory=default_rig)
    ego_path: EgoLoop = field(default_factory=EgoLoop)
    frame_dt: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "scene", Scene.parse(self.scene))
        x0, x1, y0, y1, _ = self.room
        for p in self.primitives:
            cx, cy = p.center[0], p.center[1]
            if not (x0 - 0.5 <= cx <= x1 + 0.5 and y0 - 0.5 <= cy <= y1 + 0.5):
                raise ValueError(f"primitive {p.name or p.class_id} lies outside the room")
        k = taxonomy_for(self.scene).num_classes
        for obj in list(self.primitives) + list(self.actors):
            if not 1 <= obj.class_id <= k:
                raise ValueError(f"class id {obj.class_id} invalid for {self.scene.name}")
        for a in self.actors:
            if len(a.waypoints) < 1:
                raise ValueError("actor needs at least one waypoint")

    def primitives_at(self, frame):
        t = frame * self.frame_dt
        return list(self.primitives) + [a.primitive_at(t) for a in self.actors]

    def ego_pose(self, frame):
        return self.ego_path.pose(frame, self.rig.ego_height)


_ROLES = {
    Scene.HOME: {"floor": "floor", "wall": "wall", "ceiling": "other",
                 "props": ("table", "chair", "furniture", "appliance", "plant", "objects")},
    Scene.INDUSTRIAL: {"floor": "floor", "wall": "wall", "ceiling": "others",
                       "props": ("conveyor", "static objects", "static objects", "robot",
                                 "others")},
    Scene.OUTDOOR: {"floor": "road", "wall": "building", "ceiling": None,
                    "props": ("curb", "pole", "tree", "shrub", "obstacle", "vehicle")},
}


def default_scene(scene=Scene.HOME, seed=0, rig=None, actors=True) -> SceneSpec:
    """A 10 m x 8 m room with props along the walls and pedestrians on a loop.

    The ego walks an ellipse in the middle; pedestrians walk a rectangle
    between the ego path and the props, so annotation boxes never swallow
    static structure except for the special-posture one, whose box dips into
    the floor by design.
    """
    scene = Scene.parse(scene)
    tax = taxonomy_for(scene)
    roles = _ROLES[scene]
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1, height = -5.0, 5.0, -4.0, 4.0, 2.6
    t = 0.2
    cid = tax.id
    prims = [
        Primitive((0.0, 0.0, -t / 2), (x1 - x0 + 2 * t, y1 - y0 + 2 * t, t), cid(roles["floor"]),
                  name="floor"),
        Primitive((x0 - t / 2, 0.0, height / 2), (t, y1 - y0 + 2 * t, height), cid(roles["wall"]),
                  name="wall_w"),
        Primitive((x1 + t / 2, 0.0, height / 2), (t, y1 - y0 + 2 * t, height), cid(roles["wall"]),
                  name="wall_e"),
        Primitive((0.0, y0 - t / 2, height / 2), (x1 - x0, t, height), cid(roles["wall"]),
                  name="wall_s"),
        Primitive((0.0, y1 + t / 2, height / 2), (x1 - x0, t, height), cid(roles["wall"]),
                  name="wall_n"),
    ]
    if roles["ceiling"]:
        prims.append(Primitive((0.0, 0.0, height + t / 2), (x1 - x0 + 2 * t, y1 - y0 + 2 * t, t),
                               cid(roles["ceiling"]), name="ceiling"))

    # props sit in a band 0.2-1.0 m from the walls
    slots = [(-3.5, 3.5), (0.0, 3.45), (3.5, 3.5), (-3.5, -3.5), (0.5, -3.45), (4.45, 0.3),
             (-4.45, -0.4)]
    for k, name in enumerate(roles["props"]):
        sx, sy = slots[k % len(slots)]
        jitter = rng.uniform(-0.15, 0.15, size=2)
        along_x = abs(sy) > abs(sx)
        length = rng.uniform(0.5, 1.1)
        width = rng.uniform(0.35, 0.5)
        h = rng.uniform(0.4, 1.4)
        size = (length, width, h) if along_x else (width, length, h)
        yaw = rng.uniform(-0.15, 0.15)
        center = (sx + jitter[0] * along_x, sy + jitter[1] * (not along_x), h / 2.0)
        prims.append(Primitive(center, size, cid(name), float(yaw), name))

    acts = []
    if actors:
        ped = cid("pedestrian")
        loop = ((-3.0, -2.2), (3.0, -2.2), (3.0, 2.2), (-3.0, 2.2))
        perimeter = 2 * (6.0 + 4.4)
        for k in range(3):
            size = (0.45 + 0.05 * rng.random(), 0.35 + 0.05 * rng.random(), 1.6 + 0.15 * rng.random())
            acts.append(Actor(k + 1, ped, tuple(float(v) for v in size), loop,
                              speed=0.6 if k != 2 else 0.4, phase=k * perimeter / 3.0,
                              special_posture=(k == 2)))
    return SceneSpec(int(seed), scene, (x0, x1, y0, y1, height), tuple(prims), tuple(acts),
                     rig or default_rig())


# -- ray casting against primitives ----------------------------------------

def _to_local(prim, pts):
    c, s = math.cos(prim.yaw), math.sin(prim.yaw)
    d = pts - np.asarray(prim.center)
    return np.stack([c * d[..., 0] + s * d[..., 1], -s * d[..., 0] + c * d[..., 1], d[..., 2]],
                    axis=-1)


def _rotate_to_local(prim, v):
    c, s = math.cos(prim.yaw), math.sin(prim.yaw)
    return np.stack([c * v[..., 0] + s * v[..., 1], -s * v[..., 0] + c * v[..., 1], v[..., 2]],
                    axis=-1)


def ray_box_entry(prim, origin, dirs):
    """Entry distance of rays into a yawed box (inf on miss or when starting inside)."""
    o = _to_local(prim, np.asarray(origin, dtype=np.float64)[None, :])
    d = _rotate_to_local(prim, dirs)
    half = np.asarray(prim.size) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (-half - o) / d
        t1 = (half - o) / d
    lo = np.fmin(t0, t1)
    hi = np.fmax(t0, t1)
    # parallel rays: inside the slab -> unbounded, outside -> miss
    par = d == 0
    inside_slab = np.abs(o) <= half
    lo = np.where(par, np.where(inside_slab, -np.inf, np.inf), lo)
    hi = np.where(par, np.where(inside_slab, np.inf, -np.inf), hi)
    t_near = lo.max(axis=1)
    t_far = hi.min(axis=1)
    hit = (t_near <= t_far) & (t_near > 1e-9)
    return np.where(hit, t_near, np.inf)


def surface_distance(prim, pts):
    """Unsigned distance from points to the surface of a box primitive."""
    q = np.abs(_to_local(prim, pts)) - np.asarray(prim.size) / 2.0
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return np.abs(outside + inside)


def cast_lidar(prims, origin, dirs, max_range):
    best = np.full(len(dirs), np.inf)
    cls = np.zeros(len(dirs), np.uint8)
    for p in prims:
        t = ray_box_entry(p, origin, dirs)
        closer = t < best
        best[closer] = t[closer]
        cls[closer] = p.class_id
    hit = best <= max_range
    return best, cls, hit


def simulate_frame(spec: SceneSpec, frame, ego_pose=None) -> FrameAnnotation:
    rig = spec.rig
    ego = spec.ego_pose(frame) if ego_pose is None else ego_pose
    dirs_ego = rig.ray_directions()
    origin_w = ego.apply(np.asarray(rig.lidar_origin))
    dirs_w = dirs_ego @ ego.rotation.T
    t, cls, hit = cast_lidar(spec.primitives_at(frame), origin_w, dirs_w, rig.max_range)
    pts_w = origin_w + t[hit, None] * dirs_w[hit]
    pts_ego = ego.inverse().apply(pts_w)
    # intensity: cosine of the incidence angle against the ray, no randomness
    inten = np.abs(dirs_ego[hit, 2]) * 0.5 + 0.25
    cloud = PointCloud(pts_ego, inten, cls[hit], frame)
    tsec = frame * spec.frame_dt
    ego_inv = ego.inverse()
    boxes = []
    for a in spec.actors:
        center_w, size, yaw_w = a.annotation_at(tsec)
        boxes.append(Box3D(ego_inv.apply(np.asarray(center_w)), size, yaw_w - ego.yaw,
                           a.track_id, a.class_id, a.special_posture))
    return FrameAnnotation(frame, ego, cloud, tuple(boxes), round(tsec, 9))


def simulate_clip(spec: SceneSpec, frames=DEFAULT_FRAMES, ego_trajectory=None,
                  clip_id=None) -> ClipDataset:
    """Render ``frames`` LiDAR frames with exact ray-box intersections.

    ``ego_trajectory`` may be a sequence of world-from-ego poses or a callable
    ``frame -> pose``; by default the scene's ego loop is used.
    """
    if frames < 1:
        raise ValueError("frames must be >= 1")
    out = []
    for f in range(frames):
        pose = None
        if callable(ego_trajectory):
            pose = ego_trajectory(f)
        elif ego_trajectory is not None:
            pose = ego_trajectory[f]
        out.append(simulate_frame(spec, f, pose))
    cid = clip_id or f"{spec.scene.name.lower()}_{spec.seed:04d}"
    return ClipDataset(cid, spec.scene, out, spec.rig.cameras, spec.rig.lidar_origin,
                       spec.rig.lidar_config())


# -- analytic occupancy -----------------------------------------------------

def _shell_blocks(spec: SceneSpec, grid: GridSpec, frame, ego_pose=None):
    """Yield ``(primitive, index_slices, distances)`` for the voxels near each primitive.

    Only the index window covering the primitive's ego-frame bounding box
    (grown by the shell radius) is evaluated; everything else is farther
    than the shell from that surface.
    """
    ego = spec.ego_pose(frame) if ego_pose is None else ego_pose
    to_ego = ego.inverse()
    shell = float(np.linalg.norm(grid.voxel_size)) / 2.0
    origin, vox, dims = grid.origin, grid.voxel_size, np.array(grid.dims)
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    for p in spec.primitives_at(frame):
        c, s = math.cos(p.yaw), math.sin(p.yaw)
        local = signs * (np.asarray(p.size) / 2.0)
        corners = np.asarray(p.center) + np.stack(
            [c * local[:, 0] - s * local[:, 1], s * local[:, 0] + c * local[:, 1], local[:, 2]],
            axis=1)
        ce = to_ego.apply(corners)
        lo = np.floor((ce.min(axis=0) - shell - origin) / vox - 0.5).astype(int)
        hi = np.ceil((ce.max(axis=0) + shell - origin) / vox + 0.5).astype(int)
        lo, hi = np.clip(lo, 0, dims), np.clip(hi, 0, dims)
        if np.any(hi <= lo):
            continue
        sl = tuple(slice(a, b) for a, b in zip(lo, hi))
        axes = [origin[i] + (np.arange(lo[i], hi[i]) + 0.5) * vox[i] for i in range(3)]
        centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        yield p, sl, surface_distance(p, ego.apply(centers.reshape(-1, 3))).reshape(
            centers.shape[:3]), shell


def analytic_class_masks(spec: SceneSpec, grid: GridSpec, frame, ego_pose=None):
    """(K+1, X, Y, Z) booleans: voxel center within half a voxel diagonal of a class-c surface."""
    k = taxonomy_for(spec.scene).num_classes
    masks = np.zeros((k + 1,) + grid.dims, bool)
    for p, sl, d, shell in _shell_blocks(spec, grid, frame, ego_pose):
        masks[(p.class_id,) + sl] |= d <= shell
    return masks


def analytic_occupancy(spec: SceneSpec, grid: GridSpec, frame, ego_pose=None) -> OccupancyGrid:
    """Surface-shell oracle grid; where several classes qualify the nearest surface wins
    (ties to the smallest class id)."""
    best = np.full(grid.dims, np.inf)
    cls = np.zeros(grid.dims, np.uint8)
    blocks = sorted(_shell_blocks(spec, grid, frame, ego_pose), key=lambda b: b[0].class_id)
    for p, sl, d, shell in blocks:
        closer = (d <= shell) & (d < best[sl])
        best[sl][closer] = d[closer]
        cls[sl][closer] = p.class_id
    return OccupancyGrid(grid, cls, spec.scene)


def oracle_agreement(generated: OccupancyGrid, masks):
    """Fraction of generated OCCUPIED voxels whose class the oracle admits there."""
    occ = generated.occupied()
    n = int(occ.sum())
    if n == 0:
        return 1.0, 0
    labels = generated.voxels[occ].astype(np.int64)
    admitted = masks[:, occ][labels, np.arange(n)]
    return float(admitted.mean()), n


# -- (de)serialization for scene.json ---------------------------------------

def scene_to_dict(spec: SceneSpec):
    rig = spec.rig
    return {
        "seed": spec.seed,
        "scene": spec.scene.name.lower(),
        "room": list(spec.room),
        "frame_dt": spec.frame_dt,
        "primitives": [{"center": list(p.center), "size": list(p.size), "class_id": p.class_id,
                        "yaw": p.yaw, "name": p.name} for p in spec.primitives],
        "actors": [{"track_id": a.track_id, "class_id": a.class_id, "size": list(a.size),
                    "waypoints": [list(w) for w in a.waypoints], "speed": a.speed,
                    "phase": a.phase, "special_posture": a.special_posture}
                   for a in spec.actors],
        "ego_path": {"center": list(spec.ego_path.center), "radii": list(spec.ego_path.radii),
                     "period": spec.ego_path.period},
        "rig": {"cameras": [camera_to_dict(c) for c in rig.cameras],
                "rings": rig.rings, "vfov_deg": rig.vfov_deg,
                "azimuth_step_deg": rig.azimuth_step_deg,
                "lidar_origin": list(rig.lidar_origin), "ego_height": rig.ego_height,
                "max_range": rig.max_range},
    }


def scene_from_dict(d) -> SceneSpec:
    r = d["rig"]
    rig = SensorRig(tuple(camera_from_dict(c) for c in r["cameras"]), r["rings"], r["vfov_deg"],
                    r["azimuth_step_deg"], tuple(r["lidar_origin"]), r["ego_height"],
                    r["max_range"])
    prims = tuple(Primitive(tuple(p["center"]), tuple(p["size"]), p["class_id"], p["yaw"],
                            p.get("name", "")) for p in d["primitives"])
    actors = tuple(Actor(a["track_id"], a["class_id"], tuple(a["size"]),
                         tuple(tuple(w) for w in a["waypoints"]), a["speed"], a["phase"],
                         a["special_posture"]) for a in d["actors"])
    ep = d["ego_path"]
    return SceneSpec(d["seed"], d["scene"], tuple(d["room"]), prims, actors, rig,
                     EgoLoop(tuple(ep["center"]), tuple(ep["radii"]), ep["period"]),
                     d["frame_dt"])


def with_period(spec: SceneSpec, period):
    return replace(spec, ego_path=replace(spec.ego_path, period=int(period)))
