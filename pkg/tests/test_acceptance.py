"""Acceptance criteria 1-9. Each test records one PASS/FAIL line via the ``acceptance``
fixture (printed in the run summary) and then asserts the same condition."""

import itertools
import json
import math
import struct
import time

import numpy as np
import pytest

from humocc import dataset_io as dio
from humocc.cli import main
from humocc.core import (BevFeatureMap, Box3D, GridSpec, OccupancyGrid,
                         PointCloud, Scene, Se3Pose, voxel_indices)
from humocc.errors import (MalformedFileError, NonMonotonicTimeError, SpecMismatchError,
                           VersionMismatchError)
from humocc.geometry import (_distort_jacobian, distort, gravity_align, project_points,
                             undistort_normalized, warp_bev)
from humocc.gt_pipeline import build_tracks, compose_frame_cloud, split_frame, voxelize
from humocc.losses import (cross_entropy, focal_loss, lovasz_softmax, scal_geo, scal_sem,
                           softmax_probs, total_loss)
from humocc.metrics import RaySet, parse_report, ray_iou
from humocc.pillars import pillarize, scatter_to_bev
from humocc.raycast import cast_rays
from humocc.synthetic import (analytic_class_masks, analytic_occupancy, default_rig,
                              default_scene, make_camera, oracle_agreement, scene_from_dict,
                              simulate_clip, simulate_frame, surface_distance)
from humocc.temporal import (FeatureQueue, align_history, channel_to_height, concat_temporal,
                             height_to_channel)

from oracles import (counts_from_hits, first_hits_list, lovasz_extension_bruteforce,
                     random_grid, small_spec)


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    """CLI synth (20 frames, default rig) followed by gen-gt, timed end to end."""
    root = tmp_path_factory.mktemp("e2e")
    t0 = time.perf_counter()
    code_synth = main(["synth", str(root / "synth"), "--frames", "20", "--no-oracle"])
    code_gt = main(["gen-gt", str(root / "synth" / "home_0000"), str(root / "gt")])
    elapsed = time.perf_counter() - t0
    return root, code_synth, code_gt, elapsed


# -- 1 -----------------------------------------------------------------------------

def test_criterion_1_end_to_end_oracle(e2e, acceptance):
    root, code_synth, code_gt, elapsed = e2e
    clip_dir = root / "synth" / "home_0000"
    spec = scene_from_dict(json.loads((clip_dir / "scene.json").read_text()))
    clip = dio.read_clip(clip_dir)
    grids = dio.list_grids(root / "gt")
    worst_occ, worst_ret, worst_strict = 1.0, 1.0, 1.0
    for fa in clip.frames:
        g = dio.read_grid(grids[fa.frame_id])
        masks = analytic_class_masks(spec, g.spec, fa.frame_id, fa.ego_pose)
        # every voxel the generated grid marks OCCUPIED (all of them hold >= 1 return)
        frac, _ = oracle_agreement(g, masks)
        worst_occ = min(worst_occ, frac)
        # the subset hit by this frame's own scan
        idx = voxel_indices(g.spec, fa.cloud.points)
        idx = idx[idx[:, 0] >= 0]
        own = np.zeros(g.spec.dims, bool)
        own[tuple(idx.T)] = True
        sub = OccupancyGrid(g.spec, np.where(own, g.voxels, 0).astype(np.uint8), g.scene)
        worst_ret = min(worst_ret, oracle_agreement(sub, masks)[0])
        # informational: single-label oracle with its nearest-surface tie rule
        ref = analytic_occupancy(spec, g.spec, fa.frame_id, fa.ego_pose)
        occ = g.occupied()
        worst_strict = min(worst_strict, float(np.mean(g.voxels[occ] == ref.voxels[occ])))
    ok = (code_synth == 0 and code_gt == 0 and len(grids) == 20 and worst_occ >= 0.99
          and worst_ret >= 0.99 and elapsed < 60.0)
    assert acceptance(1, "end-to-end oracle agreement", ok,
                      f"min agreement {worst_occ:.4f} (own-scan voxels {worst_ret:.4f}, "
                      f"nearest-surface labels {worst_strict:.4f}), {elapsed:.1f}s")


# -- 2 -----------------------------------------------------------------------------

def test_criterion_2_metrics_self_consistency(e2e, tmp_path, capsys, acceptance):
    root = e2e[0]
    code = main(["eval", str(root / "gt"), str(root / "gt"), "--out", str(tmp_path)])
    rep = parse_report(capsys.readouterr().out)
    self_ok = code == 0 and rep["mIoU"] == 1.0 and rep["rayIoU"] == 1.0

    rng = np.random.default_rng(2024)
    spec = small_spec(8, 8, 4)
    pairs = monotone = exact = 0
    while pairs < 100:
        pred, gt = random_grid(rng, spec, 3, 0.25), random_grid(rng, spec, 3, 0.25)
        origin = rng.uniform([0.5, 0.5, 0.5], [7.5, 7.5, 3.5])
        cell = tuple(np.floor(origin).astype(int))
        if pred.occupied()[cell] or gt.occupied()[cell]:
            continue
        d = rng.normal(size=(60, 3))
        rays = RaySet(origin[None, :], d / np.linalg.norm(d, axis=1, keepdims=True))
        r = ray_iou(pred, gt, rays, (0.5, 1.0, 2.0, 4.0))
        pairs += 1
        per_t = r.per_threshold
        per_c = r.per_class
        if np.all(np.diff(per_t) >= 0) and np.all(np.nan_to_num(np.diff(per_c, axis=0)) >= 0):
            monotone += 1
        ph = first_hits_list(pred, rays.origins, rays.directions)
        gh = first_hits_list(gt, rays.origins, rays.directions)
        if all(np.array_equal(np.stack([r.tp[i], r.fp[i], r.fn[i]]),
                              np.stack(counts_from_hits(ph, gh, tau, 3)))
               for i, tau in enumerate(r.thresholds)):
            exact += 1
    ok = self_ok and monotone == 100 and exact == 100
    assert acceptance(2, "metrics self-consistency", ok,
                      f"pred=gt mIoU {rep['mIoU']} rayIoU {rep['rayIoU']}; "
                      f"monotone {monotone}/100, exact counts {exact}/100")


# -- 3 -----------------------------------------------------------------------------

def test_criterion_3_warp(acceptance):
    rng = np.random.default_rng(33)
    ident = shift = rot = 0
    worst_shift = worst_rot = 0.0
    for _ in range(50):
        n, c = int(rng.choice([8, 16, 20, 40])), int(rng.integers(1, 6))
        cell = 0.1
        half = n * cell / 2
        f = BevFeatureMap(((-half, half), (-half, half)), rng.normal(size=(n, n, c)))
        ident += np.array_equal(warp_bev(f, Se3Pose.identity()).data, f.data)
        err = 0.0
        for axis, sign in itertools.product((0, 1), (1, -1)):
            t = np.zeros(3)
            t[axis] = sign * cell
            out = warp_bev(f, Se3Pose(np.eye(3), t)).data
            expect = np.zeros_like(f.data)
            src = [slice(None)] * 2
            dst = [slice(None)] * 2
            src[axis] = slice(1, None) if sign > 0 else slice(None, -1)
            dst[axis] = slice(None, -1) if sign > 0 else slice(1, None)
            expect[tuple(dst)] = f.data[tuple(src)]
            err = max(err, float(np.max(np.abs(out - expect))))
        worst_shift = max(worst_shift, err)
        shift += err <= 1e-12
        e = float(np.max(np.abs(warp_bev(f, Se3Pose.from_yaw(math.pi)).data
                                - f.data[::-1, ::-1])))
        worst_rot = max(worst_rot, e)
        rot += e <= 1e-9
    ok = ident == 50 and shift == 50 and rot == 50
    assert acceptance(3, "warp correctness", ok,
                      f"identity {ident}/50, shift {shift}/50 (max {worst_shift:.1e}), "
                      f"half turn {rot}/50 (max {worst_rot:.1e})")


# -- 4 -----------------------------------------------------------------------------

def _invertible(dist, x, y):
    k1, k2, k3 = dist[:3]
    r2 = x * x + y * y
    a, b, c, d = _distort_jacobian(dist, x, y)
    return (1 + r2 * (k1 + r2 * (k2 + r2 * k3)) > 0) & (a * d - b * c > 0)


def test_criterion_4_projection_roundtrip(acceptance):
    rng = np.random.default_rng(44)
    worst = worst_zero = 0.0
    total = folded = 0
    for _ in range(20):
        dist = (rng.uniform(-0.2, 0.2), rng.uniform(-0.02, 0.02), rng.uniform(-0.002, 0.002),
                rng.uniform(-0.005, 0.005), rng.uniform(-0.005, 0.005))
        cam = make_camera(rng.uniform(-180, 180), dist)
        w, h = cam.resolution
        # 1000 in-image points: distorted pixels uniform over the image, drawn among
        # those the lens actually produces (preimage inside the invertible region)
        got = []
        while sum(len(g) for g in got) < 1000:
            x = rng.uniform(-1.2, 1.2, 4000) * (w / 2) / cam.fx
            y = rng.uniform(-1.2, 1.2, 4000) * (h / 2) / cam.fy
            xd, yd = distort(dist, x, y)
            u, v = cam.fx * xd + cam.cx, cam.fy * yd + cam.cy
            inside = (u >= 0) & (u < w) & (v >= 0) & (v < h)
            inv = _invertible(dist, x, y)
            folded += int(np.sum(inside & ~inv))
            got.append(np.stack([xd, yd], axis=1)[inside & inv])
        pts = np.concatenate(got)[:1000]
        total += len(pts)
        xu, yu = undistort_normalized(cam, pts[:, 0], pts[:, 1])
        xr, yr = distort(dist, xu, yu)
        worst = max(worst, float(np.max(np.abs(np.stack([xr, yr], 1) - pts))))
        # zero distortion: distorted and plain pinhole projection coincide
        flat = cam.with_dist((0.0,) * 5)
        p3 = rng.uniform([-8, -8, -2], [8, 8, 3], size=(1000, 3))
        a, sa = project_points(flat, p3, use_distortion=True)
        b, sb = project_points(flat, p3, use_distortion=False)
        front = sa != 1
        worst_zero = max(worst_zero, float(np.max(np.abs(a[front] - b[front]), initial=0.0)))
        assert np.array_equal(sa, sb)
    ok = total == 20_000 and worst < 1e-9 and worst_zero <= 1e-12
    assert acceptance(4, "projection round trip", ok,
                      f"{total} points, max distort(undistort) error {worst:.1e}, zero-distortion "
                      f"gap {worst_zero:.1e}, {folded} fold-region samples excluded")


# -- 5 -----------------------------------------------------------------------------

def _lovasz_tie(z, t, gap=1e-4):
    p = softmax_probs(z).reshape(-1, z.shape[-1])
    tf = t.reshape(-1)
    return any(np.any(np.diff(np.sort(np.abs((tf == k) - p[:, k]))) < gap)
               for k in range(p.shape[1]))


def test_criterion_5_losses(acceptance):
    rng = np.random.default_rng(55)
    c = 4
    t = rng.integers(0, c, size=(4, 4, 2))
    logits = np.eye(c)[t] * 60.0
    probs = softmax_probs(logits)
    perfect = max(focal_loss(logits, t).value, lovasz_softmax(probs, t).value,
                  scal_geo(probs, t).value, scal_sem(probs, t).value, total_loss(logits, t).value)

    worst_ce = 0.0
    for _ in range(20):
        z = rng.normal(size=(4, 4, 2, c)) * 3
        tt = rng.integers(0, c, size=(4, 4, 2))
        worst_ce = max(worst_ce, abs(focal_loss(z, tt, gamma=0).value - cross_entropy(z, tt)))

    lov_cases = lov_ok = 0
    for n in (1, 2, 3):
        for labels in itertools.product(range(3), repeat=n):
            for _ in range(3):
                p = rng.dirichlet(np.ones(3), size=n)
                lab = np.array(labels)
                vals = [lovasz_extension_bruteforce(np.abs((lab == k) - p[:, k]), lab == k)
                        for k in range(3) if np.any(lab == k)]
                lov_cases += 1
                lov_ok += abs(lovasz_softmax(p, lab).value - np.mean(vals)) < 1e-12

    fd_worst, checked, h = 0.0, 0, 1e-6
    while checked < 20:
        z = rng.normal(size=(4, 4, 2, c))
        tt = rng.integers(0, c, size=(4, 4, 2))
        if _lovasz_tie(z, tt):
            continue
        g = total_loss(z, tt).gradient
        fd = np.zeros_like(z)
        for idx in np.ndindex(z.shape):
            zp, zm = z.copy(), z.copy()
            zp[idx] += h
            zm[idx] -= h
            fd[idx] = (total_loss(zp, tt).value - total_loss(zm, tt).value) / (2 * h)
        rel = np.linalg.norm(fd - g) / max(np.linalg.norm(fd), np.linalg.norm(g))
        fd_worst = max(fd_worst, float(rel))
        checked += 1
    ok = perfect < 1e-8 and worst_ce < 1e-12 and lov_ok == lov_cases and fd_worst < 1e-4
    assert acceptance(5, "loss suite", ok,
                      f"perfect {perfect:.1e}, focal(0)-CE {worst_ce:.1e}, Lovasz "
                      f"{lov_ok}/{lov_cases}, gradient rel err {fd_worst:.1e} on 20 instances")


# -- 6 -----------------------------------------------------------------------------

def _owner_bruteforce(fa):
    """Per-point loop: first box in track-id order that claims the point."""
    owners = []
    boxes = sorted(fa.boxes, key=lambda b: b.track_id)
    for p, lab in zip(fa.cloud.points, fa.cloud.label):
        owner = -1
        for b in boxes:
            c, s = math.cos(b.yaw), math.sin(b.yaw)
            dx, dy, dz = p - b.center
            lx, ly = c * dx + s * dy, -s * dx + c * dy
            if abs(lx) <= b.size[0] / 2 and abs(ly) <= b.size[1] / 2 and abs(dz) <= b.size[2] / 2:
                if not b.special_posture or lab == b.class_id:
                    owner = b.track_id
                    break
        owners.append(owner)
    return np.array(owners)


def test_criterion_6_gt_conservation(acceptance):
    rng = np.random.default_rng(66)
    frames_done = conserved = split_ok = 0
    worst_surface = worst_self = 0.0
    special_points = 0
    while frames_done < 50:
        scene = rng.choice(["home", "industrial", "outdoor"])
        spec = default_scene(scene, int(rng.integers(0, 10_000)), default_rig(azimuth_step_deg=0.8))
        start = int(rng.integers(0, 200))
        fids = sorted({start, start + int(rng.integers(1, 15)), start + int(rng.integers(15, 40))})
        frames = [simulate_frame(spec, f) for f in fids]
        splits = [split_frame(fa) for fa in frames]
        for fa, (static, dyn) in zip(frames, splits):
            n = len(fa.cloud)
            conserved += len(static) + sum(len(d) for d in dyn.values()) == n
            owner = _owner_bruteforce(fa)
            got = np.full(n, -1)
            # recover ownership by matching split outputs back to the frame's points
            for tid, d in dyn.items():
                got[np.flatnonzero(_rows_in(fa.cloud.points, d.points))] = tid
            split_ok += np.array_equal(owner, got)
            sp = [b.track_id for b in fa.boxes if b.special_posture]
            special_points += int(np.isin(owner, sp).sum())
        tracks = build_tracks(frames, splits)
        ref = frames[0].ego_pose
        for fa, (_, dyn) in zip(frames, splits):
            merged = compose_frame_cloud(PointCloud.empty(), tracks, fa, ref)
            world = fa.ego_pose.apply(merged.points)
            actor_prims = {a.track_id: a.primitive_at(fa.frame_id * spec.frame_dt)
                           for a in spec.actors}
            off = 0
            for tr in tracks:
                if fa.frame_id not in tr.boxes or not len(tr.points):
                    continue
                seg = world[off:off + len(tr.points)]
                off += len(tr.points)
                d = surface_distance(actor_prims[tr.track_id], seg)
                worst_surface = max(worst_surface, float(np.max(np.abs(d))))
            # this frame's own dynamic points come back where they were observed
            for tid, d in dyn.items():
                if len(d):
                    tr = next(t for t in tracks if t.track_id == tid)
                    back = tr.boxes[fa.frame_id].pose().apply(
                        tr.points.points[_own_rows(tracks, tid, frames, fa)])
                    worst_self = max(worst_self, float(np.max(np.abs(back - d.points))))
        frames_done += len(frames)
    ok = (conserved == frames_done and split_ok == frames_done and worst_surface < 1e-6
          and worst_self < 1e-6 and special_points > 0)
    assert acceptance(6, "gt pipeline conservation", ok,
                      f"{frames_done} frames: conservation {conserved}, split oracle {split_ok}, "
                      f"stitch surface residual {worst_surface:.1e}, self residual "
                      f"{worst_self:.1e}")


def _rows_in(points, subset):
    """Boolean mask of ``points`` rows that appear (bit-exactly) in ``subset``."""
    keys = {r.tobytes() for r in np.ascontiguousarray(subset)}
    return np.array([r.tobytes() in keys for r in np.ascontiguousarray(points)], bool)


def _own_rows(tracks, tid, frames, fa):
    """Slice of a track's canonical points contributed by ``fa`` (frames are concatenated
    in order, so the slice starts after every earlier frame's contribution)."""
    start = 0
    for other in frames:
        _, dyn = split_frame(other)
        n = len(dyn.get(tid, ()))
        if other.frame_id == fa.frame_id:
            return slice(start, start + n)
        start += n
    raise KeyError(fa.frame_id)


# -- 7 -----------------------------------------------------------------------------

def test_criterion_7_io(tmp_path, acceptance):
    rng = np.random.default_rng(77)
    checks = {}
    cloud = PointCloud(rng.normal(size=(500, 3)).astype(np.float32),
                       rng.random(500).astype(np.float32))
    checks["cloud"] = dio.decode_cloud(dio.encode_cloud(cloud)) == cloud
    labels = rng.integers(0, 256, 500).astype(np.uint8)
    checks["labels"] = np.array_equal(dio.decode_labels(dio.encode_labels(labels)), labels)
    poses = [Se3Pose.from_euler_zyx(*rng.normal(size=3), rng.normal(size=3)), None,
             Se3Pose.identity()]
    checks["poses"] = dio.decode_poses(dio.encode_poses(poses)) == poses
    vox = rng.choice(np.r_[np.arange(14), 255], size=(200, 200, 24)).astype(np.uint8)
    grid = OccupancyGrid(GridSpec(), vox, Scene.HOME)
    dio.write_grid(tmp_path / "g.hogd", grid)
    size = (tmp_path / "g.hogd").stat().st_size
    checks["grid"] = dio.read_grid(tmp_path / "g.hogd") == grid
    boxes = (Box3D((0.1, 1 / 3, -2e-7), (0.5, 0.6, 1.7), 0.1234567890123, 4, 1, True),)
    dio.write_boxes(tmp_path / "b.json", boxes)
    checks["boxes"] = dio.read_boxes(tmp_path / "b.json") == boxes
    rig = default_rig()
    dio.write_rig(tmp_path / "r.json", rig.cameras, rig.lidar_origin, rig.lidar_config())
    checks["rig"] = dio.read_rig(tmp_path / "r.json") == (rig.cameras, rig.lidar_origin,
                                                            rig.lidar_config())
    clip = simulate_clip(default_scene("industrial", 3, default_rig(azimuth_step_deg=3.0)), 3)
    frames = [f.__class__(f.frame_id, f.ego_pose,
                          PointCloud(f.cloud.points.astype(np.float32),
                                     f.cloud.intensity.astype(np.float32), f.cloud.label,
                                     f.frame_id), f.boxes, f.timestamp) for f in clip.frames]
    clip = clip.__class__(clip.clip_id, clip.scene, frames, clip.cameras, clip.lidar_origin,
                          clip.lidar)
    dio.write_clip(tmp_path / "clip", clip)
    checks["clip"] = dio.read_clip(tmp_path / "clip") == clip

    # corrupted fixtures
    diag = {}
    bad = tmp_path / "bad.hopc"
    bad.write_bytes(dio.encode_cloud(cloud)[:16 + 16 * 10 + 5])
    diag["truncated"] = _malformed(lambda: dio.read_cloud(bad), 16 + 16 * 10)
    bad.write_bytes(b"NOPE" + dio.encode_cloud(cloud)[4:])
    diag["bad magic"] = _malformed(lambda: dio.read_cloud(bad), 0)
    bad.write_bytes(dio.encode_cloud(cloud) + b"\x00\x01")
    diag["trailing"] = _malformed(lambda: dio.read_cloud(bad), 16 + 16 * 500)
    bad.write_bytes(struct.pack("<4sIQ", b"HOPC", 7, 0))
    try:
        dio.read_cloud(bad)
        diag["version"] = False
    except VersionMismatchError as exc:
        diag["version"] = exc.offset == 4
    (tmp_path / "clip" / "frames" / "000002.holb").unlink()
    try:
        dio.read_clip(tmp_path / "clip")
        diag["missing frame"] = False
    except MalformedFileError as exc:
        diag["missing frame"] = "frame 2" in str(exc)
    try:
        dio.read_grid(tmp_path / "g.hogd", GridSpec(voxel=(0.2, 0.2, 0.2)))
        diag["spec mismatch"] = False
    except SpecMismatchError:
        diag["spec mismatch"] = True
    ok = all(checks.values()) and all(diag.values()) and size == 960_064
    failed = [k for k, v in {**checks, **diag}.items() if not v]
    assert acceptance(7, "io round trips", ok,
                      f"{len(checks)} types round-trip, grid file {size} bytes, "
                      f"{sum(diag.values())}/{len(diag)} corrupt fixtures diagnosed"
                      + (f", failed: {failed}" if failed else ""))


def _malformed(fn, offset):
    try:
        fn()
    except MalformedFileError as exc:
        return exc.offset == offset and f"byte {offset}" in str(exc)
    return False


# -- 8 -----------------------------------------------------------------------------

def test_criterion_8_temporal(acceptance):
    rng = np.random.default_rng(88)
    feat = BevFeatureMap(((-1, 1), (-1, 1)), np.zeros((2, 2, 1)))
    queue_ok = 0
    for _ in range(200):
        cap = int(rng.integers(1, 6))
        q, accepted, good = FeatureQueue(cap), [], True
        for t in np.cumsum(rng.normal(0.5, 1.0, size=int(rng.integers(0, 30)))):
            try:
                q.push(float(t), Se3Pose.identity(), feat)
                good &= not accepted or t > accepted[-1]
                accepted.append(float(t))
            except NonMonotonicTimeError:
                good &= bool(accepted) and not t > accepted[-1]
            good &= len(q) == min(cap, len(accepted))
            good &= [e.timestamp for e in q.entries] == accepted[-cap:]
        queue_ok += bool(good)

    c2h = 0
    for _ in range(50):
        z, cpb = int(rng.integers(1, 9)), int(rng.integers(1, 5))
        data = rng.normal(size=(5, 6, z * cpb))
        c2h += np.array_equal(height_to_channel(channel_to_height(data, z)), data)

    spec = default_scene("home", 8, default_rig(azimuth_step_deg=1.0))
    clip = simulate_clip(spec, 10)
    q = FeatureQueue(1)
    channels = []
    for fa in clip.frames:
        bev = scatter_to_bev(pillarize(fa.cloud), fa.timestamp)
        pose = gravity_align(fa.ego_pose)
        fused = concat_temporal(bev, align_history(q, pose), k=1)
        channels.append(fused.shape[-1])
        q.push(fa.timestamp, pose, bev)
    constant = len(set(channels)) == 1 and channels[0] == 2 * bev.shape[-1]
    ok = queue_ok == 200 and c2h == 50 and constant
    assert acceptance(8, "temporal fusion", ok,
                      f"queue {queue_ok}/200, channel_to_height {c2h}/50, channels per frame "
                      f"{sorted(set(channels))}")


# -- 9 -----------------------------------------------------------------------------

def test_criterion_9_performance(acceptance):
    rng = np.random.default_rng(99)
    spec = GridSpec()
    pts = rng.uniform([-10, -10, -1.5], [10, 10, 0.9], size=(1_000_000, 3))
    cloud = PointCloud(pts, label=rng.integers(1, 14, 1_000_000))
    voxelize(PointCloud(pts[:1000], label=cloud.label[:1000]), spec, Scene.HOME)
    vt = []
    for _ in range(3):
        t0 = time.perf_counter()
        voxelize(cloud, spec, Scene.HOME)
        vt.append(time.perf_counter() - t0)

    scene = default_scene("home", 0)
    grid = analytic_occupancy(scene, spec, 0)
    dirs = scene.rig.ray_directions()
    cast_rays(grid, scene.rig.lidar_origin, dirs[:10])  # JIT warm-up
    rt = []
    for _ in range(3):
        t0 = time.perf_counter()
        cast_rays(grid, scene.rig.lidar_origin, dirs)
        rt.append(time.perf_counter() - t0)
    ok = len(dirs) == 36_000 and min(vt) < 1.0 and min(rt) < 0.25
    assert acceptance(9, "performance", ok,
                      f"voxelize 1M points {min(vt) * 1e3:.0f} ms (first {vt[0] * 1e3:.0f}), "
                      f"raycast 36k rays {min(rt) * 1e3:.1f} ms (first {rt[0] * 1e3:.1f})")
