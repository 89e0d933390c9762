"""``humocc`` command line: synth, gen-gt, eval, render-slice, project-check.

Exit codes: 0 success, 1 configuration / spec / index error, 2 I/O or
malformed input, 3 run finished but some frames failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import dataset_io as dio
from .core import UNOBSERVED, GridSpec, Scene
from .errors import FrameError, HumoccError, MalformedFileError, SpecMismatchError
from .geometry import ProjStatus, project_points
from .gt_pipeline import frame_gt, prepare_clip
from .metrics import (DEFAULT_THRESHOLDS, RaySet, format_report, merge_ray_reports, miou,
                      ray_iou, update_confusion)

log = logging.getLogger("humocc")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_PARTIAL = 0, 1, 2, 3
DATA_ROOT_ENV = "HUMOCC_DATA_ROOT"


class ConfigError(Exception):
    pass


class _ErrorCounter(logging.Handler):
    def __init__(self):
        super().__init__(logging.ERROR)
        self.count = 0

    def emit(self, record):
        self.count += 1


# -- configuration -------------------------------------------------------------

SYNTH_DEFAULTS = {"scene": "home", "seed": 0, "frames": 200, "clips": 1,
                  "azimuth_step_deg": 0.4, "distortion": None, "oracle": True}
GRID_KEYS = ("x_range", "y_range", "z_range", "voxel")


def load_config(path):
    """Read a YAML or JSON mapping; JSON is a subset of YAML so one loader serves both."""
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: cannot parse config: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return doc


def _section(cfg, name, defaults):
    sec = cfg.get(name, {}) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = sorted(set(sec) - set(defaults))
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}: unknown config key")
    out = dict(defaults)
    out.update(sec)
    return out


def _override(opts, args, keys):
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    return opts


def grid_from_config(cfg) -> GridSpec:
    sec = cfg.get("grid", {}) or {}
    unknown = sorted(set(sec) - set(GRID_KEYS))
    if unknown:
        raise ConfigError(f"grid.{unknown[0]}: unknown config key")
    try:
        return GridSpec(**{k: tuple(v) for k, v in sec.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from exc


def resolve(path):
    """Relative paths are taken relative to $HUMOCC_DATA_ROOT when it is set."""
    p = Path(path)
    root = os.environ.get(DATA_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


# -- synth -----------------------------------------------------------------------

def _oracle_task(args):
    scene_doc, grid, frame = args
    from .synthetic import analytic_occupancy, scene_from_dict

    return analytic_occupancy(scene_from_dict(scene_doc), grid, frame)


def _map(fn, items, jobs):
    if jobs <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(jobs) as pool:
        return list(pool.map(fn, items))


def cmd_synth(args):
    from .synthetic import (default_rig, default_scene, scene_to_dict, simulate_clip)

    cfg = load_config(args.config)
    opts = _override(_section(cfg, "synth", SYNTH_DEFAULTS), args,
                     ("scene", "seed", "frames", "clips", "azimuth_step_deg", "distortion"))
    if args.no_oracle:
        opts["oracle"] = False
    try:
        scene = Scene.parse(opts["scene"])
    except ValueError as exc:
        raise ConfigError(f"scene: {exc}") from exc
    for key in ("frames", "clips"):
        if not isinstance(opts[key], int) or opts[key] < 1:
            raise ConfigError(f"{key}: must be a positive integer, got {opts[key]!r}")
    grid = grid_from_config(cfg)
    rig_kw = {"azimuth_step_deg": float(opts["azimuth_step_deg"])}
    if opts["distortion"] is not None:
        dist = tuple(float(v) for v in opts["distortion"])
        if len(dist) != 5:
            raise ConfigError("distortion: expected 5 coefficients (k1 k2 k3 p1 p2)")
        rig_kw["dist"] = dist
    try:
        rig = default_rig(**rig_kw)
    except ValueError as exc:
        raise ConfigError(f"rig: {exc}") from exc

    out = resolve(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for c in range(opts["clips"]):
        seed = int(opts["seed"]) + c
        spec = default_scene(scene, seed, rig)
        clip = simulate_clip(spec, opts["frames"])
        cdir = out / clip.clip_id
        dio.write_clip(cdir, clip)
        scene_doc = scene_to_dict(spec)
        (cdir / "scene.json").write_text(json.dumps(scene_doc, indent=1, sort_keys=True) + "\n")
        if opts["oracle"]:
            odir = cdir / "oracle"
            odir.mkdir(exist_ok=True)
            tasks = [(scene_doc, grid, fa.frame_id) for fa in clip.frames]
            for fa, g in zip(clip.frames, _map(_oracle_task, tasks, args.jobs)):
                dio.write_grid(odir / dio.grid_name(fa.frame_id), g)
        npts = sum(len(fa.cloud) for fa in clip.frames)
        print(f"clip\t{clip.clip_id}\tscene={scene.name.lower()}\tframes={len(clip)}"
              f"\tpoints={npts}\tpath={cdir}")
    return EXIT_OK


# -- gen-gt ------------------------------------------------------------------------

_CTX = None


def _init_gt(ctx):
    global _CTX
    _CTX = ctx


def _gt_task(fa):
    try:
        return fa.frame_id, frame_gt(_CTX, fa), None
    except FrameError as exc:
        return fa.frame_id, None, str(exc)


def cmd_gen_gt(args):
    cfg = load_config(args.config)
    grid = grid_from_config(cfg)
    clip = dio.read_clip(resolve(args.clip_dir))
    out = resolve(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = prepare_clip(clip, grid, visibility=not args.no_visibility)
    if args.jobs <= 1:
        _init_gt(ctx)
        results = [_gt_task(fa) for fa in clip.frames]
    else:
        with ProcessPoolExecutor(args.jobs, initializer=_init_gt, initargs=(ctx,)) as pool:
            results = list(pool.map(_gt_task, clip.frames))

    k = clip.taxonomy.num_classes
    hist = np.zeros(256, np.int64)
    failures = []
    for fid, g, err in results:
        if err is not None:
            log.error("frame %d failed: %s", fid, err)
            failures.append(fid)
            continue
        dio.write_grid(out / dio.grid_name(fid), g)
        hist += np.bincount(g.voxels.ravel(), minlength=256)
    names = clip.taxonomy.names()
    lines = [f"clip\t{clip.clip_id}", f"frames\t{len(results) - len(failures)}",
             f"failed\t{len(failures)}"]
    if failures:
        lines.append("failed_frames\t" + ",".join(str(f) for f in failures))
    lines.append(f"free\t{hist[0]}")
    lines.append(f"unobserved\t{hist[UNOBSERVED]}")
    for c in range(1, k + 1):
        lines.append(f"occupied/{names[c - 1]}\t{hist[c]}")
    text = "\n".join(lines) + "\n"
    dio.write_report(out / "summary.tsv", text)
    sys.stdout.write(text)
    return EXIT_PARTIAL if failures else EXIT_OK


# -- eval -----------------------------------------------------------------------

def _class_names(grid, k):
    if grid.scene is not None:
        return list(grid.taxonomy.names())
    return [f"class{c}" for c in range(1, k + 1)]


def cmd_eval(args):
    from .plotting import save_report_figure

    pred_dir, gt_dir = resolve(args.pred_dir), resolve(args.gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise FileNotFoundError(f"{d}: not a directory")
    preds, gts = dio.list_grids(pred_dir), dio.list_grids(gt_dir)
    if not gts:
        raise ConfigError(f"{gt_dir}: no grid files")
    if set(preds) != set(gts):
        missing = sorted(set(gts) ^ set(preds))
        raise ConfigError(f"frame sets differ between {pred_dir} and {gt_dir} "
                          f"(first mismatch: frame {missing[0]})")
    clip = None
    if args.rays == "lidar":
        if args.clip is None:
            raise ConfigError("--rays lidar needs --clip")
        clip = dio.read_clip(resolve(args.clip))

    cm, reports, names = None, [], None
    for fid in sorted(gts):
        gt = dio.read_grid(gts[fid])
        pred = dio.read_grid(preds[fid])
        if pred.spec != gt.spec:
            raise SpecMismatchError(f"frame {fid}: prediction grid {pred.spec} vs "
                                    f"ground truth {gt.spec}")
        cm = update_confusion(cm, pred, gt)
        if names is None:
            names = _class_names(gt, cm.num_classes)
        origin = clip.lidar_origin if clip is not None else args.origin
        if clip is not None:
            rays = RaySet.towards(origin, clip.frame(fid).cloud.points)
        else:
            rays = RaySet.spherical(origin, azimuth_step_deg=args.azimuth_step_deg)
        reports.append(ray_iou(pred, gt, rays, DEFAULT_THRESHOLDS))
    ray_report = merge_ray_reports(reports)
    text = format_report(cm, ray_report, names, {"frames": len(gts), "rays": args.rays})
    sys.stdout.write(text)
    out = resolve(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dio.write_report(out / "report.tsv", text)
    ious, _ = miou(cm)
    save_report_figure(out / "report.png", names, ious, ray_report)
    return EXIT_OK


# -- render-slice ----------------------------------------------------------------

def cmd_render_slice(args):
    from .plotting import save_slice

    grid = dio.read_grid(resolve(args.grid_file))
    nz = grid.spec.dims[2]
    if not 0 <= args.z_index < nz:
        raise ConfigError(f"z_index {args.z_index} outside 0..{nz - 1}")
    out = resolve(args.out_image)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_slice(grid, args.z_index, out)
    return EXIT_OK


# -- project-check ----------------------------------------------------------------

def project_check(cam, pts_ego, bins=8):
    """Compare plain pinhole and distorted projections of ego-frame points.

    Returns a dict of counts, mean/max pixel discrepancy over points valid
    under both models, and the mean discrepancy in equal-width bins of
    normalized image radius.
    """
    uv_p, st_p = project_points(cam, pts_ego, use_distortion=False)
    uv_d, st_d = project_points(cam, pts_ego, use_distortion=True)
    ok_p, ok_d = st_p == ProjStatus.OK, st_d == ProjStatus.OK
    both = ok_p & ok_d
    disc = np.linalg.norm(uv_p[both] - uv_d[both], axis=1)
    x = (uv_p[both, 0] - cam.cx) / cam.fx
    y = (uv_p[both, 1] - cam.cy) / cam.fy
    r = np.hypot(x, y)
    res = {"points": len(pts_ego), "valid_pinhole": int(ok_p.sum()),
           "valid_distorted": int(ok_d.sum()), "valid_both": int(both.sum()),
           "mean_px": float(disc.mean()) if disc.size else 0.0,
           "max_px": float(disc.max()) if disc.size else 0.0, "bins": []}
    if disc.size:
        edges = np.linspace(0.0, r.max(), bins + 1)
        idx = np.clip(np.searchsorted(edges, r, side="right") - 1, 0, bins - 1)
        for b in range(bins):
            m = idx == b
            res["bins"].append((float(edges[b]), float(edges[b + 1]), int(m.sum()),
                                float(disc[m].mean()) if m.any() else float("nan")))
    return res


def cmd_project_check(args):
    clip = dio.read_clip(resolve(args.clip_dir))
    if not 0 <= args.camera_index < len(clip.cameras):
        raise ConfigError(f"camera_index {args.camera_index} outside 0..{len(clip.cameras) - 1}")
    try:
        fa = clip.frame(args.frame)
    except KeyError:
        raise ConfigError(f"frame {args.frame} not in clip ({len(clip)} frames)") from None
    cam = clip.cameras[args.camera_index]
    if args.k1 is not None:
        cam = cam.with_dist((args.k1,) + tuple(cam.dist[1:]))
    res = project_check(cam, fa.cloud.points)
    lines = [f"camera\t{cam.name}", f"dist\t{' '.join(repr(float(v)) for v in cam.dist)}"]
    for key in ("points", "valid_pinhole", "valid_distorted", "valid_both"):
        lines.append(f"{key}\t{res[key]}")
    lines.append(f"mean_px\t{res['mean_px']:.9g}")
    lines.append(f"max_px\t{res['max_px']:.9g}")
    for lo, hi, n, m in res["bins"]:
        lines.append(f"radius[{lo:.4f},{hi:.4f})\t{n}\t{m:.9g}")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


# -- entry point --------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="humocc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="simulate clips and analytic oracle grids")
    s.add_argument("out_dir")
    s.add_argument("--config")
    s.add_argument("--scene")
    s.add_argument("--seed", type=int)
    s.add_argument("--frames", type=int)
    s.add_argument("--clips", type=int)
    s.add_argument("--azimuth-step-deg", dest="azimuth_step_deg", type=float)
    s.add_argument("--distortion", type=float, nargs=5, metavar=("K1", "K2", "K3", "P1", "P2"))
    s.add_argument("--no-oracle", action="store_true")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_synth)

    g = sub.add_parser("gen-gt", help="generate occupancy ground truth for a clip")
    g.add_argument("clip_dir")
    g.add_argument("out_dir")
    g.add_argument("--config")
    g.add_argument("--no-visibility", action="store_true")
    g.add_argument("--jobs", type=int, default=1)
    g.set_defaults(func=cmd_gen_gt)

    e = sub.add_parser("eval", help="mIoU / rayIoU of prediction grids against ground truth")
    e.add_argument("pred_dir")
    e.add_argument("gt_dir")
    e.add_argument("--rays", choices=("grid", "lidar"), default="grid")
    e.add_argument("--clip", help="clip directory supplying LiDAR rays for --rays lidar")
    e.add_argument("--origin", type=float, nargs=3, default=(0.0, 0.0, 0.15))
    e.add_argument("--azimuth-step-deg", dest="azimuth_step_deg", type=float, default=0.4)
    e.add_argument("--out", default="eval")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("render-slice", help="render one Z layer of a grid as a PNG")
    r.add_argument("grid_file")
    r.add_argument("z_index", type=int)
    r.add_argument("out_image")
    r.set_defaults(func=cmd_render_slice)

    c = sub.add_parser("project-check", help="compare pinhole and distorted projections")
    c.add_argument("clip_dir")
    c.add_argument("frame", type=int)
    c.add_argument("camera_index", type=int)
    c.add_argument("--k1", type=float, help="override the camera's k1")
    c.set_defaults(func=cmd_project_check)
    return p


def main(argv=None):
    if argv is not None:
        argv = [str(a) for a in argv]
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    counter = _ErrorCounter()
    logging.getLogger().addHandler(counter)
    try:
        code = args.func(args)
    except (ConfigError, SpecMismatchError, ValueError) as exc:
        log.error("%s", exc)
        code = EXIT_CONFIG
    except (OSError, MalformedFileError) as exc:
        log.error("%s", exc)
        code = EXIT_IO
    except HumoccError as exc:
        log.error("%s", exc)
        code = EXIT_CONFIG
    finally:
        logging.getLogger().removeHandler(counter)
    if code == EXIT_OK and counter.count:
        code = EXIT_PARTIAL
    return code


if __name__ == "__main__":
    sys.exit(main())
