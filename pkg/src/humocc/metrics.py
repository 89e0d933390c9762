"""Voxel mIoU and ray-based rayIoU for semantic occupancy grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import FREE, UNOBSERVED, ConfusionMatrix, OccupancyGrid
from .errors import OriginOutsideError, SpecMismatchError
from .raycast import HIT, ORIGIN_OUTSIDE, cast_rays

DEFAULT_THRESHOLDS = (1.0, 2.0, 4.0)


@dataclass(frozen=True, eq=False)
class RaySet:
    origins: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        d = np.array(np.reshape(self.directions, (-1, 3)), dtype=np.float64)
        o = np.array(np.reshape(self.origins, (-1, 3)), dtype=np.float64)
        if o.shape[0] not in (1, d.shape[0]):
            raise ValueError("need one shared origin or one origin per ray")
        if d.size and np.max(np.abs(np.linalg.norm(d, axis=1) - 1.0)) >= 1e-9:
            raise ValueError("ray directions must be unit length")
        d.setflags(write=False)
        o.setflags(write=False)
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "origins", o)

    def __len__(self):
        return len(self.directions)

    @classmethod
    def towards(cls, origin, points):
        """Rays from ``origin`` through each of ``points`` (coincident points dropped)."""
        origin = np.asarray(origin, dtype=np.float64).reshape(3)
        v = np.reshape(points, (-1, 3)) - origin
        n = np.linalg.norm(v, axis=1)
        keep = n > 1e-9
        return cls(origin[None, :], v[keep] / n[keep, None])

    @classmethod
    def spherical(cls, origin, rings=40, vfov_deg=59.0, azimuth_step_deg=0.4, center_deg=0.0):
        """Spinning-LiDAR ray pattern: ``rings`` elevations x full azimuth sweep."""
        half = vfov_deg / 2.0
        elev = np.deg2rad(np.linspace(center_deg - half, center_deg + half, rings))
        n_az = int(round(360.0 / azimuth_step_deg))
        az = np.deg2rad(np.arange(n_az) * azimuth_step_deg)
        E, A = np.meshgrid(elev, az, indexing="ij")
        d = np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1)
        return cls(np.asarray(origin, dtype=np.float64)[None, :], d.reshape(-1, 3))


def _check_pair(pred: OccupancyGrid, gt: OccupancyGrid):
    if pred.spec != gt.spec:
        raise SpecMismatchError(f"prediction grid {pred.spec} vs ground truth {gt.spec}")
    if pred.scene is not None and gt.scene is not None and pred.scene != gt.scene:
        raise SpecMismatchError(f"taxonomy {pred.scene.name} vs {gt.scene.name}")


def _num_classes(*grids):
    for g in grids:
        if g.scene is not None:
            return g.taxonomy.num_classes
    k = 0
    for g in grids:
        occ = g.voxels[g.occupied()]
        if occ.size:
            k = max(k, int(occ.max()))
    return k


def update_confusion(cm, pred: OccupancyGrid, gt: OccupancyGrid, mask_unobserved=True):
    """Accumulate voxel counts ``counts[gt][pred]`` into ``cm`` (created if None).

    UNOBSERVED predictions count as FREE. UNOBSERVED ground truth is skipped
    when ``mask_unobserved`` is set and otherwise counted as FREE.
    """
    _check_pair(pred, gt)
    if cm is None:
        cm = ConfusionMatrix.zeros(_num_classes(pred, gt))
    k1 = cm.num_classes + 1
    p = pred.voxels.ravel().astype(np.int64)
    g = gt.voxels.ravel().astype(np.int64)
    if mask_unobserved:
        keep = g != UNOBSERVED
        p, g = p[keep], g[keep]
    p = np.where(p == UNOBSERVED, FREE, p)
    g = np.where(g == UNOBSERVED, FREE, g)
    if (p.size and p.max() >= k1) or (g.size and g.max() >= k1):
        raise SpecMismatchError("class id exceeds the confusion matrix size")
    counts = np.bincount(g * k1 + p, minlength=k1 * k1).reshape(k1, k1)
    return ConfusionMatrix(cm.counts + counts)


def miou(cm: ConfusionMatrix):
    """Per-class IoU for classes 1..K and their mean.

    Classes with no support in either prediction or ground truth get NaN and
    are left out of the mean.
    """
    c = cm.counts.astype(np.float64)
    tp = np.diag(c)
    fp = c.sum(axis=0) - tp
    fn = c.sum(axis=1) - tp
    denom = tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(denom > 0, tp / denom, np.nan)[1:]
    mean = float(np.nanmean(iou)) if np.any(~np.isnan(iou)) else float("nan")
    return iou, mean


def geometric_iou(cm: ConfusionMatrix):
    """Occupied-vs-free IoU collapsed from the confusion matrix."""
    c = cm.counts
    tp = c[1:, 1:].sum()
    fp = c[0, 1:].sum()
    fn = c[1:, 0].sum()
    denom = tp + fp + fn
    return float(tp / denom) if denom else float("nan")


def raycast_first_hit(grid: OccupancyGrid, origin, direction):
    """``(depth, class_id)`` of the first OCCUPIED voxel along the ray, or None on a miss."""
    d = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(d) - 1.0) >= 1e-9:
        raise ValueError("direction must be unit length")
    status, depth, cls = cast_rays(grid, origin, d[None, :])
    if status[0] == ORIGIN_OUTSIDE:
        raise OriginOutsideError("ray origin is outside the grid and the ray never enters it")
    if status[0] != HIT:
        return None
    return float(depth[0]), int(cls[0])


@dataclass
class RayIouReport:
    thresholds: tuple
    per_class: np.ndarray  # thresholds x K, NaN for unsupported classes
    per_threshold: np.ndarray
    mean: float
    tp: np.ndarray = field(repr=False, default=None)
    fp: np.ndarray = field(repr=False, default=None)
    fn: np.ndarray = field(repr=False, default=None)


def first_hits(grid: OccupancyGrid, rays: RaySet):
    """Per-ray first-hit depth and class (class 0 for misses)."""
    status, depth, cls = cast_rays(grid, rays.origins, rays.directions)
    hit = status == HIT
    return np.where(hit, depth, np.inf), np.where(hit, cls, 0)


def ray_counts(pred_depth, pred_cls, gt_depth, gt_cls, threshold, num_classes):
    """TP/FP/FN per class (index 0 unused) for one depth threshold."""
    k1 = num_classes + 1
    with np.errstate(invalid="ignore"):
        close = np.abs(pred_depth - gt_depth) < threshold
    match = (pred_cls > 0) & (pred_cls == gt_cls) & close
    tp = np.bincount(gt_cls[match], minlength=k1)
    fp = np.bincount(pred_cls[(pred_cls > 0) & ~match], minlength=k1)
    fn = np.bincount(gt_cls[(gt_cls > 0) & ~match], minlength=k1)
    tp[0] = fp[0] = fn[0] = 0
    return tp, fp, fn


def ray_iou(pred: OccupancyGrid, gt: OccupancyGrid, rays: RaySet,
            thresholds=DEFAULT_THRESHOLDS) -> RayIouReport:
    """Class-matched rayIoU over first hits, averaged over classes then thresholds."""
    _check_pair(pred, gt)
    k = _num_classes(pred, gt)
    pd, pc = first_hits(pred, rays)
    gd, gc = first_hits(gt, rays)
    thresholds = tuple(float(t) for t in thresholds)
    per_class = np.full((len(thresholds), k), np.nan)
    tps, fps, fns = [], [], []
    for i, tau in enumerate(thresholds):
        tp, fp, fn = ray_counts(pd, pc, gd, gc, tau, k)
        denom = tp + fp + fn
        with np.errstate(invalid="ignore", divide="ignore"):
            per_class[i] = np.where(denom > 0, tp / denom, np.nan)[1:]
        tps.append(tp)
        fps.append(fp)
        fns.append(fn)
    with np.errstate(invalid="ignore"):
        per_threshold = np.array([
            np.nanmean(row) if np.any(~np.isnan(row)) else np.nan for row in per_class])
    mean = float(np.nanmean(per_threshold)) if np.any(~np.isnan(per_threshold)) else float("nan")
    return RayIouReport(thresholds, per_class, per_threshold, mean,
                        np.array(tps), np.array(fps), np.array(fns))


def merge_ray_reports(reports):
    """Pool TP/FP/FN over several frames and recompute the IoUs."""
    reports = list(reports)
    thresholds = reports[0].thresholds
    tp = sum(r.tp for r in reports)
    fp = sum(r.fp for r in reports)
    fn = sum(r.fn for r in reports)
    denom = tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(denom > 0, tp / np.maximum(denom, 1), np.nan)[:, 1:]
    per_threshold = np.array([
        np.nanmean(row) if np.any(~np.isnan(row)) else np.nan for row in per_class])
    mean = float(np.nanmean(per_threshold)) if np.any(~np.isnan(per_threshold)) else float("nan")
    return RayIouReport(thresholds, per_class, per_threshold, mean, tp, fp, fn)


def _fmt(x):
    return "nan" if x is None or np.isnan(x) else f"{x:.6f}"


def format_report(cm: ConfusionMatrix, ray_report: RayIouReport | None, class_names,
                  extra=None):
    """Tab-delimited ``key<TAB>value`` report lines."""
    ious, mean = miou(cm)
    lines = [
        "# humocc evaluation report",
        "# rayIoU counts a ray as a true positive only when both first hits share a class",
        f"voxels\t{cm.total}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key}\t{value}")
    for name, v in zip(class_names, ious):
        lines.append(f"iou/{name}\t{_fmt(v)}")
    lines.append(f"mIoU\t{_fmt(mean)}")
    lines.append(f"geoIoU\t{_fmt(geometric_iou(cm))}")
    if ray_report is not None:
        for tau, row, v in zip(ray_report.thresholds, ray_report.per_class,
                               ray_report.per_threshold):
            for name, c in zip(class_names, row):
                lines.append(f"rayiou@{tau:g}/{name}\t{_fmt(c)}")
            lines.append(f"rayIoU@{tau:g}\t{_fmt(v)}")
        lines.append(f"rayIoU\t{_fmt(ray_report.mean)}")
    return "\n".join(lines) + "\n"


def parse_report(text):
    out = {}
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        key, value = line.split("\t", 1)
        try:
            out[key] = float(value)
        except ValueError:
            out[key] = value
    return out
