"""Fixed (non-learned) LiDAR pillarization and BEV scattering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BevFeatureMap, PointCloud

FEATURES = ("mean_x", "mean_y", "mean_z", "mean_intensity", "count_norm",
            "offset_x", "offset_y", "min_z", "max_z")
FEATURE_DIM = len(FEATURES)

DEFAULT_CELL = 0.1
DEFAULT_MAX_POINTS = 32


@dataclass(frozen=True, eq=False)
class PillarGrid:
    """Non-empty pillars only: ``coords[m] = (i, j)`` with ``counts[m] >= 1``."""

    extent: tuple
    cell: float
    shape: tuple
    coords: np.ndarray
    counts: np.ndarray
    features: np.ndarray

    @property
    def feature_dim(self):
        return self.features.shape[1]

    def __len__(self):
        return len(self.counts)

    def as_dict(self):
        return {(int(i), int(j)): (int(n), f)
                for (i, j), n, f in zip(self.coords, self.counts, self.features)}


def pillarize(cloud: PointCloud, cell=DEFAULT_CELL, extent=((-10.0, 10.0), (-10.0, 10.0)),
              max_points_per_pillar=DEFAULT_MAX_POINTS, z_range=None) -> PillarGrid:
    if cell <= 0:
        raise ValueError("cell size must be positive")
    (x0, x1), (y0, y1) = extent
    nx = int(round((x1 - x0) / cell))
    ny = int(round((y1 - y0) / cell))
    pts = cloud.points
    inten = cloud.intensity
    ij = np.floor((pts[:, :2] - (x0, y0)) / cell).astype(np.int64)
    keep = (ij[:, 0] >= 0) & (ij[:, 0] < nx) & (ij[:, 1] >= 0) & (ij[:, 1] < ny)
    if z_range is not None:
        keep &= (pts[:, 2] >= z_range[0]) & (pts[:, 2] < z_range[1])
    pts, inten, ij = pts[keep], inten[keep], ij[keep]
    lin = ij[:, 0] * ny + ij[:, 1]

    # drop overflow points per pillar, keeping input order
    order = np.argsort(lin, kind="stable")
    sorted_lin = lin[order]
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_lin)) + 1] if len(lin) else np.zeros(0, int)
    group_start = np.repeat(starts, np.diff(np.r_[starts, len(lin)]))
    rank = np.arange(len(lin)) - group_start
    kept = order[rank < max_points_per_pillar]
    pts, inten, lin = pts[kept], inten[kept], lin[kept]

    cells, inv, counts = np.unique(lin, return_inverse=True, return_counts=True)
    m = len(cells)
    feats = np.zeros((m, FEATURE_DIM))
    if m:
        for axis in range(3):
            feats[:, axis] = np.bincount(inv, weights=pts[:, axis], minlength=m) / counts
        feats[:, 3] = np.bincount(inv, weights=inten, minlength=m) / counts
        feats[:, 4] = counts / max_points_per_pillar
        ci, cj = np.divmod(cells, ny)
        feats[:, 5] = feats[:, 0] - (x0 + (ci + 0.5) * cell)
        feats[:, 6] = feats[:, 1] - (y0 + (cj + 0.5) * cell)
        zmin = np.full(m, np.inf)
        zmax = np.full(m, -np.inf)
        np.minimum.at(zmin, inv, pts[:, 2])
        np.maximum.at(zmax, inv, pts[:, 2])
        feats[:, 7] = zmin
        feats[:, 8] = zmax
        coords = np.stack([ci, cj], axis=1)
    else:
        coords = np.zeros((0, 2), np.int64)
    return PillarGrid(((x0, x1), (y0, y1)), float(cell), (nx, ny), coords,
                      counts.astype(np.int64), feats)


def scatter_to_bev(pg: PillarGrid, timestamp=0.0) -> BevFeatureMap:
    nx, ny = pg.shape
    data = np.zeros((nx, ny, pg.feature_dim))
    if len(pg):
        data[pg.coords[:, 0], pg.coords[:, 1]] = pg.features
    return BevFeatureMap(pg.extent, data, timestamp)
