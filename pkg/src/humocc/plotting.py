"""Figure rendering for evaluation reports and grid slices."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

from .core import FREE, UNOBSERVED, OccupancyGrid  # noqa: E402

BACKGROUND = (255, 255, 255)
UNOBSERVED_RGB = (160, 160, 160)
CLASS_RGB = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212),
    (0, 128, 128), (170, 110, 40), (128, 0, 0), (0, 0, 128), (128, 128, 0),
)


def palette():
    """256-entry RGB palette indexed directly by voxel value."""
    pal = np.zeros((256, 3), np.uint8)
    pal[FREE] = BACKGROUND
    for k, rgb in enumerate(CLASS_RGB, start=1):
        pal[k] = rgb
    pal[UNOBSERVED] = UNOBSERVED_RGB
    return pal


def slice_image(grid: OccupancyGrid, z_index) -> Image.Image:
    """Paletted image of one Z layer: width = X cells, height = Y cells, +y up.

    Voxel ``(ix, iy)`` lands on pixel ``(ix, ny - 1 - iy)``.
    """
    nx, ny, nz = grid.spec.dims
    if not 0 <= z_index < nz:
        raise IndexError(f"z index {z_index} outside 0..{nz - 1}")
    layer = grid.voxels[:, :, z_index]  # (X, Y)
    img = Image.fromarray(np.ascontiguousarray(layer.T[::-1]), mode="P")
    img.putpalette(palette().ravel().tolist())
    return img


def save_slice(grid: OccupancyGrid, z_index, path):
    slice_image(grid, z_index).save(path, format="PNG", optimize=False)


def save_report_figure(path, class_names, ious, ray_report=None, title="evaluation"):
    """Bar chart of per-class voxel IoU, with per-class rayIoU per threshold if given."""
    names = list(class_names)
    x = np.arange(len(names))
    series = [("voxel IoU", np.nan_to_num(np.asarray(ious, float)))]
    if ray_report is not None:
        for tau, row in zip(ray_report.thresholds, ray_report.per_class):
            series.append((f"rayIoU@{tau:g}m", np.nan_to_num(row)))
    width = 0.8 / len(series)
    fig, ax = plt.subplots(figsize=(max(6.0, 0.6 * len(names) + 2), 4.0), dpi=100)
    for k, (label, vals) in enumerate(series):
        ax.bar(x + (k - (len(series) - 1) / 2) * width, vals, width, label=label)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=45, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("IoU")
    ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    # no Software/date metadata so repeated runs give identical bytes
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
