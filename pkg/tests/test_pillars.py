import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from humocc.core import PointCloud
from humocc.pillars import FEATURES, pillarize, scatter_to_bev


def test_empty_cloud():
    pg = pillarize(PointCloud.empty())
    assert len(pg) == 0
    bev = scatter_to_bev(pg)
    assert bev.shape == (200, 200, len(FEATURES)) and not bev.data.any()


def test_single_point_at_cell_center():
    pg = pillarize(PointCloud(np.array([[0.05, 0.05, 0.3]]), np.array([0.7])))
    (ij, (n, f)), = pg.as_dict().items()
    assert ij == (100, 100) and n == 1
    assert f[FEATURES.index("count_norm")] == pytest.approx(1 / 32)
    assert f[FEATURES.index("offset_x")] == pytest.approx(0.0, abs=1e-12)
    assert f[FEATURES.index("offset_y")] == pytest.approx(0.0, abs=1e-12)
    assert f[FEATURES.index("mean_intensity")] == pytest.approx(0.7)


def test_two_points_one_pillar():
    pg = pillarize(PointCloud(np.array([[0.0, 0, 0], [0.0, 0, 1]])))
    (_, (n, f)), = pg.as_dict().items()
    assert n == 2
    assert f[FEATURES.index("mean_z")] == 0.5
    assert f[FEATURES.index("min_z")] == 0.0 and f[FEATURES.index("max_z")] == 1.0


def test_overflow_keeps_first_points():
    pts = np.zeros((40, 3))
    pts[:, 2] = np.arange(40)
    pg = pillarize(PointCloud(pts), max_points_per_pillar=32)
    (_, (n, f)), = pg.as_dict().items()
    assert n == 32 and f[FEATURES.index("max_z")] == 31


def test_one_pillar_scatter():
    pg = pillarize(PointCloud(np.array([[-9.95, 3.05, 0.0]])))
    bev = scatter_to_bev(pg)
    nz = np.argwhere(bev.data.any(axis=-1))
    assert nz.tolist() == [[0, 130]]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 400), st.integers(0, 2**31))
def test_scatter_nonzero_cells_equals_occupied_cells(n, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-12, 12, size=(n, 3))
    pg = pillarize(PointCloud(pts, rng.uniform(0.1, 1, n)))
    bev = scatter_to_bev(pg)
    # brute force: distinct in-range floor(xy / cell)
    cells = set()
    for x, y, _ in pts:
        i, j = int(np.floor((x + 10) / 0.1)), int(np.floor((y + 10) / 0.1))
        if 0 <= i < 200 and 0 <= j < 200:
            cells.add((i, j))
    assert int(bev.data[..., FEATURES.index("count_norm")].astype(bool).sum()) == len(cells)
    assert pg.counts.sum() == sum(
        1 for x, y, _ in pts if -10 <= x < 10 and -10 <= y < 10
        and int(np.floor((x + 10) / 0.1)) < 200 and int(np.floor((y + 10) / 0.1)) < 200)
