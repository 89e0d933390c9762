import numpy as np
import pytest

from humocc.core import GridSpec, OccupancyGrid
from humocc.errors import OriginOutsideError
from humocc.metrics import raycast_first_hit
from humocc.raycast import HIT, MISS, ORIGIN_OUTSIDE, cast_rays

from oracles import first_hit_bruteforce, random_grid, small_spec, traversed_bruteforce


def _unit(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def test_empty_grid_misses():
    g = OccupancyGrid.free(GridSpec())
    assert raycast_first_hit(g, (0, 0, 0), (1.0, 0, 0)) is None


def test_axis_ray_default_grid():
    spec = GridSpec()
    vox = np.zeros(spec.dims, np.uint8)
    vox[100, 100, 15] = 6
    g = OccupancyGrid(spec, vox)
    eps = 1e-3
    depth, cls = raycast_first_hit(g, (-10 + eps, 0.05, 0.05), (1.0, 0, 0))
    assert depth == pytest.approx(10.0 - eps, abs=1e-9)
    assert cls == 6


def test_origin_inside_occupied():
    spec = small_spec()
    vox = np.zeros(spec.dims, np.uint8)
    vox[2, 3, 1] = 2
    g = OccupancyGrid(spec, vox)
    assert raycast_first_hit(g, (2.5, 3.5, 1.5), (0, 0, 1.0)) == (0.0, 2)


def test_origin_outside_and_entering():
    spec = small_spec()
    vox = np.zeros(spec.dims, np.uint8)
    vox[0, 4, 2] = 1
    g = OccupancyGrid(spec, vox)
    depth, cls = raycast_first_hit(g, (-3.0, 4.5, 2.5), (1.0, 0, 0))
    assert depth == pytest.approx(3.0) and cls == 1
    with pytest.raises(OriginOutsideError):
        raycast_first_hit(g, (-3.0, 4.5, 2.5), (-1.0, 0, 0))
    status, _, _ = cast_rays(g, (-3.0, 4.5, 2.5), np.array([[-1.0, 0, 0], [0, 1.0, 0]]))
    assert list(status) == [ORIGIN_OUTSIDE, ORIGIN_OUTSIDE]


def test_matches_bruteforce(rng):
    spec = small_spec()
    for _ in range(30):
        g = random_grid(rng, spec, p_occ=0.08)
        origin = rng.uniform(0.2, [7.8, 7.8, 3.8])
        if g.occupied()[tuple((origin // 1).astype(int))]:
            continue
        dirs = _unit(rng, 40)
        status, depth, cls = cast_rays(g, origin, dirs)
        for k, d in enumerate(dirs):
            ref = first_hit_bruteforce(g, origin, d)
            if ref is None:
                assert status[k] == MISS
            else:
                assert status[k] == HIT
                assert depth[k] == pytest.approx(ref[0], abs=1e-9)
                assert cls[k] == ref[1]


def test_traversal_matches_bruteforce(rng):
    spec = small_spec(6, 6, 3)
    for _ in range(10):
        g = random_grid(rng, spec, p_occ=0.05)
        origin = rng.uniform(0.2, [5.8, 5.8, 2.8])
        if g.occupied()[tuple((origin // 1).astype(int))]:
            continue
        d = _unit(rng, 1)
        status, depth, _, seen = cast_rays(g, origin, d, mark_traversed=True)
        t_stop = depth[0] if status[0] == HIT else np.inf
        ref = traversed_bruteforce(g, origin, d[0], t_stop)
        assert np.array_equal(seen, ref)


def test_ray_stops_at_hit_cell_50():
    spec = GridSpec()
    vox = np.zeros(spec.dims, np.uint8)
    vox[50, 100, 15] = 6
    g = OccupancyGrid(spec, vox)
    _, _, _, seen = cast_rays(g, (-9.95, 0.05, 0.05), np.array([[1.0, 0, 0]]),
                              mark_traversed=True)
    assert seen[:50, 100, 15].all()
    assert not seen[50:, 100, 15].any()
    assert seen.sum() == 50
