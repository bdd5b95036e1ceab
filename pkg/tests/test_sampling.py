"""Direct sampling properties: containment, boundary exactness, interface
placement, stream independence, and the points CSV round trip."""

import numpy as np
import pytest

from mipinn.problems import get_benchmark
from mipinn.sampling import (evaluation_grid, interface_time_grid,
                             load_points_csv, make_rng, sample_boundary,
                             sample_initial, sample_interface, sample_interior,
                             save_points_csv)


@pytest.fixture(scope="module")
def bench():
    return get_benchmark("ex1")


def test_interior_containment(bench):
    spec = bench.spec
    pts = sample_interior(spec.domain, spec.t_end, 500, make_rng(0, 0))
    assert pts.x.shape == (500, spec.spatial_dim)
    assert np.all(spec.domain.contains(pts.x))
    assert np.all((pts.t >= 0) & (pts.t <= spec.t_end))


def test_boundary_points_exactly_on_faces(bench):
    spec = bench.spec
    pts = sample_boundary(spec.domain, spec.t_end, 400, make_rng(0, 1))
    lo, hi = spec.domain.bounding_box()
    on_face = np.zeros(400, dtype=bool)
    for axis in range(spec.spatial_dim):
        on_face |= (pts.x[:, axis] == lo[axis]) | (pts.x[:, axis] == hi[axis])
    assert np.all(on_face)
    assert np.all(spec.domain.contains(pts.x))
    # both faces of each axis get hit
    for axis in range(spec.spatial_dim):
        assert np.any(pts.x[:, axis] == lo[axis])
        assert np.any(pts.x[:, axis] == hi[axis])


def test_interface_samples_on_moving_front(bench):
    times = interface_time_grid(bench.spec.t_end, 6)
    ifc = sample_interface(bench.geometry, times, 25, make_rng(0, 2))
    assert ifc.x.shape == (150, 2)
    phi = bench.geometry.analytic.phi(ifc.x, ifc.t)
    assert np.max(np.abs(phi)) < 1e-12
    norms = np.linalg.norm(ifc.normals, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-12)


def test_interface_time_grid_validation():
    with pytest.raises(ValueError, match="two"):
        interface_time_grid(1.0, 1)
    grid = interface_time_grid(0.8, 5)
    assert grid[0] == 0.0 and grid[-1] == 0.8 and len(grid) == 5


def test_streams_are_independent():
    a1 = make_rng(3, 0).uniform(size=8)
    a2 = make_rng(3, 0).uniform(size=8)
    b = make_rng(3, 1).uniform(size=8)
    c = make_rng(4, 0).uniform(size=8)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)


def test_evaluation_grid_layout(bench):
    spec = bench.spec
    x, t = evaluation_grid(spec.domain, 5, 3, spec.t_end)
    assert x.shape == (75, 2) and t.shape == (75,)
    # time-major: first block is t=0, same spatial lattice repeats per time
    assert np.all(t[:25] == 0.0) and np.isclose(t[-1], spec.t_end)
    assert np.array_equal(x[:25], x[25:50])
    lo, hi = spec.domain.bounding_box()
    assert np.min(x[:, 0]) == lo[0] and np.max(x[:, 0]) == hi[0]


def test_points_csv_roundtrip(tmp_path, bench):
    spec = bench.spec
    pts = sample_interior(spec.domain, spec.t_end, 40, make_rng(1, 0))
    path = tmp_path / "pts.csv"
    save_points_csv(path, pts.x, pts.t)
    x2, t2 = load_points_csv(path)
    assert np.array_equal(x2, pts.x)
    assert np.array_equal(t2, pts.t)
    assert open(path).readline().strip() == "x1,x2,t"
