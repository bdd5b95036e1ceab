"""Benchmark registry: manufactured data cross-checked by finite differences."""

import numpy as np
import pytest

from mipinn.problems import (
    BENCHMARK_NAMES,
    Box,
    Disk,
    get_benchmark,
    manufacture_source,
)


def rng_for(seed):
    return np.random.Generator(np.random.Philox(key=seed))


def interior_points(bench, n, seed, side=None):
    """Random off-interface points inside the domain with their region sign."""
    rng = rng_for(seed)
    lo, hi = bench.spec.domain.bounding_box()
    pts, ts, signs = [], [], []
    while sum(len(p) for p in pts) < n:
        x = rng.uniform(lo, hi, size=(4 * n, bench.spec.spatial_dim))
        t = rng.uniform(0, bench.spec.t_end, size=4 * n)
        keep = bench.spec.domain.contains(x)
        if bench.geometry.analytic is not None:
            phi = bench.geometry.analytic.phi(x, t)
            keep &= np.abs(phi) > 1e-3
            sgn = np.sign(phi)
            if side is not None:
                keep &= sgn == side
        else:
            phi0 = bench.geometry.initial.phi0(x)
            keep &= np.abs(phi0) > 1e-3
            sgn = np.sign(phi0)
            t = np.zeros_like(t)  # without an analytic level set, classify at t=0
            if side is not None:
                keep &= sgn == side
        pts.append(x[keep]); ts.append(t[keep]); signs.append(sgn[keep])
    x = np.concatenate(pts)[:n]
    return x, np.concatenate(ts)[:n], np.concatenate(signs)[:n]


@pytest.mark.parametrize("name", BENCHMARK_NAMES)
def test_registry_builds(name):
    bench = get_benchmark(name)
    assert bench.spec.name == name
    assert bench.spec.spatial_dim == bench.spec.domain.dim
    if bench.spec.kind == "oseen":
        assert bench.exact.n_components == bench.spec.spatial_dim + 1


def test_unknown_benchmark_rejected():
    with pytest.raises(KeyError, match="unknown benchmark"):
        get_benchmark("ex99")


@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3"])
def test_analytic_interface_points_lie_on_zero_set(name):
    bench = get_benchmark(name)
    rng = rng_for(1)
    for t in (0.0, 0.37, 1.0):
        pts = bench.geometry.analytic_points(t, 50, rng)
        phi = bench.geometry.analytic.phi(pts, np.full(50, t))
        assert np.max(np.abs(phi)) < 1e-10


@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3"])
def test_level_set_is_advected_by_velocity(name):
    # material derivative of phi along the interface velocity vanishes
    bench = get_benchmark(name)
    x, t, _ = interior_points(bench, 40, seed=2)
    ls = bench.geometry.analytic
    vel = bench.spec.velocity(x, t)
    mat = ls.dt(x, t) + np.einsum("bd,bd->b", vel, ls.grad(x, t))
    assert np.max(np.abs(mat)) < 1e-10


@pytest.mark.parametrize("name", BENCHMARK_NAMES)
def test_source_is_consistent_with_exact_solution(name):
    # independent check of the manufactured source: all derivatives replaced
    # by central differences of the exact value closure
    bench = get_benchmark(name)
    spec, exact = bench.spec, bench.exact
    x, t, sgn = interior_points(bench, 30, seed=3)
    f = spec.source(x, t, sgn)
    h = 1e-5
    dt_fd = (exact.value(x, t + h, sgn) - exact.value(x, t - h, sgn)) / (2 * h)
    d = spec.spatial_dim
    grad_fd = np.zeros((x.shape[0], d, exact.n_components))
    lap_fd = np.zeros_like(dt_fd)
    f0 = exact.value(x, t, sgn)
    for i in range(d):
        xp = x.copy(); xp[:, i] += h
        xm = x.copy(); xm[:, i] -= h
        fp, fm = exact.value(xp, t, sgn), exact.value(xm, t, sgn)
        grad_fd[:, i] = (fp - fm) / (2 * h)
        lap_fd += (fp - 2 * f0 + fm) / h**2
    vel = spec.velocity(x, t)
    coeff = np.where(sgn > 0, spec.coeff_plus, spec.coeff_minus)[:, None]
    if spec.kind == "parabolic":
        f_fd = dt_fd + np.einsum("bd,bdf->bf", vel, grad_fd) - coeff * lap_fd
    else:
        f_fd = (dt_fd[:, :d] + np.einsum("bd,bdf->bf", vel, grad_fd[:, :, :d])
                - coeff * lap_fd[:, :d] + grad_fd[:, :, d])
    scale = np.maximum(np.abs(f_fd), 1.0)
    assert np.max(np.abs(f - f_fd) / scale) < 5e-5


@pytest.mark.parametrize("name", ["ex3", "ex4"])
def test_oseen_exact_velocity_is_divergence_free(name):
    bench = get_benchmark(name)
    x, t, sgn = interior_points(bench, 40, seed=4)
    for side in (+1.0, -1.0):
        grad = bench.exact.grad(x, t, side)
        div = sum(grad[:, i, i] for i in range(bench.spec.spatial_dim))
        assert np.max(np.abs(div)) < 1e-12


def test_ex1_jumps_are_zero():
    bench = get_benchmark("ex1")
    rng = rng_for(5)
    t = 0.42
    pts = bench.geometry.analytic_points(t, 60, rng)
    tv = np.full(60, t)
    hd = bench.spec.jump_hd(pts, tv)
    assert np.max(np.abs(hd)) < 1e-12
    grads = bench.geometry.analytic.grad(pts, tv)
    normals = grads / np.linalg.norm(grads, axis=1, keepdims=True)
    hn = bench.spec.jump_hn(pts, tv, normals)
    assert np.max(np.abs(hn)) < 1e-10
    assert bench.spec.jump_hd_kind == "zero"


@pytest.mark.parametrize("name", ["ex2", "ex3"])
def test_value_jump_is_nonzero(name):
    bench = get_benchmark(name)
    rng = rng_for(6)
    pts = bench.geometry.analytic_points(0.3, 40, rng)
    hd = bench.spec.jump_hd(pts, np.full(40, 0.3))
    assert np.max(np.abs(hd)) > 1e-3
    assert bench.spec.jump_hd_kind == "nonzero"


def test_initial_level_set_derivatives_match_fd():
    for name in BENCHMARK_NAMES:
        bench = get_benchmark(name)
        init = bench.geometry.initial
        rng = rng_for(7)
        lo, hi = bench.spec.domain.bounding_box()
        x = rng.uniform(lo, hi, size=(10, bench.spec.spatial_dim))
        if name == "ex3":
            x = x[np.linalg.norm(x - 0.5, axis=1) > 0.05]  # polar chart singular at center
        h = 1e-6
        g = init.grad0(x)
        hess = init.hess0(x)
        for i in range(bench.spec.spatial_dim):
            xp = x.copy(); xp[:, i] += h
            xm = x.copy(); xm[:, i] -= h
            np.testing.assert_allclose(g[:, i], (init.phi0(xp) - init.phi0(xm)) / (2 * h),
                                       rtol=1e-4, atol=1e-6)
            np.testing.assert_allclose(hess[:, i, :], (init.grad0(xp) - init.grad0(xm)) / (2 * h),
                                       rtol=1e-3, atol=5e-4)


def test_manufacture_source_rejects_bad_region():
    bench = get_benchmark("ex1")
    rng = rng_for(8)
    t = 0.25
    on_gamma = bench.geometry.analytic_points(t, 5, rng)
    with pytest.raises(ValueError, match="interface"):
        manufacture_source(bench, on_gamma, np.full(5, t), +1.0)
    x, tv, sgn = interior_points(bench, 10, seed=9)
    with pytest.raises(ValueError, match="region"):
        manufacture_source(bench, x, tv, -sgn)
    out = manufacture_source(bench, x, tv, sgn)
    assert out.shape == (10, 1)


def test_domain_shapes():
    box = Box((-1, -1), (1, 1))
    assert box.contains(np.array([[0.0, 0.0], [1.5, 0.0]])).tolist() == [True, False]
    disk = Disk((0.5, 0.5), 0.5)
    assert disk.contains(np.array([[0.5, 0.9], [0.5, 1.1]])).tolist() == [True, False]
    with pytest.raises(ValueError):
        Box((1, 0), (0, 1))
    with pytest.raises(ValueError):
        Disk((0, 0), -1.0)
