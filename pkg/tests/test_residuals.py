"""Residual-system tests: oracle closure, Jacobians vs finite differences,
block structure, normalization, and near-interface exclusion."""

import numpy as np
import pytest

from mipinn.extension import ABS_LEVEL_SET, INDICATOR
from mipinn.network import init_mlp
from mipinn.problems import get_benchmark
from mipinn.residuals import (ExactFieldOracle, ResidualBlock, ResidualSystem,
                              VanillaAssembler, XiPinnAssembler)
from mipinn.sampling import (InteriorSamples, interface_time_grid, make_rng,
                             sample_boundary, sample_initial, sample_interface,
                             sample_interior)


def make_samples(bench, rng, n_int=60, n_bnd=24, n_ini=20, n_times=3, n_per_time=6):
    spec = bench.spec
    interior = sample_interior(spec.domain, spec.t_end, n_int, rng)
    boundary = sample_boundary(spec.domain, spec.t_end, n_bnd, rng)
    initial = sample_initial(spec.domain, n_ini, rng)
    times = interface_time_grid(spec.t_end, n_times)
    interface = sample_interface(bench.geometry, times, n_per_time, rng)
    return interior, boundary, initial, interface


def build_assembler(name, layer_dims, rng, cls=XiPinnAssembler, **kw):
    bench = get_benchmark(name)
    samples = make_samples(bench, rng, **{k: v for k, v in kw.items()
                                          if k.startswith("n_")})
    extra = {k: v for k, v in kw.items() if not k.startswith("n_")}
    asm = cls(bench, bench.geometry.analytic, *samples, layer_dims, **extra)
    return bench, asm


# ---------------------------------------------------------------------------
# exact-solution oracle: manufactured data closes every block


@pytest.mark.parametrize("name,tol", [("ex1", 1e-8), ("ex2", 1e-8), ("ex3", 1e-8)])
def test_oracle_residuals_close(name, tol):
    rng = make_rng(11, 0)
    bench = get_benchmark(name)
    samples = make_samples(bench, rng, n_int=80, n_bnd=30, n_ini=24,
                           n_times=4, n_per_time=8)
    dims = (bench.spec.spatial_dim + 2, 8,
            1 if bench.spec.kind == "parabolic" else bench.spec.spatial_dim + 1)
    asm = XiPinnAssembler(bench, bench.geometry.analytic, *samples, dims)
    system = asm.oracle_system(bench.exact)
    worst = system.max_abs_residual()
    assert worst <= tol, f"{name}: worst oracle residual {worst:.3e}"
    for block in system.blocks:
        assert np.max(np.abs(block.residual)) <= tol, block.name


def test_oracle_accepts_prebuilt_oracle():
    rng = make_rng(12, 0)
    bench, asm = build_assembler("ex1", (4, 6, 1), rng)
    s1 = asm.oracle_system(bench.exact)
    s2 = asm.oracle_system(ExactFieldOracle(bench.exact))
    np.testing.assert_array_equal(s1.stacked()[0], s2.stacked()[0])


def test_oracle_detects_wrong_solution():
    # a perturbed solution must not close the system
    rng = make_rng(13, 0)
    bench, asm = build_assembler("ex1", (4, 6, 1), rng)

    class Offset:
        def __init__(self, exact):
            self.e = exact

        def interior(self, x, t, sgn):
            v, dt, g, lap = ExactFieldOracle(self.e).interior(x, t, sgn)
            return v + 0.1, dt, g, lap

        def values(self, x, t, sgn):
            return self.e.value(x, t, sgn) + 0.1

        def side(self, x, t, side):
            v, g = ExactFieldOracle(self.e).side(x, t, side)
            return v + 0.1, g

    system = asm.oracle_system(Offset(bench.exact))
    assert system.block_losses()["boundary"] > 1e-3


# ---------------------------------------------------------------------------
# block structure


def test_block_structure_abs_rule():
    rng = make_rng(21, 0)
    bench, asm = build_assembler("ex1", (4, 6, 1), rng)
    assert asm.rule == ABS_LEVEL_SET
    theta = init_mlp((4, 6, 1), seed=0).to_flat()
    names = [b.name for b in asm.system(theta).blocks]
    assert names == ["pde", "boundary", "initial", "flux_jump"]


def test_block_structure_indicator_rule_oseen():
    rng = make_rng(22, 0)
    bench, asm = build_assembler("ex3", (4, 6, 3), rng)
    assert asm.rule == INDICATOR
    theta = init_mlp((4, 6, 3), seed=0).to_flat()
    sys_ = asm.system(theta)
    names = [b.name for b in sys_.blocks]
    assert names == ["momentum", "divergence", "boundary", "initial",
                     "flux_jump", "value_jump"]
    d = bench.spec.spatial_dim
    n_int = len(asm.int_x)
    n_g = len(asm.ifc_xt[0])
    by = {b.name: len(b.residual) for b in sys_.blocks}
    assert by["momentum"] == d * n_int
    assert by["divergence"] == n_int
    assert by["boundary"] == (d + 1) * len(asm.bnd_xt[0])
    assert by["initial"] == d * len(asm.ini_xt[0])
    assert by["flux_jump"] == d * n_g
    assert by["value_jump"] == d * n_g


def test_rule_override_forces_value_jump():
    # forcing the indicator rule on a zero-jump problem adds the value block
    rng = make_rng(23, 0)
    bench, asm = build_assembler("ex1", (4, 6, 1), rng, rule=INDICATOR)
    theta = init_mlp((4, 6, 1), seed=1).to_flat()
    names = [b.name for b in asm.system(theta).blocks]
    assert "value_jump" in names
    # and its data is the zero jump
    np.testing.assert_allclose(asm.ifc_hd, 0.0, atol=1e-12)


def test_network_shape_validation():
    rng = make_rng(24, 0)
    bench = get_benchmark("ex1")
    samples = make_samples(bench, rng)
    with pytest.raises(ValueError, match="inputs"):
        XiPinnAssembler(bench, bench.geometry.analytic, *samples, (3, 6, 1))
    bench3 = get_benchmark("ex3")
    samples3 = make_samples(bench3, rng)
    with pytest.raises(ValueError, match="outputs"):
        XiPinnAssembler(bench3, bench3.geometry.analytic, *samples3, (4, 6, 1))


# ---------------------------------------------------------------------------
# Jacobians against finite differences


def fd_jacobian(fn, theta, h=1e-6):
    r0 = fn(theta)
    J = np.empty((len(r0), len(theta)))
    for k in range(len(theta)):
        tp = theta.copy()
        tp[k] += h
        tm = theta.copy()
        tm[k] -= h
        J[:, k] = (fn(tp) - fn(tm)) / (2 * h)
    return J


@pytest.mark.parametrize("name,dims", [("ex1", (4, 8, 1)), ("ex3", (4, 7, 3))])
def test_jacobian_matches_fd(name, dims):
    rng = make_rng(31, 0)
    bench, asm = build_assembler(name, dims, rng,
                                 n_int=25, n_bnd=10, n_ini=8,
                                 n_times=2, n_per_time=4)
    theta = init_mlp(dims, seed=3).to_flat()
    r, J = asm.residuals_and_jacobian(theta)
    np.testing.assert_array_equal(r, asm.residuals(theta))
    J_fd = fd_jacobian(asm.residuals, theta)
    err = np.linalg.norm(J - J_fd) / np.linalg.norm(J)
    assert err < 1e-6, f"relative Jacobian error {err:.3e}"


def test_vanilla_jacobian_matches_fd():
    rng = make_rng(32, 0)
    bench = get_benchmark("ex1")
    samples = make_samples(bench, rng, n_int=25, n_bnd=10, n_ini=8,
                           n_times=2, n_per_time=4)
    asm = VanillaAssembler(bench, bench.geometry.analytic, *samples, (3, 8, 1))
    theta = init_mlp((3, 8, 1), seed=4).to_flat()
    r, J = asm.residuals_and_jacobian(theta)
    J_fd = fd_jacobian(asm.residuals, theta)
    err = np.linalg.norm(J - J_fd) / np.linalg.norm(J)
    assert err < 1e-6
    names = [b.name for b in asm.system(theta).blocks]
    assert names == ["pde", "boundary", "initial", "flux_jump"]


def test_vanilla_rejects_oseen():
    rng = make_rng(33, 0)
    bench = get_benchmark("ex3")
    samples = make_samples(bench, rng)
    with pytest.raises(ValueError, match="parabolic"):
        VanillaAssembler(bench, bench.geometry.analytic, *samples, (3, 8, 1))


# ---------------------------------------------------------------------------
# normalization and weights


def test_mean_vs_sum_normalization():
    rng = make_rng(41, 0)
    bench, asm = build_assembler("ex1", (4, 6, 1), rng)
    theta = init_mlp((4, 6, 1), seed=5).to_flat()
    sys_mean = asm.system(theta)
    raw = {b.name: b.residual for b in sys_mean.blocks}
    # mean mode: loss is the average square per block, summed over blocks
    expect = sum(np.mean(v ** 2) for v in raw.values())
    assert np.isclose(sys_mean.loss(), expect, rtol=1e-12)
    sys_sum = ResidualSystem(blocks=sys_mean.blocks, mode="sum")
    expect_sum = sum(np.sum(v ** 2) for v in raw.values())
    assert np.isclose(sys_sum.loss(), expect_sum, rtol=1e-12)


def test_block_weights_scale_losses():
    rng = make_rng(42, 0)
    base_rng_state = make_rng(42, 0)
    bench = get_benchmark("ex1")
    samples = make_samples(bench, rng)
    dims = (4, 6, 1)
    asm1 = XiPinnAssembler(bench, bench.geometry.analytic, *samples, dims)
    asm2 = XiPinnAssembler(bench, bench.geometry.analytic, *samples, dims,
                           weights={"boundary": 4.0})
    theta = init_mlp(dims, seed=6).to_flat()
    l1 = asm1.system(theta).block_losses()
    l2 = asm2.system(theta).block_losses()
    assert np.isclose(l2["boundary"], 4.0 * l1["boundary"], rtol=1e-12)
    assert np.isclose(l2["pde"], l1["pde"], rtol=1e-12)
    with pytest.raises(ValueError, match="nonnegative"):
        XiPinnAssembler(bench, bench.geometry.analytic, *samples, dims,
                        weights={"pde": -1.0}).system(theta)


def test_unknown_mode_rejected():
    with pytest.raises(ValueError, match="mode"):
        ResidualSystem(blocks=[ResidualBlock("a", np.ones(3))], mode="median")


# ---------------------------------------------------------------------------
# near-interface exclusion


def test_interior_points_on_interface_are_dropped():
    rng = make_rng(51, 0)
    bench = get_benchmark("ex1")
    spec = bench.spec
    t_on = 0.3
    on_pts = bench.geometry.analytic_points(t_on, 5, rng)
    off = sample_interior(spec.domain, spec.t_end, 30, rng)
    x = np.vstack([off.x, on_pts])
    t = np.concatenate([off.t, np.full(len(on_pts), t_on)])
    interior = InteriorSamples(x=x, t=t)
    _, boundary, initial, interface = make_samples(bench, rng)
    asm = XiPinnAssembler(bench, bench.geometry.analytic, interior,
                          boundary, initial, interface, (4, 6, 1))
    assert asm.n_dropped == len(on_pts)
    assert len(asm.int_x) == len(off.x)
    theta = init_mlp((4, 6, 1), seed=7).to_flat()
    pde = next(b for b in asm.system(theta).blocks if b.name == "pde")
    assert len(pde.residual) == len(off.x)


def test_point_sets_cover_all_blocks():
    rng = make_rng(52, 0)
    bench, asm = build_assembler("ex3", (4, 6, 3), rng)
    theta = init_mlp((4, 6, 3), seed=8).to_flat()
    sys_ = asm.system(theta)
    ps = asm.point_sets()
    assert set(ps) == {b.name for b in sys_.blocks}
    for b in sys_.blocks:
        x, t, rows = ps[b.name]
        assert len(b.residual) == rows * len(x)
        assert len(x) == len(t)
