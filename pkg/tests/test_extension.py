"""Chain-rule assembly checked against finite differences of the composite."""

import numpy as np
import pytest

from mipinn.extension import (
    ABS_LEVEL_SET,
    INDICATOR,
    CompositeDerivs,
    assemble_pde_derivatives,
    composite_spatial_gradient,
    extended_inputs,
    extension_rule_for,
    interface_side_z,
    pde_jet_request,
    z_info,
)
from mipinn.network import JetRequest, forward_jet, init_mlp


D = 2


def smooth_z(x, t):
    return np.sin(x[:, 0] + 2 * t)


def smooth_zinfo(x, t):
    c = np.cos(x[:, 0] + 2 * t)
    grad = np.zeros((x.shape[0], D))
    grad[:, 0] = c
    return grad, 2 * c, -np.sin(x[:, 0] + 2 * t)


def composite_value(params, x, t):
    z = smooth_z(x, t)
    return forward_jet(params, extended_inputs(x, t, z)).value


def assembled(params, x, t, with_params=False):
    z = smooth_z(x, t)
    grad, dt, lap = smooth_zinfo(x, t)
    zinfo_like = z_info(ABS_LEVEL_SET, np.ones_like(z), grad, dt, lap)
    # reuse the container but with the smooth surrogate values
    zinfo_like.value = z
    jet = forward_jet(params, extended_inputs(x, t, z), pde_jet_request(D, with_params))
    return assemble_pde_derivatives(jet, zinfo_like, D)


def test_rule_selection():
    assert extension_rule_for("zero") == ABS_LEVEL_SET
    assert extension_rule_for("nonzero") == INDICATOR
    with pytest.raises(ValueError):
        extension_rule_for("sometimes")


def test_composite_time_derivative_matches_fd():
    params = init_mlp([D + 2, 12, 12, 1], seed=3)
    rng = np.random.Generator(np.random.Philox(key=8))
    x = rng.uniform(-1, 1, size=(9, D))
    t = rng.uniform(0, 1, size=9)
    out = assembled(params, x, t)
    h = 1e-5
    fd = (composite_value(params, x, t + h) - composite_value(params, x, t - h)) / (2 * h)
    np.testing.assert_allclose(out.dt, fd, rtol=1e-4, atol=1e-8)


def test_composite_gradient_and_laplacian_match_fd():
    params = init_mlp([D + 2, 12, 12, 1], seed=4)
    rng = np.random.Generator(np.random.Philox(key=9))
    x = rng.uniform(-1, 1, size=(7, D))
    t = rng.uniform(0, 1, size=7)
    out = assembled(params, x, t)
    h = 1e-5
    lap_fd = 0.0
    for i in range(D):
        xp = x.copy(); xp[:, i] += h
        xm = x.copy(); xm[:, i] -= h
        fp, fm = composite_value(params, xp, t), composite_value(params, xm, t)
        np.testing.assert_allclose(out.grad[:, i], (fp - fm) / (2 * h), rtol=1e-4, atol=1e-8)
        lap_fd = lap_fd + (fp - 2 * composite_value(params, x, t) + fm) / h**2
    np.testing.assert_allclose(out.lap, lap_fd, rtol=2e-4, atol=1e-6)


def test_parameter_blocks_follow_same_chain_rule():
    params = init_mlp([D + 2, 8, 8, 1], seed=5)
    rng = np.random.Generator(np.random.Philox(key=10))
    x = rng.uniform(-1, 1, size=(4, D))
    t = rng.uniform(0, 1, size=4)
    out = assembled(params, x, t, with_params=True)
    theta = params.to_flat()
    h = 1e-6
    for idx in rng.choice(theta.size, size=12, replace=False):
        tp = theta.copy(); tp[idx] += h
        tm = theta.copy(); tm[idx] -= h
        op = assembled(params.replace_flat(tp), x, t)
        om = assembled(params.replace_flat(tm), x, t)
        np.testing.assert_allclose(out.param_dt[:, :, idx], (op.dt - om.dt) / (2 * h),
                                   rtol=5e-5, atol=1e-7)
        np.testing.assert_allclose(out.param_lap[:, :, idx], (op.lap - om.lap) / (2 * h),
                                   rtol=2e-4, atol=1e-6)
        np.testing.assert_allclose(out.param_grad[:, :, :, idx],
                                   (op.grad - om.grad) / (2 * h), rtol=5e-5, atol=1e-7)


def test_indicator_zinfo_kills_z_derivatives():
    phi = np.array([0.5, -0.2, 1.0])
    grad = np.ones((3, D))
    zi = z_info(INDICATOR, phi, grad, np.ones(3), np.ones(3))
    np.testing.assert_array_equal(zi.value, [1.0, -1.0, 1.0])
    assert not zi.grad.any() and not zi.dt.any() and not zi.lap.any()


def test_abs_zinfo_flips_with_sign():
    phi = np.array([0.5, -0.2])
    grad = np.array([[1.0, 2.0], [3.0, 4.0]])
    zi = z_info(ABS_LEVEL_SET, phi, grad, np.array([5.0, 6.0]), np.array([7.0, 8.0]))
    np.testing.assert_allclose(zi.value, [0.5, 0.2])
    np.testing.assert_allclose(zi.grad, [[1.0, 2.0], [-3.0, -4.0]])
    np.testing.assert_allclose(zi.dt, [5.0, -6.0])
    np.testing.assert_allclose(zi.lap, [7.0, -8.0])


def test_zinfo_rejects_on_interface_points():
    with pytest.raises(ValueError, match="interface"):
        z_info(ABS_LEVEL_SET, np.array([0.3, 0.0]), np.zeros((2, D)),
               np.zeros(2), np.zeros(2))


def test_interface_side_limits():
    grad = np.array([[2.0, -1.0]])
    z, zg = interface_side_z(INDICATOR, +1, grad)
    np.testing.assert_array_equal(z, [1.0])
    assert not zg.any()
    z, zg = interface_side_z(ABS_LEVEL_SET, -1, grad)
    np.testing.assert_array_equal(z, [0.0])
    np.testing.assert_allclose(zg, -grad)


def test_one_sided_gradient_matches_dense_assembly():
    # with z fixed to a one-sided limit, the interface gradient equals the
    # interior chain rule with dt/lap terms dropped
    params = init_mlp([D + 2, 10, 1], seed=6)
    rng = np.random.Generator(np.random.Philox(key=11))
    x = rng.uniform(-1, 1, size=(5, D))
    t = rng.uniform(0, 1, size=5)
    phi_grad = rng.uniform(-1, 1, size=(5, D))
    zval, zgrad = interface_side_z(ABS_LEVEL_SET, +1, phi_grad)
    jet = forward_jet(params, extended_inputs(x, t, zval),
                      JetRequest(first=True, param_first=True))
    grad, pgrad = composite_spatial_gradient(jet, zgrad, D)
    zi = D + 1
    expected = np.stack(
        [jet.first[:, i] + jet.first[:, zi] * zgrad[:, i][:, None] for i in range(D)], axis=1
    )
    np.testing.assert_array_equal(grad, expected)
    assert pgrad.shape == (5, D, 1, params.param_count)


def test_missing_block_is_reported_by_name():
    params = init_mlp([D + 2, 6, 1], seed=7)
    x = np.zeros((2, D)); t = np.zeros(2)
    jet = forward_jet(params, extended_inputs(x, t, np.zeros(2)), JetRequest(first=True))
    zi = z_info(INDICATOR, np.ones(2), np.zeros((2, D)), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError, match="second-derivative"):
        assemble_pde_derivatives(jet, zi, D)
