"""Extended-variable construction for interface-aware networks.

The network sees (x_1..x_d, t, z) where z(x, t) encodes which side of the
interface the point is on:

  indicator      z = sign(phi)   used when the solution value jumps ([u] != 0);
                 z is piecewise constant, so all its derivatives vanish away
                 from the interface.
  abs_level_set  z = |phi|       used when the value is continuous ([u] = 0)
                 but fluxes jump; z is continuous with a kinked gradient.

Given the network jet in the extended coordinates and the derivatives of z,
this module assembles the space-time derivatives of the composite
u(x, t) = N(x, t, z(x, t)):

  du/dt   = D_t N + D_z N * dz/dt
  grad u  = grad_x N + D_z N * grad z
  lap u   = lap_x N + 2 grad z . grad_x(D_z N) + |grad z|^2 D_zz N + D_z N * lap z

The same linear combinations apply verbatim to the parameter gradients of
each block, which is what the Gauss-Newton residual Jacobians consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .network import JetRequest, NetworkJet

__all__ = [
    "INDICATOR",
    "ABS_LEVEL_SET",
    "extension_rule_for",
    "extended_inputs",
    "pde_jet_request",
    "ZInfo",
    "z_info",
    "interface_side_z",
    "CompositeDerivs",
    "assemble_pde_derivatives",
    "composite_spatial_gradient",
]

INDICATOR = "indicator"
ABS_LEVEL_SET = "abs_level_set"
_RULES = (INDICATOR, ABS_LEVEL_SET)


def extension_rule_for(jump_hd_kind: str) -> str:
    """Pick the extension rule from the value-jump data: zero -> |phi|, else sign."""
    if jump_hd_kind == "zero":
        return ABS_LEVEL_SET
    if jump_hd_kind == "nonzero":
        return INDICATOR
    raise ValueError(f"unknown jump_hd_kind {jump_hd_kind!r}")


def _check_rule(rule: str) -> None:
    if rule not in _RULES:
        raise ValueError(f"unknown extension rule {rule!r}")


def extended_inputs(x: np.ndarray, t: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Stack (x..., t, z) into the network input layout."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if x.ndim != 2 or x.shape[0] != t.size or t.size != z.size:
        raise ValueError("x, t, z must share the batch dimension")
    return np.concatenate([x, t[:, None], z[:, None]], axis=1)


def pde_jet_request(d: int, with_params: bool = False) -> JetRequest:
    """Jet blocks the interior residual needs: all first derivatives plus the
    second-derivative pairs (x_i,x_i), (x_i,z), (z,z). Index layout: spatial
    0..d-1, time d, extended variable d+1."""
    zi = d + 1
    pairs = tuple((i, i) for i in range(d)) + tuple((i, zi) for i in range(d)) + ((zi, zi),)
    return JetRequest(first=True, pairs=pairs,
                      param_first=with_params, param_pairs=with_params)


@dataclass
class ZInfo:
    """Extended variable and its space-time derivatives at interior points."""

    value: np.ndarray           # (B,)
    grad: np.ndarray            # (B, d)
    dt: np.ndarray              # (B,)
    lap: np.ndarray             # (B,)


def z_info(rule: str, phi: np.ndarray, phi_grad: np.ndarray,
           phi_dt: np.ndarray, phi_lap: np.ndarray) -> ZInfo:
    """Derivatives of z from the level-set jet, away from the interface."""
    _check_rule(rule)
    phi = np.asarray(phi, dtype=np.float64)
    sgn = np.sign(phi)
    if np.any(sgn == 0.0):
        raise ValueError("z_info called on a point lying exactly on the interface")
    if rule == INDICATOR:
        B, d = phi_grad.shape
        zero = np.zeros(B)
        return ZInfo(value=sgn, grad=np.zeros((B, d)), dt=zero, lap=zero.copy())
    return ZInfo(value=np.abs(phi), grad=sgn[:, None] * phi_grad,
                 dt=sgn * phi_dt, lap=sgn * phi_lap)


def interface_side_z(rule: str, side: int, phi_grad: np.ndarray):
    """One-sided limit of (z, grad z) on the interface itself.

    side=+1 approaches from the positive region. For the indicator rule
    z jumps between +-1 with zero gradient; for |phi| the value limit is 0
    and the gradient limit is +-grad(phi).
    """
    _check_rule(rule)
    if side not in (1, -1):
        raise ValueError("side must be +1 or -1")
    phi_grad = np.asarray(phi_grad, dtype=np.float64)
    B = phi_grad.shape[0]
    if rule == INDICATOR:
        return float(side) * np.ones(B), np.zeros_like(phi_grad)
    return np.zeros(B), float(side) * phi_grad


@dataclass
class CompositeDerivs:
    """Space-time derivatives of u(x,t) = N(x,t,z(x,t)); param blocks optional."""

    value: np.ndarray                 # (B, F)
    dt: np.ndarray                    # (B, F)
    grad: np.ndarray                  # (B, d, F)
    lap: np.ndarray                   # (B, F)
    param_value: Optional[np.ndarray] = None   # (B, F, P)
    param_dt: Optional[np.ndarray] = None      # (B, F, P)
    param_grad: Optional[np.ndarray] = None    # (B, d, F, P)
    param_lap: Optional[np.ndarray] = None     # (B, F, P)


def _require(block, name: str):
    if block is None:
        raise ValueError(f"network jet is missing the {name} block required for assembly")
    return block


def _combine(first, second, pair_at, zinfo: ZInfo, d: int, trailing: int):
    """Chain-rule combination; works for derivative blocks with any number of
    trailing axes (0 for values, 1 for parameter gradients)."""
    zi = d + 1
    ex = (...,) + (None,) * trailing

    def f(k):
        return first[:, k]

    dz = f(zi)
    dt = f(d) + dz * zinfo.dt[ex]
    grad = np.stack([f(i) + dz * zinfo.grad[:, i][ex] for i in range(d)], axis=1)
    lap = dz * zinfo.lap[ex]
    gsq = np.zeros(zinfo.value.shape[0])
    for i in range(d):
        lap = lap + second[:, pair_at[(i, i)]]
        lap = lap + 2.0 * zinfo.grad[:, i][ex] * second[:, pair_at[(i, zi)]]
        gsq = gsq + zinfo.grad[:, i] ** 2
    lap = lap + gsq[ex] * second[:, pair_at[(zi, zi)]]
    return dt, grad, lap


def assemble_pde_derivatives(jet: NetworkJet, zinfo: ZInfo, d: int) -> CompositeDerivs:
    """Build du/dt, grad u, lap u (and their theta-gradients when the jet
    carries parameter blocks) from the extended-variable jet."""
    first = _require(jet.first, "first-derivative")
    second = _require(jet.second, "second-derivative")
    zi = d + 1
    pair_at = {}
    for key in [(i, i) for i in range(d)] + [(i, zi) for i in range(d)] + [(zi, zi)]:
        pair_at[key] = jet.pair_index(*key)

    dt, grad, lap = _combine(first, second, pair_at, zinfo, d, trailing=1)
    out = CompositeDerivs(value=jet.value, dt=dt, grad=grad, lap=lap)

    if jet.param_first is not None:
        psecond = _require(jet.param_second, "second-derivative parameter")
        pdt, pgrad, plap = _combine(jet.param_first, psecond, pair_at, zinfo, d, trailing=2)
        out.param_dt = pdt
        out.param_grad = pgrad
        out.param_lap = plap
        out.param_value = jet.param_value
    return out


def composite_spatial_gradient(jet: NetworkJet, z_grad: np.ndarray, d: int):
    """One-sided spatial gradient grad_x N + D_z N * grad z at interface points.

    Returns (grad, param_grad) with param_grad None when the jet has no
    parameter blocks. z_grad is the one-sided gradient of z from
    interface_side_z."""
    first = _require(jet.first, "first-derivative")
    zi = d + 1
    dz = first[:, zi]
    grad = np.stack([first[:, i] + dz * z_grad[:, i][:, None] for i in range(d)], axis=1)
    if jet.param_first is None:
        return grad, None
    pf = jet.param_first
    pdz = pf[:, zi]
    pgrad = np.stack(
        [pf[:, i] + pdz * z_grad[:, i][:, None, None] for i in range(d)], axis=1
    )
    return grad, pgrad
