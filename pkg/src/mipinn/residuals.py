"""Discrete least-squares residual systems for the interface solver.

Parabolic blocks:
  pde         du/dt + V . grad u - beta lap u - f      interior points
  boundary    u - g                                    spatial boundary
  initial     u(., 0) - u0
  flux_jump   [beta grad u . n] - h_N                  interface samples
  value_jump  [u] - h_D                                indicator rule only

Oseen blocks: momentum (d rows per point), divergence, boundary (velocity
and pressure, fixing the gauge), initial (velocity), flux_jump
([nu du/dn - p n], d rows), value_jump ([u], d rows).

Row normalization: mode "mean" scales every row of a block by
sqrt(weight / row_count), so the total loss is the weighted sum of block
mean squares; mode "sum" scales by sqrt(weight). Interior points closer to
the interface than `interface_tol` in |phi| are excluded up front and
counted in `n_dropped`.

The block formulas are written once over a bundle of field derivatives, so
the same code path can be fed either network jets (with parameter
Jacobians) or a closed-form solution oracle; with manufactured data the
oracle residuals must vanish, which is the verification hook.

A conventional network without the extended input (VanillaAssembler) uses
the same block names; its interface flux is approximated by one-sided
finite differences along the normals at offset `fd_eps`. That variant
exists for training-dynamics comparisons, not for accuracy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from . import extension as ext
from .levelset import level_set_jet, level_set_values
from .network import JetRequest, MlpParams, forward_jet
from .problems import Benchmark, ExactSolution, OSEEN, PARABOLIC
from .sampling import BoundarySamples, InitialSamples, InteriorSamples, InterfaceSamples

logger = logging.getLogger(__name__)

__all__ = [
    "ResidualBlock",
    "ResidualSystem",
    "XiPinnAssembler",
    "VanillaAssembler",
    "ExactFieldOracle",
    "default_block_weights",
]


@dataclass
class ResidualBlock:
    name: str
    residual: np.ndarray                    # (m,) raw, unscaled
    jacobian: Optional[np.ndarray] = None   # (m, P) raw
    weight: float = 1.0


@dataclass
class ResidualSystem:
    blocks: List[ResidualBlock]
    mode: str = "mean"

    def __post_init__(self):
        if self.mode not in ("mean", "sum"):
            raise ValueError(f"unknown normalization mode {self.mode!r}")

    def _scale(self, block: ResidualBlock) -> float:
        m = len(block.residual)
        if self.mode == "mean":
            return float(np.sqrt(block.weight / m))
        return float(np.sqrt(block.weight))

    def stacked(self):
        rs, js = [], []
        for b in self.blocks:
            s = self._scale(b)
            rs.append(s * b.residual)
            if b.jacobian is not None:
                js.append(s * b.jacobian)
        r = np.concatenate(rs)
        if js and len(js) == len(self.blocks):
            return r, np.concatenate(js, axis=0)
        return r, None

    def loss(self) -> float:
        return float(sum(self._scale(b) ** 2 * float(b.residual @ b.residual)
                         for b in self.blocks))

    def block_losses(self) -> Dict[str, float]:
        return {b.name: self._scale(b) ** 2 * float(b.residual @ b.residual)
                for b in self.blocks}

    def max_abs_residual(self) -> float:
        return max(float(np.max(np.abs(b.residual))) for b in self.blocks)


def default_block_weights(kind: str) -> Dict[str, float]:
    if kind == PARABOLIC:
        names = ("pde", "boundary", "initial", "flux_jump", "value_jump")
    else:
        names = ("momentum", "divergence", "boundary", "initial", "flux_jump", "value_jump")
    return {n: 1.0 for n in names}


def _chunks(n: int, size: int):
    for lo in range(0, n, size):
        yield slice(lo, min(lo + size, n))


def _chunk_size(P: int, F: int, rails: int, budget: float = 6e7) -> int:
    per_point = max(P * F * max(rails, 1), 1)
    return int(np.clip(budget / (8 * per_point), 16, 4096))


@dataclass
class _Fields:
    """Derivatives of the represented solution at the frozen sample sets.

    Parameter blocks are None when only residual values are needed (oracle
    substitution, residual dumps).
    """
    int_val: np.ndarray          # (B, F)
    int_dt: np.ndarray           # (B, F)
    int_grad: np.ndarray         # (B, d, F)
    int_lap: np.ndarray          # (B, F)
    bnd_val: np.ndarray          # (Bb, F)
    ini_val: np.ndarray          # (Bi, F)
    ifc_val_p: np.ndarray        # (Bg, F)
    ifc_val_m: np.ndarray
    ifc_grad_p: np.ndarray       # (Bg, d, F)
    ifc_grad_m: np.ndarray
    int_pdt: Optional[np.ndarray] = None     # (B, F, P)
    int_pgrad: Optional[np.ndarray] = None   # (B, d, F, P)
    int_plap: Optional[np.ndarray] = None
    bnd_pval: Optional[np.ndarray] = None
    ini_pval: Optional[np.ndarray] = None
    ifc_pval_p: Optional[np.ndarray] = None
    ifc_pval_m: Optional[np.ndarray] = None
    ifc_pgrad_p: Optional[np.ndarray] = None  # (Bg, d, F, P)
    ifc_pgrad_m: Optional[np.ndarray] = None


class ExactFieldOracle:
    """Evaluates the field bundle from a closed-form solution instead of a
    network; lets manufactured data verify that every block closes."""

    def __init__(self, exact: ExactSolution):
        self.exact = exact

    def interior(self, x, t, sgn):
        e = self.exact
        return e.value(x, t, sgn), e.dt(x, t, sgn), e.grad(x, t, sgn), e.lap(x, t, sgn)

    def values(self, x, t, sgn):
        return self.exact.value(x, t, sgn)

    def side(self, x, t, side):
        sgn = np.full(len(x), float(side))
        return self.exact.value(x, t, sgn), self.exact.grad(x, t, sgn)


class _AssemblerBase:
    """Shared evaluate/stack plumbing; subclasses fill _eval_blocks."""

    def __init__(self, layer_dims, weights: Optional[Dict[str, float]], mode: str):
        self.layer_dims = tuple(int(v) for v in layer_dims)
        self.mode = mode
        self.weights = dict(weights) if weights else {}

    def _params(self, theta) -> MlpParams:
        return MlpParams.from_flat(self.layer_dims, theta)

    def _weight(self, name: str) -> float:
        w = self.weights.get(name, 1.0)
        if w < 0:
            raise ValueError(f"block weight {name} must be nonnegative")
        return float(w)

    def system(self, theta, with_jacobian: bool = False) -> ResidualSystem:
        blocks = self._eval_blocks(self._params(theta), with_jacobian)
        return ResidualSystem(blocks=blocks, mode=self.mode)

    def residuals(self, theta):
        r, _ = self.system(theta, with_jacobian=False).stacked()
        return r

    def residuals_and_jacobian(self, theta):
        r, J = self.system(theta, with_jacobian=True).stacked()
        return r, J


class XiPinnAssembler(_AssemblerBase):
    """Residual system for the extended-variable network.

    All level-set quantities, data values, and one-sided z states are frozen
    at construction; each evaluation only runs the network jets.
    """

    def __init__(self, benchmark: Benchmark, levelset, interior: InteriorSamples,
                 boundary: BoundarySamples, initial: InitialSamples,
                 interface: InterfaceSamples, layer_dims,
                 rule: Optional[str] = None,
                 weights: Optional[Dict[str, float]] = None,
                 mode: str = "mean", interface_tol: float = 1e-12):
        super().__init__(layer_dims, weights, mode)
        spec = benchmark.spec
        self.kind = spec.kind
        self.d = spec.spatial_dim
        self.n_outputs = 1 if self.kind == PARABOLIC else self.d + 1
        self.n_velocity = 1 if self.kind == PARABOLIC else self.d
        self.rule = rule or ext.extension_rule_for(spec.jump_hd_kind)
        expected_in = self.d + 2
        if self.layer_dims[0] != expected_in or self.layer_dims[-1] != self.n_outputs:
            raise ValueError(
                f"network must map {expected_in} inputs to {self.n_outputs} outputs "
                f"for {spec.name}; got {self.layer_dims}"
            )

        # ---- interior: classify, drop near-interface points, freeze z data
        need_second = self.rule == ext.ABS_LEVEL_SET
        if need_second:
            jet = level_set_jet(levelset, interior.x, interior.t, need_second=True)
            phi_all = jet.value
        else:
            # indicator z is piecewise constant; only the sign of phi matters
            phi_all = level_set_values(levelset, interior.x, interior.t)
        keep = np.abs(phi_all) > interface_tol
        self.n_dropped = int(np.size(keep) - np.count_nonzero(keep))
        if self.n_dropped:
            logger.info("dropped %d interior points within %g of the interface",
                        self.n_dropped, interface_tol)
        if not np.any(keep):
            raise ValueError("no interior points left after interface exclusion")
        xi, ti = interior.x[keep], interior.t[keep]
        phi = phi_all[keep]
        sgn = np.sign(phi)
        if need_second:
            zinfo = ext.z_info(self.rule, phi, jet.grad[keep], jet.dt[keep], jet.lap[keep])
        else:
            zinfo = ext.z_info(self.rule, phi, np.zeros_like(xi),
                               np.zeros_like(phi), np.zeros_like(phi))
        self.int_x, self.int_t, self.int_sgn, self.int_zinfo = xi, ti, sgn, zinfo
        self.int_inputs = ext.extended_inputs(xi, ti, zinfo.value)
        self.int_coeff = np.where(sgn > 0, spec.coeff_plus, spec.coeff_minus)
        self.int_f = spec.source(xi, ti, sgn)
        self.int_vel = spec.velocity(xi, ti)

        # ---- boundary: z from the level set, data includes all components
        bphi = level_set_values(levelset, boundary.x, boundary.t)
        self.bnd_sgn = np.sign(bphi)
        zb = self.bnd_sgn if self.rule == ext.INDICATOR else np.abs(bphi)
        self.bnd_inputs = ext.extended_inputs(boundary.x, boundary.t, zb)
        self.bnd_g = spec.boundary(boundary.x, boundary.t)
        self.bnd_xt = (boundary.x, boundary.t)

        # ---- initial slice
        t0 = np.zeros(len(initial.x))
        iphi = level_set_values(levelset, initial.x, t0)
        self.ini_sgn = np.sign(iphi)
        z0 = self.ini_sgn if self.rule == ext.INDICATOR else np.abs(iphi)
        self.ini_inputs = ext.extended_inputs(initial.x, t0, z0)
        self.ini_u0 = spec.initial(initial.x, self.ini_sgn)
        self.ini_xt = (initial.x, t0)

        # ---- interface: one-sided extended states and jump data
        if self.rule == ext.ABS_LEVEL_SET:
            gjet = level_set_jet(levelset, interface.x, interface.t, need_second=False)
            gphi_grad = gjet.grad
        else:
            gphi_grad = np.zeros_like(interface.x)
        zp, zgp = ext.interface_side_z(self.rule, +1, gphi_grad)
        zm, zgm = ext.interface_side_z(self.rule, -1, gphi_grad)
        self.ifc_inputs_p = ext.extended_inputs(interface.x, interface.t, zp)
        self.ifc_inputs_m = ext.extended_inputs(interface.x, interface.t, zm)
        self.ifc_same_inputs = bool(np.array_equal(self.ifc_inputs_p, self.ifc_inputs_m))
        self.ifc_zgrad_p, self.ifc_zgrad_m = zgp, zgm
        self.ifc_normals = interface.normals
        self.ifc_hn = spec.jump_hn(interface.x, interface.t, interface.normals)
        self.ifc_hd = spec.jump_hd(interface.x, interface.t)
        self.ifc_xt = (interface.x, interface.t)
        self.coeff_plus, self.coeff_minus = spec.coeff_plus, spec.coeff_minus

    # ---- field bundles -------------------------------------------------------

    def _network_fields(self, params: MlpParams, with_jac: bool) -> _Fields:
        d, F, P = self.d, params.n_outputs, params.param_count

        req = ext.pde_jet_request(d, with_params=with_jac)
        B = len(self.int_inputs)
        val = np.empty((B, F))
        dt = np.empty((B, F))
        grad = np.empty((B, d, F))
        lap = np.empty((B, F))
        pdt = np.empty((B, F, P)) if with_jac else None
        pgrad = np.empty((B, d, F, P)) if with_jac else None
        plap = np.empty((B, F, P)) if with_jac else None
        rails = len(req.pairs) + d + 2
        for sl in _chunks(B, _chunk_size(P if with_jac else 1, F, rails)):
            jet = forward_jet(params, self.int_inputs[sl], req)
            zi = ext.ZInfo(value=self.int_zinfo.value[sl], grad=self.int_zinfo.grad[sl],
                           dt=self.int_zinfo.dt[sl], lap=self.int_zinfo.lap[sl])
            comp = ext.assemble_pde_derivatives(jet, zi, d)
            val[sl], dt[sl], grad[sl], lap[sl] = comp.value, comp.dt, comp.grad, comp.lap
            if with_jac:
                pdt[sl], pgrad[sl], plap[sl] = comp.param_dt, comp.param_grad, comp.param_lap

        def value_at(inputs):
            m = len(inputs)
            v = np.empty((m, F))
            pv = np.empty((m, F, P)) if with_jac else None
            for s in _chunks(m, _chunk_size(P if with_jac else 1, F, 1)):
                jet = forward_jet(params, inputs[s], JetRequest(param_value=with_jac))
                v[s] = jet.value
                if with_jac:
                    pv[s] = jet.param_value
            return v, pv

        bnd_val, bnd_pval = value_at(self.bnd_inputs)
        ini_val, ini_pval = value_at(self.ini_inputs)

        req_g = JetRequest(first=True, param_value=with_jac, param_first=with_jac)
        jet_p = forward_jet(params, self.ifc_inputs_p, req_g)
        jet_m = jet_p if self.ifc_same_inputs else forward_jet(params, self.ifc_inputs_m, req_g)
        grad_p, pgrad_p = ext.composite_spatial_gradient(jet_p, self.ifc_zgrad_p, d)
        grad_m, pgrad_m = ext.composite_spatial_gradient(jet_m, self.ifc_zgrad_m, d)

        return _Fields(
            int_val=val, int_dt=dt, int_grad=grad, int_lap=lap,
            bnd_val=bnd_val, ini_val=ini_val,
            ifc_val_p=jet_p.value, ifc_val_m=jet_m.value,
            ifc_grad_p=grad_p, ifc_grad_m=grad_m,
            int_pdt=pdt, int_pgrad=pgrad, int_plap=plap,
            bnd_pval=bnd_pval, ini_pval=ini_pval,
            ifc_pval_p=jet_p.param_value, ifc_pval_m=jet_m.param_value,
            ifc_pgrad_p=pgrad_p, ifc_pgrad_m=pgrad_m,
        )

    def _oracle_fields(self, oracle: ExactFieldOracle) -> _Fields:
        val, dt, grad, lap = oracle.interior(self.int_x, self.int_t, self.int_sgn)
        bnd_val = oracle.values(*self.bnd_xt, self.bnd_sgn)
        ini_val = oracle.values(*self.ini_xt, self.ini_sgn)
        val_p, grad_p = oracle.side(*self.ifc_xt, +1)
        val_m, grad_m = oracle.side(*self.ifc_xt, -1)
        return _Fields(int_val=val, int_dt=dt, int_grad=grad, int_lap=lap,
                       bnd_val=bnd_val, ini_val=ini_val,
                       ifc_val_p=val_p, ifc_val_m=val_m,
                       ifc_grad_p=grad_p, ifc_grad_m=grad_m)

    # ---- blocks from fields --------------------------------------------------

    def _eval_blocks(self, params: MlpParams, with_jac: bool) -> List[ResidualBlock]:
        return self._blocks_from_fields(self._network_fields(params, with_jac), with_jac)

    def oracle_system(self, exact_or_oracle) -> ResidualSystem:
        oracle = exact_or_oracle
        if isinstance(oracle, ExactSolution):
            oracle = ExactFieldOracle(oracle)
        blocks = self._blocks_from_fields(self._oracle_fields(oracle), False)
        return ResidualSystem(blocks=blocks, mode=self.mode)

    def _blocks_from_fields(self, fl: _Fields, with_jac: bool) -> List[ResidualBlock]:
        d, nv = self.d, self.n_velocity
        vel, coeff, f = self.int_vel, self.int_coeff, self.int_f
        blocks: List[ResidualBlock] = []

        adv = np.einsum("bi,bif->bf", vel, fl.int_grad[:, :, :nv])
        if self.kind == PARABOLIC:
            r = fl.int_dt[:, 0] + adv[:, 0] - coeff * fl.int_lap[:, 0] - f[:, 0]
            J = None
            if with_jac:
                Jadv = np.einsum("bi,bifp->bfp", vel, fl.int_pgrad[:, :, :nv])
                J = fl.int_pdt[:, 0] + Jadv[:, 0] - coeff[:, None] * fl.int_plap[:, 0]
            blocks.append(ResidualBlock("pde", r, J, self._weight("pde")))
        else:
            press_grad = np.stack([fl.int_grad[:, a, d] for a in range(d)], axis=1)
            mom = (fl.int_dt[:, :nv] + adv - coeff[:, None] * fl.int_lap[:, :nv]
                   + press_grad - f)
            div = sum(fl.int_grad[:, a, a] for a in range(d))
            Jm = Jd = None
            if with_jac:
                P = fl.int_pdt.shape[-1]
                Jadv = np.einsum("bi,bifp->bfp", vel, fl.int_pgrad[:, :, :nv])
                Jp = np.stack([fl.int_pgrad[:, a, d] for a in range(d)], axis=1)
                Jm = (fl.int_pdt[:, :nv] + Jadv
                      - coeff[:, None, None] * fl.int_plap[:, :nv] + Jp)
                Jm = Jm.reshape(-1, P)
                Jd = sum(fl.int_pgrad[:, a, a] for a in range(d))
            blocks.append(ResidualBlock("momentum", mom.ravel(), Jm,
                                        self._weight("momentum")))
            blocks.append(ResidualBlock("divergence", div, Jd,
                                        self._weight("divergence")))

        r_bnd = (fl.bnd_val - self.bnd_g).ravel()
        J_bnd = None
        if with_jac:
            J_bnd = fl.bnd_pval.reshape(-1, fl.bnd_pval.shape[-1])
        blocks.append(ResidualBlock("boundary", r_bnd, J_bnd, self._weight("boundary")))

        r_ini = (fl.ini_val[:, :nv] - self.ini_u0).ravel()
        J_ini = None
        if with_jac:
            J_ini = fl.ini_pval[:, :nv].reshape(-1, fl.ini_pval.shape[-1])
        blocks.append(ResidualBlock("initial", r_ini, J_ini, self._weight("initial")))

        n = self.ifc_normals
        dn_p = np.einsum("bi,bif->bf", n, fl.ifc_grad_p[:, :, :nv])
        dn_m = np.einsum("bi,bif->bf", n, fl.ifc_grad_m[:, :, :nv])
        flux = self.coeff_plus * dn_p - self.coeff_minus * dn_m
        if self.kind == OSEEN:
            flux = flux - (fl.ifc_val_p[:, d:] - fl.ifc_val_m[:, d:]) * n
        J_flux = None
        if with_jac:
            P = fl.ifc_pgrad_p.shape[-1]
            Jdn_p = np.einsum("bi,bifp->bfp", n, fl.ifc_pgrad_p[:, :, :nv])
            Jdn_m = np.einsum("bi,bifp->bfp", n, fl.ifc_pgrad_m[:, :, :nv])
            J_flux = self.coeff_plus * Jdn_p - self.coeff_minus * Jdn_m
            if self.kind == OSEEN:
                J_flux = J_flux - ((fl.ifc_pval_p[:, d:] - fl.ifc_pval_m[:, d:])
                                   * n[:, :, None])
            J_flux = J_flux.reshape(-1, P)
        blocks.append(ResidualBlock("flux_jump", (flux - self.ifc_hn).ravel(),
                                    J_flux, self._weight("flux_jump")))

        if self.rule == ext.INDICATOR:
            jump = fl.ifc_val_p[:, :nv] - fl.ifc_val_m[:, :nv]
            J_val = None
            if with_jac:
                J_val = (fl.ifc_pval_p[:, :nv] - fl.ifc_pval_m[:, :nv]).reshape(
                    -1, fl.ifc_pval_p.shape[-1])
            blocks.append(ResidualBlock("value_jump", (jump - self.ifc_hd).ravel(),
                                        J_val, self._weight("value_jump")))
        return blocks

    # ---- reporting ----------------------------------------------------------

    def point_sets(self) -> Dict[str, tuple]:
        """Block name -> (x, t, rows_per_point), for residual dumps."""
        nv = self.n_velocity
        out: Dict[str, tuple] = {}
        if self.kind == PARABOLIC:
            out["pde"] = (self.int_x, self.int_t, 1)
        else:
            out["momentum"] = (self.int_x, self.int_t, self.d)
            out["divergence"] = (self.int_x, self.int_t, 1)
        out["boundary"] = (*self.bnd_xt, self.n_outputs)
        out["initial"] = (*self.ini_xt, nv)
        out["flux_jump"] = (*self.ifc_xt, nv)
        if self.rule == ext.INDICATOR:
            out["value_jump"] = (*self.ifc_xt, nv)
        return out


class VanillaAssembler(_AssemblerBase):
    """Plain (x, t) network with the same block names; the interface flux
    uses one-sided finite differences along the normals. Parabolic only."""

    def __init__(self, benchmark: Benchmark, levelset, interior: InteriorSamples,
                 boundary: BoundarySamples, initial: InitialSamples,
                 interface: InterfaceSamples, layer_dims,
                 weights: Optional[Dict[str, float]] = None, mode: str = "mean",
                 interface_tol: float = 1e-12, fd_eps: float = 1e-6):
        super().__init__(layer_dims, weights, mode)
        spec = benchmark.spec
        if spec.kind != PARABOLIC:
            raise ValueError("the plain-input comparison network is parabolic-only")
        self.kind = spec.kind
        self.d = spec.spatial_dim
        if self.layer_dims[0] != self.d + 1 or self.layer_dims[-1] != 1:
            raise ValueError(f"network must map {self.d + 1} inputs to 1 output")
        self.fd_eps = float(fd_eps)

        phi_all = level_set_values(levelset, interior.x, interior.t)
        keep = np.abs(phi_all) > interface_tol
        self.n_dropped = int(np.size(keep) - np.count_nonzero(keep))
        if not np.any(keep):
            raise ValueError("no interior points left after interface exclusion")
        xi, ti = interior.x[keep], interior.t[keep]
        sgn = np.sign(phi_all[keep])
        self.int_inputs = np.concatenate([xi, ti[:, None]], axis=1)
        self.int_coeff = np.where(sgn > 0, spec.coeff_plus, spec.coeff_minus)
        self.int_f = spec.source(xi, ti, sgn)
        self.int_vel = spec.velocity(xi, ti)
        self.int_xt = (xi, ti)

        self.bnd_inputs = np.concatenate([boundary.x, boundary.t[:, None]], axis=1)
        self.bnd_g = spec.boundary(boundary.x, boundary.t)
        t0 = np.zeros(len(initial.x))
        iphi = level_set_values(levelset, initial.x, t0)
        self.ini_inputs = np.concatenate([initial.x, t0[:, None]], axis=1)
        self.ini_u0 = spec.initial(initial.x, np.sign(iphi))

        n = interface.normals
        self.ifc_inputs_p = np.concatenate(
            [interface.x + self.fd_eps * n, interface.t[:, None]], axis=1)
        self.ifc_inputs_m = np.concatenate(
            [interface.x - self.fd_eps * n, interface.t[:, None]], axis=1)
        self.ifc_normals = n
        self.ifc_hn = spec.jump_hn(interface.x, interface.t, n)
        self.coeff_plus, self.coeff_minus = spec.coeff_plus, spec.coeff_minus

    def _eval_blocks(self, params: MlpParams, with_jac: bool) -> List[ResidualBlock]:
        d = self.d
        P = params.param_count
        pairs = tuple((i, i) for i in range(d))
        req = JetRequest(first=True, pairs=pairs,
                         param_first=with_jac, param_pairs=with_jac)
        B = len(self.int_inputs)
        r = np.empty(B)
        J = np.empty((B, P)) if with_jac else None
        for sl in _chunks(B, _chunk_size(P if with_jac else 1, 1, 2 * d + 1)):
            jet = forward_jet(params, self.int_inputs[sl], req)
            lap = sum(jet.second[:, p, 0] for p in range(d))
            adv = np.einsum("bi,bi->b", self.int_vel[sl], jet.first[:, :d, 0])
            r[sl] = (jet.first[:, d, 0] + adv - self.int_coeff[sl] * lap
                     - self.int_f[sl, 0])
            if with_jac:
                plap = sum(jet.param_second[:, p, 0] for p in range(d))
                padv = np.einsum("bi,bip->bp", self.int_vel[sl],
                                 jet.param_first[:, :d, 0])
                J[sl] = (jet.param_first[:, d, 0] + padv
                         - self.int_coeff[sl, None] * plap)
        blocks = [ResidualBlock("pde", r, J, self._weight("pde"))]

        for name, inputs, data in (("boundary", self.bnd_inputs, self.bnd_g),
                                   ("initial", self.ini_inputs, self.ini_u0)):
            jet = forward_jet(params, inputs, JetRequest(param_value=with_jac))
            rb = (jet.value - data).ravel()
            Jb = jet.param_value[:, 0] if with_jac else None
            blocks.append(ResidualBlock(name, rb, Jb, self._weight(name)))

        req_g = JetRequest(first=True, param_first=with_jac)
        jp = forward_jet(params, self.ifc_inputs_p, req_g)
        jm = forward_jet(params, self.ifc_inputs_m, req_g)
        n = self.ifc_normals
        dn_p = np.einsum("bi,bi->b", n, jp.first[:, :d, 0])
        dn_m = np.einsum("bi,bi->b", n, jm.first[:, :d, 0])
        r_flux = self.coeff_plus * dn_p - self.coeff_minus * dn_m - self.ifc_hn[:, 0]
        J_flux = None
        if with_jac:
            Jp = np.einsum("bi,bip->bp", n, jp.param_first[:, :d, 0])
            Jm = np.einsum("bi,bip->bp", n, jm.param_first[:, :d, 0])
            J_flux = self.coeff_plus * Jp - self.coeff_minus * Jm
        blocks.append(ResidualBlock("flux_jump", r_flux, J_flux,
                                    self._weight("flux_jump")))
        return blocks

    def point_sets(self) -> Dict[str, tuple]:
        return {
            "pde": (self.int_xt[0], self.int_xt[1], 1),
            "boundary": (self.bnd_inputs[:, :self.d], self.bnd_inputs[:, self.d], 1),
            "initial": (self.ini_inputs[:, :self.d], self.ini_inputs[:, self.d], 1),
            "flux_jump": (self.ifc_inputs_p[:, :self.d] - self.fd_eps * self.ifc_normals,
                          self.ifc_inputs_p[:, self.d], 1),
        }
