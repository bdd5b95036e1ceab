"""Interface geometry in time: advection, neural flow maps, adaptive splitting.

The moving level set is represented as phi(x, t) = phi0(Xhat(x, t)) where
Xhat pulls a point at time t back to time 0 along the interface velocity.
Xhat is learned as displacement networks F with Xhat(x, t) = x + F(x, t),
one network per time interval [T_{k-1}, T_k]; queries for t in interval k
chain through piece k at time t and every earlier piece frozen at its right
endpoint. Intervals are cut adaptively: training marches one time-grid step
at a time and the interval is frozen one step before det(I + dF/dx) drops
to the threshold delta on a monitor set (an invertibility guard).

Training data come from Runge-Kutta reference trajectories of interface
points; the per-interval loss asks the network to be the identity map at
the interval start (anchor rows over domain points) and to pull every
advected interface sample back onto its start-of-interval position.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from . import network
from .lm import LmConfig, LmResult, train
from .network import JetRequest, MlpParams, forward_jet, init_mlp
from .problems import AnalyticLevelSet, InitialLevelSet
from .sampling import InterfaceSamples

logger = logging.getLogger(__name__)

__all__ = [
    "rk4_advect",
    "trajectory_table",
    "LevelSetJet",
    "level_set_jet",
    "FlowMapPiece",
    "ComposedFlowMap",
    "NeuralLevelSet",
    "FlowFitData",
    "FlowMapAssembler",
    "fit_flow_interval",
    "min_jacobian_det",
    "IntervalRecord",
    "AdaptiveResult",
    "adaptive_time_stepping",
    "interface_samples_from_table",
    "zero_set_points",
    "hausdorff_distance",
    "save_flow_checkpoint",
    "load_flow_checkpoint",
]

FLOW_CHECKPOINT_VERSION = 1


# ---------------------------------------------------------------------------
# reference trajectories


def rk4_advect(velocity: Callable, x0: np.ndarray, t0: float, t1: float,
               n_steps: int) -> np.ndarray:
    """March x' = V(x, t) from t0 to t1 with n_steps classical RK4 steps."""
    x = np.asarray(x0, dtype=np.float64).copy()
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    h = (t1 - t0) / n_steps
    t = t0
    for _ in range(n_steps):
        b = x.shape[0]
        k1 = velocity(x, np.full(b, t))
        k2 = velocity(x + 0.5 * h * k1, np.full(b, t + 0.5 * h))
        k3 = velocity(x + 0.5 * h * k2, np.full(b, t + 0.5 * h))
        k4 = velocity(x + h * k3, np.full(b, t + h))
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return x


def trajectory_table(velocity: Callable, x0: np.ndarray, times: np.ndarray,
                     substeps: int = 16) -> np.ndarray:
    """Positions of the particles x0 at every grid time; shape (T, N, d).

    times[0] is the release time of x0; each grid interval is integrated
    with `substeps` RK4 steps.
    """
    times = np.asarray(times, dtype=np.float64)
    out = np.empty((len(times),) + np.asarray(x0).shape)
    out[0] = x0
    for j in range(1, len(times)):
        out[j] = rk4_advect(velocity, out[j - 1], times[j - 1], times[j], substeps)
    return out


def interface_samples_from_table(table: np.ndarray, times: np.ndarray,
                                 levelset) -> InterfaceSamples:
    """Interface residual samples from advected trajectories, normals from the
    level set's normalized gradient."""
    T, N, d = table.shape
    x = table.reshape(T * N, d)
    t = np.repeat(np.asarray(times, float), N)
    jet = level_set_jet(levelset, x, t, need_second=False)
    normals = jet.grad / np.linalg.norm(jet.grad, axis=1, keepdims=True)
    return InterfaceSamples(x=x, t=t, normals=normals, times=np.asarray(times, float))


# ---------------------------------------------------------------------------
# level-set jets (analytic or neural-composite)


@dataclass
class LevelSetJet:
    value: np.ndarray              # (B,)
    grad: np.ndarray               # (B, d)
    dt: Optional[np.ndarray]       # (B,)
    lap: Optional[np.ndarray]      # (B,)


def level_set_jet(levelset, x: np.ndarray, t, need_second: bool = True) -> LevelSetJet:
    """Uniform access to phi, grad phi, phi_t, lap phi for both level-set kinds."""
    x = np.asarray(x, dtype=np.float64)
    tv = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (x.shape[0],))
    if isinstance(levelset, AnalyticLevelSet):
        return LevelSetJet(
            value=levelset.phi(x, tv),
            grad=levelset.grad(x, tv),
            dt=levelset.dt(x, tv),
            lap=levelset.lap(x, tv) if need_second else None,
        )
    if isinstance(levelset, NeuralLevelSet):
        return levelset.jet(x, tv, need_second=need_second)
    raise TypeError(f"unsupported level-set object {type(levelset).__name__}")


def level_set_values(levelset, x: np.ndarray, t) -> np.ndarray:
    """phi only, skipping derivative work (and derivative singularities)."""
    x = np.asarray(x, dtype=np.float64)
    tv = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (x.shape[0],))
    if isinstance(levelset, AnalyticLevelSet):
        return np.asarray(levelset.phi(x, tv), dtype=np.float64)
    if isinstance(levelset, NeuralLevelSet):
        return levelset.phi(x, tv)
    raise TypeError(f"unsupported level-set object {type(levelset).__name__}")


# ---------------------------------------------------------------------------
# flow-map pieces and composition


def _flow_inputs(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.concatenate([x, np.broadcast_to(np.reshape(t, (-1,)), (x.shape[0],))[:, None]], axis=1)


def _spatial_pairs(d: int):
    return tuple((i, j) for i in range(d) for j in range(i, d))


@dataclass
class FlowMapPiece:
    """Displacement network for one interval; Xhat(x,t) = x + F(x,t) maps a
    time-t state back to the interval anchor t_anchor."""

    params: MlpParams
    t_anchor: float
    t_end: float

    @property
    def dim(self) -> int:
        return self.params.n_outputs

    def displacement(self, x: np.ndarray, t) -> np.ndarray:
        t = np.broadcast_to(np.asarray(t, float).reshape(-1), (x.shape[0],))
        return forward_jet(self.params, _flow_inputs(x, t)).value

    def map_points(self, x: np.ndarray, t) -> np.ndarray:
        return x + self.displacement(x, t)

    def jet(self, x: np.ndarray, t, need_hessian: bool = False):
        """Returns (F, dF/dx, dF/dt, hess) with hess (B, d, d, d) per output
        component or None; dF/dx is (B, d_out, d_in spatial)."""
        d = self.dim
        t = np.broadcast_to(np.asarray(t, float).reshape(-1), (x.shape[0],))
        pairs = _spatial_pairs(d) if need_hessian else ()
        jet = forward_jet(self.params, _flow_inputs(x, t),
                          JetRequest(first=True, pairs=pairs))
        value = jet.value
        jac = np.swapaxes(jet.first[:, :d, :], 1, 2)      # (B, a, j) = dF_a/dx_j
        dt = jet.first[:, d, :]
        hess = None
        if need_hessian:
            B = x.shape[0]
            hess = np.empty((B, d, d, d))                 # (B, a, i, j)
            for p, (i, j) in enumerate(pairs):
                hess[:, :, i, j] = jet.second[:, p, :]
                hess[:, :, j, i] = jet.second[:, p, :]
        return value, jac, dt, hess

    def jacobian_det(self, x: np.ndarray, t) -> np.ndarray:
        _, jac, _, _ = self.jet(x, t)
        eye = np.eye(self.dim)
        return np.linalg.det(eye + jac)


@dataclass
class ComposedFlowMap:
    """Pieces in time order; piece k pulls [T_{k-1}, T_k] back to T_{k-1}."""

    pieces: List[FlowMapPiece]

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("need at least one flow-map piece")
        for a, b in zip(self.pieces, self.pieces[1:]):
            if not np.isclose(a.t_end, b.t_anchor):
                raise ValueError("flow-map pieces must tile the time axis")

    @property
    def breaks(self) -> np.ndarray:
        return np.array([self.pieces[0].t_anchor] + [p.t_end for p in self.pieces])

    def piece_indices(self, t: np.ndarray) -> np.ndarray:
        br = self.breaks
        k = np.searchsorted(br, np.asarray(t, dtype=np.float64), side="right") - 1
        return np.clip(k, 0, len(self.pieces) - 1)

    def _stages(self, k: int, t: np.ndarray):
        """Stage list for points whose query times all live in piece k: the
        covering piece at the query times, then every earlier piece frozen at
        its right endpoint."""
        stages = [(self.pieces[k], t, True)]
        for j in range(k - 1, -1, -1):
            stages.append((self.pieces[j], self.pieces[j].t_end, False))
        return stages

    def pull_back(self, x: np.ndarray, t) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        t = np.broadcast_to(np.asarray(t, float).reshape(-1), (x.shape[0],))
        out = np.empty_like(x)
        ks = self.piece_indices(t)
        for k in np.unique(ks):
            sel = ks == k
            y = x[sel]
            for piece, s, _ in self._stages(int(k), t[sel]):
                y = piece.map_points(y, s)
            out[sel] = y
        return out

    def jet(self, x: np.ndarray, t, need_hessian: bool = True):
        """Pulled-back points with dy/dx, dy/dt and per-component spatial
        Hessians accumulated through the stage chain."""
        x = np.asarray(x, dtype=np.float64)
        t = np.broadcast_to(np.asarray(t, float).reshape(-1), (x.shape[0],))
        B, d = x.shape
        eye = np.eye(d)
        y_out = np.empty_like(x)
        J_out = np.empty((B, d, d))
        dt_out = np.empty((B, d))
        H_out = np.empty((B, d, d, d)) if need_hessian else None
        ks = self.piece_indices(t)
        for k in np.unique(ks):
            sel = ks == k
            y = x[sel]
            n = len(y)
            J = np.broadcast_to(eye, (n, d, d)).copy()
            dy_dt = np.zeros((n, d))
            H = np.zeros((n, d, d, d)) if need_hessian else None
            for piece, s, varies in self._stages(int(k), t[sel]):
                F, Fx, Ft, FH = piece.jet(y, s, need_hessian=need_hessian)
                A = eye + Fx                               # (n, a, b) = dy'_a/dy_b
                if need_hessian:
                    Hn = np.einsum("zki,zakl,zlj->zaij", J, FH, J)
                    Hn += H + np.einsum("zab,zbij->zaij", Fx, H)
                    H = Hn
                dy_dt = np.einsum("zab,zb->za", A, dy_dt)
                if varies:
                    dy_dt = dy_dt + Ft
                J = np.einsum("zab,zbj->zaj", A, J)
                y = y + F
            y_out[sel] = y
            J_out[sel] = J
            dt_out[sel] = dy_dt
            if need_hessian:
                H_out[sel] = H
        return y_out, J_out, dt_out, H_out


@dataclass
class NeuralLevelSet:
    """phi(x,t) = phi0(Xhat(x,t)) with Xhat a composed neural flow map."""

    flow: ComposedFlowMap
    initial: InitialLevelSet

    def jet(self, x: np.ndarray, t, need_second: bool = True) -> LevelSetJet:
        x = np.asarray(x, dtype=np.float64)
        y, J, dy_dt, H = self.flow.jet(x, t, need_hessian=need_second)
        g0 = self.initial.grad0(y)
        value = self.initial.phi0(y)
        grad = np.einsum("bij,bi->bj", J, g0)
        dt = np.einsum("bi,bi->b", g0, dy_dt)
        lap = None
        if need_second:
            H0 = self.initial.hess0(y)
            hess = np.einsum("bki,bkl,blj->bij", J, H0, J)
            hess += np.einsum("ba,baij->bij", g0, H)
            lap = np.trace(hess, axis1=1, axis2=2)
        return LevelSetJet(value=value, grad=grad, dt=dt, lap=lap)

    def phi(self, x, t):
        x = np.asarray(x, dtype=np.float64)
        tv = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (x.shape[0],))
        return self.initial.phi0(self.flow.pull_back(x, tv))


# ---------------------------------------------------------------------------
# per-interval fitting


@dataclass
class FlowFitData:
    """Fixed training data for one interval: anchor rows pin F(.,T_{k-1})=0,
    trajectory rows pin the pullback of each advected interface sample."""

    inputs: np.ndarray       # (N, d+1)
    targets: np.ndarray      # (N, d)
    n_anchor: int

    @classmethod
    def build(cls, anchors: np.ndarray, table: np.ndarray, times: np.ndarray,
              s: int, i: int) -> "FlowFitData":
        d = anchors.shape[1]
        t_anchor = times[s]
        rows_x = [anchors]
        rows_t = [np.full(len(anchors), t_anchor)]
        rows_y = [np.zeros((len(anchors), d))]
        start = table[s]
        for j in range(s + 1, i + 1):
            adv = table[j]
            rows_x.append(adv)
            rows_t.append(np.full(len(adv), times[j]))
            rows_y.append(start - adv)
        inputs = _flow_inputs(np.concatenate(rows_x), np.concatenate(rows_t))
        return cls(inputs=inputs, targets=np.concatenate(rows_y),
                   n_anchor=len(anchors))


class FlowMapAssembler:
    """Least-squares rows: F_theta(inputs) - targets, mean-normalized per block
    (anchor block and trajectory block)."""

    def __init__(self, data: FlowFitData, layer_dims):
        self.data = data
        self.layer_dims = tuple(layer_dims)
        d = data.targets.shape[1]
        n_anchor_rows = data.n_anchor * d
        n_traj_rows = (len(data.inputs) - data.n_anchor) * d
        scale = np.empty(len(data.inputs) * d)
        scale[:n_anchor_rows] = 1.0 / np.sqrt(n_anchor_rows)
        if n_traj_rows:
            scale[n_anchor_rows:] = 1.0 / np.sqrt(n_traj_rows)
        self.scale = scale

    def _params(self, theta):
        return MlpParams.from_flat(self.layer_dims, theta)

    def residuals(self, theta):
        value = forward_jet(self._params(theta), self.data.inputs).value
        return (value - self.data.targets).ravel() * self.scale

    def residuals_and_jacobian(self, theta):
        jet = forward_jet(self._params(theta), self.data.inputs,
                          JetRequest(param_value=True))
        r = (jet.value - self.data.targets).ravel() * self.scale
        B, F, P = jet.param_value.shape
        J = jet.param_value.reshape(B * F, P) * self.scale[:, None]
        return r, J


def fit_flow_interval(anchors: np.ndarray, table: np.ndarray, times: np.ndarray,
                      s: int, i: int, layer_dims, lm_config: LmConfig,
                      warm_theta: Optional[np.ndarray] = None,
                      seed: int = 0):
    """Train the displacement net for times[s..i]; returns (piece, LmResult)."""
    data = FlowFitData.build(anchors, table, times, s, i)
    assembler = FlowMapAssembler(data, layer_dims)
    if warm_theta is None:
        params0 = init_mlp(layer_dims, seed=seed)
        # zero output layer: start from the identity map
        theta0 = params0.to_flat()
        w_out_size = layer_dims[-1] * layer_dims[-2] + layer_dims[-1]
        theta0[-w_out_size:] = 0.0
    else:
        theta0 = np.asarray(warm_theta, dtype=np.float64)
    result = train(assembler, theta0, lm_config)
    piece = FlowMapPiece(params=MlpParams.from_flat(layer_dims, result.theta),
                         t_anchor=float(times[s]), t_end=float(times[i]))
    return piece, result


def min_jacobian_det(piece: FlowMapPiece, monitor_x: np.ndarray,
                     times: Sequence[float]) -> float:
    m = np.inf
    for tv in np.asarray(times, dtype=np.float64):
        m = min(m, float(np.min(piece.jacobian_det(monitor_x, np.full(len(monitor_x), tv)))))
    return m


# ---------------------------------------------------------------------------
# adaptive interval splitting


@dataclass
class IntervalRecord:
    t_start: float
    t_end: float
    min_det: float
    n_extensions: int
    fit_loss: float


@dataclass
class AdaptiveResult:
    flow: ComposedFlowMap
    records: List[IntervalRecord]

    @property
    def breakpoints(self) -> np.ndarray:
        return self.flow.breaks


def adaptive_time_stepping(times: np.ndarray, delta: float,
                           fit_interval: Callable,
                           det_min: Callable) -> AdaptiveResult:
    """March the time grid, extending each interval one step at a time.

    fit_interval(s, i, warm_piece) -> (FlowMapPiece for times[s..i], fit_loss)
    det_min(piece, times_chunk) -> min of det(I + dF/dx) over the monitor set

    When the determinant check fails at times[i], the previous fit (already
    known to satisfy the check) is frozen with T_k = times[i-1] and a fresh
    interval starts there. Failing on the first extension of an interval is
    a hard error: no valid sub-interval exists at this grid resolution.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or len(times) < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing with >= 2 entries")
    if not (0 < delta < 1):
        raise ValueError("delta must lie in (0, 1)")
    s = 0
    pieces: List[FlowMapPiece] = []
    records: List[IntervalRecord] = []
    while s < len(times) - 1:
        accepted = None
        accepted_det = np.nan
        accepted_loss = np.nan
        for i in range(s + 1, len(times)):
            piece, fit_loss = fit_interval(s, i, accepted)
            m = det_min(piece, times[s : i + 1])
            if m <= delta:
                if accepted is None:
                    raise RuntimeError(
                        f"flow-map Jacobian determinant {m:.4g} <= {delta} on the "
                        f"first extension [{times[s]:.6g}, {times[i]:.6g}]; "
                        "refine the time grid"
                    )
                logger.info("freezing interval [%.4g, %.4g], min det %.4g",
                            times[s], times[i - 1], accepted_det)
                pieces.append(accepted)
                records.append(IntervalRecord(times[s], times[i - 1], accepted_det,
                                              i - 1 - s, accepted_loss))
                s = i - 1
                break
            accepted = piece
            accepted_det = m
            accepted_loss = fit_loss
        else:
            pieces.append(accepted)
            records.append(IntervalRecord(times[s], times[-1], accepted_det,
                                          len(times) - 1 - s, accepted_loss))
            s = len(times) - 1
    return AdaptiveResult(flow=ComposedFlowMap(pieces), records=records)


# ---------------------------------------------------------------------------
# zero sets and distances


def zero_set_points(phi_fn: Callable, domain, tv: float, resolution: int = 201) -> np.ndarray:
    """Zero contour of phi(., tv) on a regular grid (2D only)."""
    from skimage import measure

    lo, hi = domain.bounding_box()
    if len(lo) != 2:
        raise ValueError("zero-set extraction is implemented for 2D domains")
    xs = np.linspace(lo[0], hi[0], resolution)
    ys = np.linspace(lo[1], hi[1], resolution)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    vals = phi_fn(pts, np.full(len(pts), tv)).reshape(resolution, resolution)
    contours = measure.find_contours(vals, 0.0)
    if not contours:
        return np.empty((0, 2))
    segs = []
    for c in contours:
        seg = np.empty_like(c)
        seg[:, 0] = lo[0] + c[:, 0] * (hi[0] - lo[0]) / (resolution - 1)
        seg[:, 1] = lo[1] + c[:, 1] * (hi[1] - lo[1]) / (resolution - 1)
        segs.append(seg)
    return np.concatenate(segs)


def hausdorff_distance(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) == 0 or len(b) == 0:
        raise ValueError("hausdorff distance needs nonempty point sets")
    return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])


# ---------------------------------------------------------------------------
# flow-map checkpoints


def save_flow_checkpoint(path, flow: ComposedFlowMap, benchmark: str,
                         extra: Optional[dict] = None) -> None:
    payload = {
        "format_version": np.int64(FLOW_CHECKPOINT_VERSION),
        "benchmark": np.bytes_(benchmark.encode()),
        "n_pieces": np.int64(len(flow.pieces)),
        "breaks": flow.breaks,
    }
    for k, piece in enumerate(flow.pieces):
        payload[f"piece{k}_dims"] = np.asarray(piece.params.layer_dims, dtype=np.int64)
        payload[f"piece{k}_theta"] = piece.params.to_flat()
    if extra:
        payload.update({k: np.asarray(v) for k, v in extra.items()})
    np.savez(path, **payload)


def load_flow_checkpoint(path):
    """Returns (ComposedFlowMap, benchmark name)."""
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != FLOW_CHECKPOINT_VERSION:
            raise ValueError(f"unsupported flow checkpoint version {version}")
        benchmark = bytes(data["benchmark"]).decode()
        breaks = data["breaks"]
        pieces = []
        for k in range(int(data["n_pieces"])):
            dims = tuple(int(v) for v in data[f"piece{k}_dims"])
            params = MlpParams.from_flat(dims, data[f"piece{k}_theta"])
            pieces.append(FlowMapPiece(params=params, t_anchor=float(breaks[k]),
                                       t_end=float(breaks[k + 1])))
    return ComposedFlowMap(pieces), benchmark
