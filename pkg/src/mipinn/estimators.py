"""scikit-learn style wrappers around the solver and the flow-map learner.

InterfaceSolver.fit trains the extended-input network for one benchmark and
exposes predict/error_report; FlowMapLearner.fit runs the adaptive interval
splitting for the level-set flow map and exposes transform (pull back to
reference coordinates) and predict (level-set values). Constructor
arguments follow the estimator convention: stored verbatim, validated in
fit, fitted state in trailing-underscore attributes.

Both estimators generate their own training sets from the benchmark
definition, so fit(X, y) ignores X and y; sampling streams are decoupled
(interior/boundary/initial/interface draw from independent generators), so
changing one count leaves the other sets untouched.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .levelset import (NeuralLevelSet, adaptive_time_stepping, fit_flow_interval,
                       min_jacobian_det, trajectory_table)
from .lm import LmConfig, train
from .metrics import error_norms, flowmap_error, predict_solution
from .network import MlpParams, init_mlp
from .problems import PARABOLIC, get_benchmark
from .residuals import XiPinnAssembler
from .sampling import (evaluation_grid, interface_time_grid, make_rng,
                       sample_boundary, sample_initial, sample_interface,
                       sample_interior)

__all__ = ["InterfaceSolver", "FlowMapLearner"]

# sampling stream ids, fixed so each point family has its own generator
_INTERIOR, _BOUNDARY, _INITIAL, _INTERFACE, _REFERENCE = range(5)


def _check_points(X, d):
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != d + 1:
        raise ValueError(f"expected columns x1..x{d}, t; got {X.shape[1]} columns")
    return X[:, :d], X[:, d]


class InterfaceSolver(BaseEstimator):
    """Least-squares training of the extended-input network on a benchmark.

    Parameters mirror the experiment configuration: network hidden sizes,
    sample counts, damping settings, extension-rule override, and the seed.
    `levelset` selects the analytic level set ("analytic") or a provided
    neural one (pass the object through the `flow_levelset` argument of
    fit for benchmarks without a closed-form interface motion).
    """

    def __init__(self, benchmark="ex1", hidden=(32, 32, 32), rule=None,
                 n_interior=2000, n_boundary=400, n_initial=300,
                 n_interface_times=10, n_interface_per_time=10,
                 max_iters=500, loss_stop=1e-13, lambda_init=1e-3,
                 weights=None, mode="mean", interface_tol=1e-12, seed=0):
        self.benchmark = benchmark
        self.hidden = hidden
        self.rule = rule
        self.n_interior = n_interior
        self.n_boundary = n_boundary
        self.n_initial = n_initial
        self.n_interface_times = n_interface_times
        self.n_interface_per_time = n_interface_per_time
        self.max_iters = max_iters
        self.loss_stop = loss_stop
        self.lambda_init = lambda_init
        self.weights = weights
        self.mode = mode
        self.interface_tol = interface_tol
        self.seed = seed

    def fit(self, X=None, y=None, flow_levelset=None, callback=None):
        bench = get_benchmark(self.benchmark)
        spec = bench.spec
        d = spec.spatial_dim
        levelset = flow_levelset if flow_levelset is not None else bench.geometry.analytic
        if levelset is None:
            raise ValueError(
                f"{self.benchmark} has no analytic level set; pass flow_levelset")

        interior = sample_interior(spec.domain, spec.t_end, self.n_interior,
                                   make_rng(self.seed, _INTERIOR))
        boundary = sample_boundary(spec.domain, spec.t_end, self.n_boundary,
                                   make_rng(self.seed, _BOUNDARY))
        initial = sample_initial(spec.domain, self.n_initial,
                                 make_rng(self.seed, _INITIAL))
        times = interface_time_grid(spec.t_end, self.n_interface_times)
        interface = sample_interface(bench.geometry, times,
                                     self.n_interface_per_time,
                                     make_rng(self.seed, _INTERFACE))

        n_out = 1 if spec.kind == PARABOLIC else d + 1
        dims = (d + 2, *tuple(int(h) for h in self.hidden), n_out)
        assembler = XiPinnAssembler(
            bench, levelset, interior, boundary, initial, interface, dims,
            rule=self.rule, weights=self.weights, mode=self.mode,
            interface_tol=self.interface_tol)
        config = LmConfig(max_iters=int(self.max_iters),
                          loss_stop=float(self.loss_stop),
                          lambda_init=float(self.lambda_init))
        theta0 = init_mlp(dims, seed=self.seed).to_flat()
        result = train(assembler, theta0, config, callback=callback)

        self.benchmark_ = bench
        self.levelset_ = levelset
        self.assembler_ = assembler
        self.layer_dims_ = dims
        self.rule_ = assembler.rule
        self.result_ = result
        self.params_ = MlpParams.from_flat(dims, result.theta)
        self.loss_ = result.loss
        self.n_iter_ = result.n_iters
        return self

    def predict(self, X):
        """Solution values at rows (x1..xd, t); scalar problems return (B,),
        systems return (B, components)."""
        check_is_fitted(self, "params_")
        x, t = _check_points(X, self.benchmark_.spec.spatial_dim)
        value, _ = predict_solution(self.params_, self.rule_, self.levelset_, x, t)
        return value[:, 0] if value.shape[1] == 1 else value

    def error_report(self, resolution=None, n_times=11):
        """Error norms on the standard evaluation lattice."""
        check_is_fitted(self, "params_")
        spec = self.benchmark_.spec
        if resolution is None:
            resolution = 101 if spec.spatial_dim == 2 else 41
        x, t = evaluation_grid(spec.domain, resolution, n_times, spec.t_end)
        return error_norms(self.params_, self.rule_, self.levelset_,
                           self.benchmark_.exact, x, t, kind=spec.kind,
                           benchmark=spec.name, seed=self.seed)


class FlowMapLearner(BaseEstimator):
    """Adaptive-interval training of the neural flow map for a benchmark's
    interface motion; yields a trainable level set for later solves."""

    def __init__(self, benchmark="ex4", hidden=(24, 24), n_reference=100,
                 n_times=16, delta=0.2, substeps=16, max_iters=150,
                 loss_stop=1e-13, lambda_init=1e-3, seed=0):
        self.benchmark = benchmark
        self.hidden = hidden
        self.n_reference = n_reference
        self.n_times = n_times
        self.delta = delta
        self.substeps = substeps
        self.max_iters = max_iters
        self.loss_stop = loss_stop
        self.lambda_init = lambda_init
        self.seed = seed

    def fit(self, X=None, y=None):
        bench = get_benchmark(self.benchmark)
        spec = bench.spec
        d = spec.spatial_dim
        rng = make_rng(self.seed, _REFERENCE)
        x0 = bench.geometry.reference_points(int(self.n_reference), rng)
        times = np.linspace(0.0, spec.t_end, int(self.n_times))
        table = trajectory_table(spec.velocity, x0, times,
                                 substeps=int(self.substeps))
        dims = (d + 1, *tuple(int(h) for h in self.hidden), d)
        config = LmConfig(max_iters=int(self.max_iters),
                          loss_stop=float(self.loss_stop),
                          lambda_init=float(self.lambda_init))
        fit_results = []

        def fit_interval(s, i, warm_piece):
            warm = None if warm_piece is None else warm_piece.params.to_flat()
            piece, result = fit_flow_interval(
                x0, table, times, s, i, dims, config,
                warm_theta=warm, seed=self.seed)
            fit_results.append(result)
            return piece, result.loss

        def det_min(piece, chunk_times):
            return min_jacobian_det(piece, x0, chunk_times)

        adaptive = adaptive_time_stepping(times, float(self.delta),
                                          fit_interval, det_min)
        self.benchmark_ = bench
        self.times_ = times
        self.table_ = table
        self.flow_ = adaptive.flow
        self.records_ = adaptive.records
        self.fit_results_ = fit_results
        self.levelset_ = NeuralLevelSet(flow=adaptive.flow,
                                        initial=bench.geometry.initial)
        self.n_pieces_ = len(adaptive.flow.pieces)
        self.flowmap_error_ = flowmap_error(adaptive.flow, table, times)
        return self

    def transform(self, X):
        """Pull rows (x1..xd, t) back to their reference-time coordinates."""
        check_is_fitted(self, "flow_")
        x, t = _check_points(X, self.benchmark_.spec.spatial_dim)
        return self.flow_.pull_back(x, t)

    def predict(self, X):
        """Level-set values at rows (x1..xd, t)."""
        check_is_fitted(self, "flow_")
        x, t = _check_points(X, self.benchmark_.spec.spatial_dim)
        return self.levelset_.phi(x, t)
