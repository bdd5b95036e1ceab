"""Mesh-free neural solver and benchmark harness for parabolic and Oseen
problems with moving interfaces.

The solver trains a network on extended inputs (x, t, z) where z is built
from a level-set description of the interface, so one smooth surrogate
can represent fields that kink or jump across a moving front. The
package bundles four reference benchmarks with closed-form solutions, a
Gauss-Newton/Levenberg-Marquardt trainer, a neural flow-map learner with
adaptive time intervals for interfaces without closed-form motion, a
training-kernel (NTK) analyzer, error reporting, and a batch CLI.
"""

from .estimators import FlowMapLearner, InterfaceSolver
from .extension import ABS_LEVEL_SET, INDICATOR, extension_rule_for
from .levelset import (AdaptiveResult, AnalyticLevelSet, ComposedFlowMap,
                       FlowMapPiece, IntervalRecord, NeuralLevelSet,
                       adaptive_time_stepping, fit_flow_interval,
                       load_flow_checkpoint, min_jacobian_det,
                       save_flow_checkpoint, trajectory_table)
from .lm import LmConfig, LmResult, train
from .metrics import (ErrorReport, error_norms, export_grid, flowmap_error,
                      predict_solution, save_report_csv)
from .network import MlpParams, init_mlp, load_checkpoint, save_checkpoint
from .ntk import (NtkReport, convergence_metrics, empirical_kernel,
                  initialization_comparison, kernel_report, kernel_spectrum)
from .problems import BENCHMARK_NAMES, Benchmark, get_benchmark
from .residuals import ResidualSystem, VanillaAssembler, XiPinnAssembler
from .sampling import evaluation_grid, make_rng

__version__ = "0.1.0"

__all__ = [
    "ABS_LEVEL_SET", "INDICATOR", "extension_rule_for",
    "AdaptiveResult", "AnalyticLevelSet", "ComposedFlowMap", "FlowMapPiece",
    "IntervalRecord", "NeuralLevelSet", "adaptive_time_stepping",
    "fit_flow_interval", "load_flow_checkpoint", "min_jacobian_det",
    "save_flow_checkpoint", "trajectory_table",
    "LmConfig", "LmResult", "train",
    "ErrorReport", "error_norms", "export_grid", "flowmap_error",
    "predict_solution", "save_report_csv",
    "MlpParams", "init_mlp", "load_checkpoint", "save_checkpoint",
    "NtkReport", "convergence_metrics", "empirical_kernel",
    "initialization_comparison", "kernel_report", "kernel_spectrum",
    "BENCHMARK_NAMES", "Benchmark", "get_benchmark",
    "ResidualSystem", "VanillaAssembler", "XiPinnAssembler",
    "FlowMapLearner", "InterfaceSolver",
    "evaluation_grid", "make_rng",
    "__version__",
]
