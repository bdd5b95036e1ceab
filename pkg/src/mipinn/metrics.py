"""Error norms, flow-map accuracy, and file exports.

e0 is the root mean square of the pointwise solution error over the test
set; e1 additionally sums the squared first spatial derivatives of the
error (no time derivative). Per-time variants restrict to one time slice.
For vector problems the squared pointwise error is the Euclidean norm over
the velocity components; the pressure error is reported separately.

Test points with |phi| <= exclude_tol sit on the interface, where neither
the exact solution nor the represented one is single-valued; they are
excluded and counted.

Flow-map accuracy is the mean squared pullback mismatch over interface
trajectories: every advected sample at a later time is pulled back and
compared against its start position.

All numeric exports use 17 significant digits so re-export is exact.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from . import extension as ext
from .levelset import level_set_jet, level_set_values
from .network import JetRequest, MlpParams, forward_jet
from .problems import ExactSolution, OSEEN

__all__ = [
    "ErrorReport",
    "predict_solution",
    "error_norms",
    "flowmap_error",
    "export_grid",
    "load_grid_csv",
    "save_report_csv",
    "load_report_csv",
    "save_table_csv",
]


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def predict_solution(params: MlpParams, rule: str, levelset, x, t,
                     need_grad: bool = False, chunk: int = 8192):
    """Network solution at (x, t): value (B, F) and, on request, the spatial
    gradient (B, d, F) assembled through the extension rule."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    d = x.shape[1]
    if rule == ext.INDICATOR:
        z = np.sign(level_set_values(levelset, x, t))
        zgrad = np.zeros_like(x)
    elif rule == ext.ABS_LEVEL_SET:
        jet = level_set_jet(levelset, x, t, need_second=False)
        z = np.abs(jet.value)
        zgrad = np.sign(jet.value)[:, None] * jet.grad
    else:
        raise ValueError(f"unknown extension rule {rule!r}")
    inputs = ext.extended_inputs(x, t, z)
    B, F = len(x), params.n_outputs
    value = np.empty((B, F))
    grad = np.empty((B, d, F)) if need_grad else None
    req = JetRequest(first=need_grad)
    for lo in range(0, B, chunk):
        sl = slice(lo, min(lo + chunk, B))
        out = forward_jet(params, inputs[sl], req)
        value[sl] = out.value
        if need_grad:
            grad[sl] = (out.first[:, :d, :]
                        + out.first[:, d + 1:, :] * zgrad[sl][:, :, None])
    return value, grad


@dataclass
class ErrorReport:
    benchmark: str
    e0: float
    e1: float
    times: np.ndarray
    e0_t: np.ndarray
    e1_t: np.ndarray
    n_points: int
    n_excluded: int
    runtime: float
    seed: Optional[int] = None
    e0_pressure: Optional[float] = None


def error_norms(params: MlpParams, rule: str, levelset, exact: ExactSolution,
                x, t, kind: str = "parabolic", benchmark: str = "",
                seed: Optional[int] = None,
                exclude_tol: float = 1e-12) -> ErrorReport:
    """Root-mean-square error norms of the represented solution on a test set.

    Points with |phi| <= exclude_tol are dropped (and counted); per-time
    norms are reported at the unique time values of the surviving set.
    """
    start = time.perf_counter()
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("empty test set")
    phi = level_set_values(levelset, x, t)
    keep = np.abs(phi) > exclude_tol
    n_excluded = int(np.size(keep) - np.count_nonzero(keep))
    x, t, phi = x[keep], t[keep], phi[keep]
    if len(x) == 0:
        raise ValueError("empty test set after interface exclusion")
    sgn = np.sign(phi)

    d = x.shape[1]
    nv = d if kind == OSEEN else 1
    value, grad = predict_solution(params, rule, levelset, x, t, need_grad=True)
    uex = exact.value(x, t, sgn)
    gex = exact.grad(x, t, sgn)
    diff = value[:, :nv] - uex[:, :nv]
    gdiff = grad[:, :, :nv] - gex[:, :, :nv]
    sq0 = np.sum(diff ** 2, axis=1)
    sq1 = sq0 + np.sum(gdiff ** 2, axis=(1, 2))

    e0 = float(np.sqrt(np.mean(sq0)))
    e1 = float(np.sqrt(np.mean(sq1)))
    times = np.unique(t)
    e0_t = np.empty(len(times))
    e1_t = np.empty(len(times))
    for k, tv in enumerate(times):
        m = t == tv
        e0_t[k] = np.sqrt(np.mean(sq0[m]))
        e1_t[k] = np.sqrt(np.mean(sq1[m]))
    e0_p = None
    if kind == OSEEN:
        pdiff = value[:, d] - uex[:, d]
        e0_p = float(np.sqrt(np.mean(pdiff ** 2)))
    return ErrorReport(benchmark=benchmark, e0=e0, e1=e1, times=times,
                       e0_t=e0_t, e1_t=e1_t, n_points=int(len(x)),
                       n_excluded=n_excluded,
                       runtime=time.perf_counter() - start, seed=seed,
                       e0_pressure=e0_p)


def flowmap_error(flow, table: np.ndarray, times: np.ndarray) -> float:
    """Mean squared pullback mismatch over trajectories.

    table[j] holds the positions at times[j] of the samples that started at
    table[0]; every later slice is pulled back through the flow map and
    compared against the start positions.
    """
    table = np.asarray(table, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if table.ndim != 3 or len(table) != len(times):
        raise ValueError("trajectory table and times disagree")
    if len(times) < 2:
        raise ValueError("need at least two trajectory times")
    total = 0.0
    count = 0
    for j in range(1, len(times)):
        back = flow.pull_back(table[j], np.full(len(table[j]), times[j]))
        total += float(np.sum((back - table[0]) ** 2))
        count += len(table[j])
    return total / count


def export_grid(params: MlpParams, rule: str, levelset, exact: ExactSolution,
                x, t, path, kind: str = "parabolic") -> None:
    """Prediction dump on an evaluation lattice.

    Columns: x1..xd, t, then per component u_pred_k, u_exact_k, abs_err_k
    (a scalar problem drops the _k suffix). Row order follows the input
    point order, which the lattice builder emits lexicographically in
    (time index, spatial indices). 17 significant digits throughout.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    phi = level_set_values(levelset, x, t)
    sgn = np.sign(phi)
    value, _ = predict_solution(params, rule, levelset, x, t, need_grad=False)
    uex = exact.value(x, t, sgn)
    err = np.abs(value - uex)
    d = x.shape[1]
    F = value.shape[1]
    if F == 1:
        cols = ["u_pred", "u_exact", "abs_err"]
    else:
        cols = [f"{base}_{k+1}" for k in range(F)
                for base in ("u_pred", "u_exact", "abs_err")]
    header = ",".join([f"x{i+1}" for i in range(d)] + ["t"] + cols)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for b in range(len(x)):
            row = [_fmt(v) for v in x[b]] + [_fmt(t[b])]
            for k in range(F):
                row += [_fmt(value[b, k]), _fmt(uex[b, k]), _fmt(err[b, k])]
            fh.write(",".join(row) + "\n")


def load_grid_csv(path):
    """Returns (header list, data array) of a grid export."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def save_report_csv(path, report: ErrorReport) -> None:
    """metric,time,value rows; scalar metrics leave the time column empty."""
    with open(path, "w") as fh:
        fh.write("metric,time,value\n")
        fh.write(f"e0,,{_fmt(report.e0)}\n")
        fh.write(f"e1,,{_fmt(report.e1)}\n")
        if report.e0_pressure is not None:
            fh.write(f"e0_pressure,,{_fmt(report.e0_pressure)}\n")
        for tv, v0, v1 in zip(report.times, report.e0_t, report.e1_t):
            fh.write(f"e0_t,{_fmt(tv)},{_fmt(v0)}\n")
            fh.write(f"e1_t,{_fmt(tv)},{_fmt(v1)}\n")
        fh.write(f"n_points,,{report.n_points}\n")
        fh.write(f"n_excluded,,{report.n_excluded}\n")
        fh.write(f"benchmark,,{report.benchmark}\n")
        if report.seed is not None:
            fh.write(f"seed,,{report.seed}\n")
        fh.write(f"runtime,,{_fmt(report.runtime)}\n")


def load_report_csv(path) -> Dict[str, object]:
    """Report file back as {metric: value} with per-time lists."""
    out: Dict[str, object] = {"e0_t": [], "e1_t": [], "times": []}
    with open(path) as fh:
        assert fh.readline().strip() == "metric,time,value"
        for line in fh:
            metric, tv, value = line.strip().split(",")
            if metric == "e0_t":
                out["times"].append(float(tv))
                out["e0_t"].append(float(value))
            elif metric == "e1_t":
                out["e1_t"].append(float(value))
            elif metric in ("benchmark",):
                out[metric] = value
            elif metric in ("n_points", "n_excluded", "seed"):
                out[metric] = int(value)
            else:
                out[metric] = float(value)
    return out


def save_table_csv(path, header: Sequence[str], rows) -> None:
    """Small summary tables (one header row, then value rows)."""
    with open(path, "w") as fh:
        fh.write(",".join(str(h) for h in header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
