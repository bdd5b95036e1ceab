"""Levenberg-Marquardt trainer for stacked least-squares residuals.

The damped normal equations

    (J^T J + lambda diag(J^T J) + floor I) delta = -J^T r

are solved by Cholesky factorization. When the parameter count exceeds the
row count the system is solved in the dual via the Woodbury identity,

    (D + J^T J)^{-1} = D^{-1} - D^{-1} J^T (I + J D^{-1} J^T)^{-1} J D^{-1},

which costs O(N^2 P) instead of O(P^2 N). Steps are accepted only when the
loss decreases; lambda shrinks by lambda_down on acceptance and grows by
lambda_up on rejection. The Jacobian is reused across rejected steps.

An assembler is anything with
    residuals(theta) -> r                        (N,)
    residuals_and_jacobian(theta) -> (r, J)      (N,), (N, P)
and the loss is the plain sum of squared residuals (block weighting is the
assembler's job).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

logger = logging.getLogger(__name__)

__all__ = ["LmConfig", "LmStepRecord", "LmResult", "solve_damped", "train", "save_trace_csv"]


@dataclass(frozen=True)
class LmConfig:
    max_iters: int = 5000
    loss_stop: float = 1e-13
    lambda_init: float = 1e-3
    lambda_up: float = 2.0
    lambda_down: float = 1.0 / 3.0
    floor: float = 1e-12
    lambda_max: float = 1e15
    factorization_retries: int = 30

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.lambda_init < 0:
            raise ValueError("lambda_init must be nonnegative")
        if not (self.lambda_up > 1 and 0 < self.lambda_down < 1):
            raise ValueError("need lambda_up > 1 and 0 < lambda_down < 1")
        if self.floor <= 0 or self.loss_stop < 0:
            raise ValueError("floor must be positive and loss_stop nonnegative")


@dataclass
class LmStepRecord:
    iteration: int
    loss: float            # loss after the step (unchanged when rejected)
    candidate_loss: float
    lam: float
    accepted: bool
    step_norm: float
    wall_time: float


@dataclass
class LmResult:
    theta: np.ndarray
    loss: float
    stop_reason: str       # loss_stop | max_iters | stalled
    n_iters: int
    trace: List[LmStepRecord] = field(default_factory=list)


def solve_damped(J: np.ndarray, r: np.ndarray, lam: float, floor: float) -> np.ndarray:
    """One damped Gauss-Newton step; route picked by shape."""
    return _DampedSolver(J, r, floor).solve(lam)


class _DampedSolver:
    """Caches the lambda-independent pieces of the normal equations for one
    (r, J) pair so rejected steps only pay for the factorization."""

    def __init__(self, J: np.ndarray, r: np.ndarray, floor: float):
        self.J = J
        self.floor = float(floor)
        self.w = J.T @ r
        n, p = J.shape
        self.primal = p <= n
        if self.primal:
            self.A = J.T @ J
            self.dg = np.diag(self.A).copy()
        else:
            self.dg = np.einsum("ij,ij->j", J, J)

    def solve(self, lam: float) -> np.ndarray:
        if self.primal:
            B = self.A.copy()
            p = B.shape[0]
            B.flat[:: p + 1] += lam * self.dg + self.floor
            c = cho_factor(B, lower=True, check_finite=False)
            return cho_solve(c, -self.w, check_finite=False)
        d = lam * self.dg + self.floor
        u = self.w / d
        Jd = self.J / d
        n = self.J.shape[0]
        M = Jd @ self.J.T
        M.flat[:: n + 1] += 1.0
        c = cho_factor(M, lower=True, check_finite=False)
        y = cho_solve(c, self.J @ u, check_finite=False)
        return -u + Jd.T @ y


def train(assembler, theta0: np.ndarray, config: LmConfig = LmConfig(),
          callback: Optional[Callable] = None) -> LmResult:
    """Run the accept/reject loop from theta0 until a stop condition fires.

    One iteration is one candidate evaluation, accepted or not; every
    iteration appends a trace record.
    """
    theta = np.asarray(theta0, dtype=np.float64).copy()
    t0 = time.perf_counter()
    r, J = assembler.residuals_and_jacobian(theta)
    loss = float(r @ r)
    result = LmResult(theta=theta, loss=loss, stop_reason="loss_stop", n_iters=0)
    if loss <= config.loss_stop:
        return result

    lam = config.lambda_init
    solver = _DampedSolver(J, r, config.floor)
    it = 0
    stop_reason = "max_iters"
    while it < config.max_iters:
        it += 1
        delta = None
        for attempt in range(config.factorization_retries + 1):
            try:
                delta = solver.solve(lam)
                break
            except LinAlgError:
                lam = max(lam * config.lambda_up, config.floor)
        if delta is None:
            raise RuntimeError(
                f"normal-equation factorization kept failing after "
                f"{config.factorization_retries} damping escalations"
            )
        candidate = theta + delta
        rc = assembler.residuals(candidate)
        closs = float(rc @ rc)
        accepted = closs < loss and np.isfinite(closs)
        if accepted:
            theta = candidate
            loss = closs
        result.trace.append(
            LmStepRecord(iteration=it, loss=loss, candidate_loss=closs, lam=lam,
                         accepted=accepted, step_norm=float(np.linalg.norm(delta)),
                         wall_time=time.perf_counter() - t0)
        )
        if callback is not None:
            callback(result.trace[-1])
        if accepted:
            lam *= config.lambda_down
            if loss <= config.loss_stop:
                stop_reason = "loss_stop"
                break
            r, J = assembler.residuals_and_jacobian(theta)
            solver = _DampedSolver(J, r, config.floor)
        else:
            lam = max(lam * config.lambda_up, config.floor)
            if lam > config.lambda_max:
                stop_reason = "stalled"
                break

    result.theta = theta
    result.loss = loss
    result.stop_reason = stop_reason
    result.n_iters = it
    return result


def save_trace_csv(path, trace: List[LmStepRecord]) -> None:
    """Trace CSV: iteration,loss,candidate_loss,lambda,accepted,step_norm,wall_time."""
    with open(path, "w") as fh:
        fh.write("iteration,loss,candidate_loss,lambda,accepted,step_norm,wall_time\n")
        for rec in trace:
            fh.write(
                f"{rec.iteration},{rec.loss:.17g},{rec.candidate_loss:.17g},"
                f"{rec.lam:.17g},{int(rec.accepted)},{rec.step_norm:.17g},"
                f"{rec.wall_time:.6f}\n"
            )
