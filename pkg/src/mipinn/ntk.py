"""Empirical neural-tangent-kernel analysis of the residual operators.

For one residual operator with per-point parameter-gradient rows G (m, P),
the empirical kernel is K = G G^T. Stacking the rows of every operator
gives the full kernel. Convergence-rate proxies:

  c_total   = trace(K_full) / N       (N = total number of rows)
  c_partial = sum_i trace(K_i) / N_i  (one term per operator)

Kernels are exactly symmetric by construction; spectra are computed with a
dense symmetric eigensolver and reported in descending order. Rows are the
raw residual Jacobian rows, without block weighting, evaluated at network
initialization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from .network import init_mlp
from .problems import Benchmark, PARABOLIC
from .residuals import VanillaAssembler, XiPinnAssembler

__all__ = [
    "NtkReport",
    "empirical_kernel",
    "kernel_spectrum",
    "convergence_metrics",
    "kernel_report",
    "initialization_comparison",
    "save_spectrum_csv",
    "save_metrics_txt",
]


def empirical_kernel(rows: np.ndarray) -> np.ndarray:
    """Gram matrix G G^T of parameter-gradient rows; symmetrized exactly."""
    G = np.asarray(rows, dtype=np.float64)
    if G.ndim != 2:
        raise ValueError("gradient rows must be a 2-d array")
    K = G @ G.T
    return 0.5 * (K + K.T)


def kernel_spectrum(K: np.ndarray) -> np.ndarray:
    """Eigenvalues of a symmetric kernel, descending."""
    return np.linalg.eigvalsh(K)[::-1].copy()


def convergence_metrics(kernels: Mapping[str, np.ndarray]) -> Tuple[float, float]:
    """(c_total, c_partial) from per-operator kernels.

    The full-kernel trace equals the sum of the per-operator traces, so
    c_total needs no explicit stacked Gram matrix.
    """
    if not kernels:
        raise ValueError("need at least one operator kernel")
    traces = {name: float(np.trace(K)) for name, K in kernels.items()}
    counts = {name: K.shape[0] for name, K in kernels.items()}
    n_total = sum(counts.values())
    c_total = sum(traces.values()) / n_total
    c_partial = sum(traces[n] / counts[n] for n in kernels)
    return c_total, c_partial


@dataclass
class NtkReport:
    architecture: Tuple[int, ...]
    param_count: int
    counts: Dict[str, int]
    kernels: Dict[str, np.ndarray]
    spectra: Dict[str, np.ndarray]         # per operator plus "full", descending
    c_total: float
    c_partial: float

    def check(self, sym_tol: float = 1e-10, psd_tol: float = 1e-8) -> None:
        """Raises if any kernel is asymmetric or indefinite beyond tolerance."""
        for name, K in self.kernels.items():
            asym = np.max(np.abs(K - K.T))
            scale = max(np.max(np.abs(K)), 1e-300)
            if asym > sym_tol * scale:
                raise ValueError(f"kernel {name} asymmetric: {asym:.3e}")
            eigs = self.spectra[name]
            if eigs[-1] < -psd_tol * max(eigs[0], 0.0):
                raise ValueError(f"kernel {name} indefinite: min eig {eigs[-1]:.3e}")


def kernel_report(assembler, theta, with_full_spectrum: bool = True) -> NtkReport:
    """Per-operator kernels, spectra, and convergence metrics at theta."""
    system = assembler.system(theta, with_jacobian=True)
    kernels: Dict[str, np.ndarray] = {}
    spectra: Dict[str, np.ndarray] = {}
    counts: Dict[str, int] = {}
    rows = []
    for block in system.blocks:
        K = empirical_kernel(block.jacobian)
        kernels[block.name] = K
        spectra[block.name] = kernel_spectrum(K)
        counts[block.name] = K.shape[0]
        rows.append(block.jacobian)
    c_total, c_partial = convergence_metrics(kernels)
    if with_full_spectrum:
        spectra["full"] = kernel_spectrum(empirical_kernel(np.concatenate(rows, axis=0)))
    dims = tuple(assembler.layer_dims)
    report = NtkReport(architecture=dims,
                       param_count=init_mlp(dims, seed=0).param_count,
                       counts=counts, kernels=kernels, spectra=spectra,
                       c_total=c_total, c_partial=c_partial)
    report.check()
    return report


def initialization_comparison(benchmark: Benchmark, levelset, interior, boundary,
                              initial, interface, hidden, seed: int,
                              rule: Optional[str] = None,
                              with_full_spectrum: bool = True):
    """Paired reports at initialization: extended-input network vs the plain
    (x, t) network with identical hidden sizes, on the same sample sets.

    Parabolic problems only (the plain baseline is scalar). Returns
    (extended report, plain report); the headline comparison is the
    c_total ratio.
    """
    if benchmark.spec.kind != PARABOLIC:
        raise ValueError("the initialization comparison is parabolic-only")
    d = benchmark.spec.spatial_dim
    hidden = tuple(int(h) for h in hidden)
    dims_xi = (d + 2, *hidden, 1)
    dims_vn = (d + 1, *hidden, 1)
    asm_xi = XiPinnAssembler(benchmark, levelset, interior, boundary, initial,
                             interface, dims_xi, rule=rule)
    asm_vn = VanillaAssembler(benchmark, levelset, interior, boundary, initial,
                              interface, dims_vn)
    theta_xi = init_mlp(dims_xi, seed=seed).to_flat()
    theta_vn = init_mlp(dims_vn, seed=seed).to_flat()
    rep_xi = kernel_report(asm_xi, theta_xi, with_full_spectrum)
    rep_vn = kernel_report(asm_vn, theta_vn, with_full_spectrum)
    return rep_xi, rep_vn


def save_spectrum_csv(path, spectra: Mapping[str, np.ndarray]) -> None:
    """CSV rows (operator, rank, eigenvalue), rank 1-based within operator."""
    with open(path, "w") as fh:
        fh.write("operator,rank,eigenvalue\n")
        for name in spectra:
            for rank, lam in enumerate(np.asarray(spectra[name]), start=1):
                fh.write(f"{name},{rank},{lam:.17g}\n")


def save_metrics_txt(path, metrics: Mapping[str, object]) -> None:
    """Plain key = value lines; floats at full precision."""
    with open(path, "w") as fh:
        for key, value in metrics.items():
            if isinstance(value, float):
                fh.write(f"{key} = {value:.17g}\n")
            else:
                fh.write(f"{key} = {value}\n")
