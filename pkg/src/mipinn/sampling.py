"""Collocation point sampling.

All randomness flows through Philox counter-based generators keyed by
(seed, stream) so every sample set is reproducible independently of call
order. Interface samples are a distinct type carrying their own times and
unit normals; they cannot be passed where interior space-time points are
expected, which keeps the residual roles disjoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import Box, Disk, InterfaceGeometry

__all__ = [
    "make_rng",
    "InteriorSamples",
    "BoundarySamples",
    "InitialSamples",
    "InterfaceSamples",
    "sample_interior",
    "sample_boundary",
    "sample_initial",
    "interface_time_grid",
    "sample_interface",
    "evaluation_grid",
    "save_points_csv",
    "load_points_csv",
]


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator on an independent stream of the given seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), int(stream)))))


@dataclass(frozen=True)
class InteriorSamples:
    x: np.ndarray   # (N, d)
    t: np.ndarray   # (N,)


@dataclass(frozen=True)
class BoundarySamples:
    x: np.ndarray
    t: np.ndarray


@dataclass(frozen=True)
class InitialSamples:
    x: np.ndarray


@dataclass(frozen=True)
class InterfaceSamples:
    """Points on the interface with their times and unit normals (oriented
    from the minus region into the plus region)."""

    x: np.ndarray        # (N, d)
    t: np.ndarray        # (N,)
    normals: np.ndarray  # (N, d)
    times: np.ndarray    # the underlying time grid


def _domain_points(domain, n, rng) -> np.ndarray:
    lo, hi = domain.bounding_box()
    if isinstance(domain, Box):
        return rng.uniform(lo, hi, size=(n, domain.dim))
    out = np.empty((n, domain.dim))
    got = 0
    while got < n:
        cand = rng.uniform(lo, hi, size=(2 * (n - got) + 16, domain.dim))
        cand = cand[domain.contains(cand)]
        take = min(len(cand), n - got)
        out[got : got + take] = cand[:take]
        got += take
    return out


def sample_interior(domain, t_end: float, n: int, rng) -> InteriorSamples:
    if n <= 0:
        raise ValueError("need a positive sample count")
    return InteriorSamples(x=_domain_points(domain, n, rng),
                           t=rng.uniform(0.0, t_end, size=n))


def sample_boundary(domain, t_end: float, n: int, rng) -> BoundarySamples:
    """Points exactly on the spatial boundary, times uniform in [0, T].

    Box faces are picked proportionally to their measure, so the density is
    uniform over the whole boundary.
    """
    if n <= 0:
        raise ValueError("need a positive sample count")
    t = rng.uniform(0.0, t_end, size=n)
    if isinstance(domain, Disk):
        ang = rng.uniform(0.0, 2 * np.pi, size=n)
        c = np.asarray(domain.center)
        x = c + domain.radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return BoundarySamples(x=x, t=t)
    lo, hi = domain.bounding_box()
    d = domain.dim
    ext = hi - lo
    face_area = np.array([np.prod(np.delete(ext, i)) for i in range(d)])
    weights = np.repeat(face_area, 2)
    weights = weights / weights.sum()
    faces = rng.choice(2 * d, size=n, p=weights)
    x = rng.uniform(lo, hi, size=(n, d))
    for f in range(2 * d):
        axis, side = divmod(f, 2)
        sel = faces == f
        x[sel, axis] = lo[axis] if side == 0 else hi[axis]
    return BoundarySamples(x=x, t=t)


def sample_initial(domain, n: int, rng) -> InitialSamples:
    if n <= 0:
        raise ValueError("need a positive sample count")
    return InitialSamples(x=_domain_points(domain, n, rng))


def interface_time_grid(t_end: float, n_times: int) -> np.ndarray:
    """Fixed uniform grid over [0, T]; independent of the interior draw."""
    if n_times < 2:
        raise ValueError("interface residuals need at least two time slots")
    return np.linspace(0.0, float(t_end), n_times)


def sample_interface(geometry: InterfaceGeometry, times: np.ndarray,
                     n_per_time: int, rng) -> InterfaceSamples:
    """Interface points from the analytic parametrization, with normals from
    the normalized level-set gradient."""
    if geometry.analytic_points is None or geometry.analytic is None:
        raise ValueError(
            "benchmark has no analytic interface; build samples from an "
            "advected trajectory table instead"
        )
    xs, ts = [], []
    for tv in np.asarray(times, dtype=np.float64):
        pts = geometry.analytic_points(float(tv), n_per_time, rng)
        xs.append(pts)
        ts.append(np.full(len(pts), tv))
    x = np.concatenate(xs)
    t = np.concatenate(ts)
    grad = geometry.analytic.grad(x, t)
    normals = grad / np.linalg.norm(grad, axis=1, keepdims=True)
    return InterfaceSamples(x=x, t=t, normals=normals, times=np.asarray(times, float))


def evaluation_grid(domain, resolution: int, n_times: int, t_end: float):
    """Regular evaluation lattice: (X, t) flattened over space x time.

    For non-box domains only contained points are kept.
    """
    lo, hi = domain.bounding_box()
    axes = [np.linspace(lo[i], hi[i], resolution) for i in range(domain.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    if not isinstance(domain, Box):
        pts = pts[domain.contains(pts)]
    times = np.linspace(0.0, t_end, n_times)
    x = np.tile(pts, (n_times, 1))
    t = np.repeat(times, len(pts))
    return x, t


def save_points_csv(path, x: np.ndarray, t: np.ndarray) -> None:
    """Point-set CSV: one row per point, columns x1..xd,t (17 sig digits)."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    header = ",".join([f"x{i+1}" for i in range(x.shape[1])] + ["t"])
    np.savetxt(path, np.hstack([x, t]), delimiter=",", header=header,
               comments="", fmt="%.17g")


def load_points_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :-1], data[:, -1]
