"""Ergodic parameters of computed trajectories.

Benettin Lyapunov spectra on the discretized time-one map (tangent vectors
propagated by central finite differences of the map), Kaplan-Yorke
dimension, and the Grassberger-Procaccia correlation dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import kernels
from .errors import (DegenerateTangent, DomainError, InsufficientPairs,
                     UndefinedDimension)
from .models import DelaySystem, SolutionPath
from .transient import SaddleRun

LOG2E = 1.0 / math.log(2.0)


@dataclass(frozen=True)
class LyapunovSpectrum:
    """Exponents in bits per unit time, sorted descending."""

    exponents: np.ndarray
    renorm_every: int
    n_steps: int

    def __post_init__(self):
        e = np.sort(np.asarray(self.exponents, dtype=np.float64))[::-1]
        if not np.all(np.isfinite(e)):
            raise DomainError("exponents must be finite")
        object.__setattr__(self, "exponents", e)

    @property
    def largest(self) -> float:
        return float(self.exponents[0])


@dataclass(frozen=True)
class PointCloud:
    """Finite point set in R^d (delay-embedded or trace-projected)."""

    points: np.ndarray

    def __post_init__(self):
        p = np.ascontiguousarray(self.points, dtype=np.float64)
        if p.ndim == 1:
            p = p[:, None]
        if not np.all(np.isfinite(p)):
            raise DomainError("cloud points must be finite")
        object.__setattr__(self, "points", p)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def _base_states(base_run: Union[SaddleRun, SolutionPath],
                 n_mesh: Optional[int]) -> np.ndarray:
    if isinstance(base_run, SaddleRun):
        return base_run.states
    if n_mesh is None:
        raise DomainError("n_mesh is required for a SolutionPath base run")
    x = base_run.x
    n_states = x.shape[0] // n_mesh - 1
    if n_states < 2:
        raise DomainError("path too short for one map step")
    states = np.empty((n_states, n_mesh + 1))
    for k in range(n_states):
        states[k] = x[k * n_mesh:(k + 1) * n_mesh + 1]
    return states


def lyapunov_spectrum(system: DelaySystem,
                      base_run: Union[SaddleRun, SolutionPath],
                      k: int = 5, renorm_every: int = 1,
                      seed: int = 0, delta: float = 1e-6,
                      n_mesh: Optional[int] = None,
                      tangent: str = "central-fd") -> LyapunovSpectrum:
    """Benettin exponents along a base run of the time-one map, in bits
    per unit time.

    tangent="central-fd" propagates tangent vectors by central differences
    J v ~ [S(x + d v) - S(x - d v)] / (2 d) with d = delta * sup|x|.
    tangent="finite" instead grows finite perturbations of fixed physical
    size d (forward differences against the unperturbed image, without the
    1/d normalization).  The finite mode is the right estimator when the
    feedback switches on mesh-quantized crossings (piecewise-constant
    forcing): there the mesh map is almost-everywhere contracting and
    infinitesimal tangents never see a switch shift.
    Gram-Schmidt re-orthonormalizes every renorm_every map steps.
    """
    states = _base_states(base_run, n_mesh)
    n_states = states.shape[0]
    if k > 8:
        raise DomainError("k must be <= 8")
    if n_states < 100 * renorm_every:
        raise DomainError("base run must span >= 100 * renorm_every steps")
    if tangent not in ("central-fd", "finite"):
        raise DomainError("tangent must be 'central-fd' or 'finite'")
    dim = states.shape[1]
    n_mesh = dim - 1
    rng = np.random.Generator(np.random.Philox(seed))
    V = _gram_schmidt(rng.standard_normal((k, dim)))
    params = system.param_vector()
    sums = np.zeros(k)
    n_intervals = 0
    step = 0
    while step + renorm_every <= n_states - 1:
        for _ in range(renorm_every):
            x = states[step]
            scale = delta * max(np.max(np.abs(x)), 1e-300)
            if tangent == "central-fd":
                batch = np.concatenate([x + scale * V, x - scale * V])
                adv, ok = kernels.batch_advance(system.model_id, params,
                                                batch, n_mesh,
                                                system.custom_rhs)
                if not ok.all():
                    raise DegenerateTangent("tangent propagation overflowed")
                V = (adv[:k] - adv[k:]) / (2.0 * scale)
            else:
                batch = np.concatenate([x[None, :], x + scale * V])
                adv, ok = kernels.batch_advance(system.model_id, params,
                                                batch, n_mesh,
                                                system.custom_rhs)
                if not ok.all():
                    raise DegenerateTangent("tangent propagation overflowed")
                V = (adv[1:] - adv[0]) / scale
            step += 1
        norms = np.empty(k)
        V = _gram_schmidt(V, norms)
        if np.any(norms <= 0.0) or not np.all(np.isfinite(norms)):
            raise DegenerateTangent("growth factor underflowed")
        sums += np.log2(norms)
        n_intervals += 1
    if n_intervals == 0:
        raise DomainError("base run too short")
    lam = sums / (n_intervals * renorm_every)
    return LyapunovSpectrum(exponents=lam, renorm_every=renorm_every,
                            n_steps=n_intervals * renorm_every)


def _gram_schmidt(V: np.ndarray, norms: Optional[np.ndarray] = None):
    out = np.array(V, dtype=np.float64)
    k = out.shape[0]
    for i in range(k):
        for j in range(i):
            out[i] -= (out[i] @ out[j]) * out[j]
        n = float(np.linalg.norm(out[i]))
        if norms is not None:
            norms[i] = n
        if n > 0:
            out[i] /= n
    return out


def kaplan_yorke(spectrum) -> float:
    """d_L = j + (sum_{i<=j} lambda_i) / |lambda_{j+1}| at the largest j
    whose prefix sum is positive."""
    lam = spectrum.exponents if isinstance(spectrum, LyapunovSpectrum) \
        else np.sort(np.asarray(spectrum, dtype=np.float64))[::-1]
    prefix = np.cumsum(lam)
    positive = np.flatnonzero(prefix > 0)
    if positive.size == 0:
        raise UndefinedDimension("no positive prefix sum")
    j = int(positive[-1])
    if j + 1 >= lam.shape[0] or lam[j + 1] >= 0:
        raise UndefinedDimension("no negative exponent follows the prefix")
    return float(j + 1 + prefix[j] / abs(lam[j + 1]))


def correlation_dimension(cloud: PointCloud, r_min: float, r_max: float,
                          n_r: int = 16, theiler: int = 10,
                          full_fit: bool = False):
    """Grassberger-Procaccia dimension estimate.

    C(r) = fraction of (Theiler-separated) pairs within distance r; the
    dimension is the least-squares slope of log C vs log r, fitted on the
    sub-window where the local slope is most stable (unless full_fit).
    Returns (dimension, diagnostics).
    """
    if cloud.size < 1000:
        raise DomainError("cloud must hold >= 1e3 points")
    if not (0 < r_min < r_max):
        raise DomainError("need 0 < r_min < r_max")
    rs = np.logspace(math.log10(r_min), math.log10(r_max), n_r)
    counts = kernels.count_pairs(cloud.points, rs ** 2, theiler)
    m = cloud.size
    n_pairs = m * (m - 1) // 2 - _theiler_excluded(m, theiler)
    C = counts / n_pairs
    if np.any(C == 0):
        raise InsufficientPairs(
            f"C(r) = 0 at r = {rs[np.argmax(C == 0)]:.3g}")
    logr = np.log(rs)
    logC = np.log(C)
    if full_fit:
        lo, hi = 0, n_r
    else:
        lo, hi = _stable_window(logr, logC)
    slope = float(np.polyfit(logr[lo:hi], logC[lo:hi], 1)[0])
    local = np.diff(logC) / np.diff(logr)
    return slope, {"r": rs, "C": C, "window": (int(lo), int(hi)),
                   "local_slopes": local}


def _theiler_excluded(m: int, w: int) -> int:
    # pairs (i, k), i < k <= i + w
    w = min(w, m - 1)
    return w * m - w * (w + 1) // 2


def _stable_window(logr: np.ndarray, logC: np.ndarray, min_len: int = 4,
                   max_var: float = 0.15):
    """Longest r-interval where the local slope varies by < max_var
    (relative to its mean); falls back to the full range."""
    n = logr.shape[0]
    local = np.diff(logC) / np.diff(logr)
    best = (0, n)
    best_len = -1.0
    for lo in range(n - min_len):
        for hi in range(lo + min_len, n):
            seg = local[lo:hi]
            mean = seg.mean()
            if mean <= 0:
                continue
            if np.max(np.abs(seg - mean)) <= max_var * mean:
                length = logr[hi] - logr[lo]
                if length > best_len:
                    best_len = length
                    best = (lo, hi + 1)
    return best


def embed_run(run: SaddleRun, columns: Sequence[int] = (0, -1)) -> PointCloud:
    """Delay-embed a tracked run by selecting history-vector components."""
    return PointCloud(points=run.states[:, list(columns)])


def circle_cloud(n: int, seed: int = 0, radius: float = 1.0) -> PointCloud:
    """n points uniform on a circle (dimension-1 oracle)."""
    rng = np.random.Generator(np.random.Philox(seed))
    th = rng.random(n) * 2.0 * np.pi
    return PointCloud(points=np.column_stack([radius * np.cos(th),
                                              radius * np.sin(th)]))


def square_cloud(n: int, seed: int = 0, side: float = 1.0) -> PointCloud:
    """n points uniform in a square (dimension-2 oracle)."""
    rng = np.random.Generator(np.random.Philox(seed))
    return PointCloud(points=rng.random((n, 2)) * side)
