"""Asymptotic and invariant density estimation.

Single-trajectory histograms, two-dimensional trace histograms, Ulam
transition matrices built from time series, their stationary vectors, and
the self-consistent transfer operator with convolution discretization.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .density import Density1D
from .errors import (DomainError, EmptyBin, EquilibriumTrap, NoConvergence,
                     Overflow, UnsupportedModel)
from .models import (DEFAULT_MESH, DelaySystem, InitialFamily, ModelId)

EQUILIBRIUM_TOL = 1e-10


# ---------------------------------------------------------------------------
# Time series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeSeries:
    """Samples x_k = x(k * h_sample) along one trajectory."""

    values: np.ndarray
    h_sample: float
    burn_in: int = 0

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.burn_in >= v.shape[0]:
            raise DomainError("burn_in must be smaller than the series")
        object.__setattr__(self, "values", v)

    @property
    def tail(self) -> np.ndarray:
        """Post-burn-in samples."""
        return self.values[self.burn_in:]


def generate_series(system: DelaySystem, family: InitialFamily,
                    h_sample: Optional[float] = None, n_samples: int = 10_000,
                    burn_in: int = 0,
                    n_mesh: int = DEFAULT_MESH) -> TimeSeries:
    """Sample one numerical solution every h_sample time units.

    h_sample defaults to the integration step 1/n_mesh and must be a
    multiple of it.  Warns EquilibriumTrap if the trajectory's last delay
    interval is constant to 1e-10.
    """
    if n_samples <= burn_in:
        raise DomainError("need n_samples > burn_in")
    h = 1.0 / n_mesh
    if h_sample is None:
        h_sample = h
    stride = int(round(h_sample / h))
    if stride < 1 or abs(stride * h - h_sample) > 1e-12:
        raise DomainError("h_sample must be a positive multiple of 1/n_mesh")
    grid = np.arange(n_mesh + 1, dtype=np.float64) / n_mesh
    u0 = family.values(grid)
    n_steps = (n_samples - 1) * stride
    u_fin, xs, blow = kernels.euler_run(system.model_id, system.param_vector(),
                                        u0, n_steps, True, system.custom_rhs)
    if blow >= 0:
        raise Overflow(f"trajectory overflowed at step {blow}")
    vals = np.concatenate([[u0[0]], xs[stride - 1::stride]])
    window = max(2, int(round(1.0 / h_sample)) + 1)
    tail = vals[-window:]
    if tail.max() - tail.min() < EQUILIBRIUM_TOL:
        warnings.warn("trajectory settled on a fixed point; histogram is "
                      "trivial", EquilibriumTrap)
    return TimeSeries(values=vals, h_sample=h_sample, burn_in=burn_in)


def solution_histogram(system: DelaySystem, family: InitialFamily,
                       h_sample: Optional[float] = None,
                       n_samples: int = 100_000, burn_in: int = 0,
                       bins=100, n_mesh: int = DEFAULT_MESH) -> Density1D:
    """Normalized histogram of post-burn-in samples of one trajectory."""
    series = generate_series(system, family, h_sample, n_samples, burn_in,
                             n_mesh)
    return histogram_of(series, bins)


def histogram_of(series: TimeSeries, bins=100) -> Density1D:
    tail = series.tail
    if isinstance(bins, (int, np.integer)):
        lo, hi = tail.min(), tail.max()
        if hi <= lo:
            hi = lo + 1e-9
        edges = np.linspace(lo, hi, int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=np.float64)
    return Density1D.from_samples(tail, edges)


# ---------------------------------------------------------------------------
# Two-dimensional trace histograms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Histogram2D:
    """Counts over a rectangular grid in the (x(t-1), x(t)) plane.

    counts[iy, ix]: ix bins x(t-1) (horizontal), iy bins x(t) (vertical).
    """

    x_edges: np.ndarray
    y_edges: np.ndarray
    counts: np.ndarray
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        c = np.ascontiguousarray(self.counts, dtype=np.int64)
        if np.any(c < 0):
            raise DomainError("counts must be nonnegative")
        if c.shape != (self.y_edges.shape[0] - 1, self.x_edges.shape[0] - 1):
            raise DomainError("counts shape must match the grid")
        object.__setattr__(self, "counts", c)

    def normalized(self) -> np.ndarray:
        """Density heights (mass / cell area)."""
        total = self.counts.sum()
        if total == 0:
            raise DomainError("empty histogram")
        areas = np.outer(np.diff(self.y_edges), np.diff(self.x_edges))
        return self.counts / (total * areas)

    def marginal_current(self) -> np.ndarray:
        """Counts of x(t) (the delayed coordinate integrated out)."""
        return self.counts.sum(axis=1)

    def marginal_delayed(self) -> np.ndarray:
        """Counts of x(t-1)."""
        return self.counts.sum(axis=0)


def trace_pairs(series: TimeSeries) -> np.ndarray:
    """Pairs (x(t-1), x(t)) over the post-burn-in samples, shape (m, 2)."""
    lag = int(round(1.0 / series.h_sample))
    if lag < 1:
        raise DomainError("h_sample must not exceed the delay time")
    start = max(series.burn_in, lag)
    cur = series.values[start:]
    delayed = series.values[start - lag:series.values.shape[0] - lag]
    return np.column_stack([delayed, cur])


def trace2d_histogram(system: DelaySystem, family: InitialFamily,
                      h_sample: Optional[float] = None,
                      n_samples: int = 100_000, burn_in: int = 0,
                      grid=100, n_mesh: int = DEFAULT_MESH) -> Histogram2D:
    """2-D histogram of (x(t-1), x(t)) along one trajectory."""
    series = generate_series(system, family, h_sample, n_samples, burn_in,
                             n_mesh)
    return trace2d_of(series, grid)


def trace2d_of(series: TimeSeries, grid=100) -> Histogram2D:
    pairs = trace_pairs(series)
    if isinstance(grid, (int, np.integer)):
        lo = pairs.min()
        hi = pairs.max()
        if hi <= lo:
            hi = lo + 1e-9
        x_edges = y_edges = np.linspace(lo, hi, int(grid) + 1)
    else:
        x_edges, y_edges = (np.asarray(g, dtype=np.float64) for g in grid)
    counts, _, _ = np.histogram2d(pairs[:, 1], pairs[:, 0],
                                  bins=(y_edges, x_edges))
    return Histogram2D(x_edges=x_edges, y_edges=y_edges,
                       counts=counts.astype(np.int64),
                       meta={"n_pairs": pairs.shape[0]})


# ---------------------------------------------------------------------------
# Ulam transition matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionMatrix:
    """Column-stochastic matrix: matrix[i, j] = P(target bin i | source j)."""

    matrix: np.ndarray
    partition_edges: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError("transition matrix must be square")
        if np.any(m < 0):
            raise DomainError("transition probabilities must be nonnegative")
        col = m.sum(axis=0)
        if np.any(np.abs(col - 1.0) > 1e-12):
            raise DomainError("columns must sum to 1")
        object.__setattr__(self, "matrix", m)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def ulam_matrix(series: TimeSeries, partition_edges: np.ndarray,
                return_occupation: bool = False):
    """Transition matrix P_ij = #{x_k in B_j, x_{k+1} in B_i} / #{x_k in B_j}.

    Transitions run over consecutive post-burn-in samples; raises EmptyBin(j)
    when some source bin is never visited.  With return_occupation=True also
    returns the normalized occupation histogram of the source samples (the
    vector that is almost a fixed point of P).
    """
    edges = np.asarray(partition_edges, dtype=np.float64)
    r = edges.shape[0] - 1
    tail = series.tail
    if tail.shape[0] < 2:
        raise DomainError("need at least two samples")
    idx = np.searchsorted(edges, tail, side="right") - 1
    idx[tail == edges[-1]] = r - 1
    valid = (idx >= 0) & (idx < r)
    src, tgt = idx[:-1], idx[1:]
    keep = valid[:-1] & valid[1:]
    src, tgt = src[keep], tgt[keep]
    counts = np.zeros((r, r), dtype=np.int64)
    np.add.at(counts, (tgt, src), 1)
    visits = counts.sum(axis=0)
    empty = np.flatnonzero(visits == 0)
    if empty.size:
        raise EmptyBin(int(empty[0]))
    P = TransitionMatrix(matrix=counts / visits, partition_edges=edges)
    if return_occupation:
        occupation = visits / visits.sum()
        return P, occupation
    return P


def stationary_vector(P: TransitionMatrix, tol: float = 1e-10,
                      max_iter: int = 1_000_000):
    """Power iteration to a fixed point p = Pp.

    Returns (p, info) where info records iterations, the final residual and
    a multiple_fixed_points flag (raised by reducible structure: columns
    that vanish off the diagonal).
    """
    m = P.matrix
    r = m.shape[0]
    absorbing = np.flatnonzero(np.isclose(np.diag(m), 1.0))
    multiple = r > 1 and absorbing.size >= 1
    p = np.full(r, 1.0 / r)
    residual = np.inf
    for it in range(1, max_iter + 1):
        p_new = m @ p
        s = p_new.sum()
        if s > 0:
            p_new = p_new / s
        residual = float(np.abs(p_new - p).sum())
        p = p_new
        if residual < tol:
            return p, {"iterations": it, "residual": residual,
                       "multiple_fixed_points": bool(multiple)}
    raise NoConvergence(
        f"power iteration: residual {residual:.3e} after {max_iter} steps")


# ---------------------------------------------------------------------------
# Self-consistent transfer operator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScpfState:
    """Grid, quadrature and feedback-inversion data for the operator
    (Qu)(x) = integral v(x - z) w(z) dz with
    v(x) = u(x/(1-alpha h)) / (1-alpha h),
    w(x) = sum over s in f^{-1}{x/h} of u(s) / (h |f'(s)|).

    The preimages s and weights 1/(h |f'(s)|) do not depend on u, so they
    are tabulated once at build time (pre_j / pre_s / pre_w, flattened over
    branches)."""

    alpha: float
    h: float
    grid: np.ndarray           # M+1 uniform points, M even
    simpson: np.ndarray        # quadrature weights on the grid
    feedback: Callable[[float], float] = field(repr=False)
    pre_j: np.ndarray = field(repr=False)
    pre_s: np.ndarray = field(repr=False)
    pre_w: np.ndarray = field(repr=False)

    @property
    def dx(self) -> float:
        return float(self.grid[1] - self.grid[0])


def _simpson_weights(n_points: int, dx: float) -> np.ndarray:
    if n_points < 3 or n_points % 2 == 0:
        raise DomainError("Simpson quadrature needs an even interval count")
    w = np.ones(n_points)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (dx / 3.0)


def _monotone_segments(f: Callable, lo: float, hi: float,
                       n_scan: int = 10_000) -> np.ndarray:
    """Breakpoints of monotonicity located by sign changes of a
    finite-difference derivative on a uniform scan."""
    xs = np.linspace(lo, hi, n_scan)
    fx = np.array([f(x) for x in xs])
    sign = np.sign(np.diff(fx))
    flips = np.flatnonzero(sign[1:] != sign[:-1])
    cuts = [lo] + [float(xs[i + 1]) for i in flips] + [hi]
    return np.unique(np.array(cuts))


def _bisect_segment(f: Callable, a: float, b: float, q: float) -> float:
    fa = f(a)
    x0, x1, f0 = a, b, fa
    for _ in range(80):
        mid = 0.5 * (x0 + x1)
        if (x1 - x0) < 1e-12:
            break
        fm = f(mid)
        if fm == q:
            return mid
        if (f0 - q) * (fm - q) <= 0.0:
            x1 = mid
        else:
            x0, f0 = mid, fm
    return 0.5 * (x0 + x1)


def scpf_build(system: DelaySystem, h: float, grid: np.ndarray) -> ScpfState:
    """Operator state for x' = -alpha x + f(x(t-1)) on a uniform grid.

    TentFeedback and MackeyGlass have registered feedback inversions;
    other models raise UnsupportedModel.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.shape[0] % 2 == 0:
        raise DomainError("grid must have an odd point count (even intervals)")
    dx = grid[1] - grid[0]
    if not np.allclose(np.diff(grid), dx, rtol=0, atol=1e-12 * abs(dx)):
        raise DomainError("grid must be uniform")
    p = system.params
    if system.model_id == ModelId.TentFeedback:
        eps = p["epsilon"]
        alpha = 1.0 / eps

        def feedback(y, _e=eps):
            return (1.0 - 1.9 * abs(y)) / _e
    elif system.model_id == ModelId.MackeyGlass:
        alpha = p["alpha"]
        beta, n = p["beta"], p["n"]

        def feedback(y, _b=beta, _n=n):
            return _b * y / (1.0 + abs(y) ** _n)
    else:
        raise UnsupportedModel(
            f"{system.name} has no registered feedback branch inverses")
    if alpha * h >= 1.0:
        raise DomainError("need h < 1/alpha for the Euler discretization")
    segs = _monotone_segments(feedback, float(grid[0]), float(grid[-1]))
    # enumerate preimages of every grid point once; u enters only later
    pre_j, pre_s, pre_w = [], [], []
    fd = 1e-7
    for j, xj in enumerate(grid):
        q = xj / h
        for a, b in zip(segs[:-1], segs[1:]):
            fa, fb = feedback(a), feedback(b)
            lo_v, hi_v = (fa, fb) if fa <= fb else (fb, fa)
            if not (lo_v <= q <= hi_v):
                continue
            s = _bisect_segment(feedback, a, b, q)
            deriv = (feedback(s + fd) - feedback(s - fd)) / (2 * fd)
            if abs(deriv) < 1e-12:
                continue
            pre_j.append(j)
            pre_s.append(s)
            pre_w.append(1.0 / (h * abs(deriv)))
    return ScpfState(alpha=alpha, h=h, grid=grid,
                     simpson=_simpson_weights(grid.shape[0], dx),
                     feedback=feedback,
                     pre_j=np.asarray(pre_j, dtype=np.int64),
                     pre_s=np.asarray(pre_s), pre_w=np.asarray(pre_w))


def _interp_u(grid: np.ndarray, u: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.interp(x, grid, u, left=0.0, right=0.0)


def _interval_average(grid: np.ndarray, u: np.ndarray, a: np.ndarray,
                      b: np.ndarray) -> np.ndarray:
    """Exact averages of the linear interpolant of u over [a_i, b_i].

    Cell averaging keeps spike densities (support narrower than the local
    sampling spacing) from being missed by pointwise tabulation.
    """
    dx = grid[1] - grid[0]
    # antiderivative of the interpolant at the grid nodes
    U = np.concatenate([[0.0], np.cumsum(0.5 * (u[1:] + u[:-1]) * dx)])

    def anti(x):
        x = np.clip(x, grid[0], grid[-1])
        k = np.clip(((x - grid[0]) / dx).astype(np.int64), 0, u.shape[0] - 2)
        s = x - grid[k]
        slope = (u[k + 1] - u[k]) / dx
        return U[k] + u[k] * s + 0.5 * slope * s * s

    width = b - a
    out = np.zeros_like(a, dtype=np.float64)
    ok = width > 0
    out[ok] = (anti(b[ok]) - anti(a[ok])) / width[ok]
    pointwise = _interp_u(grid, u, a)
    return np.where(ok, out, pointwise)


def scpf_tabulate(state: ScpfState, u: np.ndarray):
    """Tabulations (v on the offset lattice, w on the grid) for one step.

    u enters through cell averages of its linear interpolant, taken over
    each tabulation point's preimage cell.  v and w are then rescaled to
    unit mass (their analytic masses equal the mass of u by change of
    variables), so the discrete convolution conserves mass to rounding.
    """
    grid, dx = state.grid, state.dx
    M = grid.shape[0] - 1
    scale = 1.0 - state.alpha * state.h
    offsets = (np.arange(2 * M + 1) - M) * dx
    src = offsets / scale
    half = 0.5 * dx / abs(scale)
    v = _interval_average(grid, u, src - half, src + half) / abs(scale)
    v_mass = v.sum() * dx
    if v_mass > 0:
        v = v / v_mass
    w = np.zeros(M + 1)
    half_pre = 0.5 * dx * state.pre_w  # preimage cell width over h|f'|
    vals = _interval_average(grid, u, state.pre_s - half_pre,
                             state.pre_s + half_pre)
    np.add.at(w, state.pre_j, vals * state.pre_w)
    w_mass = float(w @ state.simpson)
    if w_mass > 0:
        w = w / w_mass
    return v, w


def scpf_apply(state: ScpfState, u: Density1D, method: str = "fft") -> Density1D:
    """One application of the self-consistent operator, renormalized."""
    u_pts = _density_to_points(state, u)
    out = _scpf_apply_points(state, u_pts, method)
    return _points_to_density(state, out)


def _scpf_apply_points(state: ScpfState, u: np.ndarray,
                       method: str = "fft") -> np.ndarray:
    # (Qu)_i = sum_j v_{i+M-j} w_j a_j: the "valid" window of conv(v, w*a)
    v, w = scpf_tabulate(state, u)
    wa = w * state.simpson
    M = state.grid.shape[0] - 1
    if method == "direct":
        qu = np.convolve(v, wa, mode="valid")
    elif method == "fft":
        L = 1 << int(np.ceil(np.log2(3 * M + 1)))
        full = np.fft.irfft(np.fft.rfft(v, L) * np.fft.rfft(wa, L), L)
        qu = full[M:2 * M + 1]
    else:
        raise DomainError("method must be 'direct' or 'fft'")
    qu = np.clip(qu, 0.0, None)
    mass = qu.sum() * state.dx
    return qu / mass if mass > 0 else qu


def _density_to_points(state: ScpfState, u: Density1D) -> np.ndarray:
    # cell averages around the grid points keep narrow spikes representable
    g, dx = state.grid, state.dx
    pts = np.array([u.mass_in(x - 0.5 * dx, x + 0.5 * dx) / dx for x in g])
    mass = pts.sum() * dx
    if mass <= 0:
        raise DomainError("density has no mass on the operator grid")
    return pts / mass


def _points_to_density(state: ScpfState, pts: np.ndarray) -> Density1D:
    g, dx = state.grid, state.dx
    edges = np.concatenate([[g[0] - 0.5 * dx], g + 0.5 * dx])
    dens = Density1D(edges, np.clip(pts, 0.0, None))
    return dens.normalized()


def scpf_iterate(state: ScpfState, u0: Density1D, n_iter: int,
                 method: str = "fft", keep_every: int = 0):
    """Fixed-point iteration u <- Qu.

    Returns (densities, diagnostics): densities holds the initial iterate,
    every keep_every-th intermediate (when keep_every > 0) and the final
    one; diagnostics records per-step L1 change, center of mass and
    standard deviation.
    """
    if n_iter < 1:
        raise DomainError("n_iter must be >= 1")
    pts = _density_to_points(state, u0)
    grid, dx = state.grid, state.dx
    l1, com, std = [], [], []
    keep = [_points_to_density(state, pts)]
    for k in range(1, n_iter + 1):
        new = _scpf_apply_points(state, pts, method)
        l1.append(float(np.abs(new - pts).sum() * dx))
        mass = new.sum() * dx
        c = float((grid * new).sum() * dx / mass)
        com.append(c)
        std.append(math.sqrt(max(0.0, float(((grid - c) ** 2 * new).sum()
                                            * dx / mass))))
        pts = new
        if keep_every and k % keep_every == 0 and k != n_iter:
            keep.append(_points_to_density(state, pts))
    keep.append(_points_to_density(state, pts))
    return keep, {"l1_change": np.array(l1), "center_of_mass": np.array(com),
                  "std": np.array(std)}
