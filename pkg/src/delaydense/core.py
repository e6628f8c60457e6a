"""Fixed-step Euler integration and the discretized time-one map.

The integrator is explicit Euler with step h = 1/N on the uniform history
mesh; the time-one map is the N-fold composition of the single-step update
x_{n+1} = x_n + h * f(x_n, x_{n-N}).
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .errors import DomainError, Overflow
from .models import (DEFAULT_MESH, DelaySystem, FamilyId, HistoryVector,
                     InitialFamily, SolutionPath)


def _run(system: DelaySystem, u: np.ndarray, n_steps: int, record: bool):
    out, xs, blow = kernels.euler_run(
        system.model_id, system.param_vector(), u, n_steps, record,
        system.custom_rhs)
    if blow >= 0:
        raise Overflow(
            f"{system.name}: solution exceeded overflow threshold at "
            f"step {blow} of {n_steps}")
    return out, xs


def euler_step(system: DelaySystem, state: HistoryVector) -> HistoryVector:
    """One Euler step: shift the history left and append x_{n+1}."""
    out, _ = _run(system, state.values, 1, False)
    return HistoryVector(values=out, t_anchor=state.t_anchor + state.h)


def time_one_map(system: DelaySystem, state: HistoryVector,
                 n_units: int = 1) -> HistoryVector:
    """Advance the phase point by n_units delay times (N Euler steps each)."""
    out, _ = _run(system, state.values, n_units * state.n_mesh, False)
    return HistoryVector(values=out, t_anchor=state.t_anchor + float(n_units))


def integrate(system: DelaySystem, family: InitialFamily, t_end: float,
              n_mesh: int = DEFAULT_MESH) -> SolutionPath:
    """Solution x(t) on the uniform grid t_k = k/N, 0 <= t_k <= t_end.

    The segment [0, 1] comes from the family; the DDE drives t >= 1.
    """
    if t_end <= 0:
        raise DomainError("t_end must be positive")
    h = 1.0 / n_mesh
    n_total = int(math.ceil(t_end / h - 1e-9))
    times = np.arange(n_total + 1, dtype=np.float64) * h
    n_head = min(n_mesh, n_total)
    head = family.values(times[:n_head + 1])
    if n_total <= n_mesh:
        return SolutionPath(times=times, x=head, family=family)
    u0 = family.values(np.arange(n_mesh + 1, dtype=np.float64) / n_mesh)
    _, xs = _run(system, u0, n_total - n_mesh, True)
    return SolutionPath(times=times, x=np.concatenate([u0, xs]), family=family)


def scalar_solution_map(system: DelaySystem, family: InitialFamily,
                        t: float, n_mesh: int = DEFAULT_MESH) -> float:
    """The augmented-DDE solution map S_t applied to the family's parameter."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    if t == 0.0:
        return float(family.values(np.zeros(1))[0])
    path = integrate(system, family, t, n_mesh)
    return path.at(t)


def history_at(path: SolutionPath, t: float, n_mesh: int) -> HistoryVector:
    """Phase point at time t >= 1 extracted from a solution path."""
    h = 1.0 / n_mesh
    k = int(round(t / h))
    if k < n_mesh or k >= path.x.shape[0]:
        raise DomainError("t must satisfy 1 <= t <= path end")
    return HistoryVector(values=path.x[k - n_mesh:k + 1].copy(), t_anchor=k * h)
