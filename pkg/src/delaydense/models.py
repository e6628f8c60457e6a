"""DDE models, initial-function families, and the discretized phase point.

Time convention: the initial function occupies [0, 1] (generated from the
scalar parameter x0, e.g. by an ODE x' = g(x)); the delay equation
x'(t) = f(x(t), x(t-1)) is active for t >= 1.  The delay is rescaled to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Optional

import numpy as np

from .errors import InvalidParam, MissingParam

OVERFLOW_LIMIT = 1e12
DEFAULT_MESH = 256


class ModelId(IntEnum):
    MackeyGlass = 0
    PiecewiseConstant = 1
    TentFeedback = 2
    LinearToy = 3
    QuadraticToy = 4
    Custom = 5


# Parameter names required per model, in kernel packing order.
_PARAM_ORDER = {
    ModelId.MackeyGlass: ("alpha", "beta", "n"),
    ModelId.PiecewiseConstant: ("alpha", "c", "x1", "x2"),
    ModelId.TentFeedback: ("epsilon",),
    ModelId.LinearToy: ("alpha",),
    ModelId.QuadraticToy: (),
    ModelId.Custom: (),
}

_MODEL_ALIASES = {
    "mackeyglass": ModelId.MackeyGlass,
    "mackey-glass": ModelId.MackeyGlass,
    "mg": ModelId.MackeyGlass,
    "piecewiseconstant": ModelId.PiecewiseConstant,
    "piecewise-constant": ModelId.PiecewiseConstant,
    "pwc": ModelId.PiecewiseConstant,
    "tentfeedback": ModelId.TentFeedback,
    "tent": ModelId.TentFeedback,
    "lineartoy": ModelId.LinearToy,
    "linear-toy": ModelId.LinearToy,
    "quadratictoy": ModelId.QuadraticToy,
    "quadratic-toy": ModelId.QuadraticToy,
    "custom": ModelId.Custom,
}


def model_id_from_name(name) -> ModelId:
    if isinstance(name, ModelId):
        return name
    key = str(name).strip().lower().replace("_", "-")
    try:
        return _MODEL_ALIASES[key]
    except KeyError:
        raise InvalidParam(f"unknown model id: {name!r}") from None


@dataclass(frozen=True)
class DelaySystem:
    """A named DDE x'(t) = f(x(t), x(t-1)) with validated parameters."""

    model_id: ModelId
    params: dict
    delay: float = 1.0
    custom_rhs: Optional[Callable[[float, float], float]] = None

    def param_vector(self) -> np.ndarray:
        """Parameters packed in kernel order (zero-padded to length 4)."""
        order = _PARAM_ORDER[self.model_id]
        vec = np.zeros(4, dtype=np.float64)
        for i, name in enumerate(order):
            vec[i] = self.params[name]
        return vec

    @property
    def name(self) -> str:
        return self.model_id.name

    def __repr__(self):
        ps = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"DelaySystem({self.name}, {ps})"


def make_system(model_id, params=None, custom_rhs=None) -> DelaySystem:
    """Validate parameters and construct a DelaySystem.

    Raises MissingParam if a required parameter is absent, InvalidParam if
    an invariant is violated (MackeyGlass needs alpha,beta > 0 and n >= 1;
    PiecewiseConstant needs x1 < x2; TentFeedback needs epsilon > 0).
    """
    mid = model_id_from_name(model_id)
    params = dict(params or {})
    for name in _PARAM_ORDER[mid]:
        if name not in params:
            raise MissingParam(f"{mid.name} requires parameter {name!r}")
        params[name] = float(params[name])
        if not math.isfinite(params[name]):
            raise InvalidParam(f"parameter {name!r} must be finite")

    if mid == ModelId.MackeyGlass:
        if params["alpha"] <= 0 or params["beta"] <= 0:
            raise InvalidParam("MackeyGlass requires alpha > 0 and beta > 0")
        if params["n"] < 1:
            raise InvalidParam("MackeyGlass requires n >= 1")
    elif mid == ModelId.PiecewiseConstant:
        if not params["x1"] < params["x2"]:
            raise InvalidParam("PiecewiseConstant requires x1 < x2")
    elif mid == ModelId.TentFeedback:
        if params["epsilon"] <= 0:
            raise InvalidParam("TentFeedback requires epsilon > 0")
    elif mid == ModelId.Custom:
        if custom_rhs is None:
            raise MissingParam("Custom model requires a custom_rhs callable")

    return DelaySystem(model_id=mid, params=params, custom_rhs=custom_rhs)


def rhs(system: DelaySystem, x: float, x_lag: float) -> float:
    """Right-hand side f(x, x_lag) of the delay equation."""
    p = system.params
    mid = system.model_id
    if mid == ModelId.MackeyGlass:
        return -p["alpha"] * x + p["beta"] * x_lag / (1.0 + x_lag ** p["n"])
    if mid == ModelId.PiecewiseConstant:
        forcing = p["c"] if (p["x1"] <= x_lag <= p["x2"]) else 0.0
        return -p["alpha"] * x + forcing
    if mid == ModelId.TentFeedback:
        return (-x + 1.0 - 1.9 * math.fabs(x_lag)) / p["epsilon"]
    if mid == ModelId.LinearToy:
        return p["alpha"] * x_lag
    if mid == ModelId.QuadraticToy:
        return -(x_lag * x_lag)
    return system.custom_rhs(x, x_lag)


class FamilyId(IntEnum):
    Constant = 0
    Linear = 1
    Sinusoidal = 2
    OdeGenerated = 3


@dataclass(frozen=True)
class InitialFamily:
    """A one- or two-parameter family of initial functions on [0, 1].

    Constant(x0):    x(t) = x0
    Linear(A, B):    x(t) = A + B*t
    Sinusoidal(A,B): x(t) = A*cos(2 pi t) + B*sin(2 pi t)
    OdeGenerated:    x' = g(x), x(0) = x0, integrated with the same Euler step
    """

    family_id: FamilyId
    A: float = 0.0
    B: float = 0.0
    x0: float = 0.0
    g: Optional[Callable[[float], float]] = None

    def values(self, t: np.ndarray) -> np.ndarray:
        """Sample the initial function at times t in [0, 1]."""
        t = np.asarray(t, dtype=np.float64)
        fid = self.family_id
        if fid == FamilyId.Constant:
            return np.full_like(t, self.x0)
        if fid == FamilyId.Linear:
            return self.A + self.B * t
        if fid == FamilyId.Sinusoidal:
            return self.A * np.cos(2.0 * np.pi * t) + self.B * np.sin(2.0 * np.pi * t)
        # OdeGenerated: fixed-step Euler of x' = g(x) on [0,1]; t must be the
        # uniform grid produced by initial_history.
        n = t.shape[0] - 1
        h = 1.0 / n
        out = np.empty_like(t)
        out[0] = self.x0
        x = self.x0
        for k in range(n):
            x = x + h * self.g(x)
            out[k + 1] = x
        return out


def constant(x0: float) -> InitialFamily:
    return InitialFamily(FamilyId.Constant, x0=float(x0))


def linear(A: float, B: float) -> InitialFamily:
    return InitialFamily(FamilyId.Linear, A=float(A), B=float(B))


def sinusoidal(A: float, B: float) -> InitialFamily:
    return InitialFamily(FamilyId.Sinusoidal, A=float(A), B=float(B))


def ode_generated(g: Callable[[float], float], x0: float) -> InitialFamily:
    return InitialFamily(FamilyId.OdeGenerated, x0=float(x0), g=g)


@dataclass(frozen=True)
class HistoryVector:
    """Discretized phase point: u_i = x(t_anchor - 1 + i/N), i = 0..N."""

    values: np.ndarray
    t_anchor: float = 1.0

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.shape[0] < 3:
            raise InvalidParam("history vector needs >= 3 samples (n_mesh >= 2)")
        if not np.all(np.isfinite(vals)):
            raise InvalidParam("history vector values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def n_mesh(self) -> int:
        return self.values.shape[0] - 1

    @property
    def h(self) -> float:
        return 1.0 / self.n_mesh

    @property
    def right(self) -> float:
        """Current solution value x(t_anchor)."""
        return float(self.values[-1])

    def sup_distance(self, other: "HistoryVector") -> float:
        return float(np.max(np.abs(self.values - other.values)))


def initial_history(family: InitialFamily, n_mesh: int = DEFAULT_MESH) -> HistoryVector:
    """Sample the family on [0, 1]; the result is anchored at t = 1."""
    if n_mesh < 2:
        raise InvalidParam("n_mesh must be >= 2")
    t = np.arange(n_mesh + 1, dtype=np.float64) / n_mesh
    return HistoryVector(values=family.values(t), t_anchor=1.0)


@dataclass(frozen=True)
class SolutionPath:
    """Uniformly sampled solution x(t_k), t_k = k*h, k = 0..n."""

    times: np.ndarray
    x: np.ndarray
    family: InitialFamily = field(default=None, repr=False)

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=np.float64)
        v = np.ascontiguousarray(self.x, dtype=np.float64)
        if t.shape != v.shape:
            raise InvalidParam("times and values must have equal length")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "x", v)

    @property
    def h(self) -> float:
        return float(self.times[1] - self.times[0])

    def at(self, t: float) -> float:
        """Linear interpolation between mesh samples."""
        return float(np.interp(t, self.times, self.x))

    def tail(self, duration: float) -> np.ndarray:
        """Samples spanning the final `duration` time units."""
        n = int(round(duration / self.h)) + 1
        return self.x[-n:]
