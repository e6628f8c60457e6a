"""Transient chaos machinery.

Basin-of-attraction rasters over two-parameter initial-function families,
boundary bisection, escape times over a transient region, and the saddle
trackers: straddle orbit, PIM, stagger-and-step, and the modified
stagger-and-step with per-iterate stagger search and backtracking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import kernels, parallel
from .core import integrate
from .errors import (BasinAmbiguity, DomainError, LostClassification,
                     NoInteriorMaximum, StaggerExhausted)
from .models import (DEFAULT_MESH, DelaySystem, FamilyId, HistoryVector,
                     InitialFamily, SolutionPath, linear, sinusoidal)

UNRESOLVED = -1
DEFAULT_T_CAP = 200


# ---------------------------------------------------------------------------
# Attractor templates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttractorTemplate:
    """One period of an attracting (or saddle) solution, sampled at h=1/N."""

    label: int
    kind: str                   # "periodic" | "fixed"
    samples: np.ndarray         # one full period (one value when fixed)
    period: float               # time units; 0 for fixed points
    tol: float                  # classification match tolerance

    def __post_init__(self):
        s = np.ascontiguousarray(self.samples, dtype=np.float64)
        if self.kind not in ("periodic", "fixed"):
            raise DomainError("kind must be 'periodic' or 'fixed'")
        if self.kind == "periodic" and s.shape[0] < 2:
            raise DomainError("periodic templates store >= one full period")
        object.__setattr__(self, "samples", s)

    @property
    def kind_code(self) -> int:
        return 0 if self.kind == "fixed" else 1

    @property
    def amplitude(self) -> float:
        return float(self.samples.max() - self.samples.min())

    def negated(self, label: int) -> "AttractorTemplate":
        return AttractorTemplate(label=label, kind=self.kind,
                                 samples=-self.samples, period=self.period,
                                 tol=self.tol)


def default_tol(samples: np.ndarray, frac: float = 0.05) -> float:
    amp = float(samples.max() - samples.min())
    if amp < 1e-9:
        return frac * max(1.0, abs(float(samples[0])))
    return frac * amp


def extract_template(tail: np.ndarray, n_mesh: int, label: int = 0,
                     max_period: float = 8.0, match_frac: float = 0.02,
                     tol_frac: float = 0.05) -> Optional[AttractorTemplate]:
    """Detect a fixed point or periodic cycle in a trajectory tail.

    The period is the smallest sample shift under which the final window
    repeats to within match_frac of the amplitude; returns None when the
    tail is neither constant nor periodic (chaotic segment).
    """
    tail = np.asarray(tail, dtype=np.float64)
    h = 1.0 / n_mesh
    amp = tail.max() - tail.min()
    if amp < 1e-9:
        x = float(tail.mean())
        return AttractorTemplate(label=label, kind="fixed",
                                 samples=np.array([x]), period=0.0,
                                 tol=tol_frac * max(1.0, abs(x)))
    p_max = min(int(max_period / h), tail.shape[0] // 2)
    p_min = max(4, int(0.2 / h))
    window = min(tail.shape[0] - p_max, 2 * p_max)
    if p_max <= p_min or window < p_min:
        return None
    seg = tail[-window:]
    best = None
    for p in range(p_min, p_max + 1):
        ref = tail[-window - p:-p]
        err = np.max(np.abs(seg - ref))
        if err < match_frac * amp:
            best = p
            break
    if best is None:
        return None
    # average consecutive cycles to cancel residual convergence error
    n_cycles = min(4, tail.shape[0] // best)
    stack = np.stack([tail[-(k + 1) * best:tail.shape[0] - k * best]
                      for k in range(n_cycles)])
    samples = stack.mean(axis=0)
    return AttractorTemplate(label=label, kind="periodic", samples=samples,
                             period=best * h, tol=default_tol(samples,
                                                              tol_frac))


def template_from_run(system: DelaySystem, family: InitialFamily,
                      t_max: float = 150.0, n_mesh: int = DEFAULT_MESH,
                      label: int = 0, settle_frac: float = 0.5,
                      max_period: float = 8.0) -> Optional[AttractorTemplate]:
    """Integrate to t_max and extract the attractor the orbit settled on."""
    path = integrate(system, family, t_max, n_mesh)
    tail = path.x[int(settle_frac * path.x.shape[0]):]
    return extract_template(tail, n_mesh, label=label, max_period=max_period)


def discover_attractors(system: DelaySystem,
                        seed_points: Sequence[Tuple[float, float]],
                        t_max: float = 300.0, n_mesh: int = DEFAULT_MESH,
                        family_kind: FamilyId = FamilyId.Linear,
                        max_period: float = 8.0,
                        ) -> List[AttractorTemplate]:
    """Integrate a set of (A, B) seeds and collect the distinct attractors
    they settle on (deduplicated by phase-aligned distance)."""
    found: List[AttractorTemplate] = []
    for A, B in seed_points:
        fam = linear(A, B) if family_kind == FamilyId.Linear \
            else sinusoidal(A, B)
        t = template_from_run(system, fam, t_max=t_max, n_mesh=n_mesh,
                              label=len(found), settle_frac=0.6,
                              max_period=max_period)
        if t is None:
            continue
        dup = False
        for s in found:
            if s.kind != t.kind:
                continue
            if s.kind == "fixed":
                if abs(s.samples[0] - t.samples[0]) < max(s.tol, t.tol):
                    dup = True
                    break
            elif kernels.cyclic_sup_distance(
                    t.samples, s.samples, 1) < 2.0 * max(s.tol, t.tol):
                dup = True
                break
        if not dup:
            found.append(t)
    return found


def mirror_templates(templates: Sequence[AttractorTemplate],
                     ) -> List[AttractorTemplate]:
    """Close the template set under x -> -x (exact negation).

    New labels continue after the existing ones; templates whose negation
    already matches a listed template (within its tol) are not duplicated.
    """
    out = list(templates)
    next_label = max(t.label for t in out) + 1 if out else 0
    for t in templates:
        neg = -t.samples
        dup = False
        for s in out:
            if s.kind == t.kind and s.samples.shape == neg.shape:
                if kernels.cyclic_sup_distance(neg, s.samples,
                                               s.kind_code) < s.tol:
                    dup = True
                    break
        if not dup:
            out.append(t.negated(next_label))
            next_label += 1
    return out


def _flatten_templates(templates: Sequence[AttractorTemplate],
                       n_mesh: int, widths=None):
    flat = np.concatenate([t.samples for t in templates]) if templates \
        else np.zeros(0)
    off = np.zeros(len(templates) + 1, dtype=np.int64)
    for i, t in enumerate(templates):
        off[i + 1] = off[i] + t.samples.shape[0]
    kind = np.array([t.kind_code for t in templates], dtype=np.int64)
    if widths is None:
        widths = np.array([t.tol for t in templates])
    # match over one template period (sub-sample period error accumulates
    # over longer windows); fixed points match over one delay interval
    wins = np.array([n_mesh + 1 if t.kind == "fixed"
                     else max(t.samples.shape[0], n_mesh + 1)
                     for t in templates], dtype=np.int64)
    return flat, off, kind, np.asarray(widths, dtype=np.float64), wins


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

def classify_attractor(path_tail, templates: Sequence[AttractorTemplate],
                       n_mesh: int = DEFAULT_MESH,
                       tol: Optional[float] = None) -> int:
    """Label of the unique template whose phase-aligned sup-distance to the
    tail is below tolerance; UNRESOLVED when none or several match."""
    if isinstance(path_tail, SolutionPath):
        tail = path_tail.x
    else:
        tail = np.asarray(path_tail, dtype=np.float64)
    matches = []
    for t in templates:
        need = n_mesh + 1 if t.kind == "fixed" else 2 * t.samples.shape[0]
        if tail.shape[0] < need:
            raise DomainError("tail must span >= 2x the template period")
        win = n_mesh + 1 if t.kind == "fixed" \
            else max(t.samples.shape[0], n_mesh + 1)
        d = kernels.cyclic_sup_distance(tail[-win:], t.samples, t.kind_code)
        if d < (tol if tol is not None else t.tol):
            matches.append(t.label)
    return matches[0] if len(matches) == 1 else UNRESOLVED


def _family_values(kind: FamilyId, A: float, B: float, n_mesh: int):
    grid = np.arange(n_mesh + 1, dtype=np.float64) / n_mesh
    if kind == FamilyId.Linear:
        return linear(A, B).values(grid)
    if kind == FamilyId.Sinusoidal:
        return sinusoidal(A, B).values(grid)
    raise DomainError("basin families are Linear or Sinusoidal")


def classify_point(system: DelaySystem, A: float, B: float,
                   templates: Sequence[AttractorTemplate], t_max: float,
                   family_kind: FamilyId = FamilyId.Linear,
                   n_mesh: int = DEFAULT_MESH) -> Tuple[int, int]:
    """Integrate the (A,B) initial function and classify; returns
    (label, units_used)."""
    u0 = _family_values(family_kind, A, B, n_mesh)
    flat, off, kind, tols, wins = _flatten_templates(templates, n_mesh)
    idx, units = kernels.basin_classify(
        system.model_id, system.param_vector(), u0, int(math.ceil(t_max)),
        flat, off, kind, tols, wins, system.custom_rhs)
    if idx < 0:
        return UNRESOLVED, units
    return templates[idx].label, units


# ---------------------------------------------------------------------------
# Basin rasters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BasinRaster:
    """Per-pixel attractor labels over an (A, B) rectangle.

    labels[i, j] classifies the initial function with A = a_vals[j],
    B = b_vals[i]; UNRESOLVED pixels hold -1.
    """

    a_vals: np.ndarray
    b_vals: np.ndarray
    labels: np.ndarray
    templates: tuple
    family_kind: FamilyId
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def resolution(self) -> Tuple[int, int]:
        return self.labels.shape[1], self.labels.shape[0]

    def label_counts(self) -> dict:
        vals, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}


def _symmetrize(vals: np.ndarray) -> np.ndarray:
    # exact antisymmetric grid: vals[i] == -vals[n-1-i] bitwise
    return 0.5 * (vals - vals[::-1])


def basin_raster(system: DelaySystem, rect: Tuple[float, float, float, float],
                 resolution: Tuple[int, int] = (512, 512),
                 t_max: float = 100.0,
                 templates: Sequence[AttractorTemplate] = (),
                 family_kind: FamilyId = FamilyId.Linear,
                 n_mesh: int = DEFAULT_MESH) -> BasinRaster:
    """Integrate-then-classify every pixel of an (A, B) grid.

    Pixels still unresolved at t_max keep the UNRESOLVED label.  When the
    rectangle is symmetric about the origin, the coordinate grid is built
    exactly antisymmetric so sign-flip symmetry of the dynamics is exact.
    """
    if not templates:
        raise DomainError("basin_raster needs at least one template")
    a0, a1, b0, b1 = rect
    w, hgt = resolution
    a_vals = np.linspace(a0, a1, w)
    b_vals = np.linspace(b0, b1, hgt)
    if abs(a0 + a1) < 1e-15 and abs(b0 + b1) < 1e-15:
        a_vals = _symmetrize(a_vals)
        b_vals = _symmetrize(b_vals)
    flat, off, kind, tols, wins = _flatten_templates(templates, n_mesh)
    labels = np.full((hgt, w), UNRESOLVED, dtype=np.int16)
    units = np.zeros((hgt, w), dtype=np.int32)
    params = system.param_vector()
    max_units = int(math.ceil(t_max))
    grid = np.arange(n_mesh + 1, dtype=np.float64) / n_mesh

    def work(lo, hi):
        for flat_idx in range(lo, hi):
            i, j = divmod(flat_idx, w)
            u0 = _family_values(family_kind, a_vals[j], b_vals[i], n_mesh)
            idx, n_units = kernels.basin_classify(
                system.model_id, params, u0, max_units, flat, off, kind,
                tols, wins, system.custom_rhs)
            labels[i, j] = templates[idx].label if idx >= 0 else UNRESOLVED
            units[i, j] = n_units

    parallel.run_chunked(work, w * hgt, chunk=max(64, w))
    return BasinRaster(a_vals=a_vals, b_vals=b_vals, labels=labels,
                       templates=tuple(templates), family_kind=family_kind,
                       meta={"t_max": t_max, "n_mesh": n_mesh,
                             "units": units})


def boundary_bisect(system: DelaySystem, pA: Tuple[float, float],
                    pB: Tuple[float, float],
                    templates: Sequence[AttractorTemplate],
                    eps: float = 1e-6, t_max: float = 100.0,
                    family_kind: FamilyId = FamilyId.Linear,
                    n_mesh: int = DEFAULT_MESH):
    """Refine a segment in the (A, B) plane to a straddling pair of points
    (< eps apart) lying in different basins."""
    pA = np.asarray(pA, dtype=np.float64)
    pB = np.asarray(pB, dtype=np.float64)

    def classify(pt, budget):
        return classify_point(system, pt[0], pt[1], templates, budget,
                              family_kind, n_mesh)[0]

    la = classify(pA, t_max)
    lb = classify(pB, t_max)
    if la == UNRESOLVED or lb == UNRESOLVED:
        raise LostClassification("endpoints must classify at t_max")
    if la == lb:
        raise DomainError("endpoints lie in the same basin")
    while np.linalg.norm(pA - pB) >= eps:
        mid = 0.5 * (pA + pB)
        lm = classify(mid, t_max)
        if lm == UNRESOLVED:
            lm = classify(mid, 2.0 * t_max)  # t_max doubled once
            if lm == UNRESOLVED:
                raise LostClassification(
                    f"midpoint {tuple(mid)} unresolved at 2x t_max")
        if lm == la:
            pA = mid
        else:
            # a third basin still straddles a boundary against pA
            pB, lb = mid, lm
    return tuple(pA), tuple(pB)


# ---------------------------------------------------------------------------
# Escape regions and times
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EscapeRegion:
    """R = {u in bbox: dist(u, A_i) > delta_i for all registered A_i}.

    The A_i include both attracting templates and saddle-type periodic
    orbits discovered by the unmodified tracker.
    """

    templates: tuple
    deltas: np.ndarray
    bbox: Tuple[float, float]

    def with_template(self, template: AttractorTemplate,
                      delta: float) -> "EscapeRegion":
        return EscapeRegion(templates=self.templates + (template,),
                            deltas=np.concatenate([self.deltas, [delta]]),
                            bbox=self.bbox)


def region_from_templates(templates: Sequence[AttractorTemplate],
                          delta, bbox: Tuple[float, float]) -> EscapeRegion:
    deltas = np.broadcast_to(np.asarray(delta, dtype=np.float64),
                             (len(templates),)).copy()
    if len(templates) and np.any(deltas <= 0):
        raise DomainError("delta must be positive")
    return EscapeRegion(templates=tuple(templates), deltas=deltas, bbox=bbox)


def escape_time(system: DelaySystem, state: HistoryVector,
                region: EscapeRegion, t_cap: int = DEFAULT_T_CAP) -> int:
    """T(u) = min{n > 0: S~^n(u) leaves R}, encoded as t_cap+1 when the
    orbit survives the whole cap."""
    flat, off, kind, deltas, _ = _flatten_templates(
        region.templates, state.n_mesh, widths=region.deltas)
    return kernels.escape_time(
        system.model_id, system.param_vector(), state.values, flat, off,
        kind, deltas, region.bbox[0], region.bbox[1], int(t_cap),
        system.custom_rhs)


def in_region(state: HistoryVector, region: EscapeRegion) -> bool:
    lo, hi = region.bbox
    if state.values.min() < lo or state.values.max() > hi:
        return False
    for t, d in zip(region.templates, region.deltas):
        if kernels.cyclic_sup_distance(state.values, t.samples,
                                       t.kind_code) <= d:
            return False
    return True


# ---------------------------------------------------------------------------
# Saddle runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SaddleRun:
    """A tracked trajectory of history vectors near the chaotic saddle."""

    states: np.ndarray          # (n, N+1)
    escape_times: np.ndarray    # (n,), -1 when not evaluated
    stagger_log: tuple          # (step, perturbation norm, tries used)
    eps: float
    t_anchor0: float = 1.0
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_steps(self) -> int:
        return self.states.shape[0]

    def right_series(self) -> np.ndarray:
        """x(t) at the map times (right endpoint of each history)."""
        return self.states[:, -1]

    def embed(self, columns=(0, -1)) -> np.ndarray:
        return self.states[:, list(columns)]

    def state(self, n: int) -> HistoryVector:
        return HistoryVector(values=self.states[n].copy(),
                             t_anchor=self.t_anchor0 + n)


def _perturbation(rng, dim: int, eps: float, eps_min: float) -> np.ndarray:
    """Direction uniform on the sphere, magnitude log-uniform in
    [eps_min, eps]."""
    direction = rng.standard_normal(dim)
    norm = np.linalg.norm(direction)
    while norm == 0.0:
        direction = rng.standard_normal(dim)
        norm = np.linalg.norm(direction)
    lo, hi = math.log10(eps_min), math.log10(eps)
    mag = 10.0 ** (lo + (hi - lo) * rng.random())
    return direction * (mag / norm)


def _advance(system: DelaySystem, values: np.ndarray) -> np.ndarray:
    out, _, blow = kernels.euler_run(system.model_id, system.param_vector(),
                                     values, values.shape[0] - 1, False,
                                     system.custom_rhs)
    if blow >= 0:
        raise DomainError("map application overflowed during tracking")
    return out


def straddle_orbit(system: DelaySystem, xA: HistoryVector, xB: HistoryVector,
                   eps: float, n_steps: int,
                   templates: Sequence[AttractorTemplate],
                   t_max: float = 60.0,
                   n_mesh: Optional[int] = None) -> SaddleRun:
    """Bisect the segment xA-xB to the basin boundary, then map both ends
    forward, re-bisecting whenever they separate by eps or more."""
    n_mesh = n_mesh or xA.n_mesh
    flat, off, kind, tols, wins = _flatten_templates(templates, n_mesh)
    params = system.param_vector()
    max_units = int(math.ceil(t_max))

    def classify_values(u):
        idx, _ = kernels.basin_classify(system.model_id, params, u, max_units,
                                        flat, off, kind, tols, wins,
                                        system.custom_rhs)
        if idx < 0:
            idx2, _ = kernels.basin_classify(
                system.model_id, params, u, 2 * max_units, flat, off, kind,
                tols, wins, system.custom_rhs)
            if idx2 < 0:
                raise BasinAmbiguity("bisection midpoint failed to classify")
            return idx2
        return idx

    a = np.array(xA.values)
    b = np.array(xB.values)
    la = classify_values(a)
    lb = classify_values(b)
    if la == lb:
        raise DomainError("straddle endpoints must lie in different basins")

    states, gaps = [], []

    def bisect():
        nonlocal a, b, la, lb
        while float(np.max(np.abs(a - b))) >= eps:
            mid = 0.5 * (a + b)
            lm = classify_values(mid)
            if lm == la:
                a = mid
            else:
                b, lb = mid, lm

    bisect()
    for step in range(n_steps):
        states.append(a.copy())
        gaps.append(float(np.max(np.abs(a - b))))
        a = _advance(system, a)
        b = _advance(system, b)
        if float(np.max(np.abs(a - b))) >= eps:
            bisect()
    return SaddleRun(states=np.asarray(states),
                     escape_times=np.full(len(states), -1, dtype=np.int64),
                     stagger_log=tuple(), eps=eps,
                     meta={"gaps": np.asarray(gaps), "kind": "straddle"})


def pim_orbit(system: DelaySystem, region: EscapeRegion,
              triple: Tuple[HistoryVector, HistoryVector, HistoryVector],
              n_refine: int = 12, eps: float = 1e-8, n_steps: int = 100,
              t_cap: int = DEFAULT_T_CAP) -> SaddleRun:
    """Proper-interior-maximum refinement along a segment, then stepping.

    Raises NoInteriorMaximum when no interior point of the refined segment
    beats both endpoints' escape times (the documented stall mode).
    """
    xa = np.array(triple[0].values)
    xc = np.array(triple[2].values)
    n_mesh = triple[0].n_mesh

    def T(u):
        return escape_time(system, HistoryVector(values=u), region, t_cap)

    states, times = [], []

    def refine():
        nonlocal xa, xc
        while float(np.max(np.abs(xa - xc))) >= eps:
            fracs = np.linspace(0.0, 1.0, n_refine)
            pts = [xa + f * (xc - xa) for f in fracs]
            Ts = np.array([T(p) for p in pts])
            interior = Ts[1:-1]
            m = int(np.argmax(interior)) + 1
            if Ts[m] <= max(Ts[0], Ts[-1]):
                raise NoInteriorMaximum(
                    f"no proper interior maximum among {n_refine} points "
                    f"(segment width {float(np.max(np.abs(xa - xc))):.3e})")
            xa, xc = pts[m - 1], pts[m + 1]

    refine()
    for step in range(n_steps):
        mid = 0.5 * (xa + xc)
        states.append(mid)
        times.append(T(mid))
        xa = _advance(system, xa)
        xc = _advance(system, xc)
        if float(np.max(np.abs(xa - xc))) >= eps:
            refine()
    return SaddleRun(states=np.asarray(states),
                     escape_times=np.asarray(times, dtype=np.int64),
                     stagger_log=tuple(), eps=eps, meta={"kind": "pim"})


def stagger_step(system: DelaySystem, region: EscapeRegion,
                 x0: HistoryVector, T_star: int, eps: float,
                 n_steps: int = 500, seed: int = 0,
                 t_cap: int = DEFAULT_T_CAP, attempt_cap: int = 5000,
                 eps_min: Optional[float] = None) -> SaddleRun:
    """Original stagger-and-step: perturb only when T(x) falls to T_star.

    Without a registered saddle-orbit template this converges to the
    saddle-type periodic orbit (the documented failure, exploited by
    discover_saddle_orbit)."""
    if eps_min is None:
        eps_min = eps * 1e-6
    if t_cap <= T_star:
        raise DomainError("t_cap must exceed T_star")
    rng = np.random.Generator(np.random.Philox(seed))
    flat, off, kind, deltas, _ = _flatten_templates(
        region.templates, x0.n_mesh, widths=region.deltas)
    params = system.param_vector()

    def T(u):
        return kernels.escape_time(system.model_id, params, u, flat, off,
                                   kind, deltas, region.bbox[0],
                                   region.bbox[1], t_cap, system.custom_rhs)

    def T_beats(u, bar):
        # escape time capped at bar decides "T(u) > bar" exactly
        capped = kernels.escape_time(system.model_id, params, u, flat, off,
                                     kind, deltas, region.bbox[0],
                                     region.bbox[1], min(int(bar), t_cap),
                                     system.custom_rhs)
        return capped > bar

    x = np.array(x0.values)
    Tx = T(x)
    if Tx <= T_star:
        raise DomainError(f"need T(x0) > T_star (got {Tx} <= {T_star})")
    states, times, log = [], [], []

    def partial(reason):
        return SaddleRun(states=np.asarray(states),
                         escape_times=np.asarray(times, dtype=np.int64),
                         stagger_log=tuple(log), eps=eps,
                         meta={"kind": "stagger", "T_star": T_star,
                               "t_cap": t_cap, "seed": seed,
                               "exhausted": reason})

    for step in range(n_steps):
        if Tx <= T_star:
            for attempt in range(1, attempt_cap + 1):
                r = _perturbation(rng, x.shape[0], eps, eps_min)
                if T_beats(x + r, T_star):
                    x = x + r
                    Tx = T(x)
                    log.append((step, float(np.linalg.norm(r)), attempt))
                    break
            else:
                # the documented stall: all nearby points exit the same way;
                # the partial run (typically hovering near a saddle-type
                # periodic orbit) rides along on the exception
                err = StaggerExhausted(
                    f"no stagger with T > {T_star} in {attempt_cap} draws "
                    f"at step {step}")
                err.partial_run = partial(True)
                raise err
        states.append(x.copy())
        times.append(Tx)
        x = _advance(system, x)
        Tx = Tx - 1 if Tx <= t_cap else T(x)
    return partial(False)


def modified_stagger_step(system: DelaySystem, region: EscapeRegion,
                          x0: HistoryVector, T_star: int, eps: float,
                          N_tries: int = 5, n_steps: int = 500, seed: int = 0,
                          t_cap: int = DEFAULT_T_CAP,
                          attempt_cap: int = 2000, backtrack_max: int = 10,
                          stall_budget: int = 150_000,
                          eps_min: Optional[float] = None) -> SaddleRun:
    """Modified stagger-and-step: search for a successful stagger (one that
    strictly increases the escape time) at every iterate, up to N_tries
    draws; while T <= T_star the search is mandatory.  On exhaustion the
    tracker reverts to the previous iterate (reaching progressively
    further back) and searches thoroughly; StaggerExhausted carries the
    partial run and is raised only after backtracking also fails, or after
    stall_budget draws pass without net forward progress."""
    if eps_min is None:
        eps_min = eps * 1e-6
    if t_cap <= T_star:
        raise DomainError("t_cap must exceed T_star")
    rng = np.random.Generator(np.random.Philox(seed))
    flat, off, kind, deltas, _ = _flatten_templates(
        region.templates, x0.n_mesh, widths=region.deltas)
    params = system.param_vector()

    def T(u):
        return kernels.escape_time(system.model_id, params, u, flat, off,
                                   kind, deltas, region.bbox[0],
                                   region.bbox[1], t_cap, system.custom_rhs)

    def T_beats(u, bar):
        # escape time capped at bar decides "T(u) > bar" exactly
        capped = kernels.escape_time(system.model_id, params, u, flat, off,
                                     kind, deltas, region.bbox[0],
                                     region.bbox[1], min(int(bar), t_cap),
                                     system.custom_rhs)
        return capped > bar

    x = np.array(x0.values)
    Tx = T(x)
    if Tx <= T_star:
        raise DomainError(f"need T(x0) > T_star (got {Tx} <= {T_star})")
    states, times, log = [], [], []
    backtracks = 0
    consecutive_backtracks = 0
    step = 0
    furthest = 0
    draws_since_progress = 0

    def exhausted(msg):
        err = StaggerExhausted(msg)
        err.partial_run = SaddleRun(
            states=np.asarray(states),
            escape_times=np.asarray(times, dtype=np.int64),
            stagger_log=tuple(log), eps=eps,
            meta={"kind": "modified-stagger", "T_star": T_star,
                  "t_cap": t_cap, "seed": seed, "exhausted": True,
                  "backtracks": backtracks})
        return err

    while step < n_steps:
        # stagger search at every iterate
        j = 0
        cap = attempt_cap
        while Tx <= t_cap:
            j += 1
            draws_since_progress += 1
            if draws_since_progress > stall_budget:
                raise exhausted(
                    f"no net progress past step {furthest} within "
                    f"{stall_budget} draws")
            r = _perturbation(rng, x.shape[0], eps, eps_min)
            if T_beats(x + r, Tx):
                x = x + r
                Tx = T(x)
                log.append((step, float(np.linalg.norm(r)), j))
                consecutive_backtracks = 0
                break
            if Tx > T_star and j >= N_tries:
                break  # optional search exhausted; keep the iterate
            if j >= cap:
                # mandatory search failed: revert, reaching progressively
                # further back (the exit funnel may have been entered many
                # iterates earlier), and search more thoroughly
                backtracks += 1
                consecutive_backtracks += 1
                if not states or consecutive_backtracks > backtrack_max:
                    raise exhausted(
                        f"mandatory stagger search failed at step {step} "
                        f"after {backtracks} backtracks")
                n_pop = min(2 ** consecutive_backtracks, 64, len(states))
                for _ in range(n_pop):
                    x = states.pop()
                    times.pop()
                    step -= 1
                Tx = T(x)
                j = 0
                cap = 10 * attempt_cap  # thorough search after reverting
        states.append(x.copy())
        times.append(Tx)
        x = _advance(system, x)
        Tx = Tx - 1 if Tx <= t_cap else T(x)
        step += 1
        if step > furthest:
            furthest = step
            draws_since_progress = 0
    return SaddleRun(states=np.asarray(states),
                     escape_times=np.asarray(times, dtype=np.int64),
                     stagger_log=tuple(log), eps=eps,
                     meta={"kind": "modified-stagger", "T_star": T_star,
                           "t_cap": t_cap, "seed": seed,
                           "backtracks": backtracks})


def discover_saddle_orbit(system: DelaySystem, region: EscapeRegion,
                          x0: HistoryVector, T_star: int, eps: float,
                          seed: int = 0, n_steps: int = 400,
                          t_cap: int = DEFAULT_T_CAP,
                          label: int = 1000) -> AttractorTemplate:
    """Run the unmodified tracker until it converges to a saddle-type
    periodic orbit and extract that orbit as a template.

    The failure mode of the original algorithm is repurposed as a way to
    find and approximate saddle-type periodic orbits for exclusion from
    the transient region.
    """
    try:
        run = stagger_step(system, region, x0, T_star, eps, n_steps=n_steps,
                           seed=seed, t_cap=t_cap, eps_min=eps * 1e-12)
    except StaggerExhausted as err:
        # stalling IS convergence to the orbit; use the partial run
        run = err.partial_run
    tmpl = saddle_orbit_from_run(run, label=label)
    if tmpl is None:
        raise DomainError("unmodified tracker did not settle on a periodic "
                          "orbit; cannot extract a saddle template")
    return tmpl


def saddle_orbit_from_run(run: SaddleRun, label: int = 1000,
                          max_period: float = 6.0,
                          match_frac: float = 0.08,
                          ) -> Optional[AttractorTemplate]:
    """Scan a tracked run for a near-periodic stretch and extract it.

    Consecutive states overlap by all but one delay unit, so concatenating
    the trailing unit of each reconstructs the h-resolution trajectory.
    """
    n_mesh = run.states.shape[1] - 1
    window_units = int(math.ceil(2.3 * max_period)) + 1
    k_units = min(run.n_steps - 1, window_units)
    starts = list(range(run.n_steps - k_units, 0, -max(1, k_units // 2)))
    for start in starts:
        pieces = [run.states[start]]
        pieces += [run.states[i][1:] for i in range(start + 1,
                                                    start + k_units)]
        tail = np.concatenate(pieces)
        tmpl = extract_template(tail, n_mesh, label=label,
                                max_period=min(max_period,
                                               (k_units - 1) / 2.2),
                                match_frac=match_frac)
        if tmpl is not None and tmpl.kind == "periodic":
            return tmpl
    return None
