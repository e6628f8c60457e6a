"""Pure-numpy kernel backend.

Mirrors the compiled extension (delaydense._kernels) operation for
operation.  Scalar recurrences run as Python loops; ensemble and batch
operations vectorize across samples so each (sample, step) update performs
the same IEEE arithmetic as the compiled per-sample loop, keeping the two
backends bit-identical on the built-in models.
"""

import math

import numpy as np

NAME = "pure"

_MG, _PWC, _TENT, _LIN, _QUAD, _CUSTOM = range(6)

OVERFLOW_LIMIT = 1e12


def _pow(base, expo):
    # Match C pow(): negative base with fractional exponent -> nan,
    # huge results -> inf (Python raises instead).
    try:
        r = base ** expo
    except OverflowError:
        return math.inf
    except ValueError:
        return math.nan
    return r if isinstance(r, float) else math.nan


def _rhs_scalar(model_id, p, x, xl, custom):
    if model_id == _MG:
        return -p[0] * x + p[1] * xl / (1.0 + _pow(xl, p[2]))
    if model_id == _PWC:
        forcing = p[1] if (p[2] <= xl <= p[3]) else 0.0
        return -p[0] * x + forcing
    if model_id == _TENT:
        return (-x + 1.0 - 1.9 * math.fabs(xl)) / p[0]
    if model_id == _LIN:
        return p[0] * xl
    if model_id == _QUAD:
        return -(xl * xl)
    return custom(x, xl)


def _rhs_array(model_id, p, x, xl, custom):
    if model_id == _MG:
        return -p[0] * x + p[1] * xl / (1.0 + xl ** p[2])
    if model_id == _PWC:
        return -p[0] * x + np.where((xl >= p[2]) & (xl <= p[3]), p[1], 0.0)
    if model_id == _TENT:
        return (-x + 1.0 - 1.9 * np.abs(xl)) / p[0]
    if model_id == _LIN:
        return p[0] * xl
    if model_id == _QUAD:
        return -(xl * xl)
    return np.asarray([custom(a, b) for a, b in zip(x, xl)], dtype=np.float64)


def euler_run(model_id, params, u, n_steps, record, custom=None):
    """Advance one history by n_steps Euler steps.

    Returns (u_out, xs, blow_step): u_out is the trailing N+1 samples, xs the
    emitted values (length n_steps) if record else None, blow_step the 0-based
    step at which overflow occurred (-1 if none; samples from there on are nan).
    """
    p = params
    n = u.shape[0] - 1
    h = 1.0 / n
    buf = [float(v) for v in u]
    xs = np.full(n_steps, np.nan) if record else None
    blow = -1
    left = 0  # index of oldest sample in the ring
    for k in range(n_steps):
        x = buf[(left + n) % (n + 1)]
        xl = buf[left]
        xn = x + h * _rhs_scalar(model_id, p, x, xl, custom)
        if not (math.isfinite(xn) and math.fabs(xn) <= OVERFLOW_LIMIT):
            blow = k
            break
        buf[left] = xn
        left = (left + 1) % (n + 1)
        if record:
            xs[k] = xn
    out = np.asarray([buf[(left + i) % (n + 1)] for i in range(n + 1)])
    return out, xs, blow


def ensemble_constant_final(model_id, params, x0s, n_steps, n_mesh, custom=None):
    """Final value x(1 + n_steps*h) for constant initial histories x0s.

    Overflowed samples are returned as nan.
    """
    p = params
    m = x0s.shape[0]
    h = 1.0 / n_mesh
    ring = np.tile(np.asarray(x0s, dtype=np.float64)[:, None], (1, n_mesh + 1))
    return _batch_steps(model_id, p, ring, n_steps, h, custom)


def _batch_steps(model_id, p, ring, n_steps, h, custom):
    n = ring.shape[1] - 1
    left = 0
    for _ in range(n_steps):
        x = ring[:, (left + n) % (n + 1)]
        xl = ring[:, left]
        xn = x + h * _rhs_array(model_id, p, x, xl, custom)
        bad = ~(np.isfinite(xn) & (np.abs(xn) <= OVERFLOW_LIMIT))
        if bad.any():
            xn = np.where(bad, np.nan, xn)
        ring[:, left] = xn
        left = (left + 1) % (n + 1)
    right = ring[:, (left + n) % (n + 1)]
    return np.ascontiguousarray(right)


def batch_advance(model_id, params, U, n_steps, custom=None):
    """Advance m histories (rows of U) by n_steps each; nan rows overflowed."""
    p = params
    U = np.array(U, dtype=np.float64, copy=True)
    n = U.shape[1] - 1
    h = 1.0 / n
    left = 0
    for _ in range(n_steps):
        x = U[:, (left + n) % (n + 1)]
        xl = U[:, left]
        xn = x + h * _rhs_array(model_id, p, x, xl, custom)
        bad = ~(np.isfinite(xn) & (np.abs(xn) <= OVERFLOW_LIMIT))
        if bad.any():
            xn = np.where(bad, np.nan, xn)
        U[:, left] = xn
        left = (left + 1) % (n + 1)
    if left:
        U = np.concatenate([U[:, left:], U[:, :left]], axis=1)
    ok = np.isfinite(U).all(axis=1)
    return np.ascontiguousarray(U), ok


def cyclic_sup_distance(window, tmpl, kind):
    """min over cyclic alignments of sup |window - template|.

    kind 0 (fixed point): template is a single value.
    kind 1 (periodic): template holds one period of samples.
    """
    w = np.asarray(window, dtype=np.float64)
    t = np.asarray(tmpl, dtype=np.float64)
    if kind == 0 or t.shape[0] == 1:
        return float(np.max(np.abs(w - t[0])))
    P = t.shape[0]
    W = w.shape[0]
    reps = (P + W - 1) // P + 1
    ext = np.tile(t, reps)
    windows = np.lib.stride_tricks.sliding_window_view(ext, W)[:P]
    return float(np.min(np.max(np.abs(windows - w), axis=1)))


def _in_region(u, tmpl_flat, tmpl_off, tmpl_kind, deltas, lo, hi):
    if np.min(u) < lo or np.max(u) > hi:
        return False
    for i in range(tmpl_off.shape[0] - 1):
        tm = tmpl_flat[tmpl_off[i]:tmpl_off[i + 1]]
        if cyclic_sup_distance(u, tm, tmpl_kind[i]) <= deltas[i]:
            return False
    return True


def escape_time(model_id, params, u, tmpl_flat, tmpl_off, tmpl_kind, deltas,
                lo, hi, t_cap, custom=None):
    """min{n > 0: S~^n(u) leaves the transient region}, capped at t_cap + 1."""
    n = u.shape[0] - 1
    cur = np.array(u, dtype=np.float64, copy=True)
    for step in range(1, t_cap + 1):
        cur, _, blow = euler_run(model_id, params, cur, n, False, custom)
        if blow >= 0:
            return step
        if not _in_region(cur, tmpl_flat, tmpl_off, tmpl_kind, deltas, lo, hi):
            return step
    return t_cap + 1


def basin_classify(model_id, params, u0, max_units, tmpl_flat, tmpl_off,
                   tmpl_kind, tols, win_lens, custom=None):
    """Evolve unit-by-unit; classify the trailing sample window each unit.

    win_lens[i] is the window length (samples) template i is matched over.
    Returns (label, units_used); label -1 if never uniquely matched.
    """
    n = u0.shape[0] - 1
    n_t = tmpl_off.shape[0] - 1
    W = max(int(w) for w in win_lens) if n_t else n + 1
    trail = np.array(u0[-min(W, n + 1):], dtype=np.float64)
    cur = np.array(u0, dtype=np.float64, copy=True)
    for unit in range(1, max_units + 1):
        cur, xs, blow = euler_run(model_id, params, cur, n, True, custom)
        if blow >= 0:
            return -1, unit
        trail = np.concatenate([trail, xs])[-W:]
        matches = []
        for i in range(n_t):
            wl = int(win_lens[i])
            if trail.shape[0] < wl:
                continue
            tm = tmpl_flat[tmpl_off[i]:tmpl_off[i + 1]]
            if cyclic_sup_distance(trail[-wl:], tm, tmpl_kind[i]) < tols[i]:
                matches.append(i)
        if len(matches) == 1:
            return matches[0], unit
    return -1, max_units


def count_pairs(pts, r2_sorted, theiler):
    """Cumulative pair counts: counts[j] = #{i<k: |p_i-p_k|^2 < r2_sorted[j]}.

    Pairs with |i - k| <= theiler are excluded.
    """
    pts = np.asarray(pts, dtype=np.float64)
    m = pts.shape[0]
    n_r = r2_sorted.shape[0]
    hist = np.zeros(n_r + 1, dtype=np.int64)
    chunk = max(1, 500_000 // max(m, 1))
    for i0 in range(0, max(m - 1, 0), chunk):
        i1 = min(i0 + chunk, m - 1)
        block = pts[i0:i1]
        d2 = np.sum((block[:, None, :] - pts[None, :, :]) ** 2, axis=2)
        ii = np.arange(i0, i1)[:, None]
        kk = np.arange(m)[None, :]
        vals = d2[kk > ii + theiler]
        # idx = #(r2 entries <= d2), so d2 < r2[j] iff idx <= j.
        idx = np.searchsorted(r2_sorted, vals, side="right")
        hist += np.bincount(idx, minlength=n_r + 1)
    return np.cumsum(hist)[:n_r]
