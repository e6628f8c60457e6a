# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend: Euler recurrences, template distances, escape
times, basin classification, and correlation-sum pair counting.

Arithmetic matches the pure-numpy backend expression for expression (the
extension is compiled with -ffp-contract=off so results are bit-identical).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport NAN, fabs, isfinite, pow

cnp.import_array()

NAME = "compiled"

cdef double OVERFLOW_LIMIT = 1e12

ctypedef cnp.int64_t i64


cdef inline double c_rhs(int model_id, double* p, double x, double xl) noexcept nogil:
    if model_id == 0:    # Mackey-Glass
        return -p[0] * x + p[1] * xl / (1.0 + pow(xl, p[2]))
    elif model_id == 1:  # piecewise-constant feedback
        if p[2] <= xl and xl <= p[3]:
            return -p[0] * x + p[1]
        return -p[0] * x + 0.0
    elif model_id == 2:  # tent feedback
        return (-x + 1.0 - 1.9 * fabs(xl)) / p[0]
    elif model_id == 3:  # linear toy x' = alpha x(t-1)
        return p[0] * xl
    else:                # quadratic toy x' = -x(t-1)^2
        return -(xl * xl)


cdef void _rotate_left(double* a, int length, int shift) noexcept nogil:
    cdef int cnt = 0
    cdef int start, cur, nxt
    cdef double tmp
    for start in range(length):
        if cnt >= length:
            break
        cur = start
        tmp = a[start]
        while True:
            nxt = cur + shift
            if nxt >= length:
                nxt -= length
            if nxt == start:
                a[cur] = tmp
                cnt += 1
                break
            a[cur] = a[nxt]
            cur = nxt
            cnt += 1


cdef long _euler_ordered(int model_id, double* p, double* u, int n,
                         long n_steps, double* xs) noexcept nogil:
    """Advance history u (ordered oldest..newest, length n+1) by n_steps.

    Returns the 0-based blow-up step, or -1.  u stays ordered on return;
    emitted values go to xs when non-NULL.
    """
    cdef double h = 1.0 / n
    cdef long k
    cdef int left = 0
    cdef int newest
    cdef double x, xl, xn
    cdef long blow = -1
    for k in range(n_steps):
        newest = left + n
        if newest > n:
            newest -= n + 1
        x = u[newest]
        xl = u[left]
        xn = x + h * c_rhs(model_id, p, x, xl)
        if not (isfinite(xn) and fabs(xn) <= OVERFLOW_LIMIT):
            blow = k
            break
        u[left] = xn
        if xs != NULL:
            xs[k] = xn
        left += 1
        if left > n:
            left = 0
    if left != 0:
        _rotate_left(u, n + 1, left)
    return blow


def euler_run(int model_id, cnp.ndarray[double, ndim=1] params,
              cnp.ndarray[double, ndim=1] u, long n_steps, bint record,
              custom=None):
    cdef int n = u.shape[0] - 1
    cdef cnp.ndarray[double, ndim=1] buf = np.array(u, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] xs = np.full(max(n_steps, 1), np.nan)
    cdef double* xs_ptr = NULL
    if record:
        xs_ptr = &xs[0]
    cdef long blow
    with nogil:
        blow = _euler_ordered(model_id, &params[0], &buf[0], n, n_steps, xs_ptr)
    return buf, (xs[:n_steps] if record else None), int(blow)


def ensemble_constant_final(int model_id, cnp.ndarray[double, ndim=1] params,
                            cnp.ndarray[double, ndim=1] x0s, long n_steps,
                            int n_mesh, custom=None):
    cdef Py_ssize_t m = x0s.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(m)
    cdef cnp.ndarray[double, ndim=1] ring = np.empty(n_mesh + 1)
    cdef Py_ssize_t i
    cdef int j
    cdef long blow
    cdef double x0
    with nogil:
        for i in range(m):
            x0 = x0s[i]
            for j in range(n_mesh + 1):
                ring[j] = x0
            blow = _euler_ordered(model_id, &params[0], &ring[0], n_mesh,
                                  n_steps, NULL)
            out[i] = ring[n_mesh] if blow < 0 else NAN
    return out


def batch_advance(int model_id, cnp.ndarray[double, ndim=1] params,
                  cnp.ndarray[double, ndim=2] U, long n_steps, custom=None):
    cdef Py_ssize_t m = U.shape[0]
    cdef int n = U.shape[1] - 1
    cdef cnp.ndarray[double, ndim=2] out = np.ascontiguousarray(
        np.array(U, dtype=np.float64))
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ok = np.ones(m, dtype=np.uint8)
    cdef Py_ssize_t i
    cdef int j
    cdef long blow
    with nogil:
        for i in range(m):
            blow = _euler_ordered(model_id, &params[0], &out[i, 0], n,
                                  n_steps, NULL)
            if blow >= 0:
                ok[i] = 0
                for j in range(n + 1):
                    out[i, j] = NAN
    return out, ok.astype(bool)


cdef double _cyclic_dist(double* w, int W, double* t, int P, int kind,
                         double bail_above) noexcept nogil:
    """min over alignments of sup |w - cyclic t|.

    Alignments abort once their running max exceeds bail_above and the
    current best: the result is exact whenever it is <= bail_above, and
    otherwise just some value > bail_above (sufficient for threshold
    tests).  Pass bail_above = INFINITY for the exact minimum.
    """
    cdef double best = 1e308
    cdef double limit, cur, d
    cdef int k, i, j
    if kind == 0 or P == 1:
        cur = 0.0
        for i in range(W):
            d = fabs(w[i] - t[0])
            if d > cur:
                cur = d
        return cur
    for k in range(P):
        limit = best if best < bail_above else bail_above
        cur = 0.0
        j = k
        for i in range(W):
            d = fabs(w[i] - t[j])
            if d > cur:
                cur = d
                if cur > limit:
                    break
            j += 1
            if j >= P:
                j -= P
        if cur < best:
            best = cur
    return best


def cyclic_sup_distance(cnp.ndarray[double, ndim=1] window,
                        cnp.ndarray[double, ndim=1] tmpl, int kind):
    cdef double out
    with nogil:
        out = _cyclic_dist(&window[0], <int> window.shape[0],
                           &tmpl[0], <int> tmpl.shape[0], kind, 1e308)
    return out


cdef bint _in_region(double* u, int n, double* tf, i64* toff, i64* tkind,
                     double* deltas, long n_t, double lo, double hi) noexcept nogil:
    cdef int i
    cdef long ti
    cdef double d
    for i in range(n + 1):
        if u[i] < lo or u[i] > hi:
            return False
    for ti in range(n_t):
        d = _cyclic_dist(u, n + 1, tf + toff[ti],
                         <int> (toff[ti + 1] - toff[ti]), <int> tkind[ti],
                         deltas[ti])
        if d <= deltas[ti]:
            return False
    return True


def escape_time(int model_id, cnp.ndarray[double, ndim=1] params,
                cnp.ndarray[double, ndim=1] u,
                cnp.ndarray[double, ndim=1] tmpl_flat,
                cnp.ndarray[i64, ndim=1] tmpl_off,
                cnp.ndarray[i64, ndim=1] tmpl_kind,
                cnp.ndarray[double, ndim=1] deltas,
                double lo, double hi, int t_cap, custom=None):
    cdef int n = u.shape[0] - 1
    cdef cnp.ndarray[double, ndim=1] cur = np.array(u, dtype=np.float64)
    cdef long n_t = tmpl_off.shape[0] - 1
    if tmpl_flat.shape[0] == 0:
        tmpl_flat = np.zeros(1)
    if tmpl_kind.shape[0] == 0:
        tmpl_kind = np.zeros(1, dtype=np.int64)
    if deltas.shape[0] == 0:
        deltas = np.zeros(1)
    cdef int step
    cdef long blow
    cdef int result = t_cap + 1
    with nogil:
        for step in range(1, t_cap + 1):
            blow = _euler_ordered(model_id, &params[0], &cur[0], n, n, NULL)
            if blow >= 0:
                result = step
                break
            if not _in_region(&cur[0], n, &tmpl_flat[0], &tmpl_off[0],
                              &tmpl_kind[0], &deltas[0], n_t, lo, hi):
                result = step
                break
    return result


def basin_classify(int model_id, cnp.ndarray[double, ndim=1] params,
                   cnp.ndarray[double, ndim=1] u0, int max_units,
                   cnp.ndarray[double, ndim=1] tmpl_flat,
                   cnp.ndarray[i64, ndim=1] tmpl_off,
                   cnp.ndarray[i64, ndim=1] tmpl_kind,
                   cnp.ndarray[double, ndim=1] tols,
                   cnp.ndarray[i64, ndim=1] win_lens, custom=None):
    cdef int n = u0.shape[0] - 1
    cdef long n_t = tmpl_off.shape[0] - 1
    cdef long W = n + 1
    cdef long ti
    for ti in range(n_t):
        if win_lens[ti] > W:
            W = win_lens[ti]
    if tmpl_flat.shape[0] == 0:
        tmpl_flat = np.zeros(1)
    cdef cnp.ndarray[double, ndim=1] trail = np.full(W, np.nan)
    cdef long filled = min(n + 1, W)
    trail[W - filled:] = np.asarray(u0)[u0.shape[0] - filled:]
    cdef cnp.ndarray[double, ndim=1] cur = np.array(u0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] xs = np.empty(n)
    cdef int unit
    cdef long blow, wl, k
    cdef int n_match
    cdef long match_i
    cdef double d
    cdef int label = -1
    cdef int units_used = max_units
    with nogil:
        for unit in range(1, max_units + 1):
            blow = _euler_ordered(model_id, &params[0], &cur[0], n, n, &xs[0])
            if blow >= 0:
                units_used = unit
                break
            for k in range(W - n):
                trail[k] = trail[k + n]
            for k in range(n):
                trail[W - n + k] = xs[k]
            filled += n
            if filled > W:
                filled = W
            n_match = 0
            match_i = -1
            for ti in range(n_t):
                wl = win_lens[ti]
                if filled < wl:
                    continue
                d = _cyclic_dist(&trail[W - wl], <int> wl,
                                 &tmpl_flat[tmpl_off[ti]],
                                 <int> (tmpl_off[ti + 1] - tmpl_off[ti]),
                                 <int> tmpl_kind[ti], tols[ti])
                if d < tols[ti]:
                    n_match += 1
                    match_i = ti
            if n_match == 1:
                label = <int> match_i
                units_used = unit
                break
    return label, units_used


def count_pairs(cnp.ndarray[double, ndim=2] pts,
                cnp.ndarray[double, ndim=1] r2_sorted, long theiler):
    cdef Py_ssize_t m = pts.shape[0]
    cdef int d = <int> pts.shape[1]
    cdef Py_ssize_t n_r = r2_sorted.shape[0]
    cdef cnp.ndarray[i64, ndim=1] hist = np.zeros(n_r + 1, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=2] p = np.ascontiguousarray(pts)
    cdef Py_ssize_t i, k, lo, hi, mid
    cdef int c
    cdef double d2, diff
    with nogil:
        for i in range(m - 1):
            for k in range(i + theiler + 1, m):
                d2 = 0.0
                for c in range(d):
                    diff = p[i, c] - p[k, c]
                    d2 += diff * diff
                # index = #(r2 entries <= d2)
                lo = 0
                hi = n_r
                while lo < hi:
                    mid = (lo + hi) // 2
                    if r2_sorted[mid] <= d2:
                        lo = mid + 1
                    else:
                        hi = mid
                hist[lo] += 1
    return np.cumsum(hist)[:n_r]
