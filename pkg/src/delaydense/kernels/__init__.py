"""Kernel backend selection.

The compiled extension (delaydense._kernels, Cython) is preferred when it
imported cleanly; otherwise the pure-numpy backend is used.  Set
DELAYDENSE_BACKEND=pure (or =compiled) to force a choice; forcing `compiled`
when the extension is missing raises at import.

The Custom model carries a Python callable and always routes through the
pure backend regardless of the selection.
"""

import os

from . import _pure

_backend = None
_compiled = None

try:
    from .. import _kernels as _compiled  # noqa: F401
except ImportError:
    _compiled = None

_forced = os.environ.get("DELAYDENSE_BACKEND", "").strip().lower()
if _forced in ("pure", "py", "python"):
    _backend = _pure
elif _forced in ("compiled", "cy", "cython"):
    if _compiled is None:
        raise ImportError(
            "DELAYDENSE_BACKEND=compiled but delaydense._kernels is not built"
        )
    _backend = _compiled
else:
    _backend = _compiled if _compiled is not None else _pure

NAME = _backend.NAME
OVERFLOW_LIMIT = _pure.OVERFLOW_LIMIT

_CUSTOM = 5


def backend_name():
    return NAME


def has_compiled():
    return _compiled is not None


def get_backend(model_id=None):
    """Backend module for a model id (Custom always runs pure)."""
    if model_id == _CUSTOM:
        return _pure
    return _backend


def euler_run(model_id, params, u, n_steps, record, custom=None):
    return get_backend(model_id).euler_run(
        int(model_id), params, u, int(n_steps), bool(record), custom)


def ensemble_constant_final(model_id, params, x0s, n_steps, n_mesh, custom=None):
    return get_backend(model_id).ensemble_constant_final(
        int(model_id), params, x0s, int(n_steps), int(n_mesh), custom)


def batch_advance(model_id, params, U, n_steps, custom=None):
    return get_backend(model_id).batch_advance(
        int(model_id), params, U, int(n_steps), custom)


def cyclic_sup_distance(window, tmpl, kind):
    return _backend.cyclic_sup_distance(window, tmpl, int(kind))


def escape_time(model_id, params, u, tmpl_flat, tmpl_off, tmpl_kind, deltas,
                lo, hi, t_cap, custom=None):
    return get_backend(model_id).escape_time(
        int(model_id), params, u, tmpl_flat, tmpl_off, tmpl_kind, deltas,
        float(lo), float(hi), int(t_cap), custom)


def basin_classify(model_id, params, u0, max_units, tmpl_flat, tmpl_off,
                   tmpl_kind, tols, win_lens, custom=None):
    return get_backend(model_id).basin_classify(
        int(model_id), params, u0, int(max_units), tmpl_flat, tmpl_off,
        tmpl_kind, tols, win_lens, custom)


def count_pairs(pts, r2_sorted, theiler):
    return _backend.count_pairs(pts, r2_sorted, int(theiler))
