"""Plain-text output formats (CSV and PGM P2) with config headers.

Every file begins with comment lines recording the artifact version and
the fully resolved configuration of the run that produced it, so outputs
are reproducible and diffable.
"""

from __future__ import annotations

import numpy as np

from . import __version__
from .asymptotics import Histogram2D, TransitionMatrix
from .density import Density1D, SupportCurve
from .models import SolutionPath
from .transient import UNRESOLVED, BasinRaster, SaddleRun


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))  # shortest round-trip
    return str(x)


def header_lines(config: dict) -> list:
    lines = [f"# delaydense {__version__}"]
    for key in sorted(config):
        lines.append(f"# {key} = {_fmt(config[key])}")
    return lines


def write_csv(path, colnames, rows, config=None):
    with open(path, "w") as fh:
        for line in header_lines(config or {}):
            fh.write(line + "\n")
        fh.write(",".join(colnames) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_solution_path(path, sol: SolutionPath, config=None):
    write_csv(path, ("t", "x"), zip(sol.times, sol.x), config)


def write_density(path, dens: Density1D, config=None):
    rows = zip(dens.grid_edges[:-1], dens.grid_edges[1:], dens.mass_per_bin)
    write_csv(path, ("bin_left", "bin_right", "density"), rows, config)


def read_density(path) -> Density1D:
    lo, hi, val = [], [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("bin_left"):
                continue
            a, b, v = line.split(",")
            lo.append(float(a))
            hi.append(float(b))
            val.append(float(v))
    edges = np.array(lo + [hi[-1]])
    return Density1D(edges, np.array(val))


def write_support_curve(path, curve: SupportCurve, config=None):
    proj = curve.projection()
    rows = zip(curve.params, proj[:, 0], proj[:, 1])
    write_csv(path, ("s", "y0", "y1"), rows, config)


def write_transition_matrix(path, P: TransitionMatrix, config=None):
    rows = [(i, j, P.matrix[i, j])
            for j in range(P.size)
            for i in range(P.size)
            if P.matrix[i, j] != 0.0]
    write_csv(path, ("i", "j", "p_ij"), rows, config)


def write_saddle_run(path, run: SaddleRun, config=None):
    norm_by_step = {step: norm for step, norm, _ in run.stagger_log}
    rows = [(n, run.states[n, -1], run.escape_times[n],
             norm_by_step.get(n, 0.0)) for n in range(run.n_steps)]
    write_csv(path, ("step", "x_right_endpoint", "escape_time",
                     "stagger_norm"), rows, config)


def write_vector_csv(path, name, values, config=None):
    write_csv(path, ("index", name), enumerate(values), config)


def write_correlation_table(path, rs, Cs, config=None):
    write_csv(path, ("r", "C"), zip(rs, Cs), config)


# ---------------------------------------------------------------------------
# PGM (portable graymap, P2 ASCII, 8 bit)
# ---------------------------------------------------------------------------

def _write_pgm(path, gray: np.ndarray, comments):
    h, w = gray.shape
    with open(path, "w") as fh:
        fh.write("P2\n")
        for c in comments:
            fh.write(c + "\n")
        fh.write(f"{w} {h}\n255\n")
        for row in gray:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def write_histogram2d_pgm(path, hist: Histogram2D, config=None,
                          sidecar=None):
    """Counts rendered as linear grayscale (0 = empty, 255 = max count).

    Rows run from the top of the y-range down.  The sidecar text file
    documents the grid and the intensity scaling.
    """
    counts = hist.counts
    peak = counts.max() if counts.max() > 0 else 1
    gray = np.rint(counts[::-1, :] * (255.0 / peak)).astype(np.int64)
    _write_pgm(path, gray, header_lines(config or {}))
    if sidecar:
        with open(sidecar, "w") as fh:
            fh.write("\n".join(header_lines(config or {})) + "\n")
            fh.write(f"x_range = [{hist.x_edges[0]!r}, {hist.x_edges[-1]!r}]\n")
            fh.write(f"y_range = [{hist.y_edges[0]!r}, {hist.y_edges[-1]!r}]\n")
            fh.write(f"bins = {counts.shape[1]} x {counts.shape[0]}\n")
            fh.write(f"max_count = {int(peak)}\n")
            fh.write("intensity: gray = round(255 * count / max_count); "
                     "top row = largest x(t) bin\n")


def basin_gray_map(raster: BasinRaster) -> dict:
    """Label -> gray level: labels spread evenly on [0, 224],
    UNRESOLVED rendered as 255."""
    labels = sorted({t.label for t in raster.templates})
    n = max(len(labels), 1)
    table = {UNRESOLVED: 255}
    for k, lab in enumerate(labels):
        table[lab] = int(round(224.0 * (k + 1) / n))
    return table


def write_basin_pgm(path, raster: BasinRaster, config=None, sidecar=None):
    """Label raster as PGM; sidecar CSV maps label -> gray -> kind."""
    table = basin_gray_map(raster)
    gray = np.vectorize(table.get)(raster.labels)[::-1, :]
    _write_pgm(path, gray, header_lines(config or {}))
    if sidecar:
        kinds = {t.label: t.kind for t in raster.templates}
        kinds[UNRESOLVED] = "unresolved"
        rows = [(lab, table[lab], kinds.get(lab, "?"))
                for lab in sorted(table)]
        write_csv(sidecar, ("label", "gray", "attractor_kind"), rows, config)


def write_basin_csv(path, raster: BasinRaster, config=None):
    rows = [(raster.a_vals[j], raster.b_vals[i], int(raster.labels[i, j]))
            for i in range(raster.labels.shape[0])
            for j in range(raster.labels.shape[1])]
    write_csv(path, ("A", "B", "label"), rows, config)


# ---------------------------------------------------------------------------
# Attractor template files
# ---------------------------------------------------------------------------

def write_templates(path, templates, config=None):
    rows = []
    for t in templates:
        for i, v in enumerate(t.samples):
            rows.append((t.label, t.kind, _fmt(t.period), _fmt(t.tol), i, v))
    write_csv(path, ("label", "kind", "period", "tol", "sample_index",
                     "value"), rows, config)


def read_templates(path):
    from .transient import AttractorTemplate
    groups = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("label"):
                continue
            lab, kind, period, tol, idx, val = line.split(",")
            groups.setdefault(int(lab), {"kind": kind,
                                         "period": float(period),
                                         "tol": float(tol),
                                         "samples": []})
            groups[int(lab)]["samples"].append((int(idx), float(val)))
    out = []
    for lab in sorted(groups):
        g = groups[lab]
        samples = np.array([v for _, v in sorted(g["samples"])])
        out.append(AttractorTemplate(label=lab, kind=g["kind"],
                                     samples=samples, period=g["period"],
                                     tol=g["tol"]))
    return out
