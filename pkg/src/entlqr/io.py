"""CSV output at full double precision.

Every float is written with 17 significant digits so a CSV round-trips to
the exact binary value and reruns produce byte-identical files.
"""

from __future__ import annotations

import csv
import io as _io
import math
from pathlib import Path

import numpy as np

from .core import MatrixPath

TRACE_HEADER = ["iter", "cost", "gap", "l2dist", "linearRatio"]
TRANSFER_HEADER = ["rho", "seed", "perturbSize", "warmIters", "coldIters",
                   "warmExponent", "coldExponent"]
DIFFUSION_HEADER = ["mLabel", "noiseLabel", "mNorm", "noiseW2", "terminalW2",
                    "terminalTVBound", "gridN", "seed"]


def fmt(value) -> str:
    """Format a cell: integers as-is, floats with 17 significant digits, None as empty."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(value)


def to_csv(header, rows) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.write_text(to_csv(header, rows))
    return path


def path_rows(path: MatrixPath):
    """Rows ``t, M[0,0], M[0,1], ...`` (row-major) for each node."""
    r, c = path.shape
    header = ["t"] + [f"m{i}{j}" if max(r, c) <= 10 else f"m{i}_{j}"
                      for i in range(r) for j in range(c)]
    rows = [[t, *M.ravel()] for t, M in zip(path.grid.nodes, path.values)]
    return header, rows


def write_path(path, mpath: MatrixPath) -> Path:
    return write_csv(path, *path_rows(mpath))


def read_path(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a matrix-path CSV back as (times, flat row-major entries)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]


def trace_rows(trace):
    rows = []
    for i, (c, g, l2) in enumerate(zip(trace.costs, trace.gaps, trace.l2dists)):
        ratio = trace.gaps[i] / trace.gaps[i - 1] if i > 0 and trace.gaps[i - 1] > 0 else None
        rows.append([i, c, g, l2, ratio])
    return rows


def transfer_rows(sweep_rows):
    rows = []
    for row in sweep_rows:
        rep = row.report
        if rep is None:
            rows.append([row.rho, row.seed, None, None, None, None, None])
        else:
            rows.append([row.rho, row.seed, rep.perturb_size, rep.warm_iters, rep.cold_iters,
                         rep.warm_exponent, rep.cold_exponent])
    return rows


def diffusion_rows(records):
    return [[r.m_label, r.noise_label, r.m_norm, r.noise_w2, r.terminal_w2,
             r.terminal_tv_bound, r.grid_n, r.seed] for r in records]
