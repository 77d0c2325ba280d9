"""File formats: long-format CSV curves, fit artifacts, result tables.

Input CSV is long format with header ``subject_id,var_role,var_index,time,
value`` (UTF-8): one row per observed point, var_role "x" or "y", var_index
1-based. Grids are the sorted unique times per subject and role and must be
fully crossed with the variable indices.

Fit artifacts are NumPy ``.npz`` containers with a magic string "NRRR1", a
format version, the factor matrices, ranks, knot vectors and degrees of both
bases, and the fit diagnostics. Arrays are stored in native float64, so a
save/load round trip is bit exact.

Numeric CSV output uses 17 significant digits (round-trip safe for doubles).
"""

import csv
from collections import defaultdict

import numpy as np

from .errors import DataError
from .basis import BasisSpec
from .integrate import FunctionalSample
from .estimators import NrrrFit, assemble_coef

CSV_COLUMNS = ("subject_id", "var_role", "var_index", "time", "value")
ARTIFACT_MAGIC = "NRRR1"
ARTIFACT_VERSION = 1

BENCHMARK_COLUMNS = ("setting", "snr", "rho", "method", "metric",
                     "trimmed_mean", "sd", "mean_r", "match_r",
                     "mean_rx", "match_rx", "mean_ry", "match_ry")


def _fmt(x):
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def read_long_csv(path):
    """Read curves from a long-format CSV.

    Returns (samples, subject_ids) with subjects in order of first
    appearance. Every sample must have complete x-side data; the y side is
    optional but must be complete for every subject that has any.
    """
    per_subject = defaultdict(lambda: {"x": {}, "y": {}})
    order = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file, header required")
        missing = set(CSV_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            sid = row["subject_id"]
            role = row["var_role"]
            if role not in ("x", "y"):
                raise DataError(f"{path}:{lineno}: var_role must be 'x' or 'y'")
            try:
                var = int(row["var_index"])
                t = float(row["time"])
                val = float(row["value"])
            except (TypeError, ValueError) as e:
                raise DataError(f"{path}:{lineno}: {e}") from None
            if var < 1:
                raise DataError(f"{path}:{lineno}: var_index must be >= 1")
            if sid not in per_subject:
                order.append(sid)
            cell = per_subject[sid][role]
            if (var, t) in cell:
                raise DataError(
                    f"{path}:{lineno}: duplicate point (subject {sid}, "
                    f"{role}{var}, t={t})"
                )
            cell[(var, t)] = val
    if not order:
        raise DataError(f"{path}: no data rows")
    samples = [_build_sample(path, sid, per_subject[sid]) for sid in order]
    p = samples[0].p
    for sid, s in zip(order, samples):
        if s.p != p:
            raise DataError(f"{path}: subject {sid} has {s.p} x-variables, "
                            f"expected {p}")
    return samples, order


def _build_sample(path, sid, cells):
    def grid_and_matrix(cell, role):
        times = sorted({t for (_, t) in cell})
        nvars = max(v for (v, _) in cell)
        mat = np.empty((len(times), nvars))
        mat.fill(np.nan)
        tidx = {t: i for i, t in enumerate(times)}
        for (v, t), val in cell.items():
            mat[tidx[t], v - 1] = val
        if np.isnan(mat).any():
            raise DataError(
                f"{path}: subject {sid} role {role}: incomplete grid "
                "(every variable needs a value at every time)"
            )
        return np.asarray(times, dtype=float), mat

    if not cells["x"]:
        raise DataError(f"{path}: subject {sid} has no x observations")
    x_grid, x_vals = grid_and_matrix(cells["x"], "x")
    if cells["y"]:
        y_grid, y_vals = grid_and_matrix(cells["y"], "y")
        return FunctionalSample(x_grid, x_vals, y_grid, y_vals)
    return FunctionalSample(x_grid, x_vals)


def write_long_csv(path, samples, subject_ids=None):
    """Write samples to the long CSV format accepted by :func:`read_long_csv`."""
    if subject_ids is None:
        subject_ids = [str(i + 1) for i in range(len(samples))]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for sid, s in zip(subject_ids, samples):
            for role, grid, vals in (("x", s.x_grid, s.x_vals),
                                     ("y", s.y_grid, s.y_vals)):
                if grid is None:
                    continue
                for i, t in enumerate(grid):
                    for v in range(vals.shape[1]):
                        writer.writerow([sid, role, v + 1, _fmt(float(t)),
                                         _fmt(float(vals[i, v]))])


def center_samples(samples):
    """Pointwise mean-centering per variable and time across subjects.

    Means are computed over all subjects observing a given (role, variable,
    time) combination; returns new samples.
    """
    sums = {"x": defaultdict(float), "y": defaultdict(float)}
    counts = {"x": defaultdict(int), "y": defaultdict(int)}
    for s in samples:
        for role, grid, vals in (("x", s.x_grid, s.x_vals),
                                 ("y", s.y_grid, s.y_vals)):
            if grid is None:
                continue
            for i, t in enumerate(grid):
                for v in range(vals.shape[1]):
                    sums[role][(v, t)] += vals[i, v]
                    counts[role][(v, t)] += 1
    out = []
    for s in samples:
        new = {}
        for role, grid, vals in (("x", s.x_grid, s.x_vals),
                                 ("y", s.y_grid, s.y_vals)):
            if grid is None:
                new[role] = (None, None)
                continue
            centered = vals.copy()
            for i, t in enumerate(grid):
                for v in range(vals.shape[1]):
                    key = (v, t)
                    centered[i, v] -= sums[role][key] / counts[role][key]
            new[role] = (grid, centered)
        out.append(FunctionalSample(new["x"][0], new["x"][1],
                                    new["y"][0], new["y"][1]))
    return out


def save_fit(path, fit, x_spec, y_spec):
    """Write a fitted model and its basis definitions to an .npz artifact."""
    r, rx, ry = fit.ranks
    np.savez(
        path,
        magic=np.array(ARTIFACT_MAGIC),
        version=np.array(ARTIFACT_VERSION),
        U=fit.U, V=fit.V, A=fit.A, B=fit.B,
        ranks=np.array([r, rx, ry]),
        sse=np.array(fit.sse),
        objective_trace=np.asarray(fit.objective_trace),
        converged=np.array(fit.converged),
        iters=np.array(fit.iters),
        x_knots=x_spec.knots, x_degree=np.array(x_spec.degree),
        y_knots=y_spec.knots, y_degree=np.array(y_spec.degree),
    )


def load_fit(path):
    """Read a fit artifact; returns (NrrrFit, x_spec, y_spec)."""
    with np.load(path, allow_pickle=False) as z:
        try:
            magic = str(z["magic"])
        except KeyError:
            raise DataError(f"{path}: not a fit artifact (no magic)") from None
        if magic != ARTIFACT_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if int(z["version"]) != ARTIFACT_VERSION:
            raise DataError(f"{path}: unsupported version {int(z['version'])}")
        U, V, A, B = z["U"], z["V"], z["A"], z["B"]
        x_spec = _spec_from_knots(z["x_knots"], int(z["x_degree"]))
        y_spec = _spec_from_knots(z["y_knots"], int(z["y_degree"]))
        C = assemble_coef(U, V, A, B, x_spec.num_funcs, y_spec.num_funcs)
        fit = NrrrFit(U=U, V=V, A=A, B=B, C=C, sse=float(z["sse"]),
                      objective_trace=z["objective_trace"],
                      converged=bool(z["converged"]), iters=int(z["iters"]))
    return fit, x_spec, y_spec


def _spec_from_knots(knots, degree):
    knots = np.asarray(knots, dtype=float)
    num_funcs = knots.size - degree - 1
    return BasisSpec(float(knots[0]), float(knots[-1]), degree, num_funcs,
                     knots)


def write_rows(path, columns, rows):
    """Write dict rows to CSV with a fixed column order, 17-digit floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])


def write_benchmark_csv(path, rows):
    write_rows(path, BENCHMARK_COLUMNS, rows)


def write_surface_csv(path, surface, s_grid, t_grid):
    """Long-format export of coef_surface output: columns k, l, s, t, value."""
    rows = []
    d, p = surface.shape[:2]
    for k in range(d):
        for l in range(p):
            for i, s in enumerate(s_grid):
                for j, t in enumerate(t_grid):
                    rows.append({"k": k + 1, "l": l + 1, "s": float(s),
                                 "t": float(t),
                                 "value": float(surface[k, l, i, j])})
    write_rows(path, ("k", "l", "s", "t", "value"), rows)


def write_curves_csv(path, curves, t_grid, subject_ids):
    """Predicted curves: columns subject_id, var_index, time, value."""
    rows = []
    for i, sid in enumerate(subject_ids):
        for v in range(curves.shape[2]):
            for j, t in enumerate(t_grid):
                rows.append({"subject_id": sid, "var_index": v + 1,
                             "time": float(t),
                             "value": float(curves[i, j, v])})
    write_rows(path, ("subject_id", "var_index", "time", "value"), rows)
