"""On-disk containers for path ensembles and coupled ensembles.

Binary form is a NumPy ``.npz`` archive (bit-exact round trip). The CSV form
starts with one header line::

    # tcilab-ensemble d=2 n_steps=4 horizon=1.0 n_paths=3 seed=7

followed by a column header and one row per ``(path, node)`` holding the
values and, except on the last node, the increment leaving that node.
Coupled ensembles add a second value block (``xv``) and per-pair scalars.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .girsanov import CoupledEnsemble
from .sde import PathEnsemble, TimeGrid

__all__ = ["save_ensemble", "load_ensemble", "save_coupled", "load_coupled"]

_MAGIC = "tcilab-ensemble"
_MAGIC_COUPLED = "tcilab-coupled"


def _fmt(v):
    return repr(float(v))


def _seed(arr):
    s = str(arr)
    return int(s) if s else None


def _header(magic, grid, d, n, seed):
    return "# %s d=%d n_steps=%d horizon=%r n_paths=%d seed=%s\n" % (
        magic, d, grid.n_steps, grid.horizon, n, "" if seed is None else int(seed))


def _parse_header(line, magic):
    parts = line.lstrip("#").split()
    if not parts or parts[0] != magic:
        raise InvalidArgumentError("not a %s file" % magic)
    kv = dict(p.split("=", 1) for p in parts[1:])
    seed = int(kv["seed"]) if kv.get("seed") else None
    return int(kv["d"]), TimeGrid(float(kv["horizon"]), int(kv["n_steps"])), int(kv["n_paths"]), seed


def save_ensemble(path, ens: PathEnsemble, fmt: str = None):
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix == ".csv" else "npz")
    if fmt == "npz":
        arrays = {"values": ens.values,
                  "header": np.array([ens.dimension, ens.grid.n_steps, len(ens)], dtype=np.int64),
                  "horizon": np.array(ens.grid.horizon),
                  "seed": np.array("" if ens.seed is None else str(int(ens.seed)))}
        if ens.increments is not None:
            arrays["increments"] = ens.increments
        if ens.weights is not None:
            arrays["weights"] = ens.weights
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
        return path
    if fmt != "csv":
        raise InvalidArgumentError("unknown ensemble format %r" % (fmt,))
    d, N = ens.dimension, ens.grid.n_steps
    with open(path, "w", newline="") as fh:
        fh.write(_header(_MAGIC, ens.grid, d, len(ens), ens.seed))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "node", "t"] + ["x%d" % j for j in range(d)] + ["dw%d" % j for j in range(d)])
        times = ens.grid.times
        for i in range(len(ens)):
            for k in range(N + 1):
                row = [i, k, _fmt(times[k])] + [_fmt(v) for v in ens.values[i, k]]
                if ens.increments is not None and k < N:
                    row += [_fmt(v) for v in ens.increments[i, k]]
                else:
                    row += [""] * d
                w.writerow(row)
    return path


def load_ensemble(path) -> PathEnsemble:
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, newline="") as fh:
            d, grid, n, seed = _parse_header(fh.readline(), _MAGIC)
            r = csv.reader(fh)
            next(r)
            vals = np.empty((n, grid.n_steps + 1, d))
            incs = np.empty((n, grid.n_steps, d))
            has_inc = True
            for row in r:
                i, k = int(row[0]), int(row[1])
                vals[i, k] = [float(v) for v in row[3:3 + d]]
                if k < grid.n_steps:
                    if row[3 + d] == "":
                        has_inc = False
                    else:
                        incs[i, k] = [float(v) for v in row[3 + d:3 + 2 * d]]
        return PathEnsemble(grid, vals, incs if has_inc else None, seed)
    with np.load(path) as z:
        d, N, n = (int(v) for v in z["header"])
        return PathEnsemble(TimeGrid(float(z["horizon"]), N), z["values"],
                            z["increments"] if "increments" in z else None,
                            _seed(z["seed"]),
                            z["weights"] if "weights" in z else None)


def save_coupled(path, c: CoupledEnsemble, fmt: str = None):
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix == ".csv" else "npz")
    if fmt == "npz":
        with open(path, "wb") as fh:
            np.savez(fh, x=c.x, xv=c.xv, increments=c.increments, vdot=c.vdot,
                     truncated=c.truncated, v_energy=c.v_energy, log_density=c.log_density,
                     horizon=np.array(c.grid.horizon),
                     seed=np.array("" if c.seed is None else str(int(c.seed))))
        return path
    if fmt != "csv":
        raise InvalidArgumentError("unknown ensemble format %r" % (fmt,))
    n, N1, d = c.x.shape
    le, ld = c.v_energy, c.log_density
    with open(path, "w", newline="") as fh:
        fh.write(_header(_MAGIC_COUPLED, c.grid, d, n, c.seed))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "node", "t"] + ["x%d" % j for j in range(d)] + ["xv%d" % j for j in range(d)]
                   + ["dw%d" % j for j in range(d)] + ["vdot%d" % j for j in range(d)]
                   + ["v_energy", "log_density"])
        times = c.grid.times
        for i in range(n):
            for k in range(N1):
                row = [i, k, _fmt(times[k])] + [_fmt(v) for v in c.x[i, k]] + [_fmt(v) for v in c.xv[i, k]]
                if k < N1 - 1:
                    row += [_fmt(v) for v in c.increments[i, k]] + [_fmt(v) for v in c.vdot[i, k]]
                else:
                    row += [""] * (2 * d)
                row += [_fmt(le[i]), _fmt(ld[i])] if k == 0 else ["", ""]
                w.writerow(row)
    return path


def load_coupled(path) -> CoupledEnsemble:
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, newline="") as fh:
            d, grid, n, seed = _parse_header(fh.readline(), _MAGIC_COUPLED)
            r = csv.reader(fh)
            next(r)
            N = grid.n_steps
            x = np.empty((n, N + 1, d))
            xv = np.empty_like(x)
            inc = np.empty((n, N, d))
            vd = np.empty_like(inc)
            for row in r:
                i, k = int(row[0]), int(row[1])
                x[i, k] = [float(v) for v in row[3:3 + d]]
                xv[i, k] = [float(v) for v in row[3 + d:3 + 2 * d]]
                if k < N:
                    inc[i, k] = [float(v) for v in row[3 + 2 * d:3 + 3 * d]]
                    vd[i, k] = [float(v) for v in row[3 + 3 * d:3 + 4 * d]]
        return CoupledEnsemble(grid, seed, x, xv, inc, vd, np.zeros(n, dtype=bool))
    with np.load(path) as z:
        x = z["x"]
        grid = TimeGrid(float(z["horizon"]), x.shape[1] - 1)
        return CoupledEnsemble(grid, _seed(z["seed"]), x, z["xv"], z["increments"], z["vdot"],
                               z["truncated"])
