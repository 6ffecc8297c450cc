"""Atomic CSV/JSON writers and the trajectory CSV format."""
import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .phsys import hamiltonian_batch
from .transcribe import Trajectory

SCHEMA_DIR = Path(__file__).parent / "schemas"


def load_schema(name):
    """JSON schema shipped for the artifact ``name`` (summary, certificate, diagnostics, sweep)."""
    with open(SCHEMA_DIR / f"{name}.schema.json") as fh:
        return json.load(fh)


def atomic_write_text(path, text):
    """Write ``text`` to ``path`` via a temporary file in the same directory and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj):
    """JSON text with sorted keys; non-finite floats become null."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj):
    atomic_write_text(path, dumps(obj))


def trajectory_header(n, m):
    return (
        ["t"]
        + [f"x_{i + 1}" for i in range(n)]
        + [f"u_{i + 1}" for i in range(m)]
        + [f"y_{i + 1}" for i in range(m)]
        + ["H", "dist_to_M"]
    )


def trajectory_csv(traj, sys, node_distances):
    """CSV text with one row per grid node.

    ``u`` and ``y`` belong to the interval starting at the node, so they are
    empty (nan) on the last row.  ``H`` and ``dist_to_M`` are node values.
    """
    n, m = sys.n, sys.m
    N = len(traj.t) - 1
    H = hamiltonian_batch(sys, traj.x)
    U = np.vstack([traj.u, np.full((1, m), np.nan)])
    Y = np.vstack([traj.y, np.full((1, m), np.nan)])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trajectory_header(n, m))
    for k in range(N + 1):
        row = [traj.t[k], *traj.x[k], *U[k], *Y[k], H[k], node_distances[k]]
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def write_trajectory(path, traj, sys, node_distances):
    atomic_write_text(path, trajectory_csv(traj, sys, node_distances))


def read_trajectory(path, n, m, theta=0.5):
    """Parse a trajectory CSV written by :func:`write_trajectory`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header != trajectory_header(n, m):
        raise ValueError(f"{path}: unexpected columns {header}")
    data = np.array(body, dtype=float)
    t = data[:, 0]
    x = data[:, 1 : 1 + n]
    u = data[:-1, 1 + n : 1 + n + m]
    y = data[:-1, 1 + n + m : 1 + n + 2 * m]
    return Trajectory(t, x, u, y, theta)


def table_csv(rows, columns):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    return buf.getvalue()
