"""CSV and JSON formats for grid functions, states, matrices, trajectories and sweeps."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .fitting import DecayFit


def _write(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _read(path, header):
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        got = next(r)
        if [h.strip() for h in got] != header:
            raise ValueError(f"{path}: expected header {','.join(header)}, got {','.join(got)}")
        return [row for row in r if row]


def write_grid_function(path, f):
    f = np.asarray(f, dtype=float)
    x = np.arange(f.size) / (f.size - 1)
    return _write(path, ["x", "value"], zip(x, f))


def read_grid_function(path) -> np.ndarray:
    return np.array([float(v) for _, v in _read(path, ["x", "value"])])


def write_state(path, state):
    return _write(path, ["n", "coeff"], enumerate(np.asarray(state, dtype=float)))


def read_state(path) -> np.ndarray:
    rows = _read(path, ["n", "coeff"])
    out = np.zeros(max(int(n) for n, _ in rows) + 1)
    for n, c in rows:
        out[int(n)] = float(c)
    return out


def write_matrix(path, m):
    m = np.asarray(m, dtype=float)
    rows = ((i, j, m[i, j]) for i in range(m.shape[0]) for j in range(m.shape[1]))
    return _write(path, ["i", "j", "value"], rows)


def read_matrix(path) -> np.ndarray:
    rows = [(int(i), int(j), float(v)) for i, j, v in _read(path, ["i", "j", "value"])]
    n = max(r[0] for r in rows) + 1
    k = max(r[1] for r in rows) + 1
    m = np.zeros((n, k))
    for i, j, v in rows:
        m[i, j] = v
    return m


def write_trajectory(path, traj):
    """Single-path trajectory as ``t,n,coeff``."""
    S = traj.states
    if S.ndim != 2:
        raise ValueError("export one path at a time")
    rows = ((t, n, S[k, n]) for k, t in enumerate(traj.times) for n in range(S.shape[1]))
    return _write(path, ["t", "n", "coeff"], rows)


def read_trajectory(path):
    rows = [(float(t), int(n), float(c)) for t, n, c in _read(path, ["t", "n", "coeff"])]
    times = sorted({r[0] for r in rows})
    index = {t: k for k, t in enumerate(times)}
    d = max(r[1] for r in rows) + 1
    S = np.zeros((len(times), d))
    for t, n, c in rows:
        S[index[t], n] = c
    return np.array(times), S


def write_field_snapshots(path, times, fields):
    """Grid functions at several times as ``t,x,u``."""
    fields = np.atleast_2d(np.asarray(fields, dtype=float))
    x = np.arange(fields.shape[1]) / (fields.shape[1] - 1)
    rows = ((t, xi, u) for t, f in zip(times, fields) for xi, u in zip(x, f))
    return _write(path, ["t", "x", "u"], rows)


def read_field_snapshots(path):
    """Inverse of :func:`write_field_snapshots`: ``(times, fields)``."""
    rows = np.array([[float(v) for v in r] for r in _read(path, ["t", "x", "u"])])
    times = np.unique(rows[:, 0])
    return times, rows[:, 2].reshape(times.size, -1)


def write_sweep(path, params, estimates, stderrs):
    return _write(path, ["param", "estimate", "stderr"], zip(params, estimates, stderrs))


def read_sweep(path):
    rows = np.array([[float(v) for v in r] for r in _read(path, ["param", "estimate", "stderr"])])
    return rows[:, 0], rows[:, 1], rows[:, 2]


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def read_decay_fit(path) -> DecayFit:
    return DecayFit.from_dict(json.loads(Path(path).read_text()))


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"cannot serialise {type(o).__name__}")
