"""Delimited-text formats: trajectories, signals, words and Fock snapshots."""

from __future__ import annotations

import csv
import io

import numpy as np

from .dynamics import ControlSignal, TimeGrid, Trajectory
from .errors import BadConfig

STEP_RTOL = 1e-9


def fmt(x):
    return format(float(x), ".17g")


def _write_rows(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_series(path, times, columns, names):
    """Write ``t`` plus one column per entry of ``names``."""
    columns = np.asarray(columns, dtype=float).reshape(len(times), -1)
    rows = ([fmt(t)] + [fmt(v) for v in row] for t, row in zip(times, columns))
    _write_rows(path, ["t"] + list(names), rows)


def write_trajectory(path, traj):
    d, k = traj.state_dim, traj.control_dim
    names = [f"phi_{i + 1}" for i in range(d)] + [f"u_{j + 1}" for j in range(k)]
    cols = traj.states if k == 0 else np.hstack([traj.states, traj.controls])
    write_series(path, traj.times, cols, names)


def write_signal(path, signal, prefix):
    write_series(path, signal.grid.times, signal.values,
                 [f"{prefix}_{i + 1}" for i in range(signal.dim)])


def _parse_table(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise BadConfig(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise BadConfig(f"{path} is not UTF-8") from exc
    if not rows:
        raise BadConfig(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "t":
        raise BadConfig(f"{path}: row 1 (header) must start with 't'", row=1)
    data = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise BadConfig(f"{path}: row {i} has {len(row)} fields, expected {len(header)}", row=i)
        try:
            data.append([float(x) for x in row])
        except ValueError:
            raise BadConfig(f"{path}: row {i} contains a non-numeric field", row=i) from None
    if len(data) < 2:
        raise BadConfig(f"{path}: need at least two data rows")
    arr = np.array(data)
    if not np.all(np.isfinite(arr)):
        bad = int(np.argmax(~np.all(np.isfinite(arr), axis=1)))
        raise BadConfig(f"{path}: row {bad + 2} contains a non-finite value", row=bad + 2)
    t = arr[:, 0]
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (len(t) - 1)
    # step i ends on file row i + 3 (the header is row 1)
    for i, s in enumerate(steps):
        if not s > 0:
            raise BadConfig(f"{path}: time is not strictly increasing at row {i + 3}", row=i + 3)
    for i, s in enumerate(steps):
        if abs(s - steps[0]) > STEP_RTOL * max(abs(steps[0]), abs(t[i + 1]), 1.0):
            raise BadConfig(f"{path}: non-uniform time step at row {i + 3}", row=i + 3)
    return header, TimeGrid(float(t[0]), float(dt), len(t) - 1), arr[:, 1:]


def read_trajectory(path):
    header, grid, values = _parse_table(path)
    names = header[1:]
    phi = [i for i, n in enumerate(names) if n.startswith("phi_")]
    u = [i for i, n in enumerate(names) if n.startswith("u_")]
    if not phi or len(phi) + len(u) != len(names) or phi != list(range(len(phi))):
        raise BadConfig(f"{path}: row 1 (header) must read t,phi_1..phi_d[,u_1..u_k]", row=1)
    controls = values[:, u] if u else None
    return Trajectory(grid, values[:, phi], controls)


def read_signal(path, role="interactive"):
    _, grid, values = _parse_table(path)
    return ControlSignal(grid, values, role)


def write_words(path, words, partition, times):
    """``segment,start_t,end_t,w_1,...`` or ``...,code`` when quantized."""
    bp = partition.breakpoints
    if words.quantized:
        header = ["segment", "start_t", "end_t", "code"]
        rows = ([str(i), fmt(times[bp[i]]), fmt(times[bp[i + 1]]), str(int(c))]
                for i, c in enumerate(words.codes))
    else:
        dim = words.values.shape[1]
        header = ["segment", "start_t", "end_t"] + [f"w_{j + 1}" for j in range(dim)]
        rows = ([str(i), fmt(times[bp[i]]), fmt(times[bp[i + 1]])] + [fmt(v) for v in w]
                for i, w in enumerate(words.values))
    _write_rows(path, header, rows)


def write_fock_state(path, space, state):
    rows = ([str(i), " ".join(str(n) for n in occ), fmt(c.real), fmt(c.imag)]
            for i, (occ, c) in enumerate(zip(space.basis, state)))
    _write_rows(path, ["basis_index", "occupations", "re", "im"], rows)


def write_columns(path, x_name, y_name, x, y):
    rows = ([fmt(a), fmt(b)] for a, b in zip(x, y))
    _write_rows(path, [x_name, y_name], rows)
