"""Plain CSV readers and writers.

Every file starts with a ``# seed=... version=...`` comment line, optionally
followed by more ``# key=value`` comment lines.  Floats are written with
``repr`` so they round-trip exactly; mode coordinates are written as
integers.
"""

from __future__ import annotations

import contextlib
import csv
import io
import sys

import numpy as np

from . import __version__, core
from .errors import DomainError


def _num(v):
    return repr(float(v))


@contextlib.contextmanager
def _open_out(dest):
    if dest is None or dest == "-":
        yield sys.stdout
    elif isinstance(dest, io.IOBase) or hasattr(dest, "write"):
        yield dest
    else:
        with open(dest, "w", newline="") as fh:
            yield fh


def write_header(fh, seed, **meta):
    fh.write(f"# seed={seed} version={__version__}\n")
    for key, value in meta.items():
        fh.write(f"# {key}={value}\n")


def _state_cells(state, has_mode):
    cells = [_num(v) for v in state]
    if has_mode:
        cells[-1] = str(int(round(float(state[-1]))))
    return cells


def write_trajectories(dest, trajectories, seed, **meta):
    """Trajectory CSV: ``path_id,event_index,time,kind,coord_0,...``.

    Each path contributes an ``init`` row, one row per jump (post-jump
    state) and a closing ``horizon`` row.
    """
    trajectories = list(trajectories)
    size = trajectories[0].chars.size if trajectories else 1
    with _open_out(dest) as fh:
        write_header(fh, seed, **meta)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "event_index", "time", "kind"] + [f"coord_{i}" for i in range(size)])
        for pid, tr in enumerate(trajectories):
            mode = tr.chars.has_mode
            w.writerow([pid, 0, _num(0.0), "init"] + _state_cells(tr.initial_state, mode))
            kinds = tr.kinds()
            for k in range(tr.n_jumps):
                w.writerow([pid, k + 1, _num(tr.jump_times[k]), kinds[k]]
                           + _state_cells(tr.post_jump_states[k], mode))
            end = core.state_at(tr, tr.horizon)
            w.writerow([pid, tr.n_jumps + 1, _num(tr.horizon), "horizon"] + _state_cells(end, mode))


def write_embedded_chain(dest, chain, seed, **meta):
    """Embedded-chain CSV ``n,Z,S`` (``Z_0,Z_1,...`` for vector states)."""
    d = chain.Z.shape[1]
    zcols = ["Z"] if d == 1 else [f"Z_{i}" for i in range(d)]
    with _open_out(dest) as fh:
        write_header(fh, seed, **meta)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n"] + zcols + ["S"])
        for n, (z, s) in enumerate(zip(chain.Z, chain.S)):
            w.writerow([n] + [_num(v) for v in z] + [_num(s)])


def write_observation_chain(dest, chain, seed, has_mode=False, **meta):
    d = chain.states.shape[1]
    with _open_out(dest) as fh:
        write_header(fh, seed, **meta)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "time", "origin"] + [f"coord_{i}" for i in range(d)])
        for n, (t, s, o) in enumerate(zip(chain.times, chain.states, chain.origins)):
            w.writerow([n, _num(t), o] + _state_cells(s, has_mode))


def write_distance_curve(dest, times, estimates, stderr, n, seed, lower_bound=None, **meta):
    cols = ["t", "estimate", "stderr", "n"] + (["lower_bound"] if lower_bound is not None else [])
    with _open_out(dest) as fh:
        write_header(fh, seed, **meta)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for k, t in enumerate(times):
            row = [_num(t), _num(estimates[k]), _num(stderr[k]), int(n)]
            if lower_bound is not None:
                row.append(_num(lower_bound[k]))
            w.writerow(row)


def write_rate_fit(dest, fit, seed=None, header=True):
    with _open_out(dest) as fh:
        if header:
            if seed is not None:
                write_header(fh, seed)
            fh.write("rate,intercept,t_min,t_max,residual_rms\n")
        fh.write(",".join(_num(v) for v in (fit.rate, fit.intercept, fit.window[0],
                                               fit.window[1], fit.residual_rms)) + "\n")


def write_kernel_sweep(dest, rows, seed, **meta):
    with _open_out(dest) as fh:
        write_header(fh, seed, **meta)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "H_mass", "J_mass", "deviation"])
        for row in rows:
            w.writerow([_num(v) for v in row])


def write_density(dest, estimate, seed, f_true=None, **meta):
    """Density CSV ``t,f_hat[,f_true]`` preceded by the partition metadata."""
    part = estimate.partition
    blocks = ";".join(f"[{_num(b.lo)},{_num(b.hi)}{']' if b.closed else ')'}" for b in part.blocks)
    info = dict(
        x=_num(estimate.x),
        A=f"[{_num(part.set_A.lo)},{_num(part.set_A.hi)}]",
        blocks=blocks,
        bandwidth=_num(estimate.bandwidth),
        kernel=estimate.kernel_shape,
        n_used=estimate.n_used,
        zero_at_risk_points=int(np.sum(estimate.zero_at_risk)),
    )
    info.update(meta)
    with _open_out(dest) as fh:
        write_header(fh, seed, **info)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "f_hat"] + (["f_true"] if f_true is not None else []))
        for k, t in enumerate(estimate.grid):
            row = [_num(t), _num(estimate.values[k])]
            if f_true is not None:
                row.append(_num(f_true[k]))
            w.writerow(row)


# ---------------------------------------------------------------- readers

def read_table(path):
    """Header names and rows of a CSV file, skipping ``#`` comment lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        raise DomainError(f"{path}: no data")
    return rows[0], rows[1:]


def read_comments(path):
    """``key=value`` pairs from the leading comment lines."""
    out = {}
    with open(path) as fh:
        for ln in fh:
            if not ln.startswith("#"):
                break
            for part in ln[1:].split():
                if "=" in part:
                    k, v = part.split("=", 1)
                    out[k] = v
    return out


def read_embedded_chain(path):
    """Inverse of :func:`write_embedded_chain`."""
    from .chains import chain_from_arrays

    header, rows = read_table(path)
    if header[0] != "n" or header[-1] != "S":
        raise DomainError(f"{path}: expected columns n,Z...,S, got {header}")
    try:
        data = np.array(rows, dtype=float)
    except ValueError as exc:
        raise DomainError(f"{path}: non-numeric entry ({exc})") from None
    if data.size == 0:
        raise DomainError(f"{path}: no data rows")
    return chain_from_arrays(data[:, 1:-1], data[:, -1])


def read_samples(path, column=None):
    """One numeric column (by name, or the first one) of a CSV file.

    A file without a header row is read as bare numbers.
    """
    header, rows = read_table(path)
    try:
        float(header[0])
        rows = [header] + rows
        names = None
    except ValueError:
        names = header
    idx = 0
    if column is not None:
        if names is None or column not in names:
            raise DomainError(f"{path}: no column {column!r}")
        idx = names.index(column)
    try:
        return np.array([float(r[idx]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise DomainError(f"{path}: bad sample value ({exc})") from None
