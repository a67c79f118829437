"""Figures written next to the CSV outputs.

Uses :class:`matplotlib.figure.Figure` directly, so no GUI backend or
global pyplot state is involved.
"""

import numpy as np
from matplotlib.figure import Figure

from . import core


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)


def plot_trajectories(trajectories, path, coord=0, max_paths=10, resolution=400):
    fig = Figure(figsize=(7, 4))
    ax = fig.add_subplot()
    for tr in list(trajectories)[:max_paths]:
        ts = np.linspace(0.0, tr.horizon, resolution)
        ts = np.unique(np.concatenate([ts, tr.jump_times, np.nextafter(tr.jump_times, -np.inf)]))
        ts = ts[(ts >= 0) & (ts <= tr.horizon)]
        xs = [core.state_at(tr, t)[coord] for t in ts]
        ax.plot(ts, xs, lw=0.8)
    ax.set_xlabel("time")
    ax.set_ylabel(f"coordinate {coord}")
    _save(fig, path)


def plot_distance_curve(times, estimates, stderr, path, lower_bound=None, fit=None, label="estimate"):
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    est = np.asarray(estimates)
    se = np.asarray(stderr)
    pos = est > 0
    ax.errorbar(np.asarray(times)[pos], est[pos], yerr=se[pos], fmt="o", ms=3, label=label)
    if lower_bound is not None:
        ax.plot(times, lower_bound, "k--", label="lower bound")
    if fit is not None:
        ts = np.linspace(fit.window[0], fit.window[1], 100)
        ax.plot(ts, np.exp(fit.intercept - fit.rate * ts), "r-", label=f"rate {fit.rate:.3f}")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.legend()
    _save(fig, path)


def plot_density(grid, f_hat, path, f_true=None):
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    ax.plot(grid, f_hat, label="estimate")
    if f_true is not None:
        ax.plot(grid, f_true, "k--", label="exact")
    ax.set_xlabel("t")
    ax.set_ylabel("density")
    ax.legend()
    _save(fig, path)


def plot_kernel_sweep(rows, path):
    rows = np.asarray(rows)
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    ax.plot(rows[:, 0], rows[:, 1], label="H")
    ax.plot(rows[:, 0], rows[:, 2], label="J")
    ax.plot(rows[:, 0], rows[:, 1] + rows[:, 2], "k:", label="H + J")
    ax.set_xlabel("x")
    ax.legend()
    _save(fig, path)
