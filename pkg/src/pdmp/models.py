"""Bundled models: the TCP window-size process and Markov switching fields.

The TCP process grows linearly and is halved at jump times.  Its jump rate
is either the current window (``linear_rate``) or a constant ``r``
(``constant_rate``).  The switching model moves a position ``y`` along one
of several vector fields and switches fields at state-dependent rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.sparse.csgraph import connected_components

from .core import LocalCharacteristics, flow_path, simulate
from .errors import DomainError, InvariantViolation, ModelError
from .rng import RandomStream

TCP_VARIANTS = ("linear_rate", "constant_rate")

# fixed key for the deterministic points used by model validation
_CHECK_SEED = 0x5EED


# ---------------------------------------------------------------- TCP

@dataclass(frozen=True)
class TcpModel:
    variant: str = "linear_rate"
    r: float = 1.0

    def __post_init__(self):
        if self.variant not in TCP_VARIANTS:
            raise ModelError(f"variant must be one of {TCP_VARIANTS}")
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ModelError("r must be a positive real")


def _drift_flow(x, t):
    # array t -> one row per time
    return np.add.outer(t, x)


def _halve(x, stream=None):
    return x / 2.0


def _linear_rate(x):
    return float(x[0])


def _linear_hazard(x, t):
    return x[0] * t + 0.5 * t * t


def _linear_hazard_inverse(x, e):
    # root of t^2/2 + x t = e, written without cancellation for large x
    x0 = float(x[0])
    return 2.0 * e / (x0 + np.sqrt(x0 * x0 + 2.0 * e))


def _const_rate(r, x):
    return r


def _const_hazard(r, x, t):
    return r * t


def _const_hazard_inverse(r, x, e):
    return e / r


def _halving_mass(z, intervals):
    target = z[0] / 2.0
    return float(any(lo <= target <= hi for lo, hi in intervals))


def tcp_characteristics(model=TcpModel()):
    """Local characteristics of the TCP window-size process.

    The flow is ``x + t``, the kernel is the Dirac mass at ``x / 2`` and
    the flow never leaves ``[0, inf)``.  The hazard and its inverse are
    registered in closed form.
    """
    if isinstance(model, str):
        model = TcpModel(model)
    if model.variant == "linear_rate":
        rate, hazard, inverse = _linear_rate, _linear_hazard, _linear_hazard_inverse
    else:
        rate = partial(_const_rate, model.r)
        hazard = partial(_const_hazard, model.r)
        inverse = partial(_const_hazard_inverse, model.r)
    return LocalCharacteristics(
        state_dim=1,
        flow=_drift_flow,
        jump_rate=rate,
        transition_sampler=_halve,
        hazard=hazard,
        hazard_inverse=inverse,
        transition_mass=_halving_mass,
        vectorized_flow=True,
        name=f"tcp-{model.variant}",
    )


def _check_nonneg(**kwargs):
    for name, v in kwargs.items():
        if np.any(np.asarray(v) < 0) or np.any(np.isnan(v)):
            raise DomainError(f"{name} must be nonnegative")


def tcp_true_density(x, t):
    """Density of the first jump time from ``x``: ``(x+t) exp(-(x t + t^2/2))``."""
    _check_nonneg(x=x, t=t)
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    out = (x + t) * np.exp(-(x * t + 0.5 * t * t))
    return float(out) if out.ndim == 0 else out


def tcp_survival(x, t):
    _check_nonneg(x=x, t=t)
    out = np.exp(-(np.asarray(x, float) * t + 0.5 * np.asarray(t, float) ** 2))
    return float(out) if np.ndim(out) == 0 else out


def theoretical_rates():
    """Constants ``(c, lambda)`` of the explicit Wasserstein rate for TCP."""
    c = math.sqrt(2.0) * (3.0 + math.sqrt(3.0)) / 8.0
    lam = math.sqrt(2.0) * (1.0 - math.sqrt(c))
    return c, lam


def tv_lower_bound(x, y, t):
    """Probability that the lower start has not jumped by ``t``.

    Lower-bounds the total variation distance between the laws at time
    ``t`` of TCP paths started from ``x`` and ``y``.
    """
    _check_nonneg(x=x, y=y, t=t)
    t = np.asarray(t, dtype=float)
    out = np.exp(-0.5 * t * t - min(x, y) * t)
    return float(out) if out.ndim == 0 else out


def tcp_sample_at(x0, times, n_paths, seed, model=TcpModel(), chunk=1 << 16):
    """States of ``n_paths`` independent TCP paths at the sorted ``times``.

    Vectorized over paths.  Paths are processed in chunks; chunk ``c`` uses
    ``RandomStream(seed, c)`` so results depend only on ``(seed, n_paths,
    chunk)``.  Returns an array of shape ``(len(times), n_paths)``.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) < 0) or np.any(times < 0):
        raise DomainError("times must be a sorted 1-D array of nonnegative reals")
    out = np.empty((len(times), n_paths))
    for c, lo in enumerate(range(0, n_paths, chunk)):
        hi = min(lo + chunk, n_paths)
        out[:, lo:hi] = _tcp_chunk(float(x0), times, hi - lo, RandomStream(seed, c), model)
    return out


def _tcp_chunk(x0, times, n, stream, model):
    gen = stream.generator
    x = np.full(n, x0)
    out = np.empty((len(times), n))
    t_now = 0.0
    linear = model.variant == "linear_rate"
    for k, T in enumerate(times):
        t = np.full(n, t_now)
        active = np.arange(n)
        while active.size:
            e = -np.log1p(-gen.random(active.size))
            xa = x[active]
            if linear:
                s = 2.0 * e / (xa + np.sqrt(xa * xa + 2.0 * e))
            else:
                s = e / model.r
            jump = t[active] + s <= T
            stop = active[~jump]
            x[stop] += T - t[stop]
            idx = active[jump]
            x[idx] = (x[idx] + s[jump]) / 2.0
            t[idx] += s[jump]
            active = idx
        t_now = T
        out[k] = x
    return out


def tcp_long_run_sample(n_samples, burn_in, stride, stream, x0=0.0, model=TcpModel()):
    """States of one long TCP run, read every ``stride`` time units after ``burn_in``."""
    if n_samples < 1 or stride <= 0 or burn_in < 0:
        raise DomainError("need n_samples >= 1, stride > 0, burn_in >= 0")
    gen = stream.generator
    linear = model.variant == "linear_rate"
    x, t = float(x0), 0.0
    out = np.empty(n_samples)
    target = float(burn_in)
    i = 0
    while i < n_samples:
        e = -math.log1p(-gen.random())
        s = 2.0 * e / (x + math.sqrt(x * x + 2.0 * e)) if linear else e / model.r
        # read off every target time passed before the next jump
        while i < n_samples and t + s > target:
            out[i] = x + (target - t)
            i += 1
            target = burn_in + i * stride
        x = (x + s) / 2.0
        t += s
    return out


# ---------------------------------------------------------------- switching

class ConstantRates:
    """Rate function backed by a constant matrix (zero diagonal)."""

    def __init__(self, matrix):
        self.matrix = np.array(matrix, dtype=float)

    def __call__(self, i, j, y):
        return self.matrix[i, j]


class AffineField:
    """Vector field ``F(y) = A y + b`` with its exact flow."""

    def __init__(self, A, b):
        self.A = np.atleast_2d(np.array(A, dtype=float))
        self.b = np.array(b, dtype=float).reshape(-1)
        d = self.b.size
        if self.A.shape != (d, d):
            raise ModelError("A must be a d x d matrix matching b")
        self._aug = np.zeros((d + 1, d + 1))
        self._aug[:d, :d] = self.A
        self._aug[:d, d] = self.b

    def __call__(self, y):
        return self.A @ y + self.b

    def flow(self, y, t):
        d = self.b.size
        y = np.asarray(y, dtype=float)
        if d == 1:
            a, b = self.A[0, 0], self.b[0]
            t = np.asarray(t, dtype=float)
            if a == 0:
                res = y[0] + b * t
            else:
                c = -b / a
                res = c + (y[0] - c) * np.exp(a * t)
            return res[..., None] if np.ndim(res) else np.array([float(res)])
        if np.ndim(t) == 0:
            return (expm(self._aug * t) @ np.append(y, 1.0))[:d]
        return np.array([(expm(self._aug * s) @ np.append(y, 1.0))[:d] for s in t])


@dataclass(frozen=True)
class SwitchingModel:
    """Position driven by one of ``n`` vector fields; the field index jumps.

    ``rates(i, j, y)`` is the switching rate from mode ``i`` to ``j`` at
    position ``y``.  ``rate_bound`` bounds the total switching rate on the
    box ``invariant_box = (lo, hi)``, which every flow must leave invariant.
    ``flows`` optionally gives exact flows ``flows[i](y, t)``; otherwise the
    fields are integrated by RK4.
    """

    fields: tuple
    rates: Callable[[int, int, np.ndarray], float]
    rate_bound: float
    invariant_box: tuple
    flows: Optional[tuple] = None
    check_points: int = 100

    def __post_init__(self):
        lo, hi = (np.array(b, dtype=float).reshape(-1) for b in self.invariant_box)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ModelError("invariant_box must be (lo, hi) with lo < hi coordinatewise")
        object.__setattr__(self, "invariant_box", (lo, hi))
        object.__setattr__(self, "fields", tuple(self.fields))
        if self.flows is not None:
            object.__setattr__(self, "flows", tuple(self.flows))
            if len(self.flows) != len(self.fields):
                raise ModelError("need one flow per field")
        if self.n < 2:
            raise ModelError("a switching model needs at least two modes")
        if not self.rate_bound > 0:
            raise ModelError("rate_bound must be positive")
        self._check_rates()

    @property
    def d(self):
        return self.invariant_box[0].size

    @property
    def n(self):
        return len(self.fields)

    def rate_matrix(self, y):
        n = self.n
        return np.array([[self.rates(i, j, y) for j in range(n)] for i in range(n)], dtype=float)

    def _check_rates(self):
        lo, hi = self.invariant_box
        gen = RandomStream(_CHECK_SEED).generator
        points = lo + (hi - lo) * gen.random((self.check_points, self.d))
        for y in points:
            m = self.rate_matrix(y)
            if np.any(np.diag(m) != 0):
                raise ModelError("self-switching rates must be zero")
            if np.any(m < 0):
                raise ModelError("switching rates must be nonnegative")
            n_comp, _ = connected_components(m > 0, directed=True, connection="strong")
            if n_comp != 1:
                raise ModelError(f"switching rates are reducible at y={y}")
            if m.sum(axis=1).max() > self.rate_bound * (1 + 1e-12):
                raise ModelError(f"total switching rate exceeds rate_bound at y={y}")

    def contains(self, y, tol=1e-9):
        lo, hi = self.invariant_box
        return bool(np.all(y >= lo - tol) and np.all(y <= hi + tol))


def affine_switching_model(A, b, rate_matrix, box, rate_bound=None):
    """Switching model with affine fields ``A[i] y + b[i]`` and constant rates."""
    fields = tuple(AffineField(a, bb) for a, bb in zip(A, b))
    rates = ConstantRates(rate_matrix)
    if rate_bound is None:
        rate_bound = float(rates.matrix.sum(axis=1).max())
    return SwitchingModel(
        fields=fields,
        rates=rates,
        rate_bound=rate_bound,
        invariant_box=box,
        flows=tuple(f.flow for f in fields),
    )


def two_wells_model(rate=1.0):
    """1-D example: fields ``-(y-1)`` and ``-(y+1)``, symmetric rates.

    Both fields point into ``[-1, 1]``; the declared invariant box is
    ``[-2, 2]``.
    """
    return affine_switching_model(
        A=[[[-1.0]], [[-1.0]]],
        b=[[1.0], [-1.0]],
        rate_matrix=[[0.0, rate], [rate, 0.0]],
        box=([-2.0], [2.0]),
    )


class _SwitchFlow:
    def __init__(self, model):
        self.model = model

    def __call__(self, x, t):
        mode = x[-1]
        y = self.model.flows[int(mode)](x[:-1], t)
        if np.ndim(t) == 0:
            return np.append(y, mode)
        y = np.asarray(y).reshape(len(t), -1)
        return np.column_stack([y, np.full(len(t), mode)])


class _SwitchField:
    def __init__(self, model):
        self.model = model

    def __call__(self, x):
        return self.model.fields[int(x[-1])](x[:-1])


class _SwitchRate:
    def __init__(self, model):
        self.model = model

    def __call__(self, x):
        i, y = int(x[-1]), x[:-1]
        return sum(self.model.rates(i, j, y) for j in range(self.model.n) if j != i)


class _SwitchJump:
    def __init__(self, model):
        self.model = model

    def __call__(self, x, stream):
        i, y = int(x[-1]), x[:-1]
        if not self.model.contains(y):
            raise InvariantViolation(f"position {y} left the invariant box")
        weights = np.array([self.model.rates(i, j, y) if j != i else 0.0
                            for j in range(self.model.n)])
        total = weights.sum()
        u = stream.uniform() * total
        j = int(np.searchsorted(np.cumsum(weights), u, side="left"))
        j = min(j, self.model.n - 1)
        while weights[j] == 0:  # guard against u landing on a zero-width slot
            j -= 1
        out = x.copy()
        out[-1] = j
        return out


def switching_characteristics(model):
    """Characteristics on states ``(y, mode)``; jump times by thinning."""
    kwargs = {}
    if model.flows is not None:
        kwargs.update(flow=_SwitchFlow(model), vectorized_flow=True)
    else:
        kwargs.update(vector_field=_SwitchField(model))
    return LocalCharacteristics(
        state_dim=model.d,
        jump_rate=_SwitchRate(model),
        transition_sampler=_SwitchJump(model),
        rate_bound=model.rate_bound,
        has_mode=True,
        sampling="thinning",
        name="switching",
        **kwargs,
    )


@dataclass(frozen=True)
class Occupancy:
    """Time-weighted occupancy per mode on a regular grid over the box."""

    edges: tuple
    mass: np.ndarray  # shape (n_modes, *bins), sums to 1

    @property
    def bin_widths(self):
        return tuple(np.diff(e)[0] for e in self.edges)

    def marginal(self):
        return self.mass.sum(axis=0)


def occupancy_histogram(model, x0, horizon, burn_in, bins, stream, resolution=0.01):
    """Occupancy of ``(Y_t, I_t)`` over ``[burn_in, horizon]``.

    Each flow segment is sampled at midpoints of sub-intervals no longer
    than ``resolution`` and weighted by their duration.  Raises
    :class:`InvariantViolation` if the path leaves the invariant box.
    """
    if np.ndim(bins) == 0:
        bins = [int(bins)] * model.d
    bins = [int(b) for b in bins]
    if len(bins) == 0 or any(b < 1 for b in bins):
        raise DomainError("bins must specify at least one bin per dimension")
    if len(bins) != model.d:
        raise DomainError("need one bin count per dimension")
    if not 0 <= burn_in < horizon:
        raise DomainError("burn_in must lie in [0, horizon)")
    chars = switching_characteristics(model)
    traj = simulate(chars, x0, horizon, stream)
    starts = np.concatenate([[0.0], traj.jump_times])
    ends = np.concatenate([traj.jump_times, [horizon]])
    bases = np.vstack([traj.initial_state[None, :], traj.post_jump_states])
    pts = [[] for _ in range(model.n)]
    wts = [[] for _ in range(model.n)]
    for t0, t1, base in zip(starts, ends, bases):
        a = max(t0, burn_in)
        if t1 <= a:
            continue
        m = max(1, int(math.ceil((t1 - a) / resolution)))
        w = (t1 - a) / m
        rel = (a - t0) + w * (np.arange(m) + 0.5)
        states = flow_path(chars, base, rel)
        y = states[:, :-1]
        lo, hi = model.invariant_box
        if np.any(y < lo - 1e-9) or np.any(y > hi + 1e-9):
            raise InvariantViolation("trajectory left the invariant box")
        mode = int(base[-1])
        pts[mode].append(y)
        wts[mode].append(np.full(m, w))
    lo, hi = model.invariant_box
    edges = tuple(np.linspace(l, h, b + 1) for l, h, b in zip(lo, hi, bins))
    mass = np.zeros((model.n, *bins))
    for i in range(model.n):
        if pts[i]:
            h, _ = np.histogramdd(np.vstack(pts[i]), bins=edges, weights=np.concatenate(wts[i]))
            mass[i] = h
    mass /= horizon - burn_in
    return Occupancy(edges=edges, mass=mass)


def mode_time_fraction(traj, mode):
    """Fraction of ``[0, horizon]`` spent in ``mode``."""
    starts = np.concatenate([[0.0], traj.jump_times])
    ends = np.concatenate([traj.jump_times, [traj.horizon]])
    modes = np.concatenate([[traj.initial_state[-1]], traj.post_jump_states[:, -1]])
    return float(np.sum((ends - starts)[modes == mode]) / traj.horizon)
