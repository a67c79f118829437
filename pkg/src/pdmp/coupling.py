"""Couplings of two TCP window-size processes and distance estimators.

Three constructions live here:

* the dynamical (Wasserstein) coupling: both coordinates drift together,
  jump together at rate ``min(x, y)`` and the higher one jumps alone at rate
  ``|x - y|``;
* the one-jump sticking attempt, which tries to make the first jump from
  the higher start happen exactly ``x - y`` after the first jump from the
  lower one, so both land on the same point;
* the composite total-variation coupling alternating the two.

Coalescence frequencies bound the total variation distance from above.
Empirical Wasserstein distances come from sorted samples.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, stats

from .errors import DomainError
from .models import TcpModel, tcp_long_run_sample, tcp_sample_at, theoretical_rates
from .rng import RandomStream

DEFAULT_EPSILON = 0.05
DEFAULT_RATE_FACTOR = 0.9


# ---------------------------------------------------------------- TCP helpers

def _first_jump(x, e):
    return 2.0 * e / (x + math.sqrt(x * x + 2.0 * e))


def _density(x, s):
    return (x + s) * math.exp(-(x * s + 0.5 * s * s))


def _survival(x, s):
    return math.exp(-(x * s + 0.5 * s * s))


def _advance(z, t_from, t_to, stream, next_jump=None):
    """State at ``t_to`` of a TCP path at ``z`` at time ``t_from``.

    ``next_jump`` is an already drawn absolute time of the next jump;
    further jumps use fresh draws from ``stream``.
    """
    t = t_from
    while True:
        if next_jump is None:
            next_jump = t + _first_jump(z, stream.exponential())
        if next_jump > t_to:
            return z + (t_to - t)
        z = (z + next_jump - t) / 2.0
        t = next_jump
        next_jump = None


# ---------------------------------------------------------------- dynamical coupling

@dataclass(frozen=True)
class CoupledPath:
    """Events of a coupled pair.

    ``states[k]`` is ``(x, y)`` right after event ``k``; ``gaps[k]`` is the
    exact gap carried from event ``k`` to the next one.  ``kinds`` holds
    ``init``, ``simultaneous``, ``solo`` or ``horizon``.
    """

    times: np.ndarray
    states: np.ndarray
    gaps: np.ndarray
    kinds: tuple
    coalesced_at: Optional[float]
    horizon: float

    def _index(self, t):
        if not 0 <= t <= self.horizon:
            raise DomainError(f"t={t} outside [0, {self.horizon}]")
        return int(np.searchsorted(self.times, t, side="right")) - 1

    def state_at(self, t):
        k = self._index(t)
        return self.states[k] + (t - self.times[k])

    def gap_at(self, t):
        return float(self.gaps[self._index(t)])


def _next_event(low, gap, stream):
    """Waiting time to the next event and whether it is simultaneous."""
    ts = _first_jump(low, stream.exponential())
    e2 = stream.exponential()
    to = e2 / gap if gap > 0 else math.inf
    return (ts, True) if ts <= to else (to, False)


def _apply(low, gap, x_high, dt, simultaneous):
    low += dt
    if simultaneous:
        return low / 2.0, gap / 2.0, x_high
    high = (low + gap) / 2.0
    if high >= low:
        return low, high - low, x_high
    return high, low - high, not x_high


def _xy(low, gap, x_high):
    return (low + gap, low) if x_high else (low, low + gap)


def simulate_pair(x, y, horizon, stream):
    """Run the dynamical coupling from ``(x, y)`` on ``[0, horizon]``.

    Simultaneous jump times solve ``m t + t^2/2 = E`` with ``m`` the lower
    coordinate; solo jump times are exponential with rate equal to the gap.
    Both clocks are redrawn after every event.
    """
    if x < 0 or y < 0:
        raise DomainError("coordinates must be nonnegative")
    if not 0 < horizon < math.inf:
        raise DomainError("horizon must be a positive finite real")
    low, gap, x_high = min(x, y), abs(x - y), x >= y
    times, states, gaps, kinds = [0.0], [_xy(low, gap, x_high)], [gap], ["init"]
    coalesced = 0.0 if gap == 0 else None
    t = 0.0
    while True:
        dt, simultaneous = _next_event(low, gap, stream)
        if t + dt > horizon:
            break
        low, gap, x_high = _apply(low, gap, x_high, dt, simultaneous)
        t += dt
        times.append(t)
        states.append(_xy(low, gap, x_high))
        gaps.append(gap)
        kinds.append("simultaneous" if simultaneous else "solo")
        if gap == 0 and coalesced is None:
            coalesced = t
    times.append(horizon)
    states.append(_xy(low + (horizon - t), gap, x_high))
    gaps.append(gap)
    kinds.append("horizon")
    return CoupledPath(
        times=np.array(times),
        states=np.array(states, dtype=float),
        gaps=np.array(gaps),
        kinds=tuple(kinds),
        coalesced_at=coalesced,
        horizon=float(horizon),
    )


def _pair_run(x, y, duration, stream):
    """Coupled state after ``duration``; ``(x, y, coalesced_offset)``."""
    low, gap, x_high = min(x, y), abs(x - y), x >= y
    t = 0.0
    while True:
        dt, simultaneous = _next_event(low, gap, stream)
        if t + dt > duration:
            break
        low, gap, x_high = _apply(low, gap, x_high, dt, simultaneous)
        t += dt
        if gap == 0:
            xx, yy = _xy(low, gap, x_high)
            return xx, yy, t
    xx, yy = _xy(low + (duration - t), gap, x_high)
    return xx, yy, None


def pair_sample_at(x, y, times, n_pairs, seed, chunk=1 << 16):
    """Coupled states at the sorted ``times`` for ``n_pairs`` independent pairs.

    Vectorized over pairs; chunk ``c`` draws from ``RandomStream(seed, c)``.
    Returns ``(X, Y)``, each of shape ``(len(times), n_pairs)``.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) < 0) or np.any(times < 0):
        raise DomainError("times must be sorted and nonnegative")
    X = np.empty((len(times), n_pairs))
    Y = np.empty((len(times), n_pairs))
    for c, lo in enumerate(range(0, n_pairs, chunk)):
        hi = min(lo + chunk, n_pairs)
        X[:, lo:hi], Y[:, lo:hi] = _pair_chunk(x, y, times, hi - lo, RandomStream(seed, c))
    return X, Y


def _pair_chunk(x0, y0, times, n, stream):
    gen = stream.generator
    x = np.full(n, float(x0))
    y = np.full(n, float(y0))
    X = np.empty((len(times), n))
    Y = np.empty((len(times), n))
    t_now = 0.0
    for k, T in enumerate(times):
        t = np.full(n, t_now)
        active = np.arange(n)
        while active.size:
            xa, ya = x[active], y[active]
            m = np.minimum(xa, ya)
            d = np.abs(xa - ya)
            e1 = -np.log1p(-gen.random(active.size))
            e2 = -np.log1p(-gen.random(active.size))
            ts = 2.0 * e1 / (m + np.sqrt(m * m + 2.0 * e1))
            with np.errstate(divide="ignore"):
                to = np.where(d > 0, e2 / d, np.inf)
            dt = np.minimum(ts, to)
            jump = t[active] + dt <= T
            stop = active[~jump]
            x[stop] += T - t[stop]
            y[stop] += T - t[stop]
            idx = active[jump]
            dj, sim = dt[jump], ts[jump] <= to[jump]
            xm, ym = x[idx] + dj, y[idx] + dj
            x_high = xm >= ym
            x[idx] = np.where(sim | x_high, xm / 2.0, xm)
            y[idx] = np.where(sim | ~x_high, ym / 2.0, ym)
            t[idx] += dj
            active = idx
        t_now = T
        X[k], Y[k] = x, y
    return X, Y


def coupling_moment_curve(x, y, times, n_pairs, seed, power=1.0):
    """``E|X_t - Y_t|^power`` under the dynamical coupling, with standard errors."""
    X, Y = pair_sample_at(x, y, times, n_pairs, seed)
    v = np.abs(X - Y) ** power
    return v.mean(axis=1), v.std(axis=1, ddof=1) / math.sqrt(n_pairs)


# ---------------------------------------------------------------- sticking

@dataclass(frozen=True)
class StickOutcome:
    success: bool
    coupled: bool
    time: float      # coalescence time on success, else the common restart time
    x: float         # states at `time`
    y: float


def _maximal_first_jumps(hi, lo, delta, stream):
    """Maximal coupling of ``T1`` from ``hi`` with ``T1 + delta`` from ``lo``.

    Rejection against the pointwise minimum of the two densities; returns
    ``(t_hi, t_lo, coupled)``.
    """
    a = _first_jump(hi, stream.exponential())
    w = stream.uniform() * _density(hi, a)
    if a >= delta and w <= _density(lo, a - delta):
        return a, a - delta, True
    while True:
        b = delta + _first_jump(lo, stream.exponential())
        w = stream.uniform() * _density(lo, b - delta)
        if w > _density(hi, b):
            return a, b - delta, False


def _stick(x, y, stream):
    if x < y:
        out = _stick(y, x, stream)
        return StickOutcome(out.success, out.coupled, out.time, out.y, out.x)
    delta = x - y
    t_x, t_y, coupled = _maximal_first_jumps(x, y, delta, stream)
    z_x = (x + t_x) / 2.0
    z_y = (y + t_y) / 2.0
    second = t_y + _first_jump(z_y, stream.exponential())
    if coupled and second - t_y >= delta:
        return StickOutcome(True, True, t_x, z_x, z_x)
    tau = max(t_x, t_y)
    # each marginal keeps its own drawn clocks; anything past them is fresh
    xs = _advance(z_x, t_x, tau, stream)
    ys = _advance(z_y, t_y, tau, stream, next_jump=second)
    return StickOutcome(False, coupled, tau, xs, ys)


def sticking_attempt(x, y, stream):
    """One attempt to glue two TCP paths at the first jump of the higher one.

    Returns ``(success, coalescence_time)``; the time is ``None`` on failure.
    """
    if x < 0 or y < 0:
        raise DomainError("coordinates must be nonnegative")
    out = _stick(x, y, stream)
    return out.success, (out.time if out.success else None)


def sticking_success_probability(x, y):
    """Exact success probability of :func:`sticking_attempt`, by quadrature.

    ``int min(f_x(s), f_y(s - d)) * P(S_2 >= d | post-jump (y + s - d)/2) ds``
    with ``d = |x - y|``.
    """
    hi, lo = max(x, y), min(x, y)
    d = hi - lo

    def integrand(s):
        u = s - d
        overlap = min(_density(hi, s), _density(lo, u))
        return overlap * _survival((lo + u) / 2.0, d)

    upper = d + _first_jump(lo, 60.0)
    val, _ = integrate.quad(integrand, d, upper, epsabs=1e-12, epsrel=1e-10, limit=500)
    return val


# ---------------------------------------------------------------- composite

def phase_one_duration(epsilon, rate_factor=DEFAULT_RATE_FACTOR):
    """``log(1/epsilon) / (rate_factor * lambda)``."""
    _, lam = theoretical_rates()
    return math.log(1.0 / epsilon) / (rate_factor * lam)


def composite_tv_coupling(x, y, epsilon, stream, horizon, rate_factor=DEFAULT_RATE_FACTOR,
                          phase_one=None):
    """Alternate the dynamical coupling and sticking attempts until ``horizon``.

    Phase one runs the dynamical coupling for ``phase_one`` time units
    (default :func:`phase_one_duration`).  If the gap is then at most
    ``epsilon`` a sticking attempt follows.  Rounds repeat from the current
    pair until coalescence or the horizon.  Returns ``(coalesced, time)``.
    """
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    if x < 0 or y < 0:
        raise DomainError("coordinates must be nonnegative")
    if x == y:
        return True, 0.0
    t1 = phase_one_duration(epsilon, rate_factor) if phase_one is None else float(phase_one)
    t = 0.0
    while t < horizon:
        span = min(t1, horizon - t)
        x, y, hit = _pair_run(x, y, span, stream)
        if hit is not None:
            return True, t + hit
        t += span
        if t >= horizon:
            break
        if abs(x - y) <= epsilon:
            out = _stick(x, y, stream)
            if t + out.time > horizon:
                break
            if out.success:
                return True, t + out.time
            t += out.time
            x, y = out.x, out.y
    return False, None


def _coalescence_chunk(x, y, seed, lo, hi, horizon, epsilon, rate_factor, phase_one):
    out = np.full(hi - lo, math.inf)
    for i in range(lo, hi):
        ok, tc = composite_tv_coupling(x, y, epsilon, RandomStream(seed, i), horizon,
                                       rate_factor, phase_one)
        if ok:
            out[i - lo] = tc
    return out


def coalescence_times(x, y, n_pairs, seed, horizon, epsilon=DEFAULT_EPSILON,
                      rate_factor=DEFAULT_RATE_FACTOR, phase_one=None, workers=1):
    """Coalescence time of each pair, ``inf`` if none by ``horizon``.

    Pair ``i`` uses ``RandomStream(seed, i)``; the result does not depend on
    ``workers``.
    """
    args = (horizon, epsilon, rate_factor, phase_one)
    workers = max(1, int(workers))
    if workers == 1 or n_pairs < 1000:
        return _coalescence_chunk(x, y, seed, 0, n_pairs, *args)
    bounds = np.linspace(0, n_pairs, 4 * workers + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = [pool.submit(_coalescence_chunk, x, y, seed, lo, hi, *args)
                 for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        return np.concatenate([f.result() for f in parts])


def tv_upper_curve(x, y, times, n_pairs, seed, **kwargs):
    """Fraction of pairs not coalesced by each time, with binomial standard errors."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if n_pairs < 1:
        raise DomainError("n_pairs must be positive")
    if times.size == 0:
        return np.empty(0), np.empty(0)
    ct = coalescence_times(x, y, n_pairs, seed, float(times.max()), **kwargs)
    est = np.array([np.mean(~(ct <= t)) for t in times])
    se = np.sqrt(est * (1 - est) / n_pairs)
    return est, se


def estimate_tv_upper(x, y, t, n_pairs, seed, **kwargs):
    """Coupling-inequality upper estimate of ``||delta_x P_t - delta_y P_t||_TV``."""
    if t == 0:
        return 0.0 if x == y else 1.0
    est, _ = tv_upper_curve(x, y, [t], n_pairs, seed, **kwargs)
    return float(est[0])


# ---------------------------------------------------------------- distances and fits

def empirical_wasserstein(a, b, p=1.0):
    """Exact ``W_p`` between two equal-size 1-D empirical measures.

    For ``p = 1/2`` the mean of ``|a_(i) - b_(i)|^{1/2}`` is returned without
    an outer root.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size != b.size:
        raise DomainError("samples must have equal length")
    if a.size == 0:
        raise DomainError("samples must be nonempty")
    if not (p >= 1 or p == 0.5):
        raise DomainError("p must be >= 1 or equal to 1/2")
    m = np.mean(np.abs(a - b) ** p)
    return float(m ** (1.0 / max(p, 1.0)))


def w1_to_stationarity(x0, times, n_paths, seed, ref_size=100_000, burn_in=50.0, stride=2.0):
    """``W_1`` between the law at each time from ``x0`` and a stationary reference.

    The reference is read every ``stride`` time units off one long run after
    ``burn_in``; the time-``t`` laws use ``n_paths`` independent paths.
    Samples of different sizes are compared through their CDFs.
    """
    ref = tcp_long_run_sample(ref_size, burn_in, stride, RandomStream(seed, 0, lane=1))
    samples = tcp_sample_at(x0, times, n_paths, seed)
    return np.array([stats.wasserstein_distance(s, ref) for s in samples])


@dataclass(frozen=True)
class RateFit:
    rate: float
    intercept: float
    window: tuple
    residual_rms: float


def fit_rate(times, values, window=None):
    """Least-squares fit of ``log(value) = intercept - rate * t``."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape:
        raise DomainError("times and values must have the same shape")
    if window is not None:
        keep = (times >= window[0]) & (times <= window[1])
        times, values = times[keep], values[keep]
    if times.size < 3:
        raise DomainError("need at least 3 points to fit a rate")
    if np.any(~(values > 0)):
        raise DomainError("values must be strictly positive inside the window")
    logs = np.log(values)
    slope, intercept = np.polyfit(times, logs, 1)
    resid = logs - (intercept + slope * times)
    return RateFit(
        rate=float(-slope) + 0.0,  # no negative zero for flat data
        intercept=float(intercept),
        window=(float(times.min()), float(times.max())),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
    )
