"""Generic PDMP engine.

A process is described by its local characteristics: a deterministic flow
between jumps, a jump rate evaluated along the flow, a post-jump transition
sampler, and the time at which the flow leaves the state space.  From these
the engine samples inter-jump times, builds trajectories and runs Monte
Carlo batches with one :class:`~pdmp.rng.RandomStream` per path.

States are flat float arrays.  Models with a discrete mode carry it as a
trailing, integer-valued coordinate that the flow never changes.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import (
    DomainError,
    ExplosionError,
    ModelError,
    PathError,
    QuadratureError,
    RateBoundError,
)
from .rng import RandomStream

SAMPLING_METHODS = ("auto", "inversion", "quadrature", "thinning")

HAZARD_TOL = 1e-10
BOUNDARY_TOL = 1e-10
DEFAULT_MAX_JUMPS = 10**7
# doubling search for numeric hazard inversion gives up past this time
_INVERSION_CAP = 1e12


@dataclass(frozen=True)
class LocalCharacteristics:
    """Flow, jump rate, transition kernel and exit time of a PDMP.

    Exactly one of ``flow`` (closed form, ``flow(x, t) -> state``) and
    ``vector_field`` (ODE right-hand side for the continuous coordinates,
    integrated by fixed-step RK4) must be given.

    Optional closed forms speed things up and make them exact:
    ``hazard(x, t)`` is the cumulative hazard along the flow,
    ``hazard_inverse(x, e)`` solves ``hazard(x, t) = e`` for ``t`` (may
    return ``inf``), ``boundary_time(x)`` is the exit time.  Without a closed
    exit time, ``boundary_event(x)`` (positive inside the state space) is
    bracketed along the flow and refined by bisection; without either, the
    flow never exits.

    ``transition_mass(z, intervals)`` evaluates ``Q(z, A)`` for a finite
    union of closed intervals; only the kernel quadratures need it.
    """

    state_dim: int
    jump_rate: Callable[[np.ndarray], float]
    transition_sampler: Callable[[np.ndarray, RandomStream], np.ndarray]
    flow: Optional[Callable[[np.ndarray, Any], np.ndarray]] = None
    vector_field: Optional[Callable[[np.ndarray], np.ndarray]] = None
    boundary_time: Optional[Callable[[np.ndarray], float]] = None
    boundary_event: Optional[Callable[[np.ndarray], float]] = None
    rate_bound: Optional[float] = None
    hazard: Optional[Callable[[np.ndarray, float], float]] = None
    hazard_inverse: Optional[Callable[[np.ndarray, float], float]] = None
    transition_mass: Optional[Callable[[np.ndarray, Sequence], float]] = None
    has_mode: bool = False
    vectorized_flow: bool = False
    sampling: str = "auto"
    step: float = 1e-3
    scan_step: float = 1e-2
    search_horizon: float = 1e3
    max_jumps: int = DEFAULT_MAX_JUMPS
    name: str = "pdmp"

    def __post_init__(self):
        if self.state_dim < 1:
            raise ModelError("state_dim must be a positive integer")
        if (self.flow is None) == (self.vector_field is None):
            raise ModelError("give exactly one of flow and vector_field")
        if self.sampling not in SAMPLING_METHODS:
            raise ModelError(f"sampling must be one of {SAMPLING_METHODS}")
        if self.step <= 0 or self.scan_step <= 0:
            raise ModelError("integration steps must be positive")
        if self.rate_bound is not None and self.rate_bound < 0:
            raise ModelError("rate_bound must be nonnegative")

    @property
    def size(self):
        """Length of the state array (continuous part plus optional mode)."""
        return self.state_dim + int(self.has_mode)

    @property
    def closed_form_flow(self):
        return self.flow is not None

    def with_options(self, **changes):
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True)
class Trajectory:
    """Jump skeleton of one path, enough to rebuild X(t) for any t <= horizon.

    ``sojourns[k]`` is the exact inter-jump time that produced jump ``k``;
    ``jump_times`` is its running sum.
    """

    initial_state: np.ndarray
    jump_times: np.ndarray
    sojourns: np.ndarray
    post_jump_states: np.ndarray
    boundary_hits: np.ndarray
    horizon: float
    chars: LocalCharacteristics = field(repr=False, compare=False)

    @property
    def n_jumps(self):
        return len(self.jump_times)

    def kinds(self):
        return ["boundary_jump" if b else "jump" for b in self.boundary_hits]

    def state_at(self, t):
        return state_at(self, t)


# ---------------------------------------------------------------- validation

def _as_state(chars, x):
    arr = np.array(x, dtype=float).reshape(-1)
    if arr.size != chars.size:
        raise DomainError(f"state has {arr.size} coordinates, expected {chars.size}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("state must be finite")
    return arr


def _check_time(t, name="t"):
    t = float(t)
    if math.isnan(t) or t < 0:
        raise DomainError(f"{name} must be a nonnegative real, got {t}")
    return t


# ---------------------------------------------------------------- ODE flows

def _derivative(chars, x):
    dx = np.zeros_like(x)
    dx[: chars.state_dim] = chars.vector_field(x)
    return dx


def _rk4_step(chars, x, h):
    k1 = _derivative(chars, x)
    k2 = _derivative(chars, x + 0.5 * h * k1)
    k3 = _derivative(chars, x + 0.5 * h * k2)
    k4 = _derivative(chars, x + h * k3)
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _rk4_step_hazard(chars, x, lam, h):
    """One RK4 step of the flow augmented with the cumulative hazard."""
    def f(y):
        return _derivative(chars, y), chars.jump_rate(y)

    k1, l1 = f(x)
    k2, l2 = f(x + 0.5 * h * k1)
    k3, l3 = f(x + 0.5 * h * k2)
    k4, l4 = f(x + h * k3)
    return (x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4),
            lam + (h / 6.0) * (l1 + 2 * l2 + 2 * l3 + l4))


def _rk4(chars, x, t):
    h = chars.step
    n = int(t // h)
    y = x.copy()
    for _ in range(n):
        y = _rk4_step(chars, y, h)
    rem = t - n * h
    if rem > 0:
        y = _rk4_step(chars, y, rem)
    return y


def _flow(chars, x, t):
    if chars.flow is not None:
        return np.asarray(chars.flow(x, t), dtype=float)
    return _rk4(chars, x, t)


def flow_path(chars, x, times):
    """States along the flow from ``x`` at the increasing times ``times``.

    Returns an array of shape ``(len(times), chars.size)``.
    """
    x = _as_state(chars, x)
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.empty((0, chars.size))
    if chars.flow is not None:
        if chars.vectorized_flow:
            return np.asarray(chars.flow(x, times), dtype=float).reshape(len(times), chars.size)
        return np.array([chars.flow(x, t) for t in times], dtype=float)
    out = np.empty((len(times), chars.size))
    y, t0 = x.copy(), 0.0
    for i, t in enumerate(times):
        y = _rk4(chars, y, t - t0)
        t0 = t
        out[i] = y
    return out


# ---------------------------------------------------------------- public ops

def flow_at(chars, x, t):
    """Evaluate the flow from ``x`` after time ``t``.

    Raises :class:`DomainError` past the exit time or on non-finite input.
    """
    x = _as_state(chars, x)
    t = _check_time(t)
    if math.isinf(t):
        raise DomainError("t must be finite")
    if chars.boundary_time is not None or chars.boundary_event is not None:
        tstar = boundary_time(chars, x)
        if t > tstar + BOUNDARY_TOL:
            raise DomainError(f"t={t} exceeds the exit time {tstar}")
    return _flow(chars, x, t)


def boundary_time(chars, x):
    """First time the flow from ``x`` reaches the boundary (``inf`` if never).

    With only an event function available, the exit is bracketed by a sign
    change of ``boundary_event`` along the flow within ``search_horizon``
    and refined by bisection to ``1e-10`` in time.
    """
    x = _as_state(chars, x)
    if chars.boundary_time is not None:
        return float(chars.boundary_time(x))
    if chars.boundary_event is None:
        return math.inf
    g = chars.boundary_event
    if g(x) <= 0:
        raise DomainError("state lies outside the state space")
    step = chars.step if chars.vector_field is not None else chars.scan_step
    t, y = 0.0, x
    while t < chars.search_horizon:
        h = min(step, chars.search_horizon - t)
        y_next = _rk4_step(chars, y, h) if chars.vector_field is not None else _flow(chars, x, t + h)
        if g(y_next) <= 0:
            return _bisect_exit(chars, x, y, t, h)
        t, y = t + h, y_next
    return math.inf


def _bisect_exit(chars, x, y_start, t_start, h):
    g = chars.boundary_event
    lo, hi = 0.0, h
    while hi - lo > BOUNDARY_TOL:
        mid = 0.5 * (lo + hi)
        if chars.vector_field is not None:
            y_mid = _rk4_step(chars, y_start, mid)
        else:
            y_mid = _flow(chars, x, t_start + mid)
        if g(y_mid) > 0:
            lo = mid
        else:
            hi = mid
    return t_start + hi


def _quad(fun, a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        res = integrate.quad(fun, a, b, epsabs=HAZARD_TOL, epsrel=HAZARD_TOL,
                             limit=500, full_output=1)
    if len(res) > 3 and res[1] > 10 * max(HAZARD_TOL, HAZARD_TOL * abs(res[0])):
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {res[3]}")
    return res[0]


def _quad_hazard(chars, x, a, b):
    if b <= a:
        return 0.0
    return _quad(lambda s: chars.jump_rate(_flow(chars, x, s)), a, b)


def _ode_hazard(chars, x, t):
    h = chars.step
    n = int(t // h)
    y, lam = x.copy(), 0.0
    for _ in range(n):
        y, lam = _rk4_step_hazard(chars, y, lam, h)
    rem = t - n * h
    if rem > 0:
        y, lam = _rk4_step_hazard(chars, y, lam, rem)
    return lam


def cumulative_hazard(chars, x, t):
    """Integral of the jump rate along the flow from ``x`` over ``[0, t]``."""
    x = _as_state(chars, x)
    t = _check_time(t)
    tstar = boundary_time(chars, x)
    if t > tstar + BOUNDARY_TOL:
        raise DomainError(f"t={t} exceeds the exit time {tstar}")
    if chars.hazard is not None:
        return float(chars.hazard(x, t))
    if math.isinf(t):
        raise DomainError("t must be finite without a closed-form hazard")
    if chars.vector_field is not None:
        return _ode_hazard(chars, x, t)
    return _quad_hazard(chars, x, 0.0, t)


def _resolve_method(chars, method):
    method = method or chars.sampling
    if method not in SAMPLING_METHODS:
        raise ValueError(f"unknown sampling method {method!r}")
    if method == "auto":
        return "inversion" if chars.hazard_inverse is not None else "quadrature"
    if method == "inversion" and chars.hazard_inverse is None:
        raise ModelError("no closed-form hazard inversion registered")
    return method


def sample_inter_jump(chars, x, stream, t_max=math.inf, method=None):
    """Draw the time to the next jump from ``x``.

    Returns ``(time, hit_boundary)``.  ``hit_boundary`` is true when the
    flow reaches the exit time before the hazard fires; ``time`` is then the
    exit time.  ``time`` is ``inf`` when no jump happens.  Numeric methods
    stop looking past ``t_max`` and report ``inf`` for "not before t_max";
    times at or below ``t_max`` are always exact.
    """
    x = _as_state(chars, x)
    method = _resolve_method(chars, method)
    if method == "thinning":
        return _sample_thinning(chars, x, stream, t_max)
    tstar = boundary_time(chars, x)
    target = -math.log(stream.uniform())
    if method == "inversion":
        t = float(chars.hazard_inverse(x, target))
        if t >= tstar and not math.isinf(tstar):
            return tstar, True
        return t, False
    limit = min(tstar, t_max)
    if chars.vector_field is not None:
        limit = min(limit, chars.search_horizon)
        t = _ode_invert(chars, x, target, limit)
    else:
        t = _quad_invert(chars, x, target, limit)
    if math.isinf(t):
        if limit == tstar and not math.isinf(tstar):
            return tstar, True
        return math.inf, False
    return t, False


def sample_inter_jumps(chars, x, stream, size, method=None):
    """``size`` independent draws of :func:`sample_inter_jump` from the same ``x``.

    With closed-form inversion the hazard inverse is applied to the whole
    vector of uniforms at once (it must accept arrays); otherwise this loops.
    Returns ``(times, hit_boundary)`` arrays.
    """
    x = _as_state(chars, x)
    if _resolve_method(chars, method) != "inversion":
        draws = [sample_inter_jump(chars, x, stream, method=method) for _ in range(size)]
        return (np.array([d[0] for d in draws], dtype=float),
                np.array([d[1] for d in draws], dtype=bool))
    tstar = boundary_time(chars, x)
    targets = -np.log(stream.uniforms(size))
    t = np.asarray(chars.hazard_inverse(x, targets), dtype=float) * np.ones(size)
    hit = (t >= tstar) & (not math.isinf(tstar))
    return np.where(hit, tstar, t), hit


def _quad_invert(chars, x, target, limit):
    a, lam_a = 0.0, 0.0
    b = min(1.0, limit)
    while True:
        lam_b = lam_a + _quad_hazard(chars, x, a, b)
        if lam_b >= target:
            break
        if b >= limit or b >= _INVERSION_CAP:
            return math.inf
        a, lam_a = b, lam_b
        b = min(2.0 * b, limit)
    if lam_b == target:
        return b
    return optimize.brentq(
        lambda s: lam_a + _quad_hazard(chars, x, a, s) - target,
        a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)


def _ode_invert(chars, x, target, limit):
    h = chars.step
    t, y, lam = 0.0, x.copy(), 0.0
    while t < limit:
        hh = min(h, limit - t)
        y_next, lam_next = _rk4_step_hazard(chars, y, lam, hh)
        if lam_next >= target:
            lo, hi = 0.0, hh
            while hi - lo > 1e-14 * max(1.0, t):
                mid = 0.5 * (lo + hi)
                if _rk4_step_hazard(chars, y, lam, mid)[1] >= target:
                    hi = mid
                else:
                    lo = mid
            return t + hi
        t, y, lam = t + hh, y_next, lam_next
    return math.inf


def _sample_thinning(chars, x, stream, t_max):
    bound = chars.rate_bound
    if bound is None:
        raise RateBoundError("thinning requested but no rate_bound configured")
    tstar = boundary_time(chars, x)
    limit = min(tstar, t_max)
    if math.isinf(limit):
        limit = chars.search_horizon
    if bound == 0:
        return (tstar, True) if not math.isinf(tstar) else (math.inf, False)
    s, y, s_y = 0.0, x, 0.0
    while True:
        s += stream.exponential(bound)
        if s >= limit:
            if limit == tstar and not math.isinf(tstar):
                return tstar, True
            return math.inf, False
        if chars.vector_field is not None:
            y = _rk4(chars, y, s - s_y)
            s_y = s
        else:
            y = _flow(chars, x, s)
        lam = chars.jump_rate(y)
        if lam > bound * (1 + 1e-12):
            raise RateBoundError(f"jump rate {lam} exceeds rate_bound {bound}")
        if stream.uniform() * bound <= lam:
            return s, False


# ---------------------------------------------------------------- trajectories

def _run(chars, x0, horizon, stream, max_jumps, n_jumps):
    x = _as_state(chars, x0)
    x_init = x.copy()
    cap = chars.max_jumps if max_jumps is None else max_jumps
    times, sojourns, states, hits = [], [], [], []
    t = 0.0
    while n_jumps is None or len(times) < n_jumps:
        s, hit = sample_inter_jump(chars, x, stream, t_max=horizon - t)
        if math.isinf(s) or t + s > horizon:
            break
        pre = _flow(chars, x, s)
        z = np.asarray(chars.transition_sampler(pre, stream), dtype=float)
        if np.array_equal(z, pre):
            raise ModelError("transition sampler returned its input state")
        if not np.all(np.isfinite(z)) or (chars.boundary_event is not None
                                          and chars.boundary_event(z) <= 0):
            raise ModelError(f"transition sampler returned {z}, outside the state space")
        t = t + s
        times.append(t)
        sojourns.append(s)
        states.append(z)
        hits.append(hit)
        x = z
        if len(times) > cap:
            raise ExplosionError(f"more than {cap} jumps before t={t}")
    if n_jumps is not None:
        horizon = t
    return Trajectory(
        initial_state=x_init,
        jump_times=np.array(times, dtype=float),
        sojourns=np.array(sojourns, dtype=float),
        post_jump_states=np.array(states, dtype=float).reshape(len(states), chars.size),
        boundary_hits=np.array(hits, dtype=bool),
        horizon=float(horizon),
        chars=chars,
    )


def simulate(chars, x0, horizon, stream, max_jumps=None):
    """Simulate one path on ``[0, horizon]``.

    Raises :class:`ExplosionError` if the number of jumps exceeds
    ``max_jumps`` (default ``chars.max_jumps``).
    """
    horizon = _check_time(horizon, "horizon")
    if not 0 < horizon < math.inf:
        raise DomainError("horizon must be a positive finite real")
    return _run(chars, x0, horizon, stream, max_jumps, None)


def simulate_jumps(chars, x0, n_jumps, stream, max_time=math.inf):
    """Simulate until ``n_jumps`` jumps have occurred (or ``max_time``).

    The returned trajectory's horizon is the time of the last jump.
    """
    if n_jumps < 1:
        raise DomainError("n_jumps must be positive")
    return _run(chars, x0, max_time, stream, None, int(n_jumps))


def state_at(traj, t):
    """X(t), right-continuous at jump times."""
    t = _check_time(t)
    if t > traj.horizon:
        raise DomainError(f"t={t} is past the horizon {traj.horizon}")
    k = int(np.searchsorted(traj.jump_times, t, side="right"))
    if k == 0:
        return _flow(traj.chars, traj.initial_state, t)
    base = traj.post_jump_states[k - 1]
    dt = t - traj.jump_times[k - 1]
    return base.copy() if dt == 0 else _flow(traj.chars, base, dt)


# ---------------------------------------------------------------- Monte Carlo

def default_workers():
    """Worker count: ``PDMP_THREADS`` if set, else the available CPUs."""
    env = os.environ.get("PDMP_THREADS")
    cpus = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    if env:
        return max(1, min(int(env), cpus or 1))
    return cpus or 1


def _mc_chunk(chars, x0, horizon, seed, extractor, lo, hi):
    out = []
    for i in range(lo, hi):
        try:
            traj = simulate(chars, x0, horizon, RandomStream(seed, i))
            out.append(extractor(traj))
        except PathError:
            raise
        except Exception as exc:
            raise PathError(i, exc) from exc
    return out


def monte_carlo(chars, x0, horizon, n_paths, seed, extractor, workers=1):
    """Run ``n_paths`` independent paths and apply ``extractor`` to each.

    Path ``i`` uses ``RandomStream(seed, i)``, so the index-ordered output is
    identical for any ``workers``.  With ``workers > 1`` the characteristics
    and extractor must be picklable.
    """
    if n_paths < 0:
        raise DomainError("n_paths must be nonnegative")
    if n_paths == 0:
        return []
    workers = max(1, int(workers))
    if workers == 1 or n_paths < 2 * workers:
        return _mc_chunk(chars, x0, horizon, seed, extractor, 0, n_paths)
    bounds = np.linspace(0, n_paths, 4 * workers + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_mc_chunk, chars, x0, horizon, seed, extractor, lo, hi)
                   for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        results = []
        for fut in futures:
            results.extend(fut.result())
    return results
