"""Discrete-time chains read off a PDMP trajectory, and the kernels H, J.

The embedded chain records the post-jump state and the sojourn that led
to it.  The observation chain also records the state at the points of an
independent unit-rate Poisson clock.  For one-dimensional models the
sub-stochastic kernels

    H(x, A) = int_0^{t*} exp(-(s + Lambda(x, s))) 1_A(phi(x, s)) ds
    J(x, A) = int_0^{t*} lambda(phi(x, s)) exp(-(s + Lambda(x, s))) Q(phi(x, s), A) ds
              + exp(-(t* + Lambda(x, t*))) Q(phi(x, t*), A)

are evaluated by adaptive quadrature; their sum is a Markov kernel.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import core
from .errors import DomainError, ModelError, QuadratureError

KERNEL_TOL = 1e-10
# the integrand exp(-(s + Lambda)) is below exp(-40) past this level
TRUNCATION_LEVEL = 40.0


@dataclass(frozen=True)
class EmbeddedChain:
    """``(Z_n, S_n)``: post-jump states and the sojourns that produced them.

    Row 0 is the initial state with ``S_0 = 0``.
    """

    Z: np.ndarray   # (n + 1, size)
    S: np.ndarray   # (n + 1,)

    def __len__(self):
        return len(self.S)

    @property
    def n_transitions(self):
        return len(self.S) - 1

    def jump_times(self):
        return np.cumsum(self.S[1:])


def embedded_chain(traj):
    """Embedded chain of a trajectory, with sojourns copied exactly."""
    Z = np.vstack([traj.initial_state[None, :], traj.post_jump_states.reshape(-1, traj.chars.size)])
    S = np.concatenate([[0.0], np.asarray(traj.sojourns, dtype=float)])
    return EmbeddedChain(Z=Z, S=S)


def chain_from_arrays(Z, S):
    """Build an :class:`EmbeddedChain` from raw arrays, checking the sojourn signs."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    S = np.asarray(S, dtype=float).ravel()
    if len(Z) != len(S):
        raise DomainError("Z and S must have the same number of rows")
    if len(S) == 0:
        raise DomainError("an embedded chain needs at least its initial entry")
    if S[0] != 0 or np.any(S[1:] <= 0):
        raise DomainError("S_0 must be 0 and later sojourns positive")
    return EmbeddedChain(Z=Z, S=S)


def replay_jump_times(chain, chars):
    """Rebuild the jump skeleton ``(T_n, Z_n^-)`` by flowing each ``Z_n`` for ``S_{n+1}``.

    Returns the jump times and the pre-jump states.
    """
    pre = np.array([core.flow_at(chars, z, s) for z, s in zip(chain.Z[:-1], chain.S[1:])])
    return chain.jump_times(), pre


@dataclass(frozen=True)
class ObservationChain:
    """States at jumps and at unit-rate observation times, in time order.

    ``origins`` holds ``"jump"`` or ``"observation"``; entry 0 is the
    starting state at time 0 and counts as a jump entry.
    """

    times: np.ndarray
    states: np.ndarray
    origins: tuple

    def __len__(self):
        return len(self.times)

    def observed_states(self):
        mask = np.array([o == "observation" for o in self.origins], dtype=bool)
        return self.states[mask]


def poisson_times(horizon, stream, rate=1.0):
    """Points of a homogeneous Poisson process on ``(0, horizon]``."""
    out = []
    t = stream.exponential(rate)
    while t <= horizon:
        out.append(t)
        t += stream.exponential(rate)
    return np.array(out, dtype=float)


def observation_chain(traj, stream):
    """Merge the jump skeleton with an independent unit-rate Poisson clock."""
    obs = poisson_times(traj.horizon, stream)
    times = [0.0] + list(traj.jump_times) + list(obs)
    states = [traj.initial_state] + list(traj.post_jump_states.reshape(-1, traj.chars.size))
    states += [core.state_at(traj, t) for t in obs]
    origins = ["jump"] * (1 + traj.n_jumps) + ["observation"] * len(obs)
    # jump times come from a continuous law independent of the clock,
    # so ties have probability zero; stable sort keeps jumps first anyway
    order = np.argsort(np.array(times), kind="stable")
    return ObservationChain(
        times=np.array(times)[order],
        states=np.array(states, dtype=float).reshape(len(times), -1)[order],
        origins=tuple(origins[i] for i in order),
    )


# ---------------------------------------------------------------- kernels

def _require_1d(chars):
    if chars.state_dim != 1 or chars.has_mode:
        raise ModelError("kernel quadrature is implemented for one-dimensional states only")


def _normalize(intervals):
    if intervals is None:
        return None
    out = []
    for lo, hi in intervals:
        if hi < lo:
            raise DomainError(f"interval ({lo}, {hi}) is reversed")
        out.append((float(lo), float(hi)))
    return out


def _inside(v, intervals):
    return any(lo <= v <= hi for lo, hi in intervals)


def _survival_exponent(chars, x, s):
    return s + core.cumulative_hazard(chars, x, s)


def _truncation(chars, x, tstar):
    """Upper integration limit: ``t*`` or where ``s + Lambda`` reaches the level."""
    hi = min(tstar, TRUNCATION_LEVEL)
    if not math.isinf(tstar) and _survival_exponent(chars, x, tstar) < TRUNCATION_LEVEL:
        return tstar, False
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _survival_exponent(chars, x, mid) >= TRUNCATION_LEVEL:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-12:
            break
    return hi, True


def _breakpoints(indicator, a, b, n_scan=2000):
    """Points in ``[a, b]`` where a piecewise-constant function changes value."""
    grid = np.linspace(a, b, n_scan + 1)
    vals = [indicator(s) for s in grid]
    points = []
    for k in range(n_scan):
        if vals[k] != vals[k + 1]:
            lo, hi, v_lo = grid[k], grid[k + 1], vals[k]
            while hi - lo > 1e-13 * max(1.0, hi):
                mid = 0.5 * (lo + hi)
                if indicator(mid) == v_lo:
                    lo = mid
                else:
                    hi = mid
            points.append(0.5 * (lo + hi))
    return points


def _integrate_pieces(fun, edges):
    total = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            if b <= a:
                continue
            val, err = integrate.quad(fun, a, b, epsabs=KERNEL_TOL, epsrel=KERNEL_TOL, limit=500)
            if err > 1e-8:
                raise QuadratureError(f"kernel quadrature on [{a}, {b}] did not converge")
            total += val
    return total


def kernel_H_mass(chars, x, intervals=None):
    """``H(x, A)`` with ``A`` a finite union of closed intervals (``None``: everything)."""
    _require_1d(chars)
    intervals = _normalize(intervals)
    x = core._as_state(chars, x)
    tstar = core.boundary_time(chars, x)
    upper, _ = _truncation(chars, x, tstar)
    if intervals is not None and not intervals:
        return 0.0

    def weight(s):
        return math.exp(-_survival_exponent(chars, x, s))

    if intervals is None:
        return _integrate_pieces(weight, [0.0, upper])

    def indicator(s):
        return _inside(float(core.flow_at(chars, x, s)[0]), intervals)

    edges = [0.0] + _breakpoints(indicator, 0.0, upper) + [upper]
    return _integrate_pieces(lambda s: weight(s) if indicator(s) else 0.0, edges)


def kernel_J_mass(chars, x, intervals=None):
    """``J(x, A)``: jumps driven by the rate plus the forced jump at the exit time."""
    _require_1d(chars)
    intervals = _normalize(intervals)
    x = core._as_state(chars, x)
    tstar = core.boundary_time(chars, x)
    upper, truncated = _truncation(chars, x, tstar)
    if intervals is not None and not intervals:
        return 0.0
    if intervals is not None and chars.transition_mass is None:
        raise ModelError("J over a strict subset needs transition_mass on the characteristics")

    def q(s):
        if intervals is None:
            return 1.0
        return float(chars.transition_mass(core.flow_at(chars, x, s), intervals))

    def integrand(s):
        z = core.flow_at(chars, x, s)
        lam = float(chars.jump_rate(z))
        if lam == 0.0:
            return 0.0
        return lam * math.exp(-_survival_exponent(chars, x, s)) * q(s)

    edges = [0.0] + ([] if intervals is None else _breakpoints(q, 0.0, upper)) + [upper]
    mass = _integrate_pieces(integrand, edges)
    if not math.isinf(tstar) and not truncated:
        mass += math.exp(-_survival_exponent(chars, x, tstar)) * q(tstar)
    return mass


def check_markov_kernel(chars, x):
    """``|H(x, everything) + J(x, everything) - 1|``."""
    return abs(kernel_H_mass(chars, x) + kernel_J_mass(chars, x) - 1.0)


def kernel_sweep(chars, points, intervals=None):
    """``(x, H, J, deviation)`` rows for each probe point."""
    rows = []
    for x in points:
        h = kernel_H_mass(chars, x, intervals)
        j = kernel_J_mass(chars, x, intervals)
        rows.append((float(x), h, j, check_markov_kernel(chars, x) if intervals is not None
                     else abs(h + j - 1.0)))
    return rows
