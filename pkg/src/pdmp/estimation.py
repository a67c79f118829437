"""Nonparametric estimation of the inter-jump density from an embedded chain.

Transitions ``i -> i + 1`` that start in a set ``A`` are split by the block
``B_k`` their destination ``Z_{i+1}`` falls in.  For each block

* ``H_k(t)`` is the empirical probability that a transition from ``A`` lands
  in ``B_k`` with sojourn ``S_{i+1} > t``;
* ``l_k(t)`` is a kernel-smoothed Nelson-Aalen estimate of the hazard of
  ``S_{i+1}`` among the transitions from ``A`` into ``B_k``.

Their product is the sub-density of ``S_{i+1}`` restricted to ``B_k``;
summing over blocks estimates the density of the next sojourn from ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InsufficientDataError

MIN_TRANSITIONS = 20


# ---------------------------------------------------------------- smoothing kernels

def epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1, 0.75 * (1 - u * u), 0.0)


def triangular(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1, 1 - np.abs(u), 0.0)


def uniform(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1, 0.5, 0.0)


KERNELS = {"epanechnikov": epanechnikov, "triangular": triangular, "uniform": uniform}


def _kernel(shape):
    try:
        return KERNELS[shape]
    except KeyError:
        raise DomainError(f"unknown kernel shape {shape!r}; choose from {sorted(KERNELS)}") from None


def default_bandwidth(sojourns):
    """``n^(-1/5)`` times the sample standard deviation."""
    s = np.asarray(sojourns, dtype=float)
    if s.size < 2:
        raise InsufficientDataError("need at least two sojourns for a bandwidth")
    sd = float(np.std(s, ddof=1))
    if sd <= 0:
        raise InsufficientDataError("sojourns have zero spread")
    return s.size ** (-0.2) * sd


# ---------------------------------------------------------------- sets

@dataclass(frozen=True)
class Interval:
    """``[lo, hi)`` or ``[lo, hi]`` when ``closed`` is set."""

    lo: float
    hi: float
    closed: bool = False

    def __post_init__(self):
        if not self.hi >= self.lo:
            raise DomainError(f"interval [{self.lo}, {self.hi}] is reversed")

    def contains(self, v):
        v = np.asarray(v, dtype=float)
        upper = v <= self.hi if self.closed else v < self.hi
        return (v >= self.lo) & upper

    @property
    def width(self):
        return self.hi - self.lo


@dataclass(frozen=True)
class Partition:
    """Start set ``A`` and disjoint destination blocks, on coordinate ``axis``."""

    set_A: Interval
    blocks: tuple
    axis: int = 0

    def __post_init__(self):
        if self.set_A.width <= 0:
            raise DomainError("set A must have positive width")
        for a, b in zip(self.blocks[:-1], self.blocks[1:]):
            if b.lo < a.hi or (a.closed and b.lo == a.hi):
                raise DomainError("blocks must be disjoint and sorted")

    @property
    def edges(self):
        return np.array([b.lo for b in self.blocks] + [self.blocks[-1].hi])

    def block_of(self, v):
        """Block index of each value, ``-1`` when outside every block."""
        v = np.asarray(v, dtype=float)
        out = np.full(v.shape, -1, dtype=int)
        for k, b in enumerate(self.blocks):
            out[b.contains(v)] = k
        return out


@dataclass(frozen=True)
class Transitions:
    """Transitions ``Z_i -> (Z_{i+1}, S_{i+1})`` restricted to ``Z_i`` in ``A``."""

    destinations: np.ndarray
    sojourns: np.ndarray

    @property
    def n(self):
        return len(self.sojourns)


def transitions_from(chain, set_A, axis=0):
    """Transitions of ``chain`` whose start lies in ``set_A``."""
    Z = chain.Z[:, axis]
    start = set_A.contains(Z[:-1])
    return Transitions(destinations=Z[1:][start], sojourns=chain.S[1:][start])


def build_partition(chain, x, a_width, k_blocks, domain=(0.0, math.inf), axis=0,
                    min_transitions=MIN_TRANSITIONS):
    """``A`` centred at ``x`` and ``k_blocks`` quantile blocks of the destinations.

    ``A`` is clipped so that its closure stays strictly inside ``domain``.
    The blocks are half-open quantile intervals, the last one closed, so
    together they cover every observed destination.
    """
    if a_width <= 0:
        raise DomainError("a_width must be positive")
    if k_blocks < 1 or int(k_blocks) != k_blocks:
        raise DomainError("k_blocks must be a positive integer")
    x = float(np.ravel(x)[axis]) if np.ndim(x) else float(x)
    lo, hi = x - a_width / 2.0, x + a_width / 2.0
    margin = 1e-9 * a_width
    lo = max(lo, domain[0] + margin)
    hi = min(hi, domain[1] - margin)
    if hi <= lo:
        raise DomainError(f"no room for A around {x} inside {domain}")
    set_A = Interval(lo, hi, closed=True)
    if chain.n_transitions < k_blocks:
        raise InsufficientDataError(
            f"chain has {chain.n_transitions} transitions, fewer than {k_blocks} blocks")
    tr = transitions_from(chain, set_A, axis)
    if tr.n < min_transitions:
        raise InsufficientDataError(
            f"only {tr.n} transitions start in A=[{lo:.6g}, {hi:.6g}]; need at least {min_transitions}")
    edges = np.quantile(tr.destinations, np.linspace(0.0, 1.0, int(k_blocks) + 1))
    blocks = tuple(
        Interval(float(edges[k]), float(edges[k + 1]), closed=(k == k_blocks - 1))
        for k in range(int(k_blocks))
    )
    return Partition(set_A=set_A, blocks=blocks, axis=axis)


# ---------------------------------------------------------------- survival part

def estimate_H(chain, set_A, block, t, axis=0):
    """Fraction of transitions from ``A`` that land in ``block`` with sojourn ``> t``."""
    tr = transitions_from(chain, set_A, axis)
    if tr.n == 0:
        raise InsufficientDataError("no transition starts in A")
    s = np.sort(tr.sojourns[block.contains(tr.destinations)])
    t_arr = np.asarray(t, dtype=float)
    counts = s.size - np.searchsorted(s, t_arr, side="right")
    out = counts / tr.n
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- hazard part

@dataclass(frozen=True)
class HazardEstimate:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float
    kernel_shape: str
    zero_at_risk: np.ndarray   # grid points where nobody is at risk (value forced to 0)
    n_events: int


def _smoothed_hazard(sojourns, grid, bandwidth, kernel):
    """``(1/b) sum_i K((t - S_i)/b) / Y(S_i)`` with ``Y(s) = #{S_j >= s}``."""
    s = np.sort(np.asarray(sojourns, dtype=float))
    n = s.size
    at_risk_events = n - np.searchsorted(s, s, side="left")
    weights = 1.0 / at_risk_events
    at_risk_grid = n - np.searchsorted(s, grid, side="left")
    values = np.zeros(grid.size)
    lo = np.searchsorted(s, grid - bandwidth, side="left")
    hi = np.searchsorted(s, grid + bandwidth, side="right")
    for g in range(grid.size):
        if hi[g] > lo[g]:
            u = (grid[g] - s[lo[g]:hi[g]]) / bandwidth
            values[g] = np.dot(kernel(u), weights[lo[g]:hi[g]]) / bandwidth
    empty = at_risk_grid == 0
    values[empty] = 0.0
    return values, empty


def estimate_l(chain, set_A, block, grid, bandwidth, kernel_shape="epanechnikov", axis=0):
    """Kernel-smoothed hazard of the sojourn among transitions from ``A`` into ``block``.

    Each event ``S_{i+1}`` contributes its kernel bump divided by the number
    of transitions from ``A`` into ``block`` still at risk at ``S_{i+1}``.
    """
    grid = np.asarray(grid, dtype=float)
    if bandwidth is None or not bandwidth > 0:
        raise DomainError("bandwidth must be positive")
    kernel = _kernel(kernel_shape)
    tr = transitions_from(chain, set_A, axis)
    if tr.n == 0 or np.all(tr.sojourns < grid.min(initial=math.inf)):
        raise InsufficientDataError("no transition from A is at risk on the requested grid")
    s = tr.sojourns[block.contains(tr.destinations)]
    if s.size == 0:
        return HazardEstimate(grid, np.zeros(grid.size), float(bandwidth), kernel_shape,
                              np.ones(grid.size, dtype=bool), 0)
    values, empty = _smoothed_hazard(s, grid, bandwidth, kernel)
    return HazardEstimate(grid, values, float(bandwidth), kernel_shape, empty, int(s.size))


# ---------------------------------------------------------------- density

@dataclass(frozen=True)
class DensityEstimate:
    x: float
    grid: np.ndarray
    values: np.ndarray
    n_used: int
    partition: Partition
    bandwidth: float
    kernel_shape: str
    hazards: tuple = field(repr=False)
    survivals: np.ndarray = field(repr=False)

    @property
    def zero_at_risk(self):
        """Grid points where some nonempty block had nobody at risk."""
        flags = [h.zero_at_risk for h in self.hazards if h.n_events > 0]
        return np.any(flags, axis=0) if flags else np.zeros(self.grid.size, dtype=bool)


def estimate_density(chain, x, partition, grid, bandwidth=None, kernel_shape="epanechnikov"):
    """``f_hat(x, t) = sum_k l_k(t) H_k(t)`` on ``grid``.

    ``bandwidth`` defaults to :func:`default_bandwidth` of the sojourns of
    all transitions starting in ``A``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("grid must be a nonempty 1-D array")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise DomainError("grid must be increasing and positive")
    tr = transitions_from(chain, partition.set_A, partition.axis)
    if tr.n == 0:
        raise InsufficientDataError("no transition starts in A")
    if bandwidth is None:
        bandwidth = default_bandwidth(tr.sojourns)
    hazards, survivals = [], []
    for block in partition.blocks:
        hazards.append(estimate_l(chain, partition.set_A, block, grid, bandwidth,
                                  kernel_shape, partition.axis))
        survivals.append(estimate_H(chain, partition.set_A, block, grid, partition.axis))
    survivals = np.array(survivals)
    values = np.sum([h.values for h in hazards] * survivals, axis=0)
    return DensityEstimate(
        x=float(np.ravel(x)[partition.axis]) if np.ndim(x) else float(x),
        grid=grid,
        values=values,
        n_used=tr.n,
        partition=partition,
        bandwidth=float(bandwidth),
        kernel_shape=kernel_shape,
        hazards=tuple(hazards),
        survivals=survivals,
    )
