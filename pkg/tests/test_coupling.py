import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from pdmp import coupling, models
from pdmp.errors import DomainError
from pdmp.rng import RandomStream

# mpmath quadrature with the density crossing as a breakpoint, 30 digits
STICK_ORACLE_1_09 = 0.8195256991319309
STICK_ORACLE_Y05 = {0.01: 0.9826773592000679, 0.1: 0.8348593699963143,
                    0.5: 0.3423542102415014, 1.0: 0.05419195803628303}


# ---------------------------------------------------------------- dynamical coupling

def test_equal_starts_stay_equal():
    path = coupling.simulate_pair(2.0, 2.0, 30.0, RandomStream(0))
    assert path.coalesced_at == 0.0
    assert np.all(path.states[:, 0] == path.states[:, 1])
    assert set(path.kinds[1:-1]) <= {"simultaneous"}


@settings(max_examples=200, deadline=None)
@given(x=st.floats(0, 10), y=st.floats(0, 10), seed=st.integers(0, 2**32))
def test_gap_dynamics_exact(x, y, seed):
    path = coupling.simulate_pair(x, y, 15.0, RandomStream(seed))
    assert path.gaps[0] == abs(x - y)
    for k in range(1, len(path.times) - 1):
        t_mid = 0.5 * (path.times[k - 1] + path.times[k])
        assert path.gap_at(t_mid) == path.gaps[k - 1]
        if path.kinds[k] == "simultaneous":
            assert path.gaps[k] == path.gaps[k - 1] / 2


def test_marginal_halving_identity():
    path = coupling.simulate_pair(3.0, 1.0, 40.0, RandomStream(1))
    for side in (0, 1):
        prev = path.states[0, side]
        for k in range(1, len(path.times) - 1):
            dt = path.times[k] - path.times[k - 1]
            cur = path.states[k, side]
            moved = prev + dt
            assert cur == pytest.approx(moved, rel=1e-12) or cur == pytest.approx(moved / 2, rel=1e-12)
            prev = cur


def test_solo_jump_moves_only_the_higher():
    path = coupling.simulate_pair(3.0, 1.0, 40.0, RandomStream(2))
    for k, kind in enumerate(path.kinds):
        if kind == "solo":
            dt = path.times[k] - path.times[k - 1]
            before = path.states[k - 1] + dt
            hi = int(np.argmax(before))
            assert path.states[k, 1 - hi] == pytest.approx(before[1 - hi], rel=1e-12)
            assert path.states[k, hi] == pytest.approx(before[hi] / 2, rel=1e-12)


def test_marginal_fidelity_at_time_five():
    n = 10_000
    paths = [coupling.simulate_pair(3.0, 1.0, 5.0, RandomStream(30, i)) for i in range(n)]
    xs = np.array([p.state_at(5.0)[0] for p in paths])
    ref = models.tcp_sample_at(3.0, [5.0], n, seed=31)[0]
    assert stats.ks_2samp(xs, ref).pvalue > 0.01


def test_batch_pairs_match_scalar_law():
    X, Y = coupling.pair_sample_at(3.0, 1.0, [2.0], 20000, seed=5)
    scalar = np.array([abs(np.subtract(*coupling.simulate_pair(3.0, 1.0, 2.0, RandomStream(6, i))
                                        .state_at(2.0))) for i in range(5000)])
    batch = np.abs(X[0] - Y[0])
    se = math.hypot(batch.std() / math.sqrt(batch.size), scalar.std() / math.sqrt(scalar.size))
    assert abs(batch.mean() - scalar.mean()) < 3 * se


def test_contraction_at_half_power():
    grid = np.arange(1.0, 11.0)
    est, se = coupling.coupling_moment_curve(3.0, 1.0, grid, 100_000, seed=9, power=0.5)
    assert np.all(np.diff(est) < 3 * np.hypot(se[1:], se[:-1]))


# ---------------------------------------------------------------- sticking

def test_sticking_equal_starts():
    for i in range(200):
        ok, t = coupling.sticking_attempt(1.3, 1.3, RandomStream(1, i))
        assert ok and t > 0


def test_sticking_on_success_positions_agree():
    for i in range(500):
        out = coupling._stick(1.0, 0.9, RandomStream(2, i))
        if out.success:
            assert out.x == out.y
        else:
            assert out.time >= 0


def test_sticking_quadrature_matches_oracle():
    assert coupling.sticking_success_probability(1.0, 0.9) == pytest.approx(STICK_ORACLE_1_09, abs=1e-9)
    for delta, value in STICK_ORACLE_Y05.items():
        assert coupling.sticking_success_probability(0.5 + delta, 0.5) == pytest.approx(value, abs=1e-9)


def test_sticking_frequency_matches_oracle():
    n = 100_000
    s = RandomStream(77)
    hits = sum(coupling.sticking_attempt(1.0, 0.9, s)[0] for _ in range(n))
    p = STICK_ORACLE_1_09
    assert abs(hits / n - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_sticking_success_decreases_with_gap():
    n = 20_000
    freqs = []
    for delta in (0.01, 0.1, 0.5, 1.0):
        # common random numbers: the same streams for every gap
        freqs.append(np.mean([coupling.sticking_attempt(0.5 + delta, 0.5, RandomStream(3, i))[0]
                              for i in range(n)]))
    se = math.sqrt(0.25 / n)
    assert all(a >= b - 3 * se for a, b in zip(freqs, freqs[1:]))
    exact = [STICK_ORACLE_Y05[d] for d in (0.01, 0.1, 0.5, 1.0)]
    assert np.all(np.diff(exact) < 0)


def test_sticking_argument_order_irrelevant_for_success():
    a = [coupling.sticking_attempt(1.0, 0.9, RandomStream(4, i))[0] for i in range(300)]
    b = [coupling.sticking_attempt(0.9, 1.0, RandomStream(4, i))[0] for i in range(300)]
    assert a == b


@pytest.mark.parametrize("hi,lo", [(1.0, 0.9), (2.0, 1.0)])
def test_maximal_coupling_keeps_marginals(hi, lo):
    n = 20000
    s = RandomStream(8)
    draws = np.array([coupling._maximal_first_jumps(hi, lo, hi - lo, s)[:2] for _ in range(n)])
    for col, start in ((0, hi), (1, lo)):
        cdf = lambda t, a=start: 1 - np.exp(-t * t / 2 - a * t)
        assert stats.kstest(draws[:, col], cdf).pvalue > 0.001


# ---------------------------------------------------------------- composite coupling

def test_composite_equal_starts():
    assert coupling.composite_tv_coupling(1.0, 1.0, 0.05, RandomStream(0), 10.0) == (True, 0.0)


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.1, 2.0])
def test_composite_rejects_bad_epsilon(eps):
    with pytest.raises(DomainError):
        coupling.composite_tv_coupling(1.0, 2.0, eps, RandomStream(0), 10.0)


def test_phase_one_duration_default():
    _, lam = models.theoretical_rates()
    assert coupling.phase_one_duration(0.05) == pytest.approx(math.log(20) / (0.9 * lam), rel=1e-15)


def test_repetition_only_adds_chances():
    # one round: phase one plus one sticking attempt, then stop
    n, t1 = 3000, 5.0
    single, repeated = 0, 0
    for i in range(n):
        ok1, tc1 = _one_round(1.0, 2.0, 0.3, RandomStream(10, i), t1)
        ok2, tc2 = coupling.composite_tv_coupling(1.0, 2.0, 0.3, RandomStream(10, i), 60.0,
                                                  phase_one=t1)
        single += ok1
        repeated += ok2
        if ok1:
            # identical randomness until the first round ends
            assert ok2 and tc2 == tc1
    assert repeated >= single


def _one_round(x, y, eps, stream, t1):
    x, y, hit = coupling._pair_run(x, y, t1, stream)
    if hit is not None:
        return True, hit
    if abs(x - y) > eps:
        return False, None
    out = coupling._stick(x, y, stream)
    return (True, t1 + out.time) if out.success else (False, None)


def test_tv_curve_decays_from_one_two():
    # nothing can coalesce during the first phase; the drop comes right after it
    grid = np.array([10.0, 25.0, 28.0, 28.5, 29.0, 30.0, 40.0])
    est, se = coupling.tv_upper_curve(1.0, 2.0, grid, 2000, seed=4, epsilon=0.05)
    assert np.all(np.diff(est) <= 0)
    t1 = coupling.phase_one_duration(0.05)
    assert np.all(est[grid > t1] < 1)
    fit = coupling.fit_rate(grid[est > 0], est[est > 0])
    assert fit.rate >= 0


def test_tv_upper_trivial_cases():
    assert coupling.estimate_tv_upper(1.0, 1.0, 3.0, 50, seed=0) == 0.0
    assert coupling.estimate_tv_upper(1.0, 2.0, 0.0, 50, seed=0) == 1.0


def test_tv_upper_parallel_matches_serial():
    a = coupling.coalescence_times(1.0, 1.2, 2000, 3, 40.0, workers=1)
    b = coupling.coalescence_times(1.0, 1.2, 2000, 3, 40.0, workers=2)
    assert np.array_equal(a, b)


# ---------------------------------------------------------------- distances and fits

def test_empirical_wasserstein_examples():
    assert coupling.empirical_wasserstein([3, 1, 2], [1, 2, 3]) == 0.0
    assert coupling.empirical_wasserstein([0, 1], [1, 2], 1) == 1.0
    assert coupling.empirical_wasserstein([0], [3], 2) == 3.0
    assert coupling.empirical_wasserstein([0, 0], [4, 1], 0.5) == 1.5


def test_empirical_wasserstein_rejects_bad_input():
    with pytest.raises(DomainError):
        coupling.empirical_wasserstein([1, 2], [1])
    with pytest.raises(DomainError):
        coupling.empirical_wasserstein([1], [1], 0.7)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30), st.floats(-5, 5))
def test_wasserstein_shift(values, shift):
    a = np.array(values)
    assert coupling.empirical_wasserstein(a, a + shift, 1) == pytest.approx(abs(shift), abs=1e-9)


def test_fit_rate_examples():
    t = np.arange(4.0)
    fit = coupling.fit_rate(t, np.exp(-2 * t))
    assert fit.rate == pytest.approx(2.0, abs=1e-12) and fit.residual_rms < 1e-12
    assert coupling.fit_rate(t, np.full(4, 3.0)).rate == pytest.approx(0.0, abs=1e-12)
    gen = np.random.default_rng(0)
    t = np.linspace(0, 10, 50)
    noisy = np.exp(-0.5 * t) * (1 + gen.uniform(-0.01, 0.01, t.size))
    assert coupling.fit_rate(t, noisy).rate == pytest.approx(0.5, abs=0.02)


def test_fit_rate_window_and_errors():
    t = np.arange(10.0)
    v = np.exp(-t)
    v[0] = 0.0
    with pytest.raises(DomainError):
        coupling.fit_rate(t, v)
    fit = coupling.fit_rate(t, v, window=(1, 9))
    assert fit.window == (1.0, 9.0) and fit.rate == pytest.approx(1.0)
    with pytest.raises(DomainError):
        coupling.fit_rate([0, 1], [1, 1])
