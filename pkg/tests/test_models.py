import math

import numpy as np
import pytest
from scipy import integrate

from pdmp import core, models
from pdmp.errors import DomainError, InvariantViolation, ModelError
from pdmp.rng import RandomStream

TWO_WELLS = models.two_wells_model()


# ---------------------------------------------------------------- TCP

def test_linear_rate_and_halving(tcp):
    assert tcp.jump_rate(np.array([2.5])) == 2.5
    for variant in ("linear_rate", "constant_rate"):
        ch = models.tcp_characteristics(models.TcpModel(variant))
        assert ch.transition_sampler(np.array([4.0]), RandomStream(0))[0] == 2.0


def test_registered_inversion(tcp):
    assert tcp.hazard_inverse(np.array([0.0]), 2.0) == pytest.approx(2.0, abs=1e-15)
    const = models.tcp_characteristics(models.TcpModel("constant_rate", 4.0))
    assert const.hazard_inverse(np.array([1.0]), 2.0) == 0.5


def test_inversion_stable_for_large_window(tcp):
    # x t + t^2/2 = e with x = 1e8: t ~ e / x, no cancellation
    assert tcp.hazard_inverse(np.array([1e8]), 1.0) == pytest.approx(1e-8, rel=1e-12)


@pytest.mark.parametrize("r", [0.0, -1.0])
def test_constant_rate_must_be_positive(r):
    with pytest.raises(ModelError):
        models.TcpModel("constant_rate", r)


def test_unknown_variant_rejected():
    with pytest.raises(ModelError):
        models.TcpModel("quadratic")


def test_true_density_examples():
    assert models.tcp_true_density(0.0, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-15)
    for x in (0.0, 0.7, 3.0):
        assert models.tcp_true_density(x, 0.0) == x
    for x in (0.0, 1.0, 5.0):
        mass, _ = integrate.quad(lambda t: models.tcp_true_density(x, t), 0, np.inf,
                                 epsabs=1e-12)
        assert mass == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(DomainError):
        models.tcp_true_density(-1.0, 1.0)


def test_theoretical_rates():
    c, lam = models.theoretical_rates()
    assert abs(c - math.sqrt(2) * (3 + math.sqrt(3)) / 8) < 1e-12
    assert round(c, 2) == 0.84 and round(lam, 2) == 0.12
    assert 0 < lam < c < 1
    assert lam == math.sqrt(2) * (1 - math.sqrt(c))


def test_tv_lower_bound():
    assert models.tv_lower_bound(0.0, 0.5, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert models.tv_lower_bound(3.0, 1.0, 0.0) == 1.0
    assert models.tv_lower_bound(1.0, 1.1, 1.0) == pytest.approx(math.exp(-1.5), abs=1e-15)
    grid = np.linspace(0, 5, 51)
    assert np.all(np.diff(models.tv_lower_bound(1.0, 2.0, grid)) < 0)
    with pytest.raises(DomainError):
        models.tv_lower_bound(-1.0, 0.0, 1.0)


def test_halving_identity_exact(tcp):
    traj = core.simulate(tcp, 0.3, 500.0, RandomStream(12))
    prev = np.concatenate([[0.3], traj.post_jump_states[:-1, 0]])
    assert np.all(traj.post_jump_states[:, 0] == (prev + traj.sojourns) / 2)


@pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
def test_generator_consistency(x):
    # f(x) = x^2: Lf = 2x + x (x^2/4 - x^2)
    h, n = 0.01, 1_000_000
    sample = models.tcp_sample_at(x, [h], n, seed=int(10 * x))[0]
    ratio = (sample**2 - x * x) / h
    generator = 2 * x + x * (x * x / 4 - x * x)
    se = ratio.std(ddof=1) / math.sqrt(n)
    assert abs(ratio.mean() - generator) < 4 * se + 0.05


def test_vectorized_sampler_matches_engine_law(tcp):
    from scipy import stats
    fast = models.tcp_sample_at(1.0, [3.0], 5000, seed=1)[0]
    slow = [core.state_at(core.simulate(tcp, 1.0, 3.0, RandomStream(2, i)), 3.0)[0]
            for i in range(5000)]
    assert stats.ks_2samp(fast, slow).pvalue > 0.001


def test_long_run_sample_shape_and_support():
    s = models.tcp_long_run_sample(1000, 10.0, 1.0, RandomStream(0))
    assert s.shape == (1000,) and np.all(s > 0)


# ---------------------------------------------------------------- switching

def test_switching_never_exits_and_flags():
    ch = models.switching_characteristics(TWO_WELLS)
    assert core.boundary_time(ch, [0.0, 0]) == math.inf
    assert ch.has_mode and ch.sampling == "thinning"


def test_reducible_rates_rejected():
    with pytest.raises(ModelError):
        models.affine_switching_model(A=[[[-1.0]], [[-1.0]]], b=[[1.0], [-1.0]],
                                      rate_matrix=[[0, 0], [1, 0]], box=([-2.0], [2.0]))


def test_bad_rates_rejected():
    with pytest.raises(ModelError):
        models.affine_switching_model(A=[[[-1.0]], [[-1.0]]], b=[[1.0], [-1.0]],
                                      rate_matrix=[[1, 1], [1, 0]], box=([-2.0], [2.0]))
    with pytest.raises(ModelError):
        models.affine_switching_model(A=[[[-1.0]], [[-1.0]]], b=[[1.0], [-1.0]],
                                      rate_matrix=[[0, 1], [1, 0]], box=([-2.0], [2.0]),
                                      rate_bound=0.5)


def test_rate_bound_violation_at_runtime():
    ch = models.switching_characteristics(TWO_WELLS).with_options(rate_bound=0.5)
    with pytest.raises(Exception) as info:
        core.simulate(ch, [0.0, 0], 50.0, RandomStream(0))
    assert "rate_bound" in str(info.value)


def test_two_state_time_fraction():
    ch = models.switching_characteristics(TWO_WELLS)
    fractions = [models.mode_time_fraction(core.simulate(ch, [0.0, 0], 200.0, RandomStream(5, i)), 0)
                 for i in range(200)]
    se = np.std(fractions, ddof=1) / math.sqrt(len(fractions))
    assert abs(np.mean(fractions) - 0.5) < 3 * se


def test_position_continuous_and_only_mode_jumps():
    ch = models.switching_characteristics(TWO_WELLS)
    traj = core.simulate(ch, [0.2, 1], 100.0, RandomStream(3))
    starts = np.vstack([traj.initial_state, traj.post_jump_states[:-1]])
    for base, s, z in zip(starts, traj.sojourns, traj.post_jump_states):
        pre = core.flow_at(ch, base, s)
        assert z[0] == pre[0]
        assert z[1] != pre[1] and z[1] in (0.0, 1.0)


def test_two_wells_stay_in_unit_interval():
    ch = models.switching_characteristics(TWO_WELLS)
    traj = core.simulate(ch, [0.0, 0], 500.0, RandomStream(4))
    ts = np.linspace(0, 500, 20001)
    ys = np.array([core.state_at(traj, t)[0] for t in ts])
    assert ys.min() >= -1 and ys.max() <= 1


def test_invariant_violation_detected():
    # a field that pushes out of the declared box
    model = models.affine_switching_model(A=[[[1.0]], [[1.0]]], b=[[0.0], [0.0]],
                                          rate_matrix=[[0, 1], [1, 0]], box=([-2.0], [2.0]))
    ch = models.switching_characteristics(model)
    with pytest.raises(InvariantViolation):
        core.simulate(ch, [1.0, 0], 50.0, RandomStream(0))


def test_occupancy_support_and_normalization():
    occ = models.occupancy_histogram(TWO_WELLS, [0.0, 0], 2000.0, 100.0, 200, RandomStream(1))
    assert occ.mass.sum() == pytest.approx(1.0, abs=1e-12)
    centers = 0.5 * (occ.edges[0][1:] + occ.edges[0][:-1])
    width = occ.bin_widths[0]
    outside = np.abs(centers) > 1 + width
    assert occ.marginal()[outside].sum() < 1e-3


def test_occupancy_self_consistency():
    a = models.occupancy_histogram(TWO_WELLS, [0.0, 0], 20000.0, 100.0, 20, RandomStream(1))
    b = models.occupancy_histogram(TWO_WELLS, [0.0, 0], 20000.0, 100.0, 20, RandomStream(2))
    assert np.abs(a.mass - b.mass).sum() < 0.05


def test_occupancy_rejects_empty_bins():
    with pytest.raises(DomainError):
        models.occupancy_histogram(TWO_WELLS, [0.0, 0], 10.0, 1.0, [], RandomStream(0))
    with pytest.raises(DomainError):
        models.occupancy_histogram(TWO_WELLS, [0.0, 0], 10.0, 20.0, 10, RandomStream(0))


def test_two_dimensional_affine_flow():
    A = [[0.0, 1.0], [-1.0, 0.0]]
    f = models.AffineField(A, [0.0, 0.0])
    y = f.flow(np.array([1.0, 0.0]), math.pi / 2)
    assert y == pytest.approx([0.0, -1.0], abs=1e-12)
