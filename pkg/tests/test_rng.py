import numpy as np
import pytest

from pdmp.rng import RandomStream


def test_same_key_reproduces_sequence():
    a = RandomStream(42, 3).generator.random(100)
    b = RandomStream(42, 3).generator.random(100)
    assert np.array_equal(a, b)


def test_distinct_keys_give_distinct_sequences():
    base = RandomStream(42, 0).generator.random(1000)
    for other in (RandomStream(42, 1), RandomStream(43, 0), RandomStream(42, 0, lane=1)):
        v = other.generator.random(1000)
        assert not np.array_equal(base, v)
        # crude independence check: sample correlation is small
        assert abs(np.corrcoef(base, v)[0, 1]) < 0.15


def test_uniform_never_zero_and_exponential_positive():
    s = RandomStream(0)
    u = s.uniforms(10000)
    assert np.all((u > 0) & (u <= 1))
    assert all(s.exponential(2.0) > 0 for _ in range(1000))


def test_substream_matches_lane_constructor():
    s = RandomStream(5, 2)
    assert np.array_equal(s.substream(4).generator.random(10),
                          RandomStream(5, 2, lane=4).generator.random(10))


def test_large_seeds_reduced_mod_2_64():
    assert RandomStream(2**64 + 7).master_seed == 7


def test_negative_index_rejected():
    with pytest.raises(ValueError):
        RandomStream(0, -1)
