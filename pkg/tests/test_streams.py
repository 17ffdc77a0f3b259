import numpy as np
import pytest

from dpprocure.streams import Streams, as_streams


def test_same_name_same_draws():
    a = Streams(7).get("noise/estimate").random(5)
    b = Streams(7).get("noise/estimate").random(5)
    assert np.array_equal(a, b)


def test_names_and_seeds_separate_streams():
    s = Streams(7)
    assert not np.array_equal(s.get("a").random(5), s.get("b").random(5))
    assert not np.array_equal(Streams(7).get("a").random(5), Streams(8).get("a").random(5))


def test_child_is_a_path_prefix():
    s = Streams(3)
    x = s.child("side/a").get("offers").random(4)
    y = s.get("side/a/offers").random(4)
    assert np.array_equal(x, y)
    assert np.array_equal(s.split(2).get("z").random(3), s.child("#2").get("z").random(3))


def test_adding_a_consumer_does_not_shift_others():
    s = Streams(11)
    before = s.get("population").random(3)
    s.get("something/new").random(100)
    assert np.array_equal(before, Streams(11).get("population").random(3))


def test_seed_validation_and_coercion():
    with pytest.raises(ValueError):
        Streams(-1)
    with pytest.raises(ValueError):
        Streams(2**64)
    s = Streams(5)
    assert as_streams(s) is s
    assert as_streams(5).seed == 5
    g1, g2 = np.random.default_rng(0), np.random.default_rng(0)
    assert as_streams(g1).seed == as_streams(g2).seed
