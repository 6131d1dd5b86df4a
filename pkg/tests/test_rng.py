import numpy as np

from minidas import rng


def test_same_path_same_stream():
    a = rng.generator(7, "mc", 3, "nmf").random(100)
    b = rng.generator(7, "mc", 3, "nmf").random(100)
    assert (a == b).all()


def test_different_paths_differ():
    a = rng.generator(7, "mc", 3).random(100)
    b = rng.generator(7, "mc", 4).random(100)
    c = rng.generator(8, "mc", 3).random(100)
    assert not (a == b).all()
    assert not (a == c).all()


def test_path_parts_are_not_concatenated():
    # ("ab", "c") and ("a", "bc") must name distinct streams
    assert rng.derive_key(1, "ab", "c") != rng.derive_key(1, "a", "bc")


def test_pyrandom_reproducible():
    a = [rng.pyrandom(5, "x").randrange(1000) for _ in range(10)]
    b = [rng.pyrandom(5, "x").randrange(1000) for _ in range(10)]
    assert a[0] == b[0]


def test_named_streams_uncorrelated():
    a = rng.generator(11, "s", 0).standard_normal(100_000)
    b = rng.generator(11, "s", 1).standard_normal(100_000)
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 0.01
