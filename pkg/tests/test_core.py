import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uclab.core import (
    Alphabet,
    NegativeMass,
    NotNormalized,
    Overflow,
    RandomSource,
    Transcript,
    l1_distance,
    tuple_codec,
    validate_dist,
)


def test_validate_dist_examples():
    d = validate_dist([0.5, 0.5])
    assert d.size == 2
    with pytest.raises(NotNormalized):
        validate_dist([0.6, 0.6])
    with pytest.raises(NegativeMass):
        validate_dist([1.2, -0.2])


def test_dist_rejects_empty():
    with pytest.raises(ValueError):
        validate_dist([])


def test_alphabet_bounds():
    assert 3 in Alphabet(4)
    assert 4 not in Alphabet(4)
    with pytest.raises(ValueError):
        Alphabet(0)
    with pytest.raises(Overflow):
        Alphabet(2 ** 21)


def test_l1_examples():
    p = validate_dist([0.5, 0.5])
    assert l1_distance(p, p) == 0.0
    assert l1_distance([1.0, 0.0], [0.0, 1.0]) == 2.0
    assert l1_distance([0.5, 0.5], [0.75, 0.25]) == pytest.approx(0.5)
    with pytest.raises(Exception):
        l1_distance([0.5, 0.5], [0.5, 0.25, 0.25])


def _rand_dist(gen, n):
    p = gen.random(n) + 1e-9
    return p / p.sum()


@given(st.integers(0, 10 ** 6))
@settings(max_examples=40, deadline=None)
def test_l1_metric_properties(seed):
    gen = np.random.default_rng(seed)
    n = int(gen.integers(2, 6))
    p, q, r = (_rand_dist(gen, n) for _ in range(3))
    assert l1_distance(p, q) == pytest.approx(l1_distance(q, p))
    assert l1_distance(p, p) <= 1e-12
    assert l1_distance(p, r) <= l1_distance(p, q) + l1_distance(q, r) + 1e-12
    assert 0.0 <= l1_distance(p, q) <= 2.0


def test_tuple_codec_examples():
    ident = tuple_codec(1, 5)
    for i in range(5):
        assert ident.index_of((i,)) == i
    c = tuple_codec(3, 2)
    assert c.index_of((1, 0, 1)) == 5
    for i in range(8):
        assert c.index_of(c.tuple_of(i)) == i


@pytest.mark.parametrize("size,k", [(2, 12), (4, 6), (8, 4), (16, 3)])
def test_tuple_codec_exhaustive_roundtrip(size, k):
    c = tuple_codec(k, size)
    assert c.count == size ** k <= 4096
    for i in range(c.count):
        t = c.tuple_of(i)
        assert len(t) == k
        assert c.index_of(t) == i


def test_tuple_codec_overflow():
    with pytest.raises(Overflow):
        tuple_codec(30, 4)


def test_transcript_invariants():
    tr = Transcript((0, 1), (1, 0))
    assert tr.n == 2
    tr.validate_alphabets(2, 2)
    with pytest.raises(ValueError):
        tr.validate_alphabets(2, 1)
    with pytest.raises(ValueError):
        Transcript((0, 1), (0,))
    assert Transcript.empty().n == 0


def test_random_source_determinism():
    a = RandomSource(1234, 7).generator().random(10 ** 5)
    b = RandomSource(1234, 7).generator().random(10 ** 5)
    assert np.array_equal(a, b)
    c = RandomSource(1234, 8).generator().random(10 ** 5)
    assert not np.array_equal(a, c)


def test_random_source_derive_stable():
    r = RandomSource(5)
    d1 = r.derive("epoch", 3)
    d2 = r.derive("epoch", 3)
    assert d1 == d2
    assert d1 != r.derive("epoch", 4)
    assert d1.seed == r.seed
