import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uclab import capacity as cap
from uclab import channels as chan
from uclab import reference as ref
from uclab.core import RandomSource, l1_distance


def _bsc(p):
    return chan.DmcChannel([[1 - p, p], [p, 1 - p]])


# -- codes -------------------------------------------------------------------


def test_exhaustive_code_is_bijective():
    code = ref.random_block_code(2, 4, [0.5, 0.5], RandomSource(0),
                                 kernel=np.eye(2), exhaustive=True)
    seen = {code.codeword(w) for w in range(4)}
    assert len(seen) == 4
    # ML against the identity decodes every codeword back to itself
    ident = chan.DmcChannel(np.eye(2))
    assert ref.ifb_error_exact(code, ident, 3) == pytest.approx(0.0)


def test_identity_kernel_ml_decoder():
    code = ref.random_block_code(1, 2, [0.5, 0.5], RandomSource(1),
                                 kernel=np.eye(2), exhaustive=True)
    assert list(code.decoder) == [0, 1]


def test_repetition_code_majority_vote():
    enc = np.asarray([[0, 0, 0], [1, 1, 1]])
    dec = ref._build_decoder(enc, 2, 2, [[0.89, 0.11], [0.11, 0.89]])
    code = ref.BlockCode(3, 2, 2, 2, enc, dec)
    from uclab.core import tuple_codec
    codec = tuple_codec(3, 2)
    for yi in range(8):
        ys = codec.tuple_of(yi)
        assert code.decoder[yi] == (1 if sum(ys) >= 2 else 0)


def test_too_many_messages():
    with pytest.raises(ref.TooManyMessages):
        ref.random_block_code(1, 3, [0.5, 0.5], RandomSource(0))


def test_code_text_roundtrip():
    code = ref.random_block_code(2, 3, [0.3, 0.7], RandomSource(2),
                                 kernel=[[0.9, 0.1], [0.2, 0.8]])
    text = code.to_text()
    back = ref.BlockCode.from_text(text, output_size=2,
                                   kernel=[[0.9, 0.1], [0.2, 0.8]])
    assert np.array_equal(back.encoder, code.encoder)
    assert np.array_equal(back.decoder, code.decoder)


# -- IFB / AFB ---------------------------------------------------------------


def test_ifb_identity_zero():
    code = ref.random_block_code(1, 2, [0.5, 0.5], RandomSource(0),
                                 kernel=np.eye(2), exhaustive=True)
    assert ref.ifb_error_exact(code, chan.DmcChannel(np.eye(2)), 5) == 0.0


def test_ifb_uninformative_channel_half():
    code = ref.random_block_code(1, 2, [0.5, 0.5], RandomSource(0),
                                 kernel=np.eye(2), exhaustive=True)
    flat = chan.DmcChannel([[0.5, 0.5], [0.5, 0.5]])
    assert ref.ifb_error_exact(code, flat, 4) == pytest.approx(0.5)


def test_ifb_phase_subtracting_code():
    # period-2 noise (0,1); the k=2 code pre-subtracts it, so y equals the
    # message tuple and decoding is error-free at rate 1
    noise = (0, 1)
    enc = np.asarray([[(w >> 1) ^ noise[0], (w & 1) ^ noise[1]]
                      for w in range(4)])
    dec = np.arange(4)
    code = ref.BlockCode(2, 4, 2, 2, enc, dec)
    ch = chan.ModuloAdditiveChannel(2, chan.PeriodicNoise(list(noise)))
    assert code.rate == pytest.approx(1.0)
    assert ref.ifb_error_exact(code, ch, 8) == pytest.approx(0.0)


def test_ifb_monte_carlo_matches_exact():
    code = ref.random_block_code(2, 2, [0.5, 0.5], RandomSource(3),
                                 kernel=[[0.8, 0.2], [0.2, 0.8]])
    ch = _bsc(0.2)
    exact = ref.ifb_error_exact(code, ch, 4)
    est, se = ref.ifb_error(code, ch, 4, trials=4000, rng=RandomSource(7))
    assert abs(est - exact) <= 4 * se + 1e-3


def test_afb_equals_ifb_for_dmc():
    code = ref.random_block_code(2, 3, [0.5, 0.5], RandomSource(4),
                                 kernel=[[0.85, 0.15], [0.25, 0.75]])
    ch = _bsc(0.15)
    assert ref.afb_error(code, ch.clone(), 4) == pytest.approx(
        ref.ifb_error_exact(code, ch.clone(), 4), abs=1e-12)


def test_afb_password_worst_state():
    # code tuned to the good (identity) mode; the bad mode forces >= 1/2
    code = ref.random_block_code(1, 2, [0.5, 0.5], RandomSource(0),
                                 kernel=np.eye(2), exhaustive=True)
    pw = chan.PasswordChannel(1)
    afb = ref.afb_error(code, pw, 3)
    # block 1 is error-free only in good mode; later blocks take the worst
    # reachable state, which includes the bad mode
    assert afb >= (0.5 * 2) / 3 - 1e-12
    assert ref.ifb_error_exact(code, pw.clone(), 3) <= afb + 1e-12


def test_afb_identity_zero():
    code = ref.random_block_code(1, 2, [0.5, 0.5], RandomSource(0),
                                 kernel=np.eye(2), exhaustive=True)
    assert ref.afb_error(code, chan.DmcChannel(np.eye(2)), 4) == 0.0


def test_afb_dominates_ifb_battery():
    from uclab.harness import check_afb_ifb

    result = check_afb_ifb(instances=25, seed=5)
    assert result.passed, result.detail


# -- alignment ---------------------------------------------------------------


def test_alignment_trivial():
    s = ref.alignment(1, 1, 1, 5)
    assert s.set_sizes == (5,)
    assert s.block_counts == (1,)
    assert s.n0 == 0
    assert s.lambdas == (Fraction(0), Fraction(1))


def test_alignment_brute_force_example():
    q, k, L, n = 12, 3, 2, 6
    s = ref.alignment(q, k, L, n)
    # direct placement of blocks at global starts 1, k+1, 2k+1, ...
    for j in range(1, k + 1):
        members = [i for i in range(1, n + 1) if (i - j) % k == 0]
        assert len(members) == s.set_sizes[j - 1]
        for i in members:
            lo, hi = (i - 1) * q + L, i * q
            count = sum(1 for g in range(1, n * q + 1, k)
                        if g >= lo and g + k - 1 <= hi)
            assert count == s.block_counts[j - 1]
    assert s.n0 == n * q - s.covered_symbols
    assert s.n0 <= (L - 1 + 2 * k) * n


@given(st.integers(1, 64), st.integers(1, 8), st.integers(1, 32),
       st.data())
@settings(max_examples=60, deadline=None)
def test_alignment_identities(q, k, n, data):
    L = data.draw(st.integers(1, q))
    s = ref.alignment(q, k, L, n)
    assert sum(s.lambdas) == Fraction(1)
    assert s.n0 >= 0
    assert s.n0 <= (L - 1 + 2 * k) * n
    assert s.lambdas[0] <= Fraction(L - 1 + 2 * k, q)


def test_alignment_geometry_error():
    with pytest.raises(ref.InvalidGeometry):
        ref.alignment(3, 2, 4, 5)


# -- collapsed channels ------------------------------------------------------


def test_collapsed_singleton_equals_block_conditional():
    w = np.asarray([[0.8, 0.2], [0.3, 0.7]])
    ch = chan.DmcChannel(w)
    code = ref.random_block_code(1, 2, [0.5, 0.5], RandomSource(0),
                                 kernel=w, exhaustive=True)
    got = ref.collapsed_channel(ch, code, [1], q=2, L=1)
    expect = np.kron(w, w)
    assert np.allclose(got.dmc.matrix, expect, atol=1e-12)


def test_collapsed_realized_equals_forced_memoryless():
    w = np.asarray([[0.85, 0.15], [0.4, 0.6]])
    ch = chan.DmcChannel(w)
    code = ref.random_block_code(1, 2, [0.5, 0.5], RandomSource(1), kernel=w,
                                 exhaustive=True)
    realized = ref.collapsed_channel(ch, code, [1, 3], q=1, L=1)
    forced = ref.collapsed_channel(ch, code, [1, 3], q=1, L=1,
                                   mode="forced", states=[0, 0])
    assert np.allclose(realized.dmc.matrix, forced.dmc.matrix, atol=1e-12)


def test_collapsed_modulo_average_is_bsc_half():
    ch = chan.ModuloAdditiveChannel(2, chan.ExplicitNoise([0, 1]))
    code = ref.random_block_code(1, 2, [0.5, 0.5], RandomSource(0),
                                 output_size=2, exhaustive=True)
    got = ref.collapsed_channel(ch, code, [1, 2], q=1, L=1)
    assert np.allclose(got.dmc.matrix, 0.5, atol=1e-12)


def test_collapsed_realized_vs_forced_within_fading_bound():
    gen = RandomSource(41).generator()
    beta = 0.3
    t = gen.random((2, 2, 2)) + 1e-3
    t = t / t.sum(axis=-1, keepdims=True)
    t = beta * 2 / 2 + (1 - beta * 2) * t
    w = gen.random((2, 2, 2)) + 1e-3
    w = w / w.sum(axis=-1, keepdims=True)
    fsm = chan.FsmChannel(t, w, beta=beta)
    code = ref.random_block_code(1, 2, [0.5, 0.5], RandomSource(2),
                                 output_size=2, exhaustive=True)
    q, L = 3, 2
    realized = ref.collapsed_channel(fsm, code, [2, 3], q, L)
    for states in [(0, 0), (1, 0), (1, 1)]:
        forced = ref.collapsed_channel(fsm, code, [2, 3], q, L,
                                       mode="forced", states=states)
        diff = np.abs(realized.dmc.matrix - forced.dmc.matrix).sum(axis=1).max()
        assert diff <= 2 * chan.prop3_bound(2, beta, L - 1) + 1e-9


# -- bounds ------------------------------------------------------------------


def test_fano_lower_bound_examples():
    assert ref.fano_lower_bound(6.0, 2, 3, 1.0, 0.0) == pytest.approx(6.0)
    assert ref.fano_lower_bound(4.0, 4, 2, 0.5, 0.5) == pytest.approx(-2.0)
    # errorless 2-codeword length-1 code on the identity channel is tight
    assert ref.fano_lower_bound(1.0, 1, 1, 1.0, 0.0) == pytest.approx(1.0)
    with pytest.raises(ref.InvalidArgs):
        ref.fano_lower_bound(5.0, 2, 3, 1.0, 0.0)  # K != n*k*R


def test_delta1_examples():
    assert ref.delta1(3, 0.7, 0.0) == 0.0
    assert ref.delta1(1, 1.0, 0.5) == pytest.approx(1.5)
    grid = np.linspace(0, 1, 21)
    vals = [ref.delta1(2, 0.8, t) for t in grid]
    assert all(v2 >= v1 - 1e-12 for v1, v2 in zip(vals, vals[1:]))


def test_delta2_bound_example():
    assert ref.delta2_bound(2, 1.0, 1, 1024) == pytest.approx(5 / 1024)
    with pytest.raises(ref.InvalidArgs):
        ref.delta2_bound(0, 1.0, 1, 8)


def test_l1_deterioration_battery():
    from uclab.harness import check_l1_deterioration

    result = check_l1_deterioration(instances=50, seed=2)
    assert result.passed, result.detail


def test_fano_battery_small():
    from uclab.harness import check_fano

    result = check_fano(dmcs=25, seed=3)
    assert result.passed, result.detail
