import numpy as np
import pytest

from uclab import channels as chan
from uclab.core import Overflow, RandomSource, Transcript, l1_distance


def _bsc(p):
    return chan.DmcChannel([[1 - p, p], [p, 1 - p]])


def test_sample_step_examples():
    gen = RandomSource(1).generator()
    ident = chan.DmcChannel(np.eye(2))
    assert ident.sample_step(1, gen) == 1
    mod = chan.ModuloAdditiveChannel(2, chan.ExplicitNoise([1, 0]))
    assert mod.sample_step(0, gen) == 1
    assert mod.sample_step(0, gen) == 0
    pw = chan.PasswordChannel(1)
    assert pw.sample_step(1, gen) == 1  # good mode from the first symbol
    assert pw.sample_step(0, gen) == 0
    assert pw.sample_step(1, gen) == 1
    with pytest.raises(chan.SymbolOutOfRange):
        ident.sample_step(5, gen)


def test_password_bad_mode():
    gen = RandomSource(2).generator()
    pw = chan.PasswordChannel(1)
    assert pw.sample_step(0, gen) == 0  # bad mode locked in
    assert [pw.sample_step(x, gen) for x in (1, 1, 0)] == [0, 0, 0]


def test_block_conditional_memoryless_product():
    w = np.asarray([[0.8, 0.2], [0.3, 0.7]])
    ch = chan.DmcChannel(w)
    d = chan.block_conditional(ch, Transcript.empty(), (0, 1))
    expect = np.kron(w[0], w[1])
    assert np.allclose(d.probs, expect, atol=1e-12)


def test_block_conditional_modulo_point_mass():
    ch = chan.ModuloAdditiveChannel(2, chan.ExplicitNoise([0, 1]))
    d = chan.block_conditional(ch, Transcript.empty(), (0, 0))
    assert d.probs[1] == pytest.approx(1.0)  # outputs (0, 1) -> index 1


def test_block_conditional_state_irrelevance():
    # identical kernels per state: history cannot matter
    t = np.full((2, 2, 2), 0.5)
    w = np.zeros((2, 2, 2))
    w[:, 0] = [0.9, 0.1]
    w[:, 1] = [0.2, 0.8]
    fsm = chan.FsmChannel(t, w, beta=0.25)
    d1 = chan.block_conditional(fsm, Transcript.empty(), (0, 1))
    d2 = chan.block_conditional(fsm, Transcript((1, 0), (0, 1)), (0, 1))
    assert np.allclose(d1.probs, d2.probs, atol=1e-12)


def test_block_conditional_needs_enumerable():
    ch = _bsc(0.1)
    ch.exactly_enumerable = False
    with pytest.raises(chan.NotEnumerable):
        chan.block_conditional(ch, Transcript.empty(), (0,))


def test_super_symbol_view_q1_identical():
    base = _bsc(0.11)
    view = chan.super_symbol_view(_bsc(0.11), 1)
    tbl_base = base.step_table(1)
    tbl_view = view.step_table(1)
    assert np.allclose(tbl_base, tbl_view)
    gen1 = RandomSource(5).generator()
    gen2 = RandomSource(5).generator()
    ys1 = [base.sample_step(x, gen1) for x in (0, 1, 1, 0)]
    base2 = _bsc(0.11)
    ys2 = [chan.super_symbol_view(base2, 1).sample_step(x, gen2)
           for x in (0, 1, 1, 0)]
    assert ys1 == ys2


def test_super_symbol_view_product_law():
    w = np.asarray([[0.8, 0.2], [0.3, 0.7]])
    view = chan.super_symbol_view(chan.DmcChannel(w), 2)
    tbl = view.step_table(1)[0, :, :, 0]
    assert np.allclose(tbl, np.kron(w, w), atol=1e-12)


def test_super_symbol_view_shift_channel():
    # period-2 noise (0,1) at q=2 is a deterministic shift on super-symbols
    ch = chan.ModuloAdditiveChannel(2, chan.PeriodicNoise([0, 1]))
    view = chan.super_symbol_view(ch, 2)
    tbl = view.step_table(1)[0, :, :, 0]
    for xi in range(4):
        xs = view.in_codec.tuple_of(xi)
        expect = view.out_codec.index_of(((xs[0] + 0) % 2, (xs[1] + 1) % 2))
        assert tbl[xi, expect] == pytest.approx(1.0)


def test_causality_future_inputs_irrelevant():
    gen = RandomSource(11).generator()
    t = gen.random((2, 2, 2)) + 0.1
    t = t / t.sum(axis=-1, keepdims=True)
    w = gen.random((2, 2, 2)) + 0.1
    w = w / w.sum(axis=-1, keepdims=True)
    fsm = chan.FsmChannel(t, w, beta=0.0)
    for xs in [(0,), (1,), (0, 1), (1, 1)]:
        short = chan.block_conditional(fsm, Transcript.empty(), xs).probs
        for extra in (0, 1):
            longer = chan.block_conditional(
                fsm, Transcript.empty(), xs + (extra,)).probs
            marg = longer.reshape(-1, 2).sum(axis=1)
            assert np.allclose(marg, short, atol=1e-12)


def test_fading_memory_gap_memoryless_zero():
    assert chan.fading_memory_gap(_bsc(0.2), 3, 4, 1, Transcript((0,), (0,))) \
        == pytest.approx(0.0, abs=1e-12)


def test_fading_memory_gap_password_two():
    pw = chan.PasswordChannel(1)
    g = chan.fading_memory_gap(pw, 3, 4, 1, Transcript((1,), (1,)))
    assert g == pytest.approx(2.0)


def test_fading_memory_gap_fsm_within_prop3():
    gen = RandomSource(21).generator()
    beta = 0.25
    t = gen.random((2, 2, 2)) + 1e-3
    t = t / t.sum(axis=-1, keepdims=True)
    t = beta * 2 / 2 + (1 - beta * 2) * t
    w = gen.random((2, 2, 2)) + 1e-3
    w = w / w.sum(axis=-1, keepdims=True)
    fsm = chan.FsmChannel(t, w, beta=beta)
    g = chan.fading_memory_gap(fsm, 3, 4, 1, Transcript((0,), (0,)))
    assert g <= chan.prop3_bound(2, beta, 1) + 1e-12  # = 0.5


def test_fading_memory_gap_monotone_in_horizon():
    gen = RandomSource(23).generator()
    t = gen.random((2, 2, 2)) + 0.1
    t = t / t.sum(axis=-1, keepdims=True)
    w = gen.random((2, 2, 2)) + 0.05
    w = w / w.sum(axis=-1, keepdims=True)
    fsm = chan.FsmChannel(t, w, beta=0.02)
    ref = Transcript((0,), (0,))
    gaps = [chan.fading_memory_gap(fsm, 2, m, 0, ref) for m in (2, 3, 4)]
    assert all(gaps[i] <= gaps[i + 1] + 1e-12 for i in range(len(gaps) - 1))


def test_prop3_bound_examples():
    assert chan.prop3_bound(2, 0.25, 3) == pytest.approx(0.125)
    assert chan.prop3_bound(2, 0.5, 7) == 0.0
    assert chan.prop3_bound(2, 0.0, 5) == 2.0
    with pytest.raises(chan.InvalidBeta):
        chan.prop3_bound(2, 0.6, 1)


def test_sampling_matches_block_conditional():
    trials = 10 ** 5
    gen = RandomSource(31).generator()
    t = np.asarray([[[0.6, 0.4], [0.3, 0.7]], [[0.5, 0.5], [0.8, 0.2]]])
    w = np.asarray([[[0.9, 0.1], [0.15, 0.85]], [[0.4, 0.6], [0.7, 0.3]]])
    fsm = chan.FsmChannel(t, w, beta=0.0)
    xs = (0, 1)
    exact = chan.block_conditional(fsm, Transcript.empty(), xs).probs
    counts = np.zeros(4)
    for _ in range(trials):
        fresh = fsm.clone()
        ys = fresh.sample_block(xs, gen)
        counts[ys[0] * 2 + ys[1]] += 1
    freq = counts / trials
    sigma = np.sqrt(exact * (1 - exact) / trials)
    assert np.all(np.abs(freq - exact) <= 4 * sigma + 1e-9)


def test_modulo_seeded_noise_is_individual_sequence():
    a = chan.ModuloAdditiveChannel(2, chan.SeededNoise(99, 2))
    b = chan.ModuloAdditiveChannel(2, chan.SeededNoise(99, 2))
    gen = RandomSource(0).generator()
    ys_a = a.sample_block([0] * 64, gen)
    ys_b = b.sample_block([0] * 64, gen)
    assert ys_a == ys_b  # the noise is a fixed individual sequence


def test_explicit_noise_horizon():
    ch = chan.ModuloAdditiveChannel(2, chan.ExplicitNoise([0, 1, 1]))
    gen = RandomSource(0).generator()
    ch.sample_block([0, 0, 0], gen)
    with pytest.raises(chan.NotEnumerable):
        ch.sample_step(0, gen)


def test_output_block_dist_cap():
    big = chan.DmcChannel(np.full((2, 16), 1 / 16))
    with pytest.raises(Overflow):
        chan.output_block_dist(big, 1, np.ones(1), [0] * 5)


def test_config_roundtrip_kinds():
    cfgs = [
        {"kind": "dmc", "matrix": [[0.9, 0.1], [0.2, 0.8]]},
        {"kind": "modulo_additive", "size": 3,
         "noise": {"type": "periodic", "pattern": [0, 2]}},
        {"kind": "modulo_additive", "size": 2,
         "noise": {"type": "seeded", "seed": 5}},
        {"kind": "password", "polarity": 0},
        {"kind": "fsm",
         "transitions": [[[0.5, 0.5], [0.5, 0.5]], [[0.5, 0.5], [0.5, 0.5]]],
         "outputs": [[[0.9, 0.1], [0.1, 0.9]], [[0.5, 0.5], [0.5, 0.5]]],
         "beta": 0.25},
    ]
    for cfg in cfgs:
        ch = chan.channel_from_config(cfg)
        gen = RandomSource(1).generator()
        ch.sample_step(0, gen)
    with pytest.raises(ValueError):
        chan.channel_from_config({"kind": "wormhole"})
    with pytest.raises(ValueError):
        chan.channel_from_config({"matrix": [[1.0]]})


def test_fsm_floor_validation():
    t = np.asarray([[[0.9, 0.1], [0.9, 0.1]], [[0.9, 0.1], [0.9, 0.1]]])
    w = np.full((2, 2, 2), 0.5)
    with pytest.raises(chan.InvalidBeta):
        chan.FsmChannel(t, w, beta=0.3)  # entries fall below the floor
    chan.FsmChannel(t, w, beta=0.1)
