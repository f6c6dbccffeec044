import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relu_forge.net import NetworkError, evaluate
from relu_forge.sparse import (LARGE, SMALL, BlockEncoding, CodecError, SparseIntVector,
                               clog2, decode, depth_bound, encode, encode_large, encode_small,
                               large_part_net, min_depth_threshold, optimal_threshold,
                               parse_bits, part_depth_bound, realized_depth, small_part_net,
                               sparse_vector_net, split_threshold, step_net)


def random_vector(rng, N, M):
    x = np.zeros(N, dtype=np.int64)
    np.add.at(x, rng.integers(N, size=M), rng.choice([-1, 1], size=M))
    return x.tolist()


def values(net, N):
    return list(evaluate(net, [[n] for n in range(1, N + 1)])[:, 0])


@st.composite
def sparse_vectors(draw, max_n=64, max_m=256):
    N = draw(st.integers(1, max_n))
    M = draw(st.integers(1, max_m))
    x = [0] * N
    for _ in range(draw(st.integers(0, M))):
        x[draw(st.integers(0, N - 1))] += draw(st.sampled_from([-1, 1]))
    return SparseIntVector(tuple(x), M)


# --------------------------------------------------------------------------
# vectors and encodings
# --------------------------------------------------------------------------

def test_vector_validation():
    with pytest.raises(CodecError):
        SparseIntVector((3, -2), 4)
    with pytest.raises(CodecError):
        SparseIntVector((), 1)
    assert SparseIntVector.of([2, 0, -1]).M == 3


def test_clog2():
    assert [clog2(n) for n in (1, 2, 3, 4, 5, 8, 9)] == [0, 1, 2, 2, 3, 3, 4]
    assert clog2(3, 2) == 1 and clog2(1, 4) == 0


def test_encode_small_zero():
    assert encode_small([0, 0, 0], 2).blocks == ()


def test_encode_small_hand_trace():
    enc = encode_small([0, 1, -1], 2)
    assert enc.blocks == ((2, 1), (1, -1))
    assert enc.bits() == "10" "10" "01" "01"


def test_encode_large_zero():
    assert encode_large([0], 5).blocks == ()


def test_encode_large_hand_trace():
    enc = encode_large([5], 5)
    assert enc.blocks == ((1, 5),)
    assert list(decode(enc)) == [5]


def test_decode_empty():
    assert list(decode(encode_small([0, 0, 0, 0], 1))) == [0, 0, 0, 0]


def test_decode_rejects_out_of_range():
    enc = BlockEncoding(SMALL, 2, 2, ((3, 1),), 1, 2)
    with pytest.raises(CodecError):
        decode(enc)


def test_exhaustive_s42():
    vecs = [x for x in itertools.product(range(-2, 3), repeat=4) if sum(map(abs, x)) <= 2]
    assert len(vecs) <= 60
    for x in vecs:
        assert tuple(decode(encode_small(x, 2))) == x
        assert tuple(decode(encode_large(x, 2))) == x


@settings(max_examples=300, deadline=None)
@given(sparse_vectors())
def test_roundtrip_and_block_bounds(x):
    for enc in (encode_small(x), encode_large(x)):
        assert tuple(decode(enc)) == x.x
    assert encode_small(x).R <= 2 * x.M
    assert encode_large(x).R <= 2 * x.N


def test_random_roundtrip_large_n():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        N = int(rng.integers(1, 513))
        M = int(rng.integers(1, 64 * N + 1)) if rng.integers(0, 2) else int(rng.integers(1, N + 1))
        x = random_vector(rng, N, int(rng.integers(0, min(M, 600) + 1)))
        assert list(decode(encode(x, M))) == x


@settings(max_examples=200, deadline=None)
@given(sparse_vectors(max_n=40, max_m=100))
def test_hex_and_bits_roundtrip(x):
    enc = encode(x)
    assert BlockEncoding.from_hex(enc.to_hex()) == enc
    assert parse_bits(enc.bits(), enc.regime, enc.N, enc.M) == enc


def test_large_regime_field_widths():
    enc = encode([9, 0, -3], 12)
    assert enc.regime == LARGE
    assert (enc.f_bits, enc.t_bits) == (1, 2 + clog2(12, 3))


@pytest.mark.parametrize("text", ["zz", "00", "05" + "00" * 24])
def test_bad_hex(text):
    with pytest.raises(CodecError):
        BlockEncoding.from_hex(text)


# --------------------------------------------------------------------------
# split
# --------------------------------------------------------------------------

def test_split_edges():
    x = SparseIntVector.of([3, -1, 0, -4])
    assert not split_threshold(x, 5).big.any()
    assert not split_threshold(x, 1).small.any()


@settings(max_examples=200, deadline=None)
@given(sparse_vectors(), st.integers(1, 20))
def test_split_recombines(x, S):
    sp = split_threshold(x, S)
    assert tuple(sp.big + sp.small) == x.x
    assert np.all(np.abs(sp.small) < S)
    assert len(sp.support) <= x.M / S


# --------------------------------------------------------------------------
# step networks
# --------------------------------------------------------------------------

def test_step_net_classes():
    assert step_net(SMALL, 3, 2).depth == 4 * 3 + 16
    assert step_net(LARGE, 3, 2).depth == 4 * 3 + 8
    assert step_net(SMALL, 3, 2).width == 15


def test_step_zero_block_is_noop():
    for variant in (SMALL, LARGE):
        net = step_net(variant, 2, 2)
        assert list(evaluate(net, [Fraction(4), Fraction(0), Fraction(7)])) == [4, 0, 7]


def test_step_small_hit():
    # f_1 = 2 ("10"), t_1 = +1 ("10")
    net = step_net(SMALL, 2, 1)
    assert list(evaluate(net, [Fraction(2), Fraction(0b1010, 16), Fraction(0)])) == [0, 0, 1]


def test_step_large_miss():
    # f_1 = 1, t_1 = -3 (sign "1", magnitude "11"); x - f_1 = -1 suppresses the add
    net = step_net(LARGE, 3, 1)
    assert list(evaluate(net, [Fraction(0), Fraction(0b1111, 16), Fraction(0)])) == [-1, 0, 0]


def test_step_large_hit_keeps_rest():
    # two blocks: (1, +2) then (0, -1); the second stays packed
    net = step_net(LARGE, 3, 2)
    bits = "1" + "010" + "0" + "101"
    x, r, s = evaluate(net, [Fraction(1), Fraction(int(bits, 2), 2 ** 8), Fraction(0)])
    assert (x, s) == (0, 2) and r == Fraction(int("0101", 2), 16)


# --------------------------------------------------------------------------
# part networks and the full construction
# --------------------------------------------------------------------------

def test_part_net_zero():
    assert values(small_part_net([0] * 8, 2, 4), 8) == [0] * 8


def test_small_part_depth_bound():
    rng = np.random.default_rng(1)
    N, M, S = 256, 16, 4
    for _ in range(5):
        x = [max(-3, min(3, v)) for v in random_vector(rng, N, M)]
        net = small_part_net(x, S, M)
        assert net.depth <= 8 * M / S + 8 * S * (5 + 4) + 4
        assert values(net, N) == x


def test_large_part_exact():
    rng = np.random.default_rng(2)
    N, M, S = 16, 128, 6
    for _ in range(5):
        x = [max(-5, min(5, v)) for v in random_vector(rng, N, M)]
        net = large_part_net(x, S, M)
        assert net.depth <= part_depth_bound(N, M, S)
        assert values(net, N) == x


def test_part_net_preconditions():
    with pytest.raises(NetworkError):
        small_part_net([3, 0], 2, 4)
    with pytest.raises(NetworkError):
        large_part_net([0, 1], 2, 1)


def test_sparse_zero_and_unit():
    assert values(sparse_vector_net([0] * 10, 3), 10) == [0] * 10
    e5 = [0] * 16
    e5[4] = 1
    net = sparse_vector_net(e5, 1)
    assert values(net, 16) == e5 and net.width == 17


def test_sparse_exact_n128():
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = random_vector(rng, 128, 16)
        assert values(sparse_vector_net(x, 16), 128) == x


def test_optimal_threshold_formula():
    assert optimal_threshold(256, 16) == 2                 # ceil(sqrt(16/9))
    assert optimal_threshold(4, 64) == 12                  # ceil(64/sqrt(4*8)) = ceil(11.31)
    assert optimal_threshold(256, 16, linf=0) == 1


@settings(max_examples=40, deadline=None)
@given(sparse_vectors(max_n=48, max_m=96))
def test_realized_depth_matches_build(x):
    for S in (None, "min_depth"):
        net = sparse_vector_net(x, S=S)
        s = optimal_threshold(x.N, x.M, x.linf) if S is None else min_depth_threshold(x)
        assert net.depth == realized_depth(x, s)
        assert net.depth <= depth_bound(x.N, x.M, optimal_threshold(x.N, x.M, x.linf))
        assert values(net, x.N) == list(x.x)


@pytest.mark.parametrize("x,M", [((-1,), 3), ((1,), 3), ((0, 1, 0), 2), ((1, -1), 9)])
def test_single_decoder_segment(x, M):
    # all small blocks fit in one segment, so the lookups are constant
    assert values(sparse_vector_net(x, M), len(x)) == list(x)
