"""Sparse integer vectors: block codecs and their network decoders.

Two encoders split a vector ``x`` in Z^N with ``||x||_1 <= M`` into blocks
``(f_i, t_i)`` of index offsets and value increments.  The small regime
(``N >= M``) uses multi-bit offsets and values in {-1, 0, 1}; the large
regime (``N < M``) uses one-bit offsets and signed multi-bit values.  A
single decoder replays ``j += f_i; x_j += t_i``.

The network builders turn an encoding into a ReLU network ``g`` with
``g(n) = x_n`` for ``n = 1..N`` by storing blocks of bits in the binary
expansion of piecewise constant lookups and replaying the decoder with bit
extraction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .net import (
    Affine, NetworkError, ReluNet, affine_net, chain, lift, selection,
)
from .primitives import Breakpoints, bit_extract_net, pwl_to_net, simplify, tent_net

__all__ = [
    "SMALL", "LARGE", "CodecError", "SparseIntVector", "BlockEncoding",
    "BigSmallSplit", "clog2", "encode_small", "encode_large", "encode", "decode",
    "parse_bits", "split_threshold", "step_net", "small_part_net",
    "large_part_net", "sparse_vector_net", "optimal_threshold", "depth_bound",
    "part_depth_bound", "regime_of", "realized_depth", "min_depth_threshold",
]

SMALL = "small"
LARGE = "large"
_REGIME_BYTE = {SMALL: 0, LARGE: 1}


class CodecError(ValueError):
    """Invalid sparse vector or malformed encoding."""


def clog2(num, den=1):
    """Exact ``ceil(log2(num / den))`` for positive integers, floored at 0."""
    num, den = int(num), int(den)
    if num <= 0 or den <= 0:
        raise CodecError("clog2 needs positive arguments")
    c = 0
    while den << c < num:
        c += 1
    return c


@dataclass(frozen=True)
class SparseIntVector:
    """Integer vector with a declared l1 bound ``M``."""

    x: tuple
    M: int

    def __post_init__(self):
        x = tuple(int(v) for v in self.x)
        if len(x) < 1:
            raise CodecError("vector must have length N >= 1")
        if int(self.M) < 1:
            raise CodecError("bound M must be at least 1")
        if sum(abs(v) for v in x) > int(self.M):
            raise CodecError(f"l1 norm {sum(abs(v) for v in x)} exceeds bound {self.M}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "M", int(self.M))

    @classmethod
    def of(cls, x, M=None):
        x = [int(v) for v in x]
        return cls(tuple(x), M if M is not None else max(1, sum(abs(v) for v in x)))

    @property
    def N(self):
        return len(self.x)

    @property
    def l1(self):
        return sum(abs(v) for v in self.x)

    @property
    def linf(self):
        return max(abs(v) for v in self.x)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.x, dtype=dtype or np.int64)


def regime_of(N, M):
    return SMALL if N >= M else LARGE


@dataclass(frozen=True)
class BlockEncoding:
    """Blocks ``(f_i, t_i)`` with their bit widths.

    ``f_bits`` and ``t_bits`` are the per-block field widths.  In the large
    regime ``t`` is a sign bit followed by ``t_bits - 1`` magnitude bits.
    """

    regime: str
    N: int
    M: int
    blocks: tuple
    f_bits: int
    t_bits: int

    @property
    def R(self):
        return len(self.blocks)

    def block_bits(self, f, t):
        """Bit strings of the two fields of one block."""
        fs = format(f, f"0{self.f_bits}b")
        if self.regime == SMALL:
            ts = {1: "10", -1: "01", 0: "00"}[t]
        else:
            ts = ("1" if t < 0 else "0") + format(abs(t), f"0{self.t_bits - 1}b")
        if len(fs) != self.f_bits or len(ts) != self.t_bits:
            raise CodecError(f"block ({f}, {t}) does not fit its field widths")
        return fs, ts

    def bits(self):
        """The encoding ``E(x)``: ``f_1 t_1 ...`` (small) or ``t_1 f_1 ...`` (large)."""
        out = []
        for f, t in self.blocks:
            fs, ts = self.block_bits(f, t)
            out.append(fs + ts if self.regime == SMALL else ts + fs)
        return "".join(out)

    def packed_bits(self, start=0, stop=None):
        """Blocks ``start..stop-1`` as ``f`` then ``t`` fields, in both regimes."""
        return "".join("".join(self.block_bits(f, t)) for f, t in self.blocks[start:stop])

    def to_hex(self):
        """Regime byte, N, M and bit length (8 bytes each), then packed bits."""
        bits = self.bits()
        payload = int(bits, 2).to_bytes((len(bits) + 7) // 8, "big") if bits else b""
        if bits and len(bits) % 8:
            payload = (int(bits, 2) << (8 - len(bits) % 8)).to_bytes(
                (len(bits) + 7) // 8, "big")
        head = bytes([_REGIME_BYTE[self.regime]]) + self.N.to_bytes(8, "big") + \
            self.M.to_bytes(8, "big") + len(bits).to_bytes(8, "big")
        return (head + payload).hex()

    @classmethod
    def from_hex(cls, text):
        try:
            raw = bytes.fromhex(text.strip())
        except ValueError as exc:
            raise CodecError("invalid hex string") from exc
        if len(raw) < 25:
            raise CodecError("encoding header is truncated")
        regimes = {v: k for k, v in _REGIME_BYTE.items()}
        if raw[0] not in regimes:
            raise CodecError(f"unknown regime byte {raw[0]}")
        N = int.from_bytes(raw[1:9], "big")
        M = int.from_bytes(raw[9:17], "big")
        nbits = int.from_bytes(raw[17:25], "big")
        payload = raw[25:]
        if len(payload) != (nbits + 7) // 8:
            raise CodecError("payload length does not match bit count")
        bits = "".join(format(b, "08b") for b in payload)[:nbits]
        return parse_bits(bits, regimes[raw[0]], N, M)


def _field_widths(regime, N, M):
    if regime == SMALL:
        return 1 + (clog2(N, M) if N >= M else 0), 2
    return 1, 2 + (clog2(M, N) if M >= N else 0)


def _check(x, M):
    if not isinstance(x, SparseIntVector):
        x = SparseIntVector.of(x, M)
    elif M is not None and M != x.M:
        x = SparseIntVector(x.x, M)
    return x


def encode_small(x, M=None):
    """Small l1-norm encoder (offsets up to ``ceil(N/M)``, values in {-1,0,1}).

    Produces at most ``2M`` blocks.
    """
    x = _check(x, M)
    N, M = x.N, x.M
    step = -(-N // M)
    r = list(x.x)
    nz = [i + 1 for i, v in enumerate(r) if v]
    blocks = []
    j = 0
    ptr = 0
    while ptr < len(nz):
        l = nz[ptr]
        if l - j <= step:
            f, j = l - j, l
        else:
            f, j = step, j + step
        if j == l:
            t = 1 if r[j - 1] > 0 else -1
            r[j - 1] -= t
            if r[j - 1] == 0:
                ptr += 1
        else:
            t = 0
        blocks.append((f, t))
    fb, tb = _field_widths(SMALL, N, M)
    enc = BlockEncoding(SMALL, N, M, tuple(blocks), fb, tb)
    assert enc.R <= 2 * M
    return enc


def encode_large(x, M=None):
    """Large l1-norm encoder (one-bit offsets, values up to ``ceil(M/N)``).

    Produces at most ``2N`` blocks.
    """
    x = _check(x, M)
    N, M = x.N, x.M
    cap = -(-M // N)
    r = list(x.x)
    remaining = sum(1 for v in r if v)
    blocks = []
    j = 0
    while remaining:
        if j == 0 or r[j - 1] == 0:
            f = 1
            j += 1
        else:
            f = 0
        v = r[j - 1]
        if abs(v) <= cap:
            t = v
            r[j - 1] = 0
            if v:
                remaining -= 1
        else:
            t = cap if v > 0 else -cap
            r[j - 1] -= t
        blocks.append((f, t))
    fb, tb = _field_widths(LARGE, N, M)
    enc = BlockEncoding(LARGE, N, M, tuple(blocks), fb, tb)
    assert enc.R <= 2 * N
    return enc


def encode(x, M=None):
    """Encode with the regime chosen by ``N >= M``."""
    x = _check(x, M)
    return encode_small(x) if x.N >= x.M else encode_large(x)


def decode(enc, N=None):
    """Replay ``j += f_i; x_j += t_i`` and return the integer vector."""
    N = enc.N if N is None else int(N)
    x = [0] * N
    j = 0
    for f, t in enc.blocks:
        j += f
        if not 1 <= j <= N:
            raise CodecError(f"decoded index {j} outside 1..{N}")
        x[j - 1] += t
    return np.array(x, dtype=np.int64)


def parse_bits(bits, regime, N, M):
    """Inverse of :meth:`BlockEncoding.bits`."""
    fb, tb = _field_widths(regime, N, M)
    w = fb + tb
    if len(bits) % w:
        raise CodecError("bit string length is not a whole number of blocks")
    if set(bits) - {"0", "1"}:
        raise CodecError("bit string contains characters other than 0 and 1")
    tvals = {"10": 1, "01": -1, "00": 0}
    blocks = []
    for s in range(0, len(bits), w):
        chunk = bits[s:s + w]
        if regime == SMALL:
            fs, ts = chunk[:fb], chunk[fb:]
            if ts not in tvals:
                raise CodecError(f"invalid value field {ts!r}")
            t = tvals[ts]
        else:
            ts, fs = chunk[:tb], chunk[tb:]
            t = int(ts[1:], 2) * (-1 if ts[0] == "1" else 1)
        blocks.append((int(fs, 2), t))
    return BlockEncoding(regime, int(N), int(M), tuple(blocks), fb, tb)


# --------------------------------------------------------------------------
# big/small split
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BigSmallSplit:
    """``x = big + small`` with ``|big_i| >= S`` on its support and ``|small| < S``."""

    S: int
    big: np.ndarray
    small: np.ndarray

    @property
    def support(self):
        return np.flatnonzero(self.big) + 1


def split_threshold(x, S):
    """Split ``x`` at magnitude threshold ``S`` keeping signs in both parts."""
    if S < 1:
        raise CodecError("threshold must be at least 1")
    v = np.asarray(x.x if isinstance(x, SparseIntVector) else x, dtype=np.int64)
    big = np.where(np.abs(v) >= S, v, 0)
    return BigSmallSplit(int(S), big, v - big)


# --------------------------------------------------------------------------
# networks
# --------------------------------------------------------------------------

def _step_precision(variant, alpha, beta):
    return beta * (alpha + 2) if variant == SMALL else beta * (alpha + 1)


def step_net(variant, alpha, beta):
    """One decoder step on ``(x, 0.f_1 t_1 f_2 t_2 ..., sigma)``.

    Maps to ``(x - f_1, 0.f_2 t_2 ..., sigma + t_1 delta(x - f_1))`` for
    integer ``x`` and at most ``beta`` packed blocks.  ``alpha`` is the bit
    length of ``f`` (small regime, width 15 and depth ``4 alpha + 16``) or of
    ``t`` (large regime, width 15 and depth ``4 alpha + 8``).
    """
    if alpha < 1 or beta < 1:
        raise NetworkError("alpha and beta must be positive")
    n = _step_precision(variant, alpha, beta)
    h = tent_net()
    relu1 = ReluNet([Affine.identity(1), Affine.identity(1)])
    if variant == SMALL:
        # (x, r, s) -> (x, r', f, s) -> (x - f, r', s)
        head = chain(lift(bit_extract_net(n, alpha), 3, 1),
                     affine_net([[1, 0, -1, 0], [0, 1, 0, 0], [0, 0, 0, 1]]))
        parts = [head]
        for sign in (1, -1):
            # (z, r, s) -> (z, z, r, s) -> (z, h(z), r, s) -> (z, h, r', b, s)
            dup = affine_net([[1, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
            ext = chain(dup, lift(h, 4, 1), lift(bit_extract_net(n, 1), 4, 2))
            # (z, h + b - 1, r', s) -> relu on slot 1 -> (z, r', s + sign * relu)
            gate = affine_net([[1, 0, 0, 0, 0], [0, 1, 0, 1, 0],
                               [0, 0, 1, 0, 0], [0, 0, 0, 0, 1]], [0, -1, 0, 0])
            fold = affine_net([[1, 0, 0, 0], [0, 0, 1, 0], [0, sign, 0, 1]])
            parts.append(chain(ext, gate, lift(relu1, 4, 1), fold))
        net = chain(*parts)
        assert net.depth == 4 * alpha + 16
    elif variant == LARGE:
        head = chain(lift(bit_extract_net(n, 1), 3, 1),
                     affine_net([[1, 0, -1, 0], [0, 1, 0, 0], [0, 0, 0, 1]]))
        # (z, r, s) -> (z, r, b, s) -> (z, r', m, b, s)
        bits = chain(lift(bit_extract_net(n, 1), 3, 1),
                     lift(bit_extract_net(n, alpha - 1), 4, 1)) if alpha > 1 else \
            lift(bit_extract_net(n, 1), 3, 1)
        if alpha == 1:
            # no magnitude bits: insert a zero magnitude slot
            bits = chain(bits, affine_net([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 0],
                                           [0, 0, 1, 0], [0, 0, 0, 1]]))
        # (z, r', m, b, s) -> (z, z, r', m, b, s) -> (z, h(z), r', m, b, s)
        dup = affine_net([[1, 0, 0, 0, 0]] + np.eye(5, dtype=int).tolist())
        share = chain(dup, lift(h, 6, 1))
        # u+ = m - 2^a (1 - h + b), u- = m - 2^a (2 - h - b); carry z, r', s
        p = 2 ** alpha
        gate = affine_net([[0, p, 0, 1, -p, 0],
                           [0, p, 0, 1, p, 0],
                           [1, 0, 0, 0, 0, 0],
                           [0, 0, 1, 0, 0, 0],
                           [0, 0, 0, 0, 0, 1]], [-p, -2 * p, 0, 0, 0])
        relu2 = ReluNet([Affine.identity(2), Affine.identity(2)])
        fold = affine_net([[0, 0, 1, 0, 0], [0, 0, 0, 1, 0], [1, -1, 0, 0, 1]])
        net = chain(head, bits, share, gate, lift(relu2, 5, 0), fold)
        assert net.depth == 4 * alpha + 8
    else:
        raise NetworkError(f"unknown variant {variant!r}")
    return net.with_width(15)


def _dirac_bits(bits):
    return Fraction(int(bits, 2), 1 << len(bits)) if bits else Fraction(0)


def _block_plan(enc, span):
    """Block boundaries ``i_k`` (1-based), indices ``j_k`` and packed values."""
    R = enc.R
    F = [i + 1 for i, (f, _) in enumerate(enc.blocks) if f == 0]
    start_of = {}
    for i in F:
        start_of[i] = start_of.get(i - 1, i)
    rho = -(-R // span)
    steps = []
    for k in range(rho):
        c = 1 + k * span
        steps.append(start_of[c] - 1 if c in start_of else c)
    steps.append(R + 1)
    prefix = [0]
    for f, _ in enc.blocks:
        prefix.append(prefix[-1] + f)
    js = [prefix[i - 1] for i in steps[:-1]] + [enc.N]
    packed = [_dirac_bits(enc.packed_bits(a - 1, b - 1)) for a, b in zip(steps, steps[1:])]
    return steps, js, packed


def _lookup_pwl(js, values):
    """Left-continuous step function: ``values[k]`` on ``(j_k, j_{k+1}]``."""
    pts = {}
    for k in range(1, len(js) - 1):
        for knot, val in ((js[k], values[k - 1]), (js[k] + 1, values[k])):
            if knot in pts and pts[knot] != val:
                raise NetworkError("inconsistent lookup knots")
            pts[knot] = val
    if not pts:
        # a single segment: the constant values[0]
        pts[js[0]] = values[0]
    knots = sorted(pts)
    return simplify(Breakpoints(knots, [pts[k] for k in knots]))


def _part_net(enc, span, variant, alpha):
    if enc.R == 0:
        return affine_net([[0]])
    steps, js, packed = _block_plan(enc, span)
    beta = 2 * span
    gaps = [b - a for a, b in zip(steps, steps[1:])]
    if max(gaps) > beta:
        raise NetworkError(f"block of {max(gaps)} steps exceeds capacity {beta}")
    J = pwl_to_net(_lookup_pwl(js, js[:-1]))
    Rn = pwl_to_net(_lookup_pwl(js, packed))
    head = chain(affine_net([[1], [1], [1]]), lift(J, 3, 0), lift(Rn, 3, 1),
                 affine_net([[-1, 0, 1], [0, 1, 0], [0, 0, 0]]))
    step = step_net(variant, alpha, beta)
    return chain(head, *([step] * beta), selection([2], 3)).with_width(15)


def small_part_net(x, S, M=None):
    """Decoder network for ``||x||_inf < S`` in the small regime (``N >= M``).

    Width 15; depth at most ``8M/S + 8S(5 + ceil(log2(N/M))) + 4``.
    """
    x = _check(x, M)
    if x.N < x.M:
        raise NetworkError("small_part_net requires N >= M")
    if any(abs(v) >= S for v in x.x):
        raise NetworkError("entries must be smaller than S in magnitude")
    enc = encode_small(x)
    return _part_net(enc, int(S), SMALL, enc.f_bits)


def large_part_net(x, S, M=None):
    """Decoder network for ``||x||_inf < S`` in the large regime (``N < M``).

    Width 15; depth at most ``8M/S + 8(SN/M + 1)(4 + ceil(log2(M/N))) + 4``.
    """
    x = _check(x, M)
    if x.N >= x.M:
        raise NetworkError("large_part_net requires N < M")
    if any(abs(v) >= S for v in x.x):
        raise NetworkError("entries must be smaller than S in magnitude")
    enc = encode_large(x)
    T = -(-int(S) * x.N // x.M)
    return _part_net(enc, T, LARGE, enc.t_bits)


def part_depth_bound(N, M, S):
    """Depth bound for the small-entry decoder network."""
    if N >= M:
        return Fraction(8 * M, S) + 8 * S * (5 + clog2(N, M)) + 4
    return Fraction(8 * M, S) + 8 * (Fraction(S * N, M) + 1) * (4 + clog2(M, N)) + 4


def depth_bound(N, M, S):
    """Depth bound for the full sparse-vector network at threshold ``S``."""
    if N >= M:
        return Fraction(11 * M, S) + 8 * S * (5 + clog2(N, M)) + 4
    return Fraction(11 * M, S) + 8 * (Fraction(S * N, M) + 1) * (4 + clog2(M, N)) + 4


def optimal_threshold(N, M, linf=None):
    """Integer threshold ``S`` balancing the two depth terms.

    ``ceil(sqrt(M / (5 + c)))`` when ``N >= M`` and
    ``ceil(M / sqrt(N (4 + c)))`` otherwise, clamped to ``[1, linf + 1]``.
    """
    if N >= M:
        S = math.ceil(math.sqrt(M / (5 + clog2(N, M))))
    else:
        S = math.ceil(M / math.sqrt(N * (4 + clog2(M, N))))
    S = max(S, 1)
    if linf is not None:
        S = min(S, max(1, linf + 1))
    return S


def _big_breakpoints(split, N):
    pts = {}
    for n in split.support.tolist():
        for knot in (n - 1, n, n + 1):
            pts.setdefault(knot, Fraction(int(split.big[knot - 1])) if 1 <= knot <= N
                           else Fraction(0))
    knots = sorted(pts)
    return simplify(Breakpoints(knots, [pts[k] for k in knots]))


def _pwl_depth(bp):
    s = bp.slopes()
    return sum(1 for s0, s1 in zip(s, s[1:]) if s1 != s0)


def realized_depth(x, S, M=None):
    """Depth of ``sparse_vector_net(x, M, S)`` computed without building it."""
    x = _check(x, M)
    N, M = x.N, x.M
    split = split_threshold(x, S)
    depth = _pwl_depth(_big_breakpoints(split, N))
    small = SparseIntVector(tuple(int(v) for v in split.small), M)
    if N >= M:
        enc, span, variant, alpha = encode_small(small), int(S), SMALL, None
    else:
        enc = encode_large(small)
        span, variant = -(-int(S) * N // M), LARGE
    if enc.R == 0:
        return depth
    alpha = enc.f_bits if variant == SMALL else enc.t_bits
    _, js, packed = _block_plan(enc, span)
    step = 4 * alpha + (16 if variant == SMALL else 8)
    return (depth + _pwl_depth(_lookup_pwl(js, js[:-1]))
            + _pwl_depth(_lookup_pwl(js, packed)) + 2 * span * step)


def min_depth_threshold(x, M=None):
    """Threshold minimising the realised depth over powers of two and the balanced choice.

    The balanced threshold of :func:`optimal_threshold` is asymptotically
    optimal, but for short vectors interpolating every entry (``S = 1``) is
    often shallower.  Ties go to the smaller threshold.
    """
    x = _check(x, M)
    top = max(1, x.linf + 1)
    cands = {optimal_threshold(x.N, x.M, x.linf), top}
    S = 1
    while S < top:
        cands.add(S)
        S *= 2
    return min(sorted(cands), key=lambda c: realized_depth(x, c))


def sparse_vector_net(x, M=None, S=None):
    """Network ``g`` of width 17 with ``g(n) = x_n`` for ``n = 1..N``.

    Entries of magnitude at least ``S`` are interpolated by a piecewise
    linear function; the rest go through the block decoder.  ``S`` defaults
    to :func:`optimal_threshold`; ``S="min_depth"`` uses
    :func:`min_depth_threshold`.  The depth satisfies :func:`depth_bound`.
    """
    x = _check(x, M)
    N, M = x.N, x.M
    if S is None:
        S = optimal_threshold(N, M, x.linf)
    elif S == "min_depth":
        S = min_depth_threshold(x)
    split = split_threshold(x, S)
    big = pwl_to_net(_big_breakpoints(split, N), keep_input=True)
    small = SparseIntVector(tuple(int(v) for v in split.small), M)
    if N >= M:
        g_small = small_part_net(small, S)
    else:
        g_small = large_part_net(small, S)
    net = chain(big, lift(g_small, 2, 0), affine_net([[1, 1]]))
    bound = depth_bound(N, M, S)
    if net.depth > bound:
        raise NetworkError(f"depth {net.depth} exceeds bound {bound}")
    return net.with_width(17)
