"""Gadget networks: piecewise-linear maps, squares and products, sorting,
bit extraction and b-adic cell indexing.

Every builder returns a rational-mode :class:`~relu_forge.net.ReluNet` whose
declared width and depth match the class advertised in its docstring.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

from .net import (
    Affine, NetworkError, ReluNet, affine_net, as_fraction, chain, compose,
    concat, lift, selection, sum_nets,
)

__all__ = [
    "Breakpoints", "simplify", "pwl_eval", "pwl_to_net", "hat_net", "tent_net", "clamp_net",
    "square01_net", "square_net", "product_net", "maxmin_net", "bitonic_schedule",
    "sort_net", "order_statistic_net", "bit_extract_net", "staircase",
    "index_net", "ind",
]


# --------------------------------------------------------------------------
# piecewise linear functions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Breakpoints:
    """Continuous piecewise linear function on the real line.

    Attributes
    ----------
    knots : tuple of Fraction
        Strictly increasing breakpoints.
    values : tuple of Fraction
        Function values at the knots.
    left_slope, right_slope : Fraction
        Slopes of the two unbounded pieces.
    """

    knots: tuple
    values: tuple
    left_slope: Fraction = Fraction(0)
    right_slope: Fraction = Fraction(0)

    def __post_init__(self):
        knots = tuple(as_fraction(k) for k in self.knots)
        values = tuple(as_fraction(v) for v in self.values)
        if len(knots) != len(values):
            raise NetworkError("knots and values must have equal length")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise NetworkError("knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "left_slope", as_fraction(self.left_slope))
        object.__setattr__(self, "right_slope", as_fraction(self.right_slope))

    @property
    def n_pieces(self):
        return len(self.knots) + 1

    def slopes(self):
        """Slopes of all pieces, left to right."""
        inner = [(v1 - v0) / (k1 - k0) for k0, k1, v0, v1 in
                 zip(self.knots, self.knots[1:], self.values, self.values[1:])]
        return [self.left_slope] + inner + [self.right_slope]

    def __call__(self, x):
        return pwl_eval(self, x)


def simplify(bp):
    """Drop knots where the slope does not change."""
    slopes = bp.slopes()
    keep = [i for i in range(len(bp.knots)) if slopes[i] != slopes[i + 1]]
    if not keep and bp.knots:
        keep = [0]
    return Breakpoints([bp.knots[i] for i in keep], [bp.values[i] for i in keep],
                       bp.left_slope, bp.right_slope)


def pwl_eval(bp, x):
    """Direct evaluation of a :class:`Breakpoints` function (exact)."""
    x = as_fraction(x)
    ks, vs = bp.knots, bp.values
    if not ks:
        return bp.left_slope * x
    if x <= ks[0]:
        return vs[0] + bp.left_slope * (x - ks[0])
    if x >= ks[-1]:
        return vs[-1] + bp.right_slope * (x - ks[-1])
    lo, hi = 0, len(ks) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ks[mid] <= x:
            lo = mid
        else:
            hi = mid
    t = (x - ks[lo]) / (ks[hi] - ks[lo])
    return vs[lo] + t * (vs[hi] - vs[lo])


def pwl_to_net(bp, keep_input=False):
    """Network for a continuous piecewise linear function with ``k`` pieces.

    Written as ``a0 x + c + sum_i a_i relu(x - b_i)`` and assembled with
    :func:`~relu_forge.net.sum_nets`; the result lies in width 5 and depth
    ``k - 1`` (knots without a slope change cost nothing).  With ``keep_input=True`` the net maps ``x -> (x, f(x))``
    at the same width and depth.
    """
    slopes = bp.slopes()
    a0 = slopes[0]
    c = bp.values[0] - a0 * bp.knots[0] if bp.knots else Fraction(0)
    terms = [affine_net([[a0]], [c])]
    for b, s0, s1 in zip(bp.knots, slopes, slopes[1:]):
        if s1 != s0:
            terms.append(ReluNet([Affine.from_dense([[1]], [-b]),
                                  Affine.from_dense([[s1 - s0]])]))
    return sum_nets(terms, keep_input=keep_input)


def hat_net():
    """``2x - 4 relu(x - 1/2)``: the hat on [0, 1] (width 5, depth 1)."""
    return pwl_to_net(Breakpoints([Fraction(1, 2)], [1], 2, -2))


def tent_net():
    """Integer delta ``relu(1 - |z|)`` (width 5, depth 3)."""
    return pwl_to_net(Breakpoints([-1, 0, 1], [0, 1, 0]))


def clamp_net(lo=-1, hi=1):
    """``min(max(z, lo), hi)`` (width 5, depth 2)."""
    lo, hi = as_fraction(lo), as_fraction(hi)
    if not lo < hi:
        raise NetworkError("clamp requires lo < hi")
    return pwl_to_net(Breakpoints([lo, hi], [lo, hi]))


# --------------------------------------------------------------------------
# squares and products
# --------------------------------------------------------------------------

def square01_net(k):
    """``x - sum_{n<=k} 4^-n f^n(x)`` with ``f`` the hat (width 7, depth k).

    Approximates ``x**2`` on [0, 1] within ``4**-k``.
    """
    if k < 0:
        raise NetworkError("k must be non-negative")
    net = affine_net([[1], [1]])
    step = lift(hat_net(), 2, at=1)
    for n in range(1, k + 1):
        acc = affine_net([[1, -Fraction(1, 4 ** n)], [0, 1]])
        net = chain(net, step, acc)
    return compose(selection([0], 2), net)


def square_net(k):
    """Approximation ``h_k`` of ``x**2`` on [-1, 1] (width 9, depth 2k+1).

    ``|h_k(x) - x**2| <= 4**-k`` on [-1, 1] and ``h_k(0) = 0``.
    """
    if k < 1:
        raise NetworkError("k must be at least 1")
    g = square01_net(k)
    split = ReluNet([Affine.from_dense([[1], [-1]]), Affine.identity(2)])
    net = chain(split, lift(g, 2, 0), lift(g, 2, 1), affine_net([[1, 1]]))
    return net.with_width(9)


def product_net(k):
    """Approximate product ``f_k(x, y)`` (width 13, depth 6k+3).

    ``|f_k(x, y) - x y| <= 6 * 4**-k`` for ``x, y`` in [-1, 1], via
    ``xy = 2(((x+y)/2)^2 - (x/2)^2 - (y/2)^2)``.
    """
    h = square_net(k)
    half = Fraction(1, 2)
    pre = affine_net([[half, half], [half, 0], [0, half]])
    post = affine_net([[2, -2, -2]])
    return chain(pre, lift(h, 3, 0), lift(h, 3, 1), lift(h, 3, 2), post)


# --------------------------------------------------------------------------
# max/min and sorting
# --------------------------------------------------------------------------

def maxmin_net():
    """``(x, y) -> (max(x, y), min(x, y))`` exactly (width 4, depth 1)."""
    pre = affine_net([[1, 0], [-1, 1], [1, -1]])
    relu2 = ReluNet([Affine.identity(2), Affine.identity(2)])
    post = affine_net([[1, 1, 0], [1, 0, -1]])
    return chain(pre, lift(relu2, 3, 1), post)


def bitonic_schedule(k):
    """Comparator rounds of a descending bitonic sort on ``2**k`` inputs.

    Returns a list of rounds; each round is a list of ``(i, j)`` pairs with
    the maximum routed to ``i``.
    """
    d = 1 << k
    rounds = []
    size = 2
    while size <= d:
        stride = size // 2
        while stride >= 1:
            pairs = []
            for i in range(d):
                j = i ^ stride
                if j > i:
                    pairs.append((i, j) if (i & size) == 0 else (j, i))
            rounds.append(pairs)
            stride //= 2
        size *= 2
    return rounds


def _round_net(pairs, d):
    mm = maxmin_net()
    order = [c for p in pairs for c in p]
    gather = selection(order, d)
    inverse = [0] * d
    for pos, c in enumerate(order):
        inverse[c] = pos
    scatter = selection(inverse, d)
    return chain(gather, concat(*[mm] * len(pairs)), scatter)


def sort_net(k):
    """Sort ``d = 2**k`` inputs in descending order.

    Bitonic comparator schedule; class width ``4d``, depth ``C(k+1, 2)``.
    """
    if k < 1:
        raise NetworkError("k must be at least 1")
    d = 1 << k
    rounds = [_round_net(p, d) for p in bitonic_schedule(k)]
    net = chain(*rounds)
    assert net.depth == comb(k + 1, 2)
    return net.with_width(4 * d)


def order_statistic_net(tau, k):
    """The ``tau``-th largest of ``2**k`` inputs (width ``4d``, depth ``C(k+1,2)``)."""
    d = 1 << k
    if not 1 <= tau <= d:
        raise NetworkError(f"tau must lie in 1..{d}")
    return compose(selection([tau - 1], d), sort_net(k))


# --------------------------------------------------------------------------
# bit extraction and indexing
# --------------------------------------------------------------------------

def _bit_maps(eps):
    half = Fraction(1, 2)
    b_eps = Breakpoints([half - eps, half], [0, 1])
    g_eps = Breakpoints([1 - eps, 1], [1 - eps, 0], 1, 1)
    return b_eps, g_eps


def bit_extract_net(n, m):
    """Bit extractor ``f_{n,m}`` (width 9, depth 4m).

    For ``x = 0.x_1 ... x_n`` in binary the output is
    ``(0.x_{m+1} ... x_n, x_1 ... x_m)``, the remainder first and the
    integer formed by the leading ``m`` bits second.  Inputs that are not
    ``n``-bit dyadic rationals in [0, 1) are outside the contract.
    """
    if not 0 <= m <= n:
        raise NetworkError("need 0 <= m <= n")
    eps = Fraction(1, 2 ** (n + 1))
    b_eps, g_eps = _bit_maps(eps)
    gnet, bnet = lift(pwl_to_net(g_eps), 3, 0), lift(pwl_to_net(b_eps), 3, 1)
    dup = affine_net([[2, 0], [1, 0], [0, 1]])
    fold = affine_net([[1, 0, 0], [0, 1, 2]])
    net = affine_net([[1], [0]])
    for _ in range(m):
        net = chain(net, dup, gnet, bnet, fold)
    return net if m == 0 else net.with_width(9)


def staircase(b, eps):
    """Staircase ``g_eps`` returning the leading base-``b`` digit.

    Equals ``j`` on ``[j/b, (j+1)/b - eps]`` with steep ramps just below
    each ``j/b``; constant ``b - 1`` above ``(b-1)/b``.  ``2b - 1`` pieces.
    """
    b = int(b)
    eps = as_fraction(eps)
    knots, values = [], []
    for j in range(1, b):
        knots += [Fraction(j, b) - eps, Fraction(j, b)]
        values += [j - 1, j]
    return Breakpoints(knots, values)


def index_net(d, l, b, eps):
    """Cell index network ``q_d`` (width 9d, depth 2(b-1)l).

    On each shrunk cell ``prod_j [i_j b^-l, (i_j+1) b^-l - eps)`` the output
    is the constant ``ind(i) = sum_j b^{l(j-1)} i_j``.
    """
    b, l, d = int(b), int(l), int(d)
    eps = as_fraction(eps)
    if b < 2:
        raise NetworkError("base must be at least 2")
    if not 0 < eps < Fraction(1, b ** l):
        raise NetworkError(f"eps must lie in (0, b^-l) = (0, {Fraction(1, b ** l)})")
    if l == 0:
        return affine_net([[0] * d])
    g = lift(pwl_to_net(staircase(b, eps)), 3, 1)
    step = affine_net([[b, -1, 0], [b, -1, 0], [0, 1, b]])
    q1 = affine_net([[1], [1], [0]])
    for _ in range(l):
        q1 = chain(q1, g, step)
    q1 = compose(selection([2], 3), q1).with_width(9)
    weights = [[b ** (l * j) for j in range(d)]]
    return compose(affine_net(weights), concat(*[q1] * d))


def ind(i, b, l):
    """``sum_j b^{l(j-1)} i_j`` for a cell multi-index ``i``."""
    return sum(int(ij) * b ** (l * j) for j, ij in enumerate(i))
