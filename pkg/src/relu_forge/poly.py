"""b-adic piecewise polynomials and their deep ReLU realisations.

Cells of level ``l`` are the half-open cubes ``prod_j [i_j, i_j + 1) / b^l``.
On each cell a polynomial is written in the local monomial basis
``prod_j (b^l x_j - i_j)^alpha_j``, which is bounded by one on the cell.
Coefficient tensors have shape ``(n_alpha, b^l, ..., b^l)`` with multi-indices
``alpha`` in lexicographic order (see :func:`multi_indices`).
"""
import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import comb

from .net import affine_net, chain, compose, concat, identity_net, lift, sum_nets
from .primitives import clamp_net, index_net, product_net
from .sparse import sparse_vector_net

MAX_CELLS = 2 ** 24


class EmbeddingError(ValueError):
    """Raised when ``1/q - 1/p < s/d`` fails."""


class ScheduleError(ValueError):
    pass


def multi_indices(d, k):
    """All ``alpha`` in N^d with ``|alpha| <= k``, in lexicographic order."""
    return [a for a in itertools.product(range(k + 1), repeat=d) if sum(a) <= k]


def n_basis(d, k):
    return math.comb(d + k, k)


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if d == 1 else x[None, :]
    if x.shape[-1] != d:
        raise ValueError(f"expected points in R^{d}, got shape {x.shape}")
    return x


def _check_cells(b, l, d):
    if b ** (d * l) > MAX_CELLS:
        raise MemoryError(f"b^(dl) = {b}^{d * l} cells exceeds the dense limit {MAX_CELLS}")


@dataclass(frozen=True)
class BAdicPartition:
    """Level-``l`` partition of [0, 1)^d into ``b^(dl)`` congruent cells."""

    b: int
    l: int
    d: int = 1
    eps: float = None

    def __post_init__(self):
        if self.b < 2 or self.l < 0 or self.d < 1:
            raise ValueError("need b >= 2, l >= 0, d >= 1")
        if self.eps is not None and not 0 < self.eps < self.b ** -self.l:
            raise ValueError(f"eps must lie in (0, b^-l) = (0, {self.b ** -self.l})")

    @property
    def n_side(self):
        return self.b ** self.l

    @property
    def n_cells(self):
        return self.n_side ** self.d

    def cell_of(self, x):
        """Integer multi-index of the cell containing each point, shape (B, d)."""
        x = _as_points(x, self.d)
        return np.clip(np.floor(x * self.n_side).astype(np.int64), 0, self.n_side - 1)

    def local(self, x):
        """Local coordinates ``b^l x - i`` in [0, 1)^d."""
        x = _as_points(x, self.d)
        return x * self.n_side - self.cell_of(x)

    def in_good_region(self, x, eps=None):
        """Mask of points in the union of cells shrunk by ``eps`` on their upper faces.

        The last cell along each axis is not shrunk.
        """
        eps = self.eps if eps is None else eps
        x = _as_points(x, self.d)
        i = self.cell_of(x)
        upper = (i + 1) / self.n_side - eps
        ok = (x < upper) | (i == self.n_side - 1)
        return np.all(ok & (x >= 0) & (x <= 1), axis=1)

    def corners(self):
        """Lower corners of all cells, shape (n_cells, d), lexicographic in ``i``."""
        grid = np.indices((self.n_side,) * self.d).reshape(self.d, -1).T
        return grid / self.n_side


def basis_eval(alpha, l, i, x, b=2):
    """``prod_j (b^l x_j - i_j)^alpha_j`` on cell ``i`` and zero elsewhere."""
    alpha = np.atleast_1d(alpha)
    i = np.atleast_1d(i)
    d = len(alpha)
    x = _as_points(x, d)
    part = BAdicPartition(b, l, d)
    inside = np.all(part.cell_of(x) == i, axis=1)
    t = x * b ** l - i
    return np.where(inside, np.prod(t ** alpha, axis=1), 0.0)


@dataclass
class PiecewisePoly:
    """Element of the level-``l`` piecewise polynomial space of degree ``k``."""

    b: int
    l: int
    k: int
    d: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        shape = (n_basis(self.d, self.k),) + (self.b ** self.l,) * self.d
        if self.coeffs.shape != shape:
            raise ValueError(f"coefficient tensor must have shape {shape}, got {self.coeffs.shape}")

    @property
    def alphas(self):
        return multi_indices(self.d, self.k)

    @property
    def partition(self):
        return BAdicPartition(self.b, self.l, self.d)

    @property
    def n_coeffs(self):
        return self.coeffs.size

    @classmethod
    def zeros(cls, b, l, k, d=1):
        _check_cells(b, l, d)
        return cls(b, l, k, d, np.zeros((n_basis(d, k),) + (b ** l,) * d))

    def __call__(self, x):
        x = _as_points(x, self.d)
        part = self.partition
        i = part.cell_of(x)
        t = x * part.n_side - i
        out = np.zeros(x.shape[0])
        for a, c in zip(self.alphas, self.coeffs):
            out += c[tuple(i.T)] * np.prod(t ** np.asarray(a), axis=1)
        return out

    def __add__(self, other):
        if (self.b, self.k, self.d) != (other.b, other.k, other.d):
            raise ValueError("incompatible piecewise polynomials")
        lo, hi = (self, other) if self.l <= other.l else (other, self)
        lo = lo.refine(hi.l)
        return PiecewisePoly(self.b, hi.l, self.k, self.d, lo.coeffs + hi.coeffs)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, c):
        return PiecewisePoly(self.b, self.l, self.k, self.d, c * self.coeffs)

    def refine(self, level):
        """Same function written on the finer partition of level ``level``."""
        if level < self.l:
            raise ValueError("can only refine to a finer level")
        p = self
        while p.l < level:
            p = _refine_once(p)
        return p

    def lq_norm(self, q):
        """l^q norm of the full coefficient tensor (max for ``q = inf``)."""
        return lq_norm(self.coeffs, q)

    def to_json(self):
        return json.dumps({"b": self.b, "l": self.l, "k": self.k, "d": self.d,
                           "coeffs": self.coeffs.tolist()})

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(int(data["b"]), int(data["l"]), int(data["k"]), int(data["d"]),
                   np.asarray(data["coeffs"], dtype=float))


def lq_norm(a, q):
    a = np.abs(np.ravel(a))
    if a.size == 0:
        return 0.0
    if np.isinf(q):
        return float(a.max())
    return float(np.sum(a ** q) ** (1 / q))


def _refine_matrices(b, d, k):
    # child offset j -> matrix taking parent coefficients to child coefficients
    alphas = multi_indices(d, k)
    mats = {}
    for j in itertools.product(range(b), repeat=d):
        T = np.zeros((len(alphas), len(alphas)))
        for r, ao in enumerate(alphas):
            for c, ai in enumerate(alphas):
                if all(o <= i for o, i in zip(ao, ai)):
                    T[r, c] = np.prod([comb(i, o, exact=True) * jj ** (i - o) / b ** i
                                       for o, i, jj in zip(ao, ai, j)])
        mats[j] = T
    return mats


def _refine_once(p):
    b, d = p.b, p.d
    _check_cells(b, p.l + 1, d)
    n = b ** p.l
    out = np.zeros((p.coeffs.shape[0],) + (n * b,) * d)
    flat = p.coeffs.reshape(p.coeffs.shape[0], -1)
    for j, T in _refine_matrices(b, d, p.k).items():
        child = (T @ flat).reshape(p.coeffs.shape)
        sl = (slice(None),) + tuple(slice(jj, None, b) for jj in j)
        out[sl] = child
    return PiecewisePoly(b, p.l + 1, p.k, d, out)


# --------------------------------------------------------------------------
# projection and multiscale decomposition
# --------------------------------------------------------------------------

def _gram(alphas):
    A = np.asarray(alphas)
    s = A[:, None, :] + A[None, :, :] + 1
    return np.prod(1.0 / s, axis=2)


def project(f, l, k, b=2, d=None, order=None):
    """Cellwise L2 projection of ``f`` onto degree-``k`` polynomials at level ``l``.

    Integrals use a tensor Gauss-Legendre rule with ``order`` nodes per axis
    (default ``max(k + 1, 8)``); the result is exact whenever ``f`` is itself
    piecewise polynomial of degree ``<= 2 order - 1 - k`` on the cells.
    """
    d = getattr(f, "d", 1) if d is None else d
    order = max(k + 1, 8) if order is None else order
    if order < k + 1:
        raise ValueError(f"quadrature order {order} is below k + 1 = {k + 1}")
    _check_cells(b, l, d)
    alphas = multi_indices(d, k)
    nodes, weights = leggauss(order)
    nodes, weights = (nodes + 1) / 2, weights / 2
    T = np.array(list(itertools.product(nodes, repeat=d)))           # (Q, d)
    Wq = np.prod(np.array(list(itertools.product(weights, repeat=d))), axis=1)
    V = np.stack([np.prod(T ** np.asarray(a), axis=1) for a in alphas])  # (A, Q)
    n = b ** l
    cells = np.indices((n,) * d).reshape(d, -1).T                      # (C, d)
    pts = (cells[:, None, :] + T[None, :, :]) / n
    vals = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(len(cells), len(T))
    rhs = (vals * Wq) @ V.T                                            # (C, A)
    coef = np.linalg.solve(_gram(alphas), rhs.T)                       # (A, C)
    return PiecewisePoly(b, l, k, d, coef.reshape((len(alphas),) + (n,) * d))


def multiscale_decompose(f, l_max, k, b=2, d=None, order=None):
    """Levels ``f_0 = P_0 f`` and ``f_l = P_l f - P_{l-1} f`` for ``l <= l_max``."""
    if l_max < 0:
        raise ValueError("l_max must be non-negative")
    projs = [project(f, l, k, b, d, order) for l in range(l_max + 1)]
    out = [projs[0]]
    for lo, hi in zip(projs, projs[1:]):
        out.append(hi - lo)
    return out


# --------------------------------------------------------------------------
# quantization
# --------------------------------------------------------------------------

def quantized_integers(a, delta):
    """``sign(a) floor(|a| / delta)`` as an int64 array."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    a = np.asarray(a, dtype=float)
    return (np.sign(a) * np.floor(np.abs(a) / float(delta))).astype(np.int64)


def quantize_coeffs(p, delta):
    """Round coefficients towards zero onto the grid ``delta Z``."""
    x = quantized_integers(p.coeffs, delta)
    return PiecewisePoly(p.b, p.l, p.k, p.d, float(delta) * x)


def coefficient_error_bound(delta, n_cells, p, q):
    """``delta * min(n_cells, delta^-q)^(1/p)`` (``delta^(1 - q/p)`` form when capped)."""
    if np.isinf(p):
        return float(delta)
    cap = n_cells if np.isinf(q) else min(n_cells, float(delta) ** -q)
    return float(delta) * cap ** (1 / p)


# --------------------------------------------------------------------------
# one-level network
# --------------------------------------------------------------------------

def _flat_index(c):
    # ind(i) = sum_j b^{l j} i_j puts i_1 fastest, i.e. Fortran order
    return np.ravel(c, order="F")


MIN_DEPTH = "min_depth"
BALANCED = "balanced"


def coefficient_lookup_net(x, delta=1, threshold=MIN_DEPTH):
    """Network ``n -> delta * x[n]`` on the integer indices ``n = 0..N-1``.

    ``threshold`` selects the big/small split of the sparse lookup:
    ``"balanced"`` for the asymptotically optimal choice, ``"min_depth"``
    for the shallowest realisation.
    """
    S = {MIN_DEPTH: MIN_DEPTH, BALANCED: None}[threshold]
    g = sparse_vector_net([int(v) for v in x], S=S)
    shift = affine_net([[1]], [1])
    return chain(shift, g, affine_net([[Fraction(delta)]])).with_width(17)


def _normalizer(coeffs, q):
    a = np.abs(coeffs)
    if not np.any(a):
        return Fraction(1)
    return Fraction(max(lq_norm(a, q), float(a.max())))


def _front_net(d, l, b, eps):
    # x -> (b^l x - q_1(x_j), q_d(x)) in R^{d+1}
    q1 = index_net(1, l, b, eps)
    qd = index_net(d, l, b, eps)
    depth = qd.depth
    front = concat(*([q1] * d), identity_net(d, depth), qd)
    dup = affine_net(np.vstack([np.eye(d)] * 3).astype(int).tolist())
    n = b ** l
    mix = np.zeros((d + 1, 2 * d + 1), dtype=object)
    for j in range(d):
        mix[j, j] = -1
        mix[j, d + j] = n
    mix[d, 2 * d] = 1
    return chain(dup, front, affine_net(mix.tolist()))


def _product_chain(alpha, m):
    # (z_1..z_d, z_{d+1}) -> z_{d+1} prod z_j^alpha_j, products clamped to [-1, 1]
    d = len(alpha)
    net = identity_net(d + 1)
    if sum(alpha) == 0:
        return compose(affine_net([[0] * d + [1]]), net)
    f = product_net(m)
    c = clamp_net()
    for j, aj in enumerate(alpha):
        dup = np.zeros((d + 2, d + 1), dtype=int)
        dup[: d + 1, : d + 1] = np.eye(d + 1, dtype=int)
        dup[d + 1, j] = 1
        step = chain(affine_net(dup.tolist()), lift(f, d + 2, d), lift(c, d + 1, d))
        for _ in range(aj):
            net = chain(net, step)
    return compose(affine_net([[0] * d + [1]]), net)


def one_level_net(p, delta, m, eps, q=2, threshold=MIN_DEPTH, return_parts=False):
    """Deep ReLU approximation of a level-``l`` piecewise polynomial.

    Coefficients are normalised by their l^q norm, rounded towards zero to
    multiples of ``delta``, and stored in one sparse lookup network per
    multi-index ``alpha``.  A cell index network feeds the lookup and the
    local coordinates, and a chain of clamped ``product_net(m)`` copies
    forms ``a_i prod_j t_j^alpha_j``.  The summands over ``alpha`` are
    combined with :func:`~relu_forge.net.sum_nets`.  Exact on the good
    region up to ``6 k 4^-m`` per unit of coefficient norm plus the rounding
    error.  Width ``<= 22d + 18``.
    """
    d, l, b = p.d, p.l, p.b
    delta = Fraction(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if m < 1:
        raise ValueError("m must be at least 1")
    scale = _normalizer(p.coeffs, q)
    normed = p.coeffs / float(scale)
    ints = quantized_integers(normed, delta)
    front = _front_net(d, l, b, eps)
    terms, lookups = [], []
    for a, xa in zip(p.alphas, ints):
        g = coefficient_lookup_net(_flat_index(xa), delta, threshold)
        lookups.append(g)
        body = chain(front, lift(g, d + 1, d), _product_chain(a, m))
        terms.append(body)
    net = compose(affine_net([[scale]]), sum_nets(terms)).with_width(22 * d + 18)
    if return_parts:
        return net, {"scale": scale, "delta": delta, "ints": ints, "lookups": lookups,
                     "front": front}
    return net


def one_level_depth_bound(p, delta, m, q=2, lookup_depths=None):
    """Exact depth of :func:`one_level_net` given the lookup depths."""
    front = 2 * (p.b - 1) * p.l
    total = 0
    for a, gd in zip(p.alphas, lookup_depths):
        total += front + gd + sum(a) * (6 * m + 5)
    return total


# --------------------------------------------------------------------------
# multiscale schedule and network
# --------------------------------------------------------------------------

def _inv(p):
    return 0.0 if np.isinf(p) else 1.0 / p


def check_embedding(s, p, q, d):
    """Raise :class:`EmbeddingError` unless ``1/q - 1/p < s/d`` and ``q <= p``."""
    if not q <= p:
        raise EmbeddingError(f"need q <= p, got q = {q}, p = {p}")
    lhs, rhs = _inv(q) - _inv(p), s / d
    if not lhs < rhs:
        raise EmbeddingError(f"embedding condition violated: 1/q - 1/p = {lhs:.6g} "
                             f">= s/d = {rhs:.6g}")


@dataclass(frozen=True)
class ScheduleConfig:
    """Per-level rounding ``delta(l)`` and product accuracy ``m(l)``.

    Levels below ``l0`` are rounded finely (dense coefficients), levels
    ``l0..l_star`` coarsely (sparse coefficients).
    """

    s: float
    p: float
    q: float
    d: int
    b: int
    l0: int
    k: int = None
    tau: float = None
    K1: float = None
    K2: float = None
    delta_scale: float = 1.0

    def __post_init__(self):
        check_embedding(self.s, self.p, self.q, self.d)
        if self.l0 < 0:
            raise ScheduleError("l0 must be non-negative")
        if not 0 < self.delta_scale <= 1:
            raise ScheduleError("delta_scale must lie in (0, 1]")
        lb = math.log(self.b) / math.log(4)
        d_q, d_p = self.d * _inv(self.q), self.d * _inv(self.p)
        slack = self.s + d_p - d_q
        if self.k is None:
            object.__setattr__(self, "k", int(math.floor(self.s)))
        if self.tau is None:
            if self.p == self.q:
                tau = 1.0
            elif np.isinf(self.p):
                tau = slack / 2
            else:
                tau = self.p * slack / (2 * (self.p - self.q))
            object.__setattr__(self, "tau", tau)
        if self.K1 is None:
            object.__setattr__(self, "K1", 2 * self.s * lb)
        if self.K2 is None:
            object.__setattr__(self, "K2", max(2 * (d_q - self.s) * lb, 0.5))
        ratio = 1.0 if np.isinf(self.q) else self.q * _inv(self.p)
        if not self.tau > 0 or not d_q - d_p - self.s + (1 - ratio) * self.tau < 0:
            raise ScheduleError(f"tau = {self.tau} violates the summability condition")
        if self.K1 < self.s * lb or 4.0 ** -self.K2 >= self.b ** (self.s - d_q):
            raise ScheduleError("K1, K2 too small for a summable product error")

    @property
    def kappa(self):
        return self.s / (self.s + self.d * _inv(self.p) - self.d * _inv(self.q))

    @property
    def l_star(self):
        return int(math.floor(self.kappa * self.l0 + 1e-12))

    def delta_exponent(self, l):
        """Base-``b`` logarithm of ``delta(l)``."""
        d_q = self.d * _inv(self.q)
        if l >= self.l0:
            return -d_q * self.l0 + self.tau * (l - self.l0)
        return -d_q * l + (self.s + 1) * (l - self.l0)

    def delta(self, l):
        return self.delta_scale * float(self.b) ** self.delta_exponent(l)

    def m(self, l):
        return max(1, int(math.ceil(self.K1 * self.l0 + self.K2 * l - 1e-12)))

    def dense(self, l):
        """True when ``delta(l)^-q > b^(dl)``."""
        if np.isinf(self.q):
            return l < self.l0
        return -self.q * self.delta_exponent(l) > self.d * l + 1e-12

    def levels(self):
        return list(range(self.l_star + 1))

    def as_dict(self):
        return {"s": self.s, "p": _fmt(self.p), "q": _fmt(self.q), "d": self.d,
                "b": self.b, "l0": self.l0, "k": self.k, "tau": self.tau,
                "K1": self.K1, "K2": self.K2, "delta_scale": self.delta_scale,
                "kappa": self.kappa,
                "l_star": self.l_star}


def _fmt(v):
    return "inf" if np.isinf(v) else v


def multiscale_levels(f, cfg, order=None):
    """Multiscale components ``f_0..f_{l_star}`` of ``f`` under ``cfg``."""
    return multiscale_decompose(f, cfg.l_star, cfg.k, cfg.b, cfg.d, order)


def multiscale_net(f, cfg, eps, order=None, levels=None, threshold=MIN_DEPTH):
    """Sum over ``l <= l_star`` of one-level networks with ``delta(l)``, ``m(l)``.

    Width ``<= 24d + 20``; accurate on the good region of level ``l_star``.
    """
    if getattr(f, "d", cfg.d) != cfg.d:
        raise ValueError("function and schedule dimensions differ")
    if levels is None:
        levels = multiscale_levels(f, cfg, order)
    nets = [one_level_net(fl, cfg.delta(l), cfg.m(l), eps, cfg.q, threshold)
            for l, fl in enumerate(levels)]
    return sum_nets(nets).with_width(24 * cfg.d + 20)


# --------------------------------------------------------------------------
# modulus of smoothness
# --------------------------------------------------------------------------

def _finite_difference(f, x, h, k):
    out = np.zeros(x.shape[0])
    for j in range(k + 1):
        out += (-1) ** (k - j) * math.comb(k, j) * f(x + j * h)
    return out


def modulus_of_smoothness(f, k, t, q, samples=10_000, d=None, seed=0):
    """Lower estimate of ``omega_k(f, t)_q`` on [0, 1]^d.

    Maximises ``||Delta_h^k f||_{L_q}`` over sampled steps ``|h| <= t``, the
    norm taken over ``{x : x + k h in [0, 1]^d}``.  In one dimension steps
    and points lie on deterministic grids (Gauss-Legendre nodes for finite
    ``q``); otherwise they are drawn with the given seed.
    """
    if t <= 0 or k < 1:
        raise ValueError("need t > 0 and k >= 1")
    d = getattr(f, "d", 1) if d is None else d
    n_h = max(2, int(math.isqrt(samples)))
    n_x = max(2, samples // n_h)
    best = 0.0
    if d == 1:
        steps = [np.array([v]) for v in np.linspace(t / n_h, t, n_h)]
    else:
        rng = np.random.default_rng(seed)
        dirs = rng.normal(size=(n_h, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = t * rng.uniform(size=n_h) ** (1 / d)
        radii[: min(n_h, d)] = t
        dirs[: min(n_h, d)] = np.eye(d)[: min(n_h, d)]
        steps = list(dirs * radii[:, None])
    nodes, weights = leggauss(n_x)
    rng = np.random.default_rng(seed + 1)
    for h in steps:
        lo = np.maximum(0.0, -k * h)
        hi = np.minimum(1.0, 1.0 - k * h)
        if np.any(hi <= lo):
            continue
        vol = float(np.prod(hi - lo))
        if d == 1:
            if np.isinf(q):
                x = np.linspace(lo[0], hi[0], n_x)[:, None]
            else:
                x = (lo + (hi - lo) * (nodes[:, None] + 1) / 2)
                w = weights / 2 * vol
        else:
            x = lo + (hi - lo) * rng.uniform(size=(n_x, d))
            w = np.full(n_x, vol / n_x)
        v = np.abs(_finite_difference(f, x, h, k))
        if np.isinf(q):
            val = float(v.max())
        else:
            val = float(np.sum(w * v ** q) ** (1 / q))
        best = max(best, val)
    return best
