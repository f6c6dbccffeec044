"""Explicit ReLU networks as lists of sparse affine maps.

A network of depth ``L`` is a sequence of ``L + 1`` affine maps with a ReLU
applied between consecutive maps.  Weights are stored either as exact
``Fraction`` values (mode ``"rational"``) or as float64 (mode ``"f64"``).
The builders in this package work in rational mode so that bit-level
constructions can be verified without rounding; ``to_f64`` converts a
finished network for fast bulk evaluation.
"""
from __future__ import annotations

import json
import math
import os
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

__all__ = [
    "RATIONAL", "F64", "F64_EPS", "FORMAT_VERSION", "DEFAULT_PRECISION_BITS",
    "NetworkError", "DimensionMismatch", "FormatError", "PrecisionBudgetExceeded",
    "Affine", "ReluNet", "affine_net", "identity_net", "relu_net", "selection",
    "compose", "chain", "concat", "extend_identity", "lift", "sum_nets",
    "pad_depth", "pad_width", "to_f64", "evaluate", "precision_bits",
    "serialize", "deserialize", "save", "load", "as_fraction",
]

RATIONAL = "rational"
F64 = "f64"
# tolerance used when comparing float64 outputs against exact references
F64_EPS = 2.0 ** -40
FORMAT_VERSION = 1
DEFAULT_PRECISION_BITS = 4096
PRECISION_ENV = "RELU_FORGE_PRECISION_BITS"


class NetworkError(ValueError):
    """Base class for malformed networks or invalid network operations."""


class DimensionMismatch(NetworkError):
    pass


class FormatError(NetworkError):
    """Raised when a serialized network cannot be decoded."""


class PrecisionBudgetExceeded(ArithmeticError):
    """Exact evaluation needed a denominator larger than the configured cap."""


def as_fraction(v):
    """Convert ``v`` to an exact ``Fraction``.

    Accepts ints, Fractions, floats (converted exactly) and strings such as
    ``"3/4"``.
    """
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (bool, np.bool_)):
        raise TypeError("boolean is not a valid scalar")
    if isinstance(v, (np.integer,)):
        return Fraction(int(v))
    if isinstance(v, np.floating):
        return Fraction(float(v))
    return Fraction(v)


def _coerce(v, exact):
    return as_fraction(v) if exact else float(v)


def precision_bits():
    """Denominator bit cap for exact evaluation (env override honoured)."""
    raw = os.environ.get(PRECISION_ENV)
    if raw is None or raw == "":
        return DEFAULT_PRECISION_BITS
    try:
        bits = int(raw)
    except ValueError as exc:
        raise NetworkError(f"{PRECISION_ENV} must be an integer, got {raw!r}") from exc
    if bits < 1:
        raise NetworkError(f"{PRECISION_ENV} must be positive")
    return bits


# --------------------------------------------------------------------------
# affine maps
# --------------------------------------------------------------------------

class Affine:
    """Sparse affine map ``x -> W x + b``.

    Entries are kept in canonical form: sorted by (row, col), no duplicates
    and no explicit zeros.  Instances are treated as immutable.
    """

    __slots__ = ("shape", "rows", "cols", "vals", "bias", "exact")

    def __init__(self, shape, entries=(), bias=None, exact=True):
        n_out, n_in = int(shape[0]), int(shape[1])
        if n_out < 0 or n_in < 0:
            raise NetworkError("negative affine shape")
        acc = {}
        for r, c, v in entries:
            r, c = int(r), int(c)
            if not (0 <= r < n_out and 0 <= c < n_in):
                raise NetworkError(f"entry ({r}, {c}) outside shape {(n_out, n_in)}")
            v = _coerce(v, exact)
            acc[(r, c)] = acc.get((r, c), 0) + v
        keys = sorted(k for k, v in acc.items() if v != 0)
        self.shape = (n_out, n_in)
        self.rows = np.array([k[0] for k in keys], dtype=np.int64)
        self.cols = np.array([k[1] for k in keys], dtype=np.int64)
        if exact:
            self.vals = tuple(acc[k] for k in keys)
            zero = Fraction(0)
        else:
            self.vals = np.array([acc[k] for k in keys], dtype=float)
            zero = 0.0
        if bias is None:
            bias = [zero] * n_out
        if len(bias) != n_out:
            raise DimensionMismatch(f"bias has length {len(bias)}, expected {n_out}")
        self.bias = tuple(_coerce(b, exact) for b in bias) if exact else \
            np.array([float(b) for b in bias], dtype=float)
        self.exact = bool(exact)

    # constructors -------------------------------------------------------
    @classmethod
    def from_dense(cls, matrix, bias=None, exact=True):
        rows = [list(r) for r in matrix]
        n_out = len(rows)
        n_in = len(rows[0]) if n_out else 0
        if any(len(r) != n_in for r in rows):
            raise NetworkError("ragged weight matrix")
        entries = [(i, j, v) for i, r in enumerate(rows) for j, v in enumerate(r) if v != 0]
        return cls((n_out, n_in), entries, bias, exact)

    @classmethod
    def identity(cls, n, exact=True):
        return cls((n, n), [(i, i, 1) for i in range(n)], None, exact)

    # views --------------------------------------------------------------
    def entries(self):
        return zip(self.rows.tolist(), self.cols.tolist(), list(self.vals))

    @property
    def nnz(self):
        return len(self.rows)

    def to_dense(self):
        n_out, n_in = self.shape
        if self.exact:
            out = np.full((n_out, n_in), Fraction(0), dtype=object)
        else:
            out = np.zeros((n_out, n_in))
        for r, c, v in self.entries():
            out[r, c] = v
        return out

    def bias_array(self):
        return np.array(self.bias, dtype=object if self.exact else float)

    def astype(self, exact):
        if exact == self.exact:
            return self
        if exact:
            raise NetworkError("cannot convert a float64 affine map to rational mode")
        return Affine(self.shape, self.entries(), list(self.bias), exact=False)

    def __eq__(self, other):
        if not isinstance(other, Affine):
            return NotImplemented
        return (self.shape == other.shape and self.exact == other.exact
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols)
                and list(self.vals) == list(other.vals)
                and list(self.bias) == list(other.bias))

    def __hash__(self):
        return hash((self.shape, tuple(self.rows.tolist()), tuple(self.cols.tolist())))

    def __repr__(self):
        mode = RATIONAL if self.exact else F64
        return f"Affine(shape={self.shape}, nnz={self.nnz}, mode={mode})"


def _affine_compose(outer, inner):
    """Affine map ``outer(inner(x))``."""
    if outer.shape[1] != inner.shape[0]:
        raise DimensionMismatch(f"cannot compose {outer.shape} after {inner.shape}")
    exact = outer.exact and inner.exact
    outer, inner = outer.astype(exact), inner.astype(exact)
    by_row = [[] for _ in range(inner.shape[0])]
    for r, c, v in inner.entries():
        by_row[r].append((c, v))
    entries = []
    bias = list(outer.bias)
    for r, c, v in outer.entries():
        for c2, v2 in by_row[c]:
            entries.append((r, c2, v * v2))
        if inner.bias[c]:
            bias[r] = bias[r] + v * inner.bias[c]
    return Affine((outer.shape[0], inner.shape[1]), entries, bias, exact)


def _block_diag(maps):
    exact = all(m.exact for m in maps)
    entries, bias = [], []
    r0 = c0 = 0
    for m in maps:
        m = m.astype(exact)
        entries.extend((r + r0, c + c0, v) for r, c, v in m.entries())
        bias.extend(m.bias)
        r0 += m.shape[0]
        c0 += m.shape[1]
    return Affine((r0, c0), entries, bias, exact)


def _stack_rows(maps):
    """Vertical stack of affine maps sharing the input dimension."""
    n_in = maps[0].shape[1]
    exact = all(m.exact for m in maps)
    entries, bias = [], []
    r0 = 0
    for m in maps:
        if m.shape[1] != n_in:
            raise DimensionMismatch("stacked maps must share input dimension")
        m = m.astype(exact)
        entries.extend((r + r0, c, v) for r, c, v in m.entries())
        bias.extend(m.bias)
        r0 += m.shape[0]
    return Affine((r0, n_in), entries, bias, exact)


# --------------------------------------------------------------------------
# networks
# --------------------------------------------------------------------------

class ReluNet:
    """Deep ReLU network ``A_L o relu o ... o relu o A_0``.

    Parameters
    ----------
    layers : sequence of Affine
        The ``depth + 1`` affine maps.
    width : int, optional
        Declared width.  Must be at least the largest interior dimension;
        defaults to it.  Undefined (``None``) for depth-0 networks.
    """

    def __init__(self, layers, width=None):
        layers = tuple(layers)
        if not layers:
            raise NetworkError("a network needs at least one affine map")
        for a, b in zip(layers[:-1], layers[1:]):
            if b.shape[1] != a.shape[0]:
                raise DimensionMismatch(
                    f"layer output {a.shape[0]} does not feed input {b.shape[1]}")
        exact = layers[0].exact
        if any(l.exact != exact for l in layers):
            raise NetworkError("mixed rational and float64 layers")
        self.layers = layers
        interior = [l.shape[0] for l in layers[:-1]]
        if not interior:
            self.width = None
        else:
            actual = max(interior)
            if width is None:
                width = actual
            if width < actual:
                raise NetworkError(f"declared width {width} below interior size {actual}")
            self.width = int(width)
        self._plans = {}

    @property
    def depth(self):
        return len(self.layers) - 1

    @property
    def input_dim(self):
        return self.layers[0].shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].shape[0]

    @property
    def exact(self):
        return self.layers[0].exact

    @property
    def mode(self):
        return RATIONAL if self.exact else F64

    @property
    def hidden_sizes(self):
        return [l.shape[0] for l in self.layers[:-1]]

    @property
    def n_params(self):
        """Dense parameter count: all weight and bias entries."""
        return sum(l.shape[0] * l.shape[1] + l.shape[0] for l in self.layers)

    @property
    def n_nonzero(self):
        return sum(l.nnz + sum(1 for b in l.bias if b != 0) for l in self.layers)

    def with_width(self, width):
        return ReluNet(self.layers, width)

    def __call__(self, x, mode=None):
        return evaluate(self, x, mode)

    def __repr__(self):
        return (f"ReluNet(d={self.input_dim}, k={self.output_dim}, width={self.width}, "
                f"depth={self.depth}, mode={self.mode})")


def affine_net(matrix, bias=None, exact=True):
    """Depth-0 network from a dense matrix and bias."""
    return ReluNet([Affine.from_dense(matrix, bias, exact)])


def _identity_layers(n, depth, exact=True):
    """Layers computing the identity on R^n via x = relu(x) - relu(-x)."""
    if depth == 0:
        return [Affine.identity(n, exact)]
    first = Affine((2 * n, n), [(i, i, 1) for i in range(n)]
                   + [(n + i, i, -1) for i in range(n)], None, exact)
    mid_entries = []
    for i in range(n):
        mid_entries += [(i, i, 1), (i, n + i, -1), (n + i, i, -1), (n + i, n + i, 1)]
    mid = Affine((2 * n, 2 * n), mid_entries, None, exact)
    last = Affine((n, 2 * n), [(i, i, 1) for i in range(n)]
                  + [(i, n + i, -1) for i in range(n)], None, exact)
    return [first] + [mid] * (depth - 1) + [last]


def identity_net(n, depth=0, exact=True):
    """Identity on R^n with the requested depth (width 2n when depth >= 1)."""
    if depth < 0:
        raise NetworkError("depth must be non-negative")
    return ReluNet(_identity_layers(n, depth, exact))


def relu_net(n=1, exact=True):
    """The coordinatewise ReLU on R^n, depth 1, width n."""
    return ReluNet([Affine.identity(n, exact), Affine.identity(n, exact)])


def selection(indices, n, exact=True):
    """Depth-0 net returning ``x[indices]`` for ``x`` in R^n."""
    indices = list(indices)
    return ReluNet([Affine((len(indices), n), [(r, c, 1) for r, c in enumerate(indices)],
                           None, exact)])


def compose(g, f):
    """Network computing ``g(f(x))``.

    The boundary affine maps are merged, so the depth is ``f.depth + g.depth``
    and the width is the larger of the two widths.
    """
    if f.output_dim != g.input_dim:
        raise DimensionMismatch(
            f"f outputs {f.output_dim} values but g expects {g.input_dim}")
    if f.exact != g.exact:
        f, g = to_f64(f), to_f64(g)
    merged = _affine_compose(g.layers[0], f.layers[-1])
    layers = list(f.layers[:-1]) + [merged] + list(g.layers[1:])
    widths = [w for w in (f.width, g.width) if w is not None]
    return ReluNet(layers, max(widths) if widths else None)


def chain(*nets):
    """Compose networks left to right: ``chain(f, g, h) = h o g o f``."""
    if not nets:
        raise NetworkError("chain needs at least one network")
    out = nets[0]
    for n in nets[1:]:
        out = compose(n, out)
    return out


def concat(*nets):
    """Direct sum ``f1 (+) f2 (+) ...`` of equal-depth networks.

    Weights are block diagonal layer by layer; the declared width is the sum
    of the operand widths.
    """
    if not nets:
        raise NetworkError("concat needs at least one network")
    depth = nets[0].depth
    if any(n.depth != depth for n in nets):
        raise NetworkError(
            f"concat requires equal depths, got {[n.depth for n in nets]}; use pad_depth")
    layers = [_block_diag([n.layers[j] for n in nets]) for j in range(depth + 1)]
    width = sum(n.width for n in nets) if depth > 0 else None
    return ReluNet(layers, width)


def extend_identity(f, m):
    """Network for ``(x1, x2) -> (f(x1), x2)`` with ``x2`` in R^m.

    Pass-through coordinates ride along as ``relu(x), relu(-x)`` pairs, so
    the width grows by exactly ``2m``.
    """
    if m < 0:
        raise NetworkError("m must be non-negative")
    if m == 0:
        return f
    exact = f.exact
    ident = _identity_layers(m, f.depth, exact)
    layers = [_block_diag([a, b]) for a, b in zip(f.layers, ident)]
    return ReluNet(layers, None if f.depth == 0 else f.width + 2 * m)


def _permutation(perm, exact=True):
    # output j takes input perm[j]
    n = len(perm)
    return Affine((n, n), [(j, p, 1) for j, p in enumerate(perm)], None, exact)


def lift(f, n, at=0):
    """Apply ``f`` to coordinates ``at .. at+f.input_dim-1`` of a vector in R^n.

    The remaining coordinates pass through unchanged; the output places the
    ``f.output_dim`` results at position ``at``.  Width grows by
    ``2 (n - f.input_dim)``.
    """
    d, k = f.input_dim, f.output_dim
    if at < 0 or at + d > n:
        raise DimensionMismatch(f"block [{at}, {at + d}) does not fit in R^{n}")
    m = n - d
    ext = extend_identity(f, m)
    if at == 0:
        return ext
    # move the block to the front, apply, move results back
    p_in = list(range(at, at + d)) + list(range(at)) + list(range(at + d, n))
    # ext outputs (f(x), rest) with rest = (x[:at], x[at+d:])
    p_out = list(range(k, k + at)) + list(range(k)) + list(range(k + at, k + m))
    pin = ReluNet([_permutation(p_in, f.exact)])
    pout = ReluNet([_permutation(p_out, f.exact)])
    return compose(pout, compose(ext, pin))


def sum_nets(nets, keep_input=False):
    """Network for ``x -> sum_i f_i(x)`` built by a running accumulator.

    Each step duplicates the input, applies ``f_i`` to one copy while the
    copy of ``x`` and the partial sum pass through, and adds the result to
    the accumulator.  Depth is the sum of the depths and width is
    ``max W_i + 2d + 2k``.

    With ``keep_input=True`` the result maps ``x -> (x, sum_i f_i(x))``.
    """
    nets = list(nets)
    if not nets:
        raise NetworkError("sum_nets needs at least one network")
    d, k = nets[0].input_dim, nets[0].output_dim
    exact = all(n.exact for n in nets)
    for n in nets:
        if n.input_dim != d or n.output_dim != k:
            raise DimensionMismatch("all summands must share input and output dimensions")
    # state (x, acc) in R^{d+k}
    state = ReluNet([Affine((d + k, d), [(i, i, 1) for i in range(d)], None, exact)])
    dup = ReluNet([Affine((2 * d + k, d + k),
                          [(i, i, 1) for i in range(d)]
                          + [(d + i, i, 1) for i in range(d)]
                          + [(2 * d + j, d + j, 1) for j in range(k)], None, exact)])
    fold = ReluNet([Affine((d + k, 2 * k + d),
                           [(i, k + i, 1) for i in range(d)]
                           + [(d + j, j, 1) for j in range(k)]
                           + [(d + j, k + d + j, 1) for j in range(k)], None, exact)])
    for f in nets:
        if not exact:
            f = to_f64(f)
        # dup gives (x, x, acc); f acts on the first copy, leaving (f(x), x, acc)
        state = chain(state, dup, extend_identity(f, d + k), fold)
    if keep_input:
        return state
    return compose(ReluNet([Affine((k, d + k), [(j, d + j, 1) for j in range(k)],
                                   None, exact)]), state)


def pad_depth(f, depth):
    """Increase the depth of ``f`` by appending identity layers."""
    if depth < f.depth:
        raise NetworkError(f"target depth {depth} below current depth {f.depth}")
    if depth == f.depth:
        return f
    return compose(identity_net(f.output_dim, depth - f.depth, f.exact), f)


def pad_width(f, width):
    """Pad every hidden layer of ``f`` with zero neurons up to ``width``."""
    if f.depth == 0:
        raise NetworkError("depth-0 networks have no hidden layers to pad")
    if width < f.width:
        raise NetworkError(f"target width {width} below current width {f.width}")
    layers = []
    for j, layer in enumerate(f.layers):
        n_out = width if j < f.depth else layer.shape[0]
        n_in = width if j > 0 else layer.shape[1]
        bias = list(layer.bias) + [0] * (n_out - layer.shape[0])
        layers.append(Affine((n_out, n_in), layer.entries(), bias, f.exact))
    return ReluNet(layers, width)


def to_f64(f):
    """Float64 copy of a network."""
    if not f.exact:
        return f
    return ReluNet([l.astype(False) for l in f.layers], f.width)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

class _ExactLayer:
    __slots__ = ("n_out", "denom", "cols", "coeffs", "starts", "nonempty", "bias")

    def __init__(self, a):
        denoms = [v.denominator for v in a.vals] + [b.denominator for b in a.bias]
        D = math.lcm(*denoms) if denoms else 1
        self.n_out = a.shape[0]
        self.denom = D
        self.cols = a.cols
        self.coeffs = np.array([v.numerator * (D // v.denominator) for v in a.vals]
                               + [0], dtype=object)[:-1].reshape(-1, 1)
        rows = a.rows
        if len(rows):
            change = np.flatnonzero(np.diff(rows)) + 1
            self.starts = np.concatenate([[0], change])
            self.nonempty = rows[self.starts]
        else:
            self.starts = np.zeros(0, dtype=np.int64)
            self.nonempty = np.zeros(0, dtype=np.int64)
        self.bias = np.array([b.numerator * (D // b.denominator) for b in a.bias]
                             + [0], dtype=object)[:-1].reshape(-1, 1)


def _exact_plan(net):
    plan = net._plans.get(RATIONAL)
    if plan is None:
        plan = [_ExactLayer(a) for a in net.layers]
        net._plans[RATIONAL] = plan
    return plan


def _float_plan(net):
    plan = net._plans.get(F64)
    if plan is None:
        plan = []
        for a in net.layers:
            w = sp.csr_matrix((np.asarray(list(a.vals), dtype=float), (a.rows, a.cols)),
                              shape=a.shape)
            plan.append((w, np.asarray([float(b) for b in a.bias]).reshape(-1, 1)))
        net._plans[F64] = plan
    return plan


def _prepare_input(net, x):
    x = np.asarray(x, dtype=object)
    single = x.ndim == 1
    if x.ndim == 0:
        x = x.reshape(1)
        single = True
    batch = x.reshape(1, -1) if single else x
    if batch.ndim != 2 or batch.shape[1] != net.input_dim:
        raise DimensionMismatch(
            f"expected inputs of dimension {net.input_dim}, got shape {np.shape(x)}")
    return batch, single


def _eval_exact(net, batch, max_bits):
    plan = _exact_plan(net)
    fr = [[as_fraction(v) for v in row] for row in batch]
    E = math.lcm(*[v.denominator for row in fr for v in row]) if fr and fr[0] else 1
    B = len(fr)
    X = np.empty((net.input_dim, B), dtype=object)
    for b, row in enumerate(fr):
        for i, v in enumerate(row):
            X[i, b] = v.numerator * (E // v.denominator)
    last = len(plan) - 1
    for j, layer in enumerate(plan):
        out = layer.bias * E
        out = np.repeat(out, B, axis=1) if B != 1 else out.copy()
        if len(layer.cols):
            prod = X[layer.cols] * layer.coeffs
            sums = np.add.reduceat(prod, layer.starts, axis=0)
            out[layer.nonempty] += sums
        X = out
        E = E * layer.denom
        if j < last:
            X = np.maximum(X, 0)
        if E.bit_length() > 64:
            g = math.gcd(E, *X.ravel().tolist())
            if g > 1:
                X = X // g
                E //= g
            if E.bit_length() > max_bits:
                raise PrecisionBudgetExceeded(
                    f"denominator needs {E.bit_length()} bits at layer {j}, "
                    f"cap is {max_bits}")
    res = np.empty(X.shape, dtype=object)
    for idx, v in np.ndenumerate(X):
        res[idx] = Fraction(v, E)
    return res.T


def _eval_float(net, batch):
    X = np.asarray(batch, dtype=float).T
    plan = _float_plan(net)
    last = len(plan) - 1
    for j, (w, b) in enumerate(plan):
        X = w @ X + b
        if j < last:
            np.maximum(X, 0.0, out=X)
    return X.T


def evaluate(net, x, mode=None, max_bits=None):
    """Forward pass.

    Parameters
    ----------
    net : ReluNet
    x : array_like
        A single input of shape ``(d,)`` or a batch of shape ``(B, d)``.
    mode : {"rational", "f64"}, optional
        Defaults to the network's own mode.  Rational evaluation of a float64
        network is refused.
    max_bits : int, optional
        Denominator cap for rational evaluation.

    Returns
    -------
    ndarray
        Object array of ``Fraction`` (rational) or float array, shaped
        ``(k,)`` or ``(B, k)``.
    """
    mode = mode or net.mode
    batch, single = _prepare_input(net, x)
    if mode == RATIONAL:
        if not net.exact:
            raise NetworkError("rational evaluation requested for a float64 network")
        out = _eval_exact(net, batch, max_bits or precision_bits())
    elif mode == F64:
        out = _eval_float(net, batch)
    else:
        raise NetworkError(f"unknown mode {mode!r}")
    return out[0] if single else out


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def _encode_scalar(v, exact):
    if exact:
        return f"{v.numerator}/{v.denominator}"
    return repr(float(v))


def _decode_scalar(s, exact):
    if exact:
        if not isinstance(s, str):
            raise FormatError(f"rational entries must be strings, got {s!r}")
        try:
            v = Fraction(s)
        except (ValueError, ZeroDivisionError) as exc:
            raise FormatError(f"bad rational {s!r}") from exc
        if s.strip() not in (f"{v.numerator}/{v.denominator}", str(v.numerator)):
            raise FormatError(f"rational {s!r} is not in lowest terms")
        return v
    if isinstance(s, str):
        try:
            return float(s)
        except ValueError as exc:
            raise FormatError(f"bad float {s!r}") from exc
    if isinstance(s, bool) or not isinstance(s, (int, float)):
        raise FormatError(f"bad float {s!r}")
    return float(s)


def serialize(net):
    """Encode ``net`` as UTF-8 JSON bytes."""
    exact = net.exact
    layers = []
    for a in net.layers:
        dense = a.to_dense()
        layers.append({
            "rows": a.shape[0],
            "cols": a.shape[1],
            "weights": [_encode_scalar(v, exact) for v in dense.ravel()],
            "bias": [_encode_scalar(b, exact) for b in a.bias],
        })
    doc = {
        "version": FORMAT_VERSION,
        "mode": net.mode,
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "width": net.width,
        "depth": net.depth,
        "layers": layers,
    }
    return json.dumps(doc, separators=(",", ":")).encode()


def deserialize(data):
    """Decode bytes (or str) produced by :func:`serialize`."""
    try:
        doc = json.loads(data)
    except (ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError("network document must be a JSON object")
    if doc.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {doc.get('version')!r}")
    mode = doc.get("mode")
    if mode not in (RATIONAL, F64):
        raise FormatError(f"unknown mode {mode!r}")
    exact = mode == RATIONAL
    try:
        layers = []
        for spec in doc["layers"]:
            r, c = int(spec["rows"]), int(spec["cols"])
            w = spec["weights"]
            if len(w) != r * c:
                raise FormatError("weights length does not match rows * cols")
            entries = []
            for idx, s in enumerate(w):
                v = _decode_scalar(s, exact)
                if v != 0:
                    entries.append((idx // c, idx % c, v))
            bias = [_decode_scalar(s, exact) for s in spec["bias"]]
            layers.append(Affine((r, c), entries, bias, exact))
        net = ReluNet(layers, doc.get("width"))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed network document: {exc}") from exc
    except NetworkError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(str(exc)) from exc
    if net.depth != doc.get("depth"):
        raise FormatError("declared depth does not match layer count")
    if net.input_dim != doc.get("input_dim") or net.output_dim != doc.get("output_dim"):
        raise FormatError("declared dimensions do not match layers")
    return net


def save(net, path):
    with open(path, "wb") as fh:
        fh.write(serialize(net))


def load(path):
    with open(path, "rb") as fh:
        return deserialize(fh.read())
