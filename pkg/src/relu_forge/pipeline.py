"""Full approximants on [0, 1]^d, error measurement and rate fitting.

A single multiscale network is only accurate away from a thin set near the
cell faces of its base.  Building it in several prime bases and taking the
median removes that set: the bad sets of distinct primes are disjoint, so
each point is bad for at most ``d`` of the ``m >= 2d + 2`` bases.
"""
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .net import F64, Affine, ReluNet, chain, compose, evaluate, lift
from .poly import (MIN_DEPTH, BAdicPartition, ScheduleConfig, _as_points, check_embedding,
                   multiscale_net)
from .primitives import order_statistic_net


class ResolutionError(ValueError):
    pass


def first_primes(m):
    """The first ``m`` primes."""
    out = []
    c = 2
    while len(out) < m:
        if all(c % p for p in out if p * p <= c):
            out.append(c)
        c += 1
    return out


def ensemble_size(d):
    """Smallest power of two ``m = 2^r`` with ``m >= 2d + 2``."""
    r = 0
    while 2 ** r < 2 * d + 2:
        r += 1
    return 2 ** r


def floor_log(n, b):
    """Largest ``l`` with ``b^l <= n`` (exact integer arithmetic)."""
    l, v = 0, b
    while v <= n:
        l, v = l + 1, v * b
    return l


def compute_eps(bases, levels):
    """Half the smallest gap in ``{j / b^l : 0 < j < b^l}`` over all bases.

    The endpoints 0 and 1 are included as sentinels so that the result is
    also below every ``b^-l``.  With no interior points the result is 1/4.
    """
    pts = {Fraction(0), Fraction(1)}
    for b, l in zip(bases, levels):
        n = int(b) ** int(l)
        pts.update(Fraction(j, n) for j in range(1, n))
    pts = sorted(pts)
    if len(pts) == 2:
        return Fraction(1, 4)
    return min(hi - lo for lo, hi in zip(pts, pts[1:])) / 2


@dataclass(frozen=True)
class PrimeBaseEnsemble:
    """Prime bases, their levels and the shared trifling width ``eps``."""

    d: int
    n: int
    kappa: float = 1.0
    bases: tuple = field(init=False)
    levels: tuple = field(init=False)
    star_levels: tuple = field(init=False)
    eps: Fraction = field(init=False)

    def __post_init__(self):
        m = ensemble_size(self.d)
        bases = tuple(first_primes(m))
        if self.n < bases[-1]:
            raise ResolutionError(f"resolution n = {self.n} is below the largest base {bases[-1]}")
        levels = tuple(floor_log(self.n, b) for b in bases)
        stars = tuple(int(math.floor(self.kappa * l + 1e-12)) for l in levels)
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "star_levels", stars)
        object.__setattr__(self, "eps", compute_eps(bases, stars))

    @property
    def m(self):
        return len(self.bases)

    def partitions(self):
        return [BAdicPartition(b, l, self.d) for b, l in zip(self.bases, self.star_levels)]

    def trifling_points(self, per=8, seed=0):
        """Points inside every trifling slab ``[j b^-l - eps, j b^-l)`` of every base.

        The sup-norm error of the median network is attained near these
        slabs, so grid maxima are augmented with them.  Other coordinates
        (``d > 1``) are drawn uniformly with the given seed.
        """
        rng = np.random.default_rng(seed)
        e = float(self.eps)
        offs = np.arange(per) / per * e
        pts = []
        for b, l in zip(self.bases, self.star_levels):
            n = b ** l
            for axis in range(self.d):
                t = (np.arange(1, n)[:, None] / n - e + offs[None, :]).ravel()
                x = rng.uniform(size=(t.size, self.d))
                x[:, axis] = t
                pts.append(x)
        return np.concatenate(pts) if pts else np.zeros((0, self.d))

    def good_masks(self, x):
        """Boolean array ``(m, B)``: point in the good region of each base."""
        e = float(self.eps)
        return np.stack([p.in_good_region(x, e) for p in self.partitions()])


def _stack(nets, d):
    # x -> (f_m(x), ..., f_1(x)) by repeated duplication
    state = None
    for j, f in enumerate(nets):
        last = j == len(nets) - 1
        if state is None:
            n_in = d
        else:
            n_in = d + j
        if last:
            step = lift(f, n_in, 0)
        else:
            dup = ReluNet([Affine((n_in + d, n_in), [(i, i, 1) for i in range(d)]
                                  + [(d + i, i, 1) for i in range(n_in)], None, f.exact)])
            step = chain(dup, lift(f, n_in + d, d))
        state = step if state is None else chain(state, step)
    return state


@dataclass
class Approximant:
    """The median network plus its per-base ingredients."""

    net: ReluNet
    ensemble: PrimeBaseEnsemble
    base_nets: list
    configs: list

    def base_outputs(self, x, mode=F64):
        x = _as_points(x, self.ensemble.d)
        return np.stack([np.asarray(evaluate(f, x, mode), dtype=float)[:, 0]
                         for f in self.base_nets])


def build_approximant(f, n, s=None, p=2, q=None, k=None, order=None, threshold=MIN_DEPTH,
                      **schedule):
    """Median of per-base multiscale networks; accurate on all of [0, 1]^d.

    Parameters
    ----------
    f : TargetFunction
    n : int
        Resolution; base ``b`` uses level ``floor(log n / log b)``.
    s, q : float, optional
        Smoothness claim, defaulting to the metadata of ``f``.
    p : float
        Error norm.
    **schedule
        Extra :class:`~relu_forge.poly.ScheduleConfig` fields (``tau``,
        ``K1``, ``K2``, ``delta_scale``).
    """
    d = f.d
    s = f.s if s is None else s
    q = f.q if q is None else q
    check_embedding(s, p, q, d)
    probe = ScheduleConfig(s, p, q, d, 2, 0, k, **schedule)
    ens = PrimeBaseEnsemble(d, int(n), probe.kappa)
    nets, cfgs = [], []
    for b, l in zip(ens.bases, ens.levels):
        cfg = ScheduleConfig(s, p, q, d, b, l, k, **schedule)
        cfgs.append(cfg)
        nets.append(multiscale_net(f, cfg, ens.eps, order, threshold=threshold))
    stacked = _stack(nets, d)
    r = int(math.log2(ens.m))
    median = order_statistic_net(ens.m // 2, r)
    net = compose(median, stacked)
    return Approximant(net, ens, nets, cfgs)


def build_single_base(f, b, l0, s=None, p=2, q=None, k=None, order=None, eps=None,
                      threshold=MIN_DEPTH, **schedule):
    """One multiscale network in base ``b`` with its good-region partition."""
    s = f.s if s is None else s
    q = f.q if q is None else q
    cfg = ScheduleConfig(s, p, q, f.d, b, l0, k, **schedule)
    if eps is None:
        eps = compute_eps([b], [cfg.l_star])
    return multiscale_net(f, cfg, eps, order, threshold=threshold), cfg, BAdicPartition(b, cfg.l_star, f.d, float(eps))


# --------------------------------------------------------------------------
# error measurement
# --------------------------------------------------------------------------

MC = "mc"
QUAD = "quad"
GRID = "grid"


@dataclass
class ErrorReport:
    p: float
    scheme: str
    error: float
    ci_lo: float
    ci_hi: float
    depth: int = 0
    width: int = 0
    params: int = 0
    seed: int = 0
    n: int = 0

    def row(self):
        return {"n": self.n, "depth": self.depth, "width": self.width, "params": self.params,
                "p": "inf" if np.isinf(self.p) else self.p, "error": self.error,
                "ci_lo": self.ci_lo, "ci_hi": self.ci_hi, "seed": self.seed}

    def as_dict(self):
        out = asdict(self)
        out["p"] = "inf" if np.isinf(self.p) else self.p
        return out


def _as_callable(g, d, mode=F64):
    if isinstance(g, ReluNet):
        def call(x):
            return np.asarray(evaluate(g, x, mode), dtype=float)[:, 0]
        return call
    return lambda x: np.asarray(g(x), dtype=float).reshape(-1)


def _norm(v, w, p):
    if np.isinf(p):
        return float(np.max(v)) if v.size else 0.0
    return float(np.sum(w * v ** p) ** (1 / p))


def _grid_points(n, d):
    g = (np.arange(n) + 0.5) / n
    return np.stack(np.meshgrid(*([g] * d), indexing="ij"), -1).reshape(-1, d)


def _gl_points(panels, order, d):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    x1 = ((np.arange(panels)[:, None] + (nodes[None, :] + 1) / 2) / panels).ravel()
    w1 = np.tile(weights / 2 / panels, panels)
    X = np.stack(np.meshgrid(*([x1] * d), indexing="ij"), -1).reshape(-1, d)
    W = np.prod(np.stack(np.meshgrid(*([w1] * d), indexing="ij"), -1).reshape(-1, d), axis=1)
    return X, W


def measure_lp_error(f, g, p, scheme=MC, n_samples=4096, seed=0, mask=None,
                     n_boot=200, order=4, extra=None, mode=F64):
    """Estimate ``||f - g||_{L_p}`` over [0, 1]^d (or the subset ``mask``).

    ``scheme`` is ``"mc"`` (stratified Monte Carlo with a bootstrap band),
    ``"quad"`` (composite Gauss-Legendre; the band is the change under
    panel doubling) or ``"grid"`` (cell-centred grid maximum, meant for
    ``p = inf``).  ``g`` may be a network or a callable.  For the grid
    scheme with ``p = inf``, ``extra`` points are added to the maximum.
    """
    d = f.d
    gg = _as_callable(g, d, mode)

    def errs(x):
        e = np.abs(f(x) - gg(x))
        if mask is not None:
            e = np.where(mask(x), e, 0.0)
        return e

    rng = np.random.default_rng(seed)
    if scheme == MC:
        per = max(1, round(n_samples ** (1 / d)))
        x = (_grid_points(per, d) - 0.5 / per) + rng.uniform(size=(per ** d, d)) / per
        e = errs(x)
        w = np.full(e.size, 1.0 / e.size)
        est = _norm(e, w, p)
        if np.isinf(p):
            return ErrorReport(p, scheme, est, est, est, seed=seed)
        boots = [_norm(e[idx], w, p) for idx in rng.integers(0, e.size, size=(n_boot, e.size))]
        lo, hi = np.percentile(boots, [2.5, 97.5])
        return ErrorReport(p, scheme, est, float(lo), float(hi), seed=seed)
    if scheme == QUAD:
        panels = max(1, round(n_samples ** (1 / d) / order))
        X, W = _gl_points(panels, order, d)
        est = _norm(errs(X), W, p)
        X2, W2 = _gl_points(2 * panels, order, d)
        est2 = _norm(errs(X2), W2, p)
        gap = abs(est2 - est)
        return ErrorReport(p, scheme, est2, est2 - gap, est2 + gap, seed=seed)
    if scheme == GRID:
        per = max(1, round(n_samples ** (1 / d)))
        x = _grid_points(per, d)
        if extra is not None and np.isinf(p):
            x = np.concatenate([x, _as_points(extra, d)])
        e = errs(x)
        est = _norm(e, np.full(e.size, 1.0 / e.size), p)
        return ErrorReport(p, scheme, est, est, est, seed=seed)
    raise ValueError(f"unknown scheme {scheme!r}")


def describe_net(report, net, n=0):
    report.depth, report.width, report.params, report.n = net.depth, net.width, net.n_params, n
    return report


# --------------------------------------------------------------------------
# rates
# --------------------------------------------------------------------------

def fit_rate(points):
    """Least-squares fit of ``log e`` against ``log L``.

    Returns ``(slope, constant, r2)`` with ``e ~ constant * L^slope``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (depth, error) points")
    if np.any(pts <= 0):
        raise ValueError("depths and errors must be positive")
    res = stats.linregress(np.log(pts[:, 0]), np.log(pts[:, 1]))
    return float(res.slope), float(np.exp(res.intercept)), float(res.rvalue ** 2)


def default_scheme(p):
    return GRID if np.isinf(p) else MC


def rate_experiment(f, n_grid, p, s=None, q=None, k=None, seed=0, scheme=None,
                    n_samples=None, threshold=MIN_DEPTH, mode=F64, **schedule):
    """Build the full approximant for each ``n`` and measure its error.

    Returns ``(reports, (slope, constant, r2))``.
    """
    scheme = scheme or default_scheme(p)
    if n_samples is None:
        n_samples = 20000 if scheme == GRID else 4096
    reports = []
    for n in n_grid:
        app = build_approximant(f, n, s, p, q, k, threshold=threshold, **schedule)
        extra = app.ensemble.trifling_points(seed=seed) if np.isinf(p) else None
        rep = measure_lp_error(f, app.net, p, scheme, n_samples, seed, extra=extra, mode=mode)
        reports.append(describe_net(rep, app.net, n))
    fit = fit_rate([(r.depth, r.error) for r in reports])
    return reports, fit
