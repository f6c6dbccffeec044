import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relu_forge.functions import TargetFunction, abs_power, sine
from relu_forge.net import evaluate
from relu_forge.pipeline import MC, compute_eps, measure_lp_error
from relu_forge.poly import (BAdicPartition, EmbeddingError, PiecewisePoly, ScheduleConfig,
                             ScheduleError, basis_eval, check_embedding,
                             coefficient_error_bound, coefficient_lookup_net, lq_norm,
                             modulus_of_smoothness, multi_indices, multiscale_decompose,
                             multiscale_net, n_basis, one_level_net, project,
                             quantize_coeffs, quantized_integers)


def poly_fn(P):
    return TargetFunction(lambda x: P(x), P.d)


# --------------------------------------------------------------------------
# partitions and basis
# --------------------------------------------------------------------------

def test_multi_indices_lex_order():
    assert multi_indices(2, 2) == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)]
    assert n_basis(3, 2) == math.comb(5, 2)


def test_partition_cells_and_good_region():
    P = BAdicPartition(3, 2, 1)
    x = np.array([[0.0], [0.5], [0.999]])
    assert P.cell_of(x).ravel().tolist() == [0, 4, 8]
    eps = 0.01
    edge = np.array([[1 / 9 - 0.005], [1 / 9 + 0.005], [1 - 0.005]])
    # upper faces are shrunk except on the last cell
    assert P.in_good_region(edge, eps).tolist() == [False, True, True]


def test_basis_examples():
    assert basis_eval((1,), 1, (1,), [[0.75]])[0] == pytest.approx(0.5)
    assert basis_eval((0,), 1, (1,), [[0.75], [0.25]]).tolist() == [1.0, 0.0]
    assert basis_eval((2,), 2, (1,), [[0.25]])[0] == 0.0


def test_coefficient_count_and_evaluation():
    P = PiecewisePoly.zeros(2, 2, 2, d=2)
    assert P.coeffs.size == n_basis(2, 2) * 2 ** 4
    rng = np.random.default_rng(0)
    P = PiecewisePoly(2, 2, 2, 2, rng.normal(size=P.coeffs.shape))
    x = rng.uniform(size=(50, 2))
    direct = sum(P.coeffs[a][i1, i2] * basis_eval(alpha, 2, (i1, i2), x)
                 for a, alpha in enumerate(P.alphas) for i1 in range(4) for i2 in range(4))
    assert np.allclose(P(x), direct)


def test_json_roundtrip():
    rng = np.random.default_rng(1)
    P = PiecewisePoly(3, 1, 1, 1, rng.normal(size=(2, 3)))
    Q = PiecewisePoly.from_json(P.to_json())
    assert (Q.b, Q.l, Q.k, Q.d) == (3, 1, 1, 1) and np.array_equal(Q.coeffs, P.coeffs)


def test_refine_preserves_function():
    rng = np.random.default_rng(2)
    P = PiecewisePoly(2, 1, 2, 2, rng.normal(size=(6, 2, 2)))
    x = rng.uniform(size=(200, 2))
    assert np.allclose(P.refine(3)(x), P(x))
    Q = PiecewisePoly(2, 2, 2, 2, rng.normal(size=(6, 4, 4)))
    assert np.allclose((P + Q)(x), P(x) + Q(x))


# --------------------------------------------------------------------------
# projection and decomposition
# --------------------------------------------------------------------------

def test_project_square_onto_lines():
    f = TargetFunction(lambda x: x[:, 0] ** 2, 1)
    P = project(f, 0, 1)
    # x^2 -> x - 1/6 in the basis 1, x
    assert np.allclose(P.coeffs[:, 0], [-1 / 6, 1], atol=1e-14)


def test_project_reproduces_piecewise_polynomials():
    rng = np.random.default_rng(3)
    for d, k, l, b in [(1, 2, 3, 2), (2, 1, 2, 3)]:
        shape = (n_basis(d, k),) + (b ** l,) * d
        P = PiecewisePoly(b, l, k, d, rng.normal(size=shape))
        Q = project(poly_fn(P), l, k, b)
        assert np.allclose(Q.coeffs, P.coeffs, atol=1e-12)
        # idempotent
        assert np.allclose(project(poly_fn(Q), l, k, b).coeffs, Q.coeffs, atol=1e-12)


def test_project_order_check():
    with pytest.raises(ValueError):
        project(sine(), 1, 3, order=3)


def test_projection_beats_competitors():
    f = TargetFunction(lambda x: np.exp(np.sin(5 * x[:, 0])), 1)
    l, k, b = 2, 2, 2
    P = project(f, l, k, b)
    rng = np.random.default_rng(4)
    nodes, weights = np.polynomial.legendre.leggauss(30)
    for c in range(b ** l):
        x = ((c + (nodes + 1) / 2) / b ** l)[:, None]
        w = weights / 2
        best = np.sum(w * (f(x) - P(x)) ** 2)
        for _ in range(50):
            t = x[:, 0] * b ** l - c
            coef = P.coeffs[:, c] + rng.normal(scale=0.05, size=k + 1)
            comp = sum(coef[j] * t ** j for j in range(k + 1))
            assert best <= np.sum(w * (f(x) - comp) ** 2) + 1e-15


def test_decompose_polynomial_has_no_details():
    f = TargetFunction(lambda x: 2 - 3 * x[:, 0], 1)
    levels = multiscale_decompose(f, 3, 1)
    assert all(np.abs(L.coeffs).max() < 1e-12 for L in levels[1:])


def test_decompose_telescopes():
    f = sine(2)
    levels = multiscale_decompose(f, 3, 1, b=2)
    x = np.random.default_rng(5).uniform(size=(100, 2))
    total = sum(L(x) for L in levels)
    assert np.allclose(total, project(f, 3, 1, 2)(x), atol=1e-10)


def test_detail_coefficients_decay():
    # base 3 keeps the kink at 1/2 off every cell face; s = 1 predicts b^-l decay
    f = abs_power(gamma=1.0, c=0.5)
    levels = multiscale_decompose(f, 6, 1, b=3)
    sizes = [np.abs(L.coeffs).max() for L in levels[1:]]
    slope = np.polyfit(np.arange(1, 7), np.log(sizes) / np.log(3), 1)[0]
    assert slope == pytest.approx(-1, abs=0.1)


# --------------------------------------------------------------------------
# quantization
# --------------------------------------------------------------------------

def test_quantize_examples():
    assert quantized_integers([3.7, -3.7, 0.2], 1).tolist() == [3, -3, 0]
    P = PiecewisePoly(2, 1, 0, 1, np.array([[0.3, -0.4]]))
    assert not quantize_coeffs(P, 1.0).coeffs.any()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(1e-3, 2.0))
def test_quantize_properties(seed, delta):
    a = np.random.default_rng(seed).normal(size=(3, 8))
    P = PiecewisePoly(2, 3, 2, 1, a)
    Qa = quantize_coeffs(P, delta).coeffs
    assert np.all(np.abs(a - Qa) <= delta * (1 + 1e-12))
    assert np.all((np.sign(Qa) == 0) | (np.sign(Qa) == np.sign(a)))


def test_coefficient_error_bound_against_direct_norm():
    rng = np.random.default_rng(6)
    for _ in range(50):
        n = int(rng.integers(4, 200))
        q, p = 2.0, float(rng.choice([2.0, 3.0, np.inf]))
        a = rng.normal(size=n)
        a /= lq_norm(a, q)
        delta = float(rng.uniform(0.01, 0.5))
        err = a - delta * quantized_integers(a, delta)
        assert lq_norm(err, p) <= coefficient_error_bound(delta, n, p, q) * (1 + 1e-12)


# --------------------------------------------------------------------------
# one-level networks
# --------------------------------------------------------------------------

def test_lookup_reproduces_integers():
    ints = np.array([0, 3, -2, 0, 7, 0, 0, -1])
    g = coefficient_lookup_net(ints, Fraction(1, 4))
    out = evaluate(g, [[i] for i in range(8)])[:, 0]
    assert list(out) == [Fraction(int(v), 4) for v in ints]


def test_single_basis_function():
    l, m, eps = 2, 4, Fraction(1, 32)
    coeffs = np.zeros((2, 4))
    coeffs[0, 2] = 1.0
    P = PiecewisePoly(2, l, 1, 1, coeffs)
    net = one_level_net(P, 1, m, eps)
    centres = [[Fraction(2 * c + 1, 8)] for c in range(4)]
    out = [float(v) for v in evaluate(net, centres)[:, 0]]
    assert out == pytest.approx([0, 0, 1, 0], abs=6 * 4.0 ** -m)


def test_zero_coefficients_leave_product_noise():
    m, eps = 3, Fraction(1, 40)
    P = PiecewisePoly.zeros(2, 2, 2, 1)
    net = one_level_net(P, Fraction(1, 8), m, eps)
    x = np.linspace(0, 1, 400, endpoint=False)[:, None]
    good = BAdicPartition(2, 2, 1).in_good_region(x, float(eps))
    assert np.abs(evaluate(net, x[good], "f64")).max() <= 6 * 2 * 4.0 ** -m


def test_one_level_class_and_error():
    rng = np.random.default_rng(7)
    P = PiecewisePoly(2, 3, 1, 1, rng.normal(size=(2, 8)))
    eps = Fraction(1, 64)
    net = one_level_net(P, Fraction(1, 64), 8, eps)
    assert net.width == 22 + 18
    x = rng.uniform(size=(2000, 1))
    good = BAdicPartition(2, 3, 1).in_good_region(x, float(eps))
    err = np.abs(evaluate(net, x[good], "f64")[:, 0] - P(x[good]))
    # every coefficient is off by at most delta times the normaliser
    assert err.max() <= 2 * (1 / 64 + 6 * 4.0 ** -8) * max(lq_norm(P.coeffs, 2), 1)


# --------------------------------------------------------------------------
# schedule and multiscale network
# --------------------------------------------------------------------------

def test_schedule_values():
    cfg = ScheduleConfig(s=1, p=2, q=2, d=1, b=2, l0=3)
    assert cfg.kappa == 1 and cfg.l_star == 3 and cfg.tau == 1
    assert cfg.delta(3) == pytest.approx(2 ** -1.5)
    assert cfg.delta(2) == pytest.approx(2 ** -3)
    assert cfg.delta(0) == pytest.approx(2.0 ** (-(1 + 1) * 3))
    assert cfg.k == 1


@pytest.mark.parametrize("s,p,q,d,b,l0", [
    (1, 2, 2, 1, 2, 4), (1.5, 4, 2, 1, 3, 3), (1.25, math.inf, 2, 1, 5, 2),
    (2, 3, 1.5, 2, 2, 3), (1, math.inf, math.inf, 1, 7, 2),
])
def test_schedule_regime_boundary(s, p, q, d, b, l0):
    cfg = ScheduleConfig(s, p, q, d, b, l0)
    assert 1 <= cfg.kappa and cfg.l_star == math.floor(cfg.kappa * l0 + 1e-12)
    for l in range(cfg.l_star + 1):
        assert cfg.dense(l) == (l < l0)
    ratio = 1.0 if math.isinf(q) else q / p
    slack = d / q - (0 if math.isinf(p) else d / p) - s + (1 - ratio) * cfg.tau
    assert slack < 0
    assert 4.0 ** -cfg.K2 < b ** (s - (0 if math.isinf(q) else d / q))


def test_embedding_checks():
    check_embedding(1.25, math.inf, 2, 1)
    with pytest.raises(EmbeddingError):
        check_embedding(1, math.inf, 1, 1)
    with pytest.raises(EmbeddingError):
        check_embedding(1, 2, 4, 1)
    with pytest.raises(ScheduleError):
        ScheduleConfig(1, 2, 2, 1, 2, 3, delta_scale=2.0)


def test_multiscale_level_zero_is_one_level():
    f = sine()
    cfg = ScheduleConfig(1, 2, 2, 1, 2, 0)
    eps = Fraction(1, 4)
    net = multiscale_net(f, cfg, eps)
    P = project(f, 0, cfg.k)
    ref = one_level_net(P, cfg.delta(0), cfg.m(0), eps, cfg.q)
    x = np.linspace(0, 1, 50)[:, None]
    assert np.allclose(evaluate(net, x, "f64"), evaluate(ref, x, "f64"))


def test_multiscale_error_follows_level():
    f = sine()
    errs = []
    for l0 in range(1, 6):
        cfg = ScheduleConfig(1, 2, 2, 1, 2, l0)
        eps = compute_eps([2], [cfg.l_star])
        net = multiscale_net(f, cfg, eps)
        assert net.width <= 24 + 20
        part = BAdicPartition(2, cfg.l_star, 1)
        errs.append(measure_lp_error(f, net, 2, MC, 8192, 0,
                                     mask=lambda x: part.in_good_region(x, float(eps))).error)
    slope = np.polyfit(np.arange(1, 6), np.log2(errs), 1)[0]
    C = max(e * 2 ** l for l, e in zip(range(1, 6), errs))
    assert slope <= -1.0, (slope, C)


# --------------------------------------------------------------------------
# modulus of smoothness
# --------------------------------------------------------------------------

def test_modulus_affine_vanishes():
    f = TargetFunction(lambda x: 3 * x[:, 0] - 1, 1)
    assert modulus_of_smoothness(f, 2, 0.3, 2) == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("t", [0.1, 0.25, 0.5])
def test_modulus_of_square(t):
    f = TargetFunction(lambda x: x[:, 0] ** 2, 1)
    est = modulus_of_smoothness(f, 1, t, math.inf, samples=10_000)
    assert est <= t * (2 - t) * (1 + 1e-12)
    assert est == pytest.approx(t * (2 - t), rel=0.02)


def test_modulus_monotone_in_t():
    f = abs_power()
    vals = [modulus_of_smoothness(f, 2, t, 2) for t in (0.05, 0.1, 0.2, 0.4)]
    assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))
