import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlasovkit.config import (
    EMPTY,
    Box,
    ConfigFunction,
    DiscreteSpace,
    FiniteConfiguration,
    SizeLimitError,
    k_inverse,
    k_transform,
    lp_exponent,
    lp_integral,
    verify_minlos,
)

X1, X2, X3 = (1.0,), (2.5,), (7.25,)


def f(p):
    return {X1: 0.3, X2: -0.7, X3: 1.9}[p]


# -- Box and configurations -----------------------------------------------------------

def test_box_validation():
    with pytest.raises(ValueError):
        Box(3, 1.0)
    with pytest.raises(ValueError):
        Box(1, 0.0)


def test_wrap_lands_in_half_open_box():
    box = Box(1, 10.0)
    out = box.wrap(np.array([-1e-17, 10.0, 23.5, -0.5]))
    assert np.all((out >= 0) & (out < 10.0))
    assert out[2] == pytest.approx(3.5)
    assert out[3] == pytest.approx(9.5)


def test_min_image():
    box = Box(2, 10.0)
    assert np.allclose(box.min_image([[9.0, -6.0]]), [[-1.0, 4.0]])


def test_configuration_is_a_set_with_canonical_order():
    a = FiniteConfiguration([(3.0,), (1.0,), (2.0,)])
    b = FiniteConfiguration([(2.0,), (3.0,), (1.0,)])
    assert a == b and hash(a) == hash(b)
    assert a.points == ((1.0,), (2.0,), (3.0,))
    with pytest.raises(ValueError):
        FiniteConfiguration([(1.0,), (1.0,)])


def test_subsets_enumerate_power_set():
    g = FiniteConfiguration([X1, X2, X3])
    subs = list(g.subsets())
    assert len(subs) == 8 and len(set(subs)) == 8
    assert EMPTY in subs and g in subs


# -- K-transform ----------------------------------------------------------------------

def test_k_transform_of_weighted_singletons():
    G = ConfigFunction.indicator(1, f)
    assert k_transform(G, FiniteConfiguration([X1, X2])) == pytest.approx(0.3 - 0.7)


def test_k_transform_of_empty_indicator_is_one():
    G = ConfigFunction.indicator(0)
    for gamma in (EMPTY, FiniteConfiguration([X1]), FiniteConfiguration([X1, X2, X3])):
        assert k_transform(G, gamma) == 1.0


def test_k_transform_of_lp_exponent_factorises():
    G = ConfigFunction(lambda eta: lp_exponent(f, eta))
    got = k_transform(G, FiniteConfiguration([X1, X2]))
    assert got == pytest.approx((1 + 0.3) * (1 - 0.7), abs=1e-15)


def test_k_inverse_of_constant():
    one = ConfigFunction(lambda eta: 1.0)
    assert k_inverse(one, EMPTY) == 1.0
    assert k_inverse(one, FiniteConfiguration([X1])) == 0.0
    assert k_inverse(one, FiniteConfiguration([X1, X2, X3])) == 0.0


def test_k_inverse_of_product():
    F = ConfigFunction(lambda eta: lp_exponent(lambda p: 1 + f(p), eta))
    assert k_inverse(F, FiniteConfiguration([X1, X2])) == pytest.approx(0.3 * -0.7, abs=1e-15)


def test_cardinality_caps():
    big = FiniteConfiguration([(float(i),) for i in range(26)])
    with pytest.raises(SizeLimitError):
        k_transform(lambda eta: 0.0, big)
    with pytest.raises(SizeLimitError):
        k_inverse(lambda eta: 0.0, big)


def _tables(draw_values, gamma):
    return {eta: v for eta, v in zip(gamma.subsets(), draw_values)}


configs = st.lists(st.integers(0, 9), max_size=5, unique=True).map(
    lambda idx: FiniteConfiguration((0.5 + i,) for i in idx))


@settings(max_examples=60, deadline=None)
@given(configs, st.data())
def test_k_inverse_inverts_k_transform(gamma, data):
    vals = data.draw(st.lists(st.floats(-10, 10), min_size=2 ** len(gamma), max_size=2 ** len(gamma)))
    G = ConfigFunction.tabulated(_tables(vals, gamma))
    KG = ConfigFunction(lambda eta: k_transform(G, eta))
    KinvG = ConfigFunction(lambda eta: k_inverse(G, eta))
    for eta in gamma.subsets():
        assert abs(k_inverse(KG, eta) - G(eta)) <= 1e-12 * max(1.0, max(map(abs, vals)) * 2 ** len(gamma))
        assert abs(k_transform(KinvG, eta) - G(eta)) <= 1e-12 * max(1.0, max(map(abs, vals)) * 2 ** len(gamma))


@settings(max_examples=40, deadline=None)
@given(configs, st.data())
def test_k_transform_linear_and_bounded_below(gamma, data):
    n = 2 ** len(gamma)
    a = data.draw(st.lists(st.floats(0, 5), min_size=n, max_size=n))
    b = data.draw(st.lists(st.floats(-5, 5), min_size=n, max_size=n))
    c = data.draw(st.floats(-3, 3))
    A = ConfigFunction.tabulated(_tables(a, gamma))
    B = ConfigFunction.tabulated(_tables(b, gamma))
    lin = k_transform(lambda eta: A(eta) + c * B(eta), gamma)
    assert lin == pytest.approx(k_transform(A, gamma) + c * k_transform(B, gamma), abs=1e-10)
    assert k_transform(A, gamma) >= A(EMPTY)


# -- Lebesgue-Poisson exponent and integral -------------------------------------------

def test_lp_exponent_examples():
    assert lp_exponent(f, EMPTY) == 1.0
    assert lp_exponent(lambda p: 2.0, FiniteConfiguration([X1, X2, X3])) == 8.0
    assert lp_exponent(f, FiniteConfiguration([X1, X2])) == pytest.approx(0.3 * -0.7)


def test_lp_integral_simple_strata():
    space = DiscreteSpace.grid(Box(1, 6.0), 12)
    assert lp_integral(ConfigFunction.indicator(0), space) == 1.0
    assert lp_integral(ConfigFunction.indicator(1), space) == pytest.approx(12 * 0.5)


def test_lp_integral_of_exponent_is_product():
    space = DiscreteSpace.grid(Box(1, 4.0), 8)
    g = lambda p: math.sin(p[0])  # noqa: E731
    got = lp_integral(lambda eta: lp_exponent(g, eta), space)
    # independent route: expand the product over sites as a sum over subsets
    want = sum(math.prod(g(s) * space.cell_volume for s in sub)
               for k in range(9) for sub in itertools.combinations(space.sites, k))
    assert got == pytest.approx(want, rel=1e-13)
    assert got == pytest.approx(math.prod(1 + g(s) * space.cell_volume for s in space.sites), rel=1e-13)


def test_lp_integral_approaches_exp_under_refinement():
    g = lambda p: 0.2 * math.cos(p[0])  # noqa: E731
    gaps = []
    for n in (4, 8, 16):
        space = DiscreteSpace.grid(Box(1, 1.0), n)
        total = sum(g(s) * space.cell_volume for s in space.sites)
        gaps.append(abs(lp_integral(lambda eta: lp_exponent(g, eta), space) - math.exp(total)))
    assert gaps[0] > gaps[1] > gaps[2]


def test_space_caps():
    with pytest.raises(SizeLimitError):
        DiscreteSpace.grid(Box(1, 1.0), 17)
    with pytest.raises(SizeLimitError):
        verify_minlos(lambda a, b, c: 0.0, DiscreteSpace.grid(Box(1, 1.0), 11))


# -- Minlos identity ------------------------------------------------------------------

def test_minlos_empty_only():
    space = DiscreteSpace.grid(Box(1, 3.0), 6)

    def H(xi, eta, zeta):
        return 1.0 if len(xi) == len(eta) == len(zeta) == 0 else 0.0

    assert verify_minlos(H, space) == (1.0, 1.0)


def test_minlos_third_argument_only():
    space = DiscreteSpace.grid(Box(1, 3.0), 6)
    G = lambda zeta: math.cos(len(zeta)) + sum(p[0] for p in zeta)  # noqa: E731
    lhs, rhs = verify_minlos(lambda xi, eta, zeta: G(zeta), space)
    want = lp_integral(lambda eta: 2 ** len(eta) * G(eta), space)
    assert lhs == pytest.approx(want, rel=1e-13)
    assert rhs == pytest.approx(want, rel=1e-13)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_minlos_random_tables(seed):
    rng = np.random.default_rng(seed)
    space = DiscreteSpace.grid(Box(1, 4.0), 8)
    table = {}

    def H(xi, eta, zeta):
        if len(zeta) > 3:
            return 0.0
        return table.setdefault((xi, eta, zeta), float(rng.normal()))

    lhs, rhs = verify_minlos(H, space)
    assert abs(lhs - rhs) <= 1e-12
