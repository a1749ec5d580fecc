import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmcloops.errors import BadRadius, EvalAtZero, RadiusMismatch, TwistingViolation
from cmcloops.loops import (A, IDENTITY, LoopMatrix, deriv_theta, evaluate, identity,
                            make_loop, multiply, random_twisted_loop, star)


def test_identity_is_valid_twisted_loop():
    e = identity(0.5, 8)
    assert e.coeffs.keys() == {0}
    assert np.allclose(e(0.3 + 0.1j), IDENTITY)


def test_odd_lower_entry_is_twisted():
    g = make_loop({1: [[0, 0], [1, 0]]}, 1.0, True)
    assert np.allclose(g(2.0), [[0, 0], [2, 0]])


def test_even_off_diagonal_rejected():
    with pytest.raises(TwistingViolation):
        make_loop({0: [[0, 1], [0, 0]]}, 1.0, True)


def test_untwisted_allows_anything():
    make_loop({0: [[0, 1], [0, 0]]}, 1.0, False)


@pytest.mark.parametrize("r", [0.0, -0.5, 1.5, float("nan")])
def test_bad_radius(r):
    with pytest.raises(BadRadius):
        make_loop({0: IDENTITY}, r, True)


def test_radius_mismatch():
    with pytest.raises(RadiusMismatch):
        multiply(identity(0.5), identity(0.4))


def test_eval_at_zero():
    with pytest.raises(EvalAtZero):
        evaluate(identity(), 0.0)


def test_lambda_a_squared():
    la = make_loop({1: A}, 1.0, True, N=4)
    prod = multiply(la, la)
    assert prod.coeffs.keys() == {2}
    assert np.allclose(prod.coeff(2), IDENTITY)


def test_star_of_lambda_a():
    s = star(make_loop({1: A}, 1.0, True))
    assert s.coeffs.keys() == {-1}
    assert np.allclose(s.coeff(-1), A)


def test_deriv_theta_lambda_a():
    assert np.allclose(deriv_theta(make_loop({1: A}, 1.0, True), 1.0), 1j * A)


def test_product_matches_pointwise(rng):
    g = random_twisted_loop(rng, r=0.5)
    h = random_twisted_loop(rng, r=0.5)
    lam = 0.5 * np.exp(2j * np.pi * rng.random(50))
    assert np.max(np.abs(multiply(g, h)(lam) - g(lam) @ h(lam))) < 1e-12


def test_json_round_trip(rng):
    g = random_twisted_loop(rng)
    back = LoopMatrix.from_json(g.to_json())
    assert np.array_equal(back.window(-8, 8), g.window(-8, 8))
    obj = json.loads(g.to_json())
    assert set(obj) == {"r", "N", "twisted", "coeffs"}


def test_samples_agree_with_evaluation(rng):
    g = random_twisted_loop(rng)
    lam = 0.5 * np.exp(2j * np.pi * np.arange(16) / 16)
    assert np.allclose(g.samples(16), g(lam))


def test_truncation_drops_high_degrees():
    g = make_loop({3: A}, 1.0, True, N=4)
    p = multiply(g, g)
    assert p.coeffs == {}
    assert p.truncation_residual > 0


coefficient = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)


@st.composite
def twisted_loops(draw):
    lo = draw(st.integers(-4, 0))
    hi = draw(st.integers(0, 4))
    blocks = {}
    for n in range(lo, hi + 1):
        m = np.zeros((2, 2), dtype=complex)
        if n % 2 == 0:
            m[0, 0], m[1, 1] = draw(coefficient), draw(coefficient)
        else:
            m[0, 1], m[1, 0] = draw(coefficient), draw(coefficient)
        blocks[n] = m
    return make_loop(blocks, 1.0, True, N=12)


@settings(max_examples=60, deadline=None)
@given(twisted_loops())
def test_star_is_an_exact_involution(g):
    back = star(star(g))
    assert back.lo == g.lo and np.array_equal(back.data, g.data)


@settings(max_examples=60, deadline=None)
@given(twisted_loops(), twisted_loops())
def test_product_is_twisted_and_pointwise(g, h):
    p = multiply(g, h)
    assert p.twisted
    lam = np.exp(1j * np.linspace(0, 2 * np.pi, 7))
    scale = 1 + np.max(np.abs(g(lam))) * np.max(np.abs(h(lam)))
    assert np.max(np.abs(p(lam) - g(lam) @ h(lam))) <= 1e-12 * scale


@settings(max_examples=40, deadline=None)
@given(twisted_loops())
def test_star_reverses_conjugate_on_circle(g):
    lam = np.exp(1j * np.linspace(0, 2 * np.pi, 5))
    assert np.allclose(star(g)(lam), np.conj(np.swapaxes(g(lam), -1, -2)))
