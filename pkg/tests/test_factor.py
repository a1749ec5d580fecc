import numpy as np
import pytest

from cmcloops.errors import IllConditioned
from cmcloops.factor import TwoCircleSolver, birkhoff, iwasawa
from cmcloops.loops import IDENTITY, make_loop, multiply, random_twisted_loop, star


def _sup(a):
    return float(np.max(np.linalg.norm(a, ord=2, axis=(-2, -1))))


def test_constant_worked_example():
    g = make_loop({0: [[1, 0], [1, 1]]}, 1.0, False, N=8)
    res = iwasawa(g)
    s = 1 / np.sqrt(2)
    assert np.allclose(res.F.coeff(0), s * np.array([[1, -1], [1, 1]]), atol=1e-12)
    assert np.allclose(res.g_plus.coeff(0), [[np.sqrt(2), s], [0, s]], atol=1e-12)


@pytest.mark.parametrize("seed", [None, "cholesky", 11])
def test_newton_seeds_agree(rng, seed):
    g = random_twisted_loop(rng)
    ref = iwasawa(g, method="newton")
    other = iwasawa(g, method="newton", seed=seed)
    assert np.max(np.abs(ref.F.window(-8, 8) - other.F.window(-8, 8))) < 1e-10


def test_two_routes_agree(rng):
    g = random_twisted_loop(rng)
    a = iwasawa(g, method="newton")
    b = iwasawa(g, method="two_circle")
    assert np.max(np.abs(a.F.window(-16, 16) - b.F.window(-16, 16))) < 1e-10
    assert b.residual < 1e-10 and b.unitarity < 1e-10


def test_plus_part_normalization(rng):
    res = iwasawa(random_twisted_loop(rng))
    g0 = res.g_plus.coeff(0)
    assert abs(g0[1, 0]) < 1e-14
    assert np.all(np.real(np.diag(g0)) > 0) and np.allclose(np.imag(np.diag(g0)), 0)
    assert np.all(res.g_plus.degrees >= 0)


def test_unitary_on_circle(rng):
    res = iwasawa(random_twisted_loop(rng))
    lam = np.exp(1j * np.linspace(0, 2 * np.pi, 33))
    F = res.F(lam)
    assert _sup(np.conj(np.swapaxes(F, -1, -2)) @ F - IDENTITY) < 1e-12


def test_singular_symbol_rejected():
    g = make_loop({0: [[1, 0], [0, 0]]}, 1.0, False, N=4)
    with pytest.raises(IllConditioned):
        iwasawa(g)


def test_birkhoff_round_trip(rng):
    g = random_twisted_loop(rng)
    res = birkhoff(g)
    assert res.in_big_cell
    assert np.allclose(res.minus_part.coeff(0), IDENTITY, atol=1e-12)
    assert np.all(res.minus_part.degrees <= 0) and np.all(res.plus_part.degrees >= 0)
    lam = 0.5 * np.exp(1j * np.linspace(0, 2 * np.pi, 21))
    assert _sup(g(lam) - res.minus_part(lam) @ res.plus_part(lam)) < 1e-10


def test_birkhoff_outside_big_cell():
    # lambda A has no Birkhoff splitting with g_minus(infinity) = I
    g = make_loop({1: [[0, 1], [1, 0]]}, 1.0, True, N=8)
    assert not birkhoff(g).in_big_cell


def test_solver_reuse(rng):
    g = random_twisted_loop(rng)
    solver = TwoCircleSolver(g.r, g.N)
    res = solver.solve(g.samples(solver.M))
    assert res.residual < 1e-10
    h = multiply(g, star(g).with_radius(g.r))
    assert solver.solve(h.samples(solver.M)).residual < 1e-9
