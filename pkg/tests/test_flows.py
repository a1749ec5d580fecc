from dataclasses import replace

import numpy as np
import pytest

from cmcloops.dpw import Dresser, ZGrid, cylinder_frame
from cmcloops.errors import InputError
from cmcloops.flows import (apply_flow, codimension_bound, correction_polynomial, finite_type_certificate,
                            finite_type_generator, is_trivial, laurent_generator)
from cmcloops.loops import circle_points, identity

LAM = circle_points(16) * np.exp(0.1j)
GRID = ZGrid.square(3, 0.3)


def _diff_on(h1, h2, r):
    lam = circle_points(64, r)
    return float(np.max(np.abs(h1(lam) - h2(lam))))


@pytest.fixture(scope="module")
def g1_frames(genus1):
    return Dresser(genus1.hplus).grid(GRID)


@pytest.fixture(scope="module")
def g2_frames(genus2):
    return Dresser(genus2.hplus).grid(GRID)


def test_generator_must_be_odd_with_pole():
    with pytest.raises(InputError):
        laurent_generator({-2: 1.0}, 0.5, 16)
    with pytest.raises(InputError):
        laurent_generator({1: 1.0}, 0.5, 16)


def test_zero_time_is_identity(genus1):
    gen = laurent_generator({-1: 1.0, -3: 0.2}, genus1.r_final, genus1.N)
    res = apply_flow(genus1.hplus, gen, 0.0)
    assert _diff_on(res.h_plus, genus1.hplus, genus1.r_final) < 1e-12


@pytest.mark.parametrize("t", [0.3, -0.7])
def test_first_flow_translates_cylinder(t):
    gen = laurent_generator({-1: 1.0}, 0.5, 24)
    res = apply_flow(identity(0.5, 24), gen, t, GRID)
    Ft = res.frames.values(LAM)
    F0t_inv = np.linalg.inv(cylinder_frame(t)(LAM))
    for j in range(3):
        for i in range(3):
            z = complex(GRID.z[j, i])
            assert np.max(np.abs(Ft[j, i] - F0t_inv @ cylinder_frame(z + t)(LAM))) < 1e-10


def test_flow_additivity(genus1):
    r, N = genus1.r_final, genus1.N
    gen = laurent_generator({-1: 0.4, -3: 0.05j}, r, N)
    one = apply_flow(genus1.hplus, gen, 0.3)
    two = apply_flow(one.h_plus, gen, 0.45)
    both = apply_flow(genus1.hplus, gen, 0.75)
    assert _diff_on(two.h_plus, both.h_plus, r) < 1e-8


def test_flows_commute(genus1):
    r, N = genus1.r_final, genus1.N
    z1 = laurent_generator({-1: 0.5}, r, N)
    z2 = laurent_generator({-3: 0.03 - 0.02j}, r, N)
    a = apply_flow(apply_flow(genus1.hplus, z1, 1.0).h_plus, z2, 1.0).h_plus
    b = apply_flow(apply_flow(genus1.hplus, z2, 1.0).h_plus, z1, 1.0).h_plus
    c = apply_flow(genus1.hplus, z1 + z2, 1.0).h_plus
    assert _diff_on(a, b, r) < 1e-8
    assert _diff_on(a, c, r) < 1e-8


def test_holomorphic_part_does_not_change_frames(genus1):
    r, N = genus1.r_final, genus1.N
    base = laurent_generator({-1: 0.5, -3: 0.02}, r, N)
    extra = laurent_generator({-1: 0.5, -3: 0.02, 1: 0.3, 3: -0.2j}, r, N)
    fa = apply_flow(genus1.hplus, base, 1.0, GRID).frames.values(LAM)
    fb = apply_flow(genus1.hplus, extra, 1.0, GRID).frames.values(LAM)
    assert np.max(np.abs(fa - fb)) < 1e-8


def test_identical_frames_are_trivial(g1_frames):
    res = is_trivial(g1_frames, g1_frames)
    assert res.trivial
    assert np.allclose(res.U0, np.eye(2), atol=1e-14)
    assert res.displacement == 0


def test_diagonal_conjugation_is_trivial(g1_frames):
    phi = 0.37
    D = np.diag([np.exp(1j * phi), np.exp(-1j * phi)])
    moved = replace(g1_frames, coeffs=D @ g1_frames.coeffs @ D.conj().T)
    res = is_trivial(g1_frames, moved)
    assert res.trivial and res.method == "u1"
    assert abs(res.phase - phi) < 1e-12
    assert res.displacement > 0.1


def test_generic_conjugation_is_trivial(g1_frames):
    from scipy.linalg import expm
    U = expm(np.array([[0.2j, 0.3 + 0.1j], [-0.3 + 0.1j, -0.2j]]))
    moved = replace(g1_frames, coeffs=U @ g1_frames.coeffs @ U.conj().T)
    res = is_trivial(g1_frames, moved)
    assert res.trivial and res.residual < 1e-10


def test_imaginary_translation_moves_delaunay_frames(genus1, g1_frames):
    """The genus-1 example is invariant under real translations only."""
    real = laurent_generator({-1: 0.5}, genus1.r_final, genus1.N)
    assert is_trivial(g1_frames, apply_flow(genus1.hplus, real, 1.0, GRID).frames).trivial
    imag = laurent_generator({-1: 1j}, genus1.r_final, genus1.N)
    res = is_trivial(g1_frames, apply_flow(genus1.hplus, imag, 1.0, GRID).frames)
    assert not res.trivial and res.residual > 1e-2


@pytest.mark.parametrize("coeffs", [{-1: 0.5}, {-1: 1j}, {-3: 0.05}])
def test_generic_flow_is_nontrivial(genus2, g2_frames, coeffs):
    gen = laurent_generator(coeffs, genus2.r_final, genus2.N)
    res = is_trivial(g2_frames, apply_flow(genus2.hplus, gen, 1.0, GRID).frames)
    assert not res.trivial
    assert res.residual > 1e-2


def test_correction_polynomial_clears_poles(genus1):
    phi_t, kappa = correction_polynomial(genus1.a2, genus1.b2, genus1.c2)
    assert kappa == phi_t.num.degree()
    for f in (genus1.a2, genus1.b2, genus1.c2):
        g = phi_t * phi_t * f
        assert all(abs(p) < 1e-12 or g.order_at(p, tol=1e-6) >= 0 for p in g.poles())


def test_generator_needs_enough_modes(genus1):
    with pytest.raises(InputError):
        finite_type_generator(genus1.params.curve, genus1.sd, 1)


@pytest.mark.parametrize("N", [2, 3, 4])
def test_finite_type_certificate_genus1(genus1, g1_frames, N):
    cert = finite_type_certificate(genus1.params.curve, genus1.sd, N, GRID, fg0=g1_frames)
    assert cert.pole_order == 2 * (cert.kappa + N) - 1
    assert cert.pole_order_measured == cert.pole_order
    assert cert.trivial and cert.flow_residual < 1e-6
    assert cert.metric_change < 1e-6
    assert cert.antihermitian_residual < 1e-8
    assert max(cert.tail_low, cert.tail_high) < 1e-8


def test_finite_type_certificate_genus2(genus2, g2_frames):
    cert = finite_type_certificate(genus2.params.curve, genus2.sd, 3, GRID, fg0=g2_frames)
    assert cert.pole_order == 2 * (cert.kappa + 3) - 1
    assert cert.trivial and cert.flow_residual < 1e-6
    assert cert.metric_change < 1e-6


def test_same_size_flow_outside_the_algebra_is_detected(genus2, g2_frames):
    """A generator of the same pole order and size, but without the S-structure, moves the surface."""
    cert = finite_type_certificate(genus2.params.curve, genus2.sd, 3, GRID, fg0=g2_frames)
    gen = laurent_generator({-cert.pole_order: 1.0}, genus2.r_final, genus2.N + cert.pole_order)
    t = 0.5 / gen.sup_on(genus2.r_final)
    res = is_trivial(g2_frames, apply_flow(genus2.hplus, gen, t, GRID).frames)
    assert not res.trivial


def test_codimension_bound(genus1):
    out = codimension_bound(genus1.params.curve, genus1.sd, Ns=[2, 3], grid=GRID)
    assert out["all_trivial"]
    assert out["codimension_bound"] == out["kappa"] + 1
    assert [c["N"] for c in out["certificates"]] == [2, 3]
