import json

import numpy as np
import pytest

from cmcloops.construct import (FamilyParams, assemble_family, build_a0sq, build_a2, build_b2_c2,
                                build_p_and_roots, check_f_tilde, curve_context, default_params,
                                f_tilde_from_rational, family_directions, to_json)
from cmcloops.curve import build_curve
from cmcloops.dpw import Dresser, ZGrid, metric_from_plus
from cmcloops.errors import InadmissibleFTilde, MissingNu0, QNotAdmissible
from cmcloops.loops import circle_points
from cmcloops.periods import build_omega_q, check_torus
from cmcloops.rational import RationalFn
from cmcloops.symmetry import validate_necessary

A = np.array([[0, 1], [1, 0]], dtype=complex)
S1 = circle_points(512)
G3 = [0.4j, -0.4j, -0.5]


def test_a0sq_genus1():
    ahat, eps = build_a0sq(build_curve([0.25]))
    assert abs(ahat(1.0) + 1 / 9) < 1e-15
    assert eps == -1
    assert ahat(0.0) == 0
    assert np.max(np.abs(ahat.star()(S1) - ahat(S1))) < 1e-12
    assert np.max(np.abs(ahat(S1).imag)) < 1e-12


def test_a0sq_even_genus_needs_nu0():
    spec = build_curve([0.3 + 0.2j, -0.4])
    with pytest.raises(MissingNu0):
        build_a0sq(spec)
    with pytest.raises(MissingNu0):
        build_a0sq(spec, 0.5)
    ahat, eps = build_a0sq(spec, 1.0)
    assert np.min(eps * ahat(S1).real) > -1e-12


def test_a2_constant_f_tilde():
    a2d = build_a2(default_params(build_curve([0.25])))
    v = a2d.a2(S1)
    assert np.max(np.abs(v.imag)) < 1e-12
    assert v.real.min() >= -1e-15 and v.real.max() < 1
    assert abs(v.real.max() - 0.99) < 1e-9


def test_b2_c2_genus1_closed_form():
    spec = build_curve([0.25])
    a2 = RationalFn.from_roots([0.0], [0.25, 4.0], gain=-0.25)
    bc = build_b2_c2(a2, spec)
    s3 = np.sqrt(3)
    assert np.allclose(np.sort((1 - a2).zeros().real), [2 - s3, 2 + s3], atol=1e-12)
    assert np.allclose(bc.inner_zeros, [2 - s3], atol=1e-12)
    assert abs(np.sqrt(bc.delta) - (2 + s3)) < 1e-10
    expected = RationalFn.from_roots([2 - s3, 2 - s3], [0.25, 4.0], gain=2 + s3)
    x = np.array([0.3 + 0.1j, -1.2, 2.0j])
    assert np.allclose(bc.b2(x), expected(x), rtol=1e-10)


@pytest.mark.parametrize("inner", [[0.25], [0.3 + 0.2j, -0.4], G3])
def test_b2_c2_identities(inner):
    spec = build_curve(inner)
    fp = default_params(spec)
    bc = build_b2_c2(build_a2(fp).a2, spec)
    a2 = build_a2(fp).a2
    # radii chosen to avoid every branch point modulus of the three curves
    x = np.concatenate([S1[::8], 0.7 * S1[::16], 1.5 * S1[::16]])
    assert np.max(np.abs(bc.b2(x) * bc.c2(x) - (1 - a2(x)) ** 2)) < 1e-10 * np.max(np.abs(1 - a2(x)) ** 2)
    assert abs(bc.b2(0.0) * bc.c2(0.0) - 1) < 1e-12
    for v in spec.branch_points:
        assert abs(bc.b2.order_at(v)) == 1
        assert abs(bc.c2.order_at(v)) == 1


def test_f_tilde_admissibility():
    ft = f_tilde_from_rational(RationalFn.laurent({-1: 0.2, 0: 0.6, 1: 0.2}), 3)
    assert check_f_tilde(ft, 3) == {-1: 0.2, 0: 0.6, 1: 0.2}
    with pytest.raises(InadmissibleFTilde):
        check_f_tilde({1: 0.2, -1: 0.2, 0: 1.0}, 1)
    with pytest.raises(InadmissibleFTilde):
        check_f_tilde({1: 0.2, -1: 0.3, 0: 1.0}, 3)
    with pytest.raises(InadmissibleFTilde):
        check_f_tilde({0: 0.0}, 1)
    with pytest.raises(InadmissibleFTilde):
        f_tilde_from_rational(RationalFn.from_roots([], [0.5]), 3)


def test_genus3_with_laurent_f_tilde():
    spec = build_curve(G3)
    fp = default_params(spec, f_tilde={-1: 0.2, 0: 0.6, 1: 0.2}, m=(-1, 1, 0))
    fam = assemble_family(fp)
    rep = validate_necessary(fam.sd)
    assert rep.passed, rep.failing()


def test_constructed_identities(genus1, genus2):
    for fam in (genus1, genus2):
        sd = fam.sd
        lam = circle_points(128, sd.r)
        a, b, c = sd.a(lam), sd.b(lam), sd.c(lam)
        assert np.max(np.abs(a * a + b * c - 1)) < 1e-12
        nu = lam ** 2
        assert np.max(np.abs(a * a - fam.a2(nu))) < 1e-10
        on = circle_points(512)
        a2 = fam.a2(on ** 2)
        assert a2.real.min() >= -1e-12 and a2.real.max() < 1
        be2 = sd.beta(on) ** 2
        assert np.max(be2.real) <= 1e-12 and np.max(np.abs(be2.imag)) < 1e-10
        assert np.max(np.abs(sd.alpha(on).imag)) < 1e-10
        assert fam.checks["beta_at_branch_max"] < 1e-8
        assert fam.checks["f_plus_even_defect"] < 1e-10
        assert fam.checks["principal_part_error"] < 1e-6


def test_hplus_reproduces_squares(genus2):
    fam = genus2
    lam = circle_points(32, fam.r_final) * np.exp(0.05j)
    h = fam.hplus(lam)
    S = h @ A @ np.linalg.inv(h)
    nu = lam ** 2
    assert np.max(np.abs(S[:, 0, 0] ** 2 - fam.a2(nu))) < 1e-8
    assert np.max(np.abs(S[:, 0, 1] ** 2 - fam.b2(nu))) < 1e-8
    assert np.max(np.abs(S[:, 1, 0] ** 2 - fam.c2(nu))) < 1e-8


def test_hplus_independent_of_q(genus1):
    other = assemble_family(default_params(genus1.params.curve, q_scale=0.9))
    assert other.q != genus1.q
    assert np.array_equal(other.hplus.data, genus1.hplus.data)


def test_metric_invariant_along_q(genus1):
    grid = ZGrid.square(3, 0.2)
    dr = Dresser(genus1.hplus)
    q = genus1.q
    u0 = metric_from_plus(dr.grid(grid))
    u1 = metric_from_plus(dr.grid(ZGrid(grid.xs + q.real, grid.ys + q.imag)))
    assert np.max(np.abs(u1 - u0)) < 1e-5
    assert np.ptp(u0) > 1e-3


def test_family_directions_pass_validation(genus2):
    dirs = family_directions(genus2.params)
    assert len(dirs) == 2
    for fp in dirs:
        rep = validate_necessary(assemble_family(fp).sd)
        assert rep.passed, rep.failing()


def test_family_dimension_genus3():
    dirs = family_directions(default_params(build_curve(G3), m=(-1, 1, 0)))
    assert len(dirs) == 3
    for fp in dirs:
        rep = validate_necessary(assemble_family(fp).sd)
        assert rep.passed, rep.failing()


def test_inadmissible_q_rejected(genus1):
    spec = genus1.params.curve
    ctx = curve_context(spec)
    U = ctx.report.U
    bad = genus1.q * (1 + 0.3j)
    omega = build_omega_q(spec, bad, ctx.omega1, ctx.omega2)
    with pytest.raises(QNotAdmissible):
        build_p_and_roots(spec, bad, omega, genus1.r_final, genus1.N, U)


@pytest.mark.parametrize("nu1", [0.25, 0.6, 0.3j, -0.8 + 0.1j])
def test_genus1_never_torus(nu1):
    ctx = curve_context(build_curve([nu1]))
    U = ctx.report.U[0]
    v = check_torus(ctx.omega1, U / abs(U) ** 2, 1j * np.pi * U / abs(U) ** 2, ctx.report.U)
    assert v.verdict == "no-torus"


def test_params_json_round_trip(genus2):
    fp = genus2.params
    back = FamilyParams.from_json_dict(json.loads(json.dumps(fp.to_json_dict())))
    assert back == fp
    out = json.loads(to_json(genus2))
    assert out["N"] == genus2.N and out["K"] == genus2.bc.K
