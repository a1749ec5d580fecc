import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmcloops.curve import (CoverPoint, CurvePoint, CurveSpec, apply_involution, build_curve, build_cycles,
                            build_homology, continue_mu, mu_ref, mu_squared, mu_tilde, mu_tilde_annulus,
                            mu_tilde_disk, period_matrix, route_to_branch, segment_integrals)
from cmcloops.errors import BranchTooClose, CutsIntersect, Duplicate, OnUnitCircle, OutOfDisk

G3 = [0.4j, -0.4j, -0.5]


def _same(p, q):
    return abs(p.nu - q.nu) < 1e-13 * max(1, abs(p.nu)) and p.sheet == q.sheet and p.tag == q.tag


def _circle(center, radius, n=64):
    return center + radius * np.exp(2j * np.pi * np.arange(n + 1) / n)


def test_outer_points_are_reflections():
    assert build_curve([0.25]).outer_points == (4.0,)
    spec = build_curve([0.3 + 0.2j, -0.4])
    assert np.allclose(spec.outer_points, [1 / np.conj(0.3 + 0.2j), -2.5])
    assert spec.genus == 2
    assert np.allclose(spec.branch_points, [0.3 + 0.2j, spec.outer_points[0], -0.4, -2.5])


@pytest.mark.parametrize("pts, err", [([0.3, 0.3], Duplicate), ([1j], OnUnitCircle),
                                      ([1.2], OutOfDisk), ([0.0], OutOfDisk), ([], OutOfDisk)])
def test_rejects_bad_points(pts, err):
    with pytest.raises(err):
        build_curve(pts)


def test_json_round_trip():
    spec = build_curve([0.3 + 0.2j, -0.4])
    assert CurveSpec.from_json_dict(spec.to_json_dict()) == spec


def test_mu_ref_squares_to_curve(rng):
    spec = build_curve([0.3 + 0.2j, -0.4])
    nu = rng.uniform(-2, 2, 50) + 1j * rng.uniform(-2, 2, 50)
    assert np.allclose(mu_ref(spec, nu) ** 2, mu_squared(spec, nu), rtol=1e-12)


def test_mu_tilde_pulls_back(rng):
    spec = build_curve([0.3 + 0.2j, -0.4])
    lam = 0.5 * np.exp(1j * rng.uniform(0, 2 * np.pi, 20))
    lam = np.concatenate([lam, np.exp(1j * rng.uniform(0, 2 * np.pi, 20))])
    mt = mu_tilde(spec, lam)
    assert np.allclose((lam * mt) ** 2, mu_squared(spec, lam ** 2), rtol=1e-11)


def test_disk_and_annulus_forms_agree_on_the_ray():
    spec = build_curve([0.3 + 0.2j, -0.4])
    lam = spec.ray * np.linspace(0.56, 0.9, 7)
    assert np.allclose(mu_tilde_disk(spec, lam), mu_tilde_annulus(spec, lam), rtol=1e-12)


def test_continuation_without_branch_point_keeps_sheet():
    spec = build_curve([0.25])
    path = continue_mu(spec, _circle(-1.0, 0.3))
    assert path.closed
    assert path.end_sheet == path.start_sheet
    assert abs(path.mu[-1] - path.mu[0]) < 1e-12


def test_continuation_around_one_branch_point_flips_sheet():
    spec = build_curve([0.25])
    path = continue_mu(spec, _circle(0.25, 0.1))
    assert abs(path.mu[-1] + path.mu[0]) < 1e-12


def test_continuation_around_a_cut_keeps_sheet():
    spec = build_curve([0.25])
    t = 2 * np.pi * np.arange(257) / 256
    # ellipse enclosing 1/4 and 4 but not 0
    path = continue_mu(spec, 2.125 + 2.0 * np.cos(t) + 0.5j * np.sin(t))
    assert abs(path.mu[-1] - path.mu[0]) < 1e-12


@pytest.mark.parametrize("inner", [[0.25], [0.3 + 0.2j, -0.4], G3])
def test_loop_around_all_finite_branch_points_flips(inner):
    """2g+1 finite branch points enclosed: infinity is the last branch point."""
    spec = build_curve(inner)
    R = 2 * max(abs(w) for w in spec.outer_points)
    path = continue_mu(spec, _circle(0.0, R, 512))
    assert abs(path.mu[-1] + path.mu[0]) < 1e-10 * abs(path.mu[0])


def test_continuation_refuses_branch_point():
    spec = build_curve([0.25])
    with pytest.raises(BranchTooClose):
        continue_mu(spec, [0.0 + 0.5j, 0.25 + 0j, 0.5 - 0.5j])


def test_sheet_swap_is_involutive():
    spec = build_curve([0.3 + 0.2j, -0.4])
    p = CurvePoint(0.7 - 0.1j, 1)
    q = apply_involution(spec, p, "I")
    assert q.mu(spec) == -p.mu(spec)
    assert apply_involution(spec, q, "I") == p


@pytest.mark.parametrize("inner", [[0.25], [0.3 + 0.2j, -0.4], G3])
def test_reality_involution(inner, rng):
    spec = build_curve(inner)
    for _ in range(6):
        nu = complex(*rng.uniform(-1.5, 1.5, 2))
        p = CurvePoint(nu, int(rng.choice([-1, 1])))
        q = apply_involution(spec, p, "sigma_hat")
        assert abs(q.mu(spec) ** 2 - mu_squared(spec, q.nu)) < 1e-10 * max(1, abs(q.mu(spec)) ** 2)
        assert _same(apply_involution(spec, q, "sigma_hat"), p)
        swap_then = apply_involution(spec, apply_involution(spec, p, "I"), "sigma_hat")
        then_swap = apply_involution(spec, q, "I")
        assert _same(swap_then, then_swap)


def test_reality_involution_fixes_unit_circle():
    spec = build_curve([0.3 + 0.2j, -0.4])
    for th in np.linspace(0.1, 6.0, 9):
        p = CurvePoint(complex(np.exp(1j * th)), 1)
        q = apply_involution(spec, p, "sigma_hat")
        assert abs(q.nu - p.nu) < 1e-14 and q.sheet == p.sheet


def test_special_points():
    spec = build_curve([0.25])
    p0 = apply_involution(spec, CoverPoint(0j, 1.0), "rho")
    assert p0.tag == "P0"
    assert apply_involution(spec, p0, "sigma_hat").tag == "Pinf"
    with pytest.raises(ValueError):
        apply_involution(spec, p0, "tau")


def test_cover_projection(rng):
    spec = build_curve([0.3 + 0.2j, -0.4])
    lam = complex(np.exp(1j * rng.uniform(0, 2 * np.pi)))
    mt = complex(mu_tilde(spec, lam))
    p = apply_involution(spec, CoverPoint(lam, mt), "rho")
    assert abs(p.nu - lam ** 2) < 1e-15
    assert abs(p.mu(spec) - lam * mt) < 1e-12


@pytest.mark.parametrize("inner", [[0.25], [0.3 + 0.2j, -0.4], G3])
def test_canonical_basis(inner):
    spec = build_curve(inner)
    hom = build_homology(spec)
    assert np.array_equal(np.abs(np.diag(hom.intersections)), np.ones(spec.genus))
    cycles = build_cycles(spec, M=256)
    assert [c.kind for c in cycles] == ["a_cycle"] * spec.genus + ["b_cycle"] * spec.genus
    assert all(c.closed for c in cycles)


@pytest.mark.parametrize("inner", [[0.25], [0.3 + 0.2j, -0.4], G3, [0.5j, -0.3 + 0.1j]])
def test_period_matrix_riemann_relations(inner):
    tau = period_matrix(build_curve(inner))
    assert np.max(np.abs(tau - tau.T)) < 1e-10
    assert np.min(np.linalg.eigvalsh(tau.imag)) > 0


def test_cuts_sharing_a_direction():
    with pytest.raises(CutsIntersect):
        build_homology(build_curve([0.3, 0.6]))


def test_segment_to_branch_point_matches_closed_form():
    """Genus one with nu_1 = 1/4: integrate dnu/mu from 1 to the branch point 4 on the real axis."""
    from scipy.integrate import quad
    spec = build_curve([0.25])
    mu1 = complex(mu_ref(spec, 1.0))
    val = segment_integrals(spec, 1.0, 4.0, mu1, [0], end_is_branch=True)[0]
    # mu = sqrt(nu (nu - 1/4)(nu - 4)) is imaginary on (1/4, 4); substitute nu = 4 - s^2
    f = lambda s: 2 / np.sqrt((4 - s * s) * (3.75 - s * s))
    ref, _ = quad(f, 0, np.sqrt(3), epsabs=1e-13, epsrel=1e-13)
    assert abs(abs(val) - ref) < 1e-10
    assert abs(val.real) < 1e-10


def test_route_to_branch_is_path_independent():
    """Two homotopic routes through the lower half plane give the same integrals."""
    from cmcloops.curve import continue_to, polyline_integrals
    spec = build_curve([0.3 + 0.2j, -0.4])
    start, target = 1.0 + 0j, -0.4 + 0j
    mu1 = complex(mu_ref(spec, start))
    one = polyline_integrals(spec, [start, 1 - 1j, -0.4 - 0.5j, target], mu1, [0, 1], end_is_branch=True)
    two = polyline_integrals(spec, [start, 0.5 - 0.8j, target], mu1, [0, 1], end_is_branch=True)
    assert np.max(np.abs(one - two)) < 1e-10
    # the automatic route around 0 agrees with one of the two homotopy classes
    auto = route_to_branch(spec, start, mu1, target, [0, 1])
    upper = polyline_integrals(spec, [start, 0.9 + 0.05j, 0.5j, -0.5 + 0.1j, target], mu1, [0, 1],
                               end_is_branch=True)
    assert min(np.max(np.abs(auto - one)), np.max(np.abs(auto - upper))) < 1e-10
    assert continue_to(spec, start, 1 - 1j, mu1) != 0


@settings(max_examples=12, deadline=None)
@given(st.lists(st.tuples(st.floats(0.15, 0.85), st.floats(0, 2 * np.pi)), min_size=1, max_size=3))
def test_random_period_matrices(points):
    angles = sorted(t for _, t in points)
    gaps = np.diff(angles + [angles[0] + 2 * np.pi])
    if len(points) > 1 and np.min(gaps) < 0.3:
        return
    if min(abs(np.angle(np.exp(1j * t))) for t in angles) < 0.05:
        return
    spec = build_curve([r * np.exp(1j * t) for r, t in points])
    tau = period_matrix(spec)
    assert np.max(np.abs(tau - tau.T)) < 1e-9
    assert np.min(np.linalg.eigvalsh(tau.imag)) > 0
