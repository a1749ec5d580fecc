"""Acceptance checks. Each test prints one PASS/FAIL line with the measured value.

Run ``pytest tests/test_acceptance.py -v`` (the lines are printed even when
output capture is on) or ``python3 tests/test_acceptance.py``.
"""
import sys

import numpy as np
import pytest

from cmcloops.construct import assemble_family, default_params
from cmcloops.curve import build_curve, build_homology, period_matrix
from cmcloops.dpw import Dresser, ZGrid, cylinder_checks, extract_potential, maurer_cartan, metric_from_plus
from cmcloops.factor import iwasawa
from cmcloops.flows import apply_flow, finite_type_certificate, laurent_generator
from cmcloops.loops import IDENTITY, circle_points, random_twisted_loop
from cmcloops.periods import (build_omega1, build_omega_q, genus1_coefficient, genus1_ratio, periods_U,
                              check_torus)
from cmcloops.symmetry import build_chi, closing_test, validate_necessary, verify_translation

GENUS1 = [0.25]
GENUS2 = [0.3 + 0.2j, -0.4]
LAM16 = circle_points(16) * np.exp(0.1j)

_capture = {"manager": None}


def verdict(name: str, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    mgr = _capture["manager"]
    if mgr is not None:
        with mgr.global_and_fixture_disabled():
            print(line)
    else:
        print(line)
    assert ok, line


@pytest.fixture(autouse=True)
def _show(request):
    _capture["manager"] = request.config.pluginmanager.getplugin("capturemanager")
    yield
    _capture["manager"] = None


@pytest.fixture(scope="module")
def families():
    return {g: assemble_family(default_params(build_curve(inner))) for g, inner in ((1, GENUS1), (2, GENUS2))}


def _fine(n=13, step=0.025, center=0.1 + 0.05j):
    return ZGrid.with_step(center.real - step * (n - 1) / 2, center.imag - step * (n - 1) / 2, step, n, n)


def _sup(a):
    return float(np.max(np.linalg.norm(a, ord=2, axis=(-2, -1))))


def test_factorization_round_trip():
    rng = np.random.default_rng(97)
    lam = np.concatenate([circle_points(64, 0.5), circle_points(64)])
    on = circle_points(64)
    worst_rt = worst_unit = worst_seed = 0.0
    for _ in range(100):
        g = random_twisted_loop(rng, degree=8, r=0.5, N=32)
        res = iwasawa(g, method="newton")
        alt = iwasawa(g, method="newton", seed="cholesky")
        worst_rt = max(worst_rt, _sup(g(lam) - res.F(lam) @ res.g_plus(lam)))
        F = res.F(on)
        worst_unit = max(worst_unit, _sup(np.conj(np.swapaxes(F, -1, -2)) @ F - IDENTITY))
        worst_seed = max(worst_seed, _sup(F - alt.F(on)))
    ok = worst_rt < 1e-9 and worst_unit < 1e-8 and worst_seed < 1e-8
    verdict("factorization round trip", ok,
            f"|g - F g+| = {worst_rt:.2e}, |F*F - I| = {worst_unit:.2e}, seed spread = {worst_seed:.2e}")


def test_cylinder_exactness():
    checks, _ = cylinder_checks(ZGrid.square(32, 1.0), r=0.5, N=32, H=-2.0)
    radius = max(abs(checks["axis_distance_mean"] - 0.25), checks["axis_distance_spread"])
    ok = (checks["frame_error"] < 1e-10 and radius < 1e-6 and checks["metric_max_abs"] < 1e-8
          and checks["potential_f_dev"] < 1e-10 and checks["potential_E_dev"] < 1e-10)
    verdict("cylinder exactness", ok,
            f"frame {checks['frame_error']:.2e}, radius {radius:.2e}, u {checks['metric_max_abs']:.2e}, "
            f"f {checks['potential_f_dev']:.2e}, E {checks['potential_E_dev']:.2e}")


def test_maurer_cartan_shape(families):
    from cmcloops.dpw import dress
    from cmcloops.loops import identity
    grids = {"cylinder": dress(identity(0.5, 32), _fine()),
             "genus 1": Dresser(families[1].hplus).grid(_fine()),
             "genus 2": Dresser(families[2].hplus).grid(_fine())}
    tails, reals = [], []
    for fg in grids.values():
        mc = maurer_cartan(fg)
        tails.append(mc.tail)
        reals.append(mc.reality)
    ok = max(tails) < 1e-6 and max(reals) < 1e-6
    verdict("Maurer-Cartan shape", ok, f"off-band tail {max(tails):.2e}, reality {max(reals):.2e}")


def test_hopf_invariance(families):
    devs = []
    for g in (1, 2):
        ps = extract_potential(Dresser(families[g].hplus).grid(_fine()))
        ok_pts = np.isfinite(ps.E)
        devs.append(float(np.max(np.abs(ps.E[ok_pts] - 1))) if ok_pts.any() else np.inf)
    verdict("Hopf invariance under dressing", max(devs) < 1e-6,
            f"|E - 1| genus 1 {devs[0]:.2e}, genus 2 {devs[1]:.2e}")


def test_constructed_identities(families):
    worst = dict.fromkeys(["a2+bc", "b2c2", "b(0)c(0)", "beta at branch", "beta2 max"], 0.0)
    a2_lo, a2_hi = np.inf, -np.inf
    for fam in families.values():
        sd = fam.sd
        lam = circle_points(64, sd.r)
        a, b, c = sd.a(lam), sd.b(lam), sd.c(lam)
        worst["a2+bc"] = max(worst["a2+bc"], float(np.max(np.abs(a * a + b * c - 1))))
        x = np.concatenate([circle_points(64), circle_points(64, 0.7), circle_points(64, 1.5)])
        lhs, rhs = fam.b2(x) * fam.c2(x), (1 - fam.a2(x)) ** 2
        worst["b2c2"] = max(worst["b2c2"], float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs))))
        worst["b(0)c(0)"] = max(worst["b(0)c(0)"], abs(fam.b2(0.0) * fam.c2(0.0) - 1))
        worst["beta at branch"] = max(worst["beta at branch"], fam.checks["beta_at_branch_max"])
        on = circle_points(512)
        a2 = fam.a2(on ** 2).real
        a2_lo, a2_hi = min(a2_lo, float(a2.min())), max(a2_hi, float(a2.max()))
        worst["beta2 max"] = max(worst["beta2 max"], float(np.max((sd.beta(on) ** 2).real)))
    ok = (worst["a2+bc"] < 1e-12 and worst["b2c2"] < 1e-10 and worst["b(0)c(0)"] < 1e-12
          and worst["beta at branch"] < 1e-8 and 0 <= a2_lo and a2_hi < 1 and worst["beta2 max"] <= 0)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict("constructed-data identities", ok, f"{detail}, a2 in [{a2_lo:.3g}, {a2_hi:.6g}]")


def test_period_machinery():
    worst_a = worst_conj = worst_stab = 0.0
    for inner in (GENUS1, GENUS2):
        spec = build_curve(inner)
        hom = build_homology(spec)
        om1 = build_omega1(spec, hom)
        rep = periods_U(spec, om1, hom=hom)
        w = build_omega_q(spec, 0.7 - 0.4j, om1)
        a_w = max(abs(w.integrate(hom.a_cycle(k))) for k in range(spec.genus))
        worst_a = max(worst_a, float(np.max(np.abs(rep.a_periods))), a_w)
        worst_conj = max(worst_conj, rep.conj_residual)
        worst_stab = max(worst_stab, rep.stability)
    worst_c0 = 0.0
    for r in (0.3, 0.5, 0.7):
        for phi in (0.0, np.pi / 3):
            c0 = build_omega1(build_curve([r * np.exp(1j * phi)])).coeff(0)
            worst_c0 = max(worst_c0, abs(c0 - genus1_coefficient(r, phi)))
    ok = worst_a < 1e-8 and worst_conj < 1e-8 and worst_stab < 1e-9 and worst_c0 < 1e-6
    verdict("period machinery", ok,
            f"a-periods {worst_a:.2e}, V - conj U {worst_conj:.2e}, stability {worst_stab:.2e}, "
            f"c0 vs AGM {worst_c0:.2e}")


def test_genus1_no_torus():
    rs = np.round(np.arange(1, 10) / 10, 10)
    margins = np.array([genus1_ratio(r) - 1 for r in rs])
    verdicts = []
    for nu1 in (0.25, 0.5, 0.1 + 0.6j, -0.8, 0.3j):
        spec = build_curve([nu1])
        hom = build_homology(spec)
        om1 = build_omega1(spec, hom)
        U = periods_U(spec, om1, hom=hom).U
        u = U[0]
        verdicts.append(check_torus(om1, u / abs(u) ** 2, 1j * np.pi * u / abs(u) ** 2, U).verdict)
    ok = bool(np.all(margins > 0)) and all(v == "no-torus" for v in verdicts)
    verdict("genus-1 no-torus", ok,
            f"min margin {margins.min():.4f} at r = {rs[np.argmin(margins)]}, verdicts {sorted(set(verdicts))}")


def test_symmetry_end_to_end(families):
    worst_tr = worst_u = 0.0
    worst_neg = np.inf
    for fam in families.values():
        q = fam.q
        grid = ZGrid.square(16, 0.3, 0.05 + 0.02j)
        dr = Dresser(fam.hplus)
        chi = build_chi(fam.sd)
        base = dr.grid(grid)
        moved = dr.grid(ZGrid(grid.xs + q.real, grid.ys + q.imag))
        tr = verify_translation(base, q, chi, lam=LAM16, shifted=moved)
        worst_tr = max(worst_tr, tr.residual)
        worst_u = max(worst_u, float(np.max(np.abs(metric_from_plus(moved) - metric_from_plus(base)))))
        wrong = q + 0.1
        off = dr.grid(ZGrid(grid.xs + wrong.real, grid.ys + wrong.imag))
        worst_neg = min(worst_neg, verify_translation(base, wrong, chi, lam=LAM16, shifted=off).residual)
        assert validate_necessary(fam.sd).passed
    ok = worst_tr < 1e-6 and worst_u < 1e-5 and worst_neg >= 1e-2
    verdict("symmetry end to end", ok,
            f"translation {worst_tr:.2e}, metric periodicity {worst_u:.2e}, perturbed q {worst_neg:.2e}")


def test_closing_order_detector():
    rng = np.random.default_rng(3108)
    hits = 0
    for _ in range(50):
        k = int(rng.choice([2, 4]))
        th0 = rng.uniform(0, 2 * np.pi)
        c0 = (0.5 + rng.uniform()) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        c1 = complex(*rng.normal(size=2))

        def beta2(lam, k=k, th0=th0, c0=c0, c1=c1):
            d = np.angle(lam * np.exp(-1j * th0))
            return d ** k * (c0 + c1 * d)

        res = closing_test(beta2, np.exp(1j * th0))
        expected = "chi_is_pm_I" if k == 2 else "fully_closed"
        hits += res.order == k and res.classification == expected
    verdict("closing-order detector", hits == 50, f"{hits}/50 trials classified correctly")


def test_finite_type_certificate(families):
    fam = families[1]
    grid = ZGrid.square(3, 0.3)
    fg0 = Dresser(fam.hplus).grid(grid)
    worst_flow = worst_metric = 0.0
    for N in (2, 3, 4):
        cert = finite_type_certificate(fam.params.curve, fam.sd, N, grid, fg0=fg0)
        worst_flow = max(worst_flow, cert.flow_residual if cert.trivial else np.inf)
        worst_metric = max(worst_metric, cert.metric_change)
    r = fam.r_final
    gen = laurent_generator({-1: 0.4, -3: 0.05j}, r, fam.N)
    two = apply_flow(apply_flow(fam.hplus, gen, 0.3).h_plus, gen, 0.45).h_plus
    both = apply_flow(fam.hplus, gen, 0.75).h_plus
    lam = circle_points(64, r)
    additivity = float(np.max(np.abs(two(lam) - both(lam))))
    ok = worst_flow < 1e-6 and worst_metric < 1e-6 and additivity < 1e-8
    verdict("finite-type certificate", ok,
            f"flow triviality {worst_flow:.2e}, metric change {worst_metric:.2e}, additivity {additivity:.2e}")


def _random_admissible(rng, genus):
    while True:
        angles = np.sort(rng.uniform(0, 2 * np.pi, genus))
        gaps = np.diff(np.append(angles, angles[0] + 2 * np.pi))
        if genus > 1 and gaps.min() < 0.4:
            continue
        if np.min(np.abs(np.angle(np.exp(1j * angles)))) < 0.1:
            continue
        return [r * np.exp(1j * t) for r, t in zip(rng.uniform(0.15, 0.85, genus), angles)]


def test_riemann_relations():
    rng = np.random.default_rng(5)
    worst_sym, min_eig = 0.0, np.inf
    for genus in (1, 2, 3):
        for _ in range(4):
            tau = period_matrix(build_curve(_random_admissible(rng, genus)))
            worst_sym = max(worst_sym, float(np.max(np.abs(tau - tau.T))))
            min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh(tau.imag))))
    ok = worst_sym < 1e-8 and min_eig > 0
    verdict("Riemann relations", ok, f"asymmetry {worst_sym:.2e}, min eig Im tau {min_eig:.3e}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
