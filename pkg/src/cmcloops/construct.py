"""From a spectral curve and an admissible translation q to a CMC family member.

Pipeline: a0^2 from the curve, a^2 = scale * f~^2 * a0^2, b^2 and c^2 from
the factorization of 1 - a^2, p as the integral of omega, and finally
h_plus from (a, b, c). On the cover nu = lambda^2 everything has a closed
form in terms of mu~(lambda):

    a = sqrt(k) G(lambda^2) lambda / mu~,   b = delta^(1/4) R(lambda^2) / mu~,
    c = (1 - a^2) / b,

so the sign rule bc = 1 - a^2 holds by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import minimize_scalar

from .curve import (CurveSpec, build_homology, mu_tilde, mu_tilde_annulus, mu_tilde_disk,
                    route_to_branch)
from .errors import (InadmissibleFTilde, MissingNu0, QNotAdmissible, RadiusCollapse,
                     RootPairingFailure)
from .loops import LoopMatrix, ScalarLoop, circle_points
from .periods import (PeriodReport, SecondKindDifferential, build_omega1, build_omega2,
                      build_omega_q, check_sym_condition, periods_U, solve_q)
from .rational import RationalFn
from .symmetry import SymmetryData, build_hplus, conjugation_residual, validate_necessary

SUP_SAMPLES = 512
HEADROOM = 0.99
PAIR_TOL = 1e-8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


# --------------------------------------------------------------- parameters
@dataclass(frozen=True)
class FamilyParams:
    curve: CurveSpec
    q: complex | None = None
    m: tuple | None = None                 # integer targets used when q is None
    f_tilde: dict = field(default_factory=lambda: {0: 1.0})
    nu0: complex | None = None
    q_scale: float = 0.5                   # |q| along U when g = 1 and m = 0

    def to_json_dict(self) -> dict:
        enc = lambda z: {"re": float(np.real(z)), "im": float(np.imag(z))}
        out = {"curve": self.curve.to_json_dict(),
               "f_tilde": {str(k): enc(v) for k, v in sorted(self.f_tilde.items())},
               "q_scale": self.q_scale}
        if self.q is not None:
            out["q"] = enc(self.q)
        if self.m is not None:
            out["m"] = [int(x) for x in self.m]
        if self.nu0 is not None:
            out["nu0"] = enc(self.nu0)
        return out

    @classmethod
    def from_json_dict(cls, obj) -> "FamilyParams":
        from .curve import CurveSpec as _CS
        dec = lambda d: complex(d["re"], d.get("im", 0.0)) if isinstance(d, dict) else complex(d)
        curve = _CS.from_json_dict(obj["curve"]) if "curve" in obj else _CS.from_json_dict(obj)
        g = curve.genus
        nu0 = dec(obj["nu0"]) if "nu0" in obj else (1.0 + 0j if g % 2 == 0 else None)
        ft = {int(k): dec(v) for k, v in obj.get("f_tilde", {"0": 1.0}).items()}
        return cls(curve=curve, q=dec(obj["q"]) if "q" in obj else None,
                   m=tuple(int(x) for x in obj["m"]) if "m" in obj else None,
                   f_tilde=ft, nu0=nu0, q_scale=float(obj.get("q_scale", 0.5)))


def default_params(curve: CurveSpec, **kw) -> FamilyParams:
    """Constant f~ = 1, nu0 = 1 for even genus, m = 0 for genus 1 and (1, 0, ...) otherwise."""
    g = curve.genus
    kw.setdefault("nu0", 1.0 + 0j if g % 2 == 0 else None)
    if kw.get("q") is None and kw.get("m") is None:
        kw["m"] = (0,) if g == 1 else tuple([1] + [0] * (g - 1))
    return FamilyParams(curve=curve, **kw)


# --------------------------------------------------------------------- a^2
def build_a0sq(spec: CurveSpec, nu0: complex | None = None) -> tuple[RationalFn, int]:
    """a-hat^2 from the branch points and the sign eps making eps * a-hat^2 >= 0 on S^1."""
    g = spec.genus
    lead = complex(np.prod(spec.inner_points))
    den = Polynomial.fromroots(spec.branch_points)
    if g % 2:
        num = lead * Polynomial.fromroots([0.0] * g)
    else:
        if nu0 is None:
            raise MissingNu0("even genus needs a unit-modulus nu0")
        if abs(abs(nu0) - 1) > 1e-12:
            raise MissingNu0(f"nu0 = {nu0} is not on the unit circle")
        # conj(nu0), not nu0: only this prefactor keeps a-hat^2 real on S^1 for every unit nu0
        num = np.conj(nu0) * lead * Polynomial.fromroots([0.0] * (g - 1) + [nu0, nu0])
    ahat = RationalFn(num, den)
    vals = ahat(circle_points(SUP_SAMPLES)).real
    eps = 1 if vals.max() >= -vals.min() else -1
    return ahat, eps


def check_f_tilde(f_tilde: dict, g: int) -> dict:
    """Validate a Laurent f~ = sum t_j nu^j: |j| <= floor((g-1)/2) and real on S^1."""
    m = (g - 1) // 2
    coeffs = {int(k): complex(v) for k, v in f_tilde.items() if v != 0}
    if not coeffs:
        raise InadmissibleFTilde("f~ vanishes identically")
    bad = [k for k in coeffs if abs(k) > m]
    if bad:
        raise InadmissibleFTilde(f"f~ has degree {max(map(abs, bad))} > {m} allowed for genus {g}")
    scale = max(abs(v) for v in coeffs.values())
    for k, v in coeffs.items():
        if abs(coeffs.get(-k, 0) - np.conj(v)) > 1e-12 * scale:
            raise InadmissibleFTilde(f"f~ not real on S^1: t_{-k} != conj(t_{k})")
    return coeffs


def f_tilde_from_rational(f: RationalFn, g: int) -> dict:
    """Laurent coefficients of a rational f~ whose only pole on C is nu = 0."""
    poles = f.poles()
    if poles.size and np.max(np.abs(poles)) > 1e-10:
        raise InadmissibleFTilde(f"f~ has poles away from nu = 0: {poles}")
    shift = f.den.degree()
    lead = complex(f.den.coef[-1])
    return {k - shift: complex(c) / lead for k, c in enumerate(f.num.coef) if c != 0}


@dataclass(frozen=True)
class A2Data:
    """a^2 = k * G(nu)^2 * nu / prod(nu - nu_k) with k = scale * eps * (prefactor)."""

    a2: RationalFn
    a0sq: RationalFn
    epsilon: int
    scale: float
    k: complex
    G: Polynomial


def _refined_sup(fn, M: int = SUP_SAMPLES) -> float:
    theta = 2 * np.pi * np.arange(M) / M
    vals = fn(theta)
    j = int(np.argmax(vals))
    h = 2 * np.pi / M
    res = minimize_scalar(lambda t: -fn(np.array([t]))[0], bounds=(theta[j] - h, theta[j] + h),
                          method="bounded", options={"xatol": 1e-13})
    return float(max(vals[j], -res.fun))


def build_a2(fp: FamilyParams) -> A2Data:
    spec = fp.curve
    g = spec.genus
    coeffs = check_f_tilde(fp.f_tilde, g)
    m = (g - 1) // 2
    F = Polynomial([coeffs.get(j - m, 0) for j in range(2 * m + 1)])      # nu^m f~
    a0hat, eps = build_a0sq(spec, fp.nu0 if g % 2 == 0 else None)
    lead = complex(np.prod(spec.inner_points))
    if g % 2:
        G, pref = F, lead
    else:
        G, pref = F * Polynomial([-fp.nu0, 1.0]), np.conj(fp.nu0) * lead
    den = Polynomial.fromroots(spec.branch_points)
    unscaled = RationalFn(eps * pref * G * G * Polynomial([0, 1]), den)

    def on_circle(theta):
        return unscaled(np.exp(1j * theta)).real

    sup = _refined_sup(on_circle)
    if not sup > 0:
        raise InadmissibleFTilde("f~^2 a0^2 vanishes on S^1")
    scale = HEADROOM / sup
    a0sq = a0hat * eps
    return A2Data(unscaled * scale, a0sq, eps, scale, scale * eps * pref, G)


# ------------------------------------------------------------------ b^2 c^2
@dataclass(frozen=True)
class BCData:
    b2: RationalFn
    c2: RationalFn
    delta: float
    inner_zeros: np.ndarray
    R: Polynomial              # b = delta^(1/4) R(lambda^2) / mu~
    K: int
    gamma: complex


def _match(points: np.ndarray, targets: np.ndarray, tol: float, what: str) -> list[int]:
    """Greedy one-to-one matching of points to targets within relative tolerance."""
    free = list(range(len(targets)))
    out = []
    for p in points:
        if not free:
            raise RootPairingFailure(f"unmatched {what} {p}")
        d = [abs(targets[j] - p) for j in free]
        j = int(np.argmin(d))
        if d[j] > tol * max(1.0, abs(p)):
            raise RootPairingFailure(f"{what} {p} has no partner (closest {d[j]:.2e})")
        out.append(free.pop(j))
    return out


def build_b2_c2(a2: RationalFn, spec: CurveSpec) -> BCData:
    """Factor 1 - a^2, pair its zeros under nu -> 1/conj(nu), and form b^2, c^2 = (b^2)*."""
    one = 1 - a2
    zeros = one.zeros()
    poles = one.poles()
    # cancel common roots (branch points where f~ makes a^2 vanish)
    keep_z, keep_p = list(zeros), list(poles)
    for z in zeros:
        if keep_p:
            d = np.abs(np.array(keep_p) - z)
            j = int(np.argmin(d))
            if d[j] < 1e-8 * max(1, abs(z)):
                keep_p.pop(j)
                keep_z.remove(z)
    zeros, poles = np.array(keep_z), np.array(keep_p)
    pole_idx = _match(poles, spec.branch_points, 1e-6, "pole of 1 - a^2")
    inner = zeros[np.abs(zeros) < 1]
    outer = zeros[np.abs(zeros) > 1]
    if len(inner) != len(outer) or len(inner) + len(outer) != len(zeros):
        raise RootPairingFailure(f"1 - a^2 has {len(inner)} zeros inside and {len(outer)} outside S^1")
    _match(1 / np.conj(inner), outer, PAIR_TOL * 1e2, "zero of 1 - a^2")
    K = len(inner)
    pole_pairs = {i // 2 for i in pole_idx}
    if len(pole_idx) != 2 * len(pole_pairs) or len(pole_pairs) != K:
        raise RootPairingFailure("poles of a^2 are not a union of branch pairs matching the zero count")
    extra = [spec.inner_points[k] for k in range(spec.genus) if k not in pole_pairs]
    R = Polynomial.fromroots(list(inner) + extra) if (K or extra) else Polynomial([1.0 + 0j])
    den = Polynomial.fromroots(spec.branch_points)
    bt2 = RationalFn(R * R, den)
    lam = circle_points(64) * np.exp(0.05j)
    lhs = np.abs(one(lam)) ** 2
    rhs = np.abs(bt2(lam)) ** 2
    deltas = lhs / rhs
    delta = float(deltas[0])
    spread = float(np.max(np.abs(deltas - delta)) / delta)
    if spread > 1e-8:
        raise RootPairingFailure(f"(1 - a^2)^2 / |b~^2|^2 not constant on S^1 (spread {spread:.2e})")
    b2 = bt2 * np.sqrt(delta)
    c2 = b2.star()
    gamma = complex(one.num.coef[-1] / one.den.coef[-1])
    return BCData(b2, c2, delta, inner, R, K, gamma)


# ------------------------------------------------------------------------ p
@dataclass
class PData:
    q: complex
    r: float
    N: int
    f_plus: ScalarLoop
    series: np.ndarray              # coefficients of p on C_r, degrees -1..N
    p_fn: object
    branch_constant: complex        # value at (nu_1, 0) of the odd branch, in i*pi*Z
    p_at_branch: np.ndarray
    beta_at_branch: np.ndarray
    even_defect: float
    principal: complex
    residue: complex
    winding: complex                # (1/2pi i) of the S^1 period of omega


def _omega_lambda(omega: SecondKindDifferential, lam, mut):
    return omega.lambda_density(lam, mut)


def build_p_and_roots(spec: CurveSpec, q: complex, omega: SecondKindDifferential, r: float,
                      N: int, U=None) -> PData:
    """p = integral of omega as a function of lambda: series on C_r, Fourier data on S^1."""
    if r < 1e-2:
        raise RadiusCollapse(f"working radius {r:.2e} too small")
    if U is not None:
        sc = check_sym_condition(U, q)
        if not sc.passed:
            raise QNotAdmissible(f"Im(q conj U_k)/pi off integers by {sc.deviation:.2e}")
    M = 1 << int(np.ceil(np.log2(4 * (N + 2))))
    lam = circle_points(M, r)
    vals = _omega_lambda(omega, lam, mu_tilde_disk(spec, lam))
    freq = np.fft.fftfreq(M, d=1.0 / M).astype(int)
    e = np.fft.fft(vals) / M / r ** freq.astype(float)
    coef = {int(n): complex(c) for n, c in zip(freq, e)}
    residue = coef[-1]
    principal = -coef[-2]
    series = np.zeros(N + 2, dtype=complex)        # degrees -1..N
    series[0] = -coef[-2]
    for n in range(0, N):
        series[n + 2] = coef[n] / (n + 1)
    fp = series[2:].copy()                         # degrees 1..N
    fp[0] += np.conj(q)
    w = np.abs(fp) * r ** np.arange(1, N + 1)
    even = np.arange(1, N + 1) % 2 == 0
    even_defect = float(np.max(w[even], initial=0.0) / max(np.max(w), 1e-300))
    fp[even] = 0
    f_plus = ScalarLoop(1, fp, r, N, "odd")

    def p_disk(lam):
        lam = np.asarray(lam, dtype=complex)
        powers = lam[..., None] ** np.arange(-1, N + 1)
        return powers @ series

    # continue from lambda_r on the ray to S^1, then around S^1 spectrally
    ray = spec.ray
    lam_r = r * ray
    t = 0.5 * (1 - r) * _GL_X + 0.5 * (1 + r)
    lam_t = t * ray
    along = np.sum(0.5 * (1 - r) * _GL_W * _omega_lambda(omega, lam_t, mu_tilde_disk(spec, lam_t)) * ray)
    p_star = complex(p_disk(lam_r)) + complex(along)
    theta_star = float(np.angle(ray))
    Ms = 256
    while True:
        th = theta_star + 2 * np.pi * np.arange(Ms) / Ms
        lam_s = np.exp(1j * th)
        dp = 1j * lam_s * _omega_lambda(omega, lam_s, mu_tilde_annulus(spec, lam_s))
        d = np.fft.fft(dp) / Ms
        tail = np.max(np.abs(d[Ms // 2 - Ms // 8: Ms // 2 + Ms // 8])) / np.max(np.abs(d))
        if tail < 1e-15 or Ms >= 1 << 16:
            break
        Ms *= 2
    dfreq = np.fft.fftfreq(Ms, d=1.0 / Ms).astype(int)
    d0 = complex(d[0])
    winding = d0 * 2 * np.pi / (2j * np.pi)
    nz = dfreq != 0
    dn, kn = d[nz], dfreq[nz]

    def p_circle(lam):
        lam = np.asarray(lam, dtype=complex)
        phi = np.mod(np.angle(lam) - theta_star, 2 * np.pi)
        osc = (np.exp(1j * phi[..., None] * kn) - 1) @ (dn / (1j * kn))
        return p_star + d0 * phi + osc

    def p_fn(lam):
        lam = np.asarray(lam, dtype=complex)
        mod = np.abs(lam)
        out = np.empty(lam.shape, dtype=complex)
        on_s1 = np.abs(mod - 1) < 1e-9
        inside = mod <= r * (1 + 1e-9)
        if np.any(~(on_s1 | inside)):
            raise ValueError("p is evaluated only on S^1 or inside C_r")
        out[on_s1] = p_circle(lam[on_s1])
        out[inside] = p_disk(lam[inside])
        return out

    # p at the branch points through the ray point (nu_r, lambda_r mu~(lambda_r))
    nu_r = lam_r ** 2
    mu_r = complex(lam_r * mu_tilde_disk(spec, lam_r))
    p_branch = []
    for v in spec.branch_points:
        ints = route_to_branch(spec, nu_r, mu_r, complex(v), omega.degrees)
        p_branch.append(complex(p_disk(lam_r)) + complex(np.dot(omega.coeffs, ints)))
    p_branch = np.array(p_branch)
    return PData(q=complex(q), r=r, N=N, f_plus=f_plus, series=series, p_fn=p_fn,
                 branch_constant=complex(-p_branch[0]), p_at_branch=p_branch,
                 beta_at_branch=np.sinh(p_branch), even_defect=even_defect,
                 principal=principal, residue=residue, winding=winding)


# ---------------------------------------------------------------- assembly
@dataclass
class ConstructedData:
    params: FamilyParams
    q: complex
    a2: RationalFn
    b2: RationalFn
    c2: RationalFn
    sd: SymmetryData
    hplus: LoopMatrix
    r_final: float
    N: int
    a2data: A2Data
    bc: BCData
    pdata: PData
    periods: PeriodReport
    omega1: SecondKindDifferential
    checks: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        enc = lambda z: [float(np.real(z)), float(np.imag(z))]
        return {"params": self.params.to_json_dict(), "q": enc(self.q), "r_final": self.r_final,
                "N": self.N, "epsilon": self.a2data.epsilon, "scale": self.a2data.scale,
                "delta": self.bc.delta, "K": self.bc.K,
                "a2": self.a2.to_json_dict(), "b2": self.b2.to_json_dict(), "c2": self.c2.to_json_dict(),
                "branch_constant": enc(self.pdata.branch_constant),
                "periods": self.periods.to_json_dict(),
                "checks": {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                           for k, v in self.checks.items()},
                "hplus": self.hplus.to_json_dict()}


def working_radius(spec: CurveSpec, factor: float = 0.7) -> float:
    return factor * spec.inner_radius


def truncation_for(r: float, R0: float, tol: float = 1e-15, minimum: int = 16) -> int:
    n = int(np.ceil(np.log(tol) / np.log(r / R0)))
    return max(minimum, n + n % 2)


class _CurveContext:
    """Curve-level objects shared by every q and f~ on the same curve."""

    def __init__(self, spec: CurveSpec):
        self.spec = spec
        self.hom = build_homology(spec)
        self.omega1 = build_omega1(spec, self.hom)
        self.omega2 = build_omega2(spec, self.hom)
        self.report = periods_U(spec, self.omega1, self.omega2, self.hom)


_CONTEXTS: dict = {}


def curve_context(spec: CurveSpec) -> _CurveContext:
    if spec not in _CONTEXTS:
        _CONTEXTS[spec] = _CurveContext(spec)
    return _CONTEXTS[spec]


def resolve_q(fp: FamilyParams, U) -> complex:
    if fp.q is not None:
        return complex(fp.q)
    m = fp.m if fp.m is not None else ((0,) if len(U) == 1 else tuple([1] + [0] * (len(U) - 1)))
    return solve_q(U, m, scale=fp.q_scale)


def build_abc(spec: CurveSpec, a2d: A2Data, bc: BCData):
    """Closed-form a, b, c as functions of lambda (disk branch inside, annulus branch on S^1)."""
    root_k = np.sqrt(a2d.k)
    d4 = bc.delta ** 0.25

    def abc(lam):
        lam = np.asarray(lam, dtype=complex)
        m = mu_tilde(spec, lam)
        nu = lam ** 2
        a = root_k * a2d.G(nu) * lam / m
        b = d4 * bc.R(nu) / m
        c = (1 - a * a) / b
        return a, b, c

    return abc


def assemble_family(fp: FamilyParams, r_factor: float = 0.7, N: int | None = None,
                    validate: bool = True) -> ConstructedData:
    """Run the full pipeline for one family member; h_plus does not depend on q."""
    spec = fp.curve
    ctx = curve_context(spec)
    U = ctx.report.U
    q = resolve_q(fp, U)
    a2d = build_a2(fp)
    bc = build_b2_c2(a2d.a2, spec)
    r = working_radius(spec, r_factor)
    N = N or truncation_for(r, spec.inner_radius)
    abc = build_abc(spec, a2d, bc)
    M = 1 << int(np.ceil(np.log2(4 * (N + 2))))
    lam = circle_points(M, r)
    av, bv, cv = abc(lam)
    a = ScalarLoop.from_samples(av, r, N, "odd", degree_range=(0, N))
    b = ScalarLoop.from_samples(bv, r, N, "even", degree_range=(0, N))
    c = ScalarLoop.from_samples(cv, r, N, "even", degree_range=(0, N))
    hplus = build_hplus(a, b, c)
    omega = build_omega_q(spec, q, ctx.omega1, ctx.omega2)
    pd = build_p_and_roots(spec, q, omega, r, N, U)
    sd = SymmetryData(q=q, r=r, N=N, a=a, b=b, c=c, f_plus=pd.f_plus, p_fn=pd.p_fn, abc_fn=abc,
                      a2=a2d.a2, b2=bc.b2, c2=bc.c2, hplus=hplus, label=f"genus {spec.genus}")
    out = ConstructedData(fp, q, a2d.a2, bc.b2, bc.c2, sd, hplus, r, N, a2d, bc, pd, ctx.report,
                          ctx.omega1)
    out.checks["conjugation_residual"] = conjugation_residual(hplus, a, b, c)
    out.checks["beta_at_branch_max"] = float(np.max(np.abs(pd.beta_at_branch)))
    out.checks["f_plus_even_defect"] = pd.even_defect
    out.checks["principal_part_error"] = float(abs(pd.principal - q))
    if validate:
        rep = validate_necessary(sd)
        out.checks["conditions"] = rep.to_json_dict()
    return out


def family_directions(fp: FamilyParams) -> list[FamilyParams]:
    """g real perturbation directions of (f~, nu0) that keep the data admissible."""
    g = fp.curve.genus
    m = (g - 1) // 2
    base = check_f_tilde(fp.f_tilde, g)
    out = []
    step = 0.05
    out.append(replace(fp, f_tilde={**base, 0: base.get(0, 0) + step}))
    for j in range(1, m + 1):
        for unit in (1.0, 1j):
            t = dict(base)
            t[j] = t.get(j, 0) + step * unit
            t[-j] = t.get(-j, 0) + step * np.conj(unit)
            out.append(replace(fp, f_tilde=t))
    if g % 2 == 0:
        out.append(replace(fp, nu0=complex(fp.nu0 * np.exp(0.1j))))
    return out


def to_json(data: ConstructedData) -> str:
    return json.dumps(data.to_json_dict(), sort_keys=True)
