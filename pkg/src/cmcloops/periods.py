"""Second-kind differentials on the spectral curve, their periods, and the period conditions.

A differential is stored as coefficients c_k, k = -1..g, of
(sum c_k nu^k) dnu / mu. In the cover coordinate nu = lambda^2 with
mu = lambda mu_tilde this reads 2 (sum c_k lambda^{2k}) / mu_tilde dlambda.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .curve import (CurveSpec, Homology, build_homology, cycle_integrals, loop_basis_integrals,
                    mu_tilde_disk, segment_integrals)
from .errors import (BranchTooClose, Inconsistent, ModulusOutOfRange, PathBlocked,
                     SingularPeriodSystem)

INTEGER_TOL = 1e-4
ZERO_TOL = 1e-6
SYM_TOL = 1e-6


@dataclass(frozen=True)
class SecondKindDifferential:
    coeffs: np.ndarray          # index j holds the coefficient of nu^(j-1)
    curve: CurveSpec
    label: str = ""

    @property
    def degrees(self) -> range:
        return range(-1, self.curve.genus + 1)

    def coeff(self, k: int) -> complex:
        return complex(self.coeffs[k + 1])

    def numerator(self, nu) -> np.ndarray:
        nu = np.asarray(nu, dtype=complex)
        return sum(c * nu ** k for k, c in zip(self.degrees, self.coeffs))

    def density(self, nu, mu) -> np.ndarray:
        """Value of the differential divided by dnu at (nu, mu)."""
        return self.numerator(nu) / np.asarray(mu, dtype=complex)

    def lambda_density(self, lam, mu_tilde) -> np.ndarray:
        """Value divided by dlambda in the cover coordinate."""
        lam = np.asarray(lam, dtype=complex)
        return 2 * self.numerator(lam ** 2) / np.asarray(mu_tilde, dtype=complex)

    def integrate(self, combo, hom_tol: float = 1e-14) -> complex:
        return complex(np.dot(self.coeffs, cycle_integrals(self.curve, combo, self.degrees, hom_tol)))

    def __add__(self, other: "SecondKindDifferential") -> "SecondKindDifferential":
        return SecondKindDifferential(self.coeffs + other.coeffs, self.curve, "")

    def __rmul__(self, z: complex) -> "SecondKindDifferential":
        return SecondKindDifferential(complex(z) * self.coeffs, self.curve, self.label)

    def sigma_conjugate(self) -> "SecondKindDifferential":
        """Coefficients of conj(sigma_hat^* self)."""
        g = self.curve.genus
        s = self.curve.s
        out = np.zeros_like(self.coeffs)
        for j in range(-1, g + 1):
            out[j + 1] = -np.conj(self.coeff(g - 1 - j)) / np.conj(s)
        return SecondKindDifferential(out, self.curve, f"sigma({self.label})")

    def to_json_dict(self) -> dict:
        return {"label": self.label,
                "coeffs": {str(k): [float(c.real), float(c.imag)] for k, c in zip(self.degrees, self.coeffs)}}


def _a_period_matrix(spec: CurveSpec, hom: Homology) -> np.ndarray:
    """Row k: integrals of nu^j dnu / mu over a_k for j = -1..g."""
    degrees = range(-1, spec.genus + 1)
    return np.array([loop_basis_integrals(spec, ell, degrees) for ell in hom.a_loops])


def _normalized(spec: CurveSpec, hom: Homology, fixed: dict, label: str) -> SecondKindDifferential:
    g = spec.genus
    P = _a_period_matrix(spec, hom)
    coeffs = np.zeros(g + 2, dtype=complex)
    for k, v in fixed.items():
        coeffs[k + 1] = v
    free = [k for k in range(0, g)]
    M = P[:, [k + 1 for k in free]]
    rhs = -P @ coeffs
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularPeriodSystem(f"a-period system has condition number {cond:.3e}")
    coeffs[[k + 1 for k in free]] = np.linalg.solve(M, rhs)
    return SecondKindDifferential(coeffs, spec, label)


def build_omega1(spec: CurveSpec, hom: Homology | None = None) -> SecondKindDifferential:
    """Normalized differential with its double pole over nu = infinity (c_g = 1/2, c_{-1} = 0)."""
    hom = hom or build_homology(spec)
    return _normalized(spec, hom, {spec.genus: 0.5, -1: 0.0}, "Omega1")


def build_omega2(spec: CurveSpec, hom: Homology | None = None) -> SecondKindDifferential:
    """Normalized differential with principal part -lambda^-2 dlambda over nu = 0."""
    hom = hom or build_homology(spec)
    return _normalized(spec, hom, {-1: -spec.s / 2, spec.genus: 0.0}, "Omega2")


def build_omega_q(spec: CurveSpec, q: complex, omega1: SecondKindDifferential,
                  omega2: SecondKindDifferential | None = None) -> SecondKindDifferential:
    """omega = -conj(q) Omega1 + q Omega2, with Omega2 = conj(sigma_hat^* Omega1) unless given."""
    omega2 = omega2 if omega2 is not None else omega1.sigma_conjugate()
    w = -np.conj(q) * omega1.coeffs + q * omega2.coeffs
    return SecondKindDifferential(w, spec, "omega_q")


def principal_part_at_zero(omega: SecondKindDifferential, radius: float | None = None,
                           M: int = 64) -> complex:
    """Coefficient of lambda^-2 dlambda, fitted from samples on a small circle."""
    spec = omega.curve
    radius = radius or 0.5 * spec.inner_radius
    lam = radius * np.exp(2j * np.pi * np.arange(M) / M)
    vals = omega.lambda_density(lam, mu_tilde_disk(spec, lam))
    # coefficient of lambda^n is mean(vals * lam^-n)
    return complex(np.mean(vals * lam ** 2))


def residue_at_zero(omega: SecondKindDifferential, M: int = 64) -> complex:
    spec = omega.curve
    lam = 0.5 * spec.inner_radius * np.exp(2j * np.pi * np.arange(M) / M)
    return complex(np.mean(omega.lambda_density(lam, mu_tilde_disk(spec, lam)) * lam))


# ------------------------------------------------------------------ periods
@dataclass
class PeriodReport:
    U: np.ndarray
    V: np.ndarray
    a_periods: np.ndarray
    stability: float
    conj_residual: float
    q_candidates: list = field(default_factory=list)
    torus_matrix: np.ndarray | None = None
    delaunay_phi: float | None = None

    def to_json_dict(self) -> dict:
        enc = lambda z: [float(np.real(z)), float(np.imag(z))]
        out = {"U": [enc(u) for u in self.U], "V": [enc(v) for v in self.V],
               "a_periods_max": float(np.max(np.abs(self.a_periods))),
               "refinement_change": float(self.stability),
               "V_minus_conj_U": float(self.conj_residual),
               "q_candidates": [{"q": enc(q), "m": [int(x) for x in m]} for q, m in self.q_candidates],
               "delaunay_phi": self.delaunay_phi}
        if self.torus_matrix is not None:
            out["torus_matrix"] = np.asarray(self.torus_matrix).tolist()
        return out


def periods_U(spec: CurveSpec, omega1: SecondKindDifferential,
              omega2: SecondKindDifferential | None = None,
              hom: Homology | None = None) -> PeriodReport:
    """U_k and V_k over the b-cycles; V is integrated from its own coefficients."""
    hom = hom or build_homology(spec)
    g = spec.genus
    omega2 = omega2 if omega2 is not None else build_omega2(spec, hom)
    degrees = range(-1, g + 1)
    U = np.empty(g, dtype=complex)
    V = np.empty(g, dtype=complex)
    U_fine = np.empty(g, dtype=complex)
    for k in range(g):
        base = cycle_integrals(spec, hom.b_cycle(k), degrees)
        U[k] = np.dot(omega1.coeffs, base)
        V[k] = np.dot(omega2.coeffs, base)
        fine = sum(coef * _fixed_rule(spec, ell, degrees) for coef, ell in hom.b_cycle(k))
        U_fine[k] = np.dot(omega1.coeffs, fine)
    a_per = np.array([[omega1.integrate(hom.a_cycle(k)), omega2.integrate(hom.a_cycle(k))]
                      for k in range(g)])
    return PeriodReport(U=U, V=V, a_periods=a_per,
                        stability=float(np.max(np.abs(U - U_fine))),
                        conj_residual=float(np.max(np.abs(V - np.conj(U)))))


def _fixed_rule(spec, ell, degrees, M: int = 1 << 14) -> np.ndarray:
    """Trapezoid rule at a fixed large node count, for the refinement comparison."""
    from .curve import loop_mu
    nu, dnu, mu = loop_mu(spec, ell, M)
    degrees = np.asarray(list(degrees))
    return ((nu[None, :] ** degrees[:, None]) * (dnu / mu)[None, :]).sum(axis=1) * (2 * np.pi / M)


@dataclass(frozen=True)
class SymCondition:
    m: tuple
    deviation: float
    passed: bool


def check_sym_condition(U, q: complex, tol: float = SYM_TOL) -> SymCondition:
    """Im(q conj(U_k)) / pi rounded to integers; passes when every deviation is below ``tol``."""
    x = np.imag(q * np.conj(np.asarray(U))) / np.pi
    m = np.rint(x)
    dev = float(np.max(np.abs(x - m))) if x.size else 0.0
    return SymCondition(tuple(int(v) for v in m), dev, dev < tol)


def solve_q(U, m, scale: float = 1.0, tol: float = 1e-8) -> complex:
    """q with Im(q conj(U_k)) = pi m_k.

    The real system has two unknowns. With one equation and m = 0 the
    solution is the line through U; ``scale`` picks |q| on that line.
    """
    U = np.asarray(U, dtype=complex)
    m = np.asarray(m, dtype=float)
    # q = x + iy: Im(q conj U) = y Re U - x Im U
    A = np.column_stack([-U.imag, U.real])
    rhs = np.pi * m
    if len(U) == 1:
        u = U[0]
        return complex((scale + 1j * np.pi * m[0]) * u / abs(u) ** 2) if m[0] else complex(scale * u / abs(u))
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    q = complex(sol[0], sol[1])
    if np.max(np.abs(A @ sol - rhs)) > tol * max(1.0, np.max(np.abs(rhs))):
        raise Inconsistent(f"no q satisfies the period conditions for m = {m.astype(int).tolist()}")
    return q


@dataclass
class TransportReport:
    a_mismatch: np.ndarray
    b_mismatch: np.ndarray
    b_periods: np.ndarray        # integrals of omega over the b-cycles

    @property
    def worst(self) -> float:
        return float(max(np.max(self.a_mismatch, initial=0.0), np.max(self.b_mismatch, initial=0.0)))

    def to_json_dict(self) -> dict:
        return {"a_mismatch": [float(x) for x in self.a_mismatch],
                "b_mismatch": [float(x) for x in self.b_mismatch],
                "b_periods": [[float(z.real), float(z.imag)] for z in self.b_periods],
                "worst": self.worst}


def transport_mismatch(omega: SecondKindDifferential, hom: Homology | None = None,
                       p0: complex = 0.3 + 0.2j) -> TransportReport:
    """Change of (cosh p, sinh p) when p = p0 + integral of omega runs once around each cycle."""
    spec = omega.curve
    hom = hom or build_homology(spec)
    g = spec.genus

    def jump(delta):
        return max(abs(np.cosh(p0 + delta) - np.cosh(p0)), abs(np.sinh(p0 + delta) - np.sinh(p0)))

    a_per = np.array([omega.integrate(hom.a_cycle(k)) for k in range(g)])
    b_per = np.array([omega.integrate(hom.b_cycle(k)) for k in range(g)])
    return TransportReport(np.array([jump(d) for d in a_per]), np.array([jump(d) for d in b_per]), b_per)


# ------------------------------------------------------------------- torus
@dataclass
class TorusVerdict:
    verdict: str                 # "torus", "no-torus" or "inconclusive"
    matrix: np.ndarray
    integer_deviation: float
    omega_at_p1: float
    lambda0: complex
    c12: complex

    def to_json_dict(self) -> dict:
        return {"verdict": self.verdict, "matrix": np.asarray(self.matrix).tolist(),
                "integer_deviation": float(self.integer_deviation),
                "omega1_at_P1": float(self.omega_at_p1),
                "lambda0": [float(self.lambda0.real), float(self.lambda0.imag)],
                "c1": float(self.c12.real), "c2": float(self.c12.imag)}


def best_lambda0(omega1: SecondKindDifferential) -> complex:
    """Point of S^1 where |Omega1| is smallest (the only place a zero could sit)."""
    theta = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
    lam = np.exp(1j * theta)
    mag = np.abs(omega1.numerator(lam ** 2))
    return complex(lam[int(np.argmin(mag))])


def torus_matrix(q1: complex, q2: complex, U, c12: complex) -> np.ndarray:
    rows = []
    for q in (q1, q2):
        Y, X = 2 * q.real, 2 * q.imag
        rows.append([X, Y])
    left = np.array(rows)
    U = np.asarray(U, dtype=complex)
    right = np.vstack([np.concatenate([[2 * c12.real], U.real]),
                       np.concatenate([[-2 * c12.imag], -U.imag])])
    return left @ right / (2 * np.pi)


def half_gamma_integral(omega1: SecondKindDifferential, lambda0: complex) -> complex:
    """(1/2) of Omega1 over a path P1 -> branch point -> P2 above nu = lambda0^2."""
    spec = omega1.curve
    nu0 = complex(lambda0) ** 2
    start_mu = _p1_mu(spec, lambda0)
    candidates = sorted(spec.branch_points, key=lambda b: abs(b - nu0))
    for b in candidates:
        try:
            vals = segment_integrals(spec, nu0, complex(b), start_mu, omega1.degrees, end_is_branch=True)
        except BranchTooClose:
            continue
        # the return leg on the other sheet contributes the same amount
        return complex(np.dot(omega1.coeffs, vals))
    raise PathBlocked(f"no straight path from nu = {nu0} to a branch point avoids the others")


def _p1_mu(spec: CurveSpec, lambda0: complex) -> complex:
    """mu at P1(lambda0): lambda0 times the annulus branch of mu_tilde."""
    from .curve import mu_tilde_annulus
    return complex(lambda0 * mu_tilde_annulus(spec, lambda0))


def check_torus(omega1: SecondKindDifferential, q1: complex, q2: complex, U,
                lambda0: complex | None = None, integer_tol: float = INTEGER_TOL,
                zero_tol: float = ZERO_TOL) -> TorusVerdict:
    if abs(np.imag(q1 * np.conj(q2))) < 1e-12 * max(abs(q1) * abs(q2), 1e-300):
        raise Inconsistent("q1 and q2 must be independent over the reals")
    spec = omega1.curve
    lambda0 = best_lambda0(omega1) if lambda0 is None else complex(lambda0)
    c12 = half_gamma_integral(omega1, lambda0)
    mat = torus_matrix(q1, q2, U, c12)
    dev = float(np.max(np.abs(mat - np.rint(mat))))
    mu = _p1_mu(spec, lambda0)
    # size of Omega1 / dlambda at P1, relative to the leading coefficient 1/2
    omega_mag = float(abs(omega1.lambda_density(lambda0, mu / lambda0)))
    ok_int, ok_zero = dev < integer_tol, omega_mag < zero_tol
    if ok_int and ok_zero:
        verdict = "torus"
    elif (ok_int or dev < 10 * integer_tol) and (ok_zero or omega_mag < 10 * zero_tol):
        verdict = "inconclusive"
    else:
        verdict = "no-torus"
    return TorusVerdict(verdict, mat, dev, omega_mag, lambda0, c12)


def delaunay_phi(U, tol: float = 1e-8) -> float | None:
    """Common direction e^{i phi} of all U_k, phi in [0, pi), or None."""
    U = np.asarray(U, dtype=complex)
    if U.size == 0 or np.max(np.abs(U)) == 0:
        return 0.0
    scale = float(np.max(np.abs(U)))
    cross = np.imag(U[:, None] * np.conj(U[None, :])) / scale ** 2
    if np.max(np.abs(cross)) > tol:
        return None
    lead = U[int(np.argmax(np.abs(U)))]
    phi = float(np.mod(np.angle(lead), np.pi))
    return 0.0 if abs(phi - np.pi) < 1e-15 else phi


# ---------------------------------------------------------- elliptic integrals
def elliptic_KE(k: float) -> tuple[float, float]:
    """Complete elliptic integrals K(k), E(k) for modulus 0 <= k < 1 via the AGM."""
    k = float(k)
    if not (0.0 <= k < 1.0):
        raise ModulusOutOfRange(f"modulus {k} outside [0, 1)")
    a, b = 1.0, np.sqrt((1.0 - k) * (1.0 + k))
    c = k
    total = 0.5 * c * c
    power = 0.5
    for _ in range(64):
        if abs(c) < 1e-17 * a:
            break
        a, b, c = 0.5 * (a + b), np.sqrt(a * b), 0.5 * (a - b)
        power *= 2
        total += power * c * c
    K = np.pi / (2 * a)
    return float(K), float(K * (1.0 - total))


def genus1_coefficient(r: float, phi: float = 0.0) -> complex:
    """c_0 of Omega1 for the curve with inner branch point r e^{i phi}."""
    kp = np.sqrt((1 - r) * (1 + r))
    K, E = elliptic_KE(kp)
    return complex(-np.exp(1j * phi) / (2 * r) * E / K)


def genus1_ratio(r: float) -> float:
    """E(k') / (r K(k')), k' = sqrt(1 - r^2); exceeds 1 for 0 < r < 1."""
    K, E = elliptic_KE(np.sqrt((1 - r) * (1 + r)))
    return float(E / (r * K))


def report_json(report: PeriodReport) -> str:
    return json.dumps(report.to_json_dict(), sort_keys=True)
