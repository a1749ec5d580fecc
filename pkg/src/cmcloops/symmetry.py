"""Translational symmetries of dressed cylinders.

The data (a, b, c) with a^2 + bc = 1 fix h_plus via h_plus A h_plus^-1 = S =
[[a, b], [c, -a]]; together with p = q/lambda - lambda conj(q) + f_plus they
give the monodromy chi = cosh(p) I + sinh(p) S with F(z + q) = chi F(z).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .dpw import Dresser, FrameGrid
from .errors import (ConstraintViolation, FitIllConditioned, GridTooSmall, NonUnitary,
                     SqrtBranchFailure, TwistingViolation)
from .loops import A, IDENTITY, LoopMatrix, ScalarLoop, circle_points
from .rational import RationalFn

CONSTRAINT_TOL = 1e-10
VALIDATION_TOL = 1e-8


def _pow2(n: int) -> int:
    return 1 << int(np.ceil(np.log2(max(n, 2))))


@dataclass(frozen=True)
class SymmetryData:
    """Everything needed to build h_plus and chi for one translation q.

    ``abc_fn`` and ``p_fn`` evaluate a, b, c and p on the annulus containing
    S^1 (the same continuation of the curve branch for all four), while the
    ScalarLoops a, b, c, f_plus are the disk views on C_r.
    """

    q: complex
    r: float
    N: int
    a: ScalarLoop
    b: ScalarLoop
    c: ScalarLoop
    f_plus: ScalarLoop
    p_fn: Callable
    abc_fn: Callable
    a2: RationalFn | None = None
    b2: RationalFn | None = None
    c2: RationalFn | None = None
    hplus: LoopMatrix | None = None
    label: str = ""

    def p(self, lam) -> np.ndarray:
        return self.p_fn(np.asarray(lam, dtype=complex))

    def alpha(self, lam) -> np.ndarray:
        return np.cosh(self.p(lam))

    def beta(self, lam) -> np.ndarray:
        return np.sinh(self.p(lam))

    def S(self, lam) -> np.ndarray:
        a, b, c = self.abc_fn(np.asarray(lam, dtype=complex))
        return np.stack([np.stack([a, b], -1), np.stack([c, -a], -1)], -2)

    def with_b2_shift(self, eps: float) -> "SymmetryData":
        """Copy with b^2 replaced by b^2 + eps (a deliberately broken data set)."""
        def shifted(values, base):
            root = np.sqrt(values ** 2 + eps)
            return np.where(np.abs(root - base) <= np.abs(root + base), root, -root)

        M = _pow2(4 * (self.N + 1))
        lam = circle_points(M, self.r)
        bs = self.b(lam)
        b_new = ScalarLoop.from_samples(shifted(bs, bs), self.r, self.N, "even")

        def abc(lam, _f=self.abc_fn):
            a, b, c = _f(lam)
            return a, shifted(b, b), c

        b2 = None if self.b2 is None else self.b2 + eps
        return replace(self, b=b_new, b2=b2, abc_fn=abc, hplus=None, label=self.label + "+b2shift")


def cylinder_data(q: complex, r: float = 0.5, N: int = 32) -> SymmetryData:
    """Data of the undressed cylinder: a = 0, b = c = 1, f_plus = 0."""
    q = complex(q)
    zero = ScalarLoop(0, [0.0], r, N, "odd")
    one = ScalarLoop(0, [1.0], r, N, "even")

    def abc(lam):
        z = np.zeros(np.shape(lam), dtype=complex)
        return z, z + 1, z + 1

    return SymmetryData(q=q, r=r, N=N, a=zero, b=one, c=one, f_plus=ScalarLoop(1, [0.0], r, N, "odd"),
                        p_fn=lambda lam: q / lam - lam * np.conj(q), abc_fn=abc,
                        a2=RationalFn([0.0]), b2=RationalFn([1.0]), c2=RationalFn([1.0]),
                        hplus=None, label="cylinder")


# ------------------------------------------------------------------ h_plus
def sqrt_on_circle(values: np.ndarray, at_zero: complex) -> np.ndarray:
    """Continuous square root of samples around a closed circle.

    The branch matches the principal root of ``at_zero`` (the value of the
    function at the disk center). A net winding makes the root two-valued.
    """
    phase = np.unwrap(np.angle(values))
    winding = (phase[-1] + np.angle(values[0] / values[-1]) - phase[0]) / (2 * np.pi)
    if abs(winding) > 0.25:
        raise SqrtBranchFailure(f"function winds {winding:+.2f} times around the circle")
    root = np.sqrt(np.abs(values)) * np.exp(0.5j * phase)
    ref = np.sqrt(complex(at_zero))
    if abs(np.mean(root) - ref) > abs(np.mean(root) + ref):
        root = -root
    return root


def build_hplus(a: ScalarLoop, b: ScalarLoop, c: ScalarLoop, M: int | None = None) -> LoopMatrix:
    """h_plus = (1/sqrt c) [[1, a], [0, c]] on C_r."""
    r, N = a.r, a.N
    problems = []
    if a.parity != "odd" and any(a.coeff(n) for n in a.degrees if n % 2 == 0):
        problems.append("a is not odd")
    for name, f in (("b", b), ("c", c)):
        if f.parity != "even" and any(f.coeff(n) for n in f.degrees if n % 2):
            problems.append(f"{name} is not even")
    M = M or _pow2(4 * (N + 1))
    lam = circle_points(M, r)
    av, bv, cv = a(lam), b(lam), c(lam)
    resid = float(np.max(np.abs(av * av + bv * cv - 1)))
    if resid > CONSTRAINT_TOL:
        problems.append(f"a^2 + bc = 1 violated by {resid:.2e}")
    if abs(b.coeff(0)) < 1e-14:
        problems.append("b(0) = 0")
    for name, f in (("a", a), ("b", b), ("c", c)):
        if any(f.coeff(n) for n in f.degrees if n < 0):
            problems.append(f"{name} has negative powers of lambda")
    if problems:
        raise ConstraintViolation("; ".join(problems))
    root = sqrt_on_circle(cv, c.coeff(0))
    values = np.empty((M, 2, 2), dtype=complex)
    values[:, 0, 0] = 1 / root
    values[:, 0, 1] = av / root
    values[:, 1, 0] = 0
    values[:, 1, 1] = root
    modes = np.fft.fft(values, axis=0) / M
    freq = np.fft.fftfreq(M, d=1.0 / M).astype(int)
    neg = np.max(np.abs(modes[freq < 0])) / np.max(np.abs(modes))
    if neg > 1e-10:
        raise SqrtBranchFailure(f"sqrt(c) has negative Fourier modes of relative size {neg:.2e}")
    try:
        return LoopMatrix.from_samples(values, r, N, twisted=True, degree_range=(0, N))
    except TwistingViolation as exc:
        raise ConstraintViolation(f"h_plus not twisted: {exc}") from exc


def conjugation_residual(hplus: LoopMatrix, a, b, c, M: int = 64) -> float:
    """max |h A h^-1 - [[a, b], [c, -a]]| over M points of C_r."""
    lam = circle_points(M, hplus.r)
    h = hplus(lam)
    hinv = np.linalg.inv(h)
    S = h @ A @ hinv
    av, bv, cv = a(lam), b(lam), c(lam)
    target = np.stack([np.stack([av, bv], -1), np.stack([cv, -av], -1)], -2)
    return float(np.max(np.abs(S - target)))


# -------------------------------------------------------------------- chi
@dataclass
class ChiMatrix:
    q: complex
    data: SymmetryData
    coeffs: LoopMatrix             # Fourier data on S^1
    unitarity: float
    tail_low: float
    tail_high: float

    def __call__(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex)
        al, be = self.data.alpha(lam), self.data.beta(lam)
        return al[..., None, None] * IDENTITY + be[..., None, None] * self.data.S(lam)

    def inverse(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex)
        al, be = self.data.alpha(lam), self.data.beta(lam)
        return al[..., None, None] * IDENTITY - be[..., None, None] * self.data.S(lam)


def build_chi(sd: SymmetryData, M: int = 256, tol: float = VALIDATION_TOL) -> ChiMatrix:
    lam = circle_points(M)
    al, be = sd.alpha(lam), sd.beta(lam)
    chi = al[:, None, None] * IDENTITY + be[:, None, None] * sd.S(lam)
    defect = np.linalg.norm(np.conj(np.swapaxes(chi, -1, -2)) @ chi - IDENTITY, ord=2, axis=(-2, -1))
    worst = float(np.max(defect))
    if worst > tol:
        reasons = []
        if np.max(np.abs(al.imag)) > tol:
            reasons.append("b': alpha not real on S^1")
        b2 = be * be
        if np.max(np.abs(b2.imag)) > tol:
            reasons.append("b': beta^2 not real on S^1")
        if np.max(b2.real) > tol:
            reasons.append("c': beta^2 positive on S^1")
        if not reasons:
            reasons.append("d': beta a, beta b, beta c not skew under the star")
        raise NonUnitary(f"chi not unitary on S^1 (defect {worst:.2e}): " + "; ".join(reasons))
    modes = np.fft.fft(chi, axis=0) / M
    freq = np.fft.fftfreq(M, d=1.0 / M).astype(int)
    half = M // 2 - 1
    data = np.zeros((2 * half + 1, 2, 2), dtype=complex)
    keep = np.abs(freq) <= half
    data[freq[keep] + half] = modes[keep]
    scale = np.max(np.abs(modes))
    band = M // 8
    tail_low = float(np.max(np.abs(modes[(freq < 0) & (freq <= -half + band)])) / scale)
    tail_high = float(np.max(np.abs(modes[(freq > 0) & (freq >= half - band)])) / scale)
    coeffs = LoopMatrix(-half, data, 1.0, half, False)
    return ChiMatrix(sd.q, sd, coeffs, worst, tail_low, tail_high)


# ----------------------------------------------------------- conditions
@dataclass
class ConditionReport:
    conditions: dict = field(default_factory=dict)      # name -> (passed, residual)
    flags: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.conditions.values())

    def failing(self) -> list[str]:
        return [k for k, (ok, _) in self.conditions.items() if not ok]

    def to_json_dict(self) -> dict:
        return {"passed": self.passed,
                "conditions": {k: {"passed": bool(ok), "residual": float(res)}
                               for k, (ok, res) in self.conditions.items()},
                "flags": {k: bool(v) for k, v in self.flags.items()}}


def _tail(values: np.ndarray, fraction: int = 8) -> float:
    """Relative size of the outermost Fourier modes of samples on S^1, both directions."""
    M = values.shape[0]
    modes = np.fft.fft(values, axis=0) / M
    scale = max(float(np.max(np.abs(modes))), 1e-300)
    freq = np.fft.fftfreq(M, d=1.0 / M).astype(int)
    outer = np.abs(freq) >= M // 2 - M // fraction
    return float(np.max(np.abs(modes[outer])) / scale)


def _parity_defect(f: ScalarLoop, parity: str) -> float:
    deg = f.degrees
    bad = (deg % 2 == 1) if parity == "even" else (deg % 2 == 0)
    w = np.abs(f.data) * f.r ** deg.astype(float)
    return float(np.max(w[bad], initial=0.0) / max(np.max(w, initial=0.0), 1e-300))


def validate_necessary(sd: SymmetryData, M: int = 512, tol: float = VALIDATION_TOL) -> ConditionReport:
    """Residuals of conditions a)-e) and a')-d') for the data set."""
    rep = ConditionReport()
    lam = circle_points(M)
    nu = lam ** 2
    a_s, b_s, c_s = sd.abc_fn(lam)
    a2 = sd.a2(nu) if sd.a2 is not None else a_s ** 2
    b2 = sd.b2(nu) if sd.b2 is not None else b_s ** 2
    c2 = sd.c2(nu) if sd.c2 is not None else c_s ** 2

    res_a = max(float(np.max(np.abs(a2.imag))), float(np.max(-a2.real, initial=0)),
                float(np.max(a2.real - 1, initial=0)))
    rep.conditions["a"] = (res_a <= tol, res_a)

    b2_star = np.conj(sd.b2(1 / np.conj(nu))) if sd.b2 is not None else np.conj(b2)
    res_b = float(np.max(np.abs(c2 - b2_star)))
    rep.conditions["b"] = (res_b <= tol, res_b)

    lam_r = circle_points(128, sd.r)
    nu_r = lam_r ** 2
    res_c = 0.0
    for loop, rat in ((sd.a, sd.a2), (sd.b, sd.b2), (sd.c, sd.c2)):
        if rat is not None:
            res_c = max(res_c, float(np.max(np.abs(loop(lam_r) ** 2 - rat(nu_r)))))
    rep.conditions["c"] = (res_c <= tol, res_c)

    res_d = max(_parity_defect(sd.a, "odd"), _parity_defect(sd.b, "even"), _parity_defect(sd.c, "even"))
    rep.conditions["d"] = (res_d <= tol, res_d)

    # e) in squared form on S^1 and C_r (no square-root choice), plus a^2 + bc = 1 on C_r
    res_e_sq = float(np.max(np.abs(b2 * c2 - (1 - a2) ** 2)))
    if sd.a2 is not None and sd.b2 is not None and sd.c2 is not None:
        res_e_sq = max(res_e_sq, float(np.max(np.abs(sd.b2(nu_r) * sd.c2(nu_r) - (1 - sd.a2(nu_r)) ** 2))))
    res_e_lin = float(np.max(np.abs(sd.a(lam_r) ** 2 + sd.b(lam_r) * sd.c(lam_r) - 1)))
    rep.conditions["e"] = (max(res_e_sq, res_e_lin) <= tol, max(res_e_sq, res_e_lin))
    rep.flags["e_linear_residual_small"] = res_e_lin <= tol

    p = sd.p(lam)
    al, be = np.cosh(p), np.sinh(p)
    be2 = be * be
    res_a1 = max(_tail(al), _tail(be2))
    rep.conditions["a'"] = (res_a1 <= tol, res_a1)
    res_b1 = max(float(np.max(np.abs(al.imag))), float(np.max(np.abs(be2.imag))))
    rep.conditions["b'"] = (res_b1 <= tol, res_b1)
    res_c1 = float(np.max(be2.real, initial=0.0))
    rep.conditions["c'"] = (res_c1 <= tol, res_c1)
    res_d1 = max(_tail(be * a_s), _tail(be * b_s), _tail(be * c_s))
    rep.conditions["d'"] = (res_d1 <= tol, res_d1)
    rep.flags["beta_a_identically_zero"] = bool(np.max(np.abs(be * a_s)) < 1e-14)
    return rep


# ------------------------------------------------------------ translation
@dataclass
class TranslationCheck:
    residual: float
    snap_error: float
    pairs: int
    lam: np.ndarray
    worst_z: complex

    def to_json_dict(self) -> dict:
        return {"residual": float(self.residual), "snap_error": float(self.snap_error),
                "pairs": int(self.pairs), "lambda_samples": int(len(self.lam)),
                "worst_z": [float(self.worst_z.real), float(self.worst_z.imag)]}


def _subgrid(n: int, k: int) -> np.ndarray:
    return np.unique(np.linspace(0, n - 1, min(n, k)).round().astype(int))


def verify_translation(fg: FrameGrid, q: complex, chi: ChiMatrix, lam=None,
                       subgrid: int = 16, dresser: Dresser | None = None,
                       shifted: FrameGrid | None = None) -> TranslationCheck:
    """max over z in a subgrid and lambda on S^1 of |F(z + q) - chi F(z)|.

    ``shifted``, when given, holds frames already dressed on ``fg.grid + q``.
    """
    q = complex(q)
    lam = circle_points(16) * np.exp(0.1j) if lam is None else np.asarray(lam, dtype=complex)
    ny, nx = fg.shape
    if min(ny, nx) < 2:
        raise GridTooSmall("frame grid needs at least 2x2 samples")
    chi_v = chi(lam)
    zs = fg.grid.z
    kx, ky = q.real / fg.grid.hx, q.imag / fg.grid.hy
    on_lattice = abs(kx - round(kx)) < 1e-12 and abs(ky - round(ky)) < 1e-12
    jj, ii = _subgrid(ny, subgrid), _subgrid(nx, subgrid)
    powers = lam[:, None] ** np.arange(-fg.N, fg.N + 1)
    worst, worst_z, pairs = 0.0, 0j, 0
    if on_lattice:
        dx, dy = int(round(kx)), int(round(ky))
        targets = [(j, i) for j in range(ny) for i in range(nx)
                   if 0 <= j + dy < ny and 0 <= i + dx < nx]
        if not targets:
            raise GridTooSmall(f"no lattice pair (z, z + q) for q = {q}")
        pick = [targets[k] for k in _subgrid(len(targets), subgrid * subgrid)]
        for j, i in pick:
            F = np.einsum("ln,nij->lij", powers, fg.coeffs[j, i])
            Fq = np.einsum("ln,nij->lij", powers, fg.coeffs[j + dy, i + dx])
            err = float(np.max(np.linalg.norm(Fq - chi_v @ F, ord=2, axis=(-2, -1))))
            pairs += 1
            if err > worst:
                worst, worst_z = err, complex(zs[j, i])
        return TranslationCheck(worst, 0.0, pairs, lam, worst_z)
    pts = [(j, i) for j in jj for i in ii]
    if shifted is not None:
        if shifted.shape != fg.shape:
            raise GridTooSmall("shifted frame grid must match the base grid")
        moved = [shifted.coeffs[j, i] for j, i in pts]
    else:
        dresser = dresser or Dresser(fg.seed, fg.r, fg.N)
        from ._parallel import pmap
        moved = pmap(lambda ji: dresser.split(complex(zs[ji]) + q)[0], pts)
    for (j, i), coef in zip(pts, moved):
        F = np.einsum("ln,nij->lij", powers, fg.coeffs[j, i])
        Fq = np.einsum("ln,nij->lij", powers, coef)
        err = float(np.max(np.linalg.norm(Fq - chi_v @ F, ord=2, axis=(-2, -1))))
        pairs += 1
        if err > worst:
            worst, worst_z = err, complex(zs[j, i])
    return TranslationCheck(worst, 0.0, pairs, lam, worst_z)


# ---------------------------------------------------------------- closing
ARC_HALF_WIDTH = 0.05
ARC_SAMPLES = 13
FIT_DEGREE = 6
ORDER_TOL = 1e-7


@dataclass
class ClosingResult:
    classification: str          # not_closed, chi_is_pm_I, fully_closed
    order: int
    coefficients: np.ndarray     # fit coefficients in t = (theta - theta0) / half_width
    scale: float
    residuals: np.ndarray        # fit residual with the first k coefficients forced to zero

    def to_json_dict(self) -> dict:
        return {"classification": self.classification, "order": int(self.order),
                "scale": float(self.scale),
                "coefficients": [[float(c.real), float(c.imag)] for c in self.coefficients]}


def arc_offsets(n: int = ARC_SAMPLES, half_width: float = ARC_HALF_WIDTH) -> np.ndarray:
    return np.linspace(-half_width, half_width, n)


def closing_test(beta2, lam0: complex, half_width: float = ARC_HALF_WIDTH,
                 n: int = ARC_SAMPLES, degree: int = FIT_DEGREE, tol: float = ORDER_TOL) -> ClosingResult:
    """Order of vanishing of beta^2 at lambda0 in S^1 from a polynomial fit in theta.

    ``beta2`` is a callable of lambda or an array of samples at
    lambda0 * exp(i * arc_offsets()). A candidate order k is accepted when
    forcing the first k fit coefficients to zero leaves the residual at the
    level of the unconstrained fit (or below tol * scale).
    """
    lam0 = complex(lam0)
    dtheta = arc_offsets(n, half_width)
    if callable(beta2):
        values = np.asarray(beta2(lam0 * np.exp(1j * dtheta)), dtype=complex)
    else:
        values = np.asarray(beta2, dtype=complex)
        if values.shape != (n,):
            raise FitIllConditioned(f"expected {n} samples, got {values.shape}")
    t = dtheta / half_width
    V = np.vander(t, degree + 1, increasing=True)
    cond = np.linalg.cond(V)
    if cond > 1e8:
        raise FitIllConditioned(f"Vandermonde condition {cond:.2e}")
    scale = float(np.max(np.abs(values)))
    if scale == 0 or not np.isfinite(scale):
        raise FitIllConditioned("beta^2 vanishes identically on the arc; zero is not isolated")
    coef, *_ = np.linalg.lstsq(V, values, rcond=None)
    full = float(np.linalg.norm(V @ coef - values))
    residuals = np.empty(degree + 1)
    order = 0
    for k in range(degree + 1):
        ck, *_ = np.linalg.lstsq(V[:, k:], values, rcond=None)
        residuals[k] = np.linalg.norm(V[:, k:] @ ck - values)
    floor = max(10 * full, tol * scale * np.sqrt(n))
    while order < degree and residuals[order + 1] <= floor:
        order += 1
    if order >= degree:
        raise FitIllConditioned("all fitted coefficients vanish; zero is not isolated")
    if order == 0:
        kind = "not_closed"
    elif order < 4:
        kind = "chi_is_pm_I"
    else:
        kind = "fully_closed"
    return ClosingResult(kind, order, coef, scale, residuals)
