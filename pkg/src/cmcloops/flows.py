"""Higher flows on the dressing orbit of the cylinder and the finite-type certificate.

A generator is zeta = phi_hat(lambda) A with phi_hat odd and meromorphic on
the disk, its only pole at lambda = 0. The flow acts on the seed by

    h_plus # (t zeta) = U^{-1} h_plus exp(t zeta),

U the unitary Iwasawa factor, and on frames by dressing with the new seed.
A flow is trivial on F when F(z, t) = U0(t) F(z) U0(t)^{-1} with U0 constant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .curve import CurveSpec, mu_tilde
from .dpw import DEFAULT_H, Dresser, FrameGrid, ZGrid, metric_from_plus
from .errors import CorrectionPolynomialNotFound, InputError
from .factor import TwoCircleSolver
from .loops import A, IDENTITY, LoopMatrix, ScalarLoop, circle_points
from .rational import RationalFn
from .symmetry import SymmetryData

TRIVIAL_TOL = 1e-6
POLE_CLUSTER = 1e-7
FLOW_SIZE = 0.5               # max |t phi_hat| on C_r used by the certificate


@dataclass(frozen=True)
class FlowGenerator:
    """zeta = phi_hat A; ``fn`` evaluates phi_hat exactly when the series is only a view."""

    phi_hat: ScalarLoop
    pole_order: int
    fn: Callable | None = field(default=None, compare=False, repr=False)
    label: str = ""

    def __post_init__(self):
        if self.phi_hat.parity != "odd":
            raise InputError("flow generators must be odd in lambda")

    def __call__(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex)
        return self.fn(lam) if self.fn is not None else self.phi_hat(lam)

    def scaled(self, t: float) -> "FlowGenerator":
        f = self.fn
        return FlowGenerator(ScalarLoop(self.phi_hat.lo, t * self.phi_hat.data, self.phi_hat.r,
                                        self.phi_hat.N, "odd"),
                             self.pole_order, None if f is None else (lambda lam: t * f(lam)),
                             self.label)

    def __add__(self, other: "FlowGenerator") -> "FlowGenerator":
        lo = min(self.phi_hat.lo, other.phi_hat.lo)
        hi = max(self.phi_hat.hi, other.phi_hat.hi)
        data = np.array([self.phi_hat.coeff(n) + other.phi_hat.coeff(n) for n in range(lo, hi + 1)])
        f, g = self, other
        return FlowGenerator(ScalarLoop(lo, data, self.phi_hat.r, self.phi_hat.N, "odd"),
                             max(self.pole_order, other.pole_order),
                             lambda lam: f(lam) + g(lam), "")

    def sup_on(self, r: float, M: int = 512) -> float:
        return float(np.max(np.abs(self(circle_points(M, r)))))


def laurent_generator(coeffs: dict[int, complex], r: float, N: int) -> FlowGenerator:
    """Generator with phi_hat = sum c_n lambda^n (odd n only)."""
    if any(n % 2 == 0 for n in coeffs):
        raise InputError("phi_hat must be odd: only odd degrees allowed")
    lo, hi = min(coeffs), max(coeffs)
    if hi >= 0 and lo >= 0:
        raise InputError("phi_hat needs a pole at lambda = 0")
    data = np.zeros(hi - lo + 1, dtype=complex)
    for n, c in coeffs.items():
        data[n - lo] = c
    return FlowGenerator(ScalarLoop(lo, data, r, N, "odd"), -lo, label=f"laurent{sorted(coeffs)}")


def exp_zeta(phi: np.ndarray) -> np.ndarray:
    """exp(phi A) = cosh(phi) I + sinh(phi) A at each sample."""
    phi = np.asarray(phi, dtype=complex)
    return np.cosh(phi)[..., None, None] * IDENTITY + np.sinh(phi)[..., None, None] * A


@dataclass
class FlowResult:
    h_plus: LoopMatrix
    unitary: LoopMatrix
    residual: float
    unitarity: float
    t: float
    frames: FrameGrid | None = None


def apply_flow(h_plus: LoopMatrix, gen: FlowGenerator, t: float, grid: ZGrid | None = None,
               H: float = DEFAULT_H, M: int | None = None) -> FlowResult:
    """Iwasawa-split h_plus exp(t zeta) on C_r; optionally dress the new seed on ``grid``."""
    t = float(t)
    solver = TwoCircleSolver(h_plus.r, h_plus.N, M, twisted=True)
    G = h_plus(solver.lam) @ exp_zeta(t * gen(solver.lam))
    res = solver.solve(G)
    frames = None
    if grid is not None:
        frames = Dresser(res.g_plus, h_plus.r, h_plus.N).grid(grid, H)
    return FlowResult(res.g_plus, res.F, res.residual, res.unitarity, t, frames)


# ---------------------------------------------------------------- triviality
@dataclass
class TrivialityResult:
    trivial: bool
    U0: np.ndarray
    residual: float
    method: str
    phase: float | None = None
    displacement: float = 0.0      # max |F_t - F|: how far the flow moved the frames

    def to_json_dict(self) -> dict:
        return {"trivial": bool(self.trivial), "residual": float(self.residual), "method": self.method,
                "phase": self.phase, "displacement": float(self.displacement),
                "U0": [[[float(z.real), float(z.imag)] for z in row] for row in self.U0]}


def _conj_residual(Ft: np.ndarray, F: np.ndarray, U0: np.ndarray) -> float:
    diff = Ft - U0 @ F @ np.conj(U0.T)
    return float(np.max(np.linalg.norm(diff, ord=2, axis=(-2, -1))))


def _fit_diagonal(F: np.ndarray, Ft: np.ndarray) -> tuple[np.ndarray, float]:
    """U0 = diag(e^{i phi}, e^{-i phi}) maps F12 -> e^{2 i phi} F12 and F21 -> e^{-2 i phi} F21."""
    w = np.vdot(F[..., 0, 1], Ft[..., 0, 1]) + np.conj(np.vdot(F[..., 1, 0], Ft[..., 1, 0]))
    phi = 0.5 * float(np.angle(w)) if abs(w) > 0 else 0.0
    return np.diag([np.exp(1j * phi), np.exp(-1j * phi)]), phi


def _fit_su2(F: np.ndarray, Ft: np.ndarray) -> np.ndarray:
    """Null vector of X -> X F - Ft X over all samples, projected to SU(2)."""
    Fs = F.reshape(-1, 2, 2)
    Fts = Ft.reshape(-1, 2, 2)
    rows = []
    basis = [np.array([[1, 0], [0, 0]]), np.array([[0, 1], [0, 0]]),
             np.array([[0, 0], [1, 0]]), np.array([[0, 0], [0, 1]])]
    for E in basis:
        rows.append((E @ Fs - Fts @ E).reshape(-1))
    mat = np.stack(rows, axis=1)
    _, _, vh = np.linalg.svd(mat, full_matrices=False)
    X = np.conj(vh[-1]).reshape(2, 2)
    u, _, wh = np.linalg.svd(X)
    U0 = u @ wh
    return U0 / np.sqrt(np.linalg.det(U0))


def is_trivial(fg0: FrameGrid, fgt: FrameGrid, tol: float = TRIVIAL_TOL, lam=None) -> TrivialityResult:
    """Fit a lambda-independent unitary U0 with F_t = U0 F U0^{-1} on the lattice and S^1 samples."""
    if fg0.shape != fgt.shape or not np.allclose(fg0.grid.z, fgt.grid.z):
        raise InputError("frame grids must share the lattice")
    lam = circle_points(16) * np.exp(0.1j) if lam is None else np.asarray(lam, dtype=complex)
    F, Ft = fg0.values(lam), fgt.values(lam)
    moved = float(np.max(np.abs(Ft - F)))
    U0, phi = _fit_diagonal(F, Ft)
    res = _conj_residual(Ft, F, U0)
    if res < tol:
        return TrivialityResult(True, U0, res, "u1", phi, moved)
    U1 = _fit_su2(F, Ft)
    res1 = _conj_residual(Ft, F, U1)
    if res1 < res:
        return TrivialityResult(res1 < tol, U1, res1, "su2", None, moved)
    return TrivialityResult(False, U0, res, "u1", phi, moved)


# ------------------------------------------------------ finite-type generators
def pole_multiplicities(fns, tol: float = POLE_CLUSTER) -> list[tuple[complex, int]]:
    """Distinct poles on C^* of the given rational functions with the largest pole order."""
    found: list[list] = []
    for f in fns:
        for p in f.poles():
            if abs(p) < 1e-12:
                continue
            order = -f.order_at(p, tol=1e-6)
            if order <= 0:
                continue
            for entry in found:
                if abs(entry[0] - p) < tol * max(1.0, abs(p)):
                    entry[1] = max(entry[1], order)
                    break
            else:
                found.append([complex(p), order])
    return [(p, o) for p, o in found]


def correction_polynomial(a2: RationalFn, b2: RationalFn, c2: RationalFn,
                          max_degree: int = 64) -> tuple[RationalFn, int]:
    """Monic phi~ of minimal degree with phi~^2 a^2, phi~^2 b^2, phi~^2 c^2 pole-free on C^*.

    A pole of order o forces a root of multiplicity ceil(o/2), so the product
    of those factors is the unique minimal choice; it is verified before use.
    """
    poles = pole_multiplicities([a2, b2, c2])
    roots = [p for p, o in poles for _ in range(-(-o // 2))]
    if len(roots) > max_degree:
        raise CorrectionPolynomialNotFound(f"clearing {poles} needs degree {len(roots)} > {max_degree}")
    cand = RationalFn.from_roots(roots)
    if not all(_pole_free(cand * cand * f) for f in (a2, b2, c2)):
        raise CorrectionPolynomialNotFound(f"phi~ with roots {roots} leaves poles on C^*")
    return cand, len(roots)


def _pole_free(f: RationalFn) -> bool:
    for p in f.poles():
        if abs(p) > 1e-12 and f.order_at(p, tol=1e-6) < 0:
            return False
    return True


@dataclass
class FiniteTypeCertificate:
    N: int
    kappa: int
    pole_order: int
    pole_order_measured: int
    tail_low: float
    tail_high: float
    antihermitian_residual: float
    flow_residual: float
    metric_change: float
    trivial: bool
    t: float
    generator: FlowGenerator = field(repr=False, default=None)
    triviality: TrivialityResult | None = field(repr=False, default=None)

    def to_json_dict(self) -> dict:
        return {"N": int(self.N), "kappa": int(self.kappa), "pole_order": int(self.pole_order),
                "pole_order_measured": int(self.pole_order_measured),
                "tail_low": float(self.tail_low), "tail_high": float(self.tail_high),
                "antihermitian_residual": float(self.antihermitian_residual),
                "flow_residual": float(self.flow_residual), "metric_change": float(self.metric_change),
                "displacement": float(self.triviality.displacement) if self.triviality else None,
                "trivial": bool(self.trivial), "t": float(self.t)}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def phi_hat_function(spec: CurveSpec, phi: RationalFn, N: int) -> Callable:
    """lambda -> phi(nu) (nu^-N - conj(s) nu^(N-g-1)) lambda mu~(lambda), nu = lambda^2."""
    g = spec.genus
    s_bar = np.conj(spec.s)

    def fn(lam):
        lam = np.asarray(lam, dtype=complex)
        nu = lam * lam
        return phi(nu) * (nu ** (-N) - s_bar * nu ** (N - g - 1)) * lam * mu_tilde(spec, lam)

    return fn


def finite_type_generator(spec: CurveSpec, sd: SymmetryData, N: int,
                          max_degree: int = 64) -> tuple[FlowGenerator, RationalFn, int]:
    g = spec.genus
    if N < g + 1:
        raise InputError(f"N must be at least g + 1 = {g + 1}")
    if sd.a2 is None or sd.b2 is None or sd.c2 is None:
        raise InputError("symmetry data must carry a^2, b^2 and c^2")
    phi_t, kappa = correction_polynomial(sd.a2, sd.b2, sd.c2, max_degree)
    phi = phi_t * phi_t.star()
    fn = phi_hat_function(spec, phi, N)
    order = 2 * (kappa + N) - 1
    trunc = max(sd.N, order)
    M = 1 << int(np.ceil(np.log2(4 * (trunc + order + 1))))
    lam = circle_points(M, sd.r)
    series = ScalarLoop.from_samples(fn(lam), sd.r, trunc, "odd", degree_range=(-order, trunc))
    return FlowGenerator(series, order, fn, f"phi_hat_{N}"), phi_t, kappa


def _tails(values: np.ndarray) -> tuple[float, float]:
    """Relative size of the outer quarter of negative and positive Laurent modes on S^1."""
    M = values.shape[0]
    modes = np.fft.fft(values, axis=0) / M
    freq = np.fft.fftfreq(M, d=1.0 / M).astype(int)
    mag = np.max(np.abs(modes).reshape(M, -1), axis=1)
    top = max(mag.max(), 1e-300)
    low = mag[freq < -M // 4].max() / top
    high = mag[freq > M // 4].max() / top
    return float(low), float(high)


def finite_type_certificate(spec: CurveSpec, sd: SymmetryData, N: int, grid: ZGrid | None = None,
                            t: float | None = None, H: float = DEFAULT_H,
                            fg0: FrameGrid | None = None) -> FiniteTypeCertificate:
    """Build phi_hat_N, check phi_hat_N S on S^1, run the flow and test triviality."""
    if sd.hplus is None:
        raise InputError("symmetry data must carry h_plus")
    gen, _, kappa = finite_type_generator(spec, sd, N)
    M = 1 << int(np.ceil(np.log2(8 * (gen.pole_order + 2 * spec.genus + 8))))
    lam = circle_points(M)
    X = gen(lam)[:, None, None] * sd.S(lam)
    low, high = _tails(X)
    anti = float(np.max(np.abs(X + np.conj(np.swapaxes(X, -1, -2)))) / max(np.max(np.abs(X)), 1e-300))
    scale = np.max(np.abs(gen.phi_hat.data) * sd.r ** gen.phi_hat.degrees.astype(float))
    measured = -next(n for n in gen.phi_hat.degrees
                     if abs(gen.phi_hat.coeff(n)) * sd.r ** float(n) > 1e-10 * scale)
    if t is None:
        t = FLOW_SIZE / gen.sup_on(sd.r)
    grid = grid or ZGrid.square(4, 0.5)
    fg0 = fg0 or Dresser(sd.hplus, sd.r, sd.N).grid(grid, H)
    flow = apply_flow(sd.hplus, gen, t, grid, H)
    tri = is_trivial(fg0, flow.frames)
    du = float(np.max(np.abs(metric_from_plus(flow.frames) - metric_from_plus(fg0))))
    return FiniteTypeCertificate(N=N, kappa=kappa, pole_order=gen.pole_order, pole_order_measured=int(measured),
                                 tail_low=low, tail_high=high, antihermitian_residual=anti,
                                 flow_residual=tri.residual, metric_change=du, trivial=tri.trivial,
                                 t=float(t),
                                 generator=gen, triviality=tri)


def codimension_bound(spec: CurveSpec, sd: SymmetryData, Ns=None, grid: ZGrid | None = None) -> dict:
    """Certificates for N = g+1..g+4; when all are trivial the trivial flows have codimension <= kappa + g."""
    g = spec.genus
    Ns = list(Ns) if Ns is not None else list(range(g + 1, g + 5))
    grid = grid or ZGrid.square(4, 0.5)
    fg0 = Dresser(sd.hplus, sd.r, sd.N).grid(grid)
    certs = [finite_type_certificate(spec, sd, n, grid, fg0=fg0) for n in Ns]
    all_trivial = all(c.trivial for c in certs)
    kappa = certs[0].kappa
    return {"certificates": [c.to_json_dict() for c in certs], "all_trivial": all_trivial,
            "kappa": kappa, "codimension_bound": kappa + g if all_trivial else None}
