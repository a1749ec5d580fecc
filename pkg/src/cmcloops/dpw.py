"""Dressing the standard cylinder: frames, Sym's formula, potential and metric.

Frames are stored per lattice sample as coefficient windows [-N, N] on the
circle C_r. Dressing at one z is a two-circle Iwasawa solve of
``h_plus(lambda) * exp((z/lambda - lambda conj(z)) A)`` sampled on C_r, and the
result is right-normalized by the (constant, diagonal) unitary factor of
h_plus itself so that F(0) = I.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .errors import BoundarySample, NonUnitaryFrame, NumericalError, ZeroMeanCurvature
from .factor import TwoCircleSolver, birkhoff
from .loops import IDENTITY, SIGMA3, LoopMatrix, circle_points, deriv_theta, multiply

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    SIGMA3,
)
DEFAULT_H = -2.0


def _exp_samples(z: complex, lam: np.ndarray) -> np.ndarray:
    """exp(x A) with x = z/lambda - lambda conj(z), via the A-eigenbasis."""
    x = z / lam - lam * np.conj(z)
    ep, em = np.exp(x), np.exp(-x)
    # D A D^{-1} = sigma3, so exp(xA) = D^{-1} diag(e^x, e^-x) D
    out = np.empty(lam.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = out[..., 1, 1] = 0.5 * (ep + em)
    out[..., 0, 1] = out[..., 1, 0] = 0.5 * (ep - em)
    return out


def _sample_count(N: int) -> int:
    return 1 << int(np.ceil(np.log2(max(4 * (N + 1), 256))))


def _exp_laurent(z: complex, N: int) -> np.ndarray:
    """Laurent coefficients (degrees -N..N) of exp(z/lambda - lambda conj(z)).

    Cauchy product of the two exponential series; every term is computed
    directly so no radius weighting amplifies roundoff.
    """
    K = N + 40 + int(4 * abs(z))
    j = np.arange(K + 1)
    logfact = np.concatenate([[0.0], np.cumsum(np.log(np.arange(1, K + 1)))])
    def series(w):
        if w == 0:
            out = np.zeros(K + 1, dtype=complex)
            out[0] = 1.0
            return out
        return np.exp(j * np.log(complex(w)) - logfact)
    a = series(z)               # powers of 1/lambda
    b = series(-np.conj(z))     # powers of lambda
    full = np.convolve(a[::-1], b)      # index m <-> degree m - K
    return full[K - N:K + N + 1]


def cylinder_frame(z: complex, r: float = 0.5, N: int = 32) -> LoopMatrix:
    """Extended frame of the standard cylinder, truncated to degrees [-N, N]."""
    z = complex(z)
    ep, em = _exp_laurent(z, N), _exp_laurent(-z, N)
    data = np.zeros((2 * N + 1, 2, 2), dtype=complex)
    even = np.arange(-N, N + 1) % 2 == 0
    # D A D^{-1} = sigma3: exp(xA) = D^{-1} diag(e^x, e^-x) D = cosh x I + sinh x A
    cosh, sinh = 0.5 * (ep + em), 0.5 * (ep - em)
    data[even, 0, 0] = data[even, 1, 1] = cosh[even]
    data[~even, 0, 1] = data[~even, 1, 0] = sinh[~even]
    return LoopMatrix(-N, data, r, N, True)


# ------------------------------------------------------------------ grid
@dataclass(frozen=True)
class ZGrid:
    """Rectangular lattice z[j, i] = xs[i] + 1j * ys[j]."""

    xs: np.ndarray
    ys: np.ndarray

    @classmethod
    def square(cls, n: int = 64, half_width: float = 2.0, center: complex = 0j) -> "ZGrid":
        t = np.linspace(-half_width, half_width, n)
        return cls(center.real + t, center.imag + t)

    @classmethod
    def with_step(cls, x0: float, y0: float, step: float, nx: int, ny: int) -> "ZGrid":
        return cls(x0 + step * np.arange(nx), y0 + step * np.arange(ny))

    @property
    def z(self) -> np.ndarray:
        return self.xs[None, :] + 1j * self.ys[:, None]

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.ys), len(self.xs))

    @property
    def hx(self) -> float:
        return float(self.xs[1] - self.xs[0]) if len(self.xs) > 1 else np.nan

    @property
    def hy(self) -> float:
        return float(self.ys[1] - self.ys[0]) if len(self.ys) > 1 else np.nan


@dataclass(frozen=True)
class FrameGrid:
    grid: ZGrid
    coeffs: np.ndarray            # (ny, nx, 2N+1, 2, 2) coefficients of F on degrees -N..N
    plus_at_zero: np.ndarray      # (ny, nx, 2, 2) constant term of the normalized plus part
    seed: LoopMatrix
    H: float
    r: float
    N: int
    residual: np.ndarray = field(repr=False, default=None)
    unitarity: np.ndarray = field(repr=False, default=None)

    def frame(self, j: int, i: int) -> LoopMatrix:
        return LoopMatrix(-self.N, self.coeffs[j, i], self.r, self.N, True)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def values(self, lam) -> np.ndarray:
        """F(z, lambda) for all lattice samples; shape (ny, nx, *lam.shape, 2, 2)."""
        lam = np.asarray(lam, dtype=complex)
        powers = lam[..., None] ** np.arange(-self.N, self.N + 1)
        return np.einsum("...n,abnij->ab...ij", powers, self.coeffs)


class Dresser:
    """Dresses the cylinder by a fixed plus-loop at arbitrary points z."""

    def __init__(self, h_plus: LoopMatrix, r: float | None = None, N: int | None = None,
                 M: int | None = None):
        if np.any(h_plus.degrees < 0) and np.any(h_plus.data[h_plus.degrees < 0] != 0):
            raise ValueError("h_plus must be a plus-loop")
        if abs(np.linalg.det(h_plus.coeff(0))) < 1e-14:
            raise ValueError("h_plus must be invertible at lambda = 0")
        self.r = h_plus.r if r is None else float(r)
        self.N = h_plus.N if N is None else int(N)
        self.h_plus = h_plus.with_radius(self.r)
        self.solver = TwoCircleSolver(self.r, self.N, M, twisted=True)
        self.lam = self.solver.lam
        self.h_samples = self.h_plus(self.lam)
        base = self.solver.solve(self.h_samples)
        # h_plus = F_B(0) p(0): the unitary part at z = 0 is constant
        self.base_unitary = base.F.coeff(0)
        self.base_inverse = np.conj(self.base_unitary.T)

    def split(self, z: complex):
        """Normalized (F, p_plus(0), residual, unitarity) at one z."""
        z = complex(z)
        G = self.h_samples @ _exp_samples(z, self.lam)
        try:
            res = self.solver.solve(G)
        except NumericalError as exc:
            raise type(exc)(f"at z={z}: {exc}") from exc
        coef = res.F.window(-self.N, self.N) @ self.base_inverse[None]
        p0 = self.base_unitary @ res.g_plus.coeff(0)
        return coef, p0, res.residual, res.unitarity

    def frame(self, z: complex) -> LoopMatrix:
        coef, *_ = self.split(z)
        return LoopMatrix.from_array(-self.N, coef, self.r, self.N, True, clean_twist=True)

    def grid(self, grid: ZGrid, H: float = DEFAULT_H) -> FrameGrid:
        zs = grid.z.ravel()
        out = pmap(self.split, zs)
        ny, nx = grid.shape
        coeffs = np.stack([o[0] for o in out]).reshape(ny, nx, 2 * self.N + 1, 2, 2)
        p0 = np.stack([o[1] for o in out]).reshape(ny, nx, 2, 2)
        resid = np.array([o[2] for o in out]).reshape(ny, nx)
        unit = np.array([o[3] for o in out]).reshape(ny, nx)
        # zero forbidden twisting entries (roundoff of the orthogonalization)
        even = (np.arange(-self.N, self.N + 1) % 2 == 0)
        coeffs[:, :, even, 0, 1] = 0
        coeffs[:, :, even, 1, 0] = 0
        coeffs[:, :, ~even, 0, 0] = 0
        coeffs[:, :, ~even, 1, 1] = 0
        return FrameGrid(grid, coeffs, p0, self.h_plus, float(H), self.r, self.N, resid, unit)


def dress(h_plus: LoopMatrix, grid: ZGrid, H: float = DEFAULT_H, r: float | None = None,
          N: int | None = None) -> FrameGrid:
    """Extended frames of the cylinder dressed by ``h_plus`` on a z-lattice."""
    if H == 0:
        raise ZeroMeanCurvature("mean curvature must be nonzero")
    return Dresser(h_plus, r, N).grid(grid, H)


# ------------------------------------------------------------------- sym
def sym_point(F: LoopMatrix, lam0: complex = 1.0, H: float = DEFAULT_H,
              unitary_tol: float = 1e-6, return_residue: bool = False):
    """Point of the associated-family member lambda0 in R^3.

    J = -(1/2H)(dF/dtheta F^{-1} + (i/2) F sigma3 F^{-1}) is converted to a
    vector r via J = -(i/2) r . sigma.
    """
    if H == 0:
        raise ZeroMeanCurvature("mean curvature must be nonzero")
    lam0 = complex(lam0)
    Fv = F(lam0)
    if np.linalg.norm(np.conj(Fv.T) @ Fv - IDENTITY, 2) > unitary_tol:
        raise NonUnitaryFrame(f"frame not unitary at lambda={lam0}")
    Finv = np.array([[Fv[1, 1], -Fv[0, 1]], [-Fv[1, 0], Fv[0, 0]]]) / np.linalg.det(Fv)
    J = -(deriv_theta(F, lam0) @ Finv + 0.5j * Fv @ SIGMA3 @ Finv) / (2.0 * H)
    vec = np.array([1j * np.trace(J @ s) for s in PAULI])
    if return_residue:
        return vec.real, float(np.max(np.abs(vec.imag)))
    return vec.real


def sym_grid(fg: FrameGrid, lam0: complex = 1.0) -> tuple[np.ndarray, float]:
    """Sym points for every lattice sample; returns (points (ny, nx, 3), worst residue)."""
    lam0 = complex(lam0)
    n = np.arange(-fg.N, fg.N + 1)
    Fv = np.einsum("n,abnij->abij", lam0 ** n, fg.coeffs)
    dF = np.einsum("n,abnij->abij", 1j * n * lam0 ** n, fg.coeffs)
    Finv = np.empty_like(Fv)
    Finv[..., 0, 0], Finv[..., 1, 1] = Fv[..., 1, 1], Fv[..., 0, 0]
    Finv[..., 0, 1], Finv[..., 1, 0] = -Fv[..., 0, 1], -Fv[..., 1, 0]
    Finv /= np.linalg.det(Fv)[..., None, None]
    unit = np.linalg.norm(np.conj(np.swapaxes(Fv, -1, -2)) @ Fv - IDENTITY, ord=2, axis=(-2, -1))
    if np.max(unit) > 1e-6:
        raise NonUnitaryFrame(f"frame not unitary at lambda={lam0} (defect {np.max(unit):.2e})")
    J = -(dF @ Finv + 0.5j * Fv @ SIGMA3 @ Finv) / (2.0 * fg.H)
    vec = np.stack([1j * np.einsum("abij,ji->ab", J, s) for s in PAULI], axis=-1)
    return vec.real, float(np.max(np.abs(vec.imag)))


@dataclass(frozen=True)
class SurfaceMesh:
    vertices: np.ndarray          # (n, 3)
    faces: np.ndarray             # (m, 3) triangle indices (0-based)
    lam: complex
    normals: np.ndarray | None = None
    u: np.ndarray | None = None

    def to_obj(self) -> str:
        lines = [f"v {x:.12g} {y:.12g} {z:.12g}" for x, y, z in self.vertices]
        if self.normals is not None:
            lines += [f"vn {x:.12g} {y:.12g} {z:.12g}" for x, y, z in self.normals]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in self.faces]
        return "\n".join(lines) + "\n"

    def write_obj(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_obj())


def quad_triangles(ny: int, nx: int) -> np.ndarray:
    idx = np.arange(ny * nx).reshape(ny, nx)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, 1:].ravel(), idx[1:, :-1].ravel()
    return np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])


def surface_mesh(fg: FrameGrid, lam0: complex = 1.0, with_metric: bool = False) -> SurfaceMesh:
    pts, _ = sym_grid(fg, lam0)
    ny, nx = fg.shape
    normals = _normals(fg, lam0)
    u = None
    if with_metric:
        u = metric_from_plus(fg).ravel()
    return SurfaceMesh(pts.reshape(-1, 3), quad_triangles(ny, nx), complex(lam0),
                       normals.reshape(-1, 3), u)


def _normals(fg: FrameGrid, lam0: complex) -> np.ndarray:
    """Unit normal F sigma3 F^{-1} read as a vector (up to orientation)."""
    n = np.arange(-fg.N, fg.N + 1)
    Fv = np.einsum("n,abnij->abij", complex(lam0) ** n, fg.coeffs)
    Nm = Fv @ SIGMA3 @ np.conj(np.swapaxes(Fv, -1, -2))
    return np.stack([0.5 * np.einsum("abij,ji->ab", Nm, s).real for s in PAULI], axis=-1)


@dataclass(frozen=True)
class AxisFit:
    point: np.ndarray
    direction: np.ndarray
    distances: np.ndarray


def fit_axis(points: np.ndarray, normals: np.ndarray) -> AxisFit:
    """Axis of a surface of revolution: the direction orthogonal to all normals, then a circle fit across it."""
    P = points.reshape(-1, 3)
    Nn = normals.reshape(-1, 3)
    _, _, vh = np.linalg.svd(Nn, full_matrices=False)
    d = vh[-1]
    e1 = np.cross(d, [1.0, 0.0, 0.0])
    if np.linalg.norm(e1) < 0.5:
        e1 = np.cross(d, [0.0, 1.0, 0.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    x, y = P @ e1, P @ e2
    # algebraic circle fit: x^2 + y^2 = 2 a x + 2 b y + c
    M = np.column_stack([2 * x, 2 * y, np.ones_like(x)])
    (a, b, c), *_ = np.linalg.lstsq(M, x * x + y * y, rcond=None)
    center = a * e1 + b * e2
    dist = np.hypot(x - a, y - b)
    return AxisFit(center, d, dist.reshape(points.shape[:-1]))


def cylinder_checks(grid: ZGrid, r: float = 0.5, N: int = 32, H: float = DEFAULT_H,
                    lam0: complex = 1.0, lam=None) -> tuple[dict, FrameGrid]:
    """Dress with h_plus = I and compare with the closed-form cylinder."""
    from .loops import identity
    fg = dress(identity(r, N), grid, H)
    lam = circle_points(16) * np.exp(0.1j) if lam is None else np.asarray(lam, dtype=complex)
    exact = np.stack([np.stack([_exp_samples(complex(z), lam) for z in row]) for row in grid.z])
    frame_err = float(np.max(np.abs(fg.values(lam) - exact)))
    pts, _ = sym_grid(fg, lam0)
    axis = fit_axis(pts, _normals(fg, lam0))
    u = metric_from_plus(fg)
    out = {"frame_error": frame_err,
           "axis_distance_mean": float(np.mean(axis.distances)),
           "axis_distance_spread": float(np.ptp(axis.distances)),
           "axis_distance_expected": 1.0 / (2 * abs(H)),
           "metric_max_abs": float(np.max(np.abs(u))),
           "iwasawa_residual": float(np.max(fg.residual)),
           "unitarity": float(np.max(fg.unitarity))}
    if min(fg.shape) >= 3:
        ps = extract_potential(fg)
        finite = np.isfinite(ps.E)
        out["potential_f_dev"] = float(np.max(np.abs(ps.f[finite] - 1)))
        out["potential_E_dev"] = float(np.max(np.abs(ps.E[finite] - 1)))
    return out, fg


# ------------------------------------------------------- finite differences
def _d_axis(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Centered derivative along a grid axis, Richardson-combined over h, 2h and 3h.

    Sixth-order accurate; the three outermost rows on each side are NaN.
    Axes with 5 or 6 samples fall back to the fourth-order h, 2h pair.
    """
    v = np.moveaxis(values, axis, 0)
    out = np.full(v.shape, np.nan, dtype=complex)
    n = v.shape[0]
    if n >= 7:
        d1 = (v[4:-2] - v[2:-4]) / (2 * h)
        d2 = (v[5:-1] - v[1:-5]) / (4 * h)
        d3 = (v[6:] - v[:-6]) / (6 * h)
        out[3:-3] = (15 * d1 - 6 * d2 + d3) / 10
    elif n >= 5:
        d1 = (v[3:-1] - v[1:-3]) / (2 * h)
        d2 = (v[4:] - v[:-4]) / (4 * h)
        out[2:-2] = (4 * d1 - d2) / 3
    return np.moveaxis(out, 0, axis)


def _d2_axis(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    v = np.moveaxis(values, axis, 0)
    out = np.full(v.shape, np.nan, dtype=complex)
    if v.shape[0] >= 5:
        d1 = (v[3:-1] - 2 * v[2:-2] + v[1:-3]) / h ** 2
        d2 = (v[4:] - 2 * v[2:-2] + v[:-4]) / (4 * h ** 2)
        out[2:-2] = (4 * d1 - d2) / 3
    return np.moveaxis(out, 0, axis)


def d_dz(values: np.ndarray, grid: ZGrid) -> np.ndarray:
    """d/dz = (d/dx - i d/dy)/2 on arrays whose first two axes are (y, x)."""
    return 0.5 * (_d_axis(values, grid.hx, 1) - 1j * _d_axis(values, grid.hy, 0))


def d_dzbar(values: np.ndarray, grid: ZGrid) -> np.ndarray:
    return 0.5 * (_d_axis(values, grid.hx, 1) + 1j * _d_axis(values, grid.hy, 0))


def laplacian(values: np.ndarray, grid: ZGrid) -> np.ndarray:
    return _d2_axis(values, grid.hx, 1) + _d2_axis(values, grid.hy, 0)


# -------------------------------------------------------- Maurer-Cartan
@dataclass(frozen=True)
class MaurerCartan:
    U: np.ndarray       # (ny, nx, 2N+1, 2, 2) coefficients of F^{-1} dF/dz, degrees -N..N
    V: np.ndarray       # same for F^{-1} dF/dzbar
    N: int
    tail: float         # worst off-band coefficient (scaled to C_r and S^1)
    reality: float      # worst |V_1 + U_{-1}^H|

    def coeff(self, which: str, n: int) -> np.ndarray:
        arr = self.U if which == "U" else self.V
        return arr[:, :, n + self.N]


def maurer_cartan(fg: FrameGrid) -> MaurerCartan:
    """F^{-1}dF from finite differences of the frame coefficients."""
    N = fg.N
    dz = d_dz(fg.coeffs, fg.grid)
    dzb = d_dzbar(fg.coeffs, fg.grid)
    ny, nx = fg.shape
    U = np.full_like(fg.coeffs, np.nan)
    V = np.full_like(fg.coeffs, np.nan)
    for j in range(ny):
        for i in range(nx):
            if not np.all(np.isfinite(dz[j, i])):
                continue
            Finv = fg.frame(j, i).adjugate()
            dF = LoopMatrix(-N, dz[j, i], fg.r, N, False)
            dFb = LoopMatrix(-N, dzb[j, i], fg.r, N, False)
            U[j, i] = multiply(Finv, dF).window(-N, N)
            V[j, i] = multiply(Finv, dFb).window(-N, N)
    n = np.arange(-N, N + 1)
    weight = np.maximum(fg.r ** n.astype(float), 1.0)
    Uoff = U.copy()
    Uoff[:, :, N - 1:N + 1] = 0            # keep degrees -1, 0 for U
    Voff = V.copy()
    Voff[:, :, N:N + 2] = 0                # degrees 0, 1 for V
    def worst(arr):
        mags = np.linalg.norm(arr, axis=(-2, -1)) * weight
        return float(np.nanmax(mags)) if np.any(np.isfinite(mags)) else np.nan
    tail = max(worst(Uoff), worst(Voff))
    reality = np.linalg.norm(V[:, :, N + 1] + np.conj(np.swapaxes(U[:, :, N - 1], -1, -2)),
                             axis=(-2, -1))
    return MaurerCartan(U, V, N, tail, float(np.nanmax(reality)) if np.any(np.isfinite(reality)) else np.nan)


# ------------------------------------------------------------ potential
@dataclass(frozen=True)
class PotentialSample:
    f: np.ndarray           # (ny, nx) complex, NaN where unavailable
    E: np.ndarray           # (ny, nx) complex Hopf coefficient
    poles: list             # z values where the Birkhoff split failed
    off_band: float         # worst non-lambda^{-1} coefficient of xi


def extract_potential(fg: FrameGrid) -> PotentialSample:
    """Birkhoff split each frame and differentiate the minus part in z."""
    ny, nx = fg.shape
    depth = 4                      # coefficients X_1..X_depth of g_minus are kept

    def minus_coeffs(idx):
        j, i = divmod(idx, nx)
        res = birkhoff(fg.frame(j, i))
        blocks = np.stack([res.minus_part.coeff(-k) for k in range(1, depth + 1)])
        return blocks, res.in_big_cell

    out = pmap(minus_coeffs, range(ny * nx))
    X = np.stack([o[0] for o in out]).reshape(ny, nx, depth, 2, 2)
    good = np.array([o[1] for o in out]).reshape(ny, nx)
    X[~good] = np.nan
    dX = d_dz(X, fg.grid)
    # xi = g_minus^{-1} dg_minus: the lambda^{-1} term is dX_1, the lambda^{-2} term is dX_2 - X_1 dX_1
    xi1 = dX[:, :, 0]
    xi2 = dX[:, :, 1] - X[:, :, 0] @ dX[:, :, 0]
    diag = np.abs(xi1[..., 0, 0]) + np.abs(xi1[..., 1, 1])
    off = np.concatenate([np.linalg.norm(xi2, axis=(-2, -1)).ravel(), diag.ravel()])
    f = xi1[..., 0, 1]
    E = xi1[..., 0, 1] * xi1[..., 1, 0]
    poles = [complex(z) for z in fg.grid.z[~good]]
    finite = off[np.isfinite(off)]
    return PotentialSample(f, E, poles, float(finite.max()) if finite.size else np.nan)


# --------------------------------------------------------------- metric
@dataclass(frozen=True)
class MetricSample:
    u: np.ndarray               # (ny, nx) from the constant term of the plus part
    u_fd: np.ndarray            # (ny, nx) from the lambda^{-1} block of finite-difference F^{-1}F_z
    residual: np.ndarray        # sinh-Gordon residual, NaN on the boundary
    max_residual: float


def metric_from_plus(fg: FrameGrid) -> np.ndarray:
    """u from U_{-1} = p(0) A p(0)^{-1}, whose upper-right entry is -(H/2) e^{u/2} up to phase."""
    p0 = fg.plus_at_zero
    upper = p0[..., 0, 0] / p0[..., 1, 1]        # (p A p^{-1})_{12} for diagonal p
    return 2.0 * np.log(2.0 * np.abs(upper) / abs(fg.H))


def extract_metric(fg: FrameGrid, E: np.ndarray | None = None, mc: MaurerCartan | None = None) -> MetricSample:
    ny, nx = fg.shape
    if ny < 5 or nx < 5:
        raise BoundarySample("metric extraction needs at least 5 samples per axis")
    u = metric_from_plus(fg)
    if mc is None:
        mc = maurer_cartan(fg)
    upper = mc.coeff("U", -1)[..., 0, 1]
    u_fd = 2.0 * np.log(2.0 * np.abs(upper) / abs(fg.H))
    if E is None:
        E = extract_potential(fg).E
    lap = laplacian(u.astype(complex), fg.grid).real
    res = 0.25 * lap + 0.5 * np.exp(u) * fg.H ** 2 - 2.0 * np.exp(-u) * np.abs(E) ** 2
    finite = res[np.isfinite(res)]
    return MetricSample(u, u_fd, res, float(np.max(np.abs(finite))) if finite.size else np.nan)
