"""Hyperelliptic curves mu^2 = nu * prod(nu - nu_k) with inner/outer paired branch points.

Branch points come in pairs nu_{2k-1} (inside the unit disk) and
nu_{2k} = 1/conj(nu_{2k-1}). A point of the curve is (nu, sheet) where the
sheet is the sign relative to a fixed reference branch ``mu_ref``: cuts run
along the radial segments [nu_{2k-1}, nu_{2k}] and along one ray from 0 to
infinity chosen away from every other cut; mu_ref(1) is the principal root
of prod(1 - nu_k).

On the double cover nu = lambda^2 the curve reads mu = lambda * mu_tilde(lambda)
with mu_tilde^2 = prod(lambda^2 - nu_k). Two closed forms of mu_tilde are used:
a disk form, valid for |lambda|^2 < min|nu_k| and along the ray lambda^2 in
the direction of the 0-infinity cut, and an annulus form valid between the
inner and outer branch circles (it contains S^1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (AmbiguousContinuation, BranchTooClose, CutsIntersect, Duplicate,
                     OnUnitCircle, OutOfDisk, QuadratureFail)

BRANCH_EXCLUSION = 1e-3
UNIT_CIRCLE_TOL = 1e-12


@dataclass(frozen=True)
class CurveSpec:
    inner_points: tuple

    @property
    def genus(self) -> int:
        return len(self.inner_points)

    @property
    def outer_points(self) -> tuple:
        return tuple(1.0 / np.conj(v) for v in self.inner_points)

    @property
    def branch_points(self) -> np.ndarray:
        """nu_1, ..., nu_2g with nu_{2k-1} inner and nu_{2k} its reflection."""
        out = []
        for v, w in zip(self.inner_points, self.outer_points):
            out += [v, w]
        return np.array(out, dtype=complex)

    @property
    def cut_angle(self) -> float:
        """Direction of the 0-infinity cut: middle of the widest gap between cut directions and 1."""
        angles = np.sort(np.mod([0.0] + [np.angle(v) for v in self.inner_points], 2 * np.pi))
        gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))
        k = int(np.argmax(gaps))
        return float(np.mod(angles[k] + gaps[k] / 2, 2 * np.pi))

    @property
    def ray(self) -> complex:
        """Unit lambda on the ray with lambda^2 along the 0-infinity cut."""
        return complex(np.exp(0.5j * self.cut_angle))

    @property
    def s(self) -> complex:
        """mu_ref(1) / conj(mu_ref(1)); s^2 = prod nu_k and |s| = 1."""
        m1 = mu_ref(self, 1.0)
        return complex(m1 / np.conj(m1))

    @property
    def inner_radius(self) -> float:
        """Largest R with no branch point of lambda -> lambda^2 inside |lambda| < R."""
        return float(np.sqrt(min(abs(v) for v in self.inner_points)))

    def to_json_dict(self) -> dict:
        return {"inner_points": [{"re": float(np.real(v)), "im": float(np.imag(v))}
                                 for v in self.inner_points]}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, obj) -> "CurveSpec":
        return build_curve([complex(p["re"], p.get("im", 0.0)) for p in obj["inner_points"]])


def build_curve(inner_points) -> CurveSpec:
    pts = [complex(v) for v in inner_points]
    if not pts:
        raise OutOfDisk("at least one inner branch point is required")
    for v in pts:
        m = abs(v)
        if abs(m - 1.0) <= UNIT_CIRCLE_TOL:
            raise OnUnitCircle(f"branch point {v} lies on the unit circle")
        if not (0.0 < m < 1.0):
            raise OutOfDisk(f"inner branch point {v} must satisfy 0 < |nu| < 1")
    for i in range(len(pts)):
        for j in range(i):
            if abs(pts[i] - pts[j]) < 1e-12:
                raise Duplicate(f"branch points {pts[j]} and {pts[i]} coincide")
    return CurveSpec(tuple(pts))


# ---------------------------------------------------------------- branches
def mu_squared(spec: CurveSpec, nu) -> np.ndarray:
    nu = np.asarray(nu, dtype=complex)
    out = nu.copy()
    for v in spec.branch_points:
        out = out * (nu - v)
    return out


def _sqrt_cut_along(nu: np.ndarray, angle: float) -> np.ndarray:
    """Branch of sqrt(nu) whose cut is the ray from 0 in direction ``angle``."""
    rot = np.exp(1j * (angle - np.pi))
    return np.sqrt(rot) * np.sqrt(nu / rot)


def _pair_sqrt(nu: np.ndarray, a: complex, b: complex) -> np.ndarray:
    """Branch of sqrt((nu - a)(nu - b)) with its cut exactly on the segment [a, b]."""
    with np.errstate(divide="ignore", invalid="ignore"):
        w = (nu - b) / (nu - a)
        out = (nu - a) * np.sqrt(w)
    return np.where(nu == a, 0.0, out)


def _mu_unsigned(spec: CurveSpec, nu: np.ndarray) -> np.ndarray:
    out = _sqrt_cut_along(nu, spec.cut_angle)
    for a, b in zip(spec.inner_points, spec.outer_points):
        out = out * _pair_sqrt(nu, a, b)
    return out


def mu_ref(spec: CurveSpec, nu) -> np.ndarray:
    """Reference branch of mu on the cut plane."""
    nu = np.asarray(nu, dtype=complex)
    target = np.sqrt(np.prod([1.0 - v for v in spec.branch_points]))
    sign = 1.0 if abs(_mu_unsigned(spec, np.array(1.0 + 0j)) - target) < abs(target) else -1.0
    return sign * _mu_unsigned(spec, nu)


def mu_tilde_disk(spec: CurveSpec, lam) -> np.ndarray:
    """mu_tilde near lambda = 0, normalized by mu_tilde(0) = s."""
    lam = np.asarray(lam, dtype=complex)
    out = np.full(lam.shape, spec.s, dtype=complex)
    for v in spec.branch_points:
        out = out * np.sqrt(1.0 - lam ** 2 / v)
    return out


def _annulus_unscaled(spec: CurveSpec, lam: np.ndarray) -> np.ndarray:
    out = lam ** spec.genus
    for v in spec.inner_points:
        out = out * np.sqrt(1.0 - v / lam ** 2)
    for w in spec.outer_points:
        out = out * np.sqrt(1.0 - lam ** 2 / w)
    return out


def annulus_constant(spec: CurveSpec) -> complex:
    lam = spec.ray
    return complex(mu_tilde_disk(spec, lam) / _annulus_unscaled(spec, np.array(lam)))


def mu_tilde_annulus(spec: CurveSpec, lam) -> np.ndarray:
    """Continuation of mu_tilde_disk along the ray, valid on the annulus containing S^1."""
    lam = np.asarray(lam, dtype=complex)
    return annulus_constant(spec) * _annulus_unscaled(spec, lam)


def mu_tilde(spec: CurveSpec, lam) -> np.ndarray:
    """Disk form inside the inner branch circle, annulus form outside it."""
    lam = np.asarray(lam, dtype=complex)
    inside = np.abs(lam) < spec.inner_radius
    out = np.empty(lam.shape, dtype=complex)
    out[inside] = mu_tilde_disk(spec, lam[inside])
    out[~inside] = mu_tilde_annulus(spec, lam[~inside])
    return out


# ------------------------------------------------------------------ points
@dataclass(frozen=True)
class CurvePoint:
    nu: complex
    sheet: int = 1
    tag: str = ""           # "P0", "Pinf" or ""

    def mu(self, spec: CurveSpec) -> complex:
        if self.tag:
            return 0j if self.tag == "P0" else complex(np.inf)
        return complex(self.sheet * mu_ref(spec, self.nu))

    @classmethod
    def from_mu(cls, spec: CurveSpec, nu: complex, mu: complex) -> "CurvePoint":
        ref = complex(mu_ref(spec, nu))
        if abs(ref) < 1e-300:
            return cls(complex(nu), 1)
        return cls(complex(nu), 1 if abs(mu - ref) <= abs(mu + ref) else -1)


@dataclass(frozen=True)
class CoverPoint:
    """Point (lambda, mu_tilde) of the double cover nu = lambda^2."""

    lam: complex
    mu_tilde: complex


def apply_involution(spec: CurveSpec, p, which: str):
    """I: sheet swap. sigma_hat: (nu, mu) -> (1/conj nu, conj(nu)^-(g+1) s conj(mu)). rho: cover -> curve."""
    if which == "rho":
        if not isinstance(p, CoverPoint):
            raise TypeError("rho acts on CoverPoint")
        if p.lam == 0:
            return CurvePoint(0j, 1, "P0")
        return CurvePoint.from_mu(spec, p.lam ** 2, p.lam * p.mu_tilde)
    if which == "I":
        if p.tag:
            return p
        return CurvePoint(p.nu, -p.sheet)
    if which == "sigma_hat":
        if p.tag == "P0":
            return CurvePoint(complex(np.inf), 1, "Pinf")
        if p.tag == "Pinf":
            return CurvePoint(0j, 1, "P0")
        nu2 = 1.0 / np.conj(p.nu)
        mu2 = np.conj(p.nu) ** (-(spec.genus + 1)) * spec.s * np.conj(p.mu(spec))
        return CurvePoint.from_mu(spec, nu2, mu2)
    raise ValueError(f"unknown involution {which!r}")


# ------------------------------------------------------------ continuation
def _continue_samples(mu2: np.ndarray, mu0: complex, strict: bool = True) -> np.ndarray:
    """Continuous square roots of mu2 starting near mu0; raises when steps are ambiguous."""
    roots = np.sqrt(mu2)
    out = np.empty_like(roots)
    prev = mu0
    for j, m in enumerate(roots):
        d_same, d_flip = abs(m - prev), abs(m + prev)
        if strict and min(d_same, d_flip) * 10 > max(d_same, d_flip):
            raise AmbiguousContinuation("consecutive square roots are not separated")
        prev = m if d_same <= d_flip else -m
        out[j] = prev
    return out


def _continue_fast(mu2: np.ndarray, mu0: complex) -> tuple[np.ndarray, bool]:
    """Vectorized continuation; returns (values, unambiguous)."""
    roots = np.sqrt(mu2)
    prev = np.concatenate([[mu0], roots[:-1]])
    dot = np.real(roots * np.conj(prev))
    mag = np.abs(roots) * np.abs(prev)
    flips = np.where(dot >= 0, 1.0, -1.0)
    # the start root is compared with mu0, later ones with the previous principal root
    signs = np.cumprod(flips)
    safe = bool(np.all(np.abs(dot) > 0.98 * mag))
    return roots * signs, safe


@dataclass
class CyclePath:
    kind: str                         # "a_cycle", "b_cycle", "open_path"
    index: int
    waypoints: np.ndarray             # sampled nu values (closed paths omit the repeat)
    mu: np.ndarray                    # continued mu at the waypoints
    closed: bool = True
    components: list = field(default_factory=list)   # (integer, Ellipse) for combinations
    start_sheet: int = 1
    end_sheet: int = 1

    @property
    def sheets(self) -> np.ndarray:
        return np.sign(np.real(self.mu * np.conj(self._ref))) if hasattr(self, "_ref") else None

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "index": self.index, "closed": self.closed,
                "start_sheet": self.start_sheet, "end_sheet": self.end_sheet,
                "waypoints": [[float(v.real), float(v.imag)] for v in self.waypoints],
                "components": [[int(c), e.label] for c, e in self.components]}


def continue_mu(spec: CurveSpec, path, start_sheet: int = 1, max_refine: int = 12) -> CyclePath:
    """Continue mu along a waypoint polyline, refining segments until every step is unambiguous."""
    pts = np.asarray(path, dtype=complex)
    branch = np.concatenate([[0j], spec.branch_points])
    # distance from each segment to every branch point
    a, b = pts[:-1, None], pts[1:, None]
    d = b - a
    t = np.clip(np.real((branch[None, :] - a) * np.conj(d)) / np.maximum(np.abs(d) ** 2, 1e-300), 0, 1)
    dist = np.abs(a + t * d - branch[None, :])
    if np.min(dist) < BRANCH_EXCLUSION:
        raise BranchTooClose(f"path passes within {np.min(dist):.2e} of a branch point")
    sep = np.min(dist)
    mu0 = start_sheet * complex(mu_ref(spec, pts[0]))
    n_sub = max(2, int(np.ceil(np.max(np.abs(d)) / (0.01 * max(sep, 1e-3)))))
    for _ in range(max_refine):
        s = np.linspace(0, 1, n_sub, endpoint=False)
        dense = (pts[:-1, None] + (pts[1:, None] - pts[:-1, None]) * s[None, :]).ravel()
        dense = np.concatenate([dense, pts[-1:]])
        vals, safe = _continue_fast(mu_squared(spec, dense), mu0)
        if safe:
            break
        n_sub *= 2
    else:
        raise AmbiguousContinuation("continuation did not stabilize under refinement")
    idx = np.arange(0, len(dense), n_sub)
    closed = bool(abs(pts[0] - pts[-1]) < 1e-14)
    # a closed path may end a rounding error across the reference cut; label against the start
    end_ref = complex(mu_ref(spec, pts[0] if closed else pts[-1]))
    end_sheet = 1 if abs(vals[-1] - end_ref) <= abs(vals[-1] + end_ref) else -1
    return CyclePath("open_path", 0, pts, vals[idx], closed, [], start_sheet, end_sheet)


# ---------------------------------------------------------------- ellipses
@dataclass(frozen=True)
class Ellipse:
    """Closed loop nu(theta) = m + e^{i phi} (L/2) cos(theta - i eta), counterclockwise."""

    center: complex
    half_length: float
    direction: complex          # unit complex e^{i phi}
    eta: float
    start_sheet: int = 1
    label: str = ""

    def nu(self, theta):
        return self.center + self.direction * self.half_length * np.cos(theta - 1j * self.eta)

    def dnu(self, theta):
        return -self.direction * self.half_length * np.sin(theta - 1j * self.eta)

    def samples(self, M: int):
        theta = 2 * np.pi * np.arange(M) / M
        return self.nu(theta), self.dnu(theta)


def _elliptic_eta(m: complex, half: float, direction: complex, w: complex) -> float:
    x = (w - m) / (direction * half)
    return float(np.real(np.arccosh(x + 0j)) if np.real(x) >= 0 else np.real(np.arccosh(-x + 0j)))


def _ellipse_around(spec: CurveSpec, a: complex, b: complex, sheet: int, label: str) -> Ellipse:
    m = 0.5 * (a + b)
    half = 0.5 * abs(b - a)
    direction = (b - a) / abs(b - a)
    others = [w for w in np.concatenate([[0j], spec.branch_points])
              if abs(w - a) > 1e-14 and abs(w - b) > 1e-14]
    etas = [_elliptic_eta(m, half, direction, w) for w in others]
    eta_min = min(etas) if etas else 2.0
    if eta_min < 1e-6:
        raise CutsIntersect(f"another branch point lies on the cut [{a}, {b}]")
    return Ellipse(m, half, direction, min(0.5 * eta_min, 1.0), sheet, label)


def loop_mu(spec: CurveSpec, ell: Ellipse, M: int):
    """Samples (nu, dnu/dtheta, mu) on an ellipse with mu continued from its start sheet."""
    nu, dnu = ell.samples(M)
    mu0 = ell.start_sheet * complex(mu_ref(spec, nu[0]))
    vals, safe = _continue_fast(mu_squared(spec, nu), mu0)
    if not safe:
        raise AmbiguousContinuation(f"{M} samples do not resolve mu on {ell.label}")
    return nu, dnu, vals


def loop_basis_integrals(spec: CurveSpec, ell: Ellipse, degrees, tol: float = 1e-14,
                         M0: int = 256, M_max: int = 1 << 18) -> np.ndarray:
    """Integrals of nu^k dnu / mu over the ellipse for k in ``degrees`` (periodic trapezoid)."""
    degrees = np.asarray(list(degrees))
    prev = None
    M = M0
    while M <= M_max:
        try:
            nu, dnu, mu = loop_mu(spec, ell, M)
        except AmbiguousContinuation:
            M *= 2
            continue
        integrand = (nu[None, :] ** degrees[:, None]) * (dnu / mu)[None, :]
        val = integrand.sum(axis=1) * (2 * np.pi / M)
        if prev is not None:
            scale = max(1.0, float(np.max(np.abs(val))))
            if np.max(np.abs(val - prev)) < tol * scale:
                return val
        prev = val
        M *= 2
    raise QuadratureFail(f"trapezoid rule on {ell.label} did not converge")


# ---------------------------------------------------------------- homology
def _crossings(p: np.ndarray, q: np.ndarray):
    """Transversal crossings of two closed polylines: (i, t, j, u) parameters."""
    p1, p2 = p, np.roll(p, -1)
    q1, q2 = q, np.roll(q, -1)
    d = p2 - p1
    e = q2 - q1
    # bounding box prefilter
    out = []
    pmin_x, pmax_x = np.minimum(p1.real, p2.real), np.maximum(p1.real, p2.real)
    pmin_y, pmax_y = np.minimum(p1.imag, p2.imag), np.maximum(p1.imag, p2.imag)
    qmin_x, qmax_x = np.minimum(q1.real, q2.real), np.maximum(q1.real, q2.real)
    qmin_y, qmax_y = np.minimum(q1.imag, q2.imag), np.maximum(q1.imag, q2.imag)
    cand = ((pmin_x[:, None] <= qmax_x[None, :]) & (qmin_x[None, :] <= pmax_x[:, None]) &
            (pmin_y[:, None] <= qmax_y[None, :]) & (qmin_y[None, :] <= pmax_y[:, None]))
    ii, jj = np.nonzero(cand)
    for i, j in zip(ii, jj):
        den = np.imag(np.conj(d[i]) * e[j])
        if den == 0:
            continue
        w = q1[j] - p1[i]
        t = np.imag(np.conj(w) * e[j]) / den
        u = np.imag(np.conj(w) * d[i]) / den
        if 0 <= t < 1 and 0 <= u < 1:
            out.append((i, t, j, u, np.sign(den)))
    return out


def intersection_number(spec: CurveSpec, first: Ellipse, second: Ellipse, M: int = 2048) -> int:
    """Algebraic intersection number first . second on the curve."""
    nu1, _, mu1 = loop_mu(spec, first, M)
    nu2, _, mu2 = loop_mu(spec, second, M)
    total = 0
    for i, t, j, u, sign in _crossings(nu1, nu2):
        m1 = mu1[i] + t * (mu1[(i + 1) % M] - mu1[i])
        m2 = mu2[j] + u * (mu2[(j + 1) % M] - mu2[j])
        if abs(m1 - m2) < abs(m1 + m2):
            total += int(sign)
    return total


@dataclass
class Homology:
    """Canonical basis a_k, b_k as integer combinations of ellipses."""

    a_loops: list
    b_prime: list
    b_combos: list               # per k: list of (coefficient, Ellipse)
    intersections: np.ndarray    # a_i . b'_j before correction

    def a_cycle(self, k: int) -> list:
        return [(1, self.a_loops[k])]

    def b_cycle(self, k: int) -> list:
        return self.b_combos[k]


def build_homology(spec: CurveSpec) -> Homology:
    g = spec.genus
    inner = list(spec.inner_points)
    for i in range(g):
        for j in range(i):
            da = abs(np.angle(inner[i] / inner[j]))
            if da < 1e-9:
                raise CutsIntersect(f"inner points {inner[j]} and {inner[i]} share an argument")
    a_loops = [_ellipse_around(spec, v, w, 1, f"a{k + 1}")
               for k, (v, w) in enumerate(zip(spec.inner_points, spec.outer_points))]
    b_prime = [_ellipse_around(spec, 0j, v, 1, f"b'{k + 1}") for k, v in enumerate(spec.inner_points)]
    S_ab = np.array([[intersection_number(spec, a, b) for b in b_prime] for a in a_loops])
    S_bb = np.array([[intersection_number(spec, bi, bj) if i != j else 0
                      for j, bj in enumerate(b_prime)] for i, bi in enumerate(b_prime)])
    eps = np.diag(S_ab).astype(int)
    if np.any(np.abs(eps) != 1) or np.any(S_ab - np.diag(np.diag(S_ab)) != 0):
        raise CutsIntersect(f"unexpected a.b' intersection matrix {S_ab.tolist()}")
    combos = []
    for i in range(g):
        combo = [(int(eps[i]), b_prime[i])]
        for j in range(i + 1, g):
            n = -int(S_bb[i, j]) * int(eps[j])
            if n:
                combo.append((int(eps[i]) * n, a_loops[j]))
        combos.append(combo)
    return Homology(a_loops, b_prime, combos, S_ab)


def cycle_integrals(spec: CurveSpec, combo, degrees, tol: float = 1e-14) -> np.ndarray:
    total = 0
    for coef, ell in combo:
        total = total + coef * loop_basis_integrals(spec, ell, degrees, tol)
    return total


def build_cycles(spec: CurveSpec, M: int = 512) -> list[CyclePath]:
    """a_1..a_g followed by b_1..b_g as sampled CyclePath records."""
    hom = build_homology(spec)
    paths = []
    for k, ell in enumerate(hom.a_loops):
        nu, _, mu = loop_mu(spec, ell, M)
        paths.append(CyclePath("a_cycle", k + 1, nu, mu, True, [(1, ell)], 1, 1))
    for k, combo in enumerate(hom.b_combos):
        base = combo[0][1]
        nu, _, mu = loop_mu(spec, base, M)
        paths.append(CyclePath("b_cycle", k + 1, nu, mu, True, combo, 1, 1))
    return paths


def period_matrix(spec: CurveSpec, hom: Homology | None = None) -> np.ndarray:
    """tau = A^{-1} B for the holomorphic basis nu^k dnu / mu, k < g."""
    hom = hom or build_homology(spec)
    g = spec.genus
    deg = range(g)
    A = np.column_stack([cycle_integrals(spec, hom.a_cycle(k), deg) for k in range(g)])
    B = np.column_stack([cycle_integrals(spec, hom.b_cycle(k), deg) for k in range(g)])
    return np.linalg.solve(A, B)


# ----------------------------------------------------------- open paths
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _panel_nodes(panels: int):
    edges = np.linspace(0, 1, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * _GL_X[None, :] + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * _GL_W[None, :]).ravel()
    return nodes, weights


def segment_integrals(spec: CurveSpec, start: complex, end: complex, mu_start: complex,
                      degrees, end_is_branch: bool = False, tol: float = 1e-12,
                      max_panels: int = 1024) -> np.ndarray:
    """Integrals of nu^k dnu / mu along the straight segment start -> end.

    ``mu_start`` selects the sheet at the (regular) start. When the end is a
    branch point the substitution nu = end + (start - end)(1 - s)^2 removes
    the inverse square-root singularity.
    """
    degrees = np.asarray(list(degrees))
    branch = np.concatenate([[0j], spec.branch_points])
    d = end - start
    t = np.clip(np.real((branch - start) * np.conj(d)) / abs(d) ** 2, 0, 1)
    dist = np.abs(start + t * d - branch)
    if end_is_branch:
        dist = dist[np.abs(branch - end) > 1e-14]
    if dist.size and np.min(dist) < BRANCH_EXCLUSION:
        raise BranchTooClose(f"segment passes within {np.min(dist):.2e} of a branch point")
    prev = None
    panels = 2
    while panels <= max_panels:
        s, w = _panel_nodes(panels)
        if end_is_branch:
            nu = end + (start - end) * (1 - s) ** 2
            jac = 2 * d * (1 - s)
        else:
            nu = start + d * s
            jac = np.full(s.shape, d)
        # continuation along a fine uniform walk that visits every node in order
        walk = np.concatenate([[start], nu])
        fine = (walk[:-1, None] + np.diff(walk)[:, None] * np.linspace(0, 1, 4, endpoint=False)).ravel()
        fine = np.concatenate([fine, nu[-1:]])
        vals, safe = _continue_fast(mu_squared(spec, fine), mu_start)
        if not safe:
            panels *= 2
            continue
        mu = vals[4::4]
        if end_is_branch:
            # rebuild mu^2 from the exact offset to the branch point; nu - end loses digits near it
            exact = (start - end) * (1 - s) ** 2
            for v in branch:
                if v != end:
                    exact = exact * (nu - v)
            root = np.sqrt(exact)
            mu = np.where(np.real(root * np.conj(mu)) >= 0, root, -root)
        val = ((nu[None, :] ** degrees[:, None]) * (jac * w / mu)[None, :]).sum(axis=1)
        if prev is not None:
            scale = max(1.0, float(np.max(np.abs(val))))
            if np.max(np.abs(val - prev)) < tol * scale:
                return val
        prev = val
        panels *= 2
    raise QuadratureFail("Gauss-Legendre panels did not converge on open segment")


def continue_to(spec: CurveSpec, start: complex, end: complex, mu_start: complex,
                steps: int = 256) -> complex:
    """mu at ``end`` continued along the straight segment from (start, mu_start)."""
    for _ in range(8):
        pts = np.linspace(start, end, steps)
        vals, safe = _continue_fast(mu_squared(spec, pts), mu_start)
        if safe:
            return complex(vals[-1])
        steps *= 4
    raise AmbiguousContinuation(f"cannot continue mu from {start} to {end}")


def polyline_integrals(spec: CurveSpec, waypoints, mu_start: complex, degrees,
                       end_is_branch: bool = False) -> np.ndarray:
    """Integrals of nu^k dnu / mu along a polyline, mu continued from the first point."""
    pts = [complex(w) for w in waypoints]
    total = 0
    mu = mu_start
    for j in range(len(pts) - 1):
        last = j == len(pts) - 2
        total = total + segment_integrals(spec, pts[j], pts[j + 1], mu, degrees,
                                          end_is_branch=end_is_branch and last)
        if not last:
            mu = continue_to(spec, pts[j], pts[j + 1], mu)
    return total


def arc_path(r1: float, theta1: float, r2: float, theta2: float, per_radian: int = 24) -> list:
    """Waypoints: arc at radius r1 from theta1 to theta2, then radially to radius r2."""
    n = max(2, int(np.ceil(abs(theta2 - theta1) * per_radian)) + 1)
    arc = list(r1 * np.exp(1j * np.linspace(theta1, theta2, n)))
    return arc + [r2 * np.exp(1j * theta2)]


def route_to_branch(spec: CurveSpec, start: complex, mu_start: complex, target: complex, degrees):
    """Integrals from a regular point to a branch point along the first unobstructed route.

    Candidates: the straight segment; then an arc at |start| to a direction
    near arg(target), a radial leg out to |target|, and an arc onto target.
    """
    try:
        return segment_integrals(spec, start, target, mu_start, degrees, end_is_branch=True)
    except BranchTooClose:
        pass
    directions = np.concatenate([[0j], spec.branch_points])
    angles = np.sort(np.mod(np.angle(directions[1:]), 2 * np.pi))
    gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))
    gap = max(float(np.min(gaps[gaps > 1e-9], initial=np.pi)), 1e-3)
    t_start, t_end = np.angle(start), np.angle(target)
    for frac in (0.5, -0.5, 0.25, -0.25, 0.75, -0.75):
        theta = t_end + frac * gap
        # unwrap so the arc takes the short way round
        theta1 = t_start + np.angle(np.exp(1j * (theta - t_start)))
        pts = arc_path(abs(start), t_start, abs(target), theta1)
        tail = abs(target) * np.exp(1j * np.linspace(theta1, theta1 - frac * gap, 8))
        pts = pts + list(tail[1:-1]) + [target]
        try:
            return polyline_integrals(spec, pts, mu_start, degrees, end_is_branch=True)
        except BranchTooClose:
            continue
    raise BranchTooClose(f"no route from {start} to branch point {target}")
