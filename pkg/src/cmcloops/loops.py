"""Truncated Laurent series of 2x2 complex matrices on a circle |lambda| = r.

A :class:`LoopMatrix` holds the true lambda-coefficients of a loop in a
dense window ``[lo, lo + len - 1]`` that always sits inside ``[-N, N]``.
The radius is metadata: it names the circle on which the series is meant
to be evaluated and on which sampling helpers work by default.

Twisted loops satisfy g(-lambda) = sigma3 g(lambda) sigma3, i.e. the
diagonal lives in even degrees and the off-diagonal in odd degrees.
"""

from __future__ import annotations

import json
from typing import Iterable, Mapping

import numpy as np

from .errors import BadRadius, EvalAtZero, RadiusMismatch, TwistingViolation

A = np.array([[0, 1], [1, 0]], dtype=complex)
D = np.array([[1, 1], [-1, 1]], dtype=complex) / np.sqrt(2.0)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

# entries that must vanish for a twisted loop, indexed by degree parity
_EVEN_FORBIDDEN = np.array([[False, True], [True, False]])
_ODD_FORBIDDEN = ~_EVEN_FORBIDDEN

# forbidden entries below this fraction of the largest scaled coefficient
# are treated as roundoff and cleared when loops are built from samples
TWIST_ROUNDOFF = 1e-8


def _check_radius(r: float) -> float:
    r = float(r)
    if not (0.0 < r <= 1.0) or not np.isfinite(r):
        raise BadRadius(f"radius must lie in (0, 1], got {r}")
    return r


def _forbidden_mask(lo: int, length: int) -> np.ndarray:
    """Boolean (length, 2, 2) mask of entries a twisted loop must keep zero."""
    degrees = np.arange(lo, lo + length)
    return np.where((degrees % 2 == 0)[:, None, None], _EVEN_FORBIDDEN, _ODD_FORBIDDEN)


def _radius_weights(lo: int, length: int, r: float) -> np.ndarray:
    return r ** np.arange(lo, lo + length, dtype=float)


class LoopMatrix:
    """Immutable truncated Laurent series of 2x2 matrices.

    Build one with :func:`make_loop`, :meth:`from_array` or
    :meth:`from_samples`. ``truncation_residual`` carries the C_r sup-norm
    bound of whatever was discarded when the loop was produced.
    """

    __slots__ = ("_lo", "_data", "r", "N", "twisted", "truncation_residual")

    def __init__(self, lo: int, data: np.ndarray, r: float, N: int, twisted: bool,
                 truncation_residual: float = 0.0):
        data = np.array(data, dtype=complex)
        if data.ndim != 3 or data.shape[1:] != (2, 2):
            raise ValueError("coefficient block must have shape (n, 2, 2)")
        if N < 1:
            raise ValueError("truncation N must be >= 1")
        self.r = _check_radius(r)
        self.N = int(N)
        self.twisted = bool(twisted)
        lo = int(lo)
        if data.shape[0] == 0:
            lo, data = 0, np.zeros((1, 2, 2), dtype=complex)
        hi = lo + data.shape[0] - 1
        if lo < -self.N or hi > self.N:
            raise ValueError(f"degrees [{lo}, {hi}] exceed truncation N={self.N}")
        if self.twisted and np.any(data[_forbidden_mask(lo, data.shape[0])] != 0):
            raise TwistingViolation("coefficients violate the twisting condition")
        data.setflags(write=False)
        self._lo = lo
        self._data = data
        self.truncation_residual = float(truncation_residual)

    # -- construction -------------------------------------------------
    @classmethod
    def from_array(cls, lo, data, r, N, twisted, truncation_residual=0.0, clean_twist=False,
                   clean_radius=None):
        """Build from a dense block, optionally clearing roundoff twisting noise.

        Noise is judged relative to the coefficients weighted on the circle of
        radius ``clean_radius`` (default r).
        """
        data = np.array(data, dtype=complex)
        if twisted and clean_twist:
            mask = _forbidden_mask(lo, data.shape[0])
            rho = r if clean_radius is None else clean_radius
            scaled = np.abs(data) * _radius_weights(lo, data.shape[0], rho)[:, None, None]
            scale = max(scaled.max(initial=0.0), 1e-300)
            if np.any(scaled[mask] > TWIST_ROUNDOFF * scale):
                worst = scaled[mask].max() / scale
                raise TwistingViolation(f"twisting violated at relative size {worst:.2e}")
            data[mask] = 0.0
        return cls(lo, data, r, N, twisted, truncation_residual)

    @classmethod
    def from_samples(cls, values, r, N, twisted=False, radius=None, degree_range=None):
        """Loop from samples at radius * exp(2 pi i j / M), j = 0..M-1.

        ``radius`` defaults to ``r``. Modes outside ``degree_range`` (default
        [-N, N]) are discarded and their C_r weight recorded as residual.
        """
        values = np.asarray(values, dtype=complex)
        M = values.shape[0]
        rho = r if radius is None else float(radius)
        lo, hi = (-N, N) if degree_range is None else degree_range
        if hi - lo + 1 > M:
            raise ValueError(f"{M} samples cannot resolve degrees [{lo}, {hi}]")
        modes = np.fft.fft(values, axis=0) / M
        freq = np.fft.fftfreq(M, d=1.0 / M).astype(int)
        keep = (freq >= lo) & (freq <= hi)
        data = np.zeros((hi - lo + 1, 2, 2), dtype=complex)
        degrees = freq[keep]
        data[degrees - lo] = modes[keep] / (rho ** degrees.astype(float))[:, None, None]
        dropped = modes[~keep]
        residual = float(np.sum(np.linalg.norm(dropped, axis=(1, 2)))) if dropped.size else 0.0
        return cls.from_array(lo, data, r, N, twisted, residual, clean_twist=True, clean_radius=rho)

    # -- views --------------------------------------------------------
    @property
    def lo(self) -> int:
        return self._lo

    @property
    def hi(self) -> int:
        return self._lo + self._data.shape[0] - 1

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def degrees(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    @property
    def coeffs(self) -> dict[int, np.ndarray]:
        return {int(n): self._data[n - self.lo] for n in self.degrees
                if np.any(self._data[n - self.lo] != 0)}

    def coeff(self, n: int) -> np.ndarray:
        if self.lo <= n <= self.hi:
            return self._data[n - self.lo]
        return np.zeros((2, 2), dtype=complex)

    def window(self, lo: int, hi: int) -> np.ndarray:
        """Dense coefficient block for degrees lo..hi (zero padded)."""
        out = np.zeros((hi - lo + 1, 2, 2), dtype=complex)
        a, b = max(lo, self.lo), min(hi, self.hi)
        if a <= b:
            out[a - lo:b - lo + 1] = self._data[a - self.lo:b - self.lo + 1]
        return out

    def with_radius(self, r: float) -> "LoopMatrix":
        return LoopMatrix(self.lo, self._data, r, self.N, self.twisted, self.truncation_residual)

    # -- evaluation ---------------------------------------------------
    def __call__(self, lam):
        return evaluate(self, lam)

    def samples(self, M: int, radius: float | None = None) -> np.ndarray:
        """Values at radius * exp(2 pi i j / M) via one inverse FFT."""
        rho = self.r if radius is None else float(radius)
        buf = np.zeros((M, 2, 2), dtype=complex)
        scaled = self._data * (rho ** self.degrees.astype(float))[:, None, None]
        np.add.at(buf, self.degrees % M, scaled)
        return np.fft.ifft(buf, axis=0) * M

    def tail_norm(self, fraction: float = 0.25) -> float:
        """C_r weight of coefficients in the outer ``fraction`` of [-N, N]."""
        cut = int(np.ceil((1.0 - fraction) * self.N))
        deg = self.degrees
        mask = np.abs(deg) > cut
        if not np.any(mask):
            return 0.0
        w = self.r ** deg[mask].astype(float)
        return float(np.sum(np.linalg.norm(self._data[mask], axis=(1, 2)) * w))

    def adjugate(self) -> "LoopMatrix":
        """Coefficient-wise adjugate; equals the inverse when det = 1."""
        d = self._data
        adj = np.empty_like(d)
        adj[:, 0, 0] = d[:, 1, 1]
        adj[:, 1, 1] = d[:, 0, 0]
        adj[:, 0, 1] = -d[:, 0, 1]
        adj[:, 1, 0] = -d[:, 1, 0]
        return LoopMatrix(self.lo, adj, self.r, self.N, self.twisted, self.truncation_residual)

    def det_deviation(self, M: int = 64) -> float:
        vals = self.samples(M)
        return float(np.max(np.abs(np.linalg.det(vals) - 1.0)))

    def __repr__(self) -> str:
        return (f"LoopMatrix(degrees=[{self.lo},{self.hi}], r={self.r}, N={self.N}, "
                f"twisted={self.twisted})")

    # -- serialization ------------------------------------------------
    def to_json_dict(self) -> dict:
        coeffs = {}
        for n, block in self.coeffs.items():
            coeffs[str(n)] = [[[float(v.real), float(v.imag)] for v in row] for row in block]
        return {"r": self.r, "N": self.N, "twisted": self.twisted, "coeffs": coeffs}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, obj: Mapping) -> "LoopMatrix":
        coeffs = {int(k): np.array([[complex(re, im) for re, im in row] for row in v])
                  for k, v in obj["coeffs"].items()}
        return make_loop(coeffs, obj["r"], obj.get("twisted", True), N=obj.get("N"))

    @classmethod
    def from_json(cls, text: str) -> "LoopMatrix":
        return cls.from_json_dict(json.loads(text))


def make_loop(coeffs: Mapping[int, Iterable], r: float, twisted: bool, N: int | None = None) -> LoopMatrix:
    """Validated loop from a degree -> 2x2 map. N defaults to the largest |degree|."""
    r = _check_radius(r)
    blocks = {int(n): np.asarray(c, dtype=complex).reshape(2, 2) for n, c in coeffs.items()}
    if not blocks:
        blocks = {0: np.zeros((2, 2), dtype=complex)}
    lo, hi = min(blocks), max(blocks)
    if N is None:
        N = max(1, abs(lo), abs(hi))
    if lo < -N or hi > N:
        raise ValueError(f"degree outside the declared truncation N={N}")
    data = np.zeros((hi - lo + 1, 2, 2), dtype=complex)
    for n, block in blocks.items():
        data[n - lo] = block
    return LoopMatrix(lo, data, r, N, twisted)


def identity(r: float = 1.0, N: int = 32, twisted: bool = True) -> LoopMatrix:
    return LoopMatrix(0, IDENTITY[None], r, N, twisted)


def constant(matrix, r: float = 1.0, N: int = 32, twisted: bool = False) -> LoopMatrix:
    return LoopMatrix(0, np.asarray(matrix, dtype=complex)[None], r, N, twisted)


def multiply(g: LoopMatrix, h: LoopMatrix) -> LoopMatrix:
    """Cauchy product truncated to [-N, N], N the larger of the two truncations."""
    if not np.isclose(g.r, h.r, rtol=0, atol=1e-15):
        raise RadiusMismatch(f"radii differ: {g.r} vs {h.r}")
    N = max(g.N, h.N)
    lo = g.lo + h.lo
    full = np.zeros((g.data.shape[0] + h.data.shape[0] - 1, 2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                full[:, i, j] += np.convolve(g.data[:, i, k], h.data[:, k, j])
    degrees = np.arange(lo, lo + full.shape[0])
    keep = (degrees >= -N) & (degrees <= N)
    dropped = full[~keep]
    residual = 0.0
    if dropped.size:
        w = g.r ** degrees[~keep].astype(float)
        residual = float(np.sum(np.linalg.norm(dropped, axis=(1, 2)) * w))
    kept = full[keep]
    new_lo = int(degrees[keep][0]) if kept.shape[0] else 0
    twisted = g.twisted and h.twisted
    return LoopMatrix.from_array(new_lo, kept, g.r, N, twisted,
                                 residual + g.truncation_residual + h.truncation_residual,
                                 clean_twist=twisted)


def star(g: LoopMatrix) -> LoopMatrix:
    """Reflection at the unit circle: degree n -> -n with conjugate transpose."""
    data = np.conj(np.transpose(g.data[::-1], (0, 2, 1)))
    return LoopMatrix(-g.hi, data, g.r, g.N, g.twisted, g.truncation_residual)


def evaluate(g: LoopMatrix, lam) -> np.ndarray:
    """g(lambda) for a scalar or array of nonzero lambda; shape (..., 2, 2)."""
    lam = np.asarray(lam, dtype=complex)
    if np.any(lam == 0):
        raise EvalAtZero("loops are evaluated only on C*")
    powers = lam[..., None] ** g.degrees
    return np.einsum("...n,nij->...ij", powers, g.data)


def deriv_theta(g: LoopMatrix, lam0) -> np.ndarray:
    """d/dtheta of g(e^{i theta}) at lambda0, i.e. sum of i n lambda0^n c_n."""
    lam0 = np.asarray(lam0, dtype=complex)
    if np.any(lam0 == 0):
        raise EvalAtZero("loops are evaluated only on C*")
    weights = 1j * g.degrees * lam0[..., None] ** g.degrees
    return np.einsum("...n,nij->...ij", weights, g.data)


def circle_points(M: int, radius: float = 1.0) -> np.ndarray:
    return radius * np.exp(2j * np.pi * np.arange(M) / M)


class ScalarLoop:
    """Truncated Laurent series of a scalar function with a parity tag."""

    __slots__ = ("_lo", "_data", "r", "N", "parity")

    def __init__(self, lo: int, data, r: float, N: int, parity: str = "none"):
        if parity not in ("even", "odd", "none"):
            raise ValueError(f"unknown parity {parity!r}")
        data = np.array(data, dtype=complex).reshape(-1)
        if data.size == 0:
            lo, data = 0, np.zeros(1, dtype=complex)
        self.r = _check_radius(r)
        self.N = int(N)
        self.parity = parity
        hi = lo + data.size - 1
        if lo < -self.N or hi > self.N:
            raise ValueError(f"degrees [{lo}, {hi}] exceed truncation N={self.N}")
        if parity != "none":
            degrees = np.arange(lo, hi + 1)
            bad = (degrees % 2 == 1) if parity == "even" else (degrees % 2 == 0)
            if np.any(data[bad] != 0):
                raise TwistingViolation(f"coefficients violate {parity} parity")
        data.setflags(write=False)
        self._lo = int(lo)
        self._data = data

    @classmethod
    def from_samples(cls, values, r, N, parity="none", radius=None, degree_range=None,
                     clean_parity=True):
        values = np.asarray(values, dtype=complex)
        M = values.shape[0]
        rho = r if radius is None else float(radius)
        lo, hi = (-N, N) if degree_range is None else degree_range
        modes = np.fft.fft(values) / M
        freq = np.fft.fftfreq(M, d=1.0 / M).astype(int)
        keep = (freq >= lo) & (freq <= hi)
        data = np.zeros(hi - lo + 1, dtype=complex)
        data[freq[keep] - lo] = modes[keep] / rho ** freq[keep].astype(float)
        if parity != "none" and clean_parity:
            degrees = np.arange(lo, hi + 1)
            bad = (degrees % 2 == 1) if parity == "even" else (degrees % 2 == 0)
            scaled = np.abs(data) * rho ** degrees.astype(float)
            scale = max(scaled.max(initial=0.0), 1e-300)
            if np.any(scaled[bad] > TWIST_ROUNDOFF * scale):
                raise TwistingViolation(f"samples are not {parity}")
            data[bad] = 0.0
        return cls(lo, data, r, N, parity)

    @property
    def lo(self) -> int:
        return self._lo

    @property
    def hi(self) -> int:
        return self._lo + self._data.size - 1

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def degrees(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    @property
    def coeffs(self) -> dict[int, complex]:
        return {int(n): complex(c) for n, c in zip(self.degrees, self._data) if c != 0}

    def coeff(self, n: int) -> complex:
        return complex(self._data[n - self.lo]) if self.lo <= n <= self.hi else 0j

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=complex)
        if np.any(lam == 0) and self.lo < 0:
            raise EvalAtZero("series has negative degrees")
        return (lam[..., None] ** self.degrees) @ self._data

    def samples(self, M: int, radius: float | None = None) -> np.ndarray:
        rho = self.r if radius is None else float(radius)
        buf = np.zeros(M, dtype=complex)
        np.add.at(buf, self.degrees % M, self._data * rho ** self.degrees.astype(float))
        return np.fft.ifft(buf) * M

    def __repr__(self) -> str:
        return f"ScalarLoop(degrees=[{self.lo},{self.hi}], r={self.r}, parity={self.parity})"


def random_twisted_loop(rng: np.random.Generator, degree: int = 8, r: float = 0.5,
                        N: int = 32, factors: int = 2) -> LoopMatrix:
    """Random twisted SL(2) Laurent polynomial loop of degree at most ``degree``.

    Product of alternating unipotent factors [[1, x], [0, 1]] and
    [[1, 0], [y, 1]] with odd Laurent polynomials x, y; the coefficient of
    lambda^n is drawn at size r^|n| so every factor is O(1) on C_r.
    """
    per = max(1, degree // factors)
    odd = [n for n in range(-per, per + 1) if n % 2]
    if not odd:
        odd = [-1, 1]
    loop = identity(r, N, twisted=True)
    for k in range(factors):
        block = {0: IDENTITY.copy()}
        for n in odd:
            c = (rng.standard_normal() + 1j * rng.standard_normal()) * r ** abs(n) / np.sqrt(2 * len(odd))
            m = np.zeros((2, 2), dtype=complex)
            m[(0, 1) if k % 2 == 0 else (1, 0)] = c
            block[n] = m
        loop = multiply(loop, make_loop(block, r, True, N=N))
    return loop
