"""Rational functions of one complex variable, numerator/denominator form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial


def _poly(coeffs) -> Polynomial:
    if isinstance(coeffs, Polynomial):
        return coeffs
    return Polynomial(np.asarray(coeffs, dtype=complex))


def _trim(p: Polynomial, tol: float = 0.0) -> Polynomial:
    c = np.asarray(p.coef, dtype=complex)
    if c.size == 0:
        return Polynomial([0j])
    scale = np.max(np.abs(c))
    keep = np.nonzero(np.abs(c) > tol * scale)[0] if scale > 0 else []
    if len(keep) == 0:
        return Polynomial([0j])
    return Polynomial(c[:keep[-1] + 1])


@dataclass(frozen=True)
class RationalFn:
    """f(x) = num(x) / den(x) with ascending coefficient arrays."""

    num: Polynomial
    den: Polynomial

    def __init__(self, num, den=(1.0,)):
        object.__setattr__(self, "num", _trim(_poly(num)))
        object.__setattr__(self, "den", _trim(_poly(den)))
        if not np.any(self.den.coef != 0):
            raise ZeroDivisionError("zero denominator")

    @classmethod
    def from_roots(cls, zeros=(), poles=(), gain: complex = 1.0) -> "RationalFn":
        num = Polynomial.fromroots(list(zeros)) if len(zeros) else Polynomial([1.0 + 0j])
        den = Polynomial.fromroots(list(poles)) if len(poles) else Polynomial([1.0 + 0j])
        return cls(num * gain, den)

    @classmethod
    def laurent(cls, coeffs: dict[int, complex]) -> "RationalFn":
        """sum c_k x^k over integer k (negative powers allowed)."""
        lo = min(0, min(coeffs))
        top = max(coeffs) - lo
        num = np.zeros(top + 1, dtype=complex)
        for k, c in coeffs.items():
            num[k - lo] = c
        den = np.zeros(-lo + 1, dtype=complex)
        den[-lo] = 1.0
        return cls(num, den)

    # arithmetic ----------------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        return self.num(x) / self.den(x)

    def __mul__(self, other):
        if isinstance(other, RationalFn):
            return RationalFn(self.num * other.num, self.den * other.den)
        return RationalFn(self.num * complex(other), self.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, RationalFn):
            return RationalFn(self.num * other.den, self.den * other.num)
        return RationalFn(self.num / complex(other), self.den)

    def __add__(self, other):
        if not isinstance(other, RationalFn):
            other = RationalFn([complex(other)])
        return RationalFn(self.num * other.den + other.num * self.den, self.den * other.den)

    __radd__ = __add__

    def __neg__(self):
        return RationalFn(-self.num, self.den)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __pow__(self, n: int):
        if n < 0:
            return RationalFn(self.den ** (-n), self.num ** (-n))
        return RationalFn(self.num ** n, self.den ** n)

    def star(self) -> "RationalFn":
        """x -> conj(f(1/conj(x))): conjugate-reverse both polynomials."""
        dn, dd = self.num.degree(), self.den.degree()
        num = np.conj(self.num.coef[::-1])
        den = np.conj(self.den.coef[::-1])
        # conj(p(1/conj x)) = x^{-deg p} * reversed-conjugate(p)(x)
        shift = dd - dn
        if shift >= 0:
            num = np.concatenate([np.zeros(shift), num])
        else:
            den = np.concatenate([np.zeros(-shift), den])
        return RationalFn(num, den)

    # structure -----------------------------------------------------
    def zeros(self) -> np.ndarray:
        return self.num.roots() if self.num.degree() > 0 else np.array([], dtype=complex)

    def poles(self) -> np.ndarray:
        return self.den.roots() if self.den.degree() > 0 else np.array([], dtype=complex)

    def order_at(self, x0: complex, tol: float = 1e-8) -> int:
        """Zero order (positive) or minus pole order (negative) at x0."""
        def mult(p: Polynomial) -> int:
            count = 0
            q = p
            while q.degree() >= 0 and np.any(q.coef != 0):
                scale = max(np.max(np.abs(q.coef)), 1e-300)
                if abs(q(x0)) > tol * scale * max(1.0, abs(x0)) ** q.degree():
                    break
                q = q.deriv()
                count += 1
                if q.degree() == 0 and abs(q.coef[0]) > 0:
                    break
            return count
        return mult(self.num) - mult(self.den)

    def to_json_dict(self) -> dict:
        enc = lambda p: [[float(c.real), float(c.imag)] for c in np.asarray(p.coef, dtype=complex)]
        return {"num": enc(self.num), "den": enc(self.den)}

    @classmethod
    def from_json_dict(cls, obj) -> "RationalFn":
        dec = lambda rows: [complex(re, im) for re, im in rows]
        return cls(dec(obj["num"]), dec(obj.get("den", [[1.0, 0.0]])))

    def __repr__(self) -> str:
        return f"RationalFn(num={np.round(self.num.coef, 6)}, den={np.round(self.den.coef, 6)})"
