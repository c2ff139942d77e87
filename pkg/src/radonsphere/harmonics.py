"""Real spherical harmonics.

Two evaluation routes are provided and cross-checked in the tests:

* ``sh_matrix`` uses the fully normalised associated Legendre recurrence and
  scales to high degree; it is what the spectral code uses.
* ``solid_harmonic`` returns the homogeneous harmonic polynomial ``r^l Y_lm``
  in Cartesian coordinates. Low-degree fields (potentials, Radon fields) are
  kept in this form so that gradients and Hessians are exact and chart-free.

Convention: ``Y_l0 = P_l0``, ``Y_lm = sqrt(2) P_lm cos(m phi)`` and
``Y_l,-m = sqrt(2) P_lm sin(m phi)`` for ``m > 0``, with no Condon-Shortley
phase. Flat index of ``(l, m)`` is ``l*l + l + m``.
"""
from __future__ import annotations

from functools import lru_cache
from math import comb, factorial, pi, sqrt

import numpy as np


def sh_index(l: int, m: int) -> int:
    return l * l + l + m


def sh_dim(L: int) -> int:
    return (L + 1) ** 2


@lru_cache(maxsize=None)
def sh_degrees(L: int) -> np.ndarray:
    """Degree ``l`` of each flat index up to ``L``."""
    return np.concatenate([np.full(2 * l + 1, l) for l in range(L + 1)])


@lru_cache(maxsize=None)
def sh_orders(L: int) -> np.ndarray:
    return np.concatenate([np.arange(-l, l + 1) for l in range(L + 1)])


def sh_matrix(L: int, pts) -> np.ndarray:
    """Values of every real harmonic of degree ``<= L`` at ``pts``.

    Returns an ``(N, (L+1)**2)`` array.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    ct = np.clip(z, -1.0, 1.0)
    st = np.hypot(x, y)
    phi = np.arctan2(y, x)
    out = np.empty((len(pts), sh_dim(L)))
    pmm = np.full(len(pts), 1.0 / sqrt(4.0 * pi))
    for m in range(L + 1):
        if m > 0:
            pmm = sqrt((2.0 * m + 1.0) / (2.0 * m)) * st * pmm
        if m == 0:
            cosm = None
        else:
            cosm = sqrt(2.0) * np.cos(m * phi)
            sinm = sqrt(2.0) * np.sin(m * phi)
        p_prev2 = None
        p_prev = pmm
        for l in range(m, L + 1):
            if l == m:
                plm = pmm
            elif l == m + 1:
                plm = sqrt(2.0 * m + 3.0) * ct * pmm
            else:
                a = sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
                b = sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
                plm = a * (ct * p_prev - b * p_prev2)
            if l > m:
                p_prev2, p_prev = p_prev, plm
            if m == 0:
                out[:, sh_index(l, 0)] = plm
            else:
                out[:, sh_index(l, m)] = plm * cosm
                out[:, sh_index(l, -m)] = plm * sinm
    return out


def harmonic_eval(l: int, m: int, x, L_max: int | None = None):
    """Single real harmonic ``Y_lm`` at point(s) ``x``."""
    if not (0 <= abs(m) <= l) or (L_max is not None and l > L_max):
        raise ValueError(f"invalid harmonic index (l={l}, m={m})")
    pts = np.asarray(x, dtype=float)
    vals = sh_matrix(l, pts.reshape(-1, 3))[:, sh_index(l, m)]
    return vals[0] if pts.ndim == 1 else vals


def synthesize(coeffs, pts) -> np.ndarray:
    """Evaluate ``sum_a coeffs[a] Y_a`` at ``pts``.

    ``coeffs`` may be 1-D or ``(dim, k)`` for ``k`` functions at once.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    L = int(round(sqrt(coeffs.shape[0]))) - 1
    if sh_dim(L) != coeffs.shape[0]:
        raise ValueError("coefficient length must be a perfect square (L+1)^2")
    return sh_matrix(L, pts) @ coeffs


# --------------------------------------------------------------------------
# Cartesian polynomials


class Poly:
    """Sparse polynomial in ``(x1, x2, x3)`` stored as ``{(a, b, c): coef}``."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        for k, v in (terms or {}).items():
            if v != 0.0:
                self.terms[tuple(int(e) for e in k)] = float(v)

    @classmethod
    def const(cls, c: float) -> "Poly":
        return cls({(0, 0, 0): c})

    @classmethod
    def var(cls, i: int) -> "Poly":
        e = [0, 0, 0]
        e[i] = 1
        return cls({tuple(e): 1.0})

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.terms), default=0)

    def __add__(self, other):
        if not isinstance(other, Poly):
            other = Poly.const(float(other))
        t = dict(self.terms)
        for k, v in other.terms.items():
            t[k] = t.get(k, 0.0) + v
        return Poly(t)

    __radd__ = __add__

    def __neg__(self):
        return Poly({k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-other if isinstance(other, Poly) else -float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return Poly({k: v * float(other) for k, v in self.terms.items()})
        t = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                k = (k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2])
                t[k] = t.get(k, 0.0) + v1 * v2
        return Poly(t)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = Poly.const(1.0)
        for _ in range(int(n)):
            out = out * self
        return out

    def deriv(self, i: int) -> "Poly":
        t = {}
        for k, v in self.terms.items():
            if k[i] > 0:
                e = list(k)
                e[i] -= 1
                t[tuple(e)] = t.get(tuple(e), 0.0) + v * k[i]
        return Poly(t)

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 3)
        d = self.degree
        powers = [np.ones((d + 1, len(flat))) for _ in range(3)]
        for i in range(3):
            for e in range(1, d + 1):
                powers[i][e] = powers[i][e - 1] * flat[:, i]
        out = np.zeros(len(flat))
        for (a, b, c), v in self.terms.items():
            out += v * powers[0][a] * powers[1][b] * powers[2][c]
        return out.reshape(pts.shape[:-1])

    def __repr__(self):
        return f"Poly({self.terms!r})"


class PolyField:
    """A polynomial together with its cached gradient and Hessian polynomials."""

    def __init__(self, poly: Poly):
        self.poly = poly
        self.grad_polys = [poly.deriv(i) for i in range(3)]
        self.hess_polys = [[self.grad_polys[i].deriv(j) for j in range(3)] for i in range(3)]

    def value(self, pts):
        return self.poly(pts)

    def gradient(self, pts) -> np.ndarray:
        """Ambient gradient of the polynomial extension, shape ``(..., 3)``."""
        return np.stack([g(pts) for g in self.grad_polys], axis=-1)

    def hessian(self, pts) -> np.ndarray:
        return np.stack(
            [np.stack([self.hess_polys[i][j](pts) for j in range(3)], axis=-1) for i in range(3)],
            axis=-2,
        )


_R2 = None


def _r2() -> Poly:
    global _R2
    if _R2 is None:
        _R2 = Poly.var(0) ** 2 + Poly.var(1) ** 2 + Poly.var(2) ** 2
    return _R2


@lru_cache(maxsize=None)
def solid_harmonic(l: int, m: int) -> Poly:
    """``r^l Y_lm`` as a homogeneous harmonic polynomial of degree ``l``."""
    am = abs(m)
    x, y, z = Poly.var(0), Poly.var(1), Poly.var(2)
    r2 = _r2()
    pi_lm = Poly()
    for k in range((l - am) // 2 + 1):
        c = (-1) ** k * comb(l, k) * comb(2 * l - 2 * k, l) * factorial(l - 2 * k) // factorial(l - 2 * k - am)
        pi_lm = pi_lm + (r2 ** k) * (z ** (l - 2 * k - am)) * (c / 2.0 ** l)
    pi_lm = pi_lm * sqrt(factorial(l - am) / factorial(l + am))
    if m == 0:
        return pi_lm * sqrt((2 * l + 1) / (4.0 * pi))
    trig = Poly()
    for p in range(am + 1):
        k = am - p
        # cos(k pi/2) / sin(k pi/2) for integer k
        cs = (1, 0, -1, 0)[k % 4] if m > 0 else (0, 1, 0, -1)[k % 4]
        if cs:
            trig = trig + (x ** p) * (y ** k) * (cs * comb(am, p))
    return pi_lm * trig * sqrt((2 * l + 1) / (2.0 * pi))


def coeffs_to_poly(coeffs) -> Poly:
    """Sum of ``coeffs[a] * r^l Y_a``; degree-wise homogeneous extension."""
    coeffs = np.asarray(coeffs, dtype=float)
    L = int(round(sqrt(len(coeffs)))) - 1
    out = Poly()
    for l in range(L + 1):
        for m in range(-l, l + 1):
            c = coeffs[sh_index(l, m)]
            if c != 0.0:
                out = out + solid_harmonic(l, m) * c
    return out


def legendre_at_zero(l: int) -> float:
    """``P_l(0)``: zero for odd ``l``, ``(-1)^(l/2) (l-1)!!/l!!`` otherwise."""
    if l % 2:
        return 0.0
    val = 1.0
    for k in range(1, l // 2 + 1):
        val *= -(2 * k - 1) / (2 * k)
    return val
