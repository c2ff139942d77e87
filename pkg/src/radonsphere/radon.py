"""Radon transform of a potential on the space of oriented great circles.

A great circle is identified with its unit normal ``n``, so ``R(V)`` is a
function on the sphere of normals. On degree-``l`` harmonics the transform
acts as multiplication by ``P_l(0)``, which kills odd degrees.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .harmonics import PolyField, coeffs_to_poly, legendre_at_zero, sh_degrees, sh_matrix
from .potential import PotentialSpec
from .sphere import (
    Geodesic,
    QuadratureGrid,
    as_points,
    exp_map,
    frame_from_normal,
    frames_from_normals,
    geodesic_from_normal,
    sphere_grid,
)

log = logging.getLogger(__name__)

GRAD_TOL = 1e-8
MORSE_TOL = 1e-6
CRIT_TOL = 1e-3
HESS_TOL = 1e-6


def radon_quadrature(V, geodesic, n_s: int = 64):
    """Average of ``V`` over the geodesic(s) by the periodic trapezoid rule.

    ``geodesic`` is a :class:`Geodesic`, or an ``(N, 3)`` array of normals.
    """
    if n_s < 16:
        raise ValueError("n_s must be >= 16")
    s = 2.0 * np.pi * np.arange(n_s) / n_s
    if isinstance(geodesic, Geodesic):
        return float(np.mean(V(geodesic(s))))
    normals = np.atleast_2d(as_points(geodesic))
    e1, e2 = frames_from_normals(normals / np.linalg.norm(normals, axis=1, keepdims=True))
    pts = np.cos(s)[None, :, None] * e1[:, None, :] + np.sin(s)[None, :, None] * e2[:, None, :]
    return np.mean(V(pts), axis=1)


class RadonField:
    """``R(V)`` as a function of the normal ``n``.

    Values come from harmonic synthesis; gradients and Hessians from the
    homogeneous Cartesian extension, so no chart singularities appear.
    """

    def __init__(self, multiplier_coeffs, source: Optional[PotentialSpec] = None):
        self.coeffs = np.asarray(multiplier_coeffs, dtype=float)
        self.source = source
        self.degree = int(round(np.sqrt(len(self.coeffs)))) - 1
        self._field = PolyField(coeffs_to_poly(self.coeffs))

    def __call__(self, n):
        n = as_points(n)
        vals = sh_matrix(self.degree, n.reshape(-1, 3)) @ self.coeffs
        return vals[0] if n.ndim == 1 else vals.reshape(n.shape[:-1])

    def ambient_gradient(self, n) -> np.ndarray:
        return self._field.gradient(as_points(n))

    def ambient_hessian(self, n) -> np.ndarray:
        return self._field.hessian(as_points(n))

    def tangent_gradient(self, n) -> np.ndarray:
        """Riemannian gradient as an ambient vector tangent at ``n``."""
        n = as_points(n)
        g = self.ambient_gradient(n)
        return g - np.sum(g * n, axis=-1, keepdims=True) * n

    def tangent_hessian(self, n, frame=None) -> np.ndarray:
        """Riemannian Hessian in the tangent frame at ``n`` (2x2 per point)."""
        n = np.atleast_2d(as_points(n))
        t1, t2 = frames_from_normals(n) if frame is None else frame
        H = self.ambient_hessian(n)
        g = self.ambient_gradient(n)
        radial = np.sum(g * n, axis=-1)
        T = np.stack([t1, t2], axis=1)  # (N, 2, 3)
        out = np.einsum("nia,nab,njb->nij", T, H, T)
        out -= radial[:, None, None] * np.eye(2)
        return out

    @property
    def oscillation(self) -> float:
        """Crude bound on ``max F - min F`` from coefficient magnitudes."""
        l = sh_degrees(self.degree)
        mask = l > 0
        return float(2 * np.sum(np.abs(self.coeffs[mask]) * np.sqrt((2 * l[mask] + 1) / (4 * np.pi))))

    def rotated(self, R) -> "RadonField":
        src = self.source.rotated(R) if self.source is not None else None
        if src is not None:
            return radon_multiplier(src)
        fn = lambda pts: self(np.asarray(pts) @ np.asarray(R))
        return RadonField(PotentialSpec.from_function(fn, self.degree).coeffs)


def radon_multiplier(V: PotentialSpec) -> RadonField:
    scale = np.array([legendre_at_zero(int(l)) for l in sh_degrees(V.degree)])
    return RadonField(V.coeffs * scale, V)


def radon_gradient(F: RadonField, n) -> np.ndarray:
    """Gradient of ``F`` at ``n`` in the tangent frame of :func:`frame_from_normal`."""
    n = as_points(n)
    g = F.tangent_gradient(n)
    if n.ndim == 1:
        t1, t2 = frame_from_normal(n)
        return np.array([g @ t1, g @ t2])
    t1, t2 = frames_from_normals(n)
    return np.column_stack([np.sum(g * t1, axis=1), np.sum(g * t2, axis=1)])


# --------------------------------------------------------------------------
# critical points


@dataclass(frozen=True)
class CriticalPoint:
    location: np.ndarray
    value: float
    hessian_eigs: tuple
    kind: str

    def to_dict(self) -> dict:
        return {
            "location": [float(v) for v in self.location],
            "value": float(self.value),
            "hessian_eigs": [float(v) for v in self.hessian_eigs],
            "kind": self.kind,
        }


@dataclass
class CriticalSearch:
    """Outcome of :func:`find_critical_points`; iterates over the points."""

    points: List[CriticalPoint]
    degenerate_field: bool = False
    converged_seeds: int = 0
    message: str = ""

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]


def classify(eigs, hess_tol: float = HESS_TOL) -> str:
    a, b = eigs
    if min(abs(a), abs(b)) <= hess_tol:
        return "degenerate"
    if a > 0 and b > 0:
        return "min"
    if a < 0 and b < 0:
        return "max"
    return "saddle"


def _critical_point(F: RadonField, n: np.ndarray, hess_tol: float) -> CriticalPoint:
    eigs = np.linalg.eigvalsh(F.tangent_hessian(n)[0])
    return CriticalPoint(n.copy(), float(F(n)), (float(eigs[0]), float(eigs[1])), classify(eigs, hess_tol))


def newton_critical(F: RadonField, seeds: np.ndarray, max_iter: int = 50, max_step: float = 0.5):
    """Tangent-plane Newton iteration started from every seed at once.

    Returns the final points and the tangent-gradient norm at each.
    """
    n = np.array(seeds, dtype=float)
    for _ in range(max_iter):
        t1, t2 = frames_from_normals(n)
        g = F.ambient_gradient(n)
        gt = np.column_stack([np.sum(g * t1, axis=1), np.sum(g * t2, axis=1)])
        if np.all(np.linalg.norm(gt, axis=1) <= 1e-14):
            break
        H = F.tangent_hessian(n, (t1, t2))
        det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0]
        scale = np.maximum(np.abs(H).max(axis=(1, 2)), 1e-300)
        ok = np.abs(det) > 1e-12 * scale * scale
        step = np.empty_like(gt)
        step[ok] = -np.linalg.solve(H[ok], gt[ok][..., None])[..., 0]
        # singular Hessian: plain gradient-type step
        step[~ok] = -gt[~ok] / np.maximum(scale[~ok], 1.0)[:, None]
        size = np.linalg.norm(step, axis=1, keepdims=True)
        step *= np.minimum(1.0, max_step / np.maximum(size, 1e-300))
        n = exp_map(n, step[:, :1] * t1 + step[:, 1:] * t2)
    gnorm = np.linalg.norm(F.tangent_gradient(n), axis=1)
    return n, gnorm


def _dedupe(points: np.ndarray, tol: float) -> np.ndarray:
    order = np.lexsort(np.round(points, 6).T[::-1])
    kept = np.empty((0, 3))
    cos_tol = np.cos(tol)
    for p in points[order]:
        if not np.any(kept @ p > cos_tol):
            kept = np.vstack([kept, p])
    return kept


def find_critical_points(
    F: RadonField,
    seeds: QuadratureGrid | np.ndarray | None = None,
    grad_tol: float = GRAD_TOL,
    hess_tol: float = HESS_TOL,
    dedupe_tol: float = 1e-4,
) -> CriticalSearch:
    """Critical points of ``F`` by Newton from every seed node."""
    if seeds is None:
        seeds = sphere_grid(500)
    nodes = seeds.nodes if isinstance(seeds, QuadratureGrid) else np.asarray(seeds)
    if len(nodes) < 200:
        raise ValueError("critical-point search needs at least 200 seeds")
    g0 = np.linalg.norm(F.tangent_gradient(nodes), axis=1)
    if np.max(g0) <= grad_tol:
        return CriticalSearch([], True, 0, "degenerate field: gradient below grad_tol at every seed")
    n, gnorm = newton_critical(F, nodes)
    conv = n[gnorm <= grad_tol]
    if len(conv) == 0:
        return CriticalSearch([], False, 0, "no seed converged")
    found = _dedupe(np.vstack([conv, -conv]), dedupe_tol)
    pts = [_critical_point(F, p, hess_tol) for p in found]
    pts.sort(key=lambda c: tuple(np.round(c.location, 9)))
    return CriticalSearch(pts, False, int(len(conv)), "")


# --------------------------------------------------------------------------
# restriction to the circle of geodesics through x0


@dataclass(frozen=True)
class RestrictionProfile:
    """Samples of ``g(theta) = F(cos(theta) u1 + sin(theta) u2)`` and derivatives."""

    field: RadonField = field(repr=False)
    u1: np.ndarray
    u2: np.ndarray
    theta: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    d2g: np.ndarray

    def evaluate(self, theta):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        c, s = np.cos(theta)[:, None], np.sin(theta)[:, None]
        n = c * self.u1 + s * self.u2
        t = -s * self.u1 + c * self.u2
        grad = self.field.ambient_gradient(n)
        H = self.field.ambient_hessian(n)
        g = self.field(n)
        dg = np.sum(grad * t, axis=1)
        d2g = np.einsum("na,nab,nb->n", t, H, t) - np.sum(grad * n, axis=1)
        return g, dg, d2g


def restriction_profile(F: RadonField, x0, n_theta: int = 1024) -> RestrictionProfile:
    if n_theta < 64:
        raise ValueError("n_theta must be >= 64")
    u1, u2 = frame_from_normal(as_points(x0).reshape(3))
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    prof = RestrictionProfile(F, u1, u2, theta, *([np.empty(0)] * 3))
    g, dg, d2g = prof.evaluate(theta)
    return RestrictionProfile(F, u1, u2, theta, g, dg, d2g)


def _bisect(fn, a: float, b: float, fa: float, tol: float) -> float:
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = fn(mid)
        if fm == 0.0:
            return mid
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def restriction_critical_points(prof: RestrictionProfile, tol: float = 1e-10, flat_tol: float = GRAD_TOL):
    """Zeros of ``g'`` on ``[0, 2 pi)``: sign-change brackets refined by bisection.

    Grid-local minima of ``|g'|`` that do not change sign but dip below
    ``flat_tol`` are returned too; they are double roots (non-Morse).
    """
    th, dg = prof.theta, prof.dg
    n = len(th)
    h = th[1] - th[0]
    dfun = lambda t: float(prof.evaluate(t)[1][0])
    roots = []
    bracketed = np.zeros(n, dtype=bool)
    for i in range(n):
        j = (i + 1) % n
        a, fa, fb = th[i], dg[i], dg[j]
        if fa == 0.0:
            roots.append(a)
            bracketed[i] = True
        elif fa * fb < 0:
            roots.append(_bisect(dfun, a, a + h, fa, tol) % (2 * np.pi))
            bracketed[i] = bracketed[j] = True
    adg = np.abs(dg)
    for i in range(n):
        if bracketed[i] or bracketed[(i - 1) % n]:
            continue
        if adg[i] <= adg[(i - 1) % n] and adg[i] <= adg[(i + 1) % n]:
            res = minimize_scalar(
                lambda t: abs(dfun(t)), bounds=(th[i] - h, th[i] + h), method="bounded",
                options={"xatol": tol},
            )
            if res.fun <= flat_tol:
                roots.append(res.x % (2 * np.pi))
    roots = sorted(roots)
    if not roots:
        return np.empty(0), np.empty(0)
    r = np.array(roots)
    return r, prof.evaluate(r)[2]


@dataclass
class HypothesisReport:
    point: np.ndarray
    crit_margin: float
    restriction_profile: Optional[RestrictionProfile]
    tangencies: list
    h1_pass: bool
    h2_pass: bool
    reason: str = ""
    critical_points: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "point": [float(v) for v in self.point],
            "crit_margin": float(self.crit_margin) if np.isfinite(self.crit_margin) else None,
            "h1_pass": bool(self.h1_pass),
            "h2_pass": bool(self.h2_pass),
            "reason": self.reason,
            "tangencies": [{"theta": float(t), "g2": float(d)} for t, d in self.tangencies],
            "n_critical_points": len(self.critical_points),
            "tolerances": self.tolerances,
        }


def check_hypotheses(
    V,
    x0,
    crit_tol: float = CRIT_TOL,
    morse_tol: float = MORSE_TOL,
    grad_tol: float = GRAD_TOL,
    seeds: int = 500,
    n_theta: int = 1024,
) -> HypothesisReport:
    """Check that no critical geodesic passes through ``x0`` and that ``R(V)``
    restricted to the geodesics through ``x0`` is Morse."""
    F = V if isinstance(V, RadonField) else radon_multiplier(V)
    x0 = as_points(x0).reshape(3)
    x0 = x0 / np.linalg.norm(x0)
    tols = {"crit_tol": crit_tol, "morse_tol": morse_tol, "grad_tol": grad_tol}
    crit = find_critical_points(F, sphere_grid(seeds), grad_tol=grad_tol)
    if crit.degenerate_field:
        return HypothesisReport(x0, 0.0, None, [], False, False, crit.message, [], tols)
    reasons = []
    if len(crit) == 0:
        margin = 0.0
        reasons.append("no critical points found")
    else:
        locs = np.array([c.location for c in crit])
        margin = float(np.min(np.arcsin(np.clip(np.abs(locs @ x0), 0.0, 1.0))))
    h1 = bool(margin > crit_tol)
    if not h1 and len(crit):
        reasons.append(f"critical geodesic within {margin:.3g} rad of the circle through x0")
    prof = restriction_profile(F, x0, n_theta)
    if np.max(np.abs(prof.dg)) <= grad_tol:
        reasons.append("restriction is constant")
        return HypothesisReport(x0, margin, prof, [], h1, False, "; ".join(reasons), list(crit), tols)
    roots, g2 = restriction_critical_points(prof, flat_tol=grad_tol)
    tangencies = list(zip(roots.tolist(), g2.tolist()))
    h2 = bool(len(roots) > 0 and np.all(np.abs(g2) > morse_tol))
    if not h2:
        reasons.append("restriction has a degenerate critical point")
    return HypothesisReport(x0, margin, prof, tangencies, h1, h2, "; ".join(reasons), list(crit), tols)
