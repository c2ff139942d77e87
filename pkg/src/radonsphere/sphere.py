"""Geometry of the round sphere and of its space of oriented great circles.

Points are unit 3-vectors. An oriented great circle is stored through the
unit normal of its plane, so the space of geodesics is itself a copy of the
sphere. All angles are in radians.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


def normalize(v, tol: float = 0.0) -> np.ndarray:
    """Return ``v / |v|`` along the last axis; raise on (near) zero vectors."""
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(nrm <= tol) or np.any(nrm == 0.0):
        raise ValueError("cannot normalize a zero vector")
    return v / nrm


@dataclass(frozen=True)
class SpherePoint:
    x: np.ndarray

    def __init__(self, x):
        object.__setattr__(self, "x", normalize(np.asarray(x, dtype=float).reshape(3)))

    def __array__(self, dtype=None, copy=None):
        return self.x if dtype is None else self.x.astype(dtype)

    def rotate(self, R) -> "SpherePoint":
        return SpherePoint(np.asarray(R) @ self.x)


def as_points(x) -> np.ndarray:
    """Coerce SpherePoint / array-like input to an ``(..., 3)`` float array."""
    if isinstance(x, SpherePoint):
        return x.x
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], SpherePoint):
        return np.array([p.x for p in x])
    return np.asarray(x, dtype=float)


def frame_from_normal(n):
    """Deterministic right-handed orthonormal frame ``(e1, e2)`` for ``n``.

    ``e1`` is ``z x n`` normalized, falling back to ``x x n`` when ``n`` is
    within 1e-6 of the z axis; ``e2 = n x e1``.
    """
    n = np.asarray(n, dtype=float)
    e1 = np.cross(E3, n)
    if np.linalg.norm(e1) <= 1e-6:
        e1 = np.cross(E1, n)
    e1 = e1 / np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2


def frames_from_normals(n: np.ndarray):
    """Vectorised :func:`frame_from_normal` for an ``(N, 3)`` array."""
    n = np.atleast_2d(n)
    e1 = np.cross(E3, n)
    small = np.linalg.norm(e1, axis=1) <= 1e-6
    if np.any(small):
        e1[small] = np.cross(E1, n[small])
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(n, e1)
    return e1, e2


@dataclass(frozen=True)
class Geodesic:
    """Oriented great circle ``s -> cos(s) e1 + sin(s) e2`` with normal ``n``."""

    normal: np.ndarray
    e1: np.ndarray = field(repr=False)
    e2: np.ndarray = field(repr=False)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.cos(s)[..., None] * self.e1 + np.sin(s)[..., None] * self.e2

    @property
    def frame(self):
        return self.e1, self.e2


def geodesic_from_normal(n) -> Geodesic:
    n = as_points(n).reshape(3)
    nrm = np.linalg.norm(n)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise ValueError("geodesic normal must be a nonzero vector")
    n = n / nrm
    e1, e2 = frame_from_normal(n)
    return Geodesic(n, e1, e2)


def geodesic_distance(x, y):
    """Great-circle distance; dot products are clamped before ``arccos``."""
    x = as_points(x)
    y = as_points(y)
    return np.arccos(np.clip(np.sum(x * y, axis=-1), -1.0, 1.0))


def rotation_to(target) -> np.ndarray:
    """A rotation matrix sending the north pole ``e3`` to ``target``.

    Columns are the frame ``(e1, e2, target)`` so the result is smooth in
    ``target`` away from the fallback switch of :func:`frame_from_normal`.
    """
    t = normalize(as_points(target).reshape(3))
    e1, e2 = frame_from_normal(t)
    return np.column_stack([e1, e2, t])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_points(rng: np.random.Generator, count: int) -> np.ndarray:
    return normalize(rng.standard_normal((count, 3)))


@dataclass(frozen=True)
class CapSpec:
    """Closed geodesic ball of ``radius`` around ``center``."""

    center: np.ndarray
    radius: float

    def __init__(self, center, radius: float):
        if not 0.0 < radius <= np.pi:
            raise ValueError(f"cap radius must lie in (0, pi], got {radius}")
        object.__setattr__(self, "center", normalize(as_points(center).reshape(3)))
        object.__setattr__(self, "radius", float(radius))

    @property
    def area(self) -> float:
        return 2.0 * np.pi * (1.0 - np.cos(self.radius))

    def contains(self, x) -> np.ndarray:
        return geodesic_distance(self.center, as_points(x)) <= self.radius


@dataclass(frozen=True)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, values) -> np.ndarray:
        """Apply the rule along the first axis of ``values``."""
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))

    def rotated(self, R) -> "QuadratureGrid":
        return QuadratureGrid(self.nodes @ np.asarray(R).T, self.weights)


def _polar_product(cos_nodes, cos_weights, n_az: int) -> QuadratureGrid:
    az = 2.0 * np.pi * np.arange(n_az) / n_az
    ct = np.repeat(cos_nodes, n_az)
    st = np.sqrt(np.clip(1.0 - ct * ct, 0.0, None))
    ph = np.tile(az, len(cos_nodes))
    nodes = np.column_stack([st * np.cos(ph), st * np.sin(ph), ct])
    weights = np.repeat(cos_weights, n_az) * (2.0 * np.pi / n_az)
    return QuadratureGrid(nodes, weights)


def cap_quadrature(cap: CapSpec, order: int, n_azimuth: int | None = None) -> QuadratureGrid:
    """Gauss-Legendre in ``cos`` of the colatitude about ``cap.center``
    times a uniform azimuth rule, rotated onto the cap.

    Exact for polynomials of degree ``2*order - 1`` in the colatitude cosine
    and for azimuthal Fourier modes below ``n_azimuth`` (default ``2*order``).
    """
    if order < 4:
        raise ValueError("cap quadrature needs order >= 4")
    if not cap.radius < np.pi:
        raise ValueError("cap radius must be < pi for cap_quadrature")
    n_az = 2 * order if n_azimuth is None else int(n_azimuth)
    t, w = np.polynomial.legendre.leggauss(order)
    lo = np.cos(cap.radius)
    ct = 0.5 * (1.0 - lo) * t + 0.5 * (1.0 + lo)
    grid = _polar_product(ct, 0.5 * (1.0 - lo) * w, n_az)
    return grid.rotated(rotation_to(cap.center))


def gauss_sphere_rule(L: int) -> QuadratureGrid:
    """Product rule integrating every spherical harmonic of degree ``<= 2L``."""
    if L < 1:
        raise ValueError("L must be >= 1")
    t, w = np.polynomial.legendre.leggauss(L + 1)
    return _polar_product(t, w, 2 * L + 2)


def fibonacci_nodes(count: int) -> np.ndarray:
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    golden = np.pi * (3.0 - np.sqrt(5.0))
    phi = golden * np.arange(count)
    s = np.sqrt(1.0 - z * z)
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def sphere_grid(count: int) -> QuadratureGrid:
    """Fibonacci lattice with equal weights; meant for scans, not accuracy."""
    if count < 12:
        raise ValueError("sphere_grid needs count >= 12")
    return QuadratureGrid(fibonacci_nodes(count), np.full(count, 4.0 * np.pi / count))


def cap_scan(cap: CapSpec, count: int) -> np.ndarray:
    """Fibonacci-spiral points filling a cap (equal-area in the cap)."""
    i = np.arange(count) + 0.5
    lo = np.cos(cap.radius)
    z = 1.0 - (1.0 - lo) * i / count
    golden = np.pi * (3.0 - np.sqrt(5.0))
    phi = golden * np.arange(count)
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    pts = np.column_stack([s * np.cos(phi), s * np.sin(phi), z])
    return pts @ rotation_to(cap.center).T


def tangent_basis(n: np.ndarray):
    """Orthonormal tangent frame at each row of ``n`` (same convention as geodesics)."""
    return frames_from_normals(n)


def exp_map(n: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Exponential map of the unit sphere; ``v`` tangent at ``n``."""
    n = np.atleast_2d(n)
    v = np.atleast_2d(v)
    t = np.linalg.norm(v, axis=1, keepdims=True)
    safe = np.where(t > 0, t, 1.0)
    out = np.cos(t) * n + np.sin(t) * v / safe
    return out / np.linalg.norm(out, axis=1, keepdims=True)
