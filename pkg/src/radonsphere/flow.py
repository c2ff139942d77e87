"""Hamiltonian flow of a Radon field on the sphere of geodesic normals and the
time averages of annulus indicators along it."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .radon import RadonField
from .sphere import Geodesic, QuadratureGrid, as_points

ENERGY_TOL = 1e-6


class FlowEnergyError(RuntimeError):
    def __init__(self, drift: float, tol: float):
        super().__init__(f"energy drift {drift:.3e} exceeds tolerance {tol:.3e}")
        self.drift = drift
        self.tol = tol


def _normals(gamma) -> np.ndarray:
    if isinstance(gamma, Geodesic):
        return gamma.normal
    return as_points(gamma)


def hamiltonian_field(F: RadonField, n) -> np.ndarray:
    """``X(n) = grad F(n) x n``.

    With this orientation the zonal field ``F = n3`` rotates ``e1`` into
    ``e2`` after time ``pi/2``.
    """
    n = as_points(n)
    return np.cross(F.ambient_gradient(n), n)


def _chart_partials(F: RadonField, phi, theta, h: float = 1e-3):
    def at(p, t):
        return F(np.stack([np.sin(p) * np.cos(t), np.sin(p) * np.sin(t), np.cos(p)], axis=-1))

    c = np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * h)
    offs = np.array([-2.0, -1.0, 1.0, 2.0]) * h
    dphi = sum(ci * at(phi + o, theta) for ci, o in zip(c, offs))
    dtheta = sum(ci * at(phi, theta + o) for ci, o in zip(c, offs))
    return dphi, dtheta


def hamiltonian_field_chart(F: RadonField, phi, theta) -> np.ndarray:
    """Same field from spherical-coordinate partial derivatives.

    ``phi`` is the colatitude, ``theta`` the azimuth. The Hamilton equations
    for the area form ``sin(phi) dphi ^ dtheta`` give
    ``phi' = F_theta / sin(phi)`` and ``theta' = -F_phi / sin(phi)``.
    Partials are taken by fourth-order central differences of the field
    values, independently of the Cartesian gradient.
    """
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    f_phi, f_theta = _chart_partials(F, phi, theta)
    s = np.sin(phi)
    dphi = f_theta / s
    dtheta = -f_phi / s
    e_phi = np.stack([np.cos(phi) * np.cos(theta), np.cos(phi) * np.sin(theta), -s], axis=-1)
    d_theta = np.stack([-s * np.sin(theta), s * np.cos(theta), np.zeros_like(s)], axis=-1)
    return dphi[..., None] * e_phi + dtheta[..., None] * d_theta


@dataclass
class FlowTrajectory:
    """Samples of the flow; ``points`` has shape ``(len(times), ..., 3)``."""

    times: np.ndarray
    points: np.ndarray
    field_values: np.ndarray

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.field_values - self.field_values[self.times == 0.0][0])))

    def at(self, tau: float) -> np.ndarray:
        return self.points[int(np.argmin(np.abs(self.times - tau)))]


def _rk4_step(F: RadonField, n: np.ndarray, h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.ndim:
        h = h[:, None]
    k1 = hamiltonian_field(F, n)
    k2 = hamiltonian_field(F, n + 0.5 * h * k1)
    k3 = hamiltonian_field(F, n + 0.5 * h * k2)
    k4 = hamiltonian_field(F, n + h * k3)
    out = n + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def _march(F: RadonField, n0: np.ndarray, t_end: float, dt: float):
    steps = int(ceil(abs(t_end) / dt - 1e-12)) if t_end else 0
    if steps == 0:
        return np.zeros(1), n0[None]
    h = t_end / steps
    out = np.empty((steps + 1,) + n0.shape)
    out[0] = n0
    n = n0
    for k in range(steps):
        n = _rk4_step(F, n, h)
        out[k + 1] = n
    return h * np.arange(steps + 1), out


def integrate_flow(
    F: RadonField,
    n0,
    tau_span=(0.0, 1.0),
    dt: float = 1e-3,
    energy_tol: float | None = None,
) -> FlowTrajectory:
    """Classical RK4 with renormalisation onto the sphere after each step.

    ``n0`` is the state at ``tau = 0``; ``tau_span`` must contain 0 and the
    flow is run backwards and forwards from there. ``n0`` may be a batch of
    shape ``(N, 3)``. Raises :class:`FlowEnergyError` when the field value
    drifts more than ``energy_tol`` (default ``1e-6`` times the field's
    oscillation scale, at least ``1e-6``).
    """
    t0, t1 = float(tau_span[0]), float(tau_span[1])
    if not t0 <= 0.0 <= t1:
        raise ValueError("tau_span must contain 0")
    if dt > 1e-2 or dt <= 0:
        raise ValueError("dt must lie in (0, 1e-2]")
    if t1 - t0 > 100:
        raise ValueError("flow span longer than 100")
    n0 = as_points(n0).astype(float)
    n0 = n0 / np.linalg.norm(n0, axis=-1, keepdims=True)
    tb, pb = _march(F, n0, t0, dt)
    tf, pf = _march(F, n0, t1, dt)
    times = np.concatenate([tb[:0:-1], tf])
    points = np.concatenate([pb[:0:-1], pf])
    values = F(points)
    traj = FlowTrajectory(times, points, values)
    tol = energy_tol if energy_tol is not None else ENERGY_TOL * max(1.0, F.oscillation)
    drift = float(np.max(np.abs(values - values[len(tb) - 1])))
    if drift > tol:
        raise FlowEnergyError(drift, tol)
    return traj


def radon_indicator(x, rho: float, gamma) -> np.ndarray:
    """Fraction of the geodesic's length inside the cap ``B_rho(x)``.

    With ``c = n.x``: ``arccos(cos(rho) / sqrt(1 - c^2)) / pi`` when the
    geodesic meets the cap, else 0.
    """
    if not 0.0 < rho < np.pi / 2:
        raise ValueError("cap radius must lie in (0, pi/2)")
    x = as_points(x).reshape(3)
    c = _normals(gamma) @ x
    s = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
    ratio = np.cos(rho) / np.where(s > 0, s, 1.0)
    val = np.where(s >= np.cos(rho), np.arccos(np.clip(ratio, -1.0, 1.0)) / np.pi, 0.0)
    return val[()] if np.ndim(val) == 0 else val


def _trapezoid_mean(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    return np.trapezoid(values, times, axis=0) / (times[-1] - times[0])


def flow_average(F: RadonField, x, r: float, tau0: float, gamma, dt: float = 1e-3):
    """Time average over ``[-tau0, tau0]`` of the indicator of ``B_{2r}(x)``
    integrated along the flowed geodesic."""
    if r > np.pi / 8:
        raise ValueError("r must be <= pi/8")
    if not 0.0 < tau0 <= 10.0:
        raise ValueError("tau0 must lie in (0, 10]")
    traj = integrate_flow(F, _normals(gamma), (-tau0, tau0), dt)
    vals = radon_indicator(x, 2.0 * r, traj.points)
    out = _trapezoid_mean(vals, traj.times)
    return float(out) if np.ndim(out) == 0 else out


def _prune(F: RadonField, x: np.ndarray, nodes: np.ndarray, r_max: float, tau0: float) -> np.ndarray:
    speed = np.linalg.norm(hamiltonian_field(F, nodes), axis=1)
    reach = np.sin(2.0 * r_max) + tau0 * 1.1 * float(np.max(speed)) + 1e-12
    return nodes[np.abs(nodes @ x) <= reach]


def sup_flow_averages(
    F: RadonField, x, radii, tau0: float, scan, dt: float = 1e-3, chunk: int = 1024
) -> dict:
    """Supremum of :func:`flow_average` over scan geodesics, for several radii.

    Only geodesics whose orbit can reach the band around the circle of
    geodesics through ``x`` are integrated. Returns a dict with the sups, the
    argmax normals, and every individual average (``averages``, shape
    ``(n_geodesics, n_radii)``) for envelope checks.
    """
    nodes = scan.nodes if isinstance(scan, QuadratureGrid) else as_points(scan)
    if len(nodes) < 2000:
        raise ValueError("scan needs at least 2000 geodesics")
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if np.any(radii > np.pi / 8) or np.any(radii <= 0):
        raise ValueError("radii must lie in (0, pi/8]")
    x = as_points(x).reshape(3)
    kept = _prune(F, x, nodes, float(radii.max()), tau0)
    sups = np.zeros(len(radii))
    argmax = np.tile(np.nan, (len(radii), 3))
    averages = np.zeros((len(kept), len(radii)))
    for lo in range(0, len(kept), chunk):
        traj = integrate_flow(F, kept[lo:lo + chunk], (-tau0, tau0), dt)
        for j, r in enumerate(radii):
            averages[lo:lo + chunk, j] = _trapezoid_mean(
                radon_indicator(x, 2.0 * r, traj.points), traj.times
            )
    if len(kept):
        for j in range(len(radii)):
            k = int(np.argmax(averages[:, j]))
            sups[j] = averages[k, j]
            argmax[j] = kept[k]
    return {"radii": radii, "sup": sups, "argmax": argmax, "normals": kept, "averages": averages}


def sup_flow_average(F: RadonField, x, r: float, tau0: float, scan, dt: float = 1e-3) -> float:
    return float(sup_flow_averages(F, x, [r], tau0, scan, dt)["sup"][0])


@dataclass
class ScalingFit:
    radii: np.ndarray
    sup_averages: np.ndarray
    fitted_exponent: float
    residual: float
    prefactor: float = float("nan")
    dropped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "radii": [float(r) for r in self.radii],
            "sup_averages": [float(v) for v in self.sup_averages],
            "fitted_exponent": float(self.fitted_exponent),
            "prefactor": float(self.prefactor),
            "residual": float(self.residual),
            "dropped_radii": [float(r) for r in self.dropped],
        }


def fit_loglog(xs, ys):
    """Least-squares slope, intercept and RMS residual of ``log y`` vs ``log x``."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((ly - (slope * lx + icpt)) ** 2)))
    return float(slope), float(icpt), resid


def fit_scaling_exponent(F: RadonField, x, radii, tau0: float, scan, dt: float = 1e-3, sweep=None) -> ScalingFit:
    """Log-log slope of the sup flow average against ``r``.

    ``sweep`` reuses the output of :func:`sup_flow_averages` for the same
    sorted radii instead of recomputing it.
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    if len(radii) < 4 or radii[-1] / radii[0] < 8.0 - 1e-9:
        raise ValueError("need at least 4 radii with max/min >= 8")
    if np.any(radii >= np.pi / 16) or np.any(radii <= 0):
        raise ValueError("radii must lie in (0, pi/16)")
    res = sweep if sweep is not None else sup_flow_averages(F, x, radii, tau0, scan, dt)
    sups = np.asarray(res["sup"], dtype=float)
    good = sups > 0
    dropped = radii[~good].tolist()
    if good.sum() < 3:
        raise ValueError(f"only {int(good.sum())} radii with a positive sup average")
    slope, icpt, resid = fit_loglog(radii[good], sups[good])
    return ScalingFit(radii, sups, slope, resid, float(np.exp(icpt)), dropped)


@dataclass
class OccupancyDecomposition:
    intervals: list
    tangency_times: list

    def to_dict(self) -> dict:
        return {
            "intervals": [[float(a), float(b)] for a, b in self.intervals],
            "tangency_times": [float(t) for t in self.tangency_times],
        }


def _refine_crossing(F, n_k, t_k, h_max, fn, f_k, tol):
    """Bisection on the sub-step size ``h`` for a sign change of ``fn``."""
    lo, hi = 0.0, h_max
    sgn = np.sign(f_k)
    while abs(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        v = fn(_rk4_step(F, n_k, mid))
        if np.sign(v) == sgn:
            lo = mid
        else:
            hi = mid
    return t_k + 0.5 * (lo + hi)


def tangency_decomposition(F: RadonField, x, r: float, tau0: float, gamma, dt: float = 1e-3):
    """Split ``{tau in [-tau0, tau0] : orbit inside the annulus of width 2r
    around the circle of geodesics through x}`` into intervals, and locate
    the tangency times (zeros of the derivative of ``n(tau).x``) inside them."""
    x = as_points(x).reshape(3)
    traj = integrate_flow(F, _normals(gamma).reshape(3), (-tau0, tau0), dt)
    t, P = traj.times, traj.points
    band = np.sin(2.0 * r)
    defect = lambda n: abs(float(n @ x)) - band
    speed = lambda n: float(hamiltonian_field(F, n) @ x)
    d = np.abs(P @ x) - band
    v = hamiltonian_field(F, P) @ x
    tol = dt * 1e-3
    inside = d <= 0
    intervals = []
    start = t[0] if inside[0] else None
    for k in range(len(t) - 1):
        h = t[k + 1] - t[k]
        if inside[k] != inside[k + 1]:
            tc = _refine_crossing(F, P[k], t[k], h, defect, d[k], tol)
            if inside[k + 1]:
                start = tc
            else:
                intervals.append((start, tc))
                start = None
    if start is not None:
        intervals.append((start, t[-1]))
    tangencies = []
    for k in range(len(t) - 1):
        if v[k] == 0.0 or v[k] * v[k + 1] < 0:
            tc = t[k] if v[k] == 0.0 else _refine_crossing(F, P[k], t[k], t[k + 1] - t[k], speed, v[k], tol)
            if any(a <= tc <= b for a, b in intervals):
                tangencies.append(tc)
    return OccupancyDecomposition(intervals, tangencies)
