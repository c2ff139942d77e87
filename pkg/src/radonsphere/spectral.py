"""Schrodinger operator ``-Lap + V`` in a real spherical-harmonic basis.

The Hamiltonian matrix is dense and symmetric; in the degree index it is
block banded with bandwidth equal to the potential degree, which is not
exploited here. Spectral multipliers act degree-wise, and the Weinstein
average over the periodic flow ``exp(i s A)`` (``A = l + 1/2`` on degree
``l``) reduces exactly to keeping the degree-diagonal blocks.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.stats import ks_2samp

from .harmonics import sh_degrees, sh_dim, sh_index, sh_matrix, sh_orders
from .potential import PotentialSpec, spectral_degree_for
from .radon import radon_multiplier
from .sphere import gauss_sphere_rule, sphere_grid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HarmonicBasis:
    L_max: int

    @property
    def dim(self) -> int:
        return sh_dim(self.L_max)

    @property
    def degrees(self) -> np.ndarray:
        return sh_degrees(self.L_max)

    @property
    def orders(self) -> np.ndarray:
        return sh_orders(self.L_max)

    def index(self, l: int, m: int) -> int:
        if not (0 <= l <= self.L_max and abs(m) <= l):
            raise ValueError(f"(l={l}, m={m}) outside basis of degree {self.L_max}")
        return sh_index(l, m)

    def slice(self, l: int) -> slice:
        return slice(l * l, (l + 1) * (l + 1))


@dataclass
class HamiltonianMatrix:
    matrix: np.ndarray
    L_max: int
    potential: PotentialSpec = field(repr=False)
    potential_matrix: np.ndarray = field(repr=False, default=None)

    @property
    def basis(self) -> HarmonicBasis:
        return HarmonicBasis(self.L_max)


def potential_matrix(V: PotentialSpec, L_max: int) -> np.ndarray:
    """``<Y_a, V Y_b>`` by a Gauss product rule exact for band-limited ``V``."""
    rule = gauss_sphere_rule(spectral_degree_for(V, L_max))
    B = sh_matrix(L_max, rule.nodes)
    vals = np.asarray(V.synthesize(rule.nodes), dtype=float)
    M = B.T @ ((rule.weights * vals)[:, None] * B)
    return 0.5 * (M + M.T)


def assemble_hamiltonian(V: PotentialSpec, L_max: int) -> HamiltonianMatrix:
    if L_max < V.degree:
        raise ValueError("L_max must be at least the potential degree")
    Vm = potential_matrix(V, L_max)
    l = sh_degrees(L_max)
    H = Vm + np.diag(l * (l + 1.0))
    return HamiltonianMatrix(H, L_max, V, Vm)


@dataclass(frozen=True)
class Eigenpair:
    lambda_sq: float
    coeffs: np.ndarray = field(repr=False)
    cluster: int

    @property
    def lam(self) -> float:
        return float(np.sqrt(max(self.lambda_sq, 0.0)))

    @property
    def L_max(self) -> int:
        return int(round(np.sqrt(len(self.coeffs)))) - 1


def nearest_cluster(lambda_sq, offset: float = 0.0) -> np.ndarray:
    """Degree ``l`` minimising ``|lambda^2 - offset - l(l+1)|``."""
    lam2 = np.maximum(np.asarray(lambda_sq, dtype=float) - offset, 0.0)
    lo = np.floor(np.sqrt(lam2 + 0.25) - 0.5).astype(int)
    lo = np.maximum(lo, 0)
    hi = lo + 1
    d_lo = np.abs(lam2 - lo * (lo + 1.0))
    d_hi = np.abs(lam2 - hi * (hi + 1.0))
    return np.where(d_hi < d_lo, hi, lo)


@dataclass
class Spectrum:
    """All eigenpairs of a truncated Hamiltonian, ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    L_max: int
    potential_degree: int
    potential_digest: str = ""
    mean_potential: float = 0.0

    @property
    def clusters(self) -> np.ndarray:
        """Cluster label of each eigenvalue, centred on ``l(l+1) + mean(V)``."""
        return nearest_cluster(self.eigenvalues, self.mean_potential)

    @property
    def l_trust(self) -> int:
        return self.L_max - self.potential_degree - 2

    def __len__(self):
        return len(self.eigenvalues)

    def pair(self, k: int) -> Eigenpair:
        return Eigenpair(float(self.eigenvalues[k]), self.eigenvectors[:, k], int(self.clusters[k]))

    def pairs(self):
        return [self.pair(k) for k in range(len(self))]

    def cluster_indices(self, l: int) -> np.ndarray:
        """Indices of the ``2l+1`` eigenvalues nearest ``l(l+1)``."""
        d = np.abs(self.eigenvalues - self.mean_potential - l * (l + 1.0))
        return np.sort(np.argsort(d, kind="stable")[: 2 * l + 1])

    def trusted_indices(self) -> np.ndarray:
        return np.flatnonzero(self.clusters <= self.l_trust)


class EigensolveError(RuntimeError):
    pass


def eigensolve(H: HamiltonianMatrix) -> Spectrum:
    """Dense symmetric eigendecomposition (LAPACK ``syevd`` via numpy)."""
    if H.matrix.shape[0] > 5000:
        raise ValueError("dimension above desk-scale limit 5000")
    try:
        w, U = np.linalg.eigh(H.matrix)
    except np.linalg.LinAlgError as exc:
        raise EigensolveError(f"eigensolver did not converge: {exc}") from exc
    # deterministic sign: largest-magnitude entry of each vector positive
    piv = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[piv, np.arange(U.shape[1])])
    return Spectrum(w, U, H.L_max, H.potential.degree, H.potential.digest(), mean_potential(H.potential))


def mean_potential(V: PotentialSpec) -> float:
    """Average of ``V`` over the sphere (the ``Y_00`` coefficient over ``sqrt(4 pi)``)."""
    return float(V.coeffs[0] / np.sqrt(4.0 * np.pi))


def residuals(H: HamiltonianMatrix, spec: Spectrum) -> np.ndarray:
    R = H.matrix @ spec.eigenvectors - spec.eigenvectors * spec.eigenvalues
    return np.linalg.norm(R, axis=0)


# --------------------------------------------------------------------------
# multipliers


def apply_multiplier(coeffs, m: Callable) -> np.ndarray:
    """Scale degree-``l`` coefficients by ``m(l)``; ``coeffs`` is ``(dim,)`` or ``(dim, k)``."""
    coeffs = np.asarray(coeffs)
    L = int(round(np.sqrt(coeffs.shape[0]))) - 1
    scale = np.asarray(m(sh_degrees(L).astype(float)))
    if scale.ndim == 0:
        scale = np.full(coeffs.shape[0], scale)
    return coeffs * (scale[:, None] if coeffs.ndim == 2 else scale)


def projector(j: int) -> Callable:
    """Multiplier of the spectral projector onto degree ``j``."""
    return lambda l: (l == j).astype(float)


def weinstein_A(l):
    """``A = sqrt(1/4 - Lap)``, i.e. ``l + 1/2`` on degree ``l``."""
    return l + 0.5


def sqrt_laplacian(l):
    return np.sqrt(l * (l + 1.0))


def period_sign(l):
    """``exp(2 pi i A)`` on degree ``l``: ``exp(2 pi i (l + 1/2)) = -1``."""
    return np.real(np.exp(2j * np.pi * (np.asarray(l) + 0.5))).round()


def fejer(u) -> np.ndarray:
    """``(sin(u/2) / (u/2))^2``; nonnegative, ``fejer(0) = 1``, Fourier
    transform supported in ``[-1, 1]``."""
    return np.sinc(np.asarray(u, dtype=float) / (2.0 * np.pi)) ** 2


def t_multiplier(lam: float, r: float) -> Callable:
    def m(l):
        lam_l = np.sqrt(l * (l + 1.0))
        return fejer(r * (lam - lam_l)) + fejer(r * (lam + lam_l))

    return m


def t_operator(coeffs, lam: float, r: float) -> np.ndarray:
    if lam < 1 or not 0 < r <= np.pi / 2:
        raise ValueError("need lam >= 1 and r in (0, pi/2]")
    return apply_multiplier(coeffs, t_multiplier(lam, r))


def laplacian_coeffs(coeffs) -> np.ndarray:
    """Coefficients of ``-Lap psi``."""
    return apply_multiplier(coeffs, lambda l: l * (l + 1.0))


def pde_residual(pair: Eigenpair, V: PotentialSpec, pts) -> np.ndarray:
    """Pointwise ``-Lap psi + V psi - lambda^2 psi``; Laplacian applied
    spectrally, ``V`` evaluated pointwise."""
    B = sh_matrix(pair.L_max, pts)
    psi = B @ pair.coeffs
    lap = B @ laplacian_coeffs(pair.coeffs)
    return lap + V(pts) * psi - pair.lambda_sq * psi


# --------------------------------------------------------------------------
# quantum Radon average and clusters


def _degree_mask(dim: int) -> np.ndarray:
    L = int(round(np.sqrt(dim))) - 1
    if sh_dim(L) != dim:
        raise ValueError("matrix dimension is not a basis dimension (L+1)^2")
    l = sh_degrees(L)
    return l[:, None] == l[None, :]


def quantum_radon(M) -> np.ndarray:
    """Average of ``exp(isA) M exp(-isA)`` over one period, exactly: the
    degree-diagonal blocks of ``M``."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("quantum_radon needs a square matrix")
    return np.where(_degree_mask(M.shape[0]), M, 0.0)


def quantum_radon_quadrature(M, n_s: int = 64) -> np.ndarray:
    """Same average by the uniform ``n_s``-point rule in ``s`` (an oracle)."""
    M = np.asarray(M, dtype=complex)
    L = int(round(np.sqrt(M.shape[0]))) - 1
    a = sh_degrees(L) + 0.5
    acc = np.zeros_like(M)
    for s in 2.0 * np.pi * np.arange(n_s) / n_s:
        u = np.exp(1j * s * a)
        acc += u[:, None] * M * np.conj(u)[None, :]
    return acc / n_s


@dataclass
class ClusterShifts:
    l: int
    shifts: np.ndarray
    first_order: np.ndarray
    overlap: bool
    gap: float
    width: float

    def to_dict(self) -> dict:
        return {
            "l": self.l,
            "shifts": self.shifts.tolist(),
            "first_order": self.first_order.tolist(),
            "overlap": bool(self.overlap),
        }


def cluster_shifts(
    V: PotentialSpec,
    l: int,
    L_max: Optional[int] = None,
    spectrum: Optional[Spectrum] = None,
    hamiltonian: Optional[HamiltonianMatrix] = None,
) -> ClusterShifts:
    """Eigenvalue shifts ``lambda^2 - l(l+1)`` in cluster ``l`` and the
    first-order prediction (eigenvalues of the degree-``l`` block of ``V``)."""
    if hamiltonian is None:
        if L_max is None:
            L_max = l + V.degree + 4
        if L_max < l + V.degree:
            raise ValueError("L_max must be at least l + potential degree")
        hamiltonian = assemble_hamiltonian(V, L_max)
    if spectrum is None:
        spectrum = eigensolve(hamiltonian)
    idx = spectrum.cluster_indices(l)
    vals = spectrum.eigenvalues[idx]
    shifts = vals - l * (l + 1.0)
    sl = HarmonicBasis(hamiltonian.L_max).slice(l)
    block = hamiltonian.potential_matrix[sl, sl]
    first = np.linalg.eigvalsh(block)
    others = np.delete(spectrum.eigenvalues, idx)
    gap = float(np.min(np.abs(others[:, None] - vals[None, :]))) if len(others) else np.inf
    width = float(vals.max() - vals.min())
    overlap = gap < width or np.any(nearest_cluster(vals, spectrum.mean_potential) != l)
    if overlap:
        log.warning("cluster %d overlaps its neighbours (gap %.3g, width %.3g)", l, gap, width)
    return ClusterShifts(l, shifts, first, bool(overlap), gap, width)


def radon_samples(V: PotentialSpec, count: int) -> np.ndarray:
    """``R(V)`` at ``count`` Fibonacci normals."""
    return radon_multiplier(V)(sphere_grid(count).nodes)


def ks_distance(shifts, samples) -> float:
    return float(ks_2samp(np.asarray(shifts), np.asarray(samples)).statistic)


def cluster_ks(V: PotentialSpec, cs: ClusterShifts) -> float:
    """KS distance between cluster shifts and ``2l+1`` Fibonacci samples of ``R(V)``."""
    return ks_distance(cs.shifts, radon_samples(V, 2 * cs.l + 1))


# --------------------------------------------------------------------------
# spectrum cache


def cache_key(V: PotentialSpec, L_max: int) -> str:
    return hashlib.sha256(f"{V.digest()}:{L_max}".encode()).hexdigest()[:20]


def save_spectrum(spec: Spectrum, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(
        tmp,
        eigenvalues=spec.eigenvalues,
        eigenvectors=spec.eigenvectors,
        L_max=spec.L_max,
        potential_degree=spec.potential_degree,
        digest=np.array(spec.potential_digest),
        mean_potential=spec.mean_potential,
    )
    tmp.replace(path)


def load_spectrum(path) -> Spectrum:
    with np.load(Path(path), allow_pickle=False) as z:
        return Spectrum(
            z["eigenvalues"].copy(),
            z["eigenvectors"].copy(),
            int(z["L_max"]),
            int(z["potential_degree"]),
            str(z["digest"]),
            float(z["mean_potential"]),
        )


def cached_spectrum(V: PotentialSpec, L_max: int, cache_dir=None):
    """Return ``(hamiltonian, spectrum, hit)``; a corrupt cache file is
    recomputed with a warning."""
    H = assemble_hamiltonian(V, L_max)
    if cache_dir is None:
        return H, eigensolve(H), False
    path = Path(cache_dir) / f"spectrum_{cache_key(V, L_max)}.npz"
    if path.exists():
        try:
            spec = load_spectrum(path)
            if spec.L_max != L_max or spec.potential_digest != V.digest():
                raise ValueError("cache key mismatch")
            log.info("spectrum cache hit: %s", path)
            return H, spec, True
        except Exception as exc:  # corrupt or foreign file
            log.warning("spectrum cache %s unreadable (%s); recomputing", path, exc)
    spec = eigensolve(H)
    save_spectrum(spec, path)
    return H, spec, False
