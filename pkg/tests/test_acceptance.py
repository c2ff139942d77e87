"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed even when output capture is on.
"""
import time
from fractions import Fraction
from math import inf

import numpy as np
import pytest
import yaml

from radonsphere import cli, spectral
from radonsphere.flow import fit_scaling_exponent, integrate_flow, sup_flow_averages
from radonsphere.harmonics import sh_degrees, sh_matrix
from radonsphere.norms import exponents, sigma0, verify_report
from radonsphere.potential import PotentialSpec, preset
from radonsphere.radon import (
    check_hypotheses, find_critical_points, radon_multiplier, radon_quadrature,
)
from radonsphere.spectral import (
    assemble_hamiltonian, cluster_ks, cluster_shifts, eigensolve, laplacian_coeffs, potential_matrix,
    quantum_radon,
)
from radonsphere.sphere import E1, E3, random_points, random_rotation, sphere_grid

DIAG = np.ones(3) / np.sqrt(3.0)


@pytest.fixture
def verdict(request, pytestconfig):
    """Print one verdict line and fail the test on FAIL."""
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")
    start = time.perf_counter()

    def emit(number, ok, detail, budget=None):
        took = time.perf_counter() - start
        if budget is not None and took > budget:
            ok = False
            detail += f"; over the {budget:.0f} s budget"
        line = f"CRITERION {number:>2} {'PASS' if ok else 'FAIL'}  {detail}  [{took:.1f} s]"
        with capman.global_and_fixture_disabled():
            print("\n" + line)
        assert ok, line

    return emit


def test_c01_radon_consistency(verdict, rng):
    worst = 0.0
    for _ in range(10):
        V = PotentialSpec.random(rng, int(rng.integers(1, 11)))
        n = random_points(rng, 200)
        worst = max(worst, np.max(np.abs(radon_multiplier(V)(n) - radon_quadrature(V, n))))
    scan = sphere_grid(2000).nodes
    odd = 0.0
    for text in ("x3", "x1^3 - 2*x1*x2*x3 + 0.5*x2", "x1*x2^2*x3^2 + x2^5"):
        odd = max(odd, np.max(np.abs(radon_multiplier(PotentialSpec.from_polynomial(text))(scan))))
    verdict(1, worst <= 1e-10 and odd <= 1e-10,
            f"multiplier vs quadrature {worst:.1e}, odd potentials {odd:.1e} (tol 1e-10)", budget=10)


def test_c02_critical_points(verdict, rng):
    found = find_critical_points(radon_multiplier(preset("quadratic")))
    kinds = {0: "max", 1: "saddle", 2: "min"}
    ok = len(found) == 6
    err = 0.0 if ok else inf
    for c in found:
        axis = int(np.argmax(np.abs(c.location)))
        target = np.sign(c.location[axis]) * np.eye(3)[axis]
        err = max(err, np.linalg.norm(c.location - target))
        ok &= c.kind == kinds[axis]
    ok &= err <= 1e-6
    counts = []
    while len(counts) < 20:
        found = find_critical_points(radon_multiplier(PotentialSpec.random(rng, int(rng.integers(2, 7)))))
        if found.degenerate_field or any(c.kind == "degenerate" for c in found):
            continue
        counts.append(len(found))
    ok &= min(counts) >= 6
    verdict(2, ok, f"quadratic: 6 classified points expected, location error {err:.1e}; "
                   f"min count over 20 Morse fields {min(counts)}", budget=30)


def test_c03_hypotheses(verdict, rng):
    V = preset("quadratic")
    good, bad = check_hypotheses(V, DIAG), check_hypotheses(V, E1)
    ok = good.h1_pass and good.h2_pass and not bad.h1_pass
    mismatches = 0
    for _ in range(20):
        R = random_rotation(rng)
        W = V.rotated(R)
        for x0, ref in ((DIAG, good), (E1, bad)):
            rep = check_hypotheses(W, R @ x0)
            mismatches += (rep.h1_pass, rep.h2_pass) != (ref.h1_pass, ref.h2_pass)
    ok &= mismatches == 0
    verdict(3, ok, f"diagonal (h1, h2) = ({good.h1_pass}, {good.h2_pass}), e1 h1 = {bad.h1_pass}, "
                   f"{mismatches} rotation mismatches", budget=60)


def test_c04_flow_fidelity(verdict, rng):
    # V = x3^2 gives F = (1 - n3^2)/2: rigid rotation about e3 at rate -n3
    Fz = radon_multiplier(preset("zonal"))
    n0 = np.array([0.6, 0.0, 0.8])
    w = -n0[2] * np.pi / 2
    exact = np.array([0.6 * np.cos(w), 0.6 * np.sin(w), 0.8])
    zonal_err = np.linalg.norm(integrate_flow(Fz, n0, (0.0, np.pi / 2), 1e-3).at(np.pi / 2) - exact)
    drift = 0.0
    rev = 0.0
    for _ in range(5):
        F = radon_multiplier(PotentialSpec.random(rng, int(rng.integers(2, 7))))
        starts = random_points(rng, 4)
        tr = integrate_flow(F, starts, (-5.0, 5.0), 1e-3)
        drift = max(drift, tr.energy_drift)
        fwd = tr.at(5.0)
        back = integrate_flow(F, fwd, (-5.0, 0.0), 1e-3).points[0]
        rev = max(rev, np.max(np.linalg.norm(back - starts, axis=-1)))
    verdict(4, zonal_err <= 1e-8 and drift <= 1e-7 and rev <= 1e-7,
            f"zonal error {zonal_err:.1e} (1e-8), energy drift {drift:.1e} (1e-7), reversal {rev:.1e} (1e-7)")


def test_c05_scaling_exponents(verdict):
    radii = [0.01, 0.02, 0.04, 0.08]
    scan = sphere_grid(4000)
    Fq = radon_multiplier(preset("quadratic"))
    Fz = radon_multiplier(preset("zonal"))
    sq = sup_flow_averages(Fq, DIAG, radii, 0.5, scan)
    sz = sup_flow_averages(Fz, E3, radii, 0.5, scan)
    good = fit_scaling_exponent(Fq, DIAG, radii, 0.5, scan, sweep=sq).fitted_exponent
    degen = fit_scaling_exponent(Fz, E3, radii, 0.5, scan, sweep=sz).fitted_exponent
    envelope = all(np.all(np.asarray(s["averages"]) <= 4 * np.asarray(radii) + 1e-12) for s in (sq, sz))
    verdict(5, good >= 1.45 and 0.9 <= degen <= 1.1 and envelope,
            f"quadratic at diagonal {good:.3f} (need >= 1.45), zonal at e3 {degen:.3f} (need [0.9, 1.1]), "
            f"all averages <= 4r: {envelope}", budget=600)


def test_c05_supplement_small_radius_regime(verdict):
    # r^{3/2} is an asymptotic law; the saturation term is negligible once r <= 0.02
    radii = [0.0025, 0.005, 0.01, 0.02]
    Fq = radon_multiplier(preset("quadratic"))
    fit = fit_scaling_exponent(Fq, DIAG, radii, 0.5, sphere_grid(4000)).fitted_exponent
    verdict("5s", fit >= 1.45, f"quadratic at diagonal over r in [0.0025, 0.02]: {fit:.3f} (need >= 1.45)")


def _all_residuals(L):
    V = preset("quadratic")
    H = assemble_hamiltonian(V, L)
    spec = eigensolve(H)
    pts = random_points(np.random.default_rng(5), 400)
    B = sh_matrix(L, pts)
    C = spec.eigenvectors
    res = B @ laplacian_coeffs(C) + V(pts)[:, None] * (B @ C) - spec.eigenvalues * (B @ C)
    return spec, np.max(np.abs(res), axis=0) / spec.eigenvalues


def test_c06_spectral_exactness(verdict):
    free = eigensolve(assemble_hamiltonian(PotentialSpec.constant(0.0), 20))
    expect = np.concatenate([[l * (l + 1.0)] * (2 * l + 1) for l in range(21)])
    free_err = np.max(np.abs(free.eigenvalues - expect))
    shifted = eigensolve(assemble_hamiltonian(PotentialSpec.constant(3.25), 20))
    shift_err = np.max(np.abs(shifted.eigenvalues - expect - 3.25))
    _, rel = _all_residuals(30)
    verdict(6, free_err <= 1e-9 and shift_err <= 1e-9 and rel.max() <= 1e-6,
            f"free spectrum {free_err:.1e}, constant shift {shift_err:.1e}, "
            f"max PDE residual / lambda^2 over all eigenpairs {rel.max():.1e} (tol 1e-6)", budget=120)


def test_c06_supplement_trusted_residual(verdict):
    # the top clusters feel the Galerkin cutoff; clusters l <= l_trust do not
    spec, rel = _all_residuals(30)
    trusted = spec.trusted_indices()
    verdict("6s", rel[trusted].max() <= 1e-6,
            f"max PDE residual / lambda^2 over trusted clusters (l <= {spec.l_trust}) {rel[trusted].max():.1e}")


def test_c07_weinstein_structure(verdict):
    V = preset("quadratic")
    L = 30
    H = assemble_hamiltonian(V, L)
    Q = quantum_radon(potential_matrix(V, L))
    l = sh_degrees(L)
    lap = np.diag(l * (l + 1.0))
    comm = np.max(np.abs(Q @ lap - lap @ Q))
    spec = eigensolve(H)
    sizes = np.bincount(spec.clusters)
    sizes_ok = all(sizes[k] == 2 * k + 1 for k in range(spec.l_trust + 1))
    ks10 = cluster_ks(V, cluster_shifts(V, 10))
    ks25 = cluster_ks(V, cluster_shifts(V, 25))
    verdict(7, comm <= 1e-12 and sizes_ok and ks25 < ks10,
            f"commutator {comm:.1e}, cluster sizes 2l+1 up to {spec.l_trust}: {sizes_ok}, "
            f"KS {ks10:.3f} (l=10) -> {ks25:.3f} (l=25)", budget=120)


@pytest.mark.slow
def test_c08_m_functional_dichotomy(verdict):
    rep = verify_report(preset("quadratic"), DIAG, 0.1, (10, 40), p_list=[4], global_norms=False)
    s = rep.summary
    slope = s["m_slope_cluster_max"]
    ctrl = s["control"]["m_slope"]
    ok = -0.1 <= slope <= 0.1 and np.isfinite(s["C0_empirical"]) and ctrl >= 0.05
    verdict(8, ok, f"slope {slope:+.3f} (need [-0.1, 0.1]), C0 {s['C0_empirical']:.3f}, "
                   f"V=0 control slope {ctrl:+.3f} (need >= 0.05), {s['n_clusters']} clusters", budget=600)


def test_c09_exponent_arithmetic(verdict):
    table = {2: (0, 0, 0), 4: (Fraction(1, 8), Fraction(1, 36), 1), 6: (Fraction(1, 6), 0, 0),
             inf: (Fraction(1, 2), Fraction(1, 18), 0)}
    ok = all((e.sigma0, e.delta, e.eps) == want for p, want in table.items() for e in [exponents(p)])
    ok &= exponents(3).eps == 2 * (1 - Fraction(2, 3))
    grid = [Fraction(k, 8) for k in range(16, 800)]
    cross = [p for p in grid if Fraction(1, 4) - 1 / (2 * p) == Fraction(1, 2) - 2 / p]
    ok &= cross == [6] and sigma0(6) == Fraction(1, 6)
    verdict(9, ok, f"exact table at p in {{2, 4, 6, inf}}, branches cross at {[str(c) for c in cross]}")


def _verify(tmp_path, name, cache=None):
    cfg = tmp_path / "verify.yaml"
    cfg.write_text(yaml.safe_dump({"potential": {"preset": "quadratic"}, "points": ["diagonal"],
                                   "lambda_range": [3, 12], "p": [4, 6], "global_norms": False}))
    out = tmp_path / name
    extra = ["--cache", str(cache)] if cache else []
    assert cli.main(["verify", "--config", str(cfg), "--out", str(out), "--seed", "11", *extra]) == 0
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_c10_determinism(verdict, tmp_path, monkeypatch):
    a = _verify(tmp_path, "a")
    b = _verify(tmp_path, "b")
    same = a == b
    cache = tmp_path / "cache"
    _verify(tmp_path, "cold", cache)
    calls = []
    real = spectral.eigensolve
    monkeypatch.setattr(spectral, "eigensolve", lambda *x, **k: calls.append(1) or real(*x, **k))
    _verify(tmp_path, "warm", cache)
    verdict(10, same and not calls,
            f"{len(a)} files byte-identical: {same}; eigensolves on warm rerun: {len(calls)}")
