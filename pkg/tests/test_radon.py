import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radonsphere.harmonics import sh_degrees
from radonsphere.potential import PotentialSpec, preset
from radonsphere.radon import (
    GRAD_TOL, check_hypotheses, classify, find_critical_points, radon_gradient,
    radon_multiplier, radon_quadrature, restriction_critical_points, restriction_profile,
)
from radonsphere.sphere import E1, E2, E3, frame_from_normal, random_points, random_rotation, sphere_grid

DIAG = np.ones(3) / np.sqrt(3)


def test_quadrature_examples(rng):
    n = random_points(rng, 50)
    np.testing.assert_allclose(radon_quadrature(PotentialSpec.constant(1.0), n), 1.0, atol=1e-14)
    np.testing.assert_allclose(radon_quadrature(preset("odd"), n), 0.0, atol=1e-12)
    np.testing.assert_allclose(radon_quadrature(preset("zonal"), n), (1 - n[:, 2] ** 2) / 2, atol=1e-12)
    np.testing.assert_allclose(radon_quadrature(preset("zonal"), n, n_s=256), (1 - n[:, 2] ** 2) / 2, atol=1e-12)


def test_multiplier_examples(rng):
    V = PotentialSpec.random(rng, 8)
    F = radon_multiplier(V)
    l = sh_degrees(8)
    np.testing.assert_allclose(F.coeffs[0], V.coeffs[0])
    np.testing.assert_allclose(F.coeffs[l == 2], -0.5 * V.coeffs[l == 2])
    assert np.all(F.coeffs[l % 2 == 1] == 0.0)
    n = random_points(rng, 200)
    np.testing.assert_allclose(F(n), radon_quadrature(V, n), atol=1e-10)
    np.testing.assert_allclose(F(n), F(-n), atol=1e-10)


def test_linearity(rng):
    V, W = PotentialSpec.random(rng, 6), PotentialSpec.random(rng, 6)
    a, b = 1.7, -0.3
    n = random_points(rng, 100)
    lhs = radon_multiplier(PotentialSpec(a * V.coeffs + b * W.coeffs))(n)
    np.testing.assert_allclose(lhs, a * radon_multiplier(V)(n) + b * radon_multiplier(W)(n), atol=1e-12)


def test_odd_potentials_vanish(rng):
    scan = sphere_grid(1000).nodes
    for text in ("x1", "x2", "x3", "x1^3 - 2*x1*x2*x3 + 0.5*x2"):
        F = radon_multiplier(PotentialSpec.from_polynomial(text))
        assert np.max(np.abs(F(scan))) <= 1e-10


def test_quadratic_field_closed_form(rng):
    F = radon_multiplier(preset("quadratic"))
    n = random_points(rng, 100)
    np.testing.assert_allclose(F(n), 3 - (n**2 @ [1, 2, 3]) / 2, atol=1e-12)


def test_gradient_examples(rng):
    F1 = radon_multiplier(PotentialSpec.constant(1.0))
    np.testing.assert_allclose(radon_gradient(F1, random_points(rng, 5)), 0.0, atol=1e-14)
    Fz = radon_multiplier(preset("zonal"))
    for n in (E3, -E3, E1, np.array([0.6, 0.8, 0.0])):
        np.testing.assert_allclose(radon_gradient(Fz, n), 0.0, atol=1e-14)
    assert np.linalg.norm(radon_gradient(Fz, np.array([0.6, 0.0, 0.8]))) > 0.1


def test_gradient_against_finite_differences(rng):
    F = radon_multiplier(PotentialSpec.random(rng, 6))
    h = 1e-5
    for n in random_points(rng, 100):
        e1, e2 = frame_from_normal(n)
        g = radon_gradient(F, n)
        fd = []
        for t in (e1, e2):
            p = (n + h * t) / np.linalg.norm(n + h * t)
            m = (n - h * t) / np.linalg.norm(n - h * t)
            fd.append((F(p) - F(m)).item() / (2 * h))
        np.testing.assert_allclose(g, fd, atol=1e-6)


def test_quadratic_critical_points():
    F = radon_multiplier(preset("quadratic"))
    found = find_critical_points(F)
    assert len(found) == 6
    expect = {0: ("max", 2.5), 1: ("saddle", 2.0), 2: ("min", 1.5)}
    for c in found:
        axis = int(np.argmax(np.abs(c.location)))
        target = np.sign(c.location[axis]) * np.eye(3)[axis]
        np.testing.assert_allclose(c.location, target, atol=1e-6)
        assert c.kind == expect[axis][0]
        np.testing.assert_allclose(c.value, expect[axis][1], atol=1e-12)


def test_critical_points_invariants(rng):
    F = radon_multiplier(PotentialSpec.random(rng, 6))
    found = find_critical_points(F)
    locs = np.array([c.location for c in found])
    assert np.max(np.linalg.norm(F.tangent_gradient(locs), axis=1)) <= GRAD_TOL
    for p in locs:
        assert np.min(np.linalg.norm(locs + p, axis=1)) < 1e-6


def test_constant_field_is_degenerate():
    res = find_critical_points(radon_multiplier(PotentialSpec.constant(1.0)))
    assert res.degenerate_field
    assert len(res) == 0


def test_classify():
    assert classify([-1.0, -2.0]) == "max"
    assert classify([1.0, 2.0]) == "min"
    assert classify([1.0, -2.0]) == "saddle"
    assert classify([1e-9, 2.0]) == "degenerate"


def test_restriction_profile_properties():
    F1 = radon_multiplier(PotentialSpec.constant(1.0))
    prof = restriction_profile(F1, DIAG)
    np.testing.assert_allclose(prof.g, 1.0, atol=1e-14)
    np.testing.assert_allclose(prof.dg, 0.0, atol=1e-14)
    F = radon_multiplier(preset("quadratic"))
    prof = restriction_profile(F, DIAG, n_theta=1024)
    half = len(prof.theta) // 2
    np.testing.assert_allclose(prof.g[:half], prof.g[half:], atol=1e-10)


def test_restriction_extrema_match_quadratic_form():
    # g(theta) = 3 - u(theta)^T D u(theta) / 2 with u on the circle orthogonal to x0,
    # so its extrema sit at the eigenvectors of D restricted to that plane
    F = radon_multiplier(preset("quadratic"))
    prof = restriction_profile(F, DIAG, n_theta=4096)
    roots, d2 = restriction_critical_points(prof)
    assert np.all(np.abs(d2) > 1e-6)
    U = np.stack([prof.u1, prof.u2], 1)
    w, vecs = np.linalg.eigh(U.T @ np.diag([1.0, 2.0, 3.0]) @ U)
    expected = np.mod(np.arctan2(vecs[1], vecs[0]), np.pi)
    found = np.unique(np.round(np.mod(roots, np.pi), 8))
    np.testing.assert_allclose(np.sort(found), np.sort(expected), atol=1e-8)
    dense = prof.theta[np.argmax(prof.g)]
    assert min(abs(np.mod(dense - expected + np.pi / 2, np.pi) - np.pi / 2)) <= 2 * np.pi / 4096


def test_hypothesis_examples():
    V = preset("quadratic")
    good = check_hypotheses(V, DIAG)
    assert good.h1_pass and good.h2_pass
    np.testing.assert_allclose(good.crit_margin, np.arcsin(1 / np.sqrt(3)), atol=1e-6)
    bad = check_hypotheses(V, E1)
    assert not bad.h1_pass
    const = check_hypotheses(PotentialSpec.constant(3.0), DIAG)
    assert not const.h1_pass and not const.h2_pass
    d = good.to_dict()
    assert d["tolerances"]["morse_tol"] == 1e-6


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hypotheses_rotation_invariant(seed):
    R = random_rotation(np.random.default_rng(seed))
    V = preset("quadratic")
    for x0 in (DIAG, E1):
        a = check_hypotheses(V, x0)
        b = check_hypotheses(V.rotated(R), R @ x0)
        assert (a.h1_pass, a.h2_pass) == (b.h1_pass, b.h2_pass)
