import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radonsphere.harmonics import (
    Poly, PolyField, coeffs_to_poly, harmonic_eval, legendre_at_zero, sh_degrees, sh_dim,
    sh_index, sh_matrix, solid_harmonic, synthesize,
)
from radonsphere.sphere import E3, gauss_sphere_rule, random_points


def test_low_degree_values():
    x = np.array([[0.6, 0.0, 0.8]])
    np.testing.assert_allclose(harmonic_eval(0, 0, x), 1 / np.sqrt(4 * np.pi))
    np.testing.assert_allclose(harmonic_eval(1, 0, E3), np.sqrt(3 / (4 * np.pi)))
    # real convention without the Condon-Shortley phase: Y_{1,1} is +c*x
    np.testing.assert_allclose(harmonic_eval(1, 1, x), np.sqrt(3 / (4 * np.pi)) * 0.6)
    with pytest.raises(ValueError):
        harmonic_eval(2, 3, x)


def test_addition_theorem(rng):
    x = random_points(rng, 50)
    B = sh_matrix(10, x)
    l = sh_degrees(10)
    for deg in range(11):
        np.testing.assert_allclose((B[:, l == deg] ** 2).sum(1), (2 * deg + 1) / (4 * np.pi), atol=1e-10)


def test_parseval(rng):
    c = rng.standard_normal(sh_dim(12))
    g = gauss_sphere_rule(12)
    np.testing.assert_allclose(g.integrate(synthesize(c, g.nodes) ** 2), c @ c, rtol=1e-9)


@pytest.mark.parametrize("l", range(0, 9))
def test_solid_harmonics_match_recurrence(l, rng):
    x = random_points(rng, 40)
    B = sh_matrix(l, x)
    for m in range(-l, l + 1):
        np.testing.assert_allclose(solid_harmonic(l, m)(x), B[:, sh_index(l, m)], atol=1e-12)


def test_poly_field_derivatives(rng):
    p = Poly.var(0) ** 2 * Poly.var(2) - Poly.var(1) * 3.0 + Poly.const(2.0)
    f = PolyField(p)
    x = rng.standard_normal((5, 3))
    grad = np.stack([2 * x[:, 0] * x[:, 2], np.full(5, -3.0), x[:, 0] ** 2], -1)
    np.testing.assert_allclose(f.gradient(x), grad)
    H = f.hessian(x)
    np.testing.assert_allclose(H[:, 0, 2], 2 * x[:, 0])
    np.testing.assert_allclose(H[:, 0, 0], 2 * x[:, 2])


def test_coeffs_to_poly_roundtrip(rng):
    c = rng.standard_normal(sh_dim(4))
    x = random_points(rng, 30)
    np.testing.assert_allclose(coeffs_to_poly(c)(x), synthesize(c, x), atol=1e-12)


def test_legendre_at_zero():
    assert legendre_at_zero(0) == 1.0
    np.testing.assert_allclose(legendre_at_zero(2), -0.5)
    np.testing.assert_allclose(legendre_at_zero(4), 3 / 8)
    assert legendre_at_zero(3) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 30), st.data())
def test_index_roundtrip(l, data):
    m = data.draw(st.integers(-l, l))
    k = sh_index(l, m)
    L = l + 1
    assert sh_degrees(L)[k] == l
