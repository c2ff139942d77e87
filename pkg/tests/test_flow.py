import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radonsphere.flow import (
    FlowEnergyError, fit_scaling_exponent, flow_average, hamiltonian_field, hamiltonian_field_chart,
    integrate_flow, radon_indicator, sup_flow_average, sup_flow_averages, tangency_decomposition,
)
from radonsphere.potential import PotentialSpec, preset
from radonsphere.radon import check_hypotheses, find_critical_points, radon_multiplier
from radonsphere.sphere import E1, E2, E3, geodesic_from_normal, random_points, sphere_grid

DIAG = np.ones(3) / np.sqrt(3)


@pytest.fixture(scope="module")
def F_quad():
    return radon_multiplier(preset("quadratic"))


@pytest.fixture(scope="module")
def F_lin():
    # F(n) = n3 exactly: degree-1 coefficient sqrt(4 pi / 3) on (1, 0)
    from radonsphere.radon import RadonField

    c = np.zeros(4)
    c[2] = np.sqrt(4 * np.pi / 3)
    return RadonField(c)


def test_field_examples(F_lin, rng):
    n = random_points(rng, 20)
    np.testing.assert_allclose(F_lin(n), n[:, 2], atol=1e-14)
    np.testing.assert_allclose(hamiltonian_field(F_lin, n), np.cross(E3, n), atol=1e-14)
    F1 = radon_multiplier(PotentialSpec.constant(2.0))
    np.testing.assert_allclose(hamiltonian_field(F1, n), 0.0, atol=1e-14)


def test_field_vanishes_at_critical_points(F_quad):
    locs = np.array([c.location for c in find_critical_points(F_quad)])
    assert np.max(np.linalg.norm(hamiltonian_field(F_quad, locs), axis=1)) <= 1e-7


def test_chart_consistency(rng):
    for _ in range(10):
        F = radon_multiplier(PotentialSpec.random(rng, 6))
        n = random_points(rng, 100)
        n = n[np.abs(n[:, 2]) < 0.9]
        phi, theta = np.arccos(n[:, 2]), np.arctan2(n[:, 1], n[:, 0])
        amb = hamiltonian_field(F, n)
        back = hamiltonian_field_chart(F, phi, theta)
        np.testing.assert_allclose(back, amb, atol=1e-8)


def test_zonal_rotation(F_lin):
    tr = integrate_flow(F_lin, E1, (0.0, np.pi / 2), 1e-3)
    np.testing.assert_allclose(tr.at(np.pi / 2), E2, atol=1e-8)
    np.testing.assert_allclose(np.linalg.norm(tr.points, axis=-1), 1.0, atol=1e-10)


def test_constant_field_frozen():
    F = radon_multiplier(PotentialSpec.constant(1.0))
    n0 = np.array([0.6, 0.0, 0.8])
    tr = integrate_flow(F, n0, (-1.0, 1.0), 1e-2)
    np.testing.assert_allclose(tr.points, np.broadcast_to(n0, tr.points.shape), atol=1e-15)


def test_energy_conservation_quadratic(F_quad):
    tr = integrate_flow(F_quad, np.array([0.3, 0.5, 0.81]), (0.0, 10.0), 1e-3)
    assert tr.energy_drift <= 1e-8


def test_time_reversal(rng):
    F = radon_multiplier(PotentialSpec.random(rng, 6))
    n0 = random_points(rng, 8)
    fwd = integrate_flow(F, n0, (0.0, 3.0), 1e-3).points[-1]
    back = integrate_flow(F, fwd, (-3.0, 0.0), 1e-3).points[0]
    np.testing.assert_allclose(back, n0, atol=1e-7)


def test_energy_error_raised(F_quad):
    with pytest.raises(FlowEnergyError):
        integrate_flow(F_quad, np.array([0.3, 0.5, 0.81]), (0.0, 10.0), 1e-2, energy_tol=1e-16)
    with pytest.raises(ValueError):
        integrate_flow(F_quad, E1, (0.5, 1.0), 1e-3)


def test_indicator_examples(rng):
    x = E3
    rho = 0.3
    np.testing.assert_allclose(radon_indicator(x, rho, geodesic_from_normal(E1)), rho / np.pi, atol=1e-15)
    n = np.array([0.0, np.cos(0.2), np.sin(0.2)])
    assert radon_indicator(x, 0.2, n) == 0.0
    # brute-force occupancy oracle
    s = 2 * np.pi * (np.arange(4096) + 0.5) / 4096
    for _ in range(100):
        x = random_points(rng, 1)[0]
        rho = rng.uniform(0.01, 1.4)
        g = geodesic_from_normal(random_points(rng, 1)[0])
        frac = np.mean(g(s) @ x >= np.cos(rho))
        assert abs(radon_indicator(x, rho, g) - frac) <= 2e-3


def test_flow_average_static_and_envelope(rng, F_quad):
    F1 = radon_multiplier(PotentialSpec.constant(1.0))
    g = geodesic_from_normal(np.array([0.05, 0.3, 0.95]))
    x = g(0.4)
    np.testing.assert_allclose(flow_average(F1, x, 0.05, 0.5, g), radon_indicator(x, 0.1, g), atol=1e-12)
    for _ in range(20):
        x = random_points(rng, 1)[0]
        r = rng.uniform(0.005, 0.3)
        n = random_points(rng, 1)[0]
        assert flow_average(F_quad, x, r, 0.5, n, 1e-2) <= 4 * r + 1e-9


def test_sup_flow_average_constant_field():
    F1 = radon_multiplier(PotentialSpec.constant(1.0))
    scan = sphere_grid(2000)
    res = sup_flow_averages(F1, DIAG, [0.02, 0.04], 0.5, scan, 1e-2)
    # the Fibonacci scan nearly reaches c = 0 where the static sup 2r/pi is attained
    np.testing.assert_allclose(res["sup"], 2 * np.array([0.02, 0.04]) / np.pi, rtol=0.05)
    assert res["sup"][0] <= res["sup"][1]


def test_fit_constant_field_exponent_one():
    F1 = radon_multiplier(PotentialSpec.constant(1.0))
    fit = fit_scaling_exponent(F1, E3, [0.01, 0.02, 0.04, 0.08], 0.5, sphere_grid(4000), 1e-2)
    assert abs(fit.fitted_exponent - 1.0) <= 0.05


def test_fit_rejects_bad_radii(F_quad):
    with pytest.raises(ValueError):
        fit_scaling_exponent(F_quad, DIAG, [0.01, 0.02, 0.03], 0.5, sphere_grid(2000))
    with pytest.raises(ValueError):
        sup_flow_averages(F_quad, DIAG, [0.01], 0.5, sphere_grid(500))


def test_tangency_decomposition_counts(F_quad, rng):
    F1 = radon_multiplier(PotentialSpec.constant(1.0))
    dec = tangency_decomposition(F1, DIAG, 0.05, 0.5, np.array([0.0, 0.6, 0.8]), 1e-2)
    assert len(dec.intervals) <= 1 and not dec.tangency_times
    assert check_hypotheses(preset("quadratic"), DIAG).h1_pass
    for n in random_points(rng, 500):
        if abs(n @ DIAG) > np.sin(0.1) + 0.5 * 1.5:
            continue
        dec = tangency_decomposition(F_quad, DIAG, 0.05, 0.5, n, 1e-2)
        assert len(dec.intervals) <= 2
        iv = np.array(dec.intervals).reshape(-1, 2)
        assert np.all(iv[:, 0] <= iv[:, 1])
        assert np.all(iv[1:, 0] >= iv[:-1, 1])
        assert np.all((iv >= -0.5 - 1e-12) & (iv <= 0.5 + 1e-12))
        assert len(dec.tangency_times) <= 1


def test_flow_fixes_critical_points(F_quad):
    for c in find_critical_points(F_quad):
        tr = integrate_flow(F_quad, c.location, (0.0, 1.0), 1e-3)
        assert np.linalg.norm(tr.points[-1] - c.location) <= 1e-5
