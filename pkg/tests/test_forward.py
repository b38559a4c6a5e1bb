import numpy as np
import pytest

from oracles import circle_far_field
from phaseless_bayes import GeometryError, ScatteringSetup, SolverError
from phaseless_bayes.forward import (
    FactoredBoundaryOperator, choose_n_quad, circle_far_field_series, far_field_matrix,
    forward_map, incident_field, resolution, solve_far_field,
)
from phaseless_bayes.geometry import KITE_EXACT, ObstacleParams, circle, make_curve
from phaseless_bayes.specfun import hankel1


def test_setup_geometry():
    s = ScatteringSetup(R=6.0, L=4, M=4)
    np.testing.assert_allclose(s.sources, [[6, 0], [0, 6], [-6, 0], [0, -6]], atol=1e-14)
    np.testing.assert_allclose(s.direction_angles, [-np.pi, -np.pi / 2, 0, np.pi / 2])
    for bad in (dict(k=0), dict(L=0), dict(n_quad=15), dict(n_quad=14), dict(n_quad=64, n_quad_max=32)):
        with pytest.raises(ValueError):
            ScatteringSetup(**bad)


def test_incident_field_definition_and_symmetry():
    assert incident_field([1.0, 0.0], [0.0, 0.0], 2.0) == pytest.approx(0.25j * hankel1(0, 2.0), abs=1e-15)
    a = incident_field([3.0, 4.0], [0.0, 0.0], 1.3)
    b = incident_field([-5.0, 0.0], [0.0, 0.0], 1.3)
    assert a == pytest.approx(b, abs=1e-15)
    with pytest.raises(ValueError):
        incident_field([1.0, 1.0], [1.0, 1.0], 2.0)


def test_incident_field_solves_helmholtz():
    k, h = 2.0, 1e-3
    src = np.array([0.3, -0.2])
    x = src + 3.0 * np.array([np.cos(0.7), np.sin(0.7)])
    u = lambda p: incident_field(p, src, k)  # noqa: E731
    lap = (u(x + [h, 0]) + u(x - [h, 0]) + u(x + [0, h]) + u(x - [0, h]) - 4 * u(x)) / h**2
    assert abs(lap + k * k * u(x)) < 1e-4


def test_circle_oracle():
    setup = ScatteringSetup(k=2.0, R=6.0, L=1, M=64, n_quad=64)
    u = solve_far_field(make_curve(circle(2.0)), setup, 0)
    ref = circle_far_field(2.0, 2.0, setup.sources[0], setup.direction_angles)
    assert np.max(np.abs(u - ref)) <= 1e-8
    np.testing.assert_allclose(np.abs(forward_map(make_curve(circle(2.0)), setup))[:, 0], np.abs(ref),
                               atol=1e-8)


def test_library_series_matches_test_oracle():
    setup = ScatteringSetup(k=3.0, R=5.0, L=3, M=16)
    for l in range(3):
        lib = circle_far_field_series(1.5, setup, l)
        ref = circle_far_field(1.5, 3.0, setup.sources[l], setup.direction_angles)
        np.testing.assert_allclose(lib, ref, atol=1e-13)


def test_circle_mirror_symmetry():
    setup = ScatteringSetup(k=2.0, R=6.0, L=1, M=64, n_quad=64)
    mod = np.abs(solve_far_field(make_curve(circle(1.3)), setup, 0))
    # theta_m = -pi + 2 pi m / M; the mirror of index m is (M - m) mod M
    m = np.arange(64)
    np.testing.assert_allclose(mod, mod[(64 - m) % 64], atol=1e-10)


def test_rotation_equivariance():
    L = M = 24
    shift = 5
    psi = 2 * np.pi * shift / L
    base = np.array([0.4, -0.3, 1.2, 0.25, -0.1, 0.0, 0.15])
    cx, cy = base[0], base[1]
    rot = base.copy()
    rot[0], rot[1] = np.cos(psi) * cx - np.sin(psi) * cy, np.sin(psi) * cx + np.cos(psi) * cy
    for n in range(1, 3):
        a, b = base[1 + 2 * n], base[2 + 2 * n]
        # r(t - psi) expanded back into cos/sin of n t
        rot[1 + 2 * n] = a * np.cos(n * psi) - b * np.sin(n * psi)
        rot[2 + 2 * n] = a * np.sin(n * psi) + b * np.cos(n * psi)
    setup = ScatteringSetup(k=2.0, R=6.0, L=L, M=M, n_quad=64)
    u0 = far_field_matrix(make_curve(ObstacleParams.star(base)), setup)
    u1 = far_field_matrix(make_curve(ObstacleParams.star(rot)), setup)
    np.testing.assert_allclose(np.roll(np.roll(u0, shift, axis=0), shift, axis=1), u1, atol=1e-9)


def test_forward_map_nonnegative(kite_curve):
    setup = ScatteringSetup(k=2.0, R=6.0, L=25, M=25)
    y = forward_map(kite_curve, setup)
    assert y.shape == (25, 25)
    assert np.all(np.isfinite(y)) and np.all(y >= 0)


def test_factorisation_reuse(kite_curve):
    setup = ScatteringSetup(k=2.0, R=6.0, L=6, M=10)
    full = far_field_matrix(kite_curve, setup)
    cols = np.column_stack([solve_far_field(kite_curve, setup, l) for l in range(6)])
    np.testing.assert_allclose(full, cols, atol=1e-14, rtol=0)


def test_coupling_does_not_change_far_field(kite_curve):
    s1 = ScatteringSetup(k=2.0, R=6.0, L=5, M=12)
    s2 = s1.replace(eta=4.0)
    op1, op2 = FactoredBoundaryOperator(kite_curve, s1), FactoredBoundaryOperator(kite_curve, s2)
    assert np.max(np.abs(op1.density() - op2.density())) > 1e-3
    np.testing.assert_allclose(forward_map(kite_curve, s1), forward_map(kite_curve, s2), atol=1e-8)


def test_kite_self_convergence(kite_curve):
    s64 = ScatteringSetup(k=2.0, R=6.0, L=25, M=25, n_quad=64)
    u64 = far_field_matrix(kite_curve, s64)
    u128 = far_field_matrix(kite_curve, s64.replace(n_quad=128))
    assert np.max(np.abs(u64 - u128)) <= 1e-9


def test_invalid_geometry_rejected():
    setup = ScatteringSetup(R=6.0, L=4, M=4)
    with pytest.raises(GeometryError):
        forward_map(make_curve(circle(7.0)), setup)
    with pytest.raises(IndexError):
        solve_far_field(make_curve(circle(1.0)), setup, 4)


def test_resolution_grows_with_nodes():
    thin = make_curve(ObstacleParams.kite([0.0, 1.5, 0.0, 0.0, 0.08, 0.0]))
    r = [resolution(thin, n) for n in (32, 64, 128, 256)]
    assert all(b > a for a, b in zip(r, r[1:]))


def test_adaptive_node_count():
    thin = make_curve(ObstacleParams.kite([0.0, 1.5, 0.0, 0.0, 0.08, 0.0]))
    fixed = ScatteringSetup(k=2.0, L=4, M=8, n_quad=32)
    assert choose_n_quad(thin, fixed) == 32
    adaptive = fixed.replace(n_quad_max=512)
    n = choose_n_quad(thin, adaptive)
    assert 32 < n <= 512 and resolution(thin, n) >= adaptive.min_resolution
    ref = far_field_matrix(thin, fixed.replace(n_quad=1024))
    err_fixed = np.max(np.abs(far_field_matrix(thin, fixed) - ref))
    err_adapt = np.max(np.abs(far_field_matrix(thin, adaptive) - ref))
    assert err_adapt < err_fixed
    with pytest.raises(SolverError):
        choose_n_quad(thin, fixed.replace(n_quad_max=64))
    # a resolved curve keeps the requested node count
    assert choose_n_quad(make_curve(ObstacleParams.kite(KITE_EXACT)), adaptive) == 32
