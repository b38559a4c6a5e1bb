import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import kite_points
from phaseless_bayes import ParameterError, ScatteringSetup
from phaseless_bayes.geometry import (
    KITE_EXACT, NOTCHED_DISK_EXACT, STAR4_EXACT, Family, ObstacleParams, circle, is_valid,
    make_curve, parameter_count, polygon_length, sample_boundary, unit_circle,
)

RING6 = ScatteringSetup(R=6.0, L=25, M=25).sources


def test_parameter_counts():
    assert parameter_count("kite") == 6
    assert parameter_count("star", 1) == 5
    assert parameter_count("star", 4) == 11
    assert len(ObstacleParams.star(STAR4_EXACT)) == 11


@pytest.mark.parametrize("family,values", [("kite", [0.0] * 5), ("star", [0.0] * 4), ("star", [0.0] * 6),
                                           ("kite", [0, 1, 0, 0, 1, np.nan])])
def test_malformed_parameters(family, values):
    with pytest.raises(ParameterError):
        ObstacleParams(family, values)


def test_kite_points():
    c = make_curve(ObstacleParams.kite(KITE_EXACT))
    np.testing.assert_allclose(c(0.0), [1.0, -3.0], atol=1e-15)
    np.testing.assert_allclose(c(np.pi / 2), [-1.3, -1.5], atol=1e-15)


def test_prior_mean_is_unit_circle():
    pts = sample_boundary(make_curve(unit_circle()), 64)
    np.testing.assert_allclose(np.hypot(pts[:, 0], pts[:, 1]), 1.0, atol=1e-15)
    pts = sample_boundary(make_curve(unit_circle("star", 3)), 64)
    np.testing.assert_allclose(np.hypot(pts[:, 0], pts[:, 1]), 1.0, atol=1e-15)


def test_notched_disk_point():
    c = make_curve(ObstacleParams.star(NOTCHED_DISK_EXACT))
    np.testing.assert_allclose(c(0.0), [-0.5, -4.0], atol=1e-15)


def test_kite_matches_independent_formula():
    z = np.array(KITE_EXACT)
    np.testing.assert_allclose(sample_boundary(make_curve(ObstacleParams.kite(z)), 100),
                               kite_points(z, 100), atol=1e-14)


def test_validity_examples():
    assert is_valid(make_curve(unit_circle()), RING6)
    assert not is_valid(make_curve(ObstacleParams.star([0, 0, 1, -2, 0])), RING6)
    assert is_valid(make_curve(ObstacleParams.kite(KITE_EXACT)), RING6)
    assert is_valid(make_curve(ObstacleParams.star(NOTCHED_DISK_EXACT)), ScatteringSetup(R=9).sources)


def test_validity_rejects_self_intersection_and_sources():
    figure_eight = ObstacleParams.kite([0, 1, 0, 0, 0, 1])  # (cos t, sin 2t) crosses at the origin
    assert not is_valid(make_curve(figure_eight))
    assert is_valid(make_curve(figure_eight), check_simple=False)
    big = circle(6.0)  # sources sit on the boundary
    assert not is_valid(make_curve(big), RING6)
    near = circle(5.95)  # inside, but closer than the clearance
    assert not is_valid(make_curve(near), RING6)
    enclosing = circle(7.0)  # sources strictly inside the obstacle
    assert not is_valid(make_curve(enclosing), RING6)
    assert is_valid(make_curve(circle(5.8)), RING6)


def test_sample_boundary_unit_circle_four_points():
    pts = sample_boundary(make_curve(unit_circle()), 4)
    np.testing.assert_allclose(pts, [[1, 0], [0, 1], [-1, 0], [0, -1]], atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6), st.integers(4, 300))
def test_nested_grids(values, n):
    c = make_curve(ObstacleParams.kite(values))
    np.testing.assert_array_equal(sample_boundary(c, 2 * n)[::2], sample_boundary(c, n))


def test_perimeter_richardson():
    c = make_curve(ObstacleParams.kite(KITE_EXACT))
    p1024 = polygon_length(sample_boundary(c, 1024))
    p4096 = polygon_length(sample_boundary(c, 4096))
    assert abs(p1024 - p4096) / p4096 <= 1e-4


def _fd_check(curve, rng):
    t = rng.uniform(0, 2 * np.pi, 32)
    h = 1e-4
    x, dx, ddx = curve.derivatives(t)
    fd1 = (curve(t + h) - curve(t - h)) / (2 * h)
    fd2 = (curve(t + h) - 2 * x + curve(t - h)) / h**2
    np.testing.assert_allclose(dx, fd1, atol=1e-6)
    np.testing.assert_allclose(ddx, fd2, atol=1e-6 * max(1.0, np.abs(ddx).max()))


def test_derivatives_match_finite_differences(rng):
    _fd_check(make_curve(ObstacleParams.kite(KITE_EXACT)), rng)
    _fd_check(make_curve(ObstacleParams.star(NOTCHED_DISK_EXACT)), rng)
    _fd_check(make_curve(ObstacleParams.star(STAR4_EXACT)), rng)


def test_closed_curve(rng):
    for p in (ObstacleParams.kite(KITE_EXACT), ObstacleParams.star(STAR4_EXACT)):
        c = make_curve(p)
        a, b = c.derivatives(np.array([0.0])), c.derivatives(np.array([2 * np.pi]))
        for u, v in zip(a, b):
            np.testing.assert_allclose(u, v, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_star_translation(da, db):
    base = np.array(NOTCHED_DISK_EXACT)
    shifted = base.copy()
    shifted[0] += da
    shifted[1] += db
    p0 = sample_boundary(make_curve(ObstacleParams.star(base)), 64)
    p1 = sample_boundary(make_curve(ObstacleParams.star(shifted)), 64)
    np.testing.assert_allclose(p1 - p0, np.broadcast_to([da, db], p0.shape), atol=1e-12)


def test_make_curve_is_pure():
    p = ObstacleParams.kite(KITE_EXACT)
    a = sample_boundary(make_curve(p), 128)
    b = sample_boundary(make_curve(p), 128)
    np.testing.assert_array_equal(a, b)
    assert p.family is Family.KITE
    with pytest.raises(ValueError):
        p.values[0] = 3.0
