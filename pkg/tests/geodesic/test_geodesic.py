"""
Tests for the exponential map, geodesic traces and the distance oracle.
"""

import gc
import math

import numpy as np
import pytest

from mtwgeo.errors import DomainError, PreconditionError
from mtwgeo.geodesic import (
    clear_distance_cache,
    distance,
    exp_batch,
    exp_map,
    export_trace_csv,
    get_distance_cache_info,
    integrate_geodesic,
    parallel_frame,
)
from mtwgeo.manifold import TangentVector, load_manifold, metric_at

from ..test_data import DUMBBELL, SPHERE, SPHERE_EQUATOR, TORUS, TORUS_ORIGIN


class TestExpMap:
    """Test exp_x(t v) on closed-form and numerical models."""

    def test_torus_translation(self):
        """Test exp on the flat torus, wrapping into the chart."""
        torus = load_manifold(TORUS)
        point, vel = exp_map(torus, TangentVector(TORUS_ORIGIN, [1.0, 0.0]), math.pi / 2)
        assert np.allclose(point, [math.pi / 2, 0.0])
        assert np.allclose(vel.components, [1.0, 0.0])
        point, _ = exp_map(torus, TangentVector(TORUS_ORIGIN, [-1.0, 0.0]), 1.0)
        assert np.allclose(point, [2 * math.pi - 1.0, 0.0])

    def test_sphere_numeric_matches_closed_form(self):
        """Test the integrated exponential against the closed form."""
        sphere = load_manifold(SPHERE)
        v = TangentVector([1.0, 0.3], [0.4, -0.7])
        exact, exact_vel = exp_map(sphere, v, 2.0)
        numeric, numeric_vel = exp_map(sphere, v, 2.0, analytic=False)
        assert np.allclose(numeric, exact, atol=1e-8)
        assert np.allclose(numeric_vel.components, exact_vel.components, atol=1e-7)

    def test_equator_quarter_turn(self):
        """Test a quarter of the equator on the unit sphere."""
        sphere = load_manifold(SPHERE)
        point, _ = exp_map(sphere, TangentVector([math.pi / 2, 0.0], [0.0, 1.0]), math.pi / 2)
        assert np.allclose(point, [math.pi / 2, math.pi / 2])

    def test_meridian_is_arc_length(self):
        """Test that u is arc length along a meridian of a surface of revolution."""
        dumbbell = load_manifold(DUMBBELL)
        point, vel = exp_map(dumbbell, TangentVector([0.0, 1.0], [1.0, 0.0]), 1.0)
        assert np.allclose(point, [1.0, 1.0], atol=1e-9)
        assert np.allclose(vel.components, [1.0, 0.0], atol=1e-9)

    def test_zero_time_and_velocity(self):
        """Test the trivial cases."""
        sphere = load_manifold(SPHERE)
        v = TangentVector(SPHERE_EQUATOR, [0.0, 0.0])
        point, _ = exp_map(sphere, v, 3.0)
        assert np.allclose(point, SPHERE_EQUATOR)

    def test_rejections(self):
        """Test negative time, bad steps and base points outside the chart."""
        sphere = load_manifold(SPHERE)
        v = TangentVector(SPHERE_EQUATOR, [1.0, 0.0])
        with pytest.raises(PreconditionError, match="non-negative"):
            exp_map(sphere, v, -1.0)
        with pytest.raises(PreconditionError, match="Step must be positive"):
            exp_map(sphere, v, 1.0, step=0.0)
        with pytest.raises(DomainError):
            exp_map(sphere, TangentVector([5.0, 0.0], [1.0, 0.0]), 1.0)

    def test_exp_batch(self):
        """Test the vectorized exponential against single calls."""
        dumbbell = load_manifold(DUMBBELL)
        bases = np.array([[0.5, 0.0], [2.0, 1.0]])
        vels = np.array([[0.3, 0.4], [-0.2, 0.1]])
        points, finals, ok = exp_batch(dumbbell, bases, vels)
        assert ok.all()
        for b in range(2):
            point, vel = exp_map(dumbbell, TangentVector(bases[b], vels[b]))
            assert np.allclose(points[b], point, atol=1e-6)
            assert np.allclose(finals[b], vel.components, atol=1e-6)


class TestGeodesicTrace:
    """Test sampled geodesics and parallel frames."""

    def test_trace_grid(self):
        """Test the arc-length grid and endpoints of a trace."""
        torus = load_manifold(TORUS)
        trace = integrate_geodesic(torus, TangentVector(TORUS_ORIGIN, [0.0, 2.0]), 1.0, step=0.01)
        assert len(trace.grid) == 201
        assert trace.grid[-1] == pytest.approx(1.0)
        assert trace.speed == pytest.approx(2.0)
        assert np.allclose(trace.points[-1], [0.0, 2.0])

    def test_parallel_frame_stays_orthonormal(self):
        """Test frame orthonormality and e_1 = velocity along a curved geodesic."""
        dumbbell = load_manifold(DUMBBELL)
        v = TangentVector([0.3, 0.0], [0.6, 0.8])
        trace = integrate_geodesic(dumbbell, v, 2.0, with_frame=False)
        assert trace.frame is None
        framed = parallel_frame(dumbbell, trace)
        for k in (0, len(framed.grid) // 2, len(framed.grid) - 1):
            E = framed.frame[k]
            g = metric_at(dumbbell, framed.points[k])
            assert np.allclose(E.T @ g @ E, np.eye(2), atol=1e-8)
            vel = framed.velocities[k]
            assert np.allclose(E[:, 0], vel / math.sqrt(vel @ g @ vel), atol=1e-8)

    def test_export_trace_csv(self, tmp_path):
        """Test the CSV columns of a framed trace."""
        torus = load_manifold(TORUS)
        trace = integrate_geodesic(torus, TangentVector(TORUS_ORIGIN, [1.0, 0.0]), 0.1, step=0.05)
        path = tmp_path / "trace.csv"
        export_trace_csv(trace, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,x0,x1,v0,v1,e0_0,e0_1,e1_0,e1_1"
        assert len(lines) == 1 + len(trace.grid)


class TestDistance:
    """Test the distance oracle."""

    def setup_method(self):
        clear_distance_cache()

    def teardown_method(self):
        clear_distance_cache()

    def test_torus_wraps(self):
        """Test the lattice distance and the wrapped minimizer."""
        torus = load_manifold(TORUS)
        result = distance(torus, TORUS_ORIGIN, [3 * math.pi / 2, 0.0])
        assert result.value == pytest.approx(math.pi / 2)
        assert result.multiplicity == 1
        assert np.allclose(result.minimizer_velocity.components, [-math.pi / 2, 0.0])

    def test_torus_cut_point_has_two_minimizers(self):
        """Test the two minimizers to the midpoint of a lattice edge."""
        torus = load_manifold(TORUS)
        result = distance(torus, TORUS_ORIGIN, [math.pi, 0.0])
        assert result.value == pytest.approx(math.pi)
        assert result.multiplicity == 2

    def test_sphere_antipode(self):
        """Test the capped minimizer fan at the antipode."""
        sphere = load_manifold(SPHERE)
        result = distance(sphere, SPHERE_EQUATOR, [math.pi / 2, 0.0])
        assert result.value == pytest.approx(math.pi)
        assert result.multiplicity == 16
        g = metric_at(sphere, SPHERE_EQUATOR)
        for w in result.minimizers:
            assert math.sqrt(w.components @ g @ w.components) == pytest.approx(math.pi)

    def test_numerical_meridian_distance(self):
        """Test the shooting oracle along a meridian and its fan cache."""
        dumbbell = load_manifold(DUMBBELL)
        result = distance(dumbbell, [0.0, 0.0], [0.5, 0.0], {"n_directions": 90})
        assert result.converged
        assert result.value == pytest.approx(0.5, abs=1e-6)
        assert np.allclose(result.minimizer_velocity.components, [0.5, 0.0], atol=1e-5)
        info = get_distance_cache_info()
        assert info["entries"] == 1
        assert info["models"] == 1
        assert info["directions"] == [90]
        clear_distance_cache()
        assert get_distance_cache_info()["entries"] == 0

    def test_cache_released_with_model(self):
        """Test that cached fans do not outlive their model."""
        dumbbell = load_manifold(DUMBBELL)
        distance(dumbbell, [0.0, 0.0], [0.5, 0.0], {"n_directions": 36})
        assert get_distance_cache_info()["models"] == 1

        del dumbbell
        gc.collect()
        info = get_distance_cache_info()
        assert info["models"] == 0
        assert info["entries"] == 0

    def test_point_outside_chart(self):
        """Test the domain check on the endpoints."""
        sphere = load_manifold(SPHERE)
        with pytest.raises(DomainError, match="y="):
            distance(sphere, SPHERE_EQUATOR, [-1.0, 0.0])


if __name__ == "__main__":
    pytest.main([__file__])
