"""
Tests for fundamental Jacobi solutions, focal times and Lagrangian graphs.

On the unit sphere, along a unit-speed geodesic and in its parallel frame,
J01(t) = diag(1, cos t) and J10(t) = diag(t, sin t); the first focal time is pi.
"""

import math

import numpy as np
import pytest

from mtwgeo.errors import DegenerateInputError, PreconditionError
from mtwgeo.jacobi import (
    export_solutions_csv,
    focal_lipschitz_probe,
    focal_splitting,
    focal_time,
    focal_times_batch,
    integrate_fundamental,
    jacobi_field,
    lagrangian_graph,
    max_symplectic_defect,
    quotients_stable,
    reconstruction_residual,
    sdot_minimum,
    sdot_probe,
    symplectic_defect,
    verify_jacobi_vs_exp,
)
from mtwgeo.manifold import TangentVector, load_manifold

from ..test_data import DUMBBELL, OBLATE, SPHERE, SPHERE_EQUATOR, SPHERE_R2, TORUS, TORUS_ORIGIN


def _equator_solutions(t_max: float = 3.5):
    sphere = load_manifold(SPHERE)
    return integrate_fundamental(sphere, TangentVector(SPHERE_EQUATOR, [0.0, 1.0]), t_max)


class TestFundamentalSolutions:
    """Test J01 and J10 against closed forms."""

    def test_sphere_closed_form(self):
        """Test J10 = diag(t, sin t) and J01 = diag(1, cos t) on the unit sphere."""
        sol = _equator_solutions(2.0)
        t = sol.grid[-1]
        assert np.allclose(sol.J10[-1], np.diag([t, math.sin(t)]), atol=1e-9)
        assert np.allclose(sol.J01[-1], np.diag([1.0, math.cos(t)]), atol=1e-9)
        assert np.allclose(sol.J10dot[-1], np.diag([1.0, math.cos(t)]), atol=1e-9)

    def test_torus_is_linear(self):
        """Test J10 = t I on the flat torus."""
        torus = load_manifold(TORUS)
        sol = integrate_fundamental(torus, TangentVector(TORUS_ORIGIN, [1.0, 0.0]), 2.0)
        assert np.allclose(sol.J10[-1], 2.0 * np.eye(2))
        assert np.allclose(sol.J01[-1], np.eye(2))

    def test_symplectic_invariance(self):
        """Test that the fundamental matrix stays symplectic on a curved surface."""
        dumbbell = load_manifold(DUMBBELL)
        sol = integrate_fundamental(dumbbell, TangentVector([1.0, 0.0], [0.6, 0.5]), 5.0)
        assert max_symplectic_defect(sol) <= 1e-8
        assert symplectic_defect(sol, 2.5) <= 1e-8

    def test_jacobi_field_reconstruction(self):
        """Test J01 h + J10 q against a directly integrated Jacobi field."""
        oblate = load_manifold(OBLATE)
        v = TangentVector([0.2, 1.0], [0.3, 0.4])
        h, q = [0.5, -1.0], [0.2, 0.7]
        assert reconstruction_residual(oblate, v, h, q, 1.0) <= 1e-8
        sol = integrate_fundamental(oblate, v, 1.0)
        field = jacobi_field(sol, h, q)
        assert np.allclose(field[0], h)

    def test_jacobi_vs_exp(self):
        """Test J10(t) h against a difference quotient of the exponential."""
        dumbbell = load_manifold(DUMBBELL)
        sol = integrate_fundamental(dumbbell, TangentVector([0.5, 2.0], [0.5, 0.3]), 1.0)
        residual = verify_jacobi_vs_exp(dumbbell, sol, [0.0, 1.0], 0.8)
        assert residual <= 1e-4

    def test_rejections(self):
        """Test zero velocity, over-long horizons and off-grid times."""
        sphere = load_manifold(SPHERE)
        with pytest.raises(DegenerateInputError):
            integrate_fundamental(sphere, TangentVector(SPHERE_EQUATOR, [0.0, 0.0]))
        with pytest.raises(PreconditionError, match="t_max"):
            integrate_fundamental(sphere, TangentVector(SPHERE_EQUATOR, [0.0, 1.0]), 100.0)
        sol = _equator_solutions(1.0)
        with pytest.raises(PreconditionError, match="outside the grid"):
            symplectic_defect(sol, 2.0)

    def test_export_solutions_csv(self, tmp_path):
        """Test the CSV header of the fundamental solutions."""
        sol = _equator_solutions(0.1)
        path = tmp_path / "jacobi.csv"
        export_solutions_csv(sol, path)
        header = path.read_text().splitlines()[0].split(",")
        assert header[0] == "t"
        assert header[1:5] == ["J01_00", "J01_01", "J01_10", "J01_11"]
        assert len(header) == 17


class TestFocalTimes:
    """Test the first zero of det J10."""

    def test_sphere_focal_time(self):
        """Test t_f = pi and the focusing direction on the unit sphere."""
        report = focal_time(_equator_solutions())
        assert report.t_f == pytest.approx(math.pi, abs=1e-6)
        assert report.finite
        assert np.allclose(np.abs(report.focal_direction), [0.0, 1.0], atol=1e-6)
        assert report.multiplicity == 1

    def test_focal_time_scales_with_radius(self):
        """Test t_f = 2 pi on the sphere of radius 2."""
        sphere = load_manifold(SPHERE_R2)
        reports = focal_times_batch(sphere, np.array([SPHERE_EQUATOR]), np.array([[0.0, 0.5]]))
        assert reports[0].t_f == pytest.approx(2 * math.pi, abs=1e-6)

    def test_torus_never_focuses(self):
        """Test an infinite focal time on the flat torus."""
        torus = load_manifold(TORUS)
        sol = integrate_fundamental(torus, TangentVector(TORUS_ORIGIN, [1.0, 1.0]), 5.0)
        report = focal_time(sol)
        assert math.isinf(report.t_f)
        assert not report.finite
        assert report.to_dict()["focal_direction"] is None


class TestLagrangianGraphs:
    """Test graph representations of the Lagrangian subspaces."""

    def test_graph_before_focal_time(self):
        """Test L_t as the symmetric graph S = -J01^-1 J10 over the regular directions."""
        sol = _equator_solutions()
        graph = lagrangian_graph(sol, 1.0)
        assert graph.asymmetry <= 1e-8
        assert graph.splitting_index == 0
        t = graph.t
        eigs = np.sort(np.linalg.eigvalsh(graph.S))
        assert np.allclose(eigs, np.sort([-t, -math.tan(t)]), atol=1e-8)

    def test_focal_splitting(self):
        """Test that J01 stays regular at the focal time of the unit sphere."""
        sol = _equator_solutions()
        splitting = focal_splitting(sol)
        assert splitting.kernel_count == 0
        assert np.allclose(splitting.basis.T @ splitting.basis, np.eye(2))

    def test_torus_splitting_is_trivial(self):
        """Test the chart splitting when nothing focuses."""
        torus = load_manifold(TORUS)
        sol = integrate_fundamental(torus, TangentVector(TORUS_ORIGIN, [0.0, 1.0]), 1.0)
        splitting = focal_splitting(sol)
        assert splitting.kernel_count == 0
        assert np.allclose(splitting.basis, np.eye(2))

    def test_sdot_probe_monotone(self):
        """Test <S' w, w> = -|J'|^2 near the focal time."""
        sol = _equator_solutions()
        lhs, rhs = sdot_probe(sol, 2.0, [0.6, 0.8])
        assert lhs == pytest.approx(rhs, rel=1e-4, abs=1e-6)
        assert lhs <= 0

    def test_sdot_minimum(self):
        """Test the smallest derivative over focal directions."""
        sphere = load_manifold(SPHERE)
        dirs = [[0.0, 1.0], [1.0, 0.0]]
        result = sdot_minimum(sphere, SPHERE_EQUATOR, dirs)
        assert result["non_focal"] == 0
        assert len(result["values"]) == 2
        assert result["min"] > 0
        torus = load_manifold(TORUS)
        flat = sdot_minimum(torus, TORUS_ORIGIN, [[1.0, 0.0]])
        assert flat["non_focal"] == 1
        assert math.isinf(flat["min"])


class TestFocalLipschitzProbe:
    """Test difference quotients of the focal time."""

    def test_constant_on_sphere(self):
        """Test vanishing quotients where the focal time is constant."""
        sphere = load_manifold(SPHERE)
        report = focal_lipschitz_probe(sphere, TangentVector([1.2, 0.5], [1.0, 0.0]))
        assert report["mode"] == "focal"
        assert not report["incomplete"]
        assert report["max_quotient"] <= 1e-4
        assert report["stable"]

    def test_requires_finite_focal_time(self):
        """Test the precondition on the probed direction."""
        torus = load_manifold(TORUS)
        with pytest.raises(PreconditionError, match="beyond the horizon"):
            focal_lipschitz_probe(torus, TangentVector(TORUS_ORIGIN, [1.0, 0.0]))

    @pytest.mark.parametrize(
        "quotients,expected",
        [([1.0, 1.2], True), ([1.0, 3.0], False), ([1e-6, 1e-7], True), ([1.0, math.nan], False)],
    )
    def test_quotients_stable(self, quotients, expected):
        """Test the factor-of-two stability rule."""
        assert quotients_stable(quotients) is expected


if __name__ == "__main__":
    pytest.main([__file__])
