"""
Tests for manifold models, curvature and declarations.
"""

import json
import math

import numpy as np
import pytest

from mtwgeo.errors import DegenerateInputError, DomainError, PreconditionError, ScenarioError
from mtwgeo.manifold import (
    ChartSpec,
    ManifoldModel,
    TangentVector,
    builtin_names,
    chart_difference,
    check_metric,
    christoffel_at,
    frame_at,
    gaussian_curvature,
    inner,
    load_manifold,
    metric_at,
    norm,
    reduce_point,
    riemann_at,
    sectional_curvature,
    validate_declaration,
)

from ..test_data import (
    DUMBBELL,
    INVALID_DECLARATIONS,
    OBLATE,
    SPHERE,
    SPHERE_R2,
    TORUS,
    VALID_DECLARATIONS,
)


def _metric_only_sphere() -> ManifoldModel:
    """Unit sphere given by its metric alone, so every derivative is numerical."""

    def metric(p):
        p = np.asarray(p, dtype=float)
        g = np.zeros(p.shape[:-1] + (2, 2))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = np.sin(p[..., 0]) ** 2
        return g

    return ManifoldModel(
        name="numeric_sphere",
        dim=2,
        chart=ChartSpec((0.1, 0.0), (math.pi - 0.1, 2 * math.pi), (False, True), ("theta", "phi")),
        metric_eval=metric,
        diameter_bound=math.pi,
    )


class TestBuiltinModels:
    """Test the closed-form builtin surfaces."""

    def test_builtin_names(self):
        """Test the registry of builtin names."""
        assert builtin_names() == sorted([SPHERE, SPHERE_R2, TORUS, DUMBBELL, OBLATE])

    def test_sphere_metric(self):
        """Test the polar-coordinate metric of the unit sphere."""
        g = metric_at(load_manifold(SPHERE), [math.pi / 3, 0.0])
        assert np.allclose(g, np.diag([1.0, 0.75]))

    def test_sphere_christoffel(self):
        """Test Gamma^theta_phiphi and Gamma^phi_thetaphi."""
        gam = christoffel_at(load_manifold(SPHERE), [math.pi / 4, 1.0])
        assert gam[0, 1, 1] == pytest.approx(-0.5)
        assert gam[1, 0, 1] == pytest.approx(1.0)
        assert gam[1, 1, 0] == pytest.approx(1.0)

    @pytest.mark.parametrize("name,expected", [(SPHERE, 1.0), (SPHERE_R2, 0.25), (TORUS, 0.0)])
    def test_constant_curvature(self, name, expected):
        """Test the sectional curvature of constant-curvature models."""
        model = load_manifold(name)
        p = [1.0, 2.0]
        assert sectional_curvature(model, p, [1.0, 0.0], [0.3, 1.0]) == pytest.approx(expected, abs=1e-12)

    def test_dumbbell_curvature_changes_sign(self):
        """Test K = -r''/r on the Fourier profile r = 1 + 0.6 cos u."""
        model = load_manifold(DUMBBELL)
        assert gaussian_curvature(model, [0.0, 0.0]) == pytest.approx(0.375)
        assert gaussian_curvature(model, [math.pi, 0.0]) == pytest.approx(-1.5)

    def test_oblate_curvature(self):
        """Test K = 1.2 / (1.5 - 0.6 u^2) on the polynomial band."""
        model = load_manifold(OBLATE)
        assert gaussian_curvature(model, [0.5, 1.0]) == pytest.approx(1.2 / (1.5 - 0.15))

    def test_numerical_curvature_matches_closed_form(self):
        """Test the finite-difference Christoffel and Riemann path."""
        model = _metric_only_sphere()
        p = [1.0, 0.5]
        assert sectional_curvature(model, p, [1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0, abs=1e-5)
        exact = christoffel_at(load_manifold(SPHERE), p)
        assert np.allclose(christoffel_at(model, p), exact, atol=1e-8)

    def test_riemann_tensor(self):
        """Test R^l_ijk = K (g_jk delta^l_i - g_ik delta^l_j) on the unit sphere."""
        riem = riemann_at(load_manifold(SPHERE), [math.pi / 2, 0.0])
        assert riem[0, 0, 1, 1] == pytest.approx(1.0)
        assert riem[1, 0, 1, 0] == pytest.approx(-1.0)
        assert np.allclose(riem, -np.swapaxes(riem, 1, 2))

        p = [1.0, 0.5]
        numeric = riemann_at(_metric_only_sphere(), p)
        assert np.allclose(numeric, riemann_at(load_manifold(SPHERE), p), atol=1e-4)

    def test_degenerate_plane(self):
        """Test that parallel vectors are rejected."""
        with pytest.raises(DegenerateInputError):
            sectional_curvature(load_manifold(SPHERE), [1.0, 0.0], [1.0, 1.0], [2.0, 2.0])


class TestChartHelpers:
    """Test periodic reduction, domain checks and frames."""

    def test_reduce_and_difference(self):
        """Test wrapping of periodic coordinates only."""
        sphere = load_manifold(SPHERE)
        assert np.allclose(reduce_point(sphere, [1.0, -0.5]), [1.0, 2 * math.pi - 0.5])
        torus = load_manifold(TORUS)
        d = chart_difference(torus, np.array([0.1, 0.1]), np.array([6.2, 0.2]))
        assert np.allclose(d, [6.1 - 2 * math.pi, 0.1])

    def test_point_outside_chart(self):
        """Test the domain error for a point past a non-periodic edge."""
        with pytest.raises(DomainError, match="outside the chart"):
            metric_at(load_manifold(SPHERE), [4.0, 0.0])
        with pytest.raises(DomainError, match="dimension"):
            metric_at(load_manifold(SPHERE), [1.0, 0.0, 0.0])

    def test_frame_is_orthonormal(self):
        """Test g-orthonormality of frame_at on a non-Euclidean metric."""
        model = load_manifold(OBLATE)
        p = [0.7, 1.0]
        frame = frame_at(model, p)
        assert np.allclose(frame.T @ metric_at(model, p) @ frame, np.eye(2))

    def test_inner_and_norm(self):
        """Test inner products and the base-point check."""
        model = load_manifold(SPHERE)
        v = TangentVector([math.pi / 6, 0.0], [0.0, 2.0])
        assert norm(model, v) == pytest.approx(1.0)
        with pytest.raises(PreconditionError, match="different base points"):
            inner(model, v, TangentVector([1.0, 0.0], [1.0, 0.0]))

    def test_tangent_vector_dimension(self):
        """Test the dimension check of tangent vectors."""
        with pytest.raises(PreconditionError, match="does not match"):
            TangentVector([0.0, 0.0], [1.0, 0.0, 0.0])

    def test_check_metric(self):
        """Test the metric invariants on a grid of sphere points."""
        points = np.array([[0.5, 0.0], [1.5, 3.0], [2.5, 6.0]])
        stats = check_metric(load_manifold(SPHERE), points)
        assert stats["symmetry_defect"] == 0.0
        assert stats["min_eigenvalue"] == pytest.approx(math.sin(0.5) ** 2)


class TestDeclarations:
    """Test declaration validation and loading."""

    @pytest.mark.parametrize("name", sorted(VALID_DECLARATIONS))
    def test_valid_declarations(self, name):
        """Test that valid declarations produce no diagnostics and load."""
        declaration = VALID_DECLARATIONS[name]
        assert validate_declaration(declaration) == []
        model = load_manifold(declaration)
        assert model.declaration["type"] == declaration["type"]

    @pytest.mark.parametrize("name", sorted(INVALID_DECLARATIONS))
    def test_invalid_declarations(self, name):
        """Test the field and code of the first diagnostic."""
        declaration, field, code = INVALID_DECLARATIONS[name]
        diags = validate_declaration(declaration)
        assert diags, f"{name} should be rejected"
        assert diags[0]["field"] == field
        assert diags[0]["code"] == code
        with pytest.raises(ScenarioError) as exc_info:
            load_manifold(declaration)
        assert exc_info.value.field == field

    def test_unknown_type_lists_valid_types(self):
        """Test that the enum diagnostic names every valid type."""
        message = validate_declaration({"type": "cone"})[0]["message"]
        for kind in ("sphere", "flat_torus", "revolution"):
            assert kind in message

    def test_load_from_file(self, tmp_path):
        """Test loading a JSON declaration file, named after its stem."""
        path = tmp_path / "big_sphere.json"
        path.write_text(json.dumps(VALID_DECLARATIONS["sphere"]))
        model = load_manifold(str(path))
        assert model.name == "big_sphere"
        assert metric_at(model, [math.pi / 2, 0.0])[0, 0] == pytest.approx(9.0)

    def test_malformed_file_reports_line(self, tmp_path):
        """Test that a JSON syntax error carries its line number."""
        path = tmp_path / "broken.json"
        path.write_text('{\n  "type": "sphere",\n  "params": {\n}\n')
        with pytest.raises(ScenarioError) as exc_info:
            load_manifold(str(path))
        assert exc_info.value.line is not None

    def test_unknown_name(self):
        """Test an unknown builtin name."""
        with pytest.raises(ScenarioError):
            load_manifold("no_such_surface")


if __name__ == "__main__":
    pytest.main([__file__])
