"""
Tests for the MTW tensor, the extended cost and the sampled MTW conditions.

The flat torus has a vanishing tensor everywhere, including past the cut locus
for the extended cost. At v = 0 the tensor is the curvature form
K (|xi|^2 |eta|^2 - <xi, eta>^2), so the unit sphere gives 1 on orthonormal pairs.
"""

import math
from unittest.mock import patch

import numpy as np
import pytest

from mtwgeo.errors import InconsistentInputError, PreconditionError, StencilUnsafeError
from mtwgeo.cutlocus import domain_sample
from mtwgeo.manifold import load_manifold
from mtwgeo.mtw import (
    GRID_PRESETS,
    SCAN_CUT_TOL,
    SCAN_FAN_DIRECTIONS,
    default_x_points,
    export_scan_csv,
    extended_cost,
    extended_mtw_tensor,
    loeper_check,
    make_extended_cost_context,
    mtw_condition_scan,
    mtw_kc_fit,
    mtw_tensor,
    resolve_grid,
    tenseurine_constants,
)

from ..test_data import DUMBBELL, OBLATE, SPHERE, SPHERE_EQUATOR, TORUS, TORUS_CENTER, TORUS_ORIGIN, star_domain


class TestMtwTensor:
    """Test the finite-difference tensor."""

    def setup_method(self):
        self.torus = load_manifold(TORUS)
        self.sphere = load_manifold(SPHERE)

    def test_torus_is_flat(self):
        ev = mtw_tensor(self.torus, TORUS_CENTER, [0.5, 0.0], [1.0, 0.0], [0.0, 1.0])

        assert ev.value == pytest.approx(0.0, abs=1e-5)
        assert not ev.extended
        assert ev.richardson_estimate is not None

    def test_sphere_matches_curvature(self):
        ev = mtw_tensor(self.sphere, SPHERE_EQUATOR, [0.0, 0.0], [1.0, 0.0], [0.0, 1.0])
        assert ev.value == pytest.approx(1.0, abs=2e-3)

    def test_quadratic_in_each_argument(self):
        base = mtw_tensor(self.sphere, SPHERE_EQUATOR, [0.0, 0.0], [1.0, 0.0], [0.0, 1.0])
        scaled = mtw_tensor(self.sphere, SPHERE_EQUATOR, [0.0, 0.0], [2.0, 0.0], [0.0, 1.0])

        assert scaled.value == pytest.approx(4.0 * base.value, rel=1e-9)

    def test_zero_argument(self):
        ev = mtw_tensor(self.sphere, SPHERE_EQUATOR, [0.0, 0.0], [0.0, 0.0], [0.0, 1.0])
        assert ev.value == 0.0

    def test_without_richardson(self):
        ev = mtw_tensor(self.sphere, SPHERE_EQUATOR, [0.0, 0.0], [1.0, 0.0], [0.0, 1.0], use_richardson=False)

        assert ev.richardson_estimate is None
        assert ev.value == ev.plain_value

    def test_rejects_bad_step(self):
        with pytest.raises(PreconditionError, match="must be positive"):
            mtw_tensor(self.torus, TORUS_CENTER, [0.0, 0.0], [1.0, 0.0], [0.0, 1.0], steps=0.0)

    def test_stencil_too_close_to_cut(self):
        with pytest.raises(StencilUnsafeError):
            mtw_tensor(self.torus, TORUS_ORIGIN, [3.1, 0.0], [1.0, 0.0], [0.0, 1.0], t_cut=math.pi)

    def test_stencil_neighbour_direction_too_close_to_cut(self):
        """On the diagonal t_cut = pi sqrt(2) is a local maximum, so the rotated stencil points have less room."""
        speed = math.pi * math.sqrt(2.0) - 0.055
        v = [speed / math.sqrt(2.0)] * 2
        with pytest.raises(StencilUnsafeError, match="Stencil velocity"):
            mtw_tensor(self.torus, TORUS_ORIGIN, v, [1.0, 1.0], [-1.0, 1.0])

        # a stencil along the ray itself keeps its room
        short = [(speed - 0.02) / math.sqrt(2.0)] * 2
        ev = mtw_tensor(self.torus, TORUS_ORIGIN, short, [-1.0, 1.0], [1.0, 1.0], use_richardson=False)
        assert ev.value == pytest.approx(0.0, abs=1e-4)

    def test_stencil_checked_against_sampled_domain(self):
        """A long direction next to a short one: only the stencil neighbour leaves the margin."""
        radii = np.ones(64)
        radii[0] = 3.0
        sample = star_domain(lambda a: radii, n=64)
        with pytest.raises(StencilUnsafeError, match="Stencil velocity"):
            mtw_tensor(self.torus, TORUS_CENTER, [2.94, 0.0], [1.0, 0.0], [0.0, 1.0], domain=sample)

        wide = star_domain(lambda a: np.full_like(a, 3.0), n=64)
        ev = mtw_tensor(self.torus, TORUS_CENTER, [2.94, 0.0], [1.0, 0.0], [0.0, 1.0], domain=wide)
        assert ev.value == pytest.approx(0.0, abs=1e-4)

    def test_domain_must_share_base_point(self):
        sample = star_domain(lambda a: np.full_like(a, 3.0), n=16)
        with pytest.raises(PreconditionError, match="Domain sample is based"):
            mtw_tensor(self.torus, TORUS_ORIGIN, [0.5, 0.0], [1.0, 0.0], [0.0, 1.0], domain=sample)


class TestExtendedCost:
    """Test the branch-continued cost and its tensor."""

    def setup_method(self):
        self.torus = load_manifold(TORUS)
        self.sphere = load_manifold(SPHERE)

    def test_anchor_value(self):
        ctx = make_extended_cost_context(self.sphere, [math.pi / 2, 0.0], [math.pi / 2, 0.0])
        assert extended_cost(ctx, ctx.x, ctx.y) == pytest.approx(math.pi**2 / 8, abs=1e-9)

    def test_cost_past_the_cut_locus(self):
        ctx = make_extended_cost_context(self.torus, TORUS_ORIGIN, [4.0, 0.0])

        # the branch keeps |w| = 4 although d(x, y) = 2 pi - 4
        assert extended_cost(ctx, ctx.x, ctx.y) == pytest.approx(8.0, abs=1e-9)
        assert extended_cost(ctx, [0.1, 0.0], ctx.y) == pytest.approx(0.5 * 3.9**2, abs=1e-9)

    def test_extended_tensor_past_the_cut_locus(self):
        ctx = make_extended_cost_context(self.torus, TORUS_ORIGIN, [4.0, 0.0])
        ev = extended_mtw_tensor(ctx, [1.0, 0.0], [0.0, 1.0], use_richardson=False)

        assert ev.extended
        assert ev.value == pytest.approx(0.0, abs=1e-4)

    def test_extended_agrees_inside_injectivity_domain(self):
        v = [0.3, 0.0]
        ctx = make_extended_cost_context(self.sphere, SPHERE_EQUATOR, v)
        extended = extended_mtw_tensor(ctx, [1.0, 0.0], [0.0, 1.0], use_richardson=False)
        standard = mtw_tensor(self.sphere, SPHERE_EQUATOR, v, [1.0, 0.0], [0.0, 1.0], use_richardson=False)

        assert extended.value == pytest.approx(standard.value, abs=1e-3)

    def test_anchor_must_be_nonfocal(self):
        with pytest.raises(PreconditionError, match="not inside NF"):
            make_extended_cost_context(self.sphere, SPHERE_EQUATOR, [math.pi, 0.0])

    def test_stencil_too_close_to_focal_time(self):
        ctx = make_extended_cost_context(self.sphere, SPHERE_EQUATOR, [3.1, 0.0])
        with pytest.raises(StencilUnsafeError, match="focal time"):
            extended_mtw_tensor(ctx, [1.0, 0.0], [0.0, 1.0])


class TestGrids:
    """Test grid presets and partial specs."""

    def test_presets(self):
        assert set(GRID_PRESETS) == {"coarse", "fine"}
        fine = resolve_grid(load_manifold(SPHERE), "fine")
        assert fine["radii"] == [0.0, 0.2, 0.4, 0.6, 0.8]
        assert fine["include_oblique"]

    def test_partial_spec_fills_from_coarse(self):
        spec = resolve_grid(load_manifold(TORUS), {"radii": [0.0]})

        assert spec["radii"] == [0.0]
        assert spec["n_directions"] == 4
        assert spec["x_points"] == [[math.pi, math.pi], [0.0, math.pi]]

    def test_default_points_on_sphere(self):
        assert default_x_points(load_manifold(SPHERE)) == [[math.pi / 2, math.pi]]

    def test_unknown_preset(self):
        with pytest.raises(PreconditionError, match="Unknown grid preset"):
            resolve_grid(load_manifold(TORUS), "medium")


class TestConditionScan:
    """Test the scans and constant fits."""

    def test_torus_scan_passes(self):
        report = mtw_condition_scan(load_manifold(TORUS), "coarse")

        assert report["passed"]
        assert report["n_evaluated"] == 72
        assert report["n_skipped"] == 0
        assert report["n_errors"] == 0
        assert report["min_value"] == pytest.approx(0.0, abs=1e-4)
        assert "samples" not in report

    def test_scan_samples_each_base_point_once(self):
        """Radius brackets and stencil checks share one reduced-accuracy domain sample per x."""
        with patch("mtwgeo.mtw.mtw.domain_sample", wraps=domain_sample) as mock_sample, patch(
            "mtwgeo.mtw.mtw.cut_time"
        ) as mock_cut:
            report = mtw_condition_scan(load_manifold(TORUS), "coarse")

        assert report["passed"]
        assert mock_sample.call_count == 2
        for call in mock_sample.call_args_list:
            _, _, n_dir, opts = call.args
            assert n_dir == 8
            assert opts["tol"] == SCAN_CUT_TOL
            assert opts["distance"]["n_directions"] == SCAN_FAN_DIRECTIONS
        mock_cut.assert_not_called()

    def test_dumbbell_scan_fails_at_the_waist(self):
        report = mtw_condition_scan(load_manifold(DUMBBELL), {"radii": [0.0]})

        assert not report["passed"]
        assert report["min_value"] == pytest.approx(-1.5, abs=5e-3)
        assert report["argmin"]["v"] == [0.0, 0.0]
        assert report["argmin"]["x"] == pytest.approx([math.pi, math.pi])

    def test_dumbbell_scan_argmin_at_zero_velocity(self):
        grid = {"radii": [0.0, 0.3], "n_pairs": 2, "x_points": [[math.pi, math.pi]]}
        report = mtw_condition_scan(load_manifold(DUMBBELL), grid)

        assert not report["passed"]
        assert report["n_evaluated"] > 2
        assert report["n_errors"] == 0
        assert report["argmin"]["v"] == [0.0, 0.0]
        assert report["min_value"] < 0

    def test_scan_export(self, tmp_path):
        grid = {"radii": [0.0], "x_points": [TORUS_CENTER]}
        report = mtw_condition_scan(load_manifold(TORUS), grid, keep_samples=True)
        path = tmp_path / "scan.csv"
        export_scan_csv(report, path)

        lines = path.read_text().splitlines()
        assert lines[0] == "x0,x1,v0,v1,xi0,xi1,eta0,eta1,inner,value,error_estimate"
        assert len(lines) == 1 + report["n_evaluated"]

    def test_kc_fit_on_torus(self):
        grid = {"radii": [0.0], "n_pairs": 2, "x_points": [TORUS_CENTER]}
        fit = mtw_kc_fit(load_manifold(TORUS), grid)

        assert fit["K"] == pytest.approx(0.0, abs=1e-4)
        assert fit["C"] == 0.0
        assert not fit["cap_hit"]
        assert fit["n_samples"] == 6

    def test_kc_fit_on_sphere(self):
        grid = {"radii": [0.0], "n_pairs": 2, "x_points": [SPHERE_EQUATOR]}
        fit = mtw_kc_fit(load_manifold(SPHERE), grid)

        # oblique pairs give sin^2(gap) + C |cos(gap)|, binding at gap = pi/4
        assert fit["K"] == pytest.approx(1.0, abs=5e-3)
        assert 0.6 < fit["C"] < 1.0

    def test_tenseurine_on_torus(self):
        z_spec = {"mode": "enlargement", "mu": 0.5, "n_radii": 2, "n_directions": 2, "n_pairs": 1}
        fit = tenseurine_constants(load_manifold(TORUS), z_spec, {"x_points": [TORUS_CENTER]})

        assert fit["feasible"]
        assert fit["C"] == 0.0
        assert fit["D"] == 0.0
        assert fit["n_samples"] == 12

    def test_tenseurine_rejects_focal_z(self):
        z_spec = {"mode": "enlargement", "mu": 0.5, "n_radii": 2, "n_directions": 2}
        with pytest.raises(InconsistentInputError, match="focal margin"):
            tenseurine_constants(load_manifold(SPHERE), z_spec, {"x_points": [SPHERE_EQUATOR]})

    def test_unknown_z_mode(self):
        with pytest.raises(PreconditionError, match="Unknown Z mode"):
            tenseurine_constants(load_manifold(TORUS), {"mode": "disk"}, {"x_points": [TORUS_CENTER]})


class TestLoeperCheck:
    """Test the tensor against sectional curvature at v = 0."""

    @pytest.mark.parametrize(
        "name,x,sigma",
        [
            (SPHERE, SPHERE_EQUATOR, 1.0),
            (TORUS, TORUS_CENTER, 0.0),
            (OBLATE, [0.5, 1.0], 1.2 / (1.5 - 0.6 * 0.25)),
            (DUMBBELL, [math.pi, math.pi], -1.5),
        ],
    )
    def test_matches_sectional_curvature(self, name, x, sigma):
        report = loeper_check(load_manifold(name), x, n_pairs=4)

        assert report["passed"]
        assert len(report["pairs"]) == 4
        for row in report["pairs"]:
            assert row["sectional"] == pytest.approx(sigma, abs=1e-6)

    def test_explicit_pairs(self):
        report = loeper_check(load_manifold(SPHERE), SPHERE_EQUATOR, pairs=[([1.0, 0.0], [0.0, 1.0])])
        assert report["pairs"][0]["mtw"] == pytest.approx(1.0, abs=2e-3)


if __name__ == "__main__":
    pytest.main([__file__])
