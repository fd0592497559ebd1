"""
Tests for segment traces, the differential inequalities and domain semiconvexity.

On the flat torus R^2 / (2 pi Z)^2 with x = 0, the segment v_t = (4 + t, 0)
lies beyond the cut locus and h(t) = pi (8 + 2t - 2 pi) is linear; the segment
from (2, 0) to (5, 0) has h = 0 until |v_t| = pi, a kink at t = (pi - 2) / 3.
"""

import dataclasses
import math
from unittest.mock import MagicMock, patch

import numpy as np
import pytest

from mtwgeo.config import reset_settings, set_setting
from mtwgeo.convexity import (
    LEMMAS,
    check_lemineq,
    check_lemineqbis,
    check_lemineqbism,
    detect_kinks,
    export_segment_csv,
    generate_admissible_profiles,
    hddot_check,
    hdot_check,
    segment_trace,
    semiconvexity_test,
    sharp_bis_bound,
    verify_lipcontrol,
)
from mtwgeo.cutlocus import clear_cut_cache, domain_sample
from mtwgeo.errors import KinkError, PreconditionError
from mtwgeo.manifold import load_manifold

from ..test_data import DUMBBELL, TORUS, TORUS_ORIGIN, star_domain

GRID = np.linspace(0.0, 1.0, 101)
BUMP = GRID * (1.0 - GRID)


class TestSegmentTrace:
    """Test sampling of h along segments in the tangent plane."""

    def setup_method(self):
        clear_cut_cache()
        self.torus = load_manifold(TORUS)

    def test_segment_inside_domain(self):
        trace = segment_trace(self.torus, TORUS_ORIGIN, [1.0, 0.0], [0.0, 1.0])

        assert float(np.max(np.abs(trace.h))) < 1e-8
        assert trace.resolved.all()
        assert trace.kinks == ()
        assert trace.to_dict()["n_samples"] == 64

    def test_segment_beyond_cut_locus(self):
        trace = segment_trace(self.torus, TORUS_ORIGIN, [4.0, 0.0], [5.0, 0.0], require_injective=False)

        expected = math.pi * (8.0 + 2.0 * trace.t - 2.0 * math.pi)
        np.testing.assert_allclose(trace.h, expected, atol=1e-9)
        assert trace.retries == 0

    def test_kink_at_cut_crossing(self):
        trace = segment_trace(self.torus, TORUS_ORIGIN, [2.0, 0.0], [5.0, 0.0], require_injective=False)
        crossing = (math.pi - 2.0) / 3.0

        assert trace.kinks
        assert all(abs(trace.t[i] - crossing) < 2.0 * trace.spacing for i in trace.kinks)
        with pytest.raises(KinkError):
            hdot_check(trace, crossing)

    def test_detect_kinks_on_smooth_data(self):
        assert detect_kinks(GRID, BUMP) == []
        assert detect_kinks(GRID[:2], BUMP[:2]) == []

    def test_detect_kinks_on_corner(self):
        h = np.abs(GRID - 0.505)
        assert detect_kinks(GRID, h) == [50, 51]

    def test_too_few_samples(self):
        with pytest.raises(PreconditionError, match="needs N >= 32"):
            segment_trace(self.torus, TORUS_ORIGIN, [1.0, 0.0], [0.0, 1.0], N=16)

    def test_endpoint_outside_domain(self):
        with pytest.raises(PreconditionError, match="v1 = .* is not in I\\(x\\)"):
            segment_trace(self.torus, TORUS_ORIGIN, [1.0, 0.0], [4.0, 0.0])

    def test_export_segment_csv(self, tmp_path):
        trace = segment_trace(self.torus, TORUS_ORIGIN, [1.0, 0.0], [0.0, 1.0], N=32)
        path = tmp_path / "segment.csv"
        export_segment_csv(trace, path)

        lines = path.read_text().splitlines()
        assert lines[0] == "t,v0,v1,y0,y1,q0,q1,qbar0,qbar1,h"
        assert len(lines) == 33


class TestSegmentDerivatives:
    """Test the derivative formulas for h against finite differences."""

    def setup_method(self):
        clear_cut_cache()
        self.torus = load_manifold(TORUS)
        self.trace = segment_trace(self.torus, TORUS_ORIGIN, [4.0, 0.0], [5.0, 0.0], require_injective=False)

    def test_first_derivative(self):
        formula, fd = hdot_check(self.trace, 0.5)

        assert formula == pytest.approx(2.0 * math.pi, abs=1e-6)
        assert fd == pytest.approx(2.0 * math.pi, abs=1e-6)

    def test_second_derivative_vanishes_on_flat_torus(self):
        formula, fd = hddot_check(self.trace, 0.5, quadrature_n=4)

        assert fd == pytest.approx(0.0, abs=1e-3)
        assert formula == pytest.approx(0.0, abs=5e-2)

    def test_second_derivative_quadrature(self):
        # constant S-bar = 3 integrates to (2/3) * 3 * 1/2
        with patch("mtwgeo.convexity.convexity.extended_mtw_tensor", return_value=MagicMock(value=3.0)) as mock:
            formula, _ = hddot_check(self.trace, 0.5, quadrature_n=5)

        assert formula == pytest.approx(1.0, abs=1e-12)
        assert mock.call_count == 5

    def test_too_close_to_the_ends(self):
        with pytest.raises(PreconditionError, match="too close to the segment ends"):
            hdot_check(self.trace, 5e-5)


class TestSegmentDerivativesPastTheCutLocus:
    """
    Test the derivative formulas on the dumbbell where h > 0.

    From the waist point the segment runs along the inner equator beyond half
    its length, so every y_t is reached the short way round and h(t) is smooth.
    """

    @classmethod
    def setup_class(cls):
        cls.dumbbell = load_manifold(DUMBBELL)
        cls.trace = segment_trace(
            cls.dumbbell, [math.pi, math.pi], [0.1, 3.5], [0.1, 4.0], N=32, require_injective=False
        )

    def test_h_positive_on_window(self):
        assert float(np.min(self.trace.h)) > 0.0
        assert self.trace.kinks == ()
        assert self.trace.resolved.all()

    @pytest.mark.parametrize("t", [0.3, 0.5, 0.7])
    def test_first_derivative(self, t):
        formula, fd = hdot_check(self.trace, t, fd_step=1e-4)

        assert formula > 0
        assert formula == pytest.approx(fd, abs=1e-4)

    @pytest.mark.parametrize("t", [0.4, 0.6])
    def test_second_derivative(self, t):
        formula, fd = hddot_check(self.trace, t, quadrature_n=16, fd_step=1e-3)

        assert formula == pytest.approx(fd, abs=5e-3)


class TestDifferentialInequalities:
    """Test the three inequality checks on closed-form profiles."""

    def teardown_method(self):
        reset_settings()

    def test_lemineq_holds(self):
        check = check_lemineq((GRID, BUMP), c=2.0)

        assert check.hypothesis_ok
        assert check.conclusion_ok
        assert not check.falsified
        assert check.to_dict()["lemma"] == "lemineq"

    def test_lemineq_hypothesis_fails(self):
        check = check_lemineq((GRID, BUMP), c=0.5)

        assert not check.hypothesis_ok
        assert not check.falsified

    def test_lemineq_sup_bound(self):
        check = check_lemineq((GRID, BUMP), c=2.0, eps=1.8)

        assert check.sup_bound_ok
        assert check.to_dict()["sup_bound_ok"]

    def test_lemineqbis_readings(self):
        check = check_lemineqbis((GRID, BUMP), c=2.0, C=1.0)

        assert check.hypothesis_ok
        assert check.readings == {"stated": True, "sharp": True}
        assert check.conclusion_ok

    def test_sharp_bound_vanishes_at_ends(self):
        bound = sharp_bis_bound(GRID, 1.0, 1.0)

        assert bound[0] == pytest.approx(0.0)
        assert bound[-1] == pytest.approx(0.0)
        assert bound[50] == pytest.approx(2.0 * math.e**2 * (1.0 - math.exp(-1.0)) / 2.0)

    def test_lemineqbism_readings(self):
        check = check_lemineqbism((GRID, -BUMP), c=2.0, C=1.0, reading="corrected")

        assert check.hypothesis_ok
        assert check.readings == {"literal": False, "corrected": True}
        assert check.conclusion_ok
        assert not check.falsified

    def test_lemineqbism_literal_reading_by_default(self):
        check = check_lemineqbism((GRID, -BUMP), c=2.0, C=1.0)

        assert not check.conclusion_ok
        assert check.falsified

    def test_reading_from_settings(self):
        set_setting("bism_reading", "corrected")
        check = check_lemineqbism((GRID, -BUMP), c=2.0, C=1.0)

        assert check.conclusion_ok
        assert not check.falsified

    def test_unknown_reading(self):
        with pytest.raises(PreconditionError, match="Unknown reading"):
            check_lemineqbism((GRID, -BUMP), c=2.0, C=1.0, reading="loose")

    def test_small_hypothesis_violation_rejected(self):
        """h'' = -0.008 < -|h'| at t = 1/2, so nothing about the bound may be concluded."""
        with patch("mtwgeo.convexity.convexity.logger") as mock_logger:
            check = check_lemineq((GRID, 0.004 * BUMP), c=0.0)

        assert not check.hypothesis_ok
        assert not check.falsified
        mock_logger.error.assert_not_called()

    def test_flat_profile_fails_strict_hypothesis(self):
        """h = 0 has h'' = 0 < c, so the strict hypothesis fails for any c > 0."""
        check = check_lemineqbism((GRID, np.zeros_like(GRID)), c=0.005, C=1.0)

        assert not check.hypothesis_ok
        assert not check.falsified

    def test_error_band_makes_failure_inconclusive(self):
        """A hypothesis met only inside the difference error band cannot falsify."""
        band = np.full_like(GRID, 1.0)
        with patch("mtwgeo.convexity.convexity._truncation_band", return_value=band):
            check = check_lemineq((GRID, 0.004 * BUMP), c=0.0)

        assert check.hypothesis_ok
        assert not check.conclusion_ok
        assert check.inconclusive
        assert not check.falsified

    def test_smooth_profile_band_is_small(self):
        """Exact quadratics and smooth sines stay conclusive with the error band."""
        check = check_lemineq((GRID, BUMP), c=2.0)
        assert check.hypothesis_ok and not check.inconclusive

        h = 0.1 * np.sin(math.pi * GRID)
        check = check_lemineq((GRID, h), c=0.1 * math.pi**2)
        assert check.hypothesis_ok
        assert check.conclusion_ok

    @pytest.mark.parametrize(
        "h,match",
        [
            (BUMP + 0.1, "vanish at both ends"),
            (-BUMP, "nonnegative"),
        ],
    )
    def test_endpoint_guard(self, h, match):
        with pytest.raises(PreconditionError, match=match):
            check_lemineq((GRID, h), c=2.0)

    def test_short_trace(self):
        with pytest.raises(PreconditionError, match="at least 5 samples"):
            check_lemineq((GRID[:3], BUMP[:3]), c=2.0)

    def test_non_uniform_grid(self):
        t = GRID**2
        with pytest.raises(PreconditionError, match="uniform grid"):
            check_lemineq((t, t * (1.0 - t)), c=2.0)


class TestAdmissibleProfiles:
    """Test random profiles satisfying each hypothesis."""

    @pytest.mark.parametrize("kind", LEMMAS)
    def test_profiles_never_falsify(self, kind):
        t, H = generate_admissible_profiles(kind, c=1.0, C=1.0, n=20, seed=3)
        checker = {
            "lemineq": lambda h: check_lemineq((t, h), 1.0),
            "lemineqbis": lambda h: check_lemineqbis((t, h), 1.0, 1.0),
            "lemineqbism": lambda h: check_lemineqbism((t, h), 1.0, 1.0, reading="corrected"),
        }[kind]

        assert t.shape == (201,)
        assert H.shape == (20, 201)
        for h in H:
            check = checker(h)
            assert check.hypothesis_ok
            assert not check.falsified

    def test_seeded(self):
        _, first = generate_admissible_profiles("lemineq", c=1.0, n=5, seed=7)
        _, second = generate_admissible_profiles("lemineq", c=1.0, n=5, seed=7)
        np.testing.assert_array_equal(first, second)

    def test_rejections(self):
        with pytest.raises(PreconditionError, match="Unknown profile kind"):
            generate_admissible_profiles("lemfour", c=1.0)
        with pytest.raises(PreconditionError, match="nonnegative"):
            generate_admissible_profiles("lemineq", c=-1.0)


class TestSemiconvexity:
    """Test semiconvexity constants of sampled domains and functions."""

    def test_disk_is_uniformly_convex(self):
        report = semiconvexity_test(star_domain(lambda a: np.full_like(a, 1.5)))

        assert report.convex
        assert report.delta_radial == 0.0
        assert report.delta_distance == 0.0
        assert report.kappa == pytest.approx(1.0 / 1.5, abs=1e-2)
        assert report.kstar == pytest.approx(1.0, abs=1e-2)
        assert report.n_pairs == 72 * 71 // 2

    def test_trefoil_is_not_convex(self):
        report = semiconvexity_test(star_domain(lambda a: 1.0 + 0.3 * np.cos(3.0 * a)))

        assert not report.convex
        assert report.delta_radial > 0
        assert report.kappa is None
        assert 0 < len(report.violations) <= 20
        deltas = [v["delta"] for v in report.violations]
        assert deltas == sorted(deltas, reverse=True)

    def test_distance_mode(self):
        report = semiconvexity_test(star_domain(lambda a: 1.0 + 0.3 * np.cos(3.0 * a)), mode="distance")

        assert report.mode == "distance"
        assert report.delta_distance > 0
        assert not report.convex

    def test_stride_and_locality(self):
        domain = star_domain(lambda a: np.full_like(a, 1.5))

        assert semiconvexity_test(domain, stride=2).n_pairs == 36 * 35 // 2
        local = semiconvexity_test(domain, nu=0.5)
        assert local.locality_nu == 0.5
        assert local.n_pairs < 72 * 71 // 2

    def test_function_mode(self):
        concave = semiconvexity_test((GRID[::2], BUMP[::2]), mode="function")
        convex = semiconvexity_test((GRID[::2], -BUMP[::2]), mode="function")

        assert concave.delta_radial == pytest.approx(2.0)
        assert not concave.convex
        assert convex.convex

    def test_unresolved_sample(self):
        domain = star_domain(lambda a: np.full_like(a, 1.5), n=16)
        values = domain.t_cut_values.copy()
        values[4] = np.nan
        broken = dataclasses.replace(domain, t_cut_values=values, unresolved=(4,))

        with pytest.raises(PreconditionError, match="star-shaped sample"):
            semiconvexity_test(broken)

    @pytest.mark.parametrize(
        "kwargs,match",
        [
            ({"mode": "area"}, "Unknown mode"),
            ({"stride": 0}, "stride must be >= 1"),
        ],
    )
    def test_rejections(self, kwargs, match):
        with pytest.raises(PreconditionError, match=match):
            semiconvexity_test(star_domain(lambda a: np.full_like(a, 1.5), n=16), **kwargs)

    def test_domain_mode_needs_sample(self):
        with pytest.raises(PreconditionError, match="need a DomainSample"):
            semiconvexity_test((GRID, BUMP), mode="radial")


class TestLipcontrol:
    """Test the Lipschitz control of rho along segments on the torus."""

    def setup_method(self):
        clear_cut_cache()
        self.torus = load_manifold(TORUS)
        self.sample = domain_sample(self.torus, TORUS_ORIGIN, 8)

    def test_segment_inside_domain(self):
        report = verify_lipcontrol(self.torus, TORUS_ORIGIN, [([1.0, 0.0], [0.0, 1.0])], self.sample)

        assert report["K"] == pytest.approx(0.0, abs=1e-9)
        assert report["n_samples"] == 9
        assert report["n_flagged"] == 0

    def test_segment_leaving_domain(self):
        report = verify_lipcontrol(self.torus, TORUS_ORIGIN, [([2.0, 0.0], [4.0, 0.0])], self.sample)

        # the farthest interior sample is |v| = 3.8 on a segment of length 2
        assert report["max_source_ratio"] == pytest.approx((3.8 - math.pi) / 2.0, rel=1e-5)
        assert report["max_target_ratio"] == pytest.approx((3.8 - math.pi) / 2.0, rel=1e-5)

    def test_supplied_constant_too_small(self):
        with patch("mtwgeo.convexity.convexity.logger") as mock_logger:
            verify_lipcontrol(self.torus, TORUS_ORIGIN, [([2.0, 0.0], [4.0, 0.0])], self.sample, K_fit=0.1)
        mock_logger.warning.assert_called_once()


if __name__ == "__main__":
    pytest.main([__file__])
