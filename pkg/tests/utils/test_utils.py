"""
Tests for the mtwgeo utilities functionality.
"""

import json
import math
from unittest.mock import patch

import numpy as np
import pytest

from mtwgeo.utils.utils import (
    STATUS_CHART_EXIT,
    STATUS_NON_FINITE,
    STATUS_OK,
    angle_grid,
    orthonormal_frame,
    parallel_map,
    parse_vector,
    richardson,
    rk4_integrate,
    to_jsonable,
    write_csv,
    write_json,
)


class TestRk4Integrate:
    """Test the batched fixed-step integrator."""

    def test_harmonic_oscillator(self):
        """Test y'' = -y over a full period for two initial states."""
        def rhs(y):
            return np.stack([y[:, 1], -y[:, 0]], axis=1)

        y0 = np.array([[1.0, 0.0], [0.0, 2.0]])
        history, status = rk4_integrate(rhs, y0, 2 * math.pi / 400, 400)
        assert history.shape == (2, 2, 2)
        assert np.all(status == STATUS_OK)
        assert np.allclose(history[-1], y0, atol=1e-8)

    def test_record_keeps_every_step(self):
        """Test the recorded history shape and its first and last rows."""
        def rhs(y):
            return np.ones_like(y)

        history, _ = rk4_integrate(rhs, np.zeros((3, 1)), 0.1, 10, record=True)
        assert history.shape == (11, 3, 1)
        assert np.allclose(history[-1], 1.0)

    def test_per_row_steps(self):
        """Test one step size per row."""
        def rhs(y):
            return np.ones_like(y)

        history, _ = rk4_integrate(rhs, np.zeros((2, 1)), np.array([0.1, 0.2]), 5)
        assert np.allclose(history[-1, :, 0], [0.5, 1.0])

    def test_guard_freezes_rows(self):
        """Test that guarded rows stop at their last valid state."""
        def rhs(y):
            return np.ones_like(y)

        def guard(y):
            return y[:, 0] > 0.55

        history, status = rk4_integrate(rhs, np.array([[0.0], [-10.0]]), 0.1, 10, guard=guard)
        assert status[0] == STATUS_CHART_EXIT
        assert status[1] == STATUS_OK
        assert history[-1, 0, 0] == pytest.approx(0.5)
        assert history[-1, 1, 0] == pytest.approx(-9.0)

    def test_non_finite_rows(self):
        """Test that blow-ups are flagged without touching other rows."""
        def rhs(y):
            return np.where(y > 0, np.inf, 1.0)

        history, status = rk4_integrate(rhs, np.array([[1.0], [-5.0]]), 0.1, 3)
        assert status[0] == STATUS_NON_FINITE
        assert status[1] == STATUS_OK
        assert history[-1, 0, 0] == 1.0


class TestNumericHelpers:
    """Test extrapolation, frames and angle grids."""

    def test_richardson_second_order(self):
        """Test exact recovery of c + a h^2."""
        coarse = 1.0 + 3.0 * 0.1**2
        fine = 1.0 + 3.0 * 0.05**2
        value, err = richardson(coarse, fine, order=2)
        assert value == pytest.approx(1.0)
        assert err == pytest.approx(3.0 * 0.05**2)

    def test_orthonormal_frame(self):
        """Test g-orthonormality and the prescribed first direction."""
        metric = np.array([[2.0, 0.5], [0.5, 1.0]])
        first = np.array([1.0, 1.0])
        frame = orthonormal_frame(metric, first)
        assert np.allclose(frame.T @ metric @ frame, np.eye(2))
        e1 = frame[:, 0]
        assert abs(e1[0] - e1[1]) < 1e-12 and e1[0] > 0

    def test_orthonormal_frame_skips_dependent_first(self):
        """Test that a first vector along a chart axis still yields a full frame."""
        frame = orthonormal_frame(np.eye(3), np.array([0.0, 0.0, 2.0]))
        assert frame.shape == (3, 3)
        assert np.allclose(frame[:, 0], [0.0, 0.0, 1.0])

    def test_angle_grid(self):
        """Test uniform angles without the closing endpoint."""
        angles = angle_grid(4)
        assert np.allclose(angles, [0.0, math.pi / 2, math.pi, 3 * math.pi / 2])


class TestParallelMap:
    """Test the ordered worker-pool map."""

    def test_preserves_order(self):
        """Test results come back in input order with several workers."""
        assert parallel_map(lambda v: v * v, list(range(20)), workers=4) == [v * v for v in range(20)]

    def test_serial_with_one_worker(self):
        """Test the serial path when the configured count is 1."""
        with patch("mtwgeo.config.get_worker_count", return_value=1):
            with patch("mtwgeo.utils.utils.ThreadPoolExecutor") as pool:
                assert parallel_map(str, [1, 2]) == ["1", "2"]
                pool.assert_not_called()


class TestSerialization:
    """Test JSON and CSV output."""

    def test_to_jsonable(self):
        """Test numpy values, non-finite floats and nested containers."""
        data = {
            "a": np.array([1.0, np.inf]),
            "b": (np.float64(-np.inf), np.nan),
            "c": np.bool_(True),
            "d": np.int64(3),
        }
        assert to_jsonable(data) == {"a": [1.0, "inf"], "b": ["-inf", None], "c": True, "d": 3}

    def test_to_jsonable_uses_to_dict(self):
        """Test objects exposing to_dict."""
        class Report:
            def to_dict(self):
                return {"value": np.float64(0.5)}

        assert to_jsonable([Report()]) == [{"value": 0.5}]

    def test_write_json_sorted(self, tmp_path):
        """Test sorted keys and stable bytes across writes."""
        path = tmp_path / "nested" / "report.json"
        write_json(path, {"b": 1, "a": math.inf})
        first = path.read_bytes()
        assert json.loads(first) == {"a": "inf", "b": 1}
        assert first.index(b'"a"') < first.index(b'"b"')
        write_json(path, {"a": math.inf, "b": 1})
        assert path.read_bytes() == first

    def test_write_csv(self, tmp_path):
        """Test header and full-precision float cells."""
        path = tmp_path / "rows.csv"
        write_csv(path, ["t", "x"], [[0.1, 2], [np.float64(1 / 3), "s"]])
        lines = path.read_text().splitlines()
        assert lines[0] == "t,x"
        assert lines[1] == "0.1,2"
        assert lines[2] == f"{repr(1 / 3)},s"

    def test_parse_vector(self):
        """Test parsing and rejection of malformed vectors."""
        assert np.allclose(parse_vector("0, 1.5"), [0.0, 1.5])
        with pytest.raises(ValueError, match="Invalid vector"):
            parse_vector("1,a")
        with pytest.raises(ValueError, match="Empty vector"):
            parse_vector(" , ")


if __name__ == "__main__":
    pytest.main([__file__])
