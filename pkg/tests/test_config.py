"""
Tests for the mtwgeo configuration functionality.
"""

import os
from unittest.mock import patch

import pytest

from mtwgeo.config import (
    DEFAULT_SETTINGS,
    THREADS_ENV_VAR,
    clear_worker_count,
    get_setting,
    get_settings,
    get_worker_count,
    reset_settings,
    set_setting,
    set_worker_count,
)


class TestWorkerCount:
    """Test worker-pool size resolution."""

    def setup_method(self):
        clear_worker_count()

    def teardown_method(self):
        clear_worker_count()

    def test_set_worker_count_wins(self):
        """Test that an explicit count overrides the environment."""
        set_worker_count(3)
        with patch.dict(os.environ, {THREADS_ENV_VAR: "7"}):
            assert get_worker_count() == 3

    def test_environment_variable(self):
        """Test MTWGEO_THREADS when nothing is set programmatically."""
        with patch.dict(os.environ, {THREADS_ENV_VAR: "5"}):
            assert get_worker_count() == 5

    def test_invalid_environment_falls_back(self):
        """Test that an invalid MTWGEO_THREADS is ignored with a warning."""
        with patch.dict(os.environ, {THREADS_ENV_VAR: "many"}):
            with patch("mtwgeo.config.os.cpu_count", return_value=6):
                with patch("mtwgeo.config.logger") as mock_logger:
                    assert get_worker_count() == 6
                    mock_logger.warning.assert_called_once()

    def test_cpu_count_fallback(self):
        """Test fallback to the CPU count, and to 1 when unknown."""
        with patch.dict(os.environ, {}, clear=True):
            with patch("mtwgeo.config.os.cpu_count", return_value=None):
                assert get_worker_count() == 1

    @pytest.mark.parametrize("bad", [0, -2, 1.5, "x", None])
    def test_set_worker_count_rejects(self, bad):
        """Test rejection of non-positive and non-integer counts."""
        with pytest.raises(ValueError, match="Invalid worker count"):
            set_worker_count(bad)


class TestSettings:
    """Test numeric defaults and overrides."""

    def teardown_method(self):
        reset_settings()

    def test_defaults(self):
        """Test the documented default values."""
        assert get_setting("ode_step") == 1e-3
        assert get_setting("shooting_step") == 1e-2
        assert get_setting("multiplicity_cap") == 16
        assert get_setting("bism_reading") == "literal"
        assert get_settings() == DEFAULT_SETTINGS

    def test_override_and_reset(self):
        """Test that overrides apply and reset restores the defaults."""
        set_setting("mtw_step", 5e-3)
        assert get_setting("mtw_step") == 5e-3
        reset_settings()
        assert get_setting("mtw_step") == DEFAULT_SETTINGS["mtw_step"]

    def test_integer_setting_coerced(self):
        """Test that integral floats are stored as ints for integer settings."""
        set_setting("newton_substeps", 4.0)
        assert get_setting("newton_substeps") == 4
        assert isinstance(get_setting("newton_substeps"), int)

    def test_rejections(self):
        """Test unknown names and out-of-range values."""
        with pytest.raises(ValueError, match="Unknown setting"):
            set_setting("warp_factor", 1.0)
        with pytest.raises(ValueError, match="must be positive"):
            set_setting("ode_step", 0.0)
        with pytest.raises(ValueError, match="must be an integer"):
            set_setting("multiplicity_cap", 2.5)
        with pytest.raises(ValueError, match="must be numeric"):
            set_setting("ode_step", True)
        with pytest.raises(ValueError, match="Invalid bism_reading"):
            set_setting("bism_reading", "loose")

    def test_reading_switch(self):
        """Test switching the reading of the sign-reversed inequality."""
        set_setting("bism_reading", "corrected")
        assert get_setting("bism_reading") == "corrected"

    def test_get_unknown(self):
        """Test lookup of an unknown setting."""
        with pytest.raises(ValueError, match="Unknown setting"):
            get_setting("nope")


if __name__ == "__main__":
    pytest.main([__file__])
