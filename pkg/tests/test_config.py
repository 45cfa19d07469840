"""Tests for run-configuration parsing and validation."""

import dataclasses

import pytest

from seglab.config import (
    ENV_OUTPUT_DIR,
    RunConfig,
    load_config,
    parse_config,
    validate_config,
)
from seglab.errors import ConfigError


class TestDefaults:
    def test_empty_text_gives_defaults(self):
        cfg = parse_config("")
        assert cfg == RunConfig()

    def test_defaults_are_valid(self):
        validate_config(RunConfig())

    def test_as_dict_uses_dotted_keys(self):
        snap = RunConfig().as_dict()
        assert snap["geometry.R"] == 4.0
        assert snap["estimate.alpha"] == 0.25
        assert snap["layer.eps_list"] == [0.1, 0.05, 0.025]
        assert snap["nonlinearity.coefficients"] == [60.0, -1.0]

    def test_snapshot_covers_every_field(self):
        snap = RunConfig().as_dict()
        assert len(snap) == len(dataclasses.fields(RunConfig))

    def test_output_dir_from_environment(self, monkeypatch):
        monkeypatch.setenv(ENV_OUTPUT_DIR, "/somewhere/else")
        assert RunConfig().output_dir == "/somewhere/else"
        monkeypatch.delenv(ENV_OUTPUT_DIR)
        assert RunConfig().output_dir == "out"


class TestParsing:
    def test_values_and_comments(self):
        cfg = parse_config(
            "# full-line comment\n"
            "\n"
            "geometry.R = 2.5   # inline comment\n"
            "geometry.dim = 2\n"
            "layer.eps_list = 0.1, 0.05, 0.025\n"
            "nonlinearity.coefficients = 6, -1\n"
            "output.dir = results\n"
        )
        assert cfg.geometry_R == 2.5
        assert cfg.geometry_dim == 2
        assert cfg.layer_eps_list == (0.1, 0.05, 0.025)
        assert cfg.nonlinearity_coefficients == (6.0, -1.0)
        assert cfg.output_dir == "results"

    def test_zeta_matched_or_number(self):
        assert parse_config("layer.zeta = matched\n").layer_zeta == "matched"
        assert parse_config("layer.zeta = 0.02\n").layer_zeta == 0.02

    def test_duplicate_key_reports_both_lines(self):
        text = "geometry.R = 2.0\ngeometry.dim = 1\ngeometry.R = 3.0\n"
        with pytest.raises(ConfigError, match="duplicate key") as err:
            parse_config(text)
        assert err.value.line == 3
        assert "line 1" in str(err.value)

    def test_unknown_key_rejected_with_line(self):
        with pytest.raises(ConfigError, match="unknown key") as err:
            parse_config("\ngeometry.radius = 2.0\n")
        assert err.value.line == 2

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError, match="key = value") as err:
            parse_config("geometry.R 2.0\n")
        assert err.value.line == 1

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="bad value"):
            parse_config("geometry.R = wide\n")
        with pytest.raises(ConfigError, match="bad value"):
            parse_config("geometry.dim = 1.5\n")
        with pytest.raises(ConfigError, match="bad value"):
            parse_config("layer.eps_list =\n")


class TestValidation:
    def test_all_violations_reported_together(self):
        text = (
            "layer.eps_list = 0.3\n"
            "estimate.alpha = 2.0\n"
            "geometry.dim = 5\n"
        )
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        message = str(err.value)
        assert "0.3" in message and "(0, 0.2]" in message
        assert "estimate.alpha" in message and "(0, 1)" in message
        assert "geometry.dim" in message

    def test_eps_upper_bound_inclusive(self):
        cfg = parse_config("layer.eps_list = 0.2, 0.1, 0.05\n")
        assert cfg.layer_eps_list[0] == 0.2

    def test_r0_inside_domain(self):
        with pytest.raises(ConfigError, match="geometry.r0"):
            parse_config("geometry.r0 = 5.0\n")

    def test_schedule_must_increase(self):
        with pytest.raises(ConfigError, match="strictly increasing"):
            parse_config("continuation.schedule = 1e4, 1e4\n")
        with pytest.raises(ConfigError, match="nonnegative"):
            parse_config("continuation.schedule = -1, 1e4\n")

    def test_profile_ranges(self):
        with pytest.raises(ConfigError, match="profiles.L"):
            parse_config("profiles.L = 4\n")
        with pytest.raises(ConfigError, match="profiles.n"):
            parse_config("profiles.n = 100\n")


class TestLoading:
    def test_round_trip_through_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("geometry.R = 3.0\nestimate.seed = 7\n")
        cfg = load_config(path)
        assert cfg.geometry_R == 3.0
        assert cfg.estimate_seed == 7

    def test_missing_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.cfg")
