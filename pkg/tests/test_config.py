"""Configuration parsing: key=value documents, presets, and materialization."""

import numpy as np
import pytest

from msdiff import (
    Grid1D,
    ParseError,
    RunConfig,
    SchemeParams,
    ValidationError,
    config_from_pairs,
    materialize,
    materialize_spec,
    parse_config,
    scan_config_lines,
)

MINIMAL = "species=3\nD=1,2,3\ncells=64\ntau=1e-3\nt_end=1.0"


class TestScanLines:
    def test_basic_pairs(self):
        assert scan_config_lines("a=1\nb = two ") == [("a", "1"), ("b", "two")]

    def test_comments_and_blanks_skipped(self):
        text = "# leading comment\n\n  \nspecies=3\n   # indented comment\n"
        assert scan_config_lines(text) == [("species", "3")]

    def test_value_may_contain_equals(self):
        assert scan_config_lines("x=a=b") == [("x", "a=b")]

    def test_missing_equals_reports_line(self):
        with pytest.raises(ParseError) as info:
            scan_config_lines("species=3\njust words\n")
        assert info.value.line_no == 2

    def test_missing_key_rejected(self):
        with pytest.raises(ParseError):
            scan_config_lines("=5\n")


class TestParseConfig:
    def test_minimal_document(self):
        config = parse_config(MINIMAL)
        assert config.species == 3
        assert config.d_upper == (1.0, 2.0, 3.0)
        assert config.cells == 64
        assert config.tau == 1e-3
        assert config.t_end == 1.0
        # untouched keys keep their defaults
        assert config.eps == 1e-8 and config.audit == "enforce"

    def test_missing_species_rejected(self):
        with pytest.raises(ValidationError) as info:
            parse_config("D=1,2,3\ntau=1e-3")
        assert info.value.key == "species"

    def test_missing_d_rejected(self):
        with pytest.raises(ValidationError) as info:
            parse_config("species=3\ntau=1e-3")
        assert info.value.key == "D"

    def test_negative_tau_rejected(self):
        with pytest.raises(ValidationError) as info:
            parse_config(MINIMAL + "\ntau=-1")
        assert info.value.key == "tau"
        assert "positive" in info.value.reason

    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError) as info:
            parse_config(MINIMAL + "\nspeed=11")
        assert info.value.key == "speed"

    def test_wrong_d_count_rejected(self):
        with pytest.raises(ValidationError) as info:
            parse_config("species=4\nD=1,2,3")
        assert info.value.key == "D"
        assert "6" in info.value.reason

    def test_last_value_wins(self):
        config = parse_config(MINIMAL + "\ncells=32\ncells=16")
        assert config.cells == 16

    @pytest.mark.parametrize(
        "line,key",
        [
            ("cells=one", "cells"),
            ("cells=1", "cells"),
            ("eps=nan", "eps"),
            ("D=1,-2,3", "D"),
            ("D=", "D"),
            ("audit=quiet", "audit"),
            ("damping_theta=0", "damping_theta"),
            ("damping_theta=2", "damping_theta"),
            ("production=fission", "production"),
            ("emit_snapshots=yes", "emit_snapshots"),
            ("seed=-1", "seed"),
            ("t_end=-2", "t_end"),
        ],
    )
    def test_per_key_validation(self, line, key):
        with pytest.raises(ValidationError) as info:
            parse_config(MINIMAL + "\n" + line)
        assert info.value.key == key

    def test_bool_keys(self):
        config = parse_config(MINIMAL + "\nemit_snapshots=false\nemit_certify_json=true")
        assert config.emit_snapshots is False
        assert config.emit_certify_json is True

    def test_quaternary_law_needs_five_species(self):
        with pytest.raises(ValidationError) as info:
            parse_config("species=3\nD=1,2,3\nproduction=quaternary_reversible")
        assert info.value.key == "production"


class TestScenarioLayering:
    def test_preset_fills_everything(self):
        config = config_from_pairs([("scenario", "heat_check")])
        assert config.species == 3
        assert config.d_upper == (1.0, 1.0, 1.0)
        assert config.t_end == 0.1
        assert config.initial == "cosine:0.2"

    def test_explicit_keys_shadow_preset(self):
        config = config_from_pairs(
            [("scenario", "heat_check"), ("cells", "32"), ("t_end", "0.01")]
        )
        assert config.cells == 32
        assert config.t_end == 0.01
        assert config.species == 3  # still from the preset

    def test_order_of_pairs_does_not_matter_for_layering(self):
        # preset values always sit underneath explicit pairs
        config = config_from_pairs([("cells", "32"), ("scenario", "heat_check")])
        assert config.cells == 32

    def test_unknown_scenario_rejected(self):
        with pytest.raises(ValidationError) as info:
            config_from_pairs([("scenario", "warp_drive")])
        assert info.value.key == "scenario"
        assert "heat_check" in info.value.reason


class TestMaterialize:
    def test_spec_matches_document(self):
        spec = materialize_spec(parse_config(MINIMAL))
        assert spec.n_species == 3
        assert spec.D[0, 1] == 1.0 and spec.D[0, 2] == 2.0 and spec.D[1, 2] == 3.0
        assert spec.delta == pytest.approx(1.0 / 3.0)
        assert spec.production.kind == "zero"

    def test_full_materialization(self):
        spec, grid, params, c0 = materialize(parse_config(MINIMAL))
        assert isinstance(grid, Grid1D) and grid.cells == 64
        assert isinstance(params, SchemeParams) and params.tau == 1e-3
        assert c0.shape == (64, 2)
        np.testing.assert_allclose(c0, 1 / 3)

    def test_simulation_needs_time_keys(self):
        config = parse_config("species=3\nD=1,2,3")
        with pytest.raises(ValidationError) as info:
            materialize(config)
        assert info.value.key == "tau"

    def test_quaternary_preset_production_law(self):
        config = config_from_pairs([("scenario", "quaternary_reaction")])
        spec = materialize_spec(config)
        assert spec.production.kind == "quaternary_reversible"
        assert spec.n_species == 5

    def test_config_is_frozen(self):
        config = parse_config(MINIMAL)
        assert isinstance(config, RunConfig)
        with pytest.raises(AttributeError):
            config.cells = 31
