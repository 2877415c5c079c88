"""Tests for the command line and scenario-file parsing."""

import numpy as np
import pytest

from gladsim.cli import main
from gladsim.config import default_scenario_text, load_scenario
from gladsim.errors import ConfigError
from gladsim.traffic import GpdParams, generate_stream

SMALL_CONFIG = """
[pon]
span_km = 20

[grid]
loads = 0.3, 0.8
spans_km = 10, 30
seeds = 1, 2
n_loops = 500

[glad]
total_machines = 3
profiling_samples = 1200
add_every = 250
additions = 1
machines_grid = 1, 2
"""


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "scenario.cfg"
    path.write_text(SMALL_CONFIG)
    return path


class TestConfigFile:
    def test_round_trips_values(self, config_file):
        config = load_scenario(config_file)
        assert config.load_grid == (0.3, 0.8)
        assert config.seeds == (1, 2)
        assert config.n_loops == 500
        assert config.pon.span_km == 20.0
        assert config.glad.total_machines == 3

    def test_unknown_key_is_hard_error(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[pon]\nspan_mk = 20\n")
        with pytest.raises(ConfigError, match="span_mk"):
            load_scenario(path)

    def test_unknown_section_is_hard_error(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[pony]\nspan_km = 20\n")
        with pytest.raises(ConfigError, match="pony"):
            load_scenario(path)

    def test_bad_value_names_key(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("[grid]\nn_loops = many\n")
        with pytest.raises(ConfigError, match="n_loops"):
            load_scenario(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(tmp_path / "nope.cfg")

    def test_default_dump_parses_back(self, tmp_path):
        path = tmp_path / "default.cfg"
        path.write_text(default_scenario_text())
        config = load_scenario(path)
        assert config.n_loops == 10_000


class TestCli:
    def test_no_arguments_prints_usage(self, capsys):
        assert main([]) == 0
        out = capsys.readouterr().out
        assert "latency-sweep" in out
        assert "traffic-fit" in out

    def test_unknown_command_exits_one(self, capsys):
        assert main(["mystery-command"]) == 1

    def test_malformed_config_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[pon]\nspan_mk = 20\n")
        code = main(["latency-sweep", "--config", str(bad),
                     "--out", str(tmp_path / "out")])
        assert code == 1
        assert "span_mk" in capsys.readouterr().err

    def test_latency_sweep_end_to_end(self, config_file, tmp_path, capsys):
        out_dir = tmp_path / "report"
        code = main(["latency-sweep", "--config", str(config_file),
                     "--out", str(out_dir)])
        assert code == 0
        names = sorted(p.name for p in out_dir.iterdir())
        assert "latency_sweep__manifest.json" in names
        assert "latency_sweep__latency.csv" in names
        # no stray staging directories
        assert not [n for n in names if n.startswith(".")]

    def test_seed_override(self, config_file, tmp_path):
        out_dir = tmp_path / "report"
        code = main(["latency-sweep", "--config", str(config_file),
                     "--out", str(out_dir), "--seed", "9"])
        assert code == 0
        manifest = (out_dir / "latency_sweep__manifest.json").read_text()
        assert '"seeds": [\n      9\n    ]' in manifest or '"seeds": [9]' in manifest

    def test_rerun_is_byte_identical(self, config_file, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert main(["latency-sweep", "--config", str(config_file), "--out", str(out_a)]) == 0
        assert main(["latency-sweep", "--config", str(config_file), "--out", str(out_b)]) == 0
        for path in sorted(out_a.iterdir()):
            assert path.read_bytes() == (out_b / path.name).read_bytes()

    def test_traffic_fit(self, tmp_path, capsys):
        stream = generate_stream(GpdParams(0.1, 900.0, 0.0), 2e6, seed=4)
        csv = tmp_path / "gaps.csv"
        csv.write_text("inter_arrival_us\n" +
                       "\n".join(repr(float(g)) for g in stream.inter_arrivals) + "\n")
        assert main(["traffic-fit", "--input", str(csv)]) == 0
        out = capsys.readouterr().out
        assert "shape:" in out and "ks_verdict:" in out
        assert "pass" in out

    def test_traffic_fit_missing_file(self, tmp_path, capsys):
        assert main(["traffic-fit", "--input", str(tmp_path / "none.csv")]) == 1

    def test_validate_dump_config(self, capsys):
        assert main(["validate", "--dump-config"]) == 0
        assert "[pon]" in capsys.readouterr().out
