"""Config schema and CLI surface tests (no heavy runs)."""

import json

import pytest

from objpursuit import cli
from objpursuit.config import SCHEMA, make_config, parse_config
from objpursuit.errors import ConfigError


class TestConfig:
    def test_defaults(self):
        cfg = make_config()
        assert cfg["quality.tau"] == 0.6
        assert cfg["quality.alpha_express"] == 0.2
        assert cfg["quality.alpha_base"] == 0.1
        assert cfg["quality.beta"] == 0.04
        assert cfg["steps.base"] == 1000
        assert cfg["counts.pursuit_objects"] == 16

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            make_config({"quality.gamma": 1.0})

    def test_tau_range_rejected(self):
        with pytest.raises(ConfigError, match="quality.tau"):
            make_config({"quality.tau": 1.5})

    def test_type_error_names_key(self):
        with pytest.raises(ConfigError, match="steps.base"):
            make_config({"steps.base": "many"})

    def test_int_coercion_for_float_keys(self):
        with pytest.raises(ConfigError):
            make_config({"quality.tau": 1})  # coerced to 1.0, then range-rejected

    def test_negative_beta_rejected(self):
        with pytest.raises(ConfigError, match="beta"):
            make_config({"quality.beta": -0.1})

    def test_parse_empty_file_gives_defaults(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("")
        assert parse_config(p).values == make_config().values

    def test_parse_file_overrides(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"quality.tau": 0.7, "steps.base": 10}))
        cfg = parse_config(p)
        assert cfg["quality.tau"] == 0.7 and cfg["steps.base"] == 10

    def test_parse_invalid_json(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("{nope")
        with pytest.raises(ConfigError, match="not valid JSON"):
            parse_config(p)

    def test_builders_reflect_values(self):
        cfg = make_config({"quality.tau": 0.8, "steps.express": 7, "optim.lr": 0.5})
        assert cfg.quality().tau == 0.8
        assert cfg.budgets().express == 7
        assert cfg.optim().lr == 0.5

    def test_every_schema_key_has_default_of_declared_type(self):
        for key, (default, typ) in SCHEMA.items():
            assert isinstance(default, typ), key


class TestCLI:
    def test_unknown_subcommand_exits_2(self, capsys):
        assert cli.main(["frobnicate"]) == 2
        assert "unknown subcommand" in capsys.readouterr().err

    def test_no_subcommand_exits_2(self):
        assert cli.main([]) == 2

    def test_all_subcommands_registered(self):
        parser = cli.build_parser()
        sub_actions = [a for a in parser._actions if hasattr(a, "choices") and a.choices]
        names = set(sub_actions[0].choices)
        assert names == set(cli.SUBCOMMANDS)
        assert set(cli._HANDLERS) == set(cli.SUBCOMMANDS)

    def test_config_error_exits_1(self, capsys, tmp_path):
        bad = tmp_path / "cfg.json"
        bad.write_text(json.dumps({"quality.tau": 2.0}))
        assert cli.main(["gen-data", "--config", str(bad)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_flag_overrides_config_file(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"quality.tau": 0.5}))

        class Args:
            config = str(p)
            tau = 0.7

        cfg = cli._resolve_config(Args())
        assert cfg["quality.tau"] == 0.7

    def test_gen_data_small_run(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "counts.pretrain_objects": 2, "counts.pursuit_objects": 2,
            "counts.unseen_objects": 2, "counts.near_duplicates": 1,
            "counts.samples_per_object": 5,
            "out.dir": str(tmp_path / "run"),
        }))
        assert cli.main(["gen-data", "--config", str(cfg)]) == 0
        data = tmp_path / "run" / "data"
        assert (data / "pretrain" / "pre_00" / "manifest.json").exists()
        assert (data / "pursuit" / "pur_01" / "img_0000.ppm").exists()
        assert (tmp_path / "run" / "run-meta.json").exists()

    def test_report_aggregates(self, tmp_path, capsys):
        src = tmp_path / "summary.csv"
        src.write_text(
            "# comment\n"
            "base_fraction,learned_fraction,expressed_rate,failed_rate,"
            "mean_quality,gamma_f\n"
            "0.4,0.8,0.3,0.2,0.7,0.0\n"
            "0.6,1.0,0.1,0.0,0.9,0.1\n")
        out = tmp_path / "report.csv"
        assert cli.main(["report", str(src), "--out", str(out)]) == 0
        text = out.read_text()
        assert "mean" in text and "std_dev" in text and "0.5" in text

    def test_report_empty_exits_1(self, tmp_path, capsys):
        src = tmp_path / "summary.csv"
        src.write_text("# only a comment\n")
        assert cli.main(["report", str(src)]) == 1
