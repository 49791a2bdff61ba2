import json
from importlib import resources

import jsonschema
import pytest

from fopsim.config import ConfigError, ScenarioConfig, load_config
from fopsim.report import load_report_schema, report_json, write_csv
from fopsim.scenario import run_scenario


def bundled(name):
    return resources.files("fopsim").joinpath(f"configs/{name}")


def bundled_dict(name):
    return json.loads(bundled(name).read_text("utf-8"))


class TestConfig:
    def test_bundled_configs_validate(self):
        for name in ("nat_rotation_tfo.json", "nat_rotation_fop.json",
                     "shared_nat_two_clients.json"):
            cfg = ScenarioConfig.from_dict(bundled_dict(name))
            assert cfg.version == 1

    def test_round_trip_is_lossless(self):
        data = bundled_dict("nat_rotation_tfo.json")
        cfg = ScenarioConfig.from_dict(data)
        assert cfg.to_dict() == data
        assert ScenarioConfig.from_dict(cfg.to_dict()).to_dict() == data

    @pytest.mark.parametrize("mutate,key", [
        (lambda d: d.pop("seed"), "seed"),
        (lambda d: d.update(seed=-1), "seed"),
        (lambda d: d.update(variant="tls-next"), "variant"),
        (lambda d: d.update(version=99), "version"),
        (lambda d: d["visits"][0].update(client="nobody"), "visits[0].client"),
        (lambda d: d["visits"][1].update(hostname="ghost.example"),
         "visits[1].hostname"),
        (lambda d: d["hosts"][0].update(ips=[]), "hosts[0].ips"),
        (lambda d: d["checks"].append({"kind": "telepathy"}), "checks[3].kind"),
        (lambda d: d["nat"].pop("public_ip"), "nat.public_ip"),
        (lambda d: d.update(one_way_delay_ms=-5), "one_way_delay_ms"),
    ])
    def test_diagnostics_name_offending_key(self, mutate, key):
        data = bundled_dict("nat_rotation_tfo.json")
        mutate(data)
        with pytest.raises(ConfigError) as err:
            ScenarioConfig.from_dict(data)
        assert key in str(err.value)

    def test_duplicate_hostname_rejected(self):
        data = bundled_dict("nat_rotation_tfo.json")
        data["hosts"].append({"hostnames": ["tracker.example"],
                              "ips": ["198.51.100.9"]})
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict(data)

    def test_load_config_reports_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)


class TestScenarioRunner:
    def test_nat_rotation_tfo_checks_pass(self):
        cfg = ScenarioConfig.from_dict(bundled_dict("nat_rotation_tfo.json"))
        result = run_scenario(cfg)
        assert result.passed, result.checks
        # tracking via cookies spans the whole script, addresses only half
        assert result.summary()["host"]["tracking_period_ms"] == 28_800_000

    def test_nat_rotation_fop_checks_pass(self):
        cfg = ScenarioConfig.from_dict(bundled_dict("nat_rotation_fop.json"))
        result = run_scenario(cfg)
        assert result.passed, result.checks

    def test_shared_nat_config_passes(self):
        cfg = ScenarioConfig.from_dict(bundled_dict("shared_nat_two_clients.json"))
        result = run_scenario(cfg)
        assert result.passed, result.checks

    def test_failing_check_flips_passed(self):
        data = bundled_dict("nat_rotation_fop.json")
        data["checks"] = [{"kind": "linkage_across_labels",
                           "adversary": "passive"}]
        result = run_scenario(ScenarioConfig.from_dict(data))
        assert not result.passed

    def test_same_seed_identical_capture(self):
        cfg = ScenarioConfig.from_dict(bundled_dict("nat_rotation_tfo.json"))
        assert run_scenario(cfg).capture() == run_scenario(cfg).capture()


class TestReport:
    def test_json_bytes_deterministic_and_schema_valid(self):
        from fopsim.cli import cmd_table4
        report = cmd_table4([50], seed=4)
        assert report_json(report) == report_json(cmd_table4([50], seed=4))
        jsonschema.validate(json.loads(report_json(report)),
                            load_report_schema())

    def test_all_commands_validate_against_schema(self, tmp_path):
        from fopsim.cli import cmd_privacy, cmd_run, cmd_table5
        schema = load_report_schema()
        reports = [
            cmd_table5(trials=1_000, seed=4),
            cmd_privacy(["third_party"], seed=4),
            cmd_run(bundled("nat_rotation_fop.json")),
        ]
        for report in reports:
            jsonschema.validate(json.loads(report_json(report)), schema)

    def test_csv_column_order_fixed(self, tmp_path):
        from fopsim.cli import cmd_table4, cmd_table5
        path4 = tmp_path / "t4.csv"
        write_csv(cmd_table4([50], seed=4), path4)
        header4 = path4.read_text().splitlines()[0]
        assert header4 == ("rtt_ms,variant,initial_ms,resumed_ms,"
                           "resumed_vs_initial_saving")
        path5 = tmp_path / "t5.csv"
        write_csv(cmd_table5(trials=0, seed=4), path5)
        header5 = path5.read_text().splitlines()[0]
        assert header5 == ("revisit,variant,kind,p_save0,p_save1,p_save2,"
                           "mean_delay_overhead_ms")
