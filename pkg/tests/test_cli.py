"""Command-line interface: calculators, experiments, scenario runs."""

import json

import pytest

from mqsim.cli import main


def last_json(capsys):
    out = capsys.readouterr().out.strip().splitlines()
    for line in reversed(out):
        if line.startswith("{"):
            return json.loads(line)
    raise AssertionError(f"no JSON in output: {out}")


class TestBoundsCli:
    def test_comm_worked_example(self, capsys):
        rc = main(["bounds", "comm", "--cs", "2", "--ts", "10", "--cd", "3",
                   "--td", "15", "--req", "5", "--resp", "4"])
        assert rc == 0
        payload = last_json(capsys)
        assert payload["W"] == 48
        assert payload["W_shifted"] == 49

    def test_comm_oracle_flag(self, capsys):
        rc = main(["bounds", "comm", "--cs", "2", "--ts", "10", "--cd", "3",
                   "--td", "15", "--req", "5", "--resp", "4", "--oracle"])
        assert rc == 0
        payload = last_json(capsys)
        assert payload["observed_max"] == "49"

    def test_migration_violation(self, capsys):
        rc = main(["bounds", "migration", "--delta", "20", "--cm", "10",
                   "--tm", "50", "--es", "79.8"])
        assert rc == 0
        payload = last_json(capsys)
        assert payload["bound"] == "100"
        assert payload["verdict"] == "violated"

    def test_adjust(self, capsys):
        rc = main(["bounds", "adjust", "--tscd", "1000", "--tscs", "400",
                   "--rdtsc", "10", "--ipi", "100"])
        assert rc == 0
        assert last_json(capsys)["delta_adj"] == "480"

    def test_missing_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["bounds", "comm", "--cs", "2"])
        assert exc.value.code == 2


class TestExperimentCli:
    def test_tables(self, capsys):
        rc = main(["experiment", "tables"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "small-space" in out and "eligible" in out
        assert out.count("violated") == 3

    def test_tables_artifact(self, tmp_path):
        rc = main(["experiment", "tables", "--out", str(tmp_path)])
        assert rc == 0
        rows = json.loads((tmp_path / "tables.json").read_text())["rows"]
        verdicts = {r["delta_s_ms"]: r["verdict"] for r in rows}
        assert verdicts == {"5.4": "eligible", "20": "violated",
                            "26.4": "violated", "891.4": "violated"}


class TestRunCli:
    def test_builtin_scenario_short(self, capsys, tmp_path):
        rc = main(["run", "table1", "--until", "1", "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "metrics.csv").exists()
        assert (tmp_path / "trace.csv").exists()
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert "trace_hash" in summary

    def test_trace_artifact_reproducible(self, tmp_path):
        main(["run", "table1", "--until", "1", "--out", str(tmp_path / "a")])
        main(["run", "table1", "--until", "1", "--out", str(tmp_path / "b")])
        a = (tmp_path / "a" / "trace.csv").read_bytes()
        b = (tmp_path / "b" / "trace.csv").read_bytes()
        assert a == b

    def test_unknown_scenario(self, capsys):
        with pytest.raises(Exception):
            main(["run", "missing.json"])
