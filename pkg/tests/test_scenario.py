"""Scenario loading, validation, and the built-in two-sandbox setup."""

import json

import pytest

from mqsim.errors import ParseError, ValidationError
from mqsim.scenario import build, builtin_scenario, load_scenario


def table1():
    return builtin_scenario("table1")


class TestLoad:
    def test_builtin_resolves(self):
        raw = builtin_scenario("table1.json")
        sc = load_scenario(raw)
        assert len(sc.raw["sandboxes"]) == 2
        assert len(sc.raw["sandboxes"][0]["vcpus"]) == 5
        assert len(sc.raw["sandboxes"][1]["vcpus"]) == 4

    def test_unknown_builtin(self):
        with pytest.raises(ParseError):
            builtin_scenario("nope")

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps(table1()))
        sc = load_scenario(str(path))
        assert sc.run_until_us == 12_000_000

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        with pytest.raises(ParseError):
            load_scenario(str(path))

    def test_missing_file(self):
        with pytest.raises(ParseError):
            load_scenario("/does/not/exist.json")


class TestValidation:
    def test_schema_required(self):
        raw = table1()
        raw["schema"] = 2
        with pytest.raises(ValidationError):
            load_scenario(raw)

    def test_budget_exceeding_period(self):
        raw = table1()
        raw["sandboxes"][0]["vcpus"][0]["c_us"] = 200_000
        with pytest.raises(ValidationError, match="c_us"):
            load_scenario(raw)

    def test_admission_checked_at_load(self):
        raw = table1()
        # the first sandbox's set totals 0.9 utilization: beyond the
        # rate-monotonic utilization bound, fine under the exact test
        raw["sandboxes"][0]["admission"] = "ll"
        with pytest.raises(ValidationError, match="admission"):
            load_scenario(raw)

    def test_channel_refs_checked(self):
        raw = table1()
        raw["channels"][0]["b"] = "nowhere"
        with pytest.raises(ValidationError, match="channel"):
            load_scenario(raw)

    def test_migration_refs_checked(self):
        raw = table1()
        raw["migrations"][0]["space"] = "ghost"
        with pytest.raises(ValidationError, match="address space"):
            load_scenario(raw)

    def test_missing_cost_model_warns(self):
        raw = table1()
        raw.pop("cost_model", None)
        sc = load_scenario(raw)
        assert any("cost_model" in w for w in sc.warnings)

    def test_tick_size_configurable(self):
        raw = table1()
        raw["tick_ns"] = 2000  # 2 us ticks halve the tick counts per second
        sc = load_scenario(raw)
        assert sc.run_until_us == 12 * 500_000
        raw["tick_ns"] = 0
        with pytest.raises(ValidationError, match="tick_ns"):
            load_scenario(raw)

    def test_duplicate_task_names(self):
        raw = table1()
        raw["sandboxes"][1]["vcpus"][2]["task"]["name"] = "canny"
        with pytest.raises(ValidationError, match="duplicate"):
            load_scenario(raw)


class TestBuild:
    def test_wiring(self):
        built = build(load_scenario(table1()))
        assert set(built.sim.sandboxes) == {"sb1", "sb2"}
        assert "canny" in built.tasks
        assert built.channels["main"].task_a is built.tasks["comms1"]
        assert built.channels["main"].task_b is built.tasks["comms2"]
        assert len(built.triggers) == 1
        assert "canny_as" in built.sim.sandboxes["sb1"].spaces

    def test_channel_needs_both_sides(self):
        raw = table1()
        raw["sandboxes"][1]["vcpus"] = [
            v for v in raw["sandboxes"][1]["vcpus"]
            if v.get("task", {}).get("name") != "comms2"]
        with pytest.raises(ValidationError, match="sender and one receiver"):
            build(load_scenario(raw))

    def test_build_is_deterministic(self):
        a = build(load_scenario(table1()))
        b = build(load_scenario(table1()))
        a.sim.run_until(2_000_000)
        b.sim.run_until(2_000_000)
        assert a.sim.trace.hash() == b.sim.trace.hash()
