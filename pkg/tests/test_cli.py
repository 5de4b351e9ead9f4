"""Tests for the command line interface."""

import json

import pytest
from typer.testing import CliRunner

from pcharts.cli import app

runner = CliRunner()

BROKEN = "chart Broken {\n  state A init\n}\n"

LAMP = """
chart Lamp {
  event poweron;
  xor Lamp init {
    inv !in On;
    state Off init;
    state On;
  }
  on poweron from Off -> On;
}
"""


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for key in ("PCHART_LOG_LEVEL", "PCHART_LOG_FILE", "PCHART_WORKERS"):
        monkeypatch.delenv(key, raising=False)


class TestCheck:
    def test_bundled_chart(self):
        result = runner.invoke(app, ["check", "@sender_receiver"])
        assert result.exit_code == 0
        assert "well-formed" in result.stdout

    def test_syntax_error(self, write_chart):
        result = runner.invoke(app, ["check", str(write_chart(BROKEN))])
        assert result.exit_code == 1

    def test_json(self, write_chart):
        result = runner.invoke(app, ["check", "--json", str(write_chart(BROKEN))])
        assert result.exit_code == 1
        report = json.loads(result.stdout)
        assert report["ok"] is False
        assert report["diagnostics"][0]["code"] == "E001"

    def test_missing_file(self, tmp_path):
        result = runner.invoke(app, ["check", str(tmp_path / "missing.pchart")])
        assert result.exit_code == 2

    def test_unknown_bundled_chart(self):
        result = runner.invoke(app, ["check", "@nothing"])
        assert result.exit_code == 2


class TestVerify:
    def test_all_queries_hold(self):
        result = runner.invoke(app, ["verify", "--json", "@sender_receiver"])
        assert result.exit_code == 0
        report = json.loads(result.stdout)
        assert report["ok"] is True
        assert report["stats"]["num_states"] == 3
        assert len(report["results"]) == 5

    def test_violated_invariant(self, write_chart):
        result = runner.invoke(app, ["verify", str(write_chart(LAMP, "lamp"))])
        assert result.exit_code == 1
        assert "Counterexample" in result.stdout

    def test_bound_semantics(self):
        result = runner.invoke(app, ["verify", "--json", "--bound-semantics", "inclusive", "@probe"])
        report = json.loads(result.stdout)
        assert [r["value"] for r in report["results"]] == [pytest.approx(1.0), pytest.approx(1.0)]

    def test_bad_bound_semantics(self):
        result = runner.invoke(app, ["verify", "--bound-semantics", "loose", "@probe"])
        assert result.exit_code == 2


class TestOutputs:
    def test_stats(self):
        result = runner.invoke(app, ["stats", "@onoff"])
        assert result.exit_code == 0
        assert "2 states, 2 transitions" in result.stdout

    def test_export(self, tmp_path):
        model = tmp_path / "out" / "onoff.pm"
        props = tmp_path / "out" / "onoff.props"
        result = runner.invoke(app, ["export", "@sender_receiver", "--prism", str(model), "--props", str(props)])
        assert result.exit_code == 0
        assert "module SenderReceiver" in model.read_text()
        assert len(props.read_text().splitlines()) == 5

    def test_commands(self):
        result = runner.invoke(app, ["commands", "@onoff"])
        assert result.stdout == "[poweron] (root=Off) -> 1:(root'=On);\n"

    def test_codegen(self, tmp_path):
        source = tmp_path / "onoff.c"
        header = tmp_path / "onoff.h"
        result = runner.invoke(app, ["codegen", "@onoff", "--c", str(source), "--header", str(header)])
        assert result.exit_code == 0
        assert "void poweron(void){" in source.read_text()
        assert header.read_text().startswith("#ifndef ONOFF_H")

    def test_codegen_probabilistic(self):
        result = runner.invoke(app, ["codegen", "@sender_receiver"])
        assert result.exit_code == 1

    def test_dump(self, tmp_path):
        output = tmp_path / "chain.mdp"
        result = runner.invoke(app, ["dump", "@chain", "-o", str(output)])
        assert result.exit_code == 0
        assert output.read_text().startswith("# pcharts-mdp 1\n")

    def test_simulate(self):
        result = runner.invoke(app, ["simulate", "--json", "@chain", "-q", "?P.min in S3", "-n", "2000", "--seed", "5"])
        assert result.exit_code == 0
        estimate = json.loads(result.stdout)["estimate"]
        assert estimate["seed"] == 5
        assert estimate["samples"] == 2000

    def test_simulate_bad_seed(self):
        result = runner.invoke(app, ["simulate", "@chain", "-q", "?P.min", "--seed", "abc"])
        assert result.exit_code == 2

    def test_schema(self):
        result = runner.invoke(app, ["schema", "verify"])
        assert result.exit_code == 0
        assert "results" in json.loads(result.stdout)["properties"]

    def test_generate_config(self, tmp_path):
        output = tmp_path / "pcharts.yaml"
        result = runner.invoke(app, ["generate-config", "-o", str(output)])
        assert result.exit_code == 0
        assert "checker:" in output.read_text()
