"""Tests for PRISM export and the model reader."""

import numpy as np
import pytest

from pcharts.chart import ChartBuilder
from pcharts.exceptions import PChartsError
from pcharts.mdp import build_mdp
from pcharts.normalizer import apply_digital_clocks, normalize
from pcharts.prism import constant_names, export_model, export_properties, format_commands, format_property, read_model
from pcharts.properties import chart_properties

from .conftest import load_bundled


def flatten(name):
    chart = load_bundled(name)
    return chart, apply_digital_clocks(normalize(chart))


class TestExportModel:
    """Tests for export_model."""

    def test_sender_receiver(self):
        chart, system = flatten("sender_receiver")
        text = export_model(system, chart)
        assert text.startswith("// SenderReceiver: generated by pcharts\n")
        assert "\nmdp\n" in text
        assert "const int Sleeping = 0;" in text
        assert "const int Off = 1;" in text
        assert "module SenderReceiver" in text
        assert "  sender : [0..1] init 0;" in text
        assert "  [wup] (sender=Sleeping) -> 0.6:(sender'=Sending) + 0.4:(sender'=Sleeping);" in text
        assert 'rewards "energy"' in text
        assert "  (sender=Sleeping) : 0.1;" in text
        assert 'label "Off" = (receiver=Off);' in text
        assert text.endswith("\n")

    def test_time_base_comment(self):
        _, system = flatten("probe")
        text = export_model(system)
        assert "// time base 1000000 us" in text
        assert "[tick]" in text

    def test_format_commands(self):
        _, system = flatten("onoff")
        assert format_commands(system) == "[poweron] (root=Off) -> 1:(root'=On);\n"


class TestConstantNames:
    def test_clashing_values_are_qualified(self):
        b = ChartBuilder("Pair")
        both = b.and_state("Both", initial=True)
        left = b.xor("Left", both)
        b.basic("Idle", left, initial=True)
        b.basic("Busy", left)
        right = b.xor("Right", both)
        b.basic("Busy", right, initial=True)
        b.basic("Idle", right)
        system = normalize(b.build())
        names = constant_names(system)
        assert names[("left", 0)] == "left_Idle"
        assert names[("right", 1)] == "right_Idle"
        assert names[("root", 0)] == "Both"


class TestProperties:
    """Tests for format_property and export_properties."""

    def test_time_bounds(self):
        chart, system = flatten("probe")
        props = chart_properties(chart, system)
        assert format_property(props[0], system) == "Pmin=? [ F<2 (root=Done) ]"
        assert format_property(props[1], system) == "Pmin=? [ F<3 (root=Done) ]"
        assert format_property(props[0], system, strict_time_bounds=False) == "Pmin=? [ F<=2 (root=Done) ]"

    def test_compound_goal(self):
        chart, system = flatten("rfid")
        props = chart_properties(chart, system)
        formulas = [format_property(p, system) for p in props]
        assert "Pmax=? [ F ((countA=2) & (countB<5)) ]" in formulas

    def test_export_properties(self):
        chart, system = flatten("sender_receiver")
        text = export_properties(chart_properties(chart, system), system)
        lines = text.splitlines()
        assert len(lines) == 5
        assert lines[0] == "P>=1 [ G ((sender=Sleeping) => !(receiver=Off)) ]"
        assert lines[-1] == "P>0.5 [ F (receiver=Off) ]"


class TestReadModel:
    """An exported model read back induces the same MDP."""

    @pytest.mark.parametrize("name", ["sender_receiver", "chain", "onoff", "probe", "rfid"])
    def test_same_mdp(self, name):
        chart, system = flatten(name)
        original, _ = build_mdp(system)
        loaded, _ = build_mdp(read_model(export_model(system, chart)))
        assert loaded.num_states == original.num_states
        assert loaded.num_transitions == original.num_transitions
        assert loaded.action_labels == original.action_labels
        assert loaded.states == original.states
        assert loaded.time_base_us == original.time_base_us
        for reward in original.reward_names():
            np.testing.assert_allclose(loaded.state_rewards[reward], original.state_rewards[reward])
            np.testing.assert_allclose(loaded.action_rewards[reward], original.action_rewards[reward])

    def test_syntax_error(self):
        with pytest.raises(PChartsError):
            read_model("mdp module broken")
