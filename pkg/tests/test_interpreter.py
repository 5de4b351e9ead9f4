"""Tests for the reference interpreter."""

from fractions import Fraction

import pytest

from pcharts.exceptions import NormalizationError, PChartsError
from pcharts.interpreter import Interpreter, replay

from .conftest import load_bundled, load_text

COUNTER = """
chart Counter {
  var x : [0..2] = 0;
  state A init;
  on inc from A -> A do x := x + 1;
}
"""


class TestConfigurations:
    def test_initial(self):
        interpreter = Interpreter(load_bundled("sender_receiver"))
        start = interpreter.initial()
        assert start.active == {
            "root",
            "root.System",
            "root.System.Sender",
            "root.System.Sender.Sleeping",
            "root.System.Receiver",
            "root.System.Receiver.Listening",
        }

    def test_labels(self):
        assert Interpreter(load_bundled("sender_receiver")).labels() == ["wup", "send"]
        assert Interpreter(load_bundled("probe")).labels() == ["Wait_after_2s", "Done_after_1s"]


class TestStep:
    def test_probabilistic_step(self):
        interpreter = Interpreter(load_bundled("sender_receiver"))
        (dist,) = interpreter.step("wup", interpreter.initial())
        assert [p for p, _ in dist] == [Fraction(3, 5), Fraction(2, 5)]
        sending, sleeping = (conf for _, conf in dist)
        assert "root.System.Sender.Sending" in sending.active
        assert "root.System.Sender.Sleeping" in sleeping.active

    def test_broadcast_reaches_receiver(self):
        interpreter = Interpreter(load_bundled("sender_receiver"))
        (dist,) = interpreter.step("wup", interpreter.initial())
        sending = dist[0][1]
        (sent,) = interpreter.step("send", sending)
        delivered, lost = (conf for _, conf in sent)
        assert "root.System.Receiver.Off" in delivered.active
        assert "root.System.Receiver.Listening" in lost.active

    def test_disabled_event(self):
        interpreter = Interpreter(load_bundled("sender_receiver"))
        assert interpreter.step("send", interpreter.initial()) == []

    def test_out_of_range_write_disables_step(self):
        interpreter = Interpreter(load_text(COUNTER))
        end = interpreter.run(["inc"] * 5)
        assert end.env == {"x": 2}
        assert interpreter.step("inc", end) == []

    def test_conflicting_regions(self, chart_from):
        chart = chart_from(
            """
            chart Clash {
              var x : [0..3] = 0;
              and Both {
                xor Left { state L init; }
                xor Right { state R init; }
              }
              on go from L -> L do x := 1;
              on go from R -> R do x := 2;
            }
            """
        )
        interpreter = Interpreter(chart)
        with pytest.raises(NormalizationError):
            interpreter.step("go", interpreter.initial())


class TestRun:
    def test_onoff(self):
        interpreter = Interpreter(load_bundled("onoff"))
        end = interpreter.run(["poweron", "poweron"])
        assert "root.On" in end.active

    def test_probabilistic_event_is_rejected(self):
        interpreter = Interpreter(load_bundled("sender_receiver"))
        with pytest.raises(PChartsError):
            interpreter.run(["wup"])

    def test_replay(self):
        assert replay(load_bundled("onoff"), ["poweron"]) == {"root": 1}
        assert replay(load_text(COUNTER), ["inc", "inc"]) == {"root": 0, "x": 2}
