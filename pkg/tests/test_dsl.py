"""Tests for the chart and query parsers and the pretty printer."""

from fractions import Fraction

import pytest

from pcharts.chart import CommentAnchor, EventTrigger, NodeKind, Objective, QueryKind, TimedTrigger
from pcharts.dsl import format_duration, parse_chart, parse_query, pretty_print
from pcharts.exceptions import QuerySyntaxError
from pcharts.expr import BinOp, Compare, Const, InState, Var

from .conftest import load_bundled

SMALL = """
chart Small {
  event go;
  var x : [0..3] = 1;
  state A init {
    note "start here";
  }
  state B {
    cost energy = 1/3;
    query "?P.max";
  }
  step: on go from A when x < 3 -> B do x := x + 1 cost tran = 2;
  on after 500ms from B -> A;
  note "steps once" on step;
  note "a small chart";
  formula "?P.min x = 2";
}
"""


class TestChartParser:
    """Tests for parse_chart."""

    def test_sender_receiver_structure(self):
        chart = load_bundled("sender_receiver")
        system = chart.nodes["root.System"]
        assert system.kind == NodeKind.AND
        assert [chart.nodes[c].name for c in system.children] == ["Sender", "Receiver"]
        assert chart.events == ("wup", "send", "msg")
        assert [t.id for t in chart.transitions] == ["wakeUp", "transmit", "receive"]
        wake = chart.transition("wakeUp")
        assert [(a.target, a.weight) for a in wake.alternatives] == [
            ("root.System.Sender.Sending", Fraction(3, 5)),
            ("root.System.Sender.Sleeping", Fraction(2, 5)),
        ]
        assert chart.transition("transmit").alternatives[0].broadcasts == ("msg",)
        assert [q.text for q in chart.queries] == ["?P.min", "?$tran.max", "?$energy.max", "?P>0.5"]
        assert all(q.attachment == "root.System.Receiver.Off" for q in chart.queries)

    def test_items(self):
        result = parse_chart(SMALL, "small.pchart")
        assert result.success
        chart = result.chart
        (decl,) = chart.variables
        assert (decl.name, decl.lo, decl.hi, decl.initial, decl.ranged) == ("x", 0, 3, 1, True)
        assert chart.nodes["root.B"].costs == (("energy", Fraction(1, 3)),)

        step, back = chart.transitions
        assert step.trigger == EventTrigger("go")
        assert step.guard == Compare("<", Var("x"), Const(3))
        assert step.alternatives[0].assignments == (("x", BinOp("+", Var("x"), Const(1))),)
        assert step.alternatives[0].costs == (("tran", Fraction(2)),)
        assert isinstance(back.trigger, TimedTrigger)
        assert back.trigger.delay.micros == 500_000

        assert chart.comments_for(CommentAnchor.GENERAL) == ("a small chart",)
        assert chart.comments_for(CommentAnchor.STATE, "root.A") == ("start here",)
        assert chart.comments_for(CommentAnchor.TRANSITION, "step") == ("steps once",)

        attached, floating = chart.queries
        assert attached.attachment == "root.B"
        assert floating.floating
        assert floating.goal == Compare("=", Var("x"), Const(2))

    def test_spans(self):
        result = parse_chart(SMALL, "small.pchart")
        step = result.chart.transition("step")
        assert step.span.file == "small.pchart"
        assert step.span.start_line == 12

    def test_unterminated_chart(self):
        result = parse_chart("chart Broken {\n  state A init;\n", "broken.pchart")
        assert result.chart is None
        (diagnostic,) = result.diagnostics
        assert diagnostic.code == "E001"
        assert diagnostic.span.file == "broken.pchart"
        assert diagnostic.message == "unexpected end of input"

    def test_unexpected_token(self):
        result = parse_chart("chart Broken {\n  state A init\n  state B;\n}\n")
        (diagnostic,) = result.diagnostics
        assert diagnostic.code == "E001"
        assert diagnostic.span.start_line == 3

    def test_missing_chart_header(self):
        result = parse_chart("state A;")
        (diagnostic,) = result.diagnostics
        assert diagnostic.message == "expected chart declaration"

    def test_malformed_query_in_chart(self):
        result = parse_chart('chart Q { state A init { query "?energy.max"; } }')
        assert result.chart is not None
        (diagnostic,) = result.diagnostics
        assert diagnostic.code == "E140"
        assert "?$energy.max" in diagnostic.hint

    def test_boolean_variable(self):
        result = parse_chart("chart B { var ready : bool = true; state A init; }")
        (decl,) = result.chart.variables
        assert decl.is_bool and decl.initial == 1

    def test_boolean_initialised_with_number(self):
        result = parse_chart("chart B { var ready : bool = 3; state A init; }")
        assert [d.code for d in result.diagnostics] == ["E126"]

    def test_default_domain(self):
        result = parse_chart("chart D { var n = 2; state A init; }", default_domain=(0, 7))
        (decl,) = result.chart.variables
        assert (decl.lo, decl.hi, decl.ranged) == (0, 7, False)

    def test_negative_range(self):
        result = parse_chart("chart N { var t : [-2..2] = -1; state A init; }")
        (decl,) = result.chart.variables
        assert (decl.lo, decl.hi, decl.initial) == (-2, 2, -1)


class TestQueryParser:
    """Tests for parse_query."""

    def test_probability_queries(self):
        query = parse_query("?P.min")
        assert (query.kind, query.objective, query.goal) == (QueryKind.PROB, Objective.MIN, None)

        query = parse_query("?P>0.5")
        assert query.objective == Objective.THRESHOLD
        assert (query.relation, query.bound) == (">", Fraction(1, 2))

    def test_reward_query(self):
        query = parse_query("?$energy.min countB = 10")
        assert query.kind == QueryKind.REWARD
        assert query.reward == "energy"
        assert query.goal == Compare("=", Var("countB"), Const(10))

    def test_time_bound(self):
        query = parse_query("?P.min F < 3650d in Crash")
        assert query.time_bound.value == 3650
        assert query.time_bound.unit == "d"
        assert not query.time_bound.inclusive
        assert query.goal == InState("Crash")

        assert parse_query("?P.max F <= 2s").time_bound.inclusive

    def test_missing_dollar(self):
        with pytest.raises(QuerySyntaxError) as excinfo:
            parse_query("?tran.max")
        assert excinfo.value.production == "measure"
        assert excinfo.value.hint == "reward queries are written with '$': ?$tran.max"

    def test_bad_objective(self):
        with pytest.raises(QuerySyntaxError) as excinfo:
            parse_query("?P.avg")
        assert excinfo.value.production == "objective"
        assert excinfo.value.column == 4

    def test_not_equal_threshold(self):
        with pytest.raises(QuerySyntaxError) as excinfo:
            parse_query("?P!=0.5")
        assert excinfo.value.production == "threshold"

    def test_empty_query(self):
        with pytest.raises(QuerySyntaxError) as excinfo:
            parse_query("")
        assert excinfo.value.production == "formula"


class TestPrettyPrint:
    """Tests for pretty_print."""

    def test_round_trip(self, bundled_name):
        chart = load_bundled(bundled_name)
        text = pretty_print(chart)
        reparsed = parse_chart(text).chart
        assert reparsed == chart
        assert pretty_print(reparsed) == text

    def test_canonical_form(self):
        chart = parse_chart(SMALL).chart
        text = pretty_print(chart)
        assert "step: on go from A when x < 3 -> B do x := x + 1 cost tran = 2;" in text
        assert "t2: on after 500ms from B -> A;" in text
        assert '  note "steps once" on step;' in text
        assert "    cost energy = 1/3;" in text
        assert '  formula "?P.min x = 2";' in text


class TestDurations:
    @pytest.mark.parametrize(
        "micros, text",
        [(86_400_000_000 * 365, "365d"), (2_000, "2ms"), (1_500_000, "1500ms"), (7, "7us")],
    )
    def test_format_duration(self, micros, text):
        assert format_duration(micros) == text
