"""Tests for the chart model and well-formedness rules."""

from fractions import Fraction

import pytest

from pcharts.chart import (
    ROOT,
    Alternative,
    ChartBuilder,
    CommentAnchor,
    Duration,
    NodeKind,
    TimedTrigger,
    accumulated_invariant,
    check_wellformed,
    global_invariant,
    has_errors,
    sanitize,
)
from pcharts.exceptions import ChartError
from pcharts.expr import TRUE, Compare, Const, Implies, InState, Not, Var, implies
from pcharts.models import Severity


def codes(diagnostics):
    return {d.code for d in diagnostics}


@pytest.fixture
def sender_receiver():
    """Sender-receiver chart assembled with the builder."""
    b = ChartBuilder("SenderReceiver")
    system = b.and_state("System")
    b.set_invariant(system, implies(InState("Sleeping"), Not(InState("Off"))))
    sender = b.xor("Sender", system)
    b.basic("Sleeping", sender, initial=True, costs={"energy": "0.1"})
    b.basic("Sending", sender, costs={"energy": 2})
    receiver = b.xor("Receiver", system)
    b.basic("Listening", receiver, initial=True)
    b.basic("Off", receiver)
    b.event("wup", "send", "msg")
    b.transition(
        "Sleeping",
        "wup",
        [Alternative("Sending", Fraction(3, 5)), Alternative("Sleeping", Fraction(2, 5))],
        label="wakeUp",
    )
    b.transition(
        "Sending",
        "send",
        [
            Alternative("Sending", Fraction(9, 10), broadcasts=("msg",), costs=(("tran", Fraction(1)),)),
            Alternative("Sending", Fraction(1, 10), costs=(("tran", Fraction(1)),)),
        ],
        label="transmit",
    )
    b.transition("Listening", "msg", "Off")
    b.comment("lossy channel", CommentAnchor.TRANSITION, "transmit")
    return b.build()


class TestChartNavigation:
    """Tests for node ids and references."""

    def test_node_ids_are_paths(self, sender_receiver):
        chart = sender_receiver
        assert chart.resolve("Sleeping") == "root.System.Sender.Sleeping"
        assert chart.resolve("Receiver.Off") == "root.System.Receiver.Off"
        assert chart.resolve("Nowhere") is None
        assert chart.nodes["root.System"].kind == NodeKind.AND
        assert chart.nodes["root.System.Sender"].initial == "root.System.Sender.Sleeping"

    def test_ancestors_and_paths(self, sender_receiver):
        chart = sender_receiver
        off = "root.System.Receiver.Off"
        assert chart.ancestors(off) == ("root.System.Receiver", "root.System", ROOT)
        assert chart.path(off)[0] == ROOT
        assert chart.is_ancestor("root.System", off)
        assert not chart.is_ancestor(off, "root.System")

    def test_short_ref(self, sender_receiver):
        assert sender_receiver.short_ref("root.System.Receiver.Off") == "Off"
        assert sender_receiver.short_ref(ROOT) == ROOT

    def test_ambiguous_names_need_paths(self):
        b = ChartBuilder("Twice")
        a = b.xor("A", initial=True)
        b.basic("Idle", a, initial=True)
        c = b.xor("B")
        b.basic("Idle", c, initial=True)
        chart = b.build()
        assert chart.resolve("Idle") is None
        assert chart.is_ambiguous("Idle")
        assert chart.short_ref("root.B.Idle") == "B.Idle"

    def test_unknown_node(self, sender_receiver):
        with pytest.raises(ChartError):
            sender_receiver.node("root.Missing")

    def test_always_active(self, sender_receiver):
        assert sender_receiver.always_active("root.System")
        assert sender_receiver.always_active("root.System.Receiver")
        assert not sender_receiver.always_active("root.System.Receiver.Off")

    def test_transition_scope(self, sender_receiver):
        chart = sender_receiver
        sleeping = "root.System.Sender.Sleeping"
        sending = "root.System.Sender.Sending"
        assert chart.transition_scope(sleeping, sending) == "root.System.Sender"
        assert chart.transition_scope(sleeping, sleeping) == "root.System.Sender"


class TestEventsAndRewards:
    """Tests for derived event and reward sets."""

    def test_broadcast_events_are_internal(self, sender_receiver):
        assert sender_receiver.internal_events == ("msg",)
        assert sender_receiver.external_events == ("wup", "send")

    def test_reward_names(self, sender_receiver):
        assert sender_receiver.reward_names == ("energy", "tran")

    def test_trigger_label(self):
        b = ChartBuilder("Timer")
        b.basic("Wait", initial=True)
        b.basic("Done")
        b.transition("Wait", TimedTrigger(Duration(2, "s")), "Done")
        b.transition("Done", "reset", "Wait")
        chart = b.build()
        assert chart.timed
        assert chart.timed_labels == ("Wait_after_2s",)
        assert [chart.trigger_label(t) for t in chart.transitions] == ["Wait_after_2s", "reset"]

    def test_default_transition_ids(self, sender_receiver):
        assert [t.id for t in sender_receiver.transitions] == ["wakeUp", "transmit", "t3"]
        assert sender_receiver.transition("t3").source == "root.System.Receiver.Listening"

    def test_comments_for(self, sender_receiver):
        assert sender_receiver.comments_for(CommentAnchor.TRANSITION, "transmit") == ("lossy channel",)
        assert sender_receiver.comments_for(CommentAnchor.GENERAL) == ()


class TestInvariants:
    """Tests for accumulated and global invariants."""

    def test_global_invariant_of_always_active_state(self, sender_receiver):
        invariant = global_invariant(sender_receiver)
        assert invariant == Implies(
            InState("root.System.Sender.Sleeping"), Not(InState("root.System.Receiver.Off"))
        )

    def test_global_invariant_guarded_by_membership(self):
        b = ChartBuilder("Guarded")
        b.variable("x", lo=0, hi=3)
        b.basic("Idle", initial=True)
        b.basic("Busy", invariant=Compare(">", Var("x"), Const(0)))
        chart = b.build()
        assert global_invariant(chart) == Implies(
            InState("root.Busy"), Compare(">", Var("x"), Const(0))
        )

    def test_no_invariants(self):
        b = ChartBuilder("Plain")
        b.basic("A", initial=True)
        assert global_invariant(b.build()) == TRUE

    def test_accumulated_invariant_includes_ancestors(self, sender_receiver):
        inherited = accumulated_invariant(sender_receiver, "root.System.Sender")
        assert inherited == global_invariant(sender_receiver)


class TestWellFormedness:
    """Tests for check_wellformed."""

    def test_well_formed(self, sender_receiver):
        assert check_wellformed(sender_receiver) == []

    def test_warnings_only_is_well_formed(self, chart_from):
        chart = chart_from('chart Eq { state A init { query "?P=1"; } }')
        problems = check_wellformed(chart)
        assert codes(problems) == {"W139"}
        assert all(p.severity == Severity.WARNING for p in problems)
        assert not has_errors(problems)

    def test_probabilities_must_sum_to_one(self):
        b = ChartBuilder("Bad")
        b.basic("A", initial=True)
        b.basic("B")
        b.transition("A", "e", [Alternative("B", Fraction(1, 2)), Alternative("A", Fraction(1, 3))])
        problems = check_wellformed(b.build())
        assert "E110" in codes(problems)
        assert has_errors(problems)

    def test_probability_range(self):
        b = ChartBuilder("Bad")
        b.basic("A", initial=True)
        b.transition("A", "e", [Alternative("A", Fraction(3, 2)), Alternative("A", Fraction(-1, 2))])
        assert "E111" in codes(check_wellformed(b.build()))

    def test_missing_initial_state(self):
        b = ChartBuilder("Bad")
        b.basic("A")
        b.basic("B")
        assert "E102" in codes(check_wellformed(b.build()))

    def test_several_initial_states(self):
        b = ChartBuilder("Bad")
        b.basic("A", initial=True)
        b.basic("B", initial=True)
        b.build()
        assert "E106" in codes(b.problems)

    def test_and_state_regions(self):
        b = ChartBuilder("Bad")
        both = b.and_state("Both", initial=True)
        b.basic("Lonely", both)
        assert {"E103", "E104"} <= codes(check_wellformed(b.build()))

    def test_unknown_target(self):
        b = ChartBuilder("Bad")
        b.basic("A", initial=True)
        b.transition("A", "e", "Nowhere")
        assert "E112" in codes(check_wellformed(b.build()))

    def test_unknown_variable_in_assignment(self):
        b = ChartBuilder("Bad")
        b.basic("A", initial=True)
        b.transition("A", "e", Alternative("A", assignments=(("y", Const(1)),)))
        assert "E121" in codes(check_wellformed(b.build()))

    def test_type_error(self):
        b = ChartBuilder("Bad")
        b.variable("flag", is_bool=True)
        b.basic("A", initial=True)
        b.transition("A", "e", "A", guard=Compare("<", Var("flag"), Const(1)))
        assert "E126" in codes(check_wellformed(b.build()))

    def test_initial_value_out_of_range(self):
        b = ChartBuilder("Bad")
        b.variable("x", lo=0, hi=3, initial=7)
        b.basic("A", initial=True)
        assert "E123" in codes(check_wellformed(b.build()))

    def test_negative_cost(self):
        b = ChartBuilder("Bad")
        b.basic("A", initial=True, costs={"energy": -1})
        assert "E127" in codes(check_wellformed(b.build()))

    def test_duplicate_labels(self):
        b = ChartBuilder("Bad")
        b.basic("A", initial=True)
        b.transition("A", "e", "A", label="loop")
        b.transition("A", "f", "A", label="loop")
        assert "E132" in codes(check_wellformed(b.build()))

    def test_note_on_unknown_transition(self):
        b = ChartBuilder("Bad")
        b.basic("A", initial=True)
        b.comment("dangling", CommentAnchor.TRANSITION, "nothing")
        assert "E131" in codes(check_wellformed(b.build()))

    def test_strict_mode(self):
        b = ChartBuilder("Loose")
        b.variable("x")
        b.basic("A", initial=True)
        b.transition("A", "e", "A")
        chart = b.build()
        assert check_wellformed(chart) == []
        assert {"E120", "E124"} <= codes(check_wellformed(chart, strict=True))

    def test_diagnostic_render(self):
        b = ChartBuilder("Bad")
        b.basic("A")
        b.basic("B")
        (problem,) = check_wellformed(b.build())
        assert problem.severity == Severity.ERROR
        assert problem.render().startswith("error: xor state 'root' has no initial state [E102]")


def _siblings():
    b = ChartBuilder("Siblings")
    b.basic("A", initial=True)
    b.basic("B")
    return b


class TestVariableScopes:
    """Variables are visible in the state that declares them and below it."""

    def test_sibling_scope_guard_and_assignment(self):
        b = _siblings()
        b.variable("x", lo=0, hi=3, scope="A")
        b.transition(
            "B",
            "e",
            Alternative("A", assignments=(("x", Const(1)),)),
            guard=Compare("<", Var("x"), Const(2)),
        )
        problems = check_wellformed(b.build())
        hidden = [d for d in problems if d.code == "E121"]
        assert len(hidden) == 2
        assert "declared in 'A' is not visible" in hidden[0].message
        assert has_errors(problems)

    def test_sibling_scope_invariant(self):
        b = ChartBuilder("Siblings")
        b.basic("A", initial=True)
        b.basic("B", invariant=Compare(">", Var("x"), Const(0)))
        b.variable("x", lo=0, hi=3, scope="A")
        assert "E121" in codes(check_wellformed(b.build()))

    def test_ancestor_scope_is_visible(self):
        b = ChartBuilder("Nested")
        outer = b.xor("Outer", initial=True)
        b.basic("A", outer, initial=True)
        b.basic("B", outer, invariant=Compare("<=", Var("x"), Const(3)))
        b.variable("x", lo=0, hi=3, scope="Outer")
        b.transition(
            "A",
            "e",
            Alternative("B", assignments=(("x", Const(1)),)),
            guard=Compare("<", Var("x"), Const(2)),
        )
        assert check_wellformed(b.build()) == []

    def test_redeclared_in_one_chain(self):
        b = ChartBuilder("Shadow")
        b.basic("A", initial=True)
        b.variable("x", lo=0, hi=3)
        b.variable("x", lo=0, hi=1, scope="A")
        (problem,) = [d for d in check_wellformed(b.build()) if d.code == "E122"]
        assert "one scope chain" in problem.message

    def test_same_name_in_disjoint_scopes(self):
        b = _siblings()
        b.variable("x", lo=0, hi=3, scope="A")
        b.variable("x", lo=0, hi=1, scope="B")
        b.transition("A", "e", Alternative("B", assignments=(("x", Const(2)),)))
        b.transition("B", "e", "A", guard=Compare("=", Var("x"), Const(0)))
        chart = b.build()
        assert check_wellformed(chart) == []
        assert [v.name for v in chart.variables] == ["A_x", "B_x"]
        assert [v.source_name for v in chart.variables] == ["x", "x"]
        first, second = chart.transitions
        assert first.alternatives[0].assignments == (("A_x", Const(2)),)
        assert second.guard == Compare("=", Var("B_x"), Const(0))

    def test_region_names_clash(self):
        b = ChartBuilder("Regions")
        top = b.xor("Top", initial=True)
        p = b.and_state("P", top, initial=True)
        q = b.and_state("Q", top)
        for parent, names in ((p, ("Left", "Right")), (q, ("Left", "Other"))):
            for name in names:
                region = b.xor(name, parent)
                b.basic(f"{name}In{parent[-1]}", region, initial=True)
        problems = check_wellformed(b.build())
        (clash,) = [d for d in problems if d.code == "E107"]
        assert clash.severity == Severity.ERROR
        assert "'Left'" in clash.message


class TestSanitize:
    def test_identifiers(self):
        assert sanitize("Sender") == "Sender"
        assert sanitize("two words") == "two_words"
        assert sanitize("3G") == "_3G"
