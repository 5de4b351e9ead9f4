"""Tests for normalization into guarded commands and digital clocks."""

from fractions import Fraction

import pytest

from pcharts.chart import ChartBuilder, check_wellformed, global_invariant, has_errors
from pcharts.exceptions import (
    BroadcastCycleError,
    ChartError,
    ClockGranularityError,
    CodegenError,
    NormalizationError,
)
from pcharts.expr import InState
from pcharts.interpreter import flat_transitions, reference_transitions
from pcharts.normalizer import (
    TICK,
    CodeSwitch,
    VarRole,
    apply_digital_clocks,
    check_broadcast_graph,
    lower_predicate,
    nested_codegen_form,
    normalize,
)
from pcharts.prism import PrismPrinter, constant_names

from .chartgen import random_chart
from .conftest import load_bundled, load_text


def render(system, expr):
    return PrismPrinter(constant_names(system)).render(expr)


class TestNormalize:
    """Tests for normalize on the bundled charts."""

    def test_scope_variables(self):
        system = normalize(load_bundled("sender_receiver"))
        scope = [v for v in system.variables if v.role == VarRole.SCOPE]
        assert [v.name for v in scope] == ["root", "sender", "receiver"]
        assert system.variable("sender").labels == ("Sleeping", "Sending")
        assert system.variable("receiver").labels == ("Listening", "Off")
        assert system.initial == (0, 0, 0)

    def test_broadcast_events_are_inlined(self):
        system = normalize(load_bundled("sender_receiver"))
        assert set(system.labels) == {"wup", "send"}

    def test_wake_up_command(self):
        system = normalize(load_bundled("sender_receiver"))
        (wake,) = [c for c in system.commands if c.label == "wup"]
        assert render(system, wake.guard) == "(sender=Sleeping)"
        assert [u.prob for u in wake.alternatives] == [Fraction(3, 5), Fraction(2, 5)]

    def test_send_splits_on_receiver(self):
        system = normalize(load_bundled("sender_receiver"))
        sends = [c for c in system.commands if c.label == "send"]
        assert len(sends) == 2
        for cmd in sends:
            assert [u.prob for u in cmd.alternatives] == [Fraction(9, 10), Fraction(1, 10)]

    def test_lower_predicate(self):
        chart = load_bundled("sender_receiver")
        system = normalize(chart)
        off = lower_predicate(system, InState("root.System.Receiver.Off"))
        assert render(system, off) == "(receiver=Off)"
        invariant = lower_predicate(system, global_invariant(chart))
        assert render(system, invariant) == "(sender=Sleeping) => !(receiver=Off)"

    def test_lower_predicate_unknown_state(self):
        system = normalize(load_bundled("onoff"))
        with pytest.raises(ChartError):
            lower_predicate(system, InState("root.Nowhere"))

    def test_rewards(self):
        system = normalize(load_bundled("sender_receiver"))
        energy = system.reward("energy")
        assert [rate for _, rate in energy.state_items] == [Fraction(1, 10), Fraction(2)]
        tran = system.reward("tran")
        assert {item.label for item in tran.action_items} == {"send"}
        assert all(item.rate == 1 for item in tran.action_items)

    def test_ill_formed_chart(self):
        b = ChartBuilder("Bad")
        b.basic("A")
        b.basic("B")
        with pytest.raises(ChartError):
            normalize(b.build())

    def test_out_of_range_assignment_strengthens_guard(self, chart_from):
        chart = chart_from(
            """
            chart Counter {
              var x : [0..2] = 0;
              state A init;
              on inc from A -> A do x := x + 1;
            }
            """
        )
        system = normalize(chart)
        assert [d.code for d in system.diagnostics] == ["W151"]
        states, transitions = flat_transitions(system)
        assert {system.valuation(s)["x"] for s in states} == {0, 1, 2}
        assert not [t for t in transitions if system.valuation(t[0])["x"] == 2]

    def test_conflicting_writes(self, chart_from):
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
        with pytest.raises(NormalizationError):
            normalize(chart)

    def test_equivalent_writes_merge(self, chart_from):
        chart = chart_from(
            """
            chart Agree {
              var x : [0..3] = 0;
              and Both {
                xor Left { state L init; }
                xor Right { state R init; }
              }
              on go from L -> L do x := x + 1;
              on go from R -> R do x := 1 + x;
            }
            """
        )
        system = normalize(chart)
        ((_, [(prob, succ)]),) = system.step(system.initial)
        assert prob == 1
        assert system.valuation(succ)["x"] == 1

    def test_state_local_variables(self, chart_from):
        chart = chart_from(
            """
            chart Locals {
              state A init { var n : [0..2] = 0; }
              state B { var n : [0..2] = 2; }
              on go from A -> B do n := n + 1;
              on go from B -> A do n := n - 1;
            }
            """
        )
        system = normalize(chart)
        assert system.variable("A_n").initial == 0
        assert system.variable("B_n").initial == 2
        (to_b,) = system.step(system.initial)
        _, [(prob, succ)] = to_b
        assert prob == 1
        assert system.valuation(succ)["A_n"] == 1
        assert system.valuation(succ)["B_n"] == 2


class TestBroadcastGraph:
    """Tests for broadcast cycle detection."""

    CYCLIC = """
    chart Loop {
      state A init;
      on a from A -> A / b;
      on b from A -> A / a;
    }
    """

    def test_acyclic(self):
        assert check_broadcast_graph(load_bundled("sender_receiver")) == []

    def test_cycle_reported(self):
        chart = load_text(self.CYCLIC)
        (problem,) = check_broadcast_graph(chart)
        assert problem.code == "E150"
        assert problem.message in ("broadcast cycle: a -> b -> a", "broadcast cycle: b -> a -> b")

    def test_normalize_rejects_cycles(self):
        with pytest.raises(BroadcastCycleError) as excinfo:
            normalize(load_text(self.CYCLIC))
        assert sorted(excinfo.value.cycles[0]) == ["a", "b"]


class TestDigitalClocks:
    """Tests for apply_digital_clocks."""

    def test_untimed_unchanged(self):
        system = normalize(load_bundled("sender_receiver"))
        assert apply_digital_clocks(system) is system

    def test_probe_clocks(self):
        system = apply_digital_clocks(normalize(load_bundled("probe")))
        assert system.time_base_us == 1_000_000
        clocks = {v.name: v.hi for v in system.variables if v.role == VarRole.CLOCK}
        assert clocks == {"c_Wait": 2, "c_Done": 1}
        assert TICK in system.labels

    def test_probe_runs_two_ticks(self):
        system = apply_digital_clocks(normalize(load_bundled("probe")))
        state = system.initial
        labels = []
        for _ in range(3):
            ((index, dist),) = system.step(state)
            labels.append(system.commands[index].label)
            ((_, state),) = dist
        assert labels == [TICK, TICK, "Wait_after_2s"]
        assert system.valuation(state)["root"] == system.variable("root").labels.index("Done")

    def test_time_base_is_gcd(self):
        system = apply_digital_clocks(normalize(load_bundled("hubble")))
        assert system.time_base_us == 86_400_000_000
        clocks = {v.name: v.hi for v in system.variables if v.role == VarRole.CLOCK}
        assert clocks["c_SixG"] == 365
        assert clocks["c_TwoLeft"] == 730

    def test_granularity_limit(self):
        with pytest.raises(ClockGranularityError) as excinfo:
            apply_digital_clocks(normalize(load_bundled("probe")), max_clock_ticks=1)
        assert excinfo.value.details["ticks"] == 2


class TestCodegenForm:
    """Tests for nested_codegen_form."""

    def test_onoff(self):
        form = nested_codegen_form(load_bundled("onoff"))
        (proc,) = form.procedures
        assert proc.label == "poweron"
        assert proc.transitions == ("switchOn",)
        assert isinstance(proc.tree, CodeSwitch)
        assert proc.tree.var == "root"
        assert [label for _, label, _ in proc.tree.branches] == ["Off"]

    def test_step(self):
        form = nested_codegen_form(load_bundled("onoff"))
        assert form.step("poweron", {"root": 0}) == {"root": 1}
        assert form.step("poweron", {"root": 1}) == {"root": 1}

    def test_probabilistic_charts_rejected(self):
        with pytest.raises(CodegenError):
            nested_codegen_form(load_bundled("sender_receiver"))


def _equivalent(chart):
    system = normalize(chart)
    ref_states, ref_transitions = reference_transitions(chart, system)
    states, transitions = flat_transitions(system)
    assert states == ref_states
    assert transitions == ref_transitions


class TestSoundness:
    """Guarded commands and the reference interpreter induce the same transition system."""

    @pytest.mark.parametrize("name", ["sender_receiver", "sender_receiver_reliable", "chain", "onoff", "rfid"])
    def test_bundled(self, name):
        _equivalent(load_bundled(name))

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(100))
    def test_random(self, seed):
        chart = random_chart(seed)
        if has_errors(check_wellformed(chart)):
            pytest.skip("generated chart is not well-formed")
        try:
            normalize(chart)
        except NormalizationError:
            pytest.skip("generated chart has conflicting transitions")
        _equivalent(chart)
