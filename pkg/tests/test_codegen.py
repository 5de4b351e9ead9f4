"""Tests for C code generation."""

import random

import pytest

from pcharts.chart import ChartBuilder
from pcharts.codegen import generate_code
from pcharts.exceptions import ChartError, CodegenError, NormalizationError, PChartsError
from pcharts.interpreter import replay
from pcharts.normalizer import nested_codegen_form

from .chartgen import random_chart
from .conftest import load_bundled, load_text

ONOFF_SOURCE = """\
/* Variables */
enum root_status {Off, On} root;
// Off - The light is off
// On - The light is on

int main(void){
    /* Initialization */
    root = Off;

    return 0;
}

// The event is generated when the switch is on
void poweron(void){
    if ((root == Off)) {
        root = On;
    }
}
"""

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

COUNTER = """
chart Counter {
  var x : [0..3] = 0;
  var y : [0..3] = 1;
  state A init;
  swap: on go from A -> A do x := y, y := x;
}
"""


class TestGenerateCode:
    """Tests for generate_code."""

    def test_onoff(self):
        code = generate_code(load_bundled("onoff"))
        assert code.source == ONOFF_SOURCE
        assert code.procedures == ["poweron"]
        assert code.diagnostics == []

    def test_header(self):
        code = generate_code(load_bundled("onoff"))
        assert code.header == "#ifndef ONOFF_H\n#define ONOFF_H\n\nvoid poweron(void);\n\n#endif\n"

    def test_init_entry(self):
        code = generate_code(load_bundled("onoff"), entry="init")
        assert "void init(void){\n    /* Initialization */\n    root = Off;\n}" in code.source
        assert "int main" not in code.source
        assert code.header.index("void init(void);") < code.header.index("void poweron(void);")

    def test_both_entries(self):
        code = generate_code(load_bundled("onoff"), entry="both")
        assert "void init(void){" in code.source
        assert "int main(void){\n    init();\n\n    return 0;\n}" in code.source

    def test_unknown_entry_style(self):
        with pytest.raises(CodegenError):
            generate_code(load_bundled("onoff"), entry="start")

    def test_probabilistic_chart(self):
        with pytest.raises(CodegenError):
            generate_code(load_bundled("sender_receiver"))

    def test_instrumented_invariant(self):
        code = generate_code(load_text(LAMP), instrument=True)
        assert code.source.startswith("#include <assert.h>\n")
        assert "    assert(!(lamp == On));\n}" in code.source

    def test_uninstrumented_has_no_assert(self):
        code = generate_code(load_text(LAMP))
        assert "assert" not in code.source

    def test_simultaneous_assignments(self):
        code = generate_code(load_text(COUNTER))
        assert "int next_x = y;" in code.source
        assert "int next_y = x;" in code.source
        assert "x = next_x;" in code.source
        assert "int x;\nint y;\n" in code.source

    def test_identifier_clash(self):
        chart = load_text(
            """
            chart Clash {
              event go;
              state go init;
              state Idle;
              on go from go -> Idle;
            }
            """
        )
        code = generate_code(chart)
        assert code.procedures == ["go_2"]
        (warning,) = [d for d in code.diagnostics if d.code == "W160"]
        assert "'go_2'" in warning.message
        assert "void go_2(void){" in code.source

    def test_keyword_state_name(self):
        b = ChartBuilder("K")
        b.basic("int", initial=True)
        b.basic("Other")
        b.transition("int", "e", "Other")
        code = generate_code(b.build())
        assert "enum root_status {int_2, Other} root;" in code.source
        assert [d.code for d in code.diagnostics] == ["W160"]

    def test_transition_comment_emitted_once(self):
        chart = load_text(
            """
            chart Loose {
              event go;
              state A init;
              state B;
              hop: on go from B -> A;
              note "never enabled from the start" on hop;
            }
            """
        )
        code = generate_code(chart)
        assert code.source.count("never enabled from the start") == 1


def _runs(chart, seed, count=5, length=8):
    rng = random.Random(seed)
    events = list(chart.external_events) or list(chart.all_events)
    return [[rng.choice(events) for _ in range(length)] for _ in range(count)]


def _agree(chart, seed):
    form = nested_codegen_form(chart)
    labels = {p.label for p in form.procedures}
    for run in _runs(chart, seed):
        state = form.system.valuation(form.system.initial)
        for event in run:
            if event in labels:
                state = form.step(event, state)
        assert state == dict(replay(chart, run)), run


class TestGeneratedBehaviour:
    """The nested form behind the generated code follows the reference interpreter."""

    def test_onoff(self):
        _agree(load_bundled("onoff"), 0)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(60))
    def test_random(self, seed):
        chart = random_chart(seed, deterministic=True)
        try:
            form = nested_codegen_form(chart)
        except ChartError:
            pytest.skip("generated chart is not well-formed")
        except NormalizationError:
            pytest.skip("chart has conflicting transitions")
        if any(d.code == "W152" for d in form.diagnostics):
            pytest.skip("chart is nondeterministic")
        try:
            _agree(chart, seed)
        except PChartsError:
            pytest.skip("chart is nondeterministic for the interpreter")
