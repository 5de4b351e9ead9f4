"""
C99 code generation for deterministic charts.

States become enumeration variables (one per XOR scope) and events become
procedures holding the nested conditionals of
:func:`pcharts.normalizer.nested_codegen_form`. Comments of the chart are
carried into the code: general comments at the top, state comments next to
the enumeration declaring the state, transition comments before the
procedure of their event.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import jinja2

from .chart import Chart, CommentAnchor, EventTrigger, global_invariant, sanitize
from .exceptions import CodegenError
from .expr import TRUE, Compare, Expr, Printer, Sym, Var, variables
from .logging import get_logger, log_performance
from .models import Diagnostic, Severity
from .normalizer import CodeLeaf, CodeSwitch, CodeTree, CodegenForm, VarRole, lower_predicate, nested_codegen_form

logger = get_logger(__name__)

ENTRY_STYLES = ("main", "init", "both")
INDENT = "    "

C_KEYWORDS = {
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double",
    "else", "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long",
    "register", "restrict", "return", "short", "signed", "sizeof", "static", "struct",
    "switch", "typedef", "union", "unsigned", "void", "volatile", "while", "_Bool",
    "main", "init", "assert",
}

SOURCE_TEMPLATE = jinja2.Template(
    """\
{% for line in general %}// {{ line }}
{% endfor %}{% if general %}
{% endif %}{% if instrument %}#include <assert.h>

{% endif %}/* Variables */
{% for enum in enums %}enum {{ enum.var }}_status {{ '{' }}{{ enum['values'] | join(', ') }}{{ '}' }} {{ enum.var }};
{% for line in enum.comments %}// {{ line }}
{% endfor %}{% endfor %}{% for line in loose %}// {{ line }}
{% endfor %}{% for var in data %}int {{ var }};
{% endfor %}
{{ blocks | join('\n\n') }}
""",
    keep_trailing_newline=True,
)

FUNCTION_TEMPLATE = jinja2.Template(
    """\
{% for line in comments %}// {{ line }}
{% endfor %}{{ signature }}{{ '{' }}
{% for line in body %}{{ indent ~ line if line else '' }}
{% endfor %}{{ '}' }}""",
)

HEADER_TEMPLATE = jinja2.Template(
    """\
#ifndef {{ guard }}
#define {{ guard }}

{% for proto in prototypes %}{{ proto }};
{% endfor %}
#endif
""",
    keep_trailing_newline=True,
)


class CPrinter(Printer):
    and_op = " && "
    or_op = " || "
    eq_op = "=="
    parenthesize_compare = True

    def __init__(self, enumerators: Dict[Tuple[str, int], str]):
        self.enumerators = enumerators

    def boolean(self, value: bool) -> str:
        return "1" if value else "0"

    def symbol(self, sym: Sym) -> str:
        return self.enumerators[(sym.var, sym.value)]

    def minimum(self, left: str, right: str) -> str:
        return f"(({left}) < ({right}) ? ({left}) : ({right}))"

    def implication(self, left: str, right: str) -> str:
        return f"!({left}) || {right}"


@dataclass
class GeneratedCode:
    source: str
    header: Optional[str] = None
    procedures: List[str] = field(default_factory=list)
    diagnostics: List[Diagnostic] = field(default_factory=list)


def _comment_lines(text: str) -> List[str]:
    return [line.rstrip() for line in text.splitlines()] or [""]


class _Names:
    """C identifier allocation; clashes get numeric suffixes and a warning."""

    def __init__(self, diagnostics: List[Diagnostic]):
        self.taken: Set[str] = set(C_KEYWORDS)
        self.diagnostics = diagnostics

    def claim(self, wanted: str, what: str) -> str:
        base = sanitize(wanted) or "_"
        name, serial = base, 2
        while name in self.taken:
            name = f"{base}_{serial}"
            serial += 1
        if name != base:
            self.diagnostics.append(
                Diagnostic(
                    severity=Severity.WARNING,
                    code="W160",
                    message=f"{what} '{wanted}' is emitted as '{name}' to avoid an identifier clash",
                    subject=wanted,
                )
            )
        self.taken.add(name)
        return name


class _Generator:
    def __init__(self, chart: Chart, form: CodegenForm, entry: str, instrument: bool):
        self.chart = chart
        self.form = form
        self.system = form.system
        self.entry = entry
        self.instrument = instrument
        self.diagnostics: List[Diagnostic] = list(form.diagnostics)
        names = _Names(self.diagnostics)
        scope = [v for v in self.system.variables if v.role == VarRole.SCOPE]
        data = [v for v in self.system.variables if v.role == VarRole.DATA]
        for v in scope + data:
            if names.claim(v.name, "variable") != v.name:
                raise CodegenError(f"variable '{v.name}' is not a usable C identifier", {"variable": v.name})
        self.enumerators: Dict[Tuple[str, int], str] = {}
        for v in scope:
            for i, label in enumerate(v.labels):
                self.enumerators[(v.name, i)] = names.claim(label, "state")
        self.procedure_names = {p.label: names.claim(p.label, "procedure") for p in form.procedures}
        self.printer = CPrinter(self.enumerators)
        self.scope = scope
        self.data = data
        self.emitted: Set[Tuple[str, str]] = set()

    # -- comments ---------------------------------------------------------

    def _state_comments(self) -> Tuple[List[Dict[str, object]], List[str]]:
        chart = self.chart
        placed: Set[str] = set()
        enums = []
        for v in self.scope:
            node = chart.nodes[v.node]  # type: ignore[index]
            comments = []
            for child in node.children:
                for text in chart.comments_for(CommentAnchor.STATE, child):
                    lines = _comment_lines(text)
                    comments.append(f"{chart.nodes[child].name} - {lines[0]}")
                    comments.extend(lines[1:])
                placed.add(child)
            enums.append(
                {
                    "var": v.name,
                    "values": [self.enumerators[(v.name, i)] for i in range(len(v.labels))],
                    "comments": comments,
                }
            )
        loose = []
        for node_id in chart.nodes:
            if node_id in placed:
                continue
            for text in chart.comments_for(CommentAnchor.STATE, node_id):
                lines = _comment_lines(text)
                loose.append(f"{chart.nodes[node_id].name} - {lines[0]}")
                loose.extend(lines[1:])
        return enums, loose

    def _transition_comments(self, transitions: Sequence[str]) -> List[str]:
        out = []
        for tid in transitions:
            for text in self.chart.comments_for(CommentAnchor.TRANSITION, tid):
                if (tid, text) in self.emitted:
                    continue
                self.emitted.add((tid, text))
                out.extend(_comment_lines(text))
        return out

    # -- bodies -----------------------------------------------------------

    def _assignments(self, assignments: Sequence[Tuple[str, Expr]]) -> List[str]:
        written: Set[str] = set()
        simultaneous = False
        for var, value in assignments:
            if variables(value) & written:
                simultaneous = True
            written.add(var)
        if not simultaneous:
            return [f"{var} = {self.printer.render(value)};" for var, value in assignments]
        lines = [f"int next_{var} = {self.printer.render(value)};" for var, value in assignments]
        lines += [f"{var} = next_{var};" for var, _ in assignments]
        return lines

    def _tree(self, tree: CodeTree) -> List[str]:
        lines: List[str] = []
        if isinstance(tree, CodeSwitch):
            for i, (value, label, sub) in enumerate(tree.branches):
                test = self.printer.render(Compare("=", Var(tree.var), Sym(tree.var, value, label)))
                lines.append(f"{'if' if i == 0 else '} else if'} ({test}) {{")
                lines += [INDENT + line for line in self._tree(sub)]
            if tree.branches:
                lines.append("}")
            return lines
        return self._leaf(tree)

    def _leaf(self, leaf: CodeLeaf) -> List[str]:
        cases = leaf.cases
        if len(cases) == 1 and cases[0].guard == TRUE:
            return self._assignments(cases[0].assignments)
        lines: List[str] = []
        for i, case in enumerate(cases):
            if case.guard == TRUE:
                lines.append("} else {" if i else "{")
            else:
                test = self.printer.render(case.guard)
                lines.append(f"{'if' if i == 0 else '} else if'} ({test}) {{")
            lines += [INDENT + line for line in self._assignments(case.assignments)]
            if case.guard == TRUE:
                break
        if cases:
            lines.append("}")
        return lines

    def _initialization(self) -> List[str]:
        lines = ["/* Initialization */"]
        for v in self.scope:
            lines.append(f"{v.name} = {self.enumerators[(v.name, v.initial)]};")
        for v in self.data:
            lines.append(f"{v.name} = {v.initial};")
        return lines

    def _invariant(self) -> Optional[str]:
        if not self.instrument:
            return None
        predicate = lower_predicate(self.system, global_invariant(self.chart))
        if predicate == TRUE:
            return None
        return f"assert({self.printer.render(predicate)});"

    def render(self) -> GeneratedCode:
        chart = self.chart
        general = [line for text in chart.comments_for(CommentAnchor.GENERAL) for line in _comment_lines(text)]
        enums, loose = self._state_comments()

        blocks: List[str] = []
        prototypes: List[str] = []
        init_body = self._initialization()
        if self.entry in ("init", "both"):
            blocks.append(FUNCTION_TEMPLATE.render(signature="void init(void)", body=init_body, comments=[], indent=INDENT))
            prototypes.append("void init(void)")
        if self.entry == "main":
            blocks.append(
                FUNCTION_TEMPLATE.render(
                    signature="int main(void)", body=init_body + ["", "return 0;"], comments=[], indent=INDENT
                )
            )
        elif self.entry == "both":
            blocks.append(
                FUNCTION_TEMPLATE.render(
                    signature="int main(void)", body=["init();", "", "return 0;"], comments=[], indent=INDENT
                )
            )

        check = self._invariant()
        for proc in self.form.procedures:
            related = [
                t.id
                for t in chart.transitions
                if (isinstance(t.trigger, EventTrigger) and t.trigger.event in (proc.label, *proc.inlined_events))
                or (t.timed and chart.trigger_label(t) == proc.label)
            ]
            ordered = list(proc.transitions) + [t for t in related if t not in proc.transitions]
            name = self.procedure_names[proc.label]
            body = self._tree(proc.tree)
            if check:
                body.append(check)
            blocks.append(
                FUNCTION_TEMPLATE.render(
                    signature=f"void {name}(void)",
                    body=body,
                    comments=self._transition_comments(ordered),
                    indent=INDENT,
                )
            )
            prototypes.append(f"void {name}(void)")

        for t in chart.transitions:
            for text in chart.comments_for(CommentAnchor.TRANSITION, t.id):
                if (t.id, text) not in self.emitted:
                    lines = _comment_lines(text)
                    loose.append(f"{t.id} - {lines[0]}")
                    loose.extend(lines[1:])

        source = SOURCE_TEMPLATE.render(
            general=general,
            instrument=check is not None,
            enums=enums,
            loose=loose,
            data=[v.name for v in self.data],
            blocks=blocks,
        )
        header = HEADER_TEMPLATE.render(guard=f"{sanitize(chart.name).upper()}_H", prototypes=prototypes)
        return GeneratedCode(
            source=source,
            header=header,
            procedures=[self.procedure_names[p.label] for p in self.form.procedures],
            diagnostics=self.diagnostics,
        )


@log_performance(threshold_ms=1000)
def generate_code(chart: Chart, entry: str = "main", instrument: bool = False) -> GeneratedCode:
    """C source (and header) for a chart without probabilistic transitions."""
    if entry not in ENTRY_STYLES:
        raise CodegenError(f"unknown entry style '{entry}'", {"choices": list(ENTRY_STYLES)})
    form = nested_codegen_form(chart)
    code = _Generator(chart, form, entry, instrument).render()
    logger.info("Generated C for {}: {} procedures", chart.name, len(code.procedures))
    return code
