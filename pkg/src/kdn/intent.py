"""Declarative intent language: a tiny grammar for objectives and bounds.

    minimize mean_delay
    delay(A->B) <= 0.01 s
    util(A_u01) < 0.8

One objective (mean_delay or max_delay), any number of per-pair delay bounds
(ms or s) and per-link utilization bounds. '#' starts a line comment. Parsing
validates every identifier against the topology, so typos surface immediately
rather than as silently unconstrained searches.
"""

import re
from dataclasses import dataclass

from .errors import (
    DuplicateObjectiveError,
    IntentSyntaxError,
    UnknownIdentifierError,
)

PENALTY_WEIGHT = 1e6

_TOKEN_RE = re.compile(
    r"""(?P<ws>[ \t]+)
      | (?P<comment>\#[^\n]*)
      | (?P<arrow>->)
      | (?P<le><=)
      | (?P<lt><)
      | (?P<lpar>\()
      | (?P<rpar>\))
      | (?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Constraint:
    kind: str          # pair_delay | link_util
    subject: tuple     # (s, d) pair or (link_id,)
    bound: float       # seconds or utilization ratio
    strict: bool       # True for '<', False for '<='


@dataclass(frozen=True)
class Intent:
    objective: str     # mean_delay | max_delay
    constraints: tuple


@dataclass(frozen=True)
class _Tok:
    type: str
    value: str
    line: int
    col: int


def _tokenize(text):
    toks = []
    for ln, line in enumerate(text.splitlines(), start=1):
        pos = 0
        while pos < len(line):
            m = _TOKEN_RE.match(line, pos)
            if m is None:
                raise IntentSyntaxError(ln, pos + 1, f"unexpected character {line[pos]!r}")
            kind = m.lastgroup
            if kind == "comment":
                break
            if kind != "ws":
                toks.append(_Tok(kind, m.group(), ln, pos + 1))
            pos = m.end()
    return toks


class _Parser:
    def __init__(self, toks, topo):
        self.toks = toks
        self.i = 0
        self.topo = topo

    def _peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def _next(self, want_type=None, want_value=None, what=""):
        tok = self._peek()
        if tok is None:
            last = self.toks[-1] if self.toks else _Tok("", "", 1, 1)
            raise IntentSyntaxError(last.line, last.col + len(last.value),
                                    f"unexpected end of input, expected {what}")
        if want_type and tok.type != want_type:
            raise IntentSyntaxError(tok.line, tok.col,
                                    f"expected {what}, got {tok.value!r}")
        if want_value and tok.value != want_value:
            raise IntentSyntaxError(tok.line, tok.col,
                                    f"expected {want_value!r}, got {tok.value!r}")
        self.i += 1
        return tok

    def parse(self):
        self._next("ident", "minimize", "'minimize'")
        metric = self._next("ident", what="'mean_delay' or 'max_delay'")
        if metric.value not in ("mean_delay", "max_delay"):
            raise IntentSyntaxError(metric.line, metric.col,
                                    f"unknown objective metric {metric.value!r}")
        constraints = []
        while self._peek() is not None:
            constraints.append(self._constraint())
        return Intent(objective=metric.value, constraints=tuple(constraints))

    def _constraint(self):
        head = self._next("ident", what="'delay' or 'util'")
        if head.value == "minimize":
            raise DuplicateObjectiveError(head.line, head.col,
                                          "only one objective is allowed")
        if head.value == "delay":
            return self._pair_delay()
        if head.value == "util":
            return self._link_util()
        raise IntentSyntaxError(head.line, head.col,
                                f"expected 'delay' or 'util', got {head.value!r}")

    def _pair_delay(self):
        self._next("lpar", what="'('")
        src = self._next("ident", what="overlay node id")
        self._check_overlay(src)
        self._next("arrow", what="'->'")
        dst = self._next("ident", what="overlay node id")
        self._check_overlay(dst)
        if dst.value == src.value:
            raise IntentSyntaxError(dst.line, dst.col, "pair endpoints must differ")
        self._next("rpar", what="')'")
        strict = self._relop()
        num = self._next("number", what="a number")
        unit = self._next("ident", what="'ms' or 's'")
        if unit.value not in ("ms", "s"):
            raise IntentSyntaxError(unit.line, unit.col,
                                    f"expected 'ms' or 's', got {unit.value!r}")
        bound = float(num.value) * (1e-3 if unit.value == "ms" else 1.0)
        if bound <= 0:
            raise IntentSyntaxError(num.line, num.col, "delay bound must be > 0")
        return Constraint("pair_delay", (src.value, dst.value), bound, strict)

    def _link_util(self):
        self._next("lpar", what="'('")
        link = self._next("ident", what="link id")
        if self.topo is not None and link.value not in self.topo.link_index:
            raise UnknownIdentifierError(link.line, link.col,
                                         f"unknown link {link.value!r}")
        self._next("rpar", what="')'")
        strict = self._relop()
        num = self._next("number", what="a number")
        bound = float(num.value)
        if not 0 < bound <= 1:
            raise IntentSyntaxError(num.line, num.col,
                                    "utilization bound must lie in (0, 1]")
        return Constraint("link_util", (link.value,), bound, strict)

    def _relop(self):
        tok = self._peek()
        if tok is not None and tok.type in ("lt", "le"):
            self.i += 1
            return tok.type == "lt"
        where = tok or (self.toks[-1] if self.toks else _Tok("", "", 1, 1))
        raise IntentSyntaxError(where.line, where.col, "expected '<' or '<='")

    def _check_overlay(self, tok):
        if self.topo is not None and tok.value not in self.topo.overlay_nodes:
            raise UnknownIdentifierError(tok.line, tok.col,
                                         f"unknown overlay node {tok.value!r}")


def parse(text, topo=None):
    """Parse intent text; identifiers are checked against topo when given."""
    toks = _tokenize(text)
    if not toks:
        raise IntentSyntaxError(1, 1, "empty intent")
    return _Parser(toks, topo).parse()


def pretty(intent):
    """Canonical text form; parsing it back yields an equal AST.

    Delay bounds are printed in seconds with full precision so the
    pretty-print/parse cycle is exact.
    """
    lines = [f"minimize {intent.objective}"]
    for c in intent.constraints:
        op = "<" if c.strict else "<="
        if c.kind == "pair_delay":
            s, d = c.subject
            lines.append(f"delay({s}->{d}) {op} {c.bound!r} s")
        else:
            lines.append(f"util({c.subject[0]}) {op} {c.bound!r}")
    return "\n".join(lines) + "\n"


def load(path, topo=None):
    with open(path) as fh:
        return parse(fh.read(), topo)


def save(path, intent):
    with open(path, "w") as fh:
        fh.write(pretty(intent))


@dataclass
class ObjectiveSpec:
    """Scalar objective: base metric plus quadratic hinge penalties."""

    intent: Intent
    penalty_weight: float = PENALTY_WEIGHT

    @property
    def needs_utils(self):
        return any(c.kind == "link_util" for c in self.intent.constraints)

    def base(self, delays):
        return delays.mean() if self.intent.objective == "mean_delay" else delays.max()

    def penalty(self, delays, util_report=None):
        total = 0.0
        for c in self.intent.constraints:
            if c.kind == "pair_delay":
                metric = delays[c.subject]
            else:
                if util_report is None:
                    raise ValueError("utilization constraints need a link-load report")
                metric = util_report.rho(c.subject[0])
            total += self.penalty_weight * max(0.0, metric - c.bound) ** 2
        return total

    def value(self, delays, util_report=None):
        return self.base(delays) + self.penalty(delays, util_report)


def render(intent):
    """Turn an Intent into the scalar objective the optimizer searches on."""
    return ObjectiveSpec(intent=intent)
