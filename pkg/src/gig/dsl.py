"""Text format for GDD rule files.

::

    rule r1 on Q {
      LHS: edit(y.Name, y2.Name) <= 1;
      RHS: eq(y.Genre, y2.Genre);
    }

Constraints are ``edit(a, b) <= k``, ``abs(a, b) <= k``, ``eq(a, b)``,
``eq(v.eid, "C5")``, ``eq(v.eid, w.eid)``, ``rel(v, "rela", w)`` and
``rel(v, "rela", "C5")``.  Operands are ``var.attr`` (backquote odd
attribute names: ``y.`list price```), quoted constants, or ``*``.  A bare
``LHS: ...; RHS: ...;`` block without the ``rule`` header is also accepted.
"""
from __future__ import annotations

import json
import re

from .distance import ABS, EDIT, EID, EXACT, REL
from .gdd import GDD, Cell, Const, DistanceConstraint, EidRef, RelRef, Wild

_TOKEN = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<quoted>`[^`]*`)
  | (?P<number>\d+(?:\.\d+)?(?![A-Za-z_]))
  | (?P<le><=|≤)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_\-']*)
  | (?P<punct>[{}();:,.*=])
""", re.VERBOSE)

_PLAIN = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-']*$")


class RuleSyntaxError(ValueError):
    def __init__(self, msg, line, col):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line, self.col = line, col


def _tokenize(text):
    pos, line, line_start = 0, 1, 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), line, pos - line_start + 1))
        chunk = m.group()
        if "\n" in chunk:
            line += chunk.count("\n")
            line_start = m.start() + chunk.rindex("\n") + 1
        pos = m.end()
    out.append(("eof", "", line, pos - line_start + 1))
    return out


class _Parser:
    def __init__(self, text, columns=None, variables=None, scope="Q"):
        self.toks = _tokenize(text)
        self.i = 0
        self.columns = set(map(tuple, columns)) if columns is not None else None
        self.variables = set(variables) if variables is not None else None
        if self.variables is None and self.columns is not None:
            self.variables = {v for v, _ in self.columns}
        self.scope = scope

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        raise RuleSyntaxError(msg, tok[2], tok[3])

    def take(self, kind=None, value=None):
        tok = self.tok
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            self.error(f"expected {want!r}, found {tok[1] or 'end of input'!r}")
        self.i += 1
        return tok

    def at(self, value):
        return self.tok[1] == value and self.tok[0] in ("ident", "punct")

    def rules(self):
        out = []
        while self.tok[0] != "eof":
            if self.at("rule"):
                self.take()
                name = self.take("ident")[1]
                self.take("ident", "on")
                scope = self.take("ident")[1]
                self.take("punct", "{")
                lhs, rhs = self.body(closing="}")
                self.take("punct", "}")
            else:
                name, scope = f"r{len(out) + 1}", self.scope
                lhs, rhs = self.body(closing=None)
            out.append(GDD(lhs, rhs, scope, name))
        return out

    def body(self, closing):
        start = self.tok
        self.take("ident", "LHS")
        self.take("punct", ":")
        lhs = self.clist(stop=("RHS",))
        self.take("ident", "RHS")
        self.take("punct", ":")
        rhs = self.clist(stop=(closing, "rule", "LHS") if closing else ("rule", "LHS"))
        if not rhs:
            self.error("RHS needs at least one constraint", start)
        return lhs, rhs

    def clist(self, stop):
        out = []
        while True:
            while self.at(";"):
                self.take()
            if self.tok[0] == "eof" or any(self.at(s) for s in stop if s):
                return out
            out.append(self.constraint())
            if not (self.at(";") or self.tok[0] == "eof" or any(self.at(s) for s in stop if s)):
                self.error(f"expected ';', found {self.tok[1]!r}")

    def constraint(self):
        head = self.take("ident")
        fn = head[1]
        if fn not in ("edit", "abs", "eq", "rel"):
            self.error(f"unknown constraint {fn!r}", head)
        self.take("punct", "(")
        if fn == "rel":
            var = self.variable()
            self.take("punct", ",")
            rela = json.loads(self.take("string")[1])
            self.take("punct", ",")
            if self.tok[0] == "string":
                right = Const(json.loads(self.take()[1]))
            else:
                right = RelRef(self.variable(), rela)
            self.take("punct", ")")
            self.optional_eq_zero()
            return DistanceConstraint(REL, RelRef(var, rela), right)
        left = self.operand()
        self.take("punct", ",")
        right = self.operand()
        self.take("punct", ")")
        if fn in ("edit", "abs"):
            if isinstance(left, EidRef) or isinstance(right, EidRef):
                self.error(f"{fn} cannot compare entity ids", head)
            self.take("le")
            k = float(self.take("number")[1])
            return DistanceConstraint(EDIT if fn == "edit" else ABS, left, right, "<=", k)
        self.optional_eq_zero()
        if isinstance(left, EidRef):
            if not isinstance(right, (EidRef, Const)):
                self.error("eid equality compares with another v.eid or a quoted id", head)
            return DistanceConstraint(EID, left, right)
        if isinstance(right, EidRef):
            self.error("eid equality needs v.eid on the left", head)
        if not isinstance(left, Cell):
            self.error("left operand must be var.attr", head)
        return DistanceConstraint(EXACT, left, right)

    def optional_eq_zero(self):
        if self.at("="):
            self.take()
            if self.take("number")[1] not in ("0", "0.0"):
                self.error("equality constraints are '= 0'")

    def variable(self):
        tok = self.take("ident")
        if self.variables is not None and tok[1] not in self.variables:
            self.error(f"unknown variable {tok[1]!r}", tok)
        return tok[1]

    def operand(self):
        if self.tok[0] == "string":
            return Const(json.loads(self.take()[1]))
        if self.at("*"):
            self.take()
            return Wild()
        var = self.variable()
        self.take("punct", ".")
        attr_tok = self.tok
        if attr_tok[0] == "quoted":
            attr = self.take()[1][1:-1]
        else:
            attr = self.take("ident")[1]
            if attr == "eid":
                return EidRef(var)
        if self.columns is not None and (var, attr) not in self.columns:
            self.error(f"unknown attribute {var}.{attr}", attr_tok)
        return Cell(var, attr)


def parse_rules(text: str, columns=None, variables=None, scope: str = "Q") -> list[GDD]:
    """Parse rule text; optionally validate operands against table ``columns``."""
    return _Parser(text, columns, variables, scope).rules()


def _attr(a: str) -> str:
    return a if _PLAIN.match(a) and a != "eid" else f"`{a}`"


def _operand(o) -> str:
    if isinstance(o, Cell):
        return f"{o.var}.{_attr(o.attr)}"
    if isinstance(o, EidRef):
        return f"{o.var}.eid"
    if isinstance(o, Const):
        return json.dumps(o.value, ensure_ascii=False)
    if isinstance(o, Wild):
        return "*"
    raise TypeError(o)


def _num(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def render_constraint(c: DistanceConstraint) -> str:
    if c.fn == REL:
        right = _operand(c.right) if isinstance(c.right, Const) else c.right.var
        return f"rel({c.left.var}, {json.dumps(c.left.rela, ensure_ascii=False)}, {right})"
    args = f"{_operand(c.left)}, {_operand(c.right)}"
    if c.fn in (EXACT, EID):
        return f"eq({args})"
    return f"{c.fn}({args}) <= {_num(c.threshold)}"


def render_rules(rules) -> str:
    blocks = []
    for r in rules:
        lhs = "; ".join(c.render() for c in r.lhs)
        rhs = "; ".join(c.render() for c in r.rhs)
        blocks.append(f"rule {r.name} on {r.scope} {{\n  LHS: {lhs};\n  RHS: {rhs};\n}}\n")
    return "\n".join(blocks)
