"""Source language of components: syntax trees, concrete syntax, checking, linking.

A program and a context are both ``ComponentSet`` values; plugging one into
the other is ``link``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Union

BINOPS = ("add", "sub", "mul", "eq", "leq")
_OP_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "eq": "==", "leq": "<="}
_SYMBOL_OP = {v: k for k, v in _OP_SYMBOL.items()}

INT_MIN = -(1 << 63)
INT_MAX = (1 << 63) - 1


# --------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True, slots=True)
class Num:
    value: int


@dataclass(frozen=True, slots=True)
class Arg:
    pass


@dataclass(frozen=True, slots=True)
class Exit:
    pass


@dataclass(frozen=True, slots=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True, slots=True)
class Seq:
    first: "Expr"
    second: "Expr"


@dataclass(frozen=True, slots=True)
class If:
    cond: "Expr"
    then: "Expr"
    else_: "Expr"


@dataclass(frozen=True, slots=True)
class BufRef:
    name: str


@dataclass(frozen=True, slots=True)
class Load:
    addr: "Expr"


@dataclass(frozen=True, slots=True)
class Store:
    addr: "Expr"
    value: "Expr"


@dataclass(frozen=True, slots=True)
class CallExpr:
    comp: str
    proc: str
    arg: "Expr"


Expr = Union[Num, Arg, Exit, BinOp, Seq, If, BufRef, Load, Store, CallExpr]


def index(buf: str, e: Expr) -> Load:
    """``buf[e]``, i.e. ``!(&buf + e)``."""
    return Load(BinOp("add", BufRef(buf), e))


def index_store(buf: str, e: Expr, v: Expr) -> Store:
    """``buf[e] := v``, i.e. ``(&buf + e) := v``."""
    return Store(BinOp("add", BufRef(buf), e), v)


def subexprs(e: Expr) -> Iterator[Expr]:
    """Pre-order walk over ``e`` and all its subexpressions."""
    stack = [e]
    while stack:
        e = stack.pop()
        yield e
        if isinstance(e, (BinOp,)):
            stack += (e.right, e.left)
        elif isinstance(e, Seq):
            stack += (e.second, e.first)
        elif isinstance(e, If):
            stack += (e.else_, e.then, e.cond)
        elif isinstance(e, Load):
            stack.append(e.addr)
        elif isinstance(e, Store):
            stack += (e.value, e.addr)
        elif isinstance(e, CallExpr):
            stack.append(e.arg)


# --------------------------------------------------------------------------
# Components


@dataclass(frozen=True)
class Procedure:
    exported: bool
    body: Expr


@dataclass(frozen=True)
class Component:
    name: str
    imports: tuple[tuple[str, str], ...] = ()
    buffers: tuple[tuple[str, int], ...] = ()
    procedures: Mapping[str, Procedure] = field(default_factory=dict)

    def buffer_index(self, name: str) -> int:
        for i, (b, _) in enumerate(self.buffers):
            if b == name:
                return i
        raise KeyError(name)

    @property
    def exports(self) -> frozenset[str]:
        return frozenset(p for p, proc in self.procedures.items() if proc.exported)


@dataclass(frozen=True)
class ComponentSet:
    components: Mapping[str, Component] = field(default_factory=dict)

    @classmethod
    def of(cls, *comps: Component) -> "ComponentSet":
        out: dict[str, Component] = {}
        for c in comps:
            if c.name in out:
                raise LinkError(f"duplicate component {c.name}")
            out[c.name] = c
        return cls(out)

    def __iter__(self):
        return iter(self.components.values())

    def __len__(self):
        return len(self.components)

    def __contains__(self, name):
        return name in self.components

    def __getitem__(self, name) -> Component:
        return self.components[name]

    def names(self) -> frozenset[str]:
        return frozenset(self.components)

    def replace(self, comp: Component) -> "ComponentSet":
        """Return a copy with ``comp`` substituted for the component of the same name."""
        comps = dict(self.components)
        comps[comp.name] = comp
        return ComponentSet(comps)

    def without(self, names) -> "ComponentSet":
        return ComponentSet({n: c for n, c in self.components.items() if n not in names})


# --------------------------------------------------------------------------
# Interfaces


@dataclass(frozen=True)
class ComponentInterface:
    exports: frozenset[str]
    imports: frozenset[tuple[str, str]]


Interface = dict  # component name -> ComponentInterface


def interface_of(s: ComponentSet) -> dict[str, ComponentInterface]:
    return {
        c.name: ComponentInterface(c.exports, frozenset(c.imports)) for c in s
    }


# --------------------------------------------------------------------------
# Well-formedness


@dataclass
class WellFormednessReport:
    errors: list[str] = field(default_factory=list)
    open: list[tuple[str, str, str]] = field(default_factory=list)  # (importer, comp, proc)

    @property
    def ok(self) -> bool:
        return not self.errors

    def __bool__(self):
        # truthy when there is something to report
        return bool(self.errors or self.open)


def _check_component(c: Component, errors: list[str]) -> None:
    seen = set()
    for b, n in c.buffers:
        if b in seen:
            errors.append(f"{c.name}: duplicate buffer {b}")
        seen.add(b)
        if not isinstance(n, int) or n < 1:
            errors.append(f"{c.name}: buffer {b} has non-positive length {n}")
    seen_imp = set()
    for ic, ip in c.imports:
        if ic == c.name:
            errors.append(f"{c.name}: imports its own procedure {ic}.{ip}")
        if (ic, ip) in seen_imp:
            errors.append(f"{c.name}: duplicate import {ic}.{ip}")
        seen_imp.add((ic, ip))
    buffers = {b for b, _ in c.buffers}
    for pname, proc in c.procedures.items():
        for e in subexprs(proc.body):
            if isinstance(e, BufRef) and e.name not in buffers:
                errors.append(f"{c.name}.{pname}: unknown buffer {e.name}")
            elif isinstance(e, CallExpr):
                if e.comp == c.name:
                    if e.proc not in c.procedures:
                        errors.append(f"{c.name}.{pname}: call to unknown procedure {e.comp}.{e.proc}")
                elif (e.comp, e.proc) not in seen_imp:
                    errors.append(f"{c.name}.{pname}: call to {e.comp}.{e.proc} which is not imported")
            elif isinstance(e, Num) and not INT_MIN <= e.value <= INT_MAX:
                errors.append(f"{c.name}.{pname}: literal {e.value} out of 64-bit range")


def check_well_formed(s: ComponentSet) -> WellFormednessReport:
    rep = WellFormednessReport()
    for key, c in s.components.items():
        if key != c.name:
            rep.errors.append(f"component stored under {key!r} is named {c.name!r}")
        _check_component(c, rep.errors)
        for ic, ip in c.imports:
            if ic == c.name:
                continue
            if ic in s.components:
                target = s.components[ic]
                proc = target.procedures.get(ip)
                if proc is None or not proc.exported:
                    rep.errors.append(f"{c.name}: imports {ic}.{ip} which {ic} does not export")
            else:
                rep.open.append((c.name, ic, ip))
    if "Main" in s.components:
        main = s.components["Main"].procedures.get("main")
        if main is None or not main.exported:
            rep.errors.append("Main does not export procedure main")
    return rep


def is_closed(s: ComponentSet) -> bool:
    rep = check_well_formed(s)
    return rep.ok and not rep.open and "Main" in s


# --------------------------------------------------------------------------
# Linking


class LinkError(ValueError):
    pass


def link(p: ComponentSet, c: ComponentSet) -> ComponentSet:
    clash = p.names() & c.names()
    if clash:
        raise LinkError(f"components defined on both sides: {', '.join(sorted(clash))}")
    return ComponentSet({**p.components, **c.components})


# --------------------------------------------------------------------------
# Concrete syntax

KEYWORDS = {"component", "import", "buffer", "export", "proc", "arg", "exit", "if", "then", "else"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<nat>[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>:=|==|<=|[{}\[\]().;=+\-*!&])
    """,
    re.VERBOSE,
)


class ParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


@dataclass(frozen=True, slots=True)
class _Tok:
    kind: str  # nat | ident | kw | sym | eof
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ident":
            word = m.group()
            toks.append(_Tok("kw" if word in KEYWORDS else "ident", word, line, col))
        elif kind in ("nat", "sym"):
            toks.append(_Tok(kind, m.group(), line, col))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        # Load nodes written as b[e], by id; values keep them alive so ids stay unique
        self._sugar: dict[int, Expr] = {}

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _peek(self, k=1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def _error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def _at(self, text: str) -> bool:
        return self.tok.kind in ("sym", "kw") and self.tok.text == text

    def _eat(self, text: str) -> _Tok:
        if not self._at(text):
            found = self.tok.text or "end of input"
            raise self._error(f"expected {text!r}, found {found!r}")
        tok = self.tok
        self.i += 1
        return tok

    def _ident(self) -> _Tok:
        if self.tok.kind != "ident":
            found = self.tok.text or "end of input"
            raise self._error(f"expected identifier, found {found!r}")
        tok = self.tok
        self.i += 1
        return tok

    def _nat(self) -> int:
        if self.tok.kind != "nat":
            raise self._error(f"expected number, found {self.tok.text or 'end of input'!r}")
        tok = self.tok
        self.i += 1
        v = int(tok.text)
        if v > INT_MAX:
            raise self._error(f"literal {v} out of 64-bit range", tok)
        return v

    # program / component / item

    def program(self) -> ComponentSet:
        comps: dict[str, Component] = {}
        while self.tok.kind != "eof":
            start = self.tok
            c = self.component()
            if c.name in comps:
                raise self._error(f"duplicate component {c.name}", start)
            comps[c.name] = c
        return ComponentSet(comps)

    def component(self) -> Component:
        self._eat("component")
        name = self._ident().text
        self._eat("{")
        imports: list[tuple[str, str]] = []
        buffers: list[tuple[str, int]] = []
        procs: dict[str, Procedure] = {}
        while not self._at("}"):
            tok = self.tok
            if self._at("import"):
                self.i += 1
                ic = self._ident().text
                self._eat(".")
                ip = self._ident().text
                self._eat(";")
                if (ic, ip) in imports:
                    raise self._error(f"duplicate import {ic}.{ip}", tok)
                imports.append((ic, ip))
            elif self._at("buffer"):
                self.i += 1
                b = self._ident().text
                self._eat("[")
                n = self._nat()
                self._eat("]")
                self._eat(";")
                if any(b == x for x, _ in buffers):
                    raise self._error(f"duplicate buffer {b}", tok)
                if n < 1:
                    raise self._error(f"buffer {b} must have positive length", tok)
                buffers.append((b, n))
            elif self._at("export") or self._at("proc"):
                exported = self._at("export")
                if exported:
                    self.i += 1
                self._eat("proc")
                p = self._ident().text
                self._eat("(")
                self._eat(")")
                self._eat("=")
                body = self.expr()
                if p in procs:
                    raise self._error(f"duplicate procedure {p}", tok)
                procs[p] = Procedure(exported, body)
            else:
                raise self._error(f"expected component item, found {self.tok.text or 'end of input'!r}")
        self._eat("}")
        return Component(name, tuple(imports), tuple(buffers), procs)

    # expressions, loosest to tightest

    def expr(self) -> Expr:
        first = self.assign()
        if self._at(";"):
            self.i += 1
            return Seq(first, self.expr())
        return first

    def assign(self) -> Expr:
        lhs = self.cmp()
        if self._at(":="):
            self.i += 1
            rhs = self.assign()
            if id(lhs) in self._sugar:
                return Store(lhs.addr, rhs)
            return Store(lhs, rhs)
        return lhs

    def cmp(self) -> Expr:
        e = self.additive()
        while self.tok.kind == "sym" and self.tok.text in ("==", "<="):
            op = _SYMBOL_OP[self.tok.text]
            self.i += 1
            e = BinOp(op, e, self.additive())
        return e

    def additive(self) -> Expr:
        e = self.mult()
        while self.tok.kind == "sym" and self.tok.text in ("+", "-"):
            op = _SYMBOL_OP[self.tok.text]
            self.i += 1
            e = BinOp(op, e, self.mult())
        return e

    def mult(self) -> Expr:
        e = self.unary()
        while self._at("*"):
            self.i += 1
            e = BinOp("mul", e, self.unary())
        return e

    def unary(self) -> Expr:
        if self._at("!"):
            self.i += 1
            return Load(self.unary())
        if self._at("&"):
            self.i += 1
            return BufRef(self._ident().text)
        return self.primary()

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "nat":
            return Num(self._nat())
        if self._at("arg"):
            self.i += 1
            return Arg()
        if self._at("exit"):
            self.i += 1
            return Exit()
        if self._at("if"):
            self.i += 1
            c = self.expr()
            self._eat("then")
            t = self.expr()
            self._eat("else")
            return If(c, t, self.assign())
        if self._at("("):
            self.i += 1
            e = self.expr()
            self._eat(")")
            self._sugar.pop(id(e), None)
            return e
        if tok.kind == "ident":
            self.i += 1
            if self._at("."):
                self.i += 1
                p = self._ident().text
                self._eat("(")
                a = self.expr()
                self._eat(")")
                return CallExpr(tok.text, p, a)
            if self._at("["):
                self.i += 1
                ix = self.expr()
                self._eat("]")
                e = index(tok.text, ix)
                self._sugar[id(e)] = e
                return e
            raise self._error(f"bare identifier {tok.text!r} is not an expression", tok)
        raise self._error(f"expected expression, found {tok.text or 'end of input'!r}")


def parse_program(text: str) -> ComponentSet:
    """Parse ``.rcc`` source text into a ComponentSet."""
    return _Parser(text).program()


def parse_expr(text: str) -> Expr:
    p = _Parser(text)
    e = p.expr()
    if p.tok.kind != "eof":
        raise p._error(f"trailing input {p.tok.text!r}")
    return e


# precedence levels for printing
_SEQ, _ASSIGN, _CMP, _ADD, _MUL, _UNARY, _ATOM = range(7)
_OP_LEVEL = {"eq": _CMP, "leq": _CMP, "add": _ADD, "sub": _ADD, "mul": _MUL}


def _sugar_target(e: Expr) -> tuple[str, Expr] | None:
    if isinstance(e, BinOp) and e.op == "add" and isinstance(e.left, BufRef):
        return e.left.name, e.right
    return None


def _fmt(e: Expr, ctx: int) -> str:
    s, level = _fmt_level(e)
    return f"({s})" if level < ctx else s


def _fmt_level(e: Expr) -> tuple[str, int]:
    if isinstance(e, Num):
        if e.value < 0:
            if e.value == INT_MIN:
                return f"(0 - {INT_MAX} - 1)", _ATOM
            return f"(0 - {-e.value})", _ATOM
        return str(e.value), _ATOM
    if isinstance(e, Arg):
        return "arg", _ATOM
    if isinstance(e, Exit):
        return "exit", _ATOM
    if isinstance(e, BufRef):
        return f"&{e.name}", _ATOM
    if isinstance(e, CallExpr):
        return f"{e.comp}.{e.proc}({_fmt(e.arg, _SEQ)})", _ATOM
    if isinstance(e, Load):
        st = _sugar_target(e.addr)
        if st:
            return f"{st[0]}[{_fmt(st[1], _SEQ)}]", _ATOM
        return f"!{_fmt(e.addr, _UNARY)}", _UNARY
    if isinstance(e, BinOp):
        lvl = _OP_LEVEL[e.op]
        return f"{_fmt(e.left, lvl)} {_OP_SYMBOL[e.op]} {_fmt(e.right, lvl + 1)}", lvl
    if isinstance(e, Store):
        st = _sugar_target(e.addr)
        lhs = f"{st[0]}[{_fmt(st[1], _SEQ)}]" if st else _fmt(e.addr, _CMP)
        if st is None and isinstance(e.addr, Load) and _sugar_target(e.addr.addr):
            lhs = f"({lhs})"  # keep a loaded address distinct from the b[e] := v sugar
        return f"{lhs} := {_fmt(e.value, _ASSIGN)}", _ASSIGN
    if isinstance(e, Seq):
        return f"{_fmt(e.first, _ASSIGN)}; {_fmt(e.second, _SEQ)}", _SEQ
    if isinstance(e, If):
        return (
            f"if {_fmt(e.cond, _SEQ)} then {_fmt(e.then, _SEQ)} else {_fmt(e.else_, _ASSIGN)}",
            _ASSIGN,
        )
    raise TypeError(f"not an expression: {e!r}")


def format_expr(e: Expr) -> str:
    return _fmt(e, _SEQ)


def format_component(c: Component) -> str:
    lines = [f"component {c.name} {{"]
    for ic, ip in c.imports:
        lines.append(f"  import {ic}.{ip};")
    for b, n in c.buffers:
        lines.append(f"  buffer {b}[{n}];")
    for p, proc in c.procedures.items():
        kw = "export proc" if proc.exported else "proc"
        lines.append(f"  {kw} {p}() = {format_expr(proc.body)}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def format_program(s: ComponentSet) -> str:
    return "\n".join(format_component(c) for c in s)
