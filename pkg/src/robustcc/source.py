"""Small-step semantics of the source language over a block-based memory.

Evaluation is a continuation machine: each transition either decomposes the
expression under focus or plugs a value into the innermost continuation
frame, and costs one unit of fuel.  Cross-component calls and returns emit
events; the first undefined operation ends the run with ``Ub(comp)`` naming
the component whose code performed it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from . import lang
from .lang import Arg, BinOp, BufRef, CallExpr, ComponentSet, Exit, If, Load, Num, Seq, Store
from .traces import Call, Halt, OutOfFuel, Ret, Trace, Ub

_MASK64 = (1 << 64) - 1
_HALF64 = 1 << 63


def wrap64(x: int) -> int:
    """Reduce ``x`` to a signed 64-bit integer (two's complement wrap-around)."""
    return ((x + _HALF64) & _MASK64) - _HALF64


@dataclass(frozen=True, slots=True)
class Ref:
    """A reference to cell ``offset`` of block ``block`` owned by ``comp``."""

    comp: str
    block: int
    offset: int


Value = Union[int, Ref]


class UbSignal(Exception):
    """Raised by memory and value operations that have undefined behavior."""


class Memory:
    """One fixed-length block per declared buffer, zero-initialised."""

    def __init__(self, s: ComponentSet | None = None):
        self.blocks: dict[tuple[str, int], list] = {}
        if s is not None:
            for c in s:
                for i, (_, n) in enumerate(c.buffers):
                    self.blocks[(c.name, i)] = [0] * n

    def copy(self) -> "Memory":
        m = Memory()
        m.blocks = {k: list(v) for k, v in self.blocks.items()}
        return m


LOAD = "load"


def mem_access(m: Memory, current: str, r, kind=LOAD, value=None):
    """Load from or store ``value`` to reference ``r`` on behalf of ``current``.

    ``kind`` is ``"load"`` or ``"store"``.  Raises ``UbSignal`` on a non-reference
    address, on a reference owned by another component, or when the offset is
    out of the block's bounds.  A store returns the stored value.
    """
    if type(r) is not Ref:
        raise UbSignal(f"{current}: dereference of non-reference {r!r}")
    if r.comp != current:
        raise UbSignal(f"{current}: access to memory owned by {r.comp}")
    block = m.blocks.get((r.comp, r.block))
    if block is None:
        raise UbSignal(f"{current}: no block {r.block}")
    if not 0 <= r.offset < len(block):
        raise UbSignal(f"{current}: offset {r.offset} outside block of length {len(block)}")
    if kind == LOAD:
        return block[r.offset]
    block[r.offset] = value
    return value


def binop(op: str, a, b):
    """Apply a source binary operator; Ref +/- Int offsets the reference."""
    if type(a) is int and type(b) is int:
        if op == "add":
            return wrap64(a + b)
        if op == "sub":
            return wrap64(a - b)
        if op == "mul":
            return wrap64(a * b)
        if op == "eq":
            return int(a == b)
        if op == "leq":
            return int(a <= b)
        raise ValueError(op)
    if type(a) is Ref and type(b) is int and op in ("add", "sub"):
        off = a.offset + b if op == "add" else a.offset - b
        return Ref(a.comp, a.block, wrap64(off))
    raise UbSignal(f"operator {op} on {a!r}, {b!r}")


# continuation frame tags
_K_BINL, _K_BINR, _K_SEQ, _K_IF, _K_LOAD, _K_STL, _K_STR, _K_CALL, _K_RET = range(9)


class _Program:
    """Per-run lookup tables: buffer indices and procedure bodies."""

    def __init__(self, s: ComponentSet):
        self.bodies = {}
        self.buffers = {}
        for c in s:
            for p, proc in c.procedures.items():
                self.bodies[(c.name, p)] = proc.body
            for i, (b, _) in enumerate(c.buffers):
                self.buffers[(c.name, b)] = i


def run_source(s: ComponentSet, fuel: int) -> Trace:
    """Run ``Main.main(0)`` for at most ``fuel`` transitions."""
    if not lang.is_closed(s):
        rep = lang.check_well_formed(s)
        raise ValueError(f"run_source needs a closed well-formed program: {rep.errors or rep.open or 'no Main'}")
    prog = _Program(s)
    mem = Memory(s)
    events = []

    comp = "Main"
    arg = 0
    kont: list[tuple] = []  # frames, innermost last
    focus = prog.bodies[("Main", "main")]
    is_value = False  # when True, ``focus`` holds a value being returned to kont

    steps = 0
    try:
        while True:
            if steps >= fuel:
                return Trace(events, OutOfFuel())
            steps += 1
            if not is_value:
                e = focus
                t = type(e)
                if t is Num:
                    focus, is_value = e.value, True
                elif t is Arg:
                    focus, is_value = arg, True
                elif t is BinOp:
                    kont.append((_K_BINL, e.op, e.right))
                    focus = e.left
                elif t is Seq:
                    kont.append((_K_SEQ, e.second))
                    focus = e.first
                elif t is If:
                    kont.append((_K_IF, e.then, e.else_))
                    focus = e.cond
                elif t is BufRef:
                    focus, is_value = Ref(comp, prog.buffers[(comp, e.name)], 0), True
                elif t is Load:
                    kont.append((_K_LOAD,))
                    focus = e.addr
                elif t is Store:
                    kont.append((_K_STL, e.value))
                    focus = e.addr
                elif t is CallExpr:
                    kont.append((_K_CALL, e.comp, e.proc))
                    focus = e.arg
                elif t is Exit:
                    return Trace(events, Halt())
                else:
                    raise TypeError(f"unknown expression {e!r}")
                continue

            v = focus
            if not kont:
                # Main.main returned
                return Trace(events, Halt())
            frame = kont.pop()
            tag = frame[0]
            if tag == _K_BINL:
                kont.append((_K_BINR, frame[1], v))
                focus, is_value = frame[2], False
            elif tag == _K_BINR:
                focus = binop(frame[1], frame[2], v)
            elif tag == _K_SEQ:
                focus, is_value = frame[1], False
            elif tag == _K_IF:
                if type(v) is not int:
                    raise UbSignal(f"{comp}: branch on reference")
                focus, is_value = (frame[1] if v != 0 else frame[2]), False
            elif tag == _K_LOAD:
                focus = mem_access(mem, comp, v)
            elif tag == _K_STL:
                kont.append((_K_STR, v))
                focus, is_value = frame[1], False
            elif tag == _K_STR:
                focus = mem_access(mem, comp, frame[1], "store", v)
            elif tag == _K_CALL:
                callee, proc = frame[1], frame[2]
                cross = callee != comp
                if cross:
                    if type(v) is not int:
                        raise UbSignal(f"{comp}: reference passed to {callee}.{proc}")
                    events.append(Call(comp, callee, proc, v))
                kont.append((_K_RET, comp, arg, cross))
                comp, arg = callee, v
                focus, is_value = prog.bodies[(callee, proc)], False
            elif tag == _K_RET:
                caller, saved_arg, cross = frame[1], frame[2], frame[3]
                if cross:
                    if type(v) is not int:
                        raise UbSignal(f"{comp}: reference returned to {caller}")
                    events.append(Ret(comp, caller, v))
                comp, arg = caller, saved_arg
            else:
                raise AssertionError(tag)
    except UbSignal:
        return Trace(events, Ub(comp))
