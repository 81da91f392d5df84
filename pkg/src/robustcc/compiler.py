"""Separate compilation of source components to machine compartments.

Calling convention:

* argument and result travel in ``R_COM``;
* every compartment owns a runtime stack block (the last block).  Cell 0 of
  that block holds the saved stack pointer of the compartment's suspended
  activations; frames start at cell 1;
* a procedure body frame is ``[return address, argument, temporaries...]``;
* each exported procedure also gets an entry wrapper that recovers the stack
  pointer from cell 0, calls the body, writes the stack pointer back and
  executes ``Return``.  The wrapper saves ``R_RA`` around the body so that
  back ends may implement ``Return`` as a jump through ``R_RA``.

Buffer accesses compile to reference arithmetic and plain loads and stores
with no bounds checks.  Out-of-bounds behavior is whatever the target level
makes of it.
"""

from __future__ import annotations

from . import lang
from .lang import Component, ComponentSet
from .machine import (
    BinOp, BlockImm, Bnz, Call, Const, Halt, Jal, Jump, Load, MachineComponent,
    MachineProgram, Reg, Return, Store,
)

DEFAULT_STACK_SIZE = 4096

R_ONE, R_COM, R_AUX1, R_AUX2, R_RA, R_SP = (
    Reg.R_ONE, Reg.R_COM, Reg.R_AUX1, Reg.R_AUX2, Reg.R_RA, Reg.R_SP,
)


def fuel_inflation(f: int) -> int:
    """Machine step budget guaranteed to cover ``f`` source steps."""
    return 64 * f + 1024


class _Label:
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name

    def __repr__(self):
        return f"<{self.name}>"


class _Gen:
    def __init__(self, c: Component):
        self.c = c
        self.code: list = []
        self.fixups: list[tuple[int, _Label]] = []
        self.where: dict[_Label, int] = {}
        self.stack_block = len(c.buffers)
        self.bufs = {b: i for i, (b, _) in enumerate(c.buffers)}
        self.body_labels = {p: _Label(f"body_{p}") for p in c.procedures}
        self.depth = 0

    def emit(self, ins):
        self.code.append(ins)

    def emit_jump(self, make, label: _Label):
        self.fixups.append((len(self.code), label))
        self.code.append(make)

    def place(self, label: _Label):
        self.where[label] = len(self.code)

    def resolve(self) -> tuple:
        code = list(self.code)
        for i, lbl in self.fixups:
            ins = code[i]
            target = self.where[lbl]
            code[i] = Jal(target) if ins is Jal else Bnz(ins[1], target)
        return tuple(code)

    # stack helpers

    def push(self, r: Reg):
        self.emit(Store(R_SP, r))
        self.emit(Const(1, R_AUX1))
        self.emit(BinOp("add", R_SP, R_SP, R_AUX1))
        self.depth += 1

    def pop(self, r: Reg):
        self.emit(Const(-1, R_AUX1))
        self.emit(BinOp("add", R_SP, R_SP, R_AUX1))
        self.emit(Load(R_SP, r))
        self.depth -= 1

    def save_sp(self):
        self.emit(Const(BlockImm(self.stack_block, 0), R_AUX2))
        self.emit(Store(R_AUX2, R_SP))

    def restore_sp(self):
        self.emit(Const(BlockImm(self.stack_block, 0), R_AUX2))
        self.emit(Load(R_AUX2, R_SP))

    # expressions: result in R_COM

    def expr(self, e: lang.Expr):
        t = type(e)
        if t is lang.Num:
            self.emit(Const(e.value, R_COM))
        elif t is lang.Arg:
            self.emit(Const(1 - self.depth, R_AUX1))
            self.emit(BinOp("add", R_AUX1, R_SP, R_AUX1))
            self.emit(Load(R_AUX1, R_COM))
        elif t is lang.Exit:
            self.emit(Halt())
        elif t is lang.BufRef:
            self.emit(Const(BlockImm(self.bufs[e.name], 0), R_COM))
        elif t is lang.BinOp:
            self.expr(e.left)
            self.push(R_COM)
            self.expr(e.right)
            self.pop(R_AUX2)
            self.emit(BinOp(e.op, R_COM, R_AUX2, R_COM))
        elif t is lang.Seq:
            self.expr(e.first)
            self.expr(e.second)
        elif t is lang.If:
            l_then, l_end = _Label("then"), _Label("endif")
            self.expr(e.cond)
            self.emit_jump((Bnz, R_COM), l_then)
            self.expr(e.else_)
            self.emit(Const(1, R_ONE))
            self.emit_jump((Bnz, R_ONE), l_end)
            self.place(l_then)
            self.expr(e.then)
            self.place(l_end)
        elif t is lang.Load:
            self.expr(e.addr)
            self.emit(Load(R_COM, R_COM))
        elif t is lang.Store:
            self.expr(e.addr)
            self.push(R_COM)
            self.expr(e.value)
            self.pop(R_AUX2)
            self.emit(Store(R_AUX2, R_COM))
        elif t is lang.CallExpr:
            self.expr(e.arg)
            if e.comp == self.c.name:
                self.emit_jump(Jal, self.body_labels[e.proc])
            else:
                self.save_sp()
                self.emit(Call(e.comp, e.proc))
                self.restore_sp()
        else:
            raise TypeError(f"unknown expression {e!r}")

    def body(self, p: str, proc: lang.Procedure):
        self.place(self.body_labels[p])
        self.depth = 0
        self.push(R_RA)
        self.push(R_COM)
        self.expr(proc.body)
        assert self.depth == 2
        self.emit(Const(-2, R_AUX1))
        self.emit(BinOp("add", R_SP, R_SP, R_AUX1))
        self.emit(Load(R_SP, R_RA))
        self.emit(Jump(R_RA))

    def wrapper(self, p: str) -> int:
        start = len(self.code)
        have_sp = _Label("have_sp")
        self.restore_sp()
        self.emit_jump((Bnz, R_SP), have_sp)
        self.emit(Const(BlockImm(self.stack_block, 1), R_SP))
        self.place(have_sp)
        self.depth = 0
        self.push(R_RA)
        self.emit_jump(Jal, self.body_labels[p])
        self.pop(R_RA)
        self.save_sp()
        self.emit(Return())
        return start


def compile_component(c: Component, stack_size: int = DEFAULT_STACK_SIZE) -> MachineComponent:
    """Compile one component; the result depends on ``c`` alone."""
    g = _Gen(c)
    for p, proc in c.procedures.items():
        g.body(p, proc)
    entries = {}
    for p, proc in c.procedures.items():
        if proc.exported:
            entries[p] = g.wrapper(p)
    blocks = tuple(n for _, n in c.buffers) + (stack_size,)
    return MachineComponent(c.name, g.resolve(), blocks, entries, frozenset(c.imports))


def compile_set(s: ComponentSet, stack_size: int = DEFAULT_STACK_SIZE) -> MachineProgram:
    rep = lang.check_well_formed(s)
    if not rep.ok:
        raise ValueError(f"cannot compile ill-formed program: {rep.errors}")
    return MachineProgram({c.name: compile_component(c, stack_size) for c in s})
