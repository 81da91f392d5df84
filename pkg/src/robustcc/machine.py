"""Compartmentalized RISC abstract machine: the compiler's target.

Each compartment owns its code, its blocks and its entry points.  The
machine enforces isolation itself: memory owned by another compartment is
untouchable, cross-compartment calls go through ``Call`` to an imported entry
point, and returns are checked against a protected cross-compartment stack
that no instruction can address.  Any violation ends the run with
``Trap(comp)``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Mapping, Union

from .source import Ref, UbSignal, binop
from .traces import Call as CallEv, Halt as HaltT, OutOfFuel, Ret as RetEv, Trace, Trap


class Reg(IntEnum):
    R_ONE = 0
    R_COM = 1
    R_AUX1 = 2
    R_AUX2 = 3
    R_RA = 4
    R_SP = 5


NREGS = len(Reg)


@dataclass(frozen=True, slots=True)
class BlockImm:
    """Immediate denoting a reference into a block of the executing compartment."""

    block: int
    offset: int = 0


@dataclass(frozen=True, slots=True)
class Nop:
    pass


@dataclass(frozen=True, slots=True)
class Const:
    imm: Union[int, BlockImm]
    rd: Reg


@dataclass(frozen=True, slots=True)
class Mov:
    rs: Reg
    rd: Reg


@dataclass(frozen=True, slots=True)
class BinOp:
    op: str
    rd: Reg
    r1: Reg
    r2: Reg


@dataclass(frozen=True, slots=True)
class Load:
    ra: Reg
    rd: Reg


@dataclass(frozen=True, slots=True)
class Store:
    ra: Reg
    rs: Reg


@dataclass(frozen=True, slots=True)
class Jal:
    label: int


@dataclass(frozen=True, slots=True)
class Jump:
    r: Reg


@dataclass(frozen=True, slots=True)
class Bnz:
    r: Reg
    label: int


@dataclass(frozen=True, slots=True)
class Call:
    comp: str
    proc: str


@dataclass(frozen=True, slots=True)
class Return:
    pass


@dataclass(frozen=True, slots=True)
class Halt:
    pass


Instr = Union[Nop, Const, Mov, BinOp, Load, Store, Jal, Jump, Bnz, Call, Return, Halt]


@dataclass(frozen=True)
class MachineComponent:
    name: str
    code: tuple[Instr, ...]
    blocks: tuple[int, ...]
    entries: Mapping[str, int]
    imports: frozenset[tuple[str, str]] = frozenset()


@dataclass(frozen=True)
class MachineProgram:
    compartments: Mapping[str, MachineComponent]

    def __getitem__(self, name) -> MachineComponent:
        return self.compartments[name]

    def __iter__(self):
        return iter(self.compartments.values())

    def replace(self, mc: MachineComponent) -> "MachineProgram":
        comps = dict(self.compartments)
        comps[mc.name] = mc
        return MachineProgram(comps)


def interface_of_machine(mp: MachineProgram):
    from .lang import ComponentInterface

    return {
        mc.name: ComponentInterface(frozenset(mc.entries), frozenset(mc.imports)) for mc in mp
    }


# --------------------------------------------------------------------------
# Execution

_OP_NOP, _OP_CONST, _OP_CONSTREF, _OP_MOV, _OP_BINOP, _OP_LOAD, _OP_STORE = range(7)
_OP_JAL, _OP_JUMP, _OP_BNZ, _OP_CALL, _OP_RETURN, _OP_HALT = range(7, 13)


def _decode(ins: Instr) -> tuple:
    t = type(ins)
    if t is Nop:
        return (_OP_NOP,)
    if t is Const:
        if type(ins.imm) is BlockImm:
            return (_OP_CONSTREF, ins.imm.block, ins.imm.offset, int(ins.rd))
        return (_OP_CONST, ins.imm, int(ins.rd))
    if t is Mov:
        return (_OP_MOV, int(ins.rs), int(ins.rd))
    if t is BinOp:
        return (_OP_BINOP, ins.op, int(ins.rd), int(ins.r1), int(ins.r2))
    if t is Load:
        return (_OP_LOAD, int(ins.ra), int(ins.rd))
    if t is Store:
        return (_OP_STORE, int(ins.ra), int(ins.rs))
    if t is Jal:
        return (_OP_JAL, ins.label)
    if t is Jump:
        return (_OP_JUMP, int(ins.r))
    if t is Bnz:
        return (_OP_BNZ, int(ins.r), ins.label)
    if t is Call:
        return (_OP_CALL, ins.comp, ins.proc)
    if t is Return:
        return (_OP_RETURN,)
    if t is Halt:
        return (_OP_HALT,)
    raise TypeError(f"not an instruction: {ins!r}")


@dataclass
class CmState:
    comp: str
    pc: int
    regs: list
    mem: dict  # (comp, block) -> list of values
    cross_stack: list = field(default_factory=list)  # (caller, return pc, callee)
    events: list = field(default_factory=list)
    terminal: object = None

    def copy(self) -> "CmState":
        return copy.deepcopy(self)


def initial_state(mp: MachineProgram) -> CmState:
    if "Main" not in mp.compartments or "main" not in mp["Main"].entries:
        raise ValueError("machine program has no Main.main entry point")
    for mc in mp:
        for ic, ip in mc.imports:
            if ic not in mp.compartments or ip not in mp[ic].entries:
                raise ValueError(f"unresolved import {mc.name} -> {ic}.{ip}")
    mem = {}
    for mc in mp:
        for i, n in enumerate(mc.blocks):
            mem[(mc.name, i)] = [0] * n
    regs = [0] * NREGS
    return CmState("Main", mp["Main"].entries["main"], regs, mem)


class _Tables:
    def __init__(self, mp: MachineProgram):
        self.code = {mc.name: [_decode(i) for i in mc.code] for mc in mp}
        self.entries = {mc.name: dict(mc.entries) for mc in mp}
        self.imports = {mc.name: mc.imports for mc in mp}


MemObserver = Callable[[str, Ref, str], None]


def _run(tables: _Tables, st: CmState, fuel: int, observe: MemObserver | None = None) -> None:
    """Advance ``st`` in place by at most ``fuel`` transitions."""
    comp, pc, regs, mem = st.comp, st.pc, st.regs, st.mem
    code = tables.code[comp]
    events = st.events
    stack = st.cross_stack
    R_COM = int(Reg.R_COM)
    R_RA = int(Reg.R_RA)
    steps = 0
    term = None
    while steps < fuel:
        steps += 1
        if not 0 <= pc < len(code):
            term = Trap(comp)
            break
        ins = code[pc]
        op = ins[0]
        if op == _OP_CONST:
            regs[ins[2]] = ins[1]
            pc += 1
        elif op == _OP_CONSTREF:
            regs[ins[3]] = Ref(comp, ins[1], ins[2])
            pc += 1
        elif op == _OP_BINOP:
            try:
                regs[ins[2]] = binop(ins[1], regs[ins[3]], regs[ins[4]])
            except UbSignal:
                term = Trap(comp)
                break
            pc += 1
        elif op == _OP_LOAD or op == _OP_STORE:
            r = regs[ins[1]]
            if type(r) is not Ref or r.comp != comp:
                term = Trap(comp)
                break
            block = mem.get((comp, r.block))
            if block is None or not 0 <= r.offset < len(block):
                term = Trap(comp)
                break
            if op == _OP_LOAD:
                regs[ins[2]] = block[r.offset]
            else:
                block[r.offset] = regs[ins[2]]
            if observe is not None:
                observe(comp, r, "load" if op == _OP_LOAD else "store")
            pc += 1
        elif op == _OP_MOV:
            regs[ins[2]] = regs[ins[1]]
            pc += 1
        elif op == _OP_JAL:
            if not 0 <= ins[1] < len(code):
                term = Trap(comp)
                break
            regs[R_RA] = pc + 1
            pc = ins[1]
        elif op == _OP_JUMP:
            t = regs[ins[1]]
            if type(t) is not int or not 0 <= t < len(code):
                term = Trap(comp)
                break
            pc = t
        elif op == _OP_BNZ:
            v = regs[ins[1]]
            if type(v) is Ref or v != 0:
                if not 0 <= ins[2] < len(code):
                    term = Trap(comp)
                    break
                pc = ins[2]
            else:
                pc += 1
        elif op == _OP_CALL:
            callee, proc = ins[1], ins[2]
            if callee == comp:
                entry = tables.entries[comp].get(proc)
                if entry is None:
                    term = Trap(comp)
                    break
                stack.append((comp, pc + 1, comp))
                pc = entry
                continue
            if (callee, proc) not in tables.imports[comp]:
                term = Trap(comp)
                break
            entry = tables.entries.get(callee, {}).get(proc)
            v = regs[R_COM]
            if entry is None or type(v) is not int:
                term = Trap(comp)
                break
            events.append(CallEv(comp, callee, proc, v))
            stack.append((comp, pc + 1, callee))
            regs[:] = [0] * NREGS
            regs[R_COM] = v
            comp, pc = callee, entry
            code = tables.code[comp]
        elif op == _OP_RETURN:
            if not stack:
                term = HaltT()
                break
            caller, ret_pc, callee = stack[-1]
            if callee != comp:
                term = Trap(comp)
                break
            if caller != comp:
                v = regs[R_COM]
                if type(v) is not int:
                    term = Trap(comp)
                    break
                events.append(RetEv(comp, caller, v))
                regs[:] = [0] * NREGS
                regs[R_COM] = v
            stack.pop()
            comp, pc = caller, ret_pc
            code = tables.code[comp]
        elif op == _OP_HALT:
            term = HaltT()
            break
        elif op == _OP_NOP:
            pc += 1
        else:
            raise AssertionError(op)
    st.comp, st.pc = comp, pc
    if term is not None:
        st.terminal = term


def step_cm(mp: MachineProgram, st: CmState) -> CmState:
    """One transition.  Returns a new state; ``st`` is left untouched."""
    new = st.copy()
    if new.terminal is None:
        _run(_Tables(mp), new, 1)
    return new


def run_cm(mp: MachineProgram, fuel: int, observe: MemObserver | None = None) -> Trace:
    st = initial_state(mp)
    _run(_Tables(mp), st, fuel, observe)
    return Trace(st.events, st.terminal if st.terminal is not None else OutOfFuel())


# --------------------------------------------------------------------------
# Assembly text

def _reg_name(r) -> str:
    return Reg(r).name.lower()


def _parse_reg(s: str) -> Reg:
    try:
        return Reg[s.upper()]
    except KeyError:
        raise ValueError(f"unknown register {s!r}") from None


def format_instr(ins: Instr) -> str:
    t = type(ins)
    if t is Const:
        imm = f"@{ins.imm.block}+{ins.imm.offset}" if isinstance(ins.imm, BlockImm) else str(ins.imm)
        return f"const {imm} {_reg_name(ins.rd)}"
    if t is Mov:
        return f"mov {_reg_name(ins.rs)} {_reg_name(ins.rd)}"
    if t is BinOp:
        return f"binop {ins.op} {_reg_name(ins.rd)} {_reg_name(ins.r1)} {_reg_name(ins.r2)}"
    if t is Load:
        return f"load {_reg_name(ins.ra)} {_reg_name(ins.rd)}"
    if t is Store:
        return f"store {_reg_name(ins.ra)} {_reg_name(ins.rs)}"
    if t is Jal:
        return f"jal .L{ins.label}"
    if t is Jump:
        return f"jump {_reg_name(ins.r)}"
    if t is Bnz:
        return f"bnz {_reg_name(ins.r)} .L{ins.label}"
    if t is Call:
        return f"call {ins.comp} {ins.proc}"
    return t.__name__.lower()


def format_asm(mp: MachineProgram) -> str:
    out = []
    for mc in mp:
        targets = {i.label for i in mc.code if isinstance(i, (Jal, Bnz))}
        targets |= set(mc.entries.values())
        out.append(f".compartment {mc.name}")
        for ic, ip in sorted(mc.imports):
            out.append(f".import {ic} {ip}")
        for n in mc.blocks:
            out.append(f".block {n}")
        for p, lbl in mc.entries.items():
            out.append(f".entry {p} .L{lbl}")
        for i, ins in enumerate(mc.code):
            if i in targets:
                out.append(f".L{i}:")
            out.append(f"    {format_instr(ins)}")
        out.append("")
    return "\n".join(out)


def _parse_label(s: str) -> int:
    if not s.startswith(".L"):
        raise ValueError(f"bad label {s!r}")
    return int(s[2:])


def _parse_instr(words: list[str]) -> Instr:
    m, args = words[0], words[1:]
    if m == "const":
        if args[0].startswith("@"):
            b, o = args[0][1:].split("+", 1)
            imm = BlockImm(int(b), int(o))
        else:
            imm = int(args[0])
        return Const(imm, _parse_reg(args[1]))
    if m == "mov":
        return Mov(_parse_reg(args[0]), _parse_reg(args[1]))
    if m == "binop":
        return BinOp(args[0], *map(_parse_reg, args[1:4]))
    if m == "load":
        return Load(_parse_reg(args[0]), _parse_reg(args[1]))
    if m == "store":
        return Store(_parse_reg(args[0]), _parse_reg(args[1]))
    if m == "jal":
        return Jal(_parse_label(args[0]))
    if m == "jump":
        return Jump(_parse_reg(args[0]))
    if m == "bnz":
        return Bnz(_parse_reg(args[0]), _parse_label(args[1]))
    if m == "call":
        return Call(args[0], args[1])
    simple = {"nop": Nop, "return": Return, "halt": Halt}
    if m in simple and not args:
        return simple[m]()
    raise ValueError(f"unknown instruction {' '.join(words)!r}")


class AsmParseError(ValueError):
    def __init__(self, msg: str, line: int):
        super().__init__(f"line {line}: {msg}")
        self.line = line


def parse_asm(text: str) -> MachineProgram:
    comps: dict[str, MachineComponent] = {}
    cur = None

    def finish():
        if cur is not None:
            comps[cur["name"]] = MachineComponent(
                cur["name"], tuple(cur["code"]), tuple(cur["blocks"]),
                cur["entries"], frozenset(cur["imports"]),
            )

    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        try:
            if words[0] == ".compartment":
                finish()
                if words[1] in comps:
                    raise ValueError(f"duplicate compartment {words[1]}")
                cur = {"name": words[1], "code": [], "blocks": [], "entries": {}, "imports": set()}
                continue
            if cur is None:
                raise ValueError("expected .compartment")
            if words[0] == ".import":
                cur["imports"].add((words[1], words[2]))
            elif words[0] == ".block":
                cur["blocks"].append(int(words[1]))
            elif words[0] == ".entry":
                cur["entries"][words[1]] = _parse_label(words[2])
            elif line.endswith(":"):
                if _parse_label(line[:-1]) != len(cur["code"]):
                    raise ValueError(f"label {line} does not match position {len(cur['code'])}")
            else:
                cur["code"].append(_parse_instr(words))
        except (ValueError, IndexError) as e:
            raise AsmParseError(str(e) or "malformed line", lineno) from None
    finish()
    return MachineProgram(comps)
