"""Tag-based reference monitor back end.

Every word of the flat memory carries a tag naming its owning compartment
and whether it is an instruction (possibly an entry point) or data.  The
monitor consults ``policy_allows`` on every fetch and memory access and keeps
a shadow stack of cross-compartment return addresses that program code
cannot address.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from . import bare
from .bare import decode
from .machine import (
    BinOp, BlockImm, Bnz, Call, Const, Halt, Jal, Jump, Load, MachineProgram, Mov, Nop,
    Reg, Return, Store,
)
from .source import wrap64
from .traces import Call as CallEv, Halt as HaltT, OutOfFuel, Ret as RetEv, Trace, Trap

DEFAULT_MEMORY_SIZE = 1 << 20

INSTR = "instr"
DATA = "data"


@dataclass(frozen=True, slots=True)
class WordTag:
    owner: int
    kind: str  # INSTR or DATA
    entry: bool = False


class Access(Enum):
    FETCH = "fetch"
    FETCH_AFTER_JAL = "fetch-after-jal"
    FETCH_AFTER_RETURN_JUMP = "fetch-after-return-jump"
    LOAD = "load"
    STORE = "store"


def policy_allows(
    pc: int,
    fetched: WordTag | None,
    mem: WordTag | None,
    kind: Access,
    target: int | None = None,
    shadow_top: int | None = None,
) -> bool:
    """The micro-policy rule table.

    ``pc`` is the current compartment tag.  For fetches ``fetched`` is the tag
    of the word at the new pc (``target``); ``shadow_top`` is the return
    address on top of the shadow stack, if any.  Only instruction words are
    executable.
    """
    if kind is Access.LOAD or kind is Access.STORE:
        return mem is not None and mem.owner == pc and mem.kind == DATA
    if fetched is None or fetched.kind != INSTR:
        return False
    if fetched.owner == pc:
        return True
    if kind is Access.FETCH_AFTER_JAL:
        return fetched.entry
    if kind is Access.FETCH_AFTER_RETURN_JUMP:
        return shadow_top is not None and target == shadow_top
    return False


class LayoutOverflow(ValueError):
    pass


@dataclass
class TaggedProgram:
    words: list[int]
    tags: list[WordTag | None]
    layout: dict[tuple[str, int], int]  # (component, block) -> base address
    entry_table: dict[tuple[str, str], int]  # (component, procedure) -> address
    owners: list[str]  # owner id -> component name
    size: int = DEFAULT_MEMORY_SIZE
    block_lengths: dict[tuple[str, int], int] = field(default_factory=dict)

    HALT_STUB = 0

    def copy(self) -> "TaggedProgram":
        return TaggedProgram(
            list(self.words), list(self.tags), dict(self.layout), dict(self.entry_table),
            list(self.owners), self.size, dict(self.block_lengths),
        )

    def code_range(self, comp: str) -> range:
        oid = self.owners.index(comp)
        addrs = [a for a, t in enumerate(self.tags) if t is not None and t.owner == oid and t.kind == INSTR]
        return range(min(addrs), max(addrs) + 1)


def compartment_order(mp: MachineProgram) -> list[str]:
    return ["Main"] + sorted(n for n in mp.compartments if n != "Main")


def lower_tagged(mp: MachineProgram, size: int = DEFAULT_MEMORY_SIZE) -> TaggedProgram:
    order = compartment_order(mp)
    if order[0] not in mp.compartments:
        raise ValueError("machine program has no Main")
    oid = {n: i for i, n in enumerate(order)}

    # address assignment: halt stub, then per compartment code, trap stub, blocks
    code_base, trap_stub, layout, lengths = {}, {}, {}, {}
    addr = 1
    for n in order:
        mc = mp[n]
        code_base[n] = addr
        addr += len(mc.code)
        trap_stub[n] = addr
        addr += 1
        for b, length in enumerate(mc.blocks):
            layout[(n, b)] = addr
            lengths[(n, b)] = length
            addr += length
    if addr > size:
        raise LayoutOverflow(f"program needs {addr} words, memory has {size}")
    entry_table = {
        (n, p): code_base[n] + lbl for n in order for p, lbl in mp[n].entries.items()
    }
    entry_addrs = set(entry_table.values())

    words = [0] * addr
    tags: list[WordTag | None] = [None] * addr
    words[0] = bare.HALT_WORD
    tags[0] = WordTag(oid["Main"], INSTR)
    for n in order:
        mc = mp[n]
        o = oid[n]
        base = code_base[n]

        def target(label, base=base, mc=mc, n=n):
            return base + label if 0 <= label < len(mc.code) else trap_stub[n]

        for i, ins in enumerate(mc.code):
            words[base + i] = _lower(ins, n, target, layout, entry_table, trap_stub[n])
            tags[base + i] = WordTag(o, INSTR, base + i in entry_addrs)
        tags[trap_stub[n]] = WordTag(o, INSTR)
        for b in range(len(mc.blocks)):
            start = layout[(n, b)]
            for a in range(start, start + lengths[(n, b)]):
                tags[a] = WordTag(o, DATA)
    return TaggedProgram(words, tags, layout, entry_table, order, size, lengths)


def _lower(ins, comp, target, layout, entry_table, trap_stub) -> int:
    t = type(ins)
    if t is Const:
        imm = ins.imm
        if type(imm) is BlockImm:
            base = layout.get((comp, imm.block))
            imm = -1 if base is None else base + imm.offset
        return bare.const(imm, ins.rd)
    if t is Mov:
        return bare.mov(ins.rs, ins.rd)
    if t is BinOp:
        return bare.binop(ins.op, ins.rd, ins.r1, ins.r2)
    if t is Load:
        return bare.load(ins.ra, ins.rd)
    if t is Store:
        return bare.store(ins.ra, ins.rs)
    if t is Jal:
        return bare.jal(target(ins.label))
    if t is Jump:
        return bare.jump(ins.r)
    if t is Bnz:
        return bare.bnz(ins.r, target(ins.label))
    if t is Call:
        return bare.jal(entry_table.get((ins.comp, ins.proc), trap_stub))
    if t is Return:
        return bare.jump(Reg.R_RA)
    if t is Halt:
        return bare.HALT_WORD
    if t is Nop:
        return bare.NOP_WORD
    raise TypeError(f"not an instruction: {ins!r}")


# --------------------------------------------------------------------------
# Execution

def run_tagged(tp: TaggedProgram, fuel: int) -> Trace:
    return _run(tp, fuel, None)


def run_tagged_checked(tp: TaggedProgram, fuel: int) -> tuple[Trace, list[str]]:
    """Run while auditing monitor soundness; returns the trace and any violations.

    The audit looks only at raw tags and the shadow stack: every permitted load
    or store must hit a word owned by the current compartment, and every
    change of compartment must coincide with an entry-tagged fetch that
    pushed the shadow stack or with a return to the popped shadow-stack top.
    """
    violations: list[str] = []
    trace = _run(tp, fuel, violations)
    return trace, violations


def _run(tp: TaggedProgram, fuel: int, audit: list | None) -> Trace:
    words, tags, owners = list(tp.words), tp.tags, tp.owners
    nmem = len(words)
    proc_of = {a: p for (c, p), a in tp.entry_table.items()}
    R_COM, R_RA = int(Reg.R_COM), int(Reg.R_RA)
    regs = [0] * bare.NREGS
    regs[R_RA] = TaggedProgram.HALT_STUB
    pc = tp.entry_table[("Main", "main")]
    cur = owners.index("Main")
    shadow: list[tuple[int, int]] = []  # (caller owner, return address)
    events = []
    kind = Access.FETCH
    steps = 0
    term = None
    while steps < fuel:
        steps += 1
        ftag = tags[pc] if 0 <= pc < nmem else None
        top = shadow[-1][1] if shadow else None
        if not policy_allows(cur, ftag, None, kind, pc, top):
            term = Trap(owners[cur])
            break
        if ftag.owner != cur:
            depth_before = len(shadow)
            if kind is Access.FETCH_AFTER_JAL:
                shadow.append((cur, regs[R_RA]))
                events.append(CallEv(owners[cur], owners[ftag.owner], proc_of[pc], regs[R_COM]))
            else:
                caller, _ = shadow.pop()
                events.append(RetEv(owners[cur], owners[caller], regs[R_COM]))
            if audit is not None:
                pushed = len(shadow) == depth_before + 1 and tags[pc].entry
                popped = len(shadow) == depth_before - 1 and pc == top
                if not (pushed or popped):
                    audit.append(f"compartment change {owners[cur]}->{owners[ftag.owner]} at {pc} without entry or return")
            cur = ftag.owner
        d = decode(words[pc])
        if d is None:
            term = Trap(owners[cur])
            break
        op, a, b, c, bop, imm = d
        kind = Access.FETCH
        if op == bare.CONST:
            regs[a] = imm
            pc += 1
        elif op == bare.BINOP:
            x, y = regs[b], regs[c]
            if bop == "add":
                regs[a] = wrap64(x + y)
            elif bop == "sub":
                regs[a] = wrap64(x - y)
            elif bop == "mul":
                regs[a] = wrap64(x * y)
            elif bop == "eq":
                regs[a] = int(x == y)
            else:
                regs[a] = int(x <= y)
            pc += 1
        elif op == bare.LOAD or op == bare.STORE:
            addr = regs[a]
            mtag = tags[addr] if 0 <= addr < nmem else None
            acc = Access.LOAD if op == bare.LOAD else Access.STORE
            if not policy_allows(cur, None, mtag, acc):
                term = Trap(owners[cur])
                break
            if audit is not None and tags[addr].owner != cur:
                audit.append(f"{acc.value} by {owners[cur]} at {addr} owned by {owners[tags[addr].owner]}")
            if op == bare.LOAD:
                regs[b] = words[addr]
            else:
                words[addr] = regs[b]
            pc += 1
        elif op == bare.MOV:
            regs[b] = regs[a]
            pc += 1
        elif op == bare.JAL:
            regs[R_RA] = pc + 1
            pc = imm
            kind = Access.FETCH_AFTER_JAL
        elif op == bare.JUMP:
            pc = regs[a]
            kind = Access.FETCH_AFTER_RETURN_JUMP
        elif op == bare.BNZ:
            pc = imm if regs[a] != 0 else pc + 1
        elif op == bare.HALT:
            term = HaltT()
            break
        elif op == bare.NOP:
            pc += 1
        else:
            # MASK / trampoline opcodes do not exist on this machine
            term = Trap(owners[cur])
            break
    return Trace(events, term if term is not None else OutOfFuel())


# --------------------------------------------------------------------------
# Text serialization: "addr word owner kind [entry]" per line, after a header


def serialize_tagged(tp: TaggedProgram) -> str:
    out = [f"# tagged-program size {tp.size}"]
    for i, n in enumerate(tp.owners):
        out.append(f"# owner {i} {n}")
    for (c, p), a in sorted(tp.entry_table.items(), key=lambda kv: kv[1]):
        out.append(f"# entry {a} {c} {p}")
    for (c, b), base in sorted(tp.layout.items(), key=lambda kv: kv[1]):
        out.append(f"# block {c} {b} {base} {tp.block_lengths[(c, b)]}")
    for a, (w, t) in enumerate(zip(tp.words, tp.tags)):
        if t is None:
            continue
        line = f"{a} {w} {t.owner} {t.kind}"
        if t.entry:
            line += " entry"
        out.append(line)
    return "\n".join(out) + "\n"


def parse_tagged(text: str) -> TaggedProgram:
    size = DEFAULT_MEMORY_SIZE
    owners: dict[int, str] = {}
    entry_table, layout, lengths = {}, {}, {}
    cells: dict[int, tuple[int, WordTag]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        f = line.split()
        if not f:
            continue
        try:
            if f[0] == "#":
                if f[1] == "tagged-program":
                    size = int(f[3])
                elif f[1] == "owner":
                    owners[int(f[2])] = f[3]
                elif f[1] == "entry":
                    entry_table[(f[3], f[4])] = int(f[2])
                elif f[1] == "block":
                    layout[(f[2], int(f[3]))] = int(f[4])
                    lengths[(f[2], int(f[3]))] = int(f[5])
                continue
            if f[3] not in (INSTR, DATA) or len(f) > 5 or (len(f) == 5 and f[4] != "entry"):
                raise ValueError(line)
            cells[int(f[0])] = (int(f[1]), WordTag(int(f[2]), f[3], len(f) == 5))
        except (ValueError, IndexError):
            raise ValueError(f"line {lineno}: malformed tagged-program record {line!r}") from None
    n = max(cells) + 1 if cells else 0
    words = [0] * n
    tags: list[WordTag | None] = [None] * n
    for a, (w, t) in cells.items():
        words[a], tags[a] = w, t
    return TaggedProgram(words, tags, layout, entry_table, [owners[i] for i in sorted(owners)], size, lengths)
