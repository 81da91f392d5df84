"""Software fault isolation back end.

Memory is cut into slots of ``2**k`` words.  Slot 0 is the trusted zone: two
trampoline heads (call at address 0, return at address 1), the return-stack
pointer, the entry table and the protected return stack.  Each compartment
gets one slot laid out as code, a trap word, then its blocks.

Untrusted code is rewritten so that every store and computed jump goes
through the reserved register ``R_SFI``, which only a ``mask`` instruction
naming the compartment's own slot may write.  Cross-compartment calls and
returns jump to the trampolines, which validate the entry table, pass only
``R_COM`` along, and emit the call/return events.

The machine models page permissions: code extents are executable and not
writable, everything else is writable data that cannot be executed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import bare
from .bare import R_SFI, decode
from .machine import (
    BinOp, BlockImm, Bnz, Call, Const, Halt, Jal, Jump, Load, MachineProgram, Mov, Nop,
    Reg, Return, Store,
)
from .source import wrap64
from .tagged import compartment_order
from .traces import Call as CallEv, Halt as HaltT, OutOfFuel, Ret as RetEv, Trace, Trap

DEFAULT_SLOT_BITS = 14

T_CALL = 0
T_RET = 1
RSP_CELL = 2
TABLE_COUNT = 3
TABLE_BASE = 4
ROW = 4  # caller slot, callee slot, procedure id, entry address


def mask_address(addr: int, slot: int, k: int) -> int:
    """Force ``addr`` into slot ``slot``: ``(addr mod 2**k) + slot * 2**k``."""
    if k < 1 or slot < 1:
        raise ValueError("mask_address needs k >= 1 and slot >= 1")
    return (addr % (1 << k)) + (slot << k)


class SlotOverflow(ValueError):
    pass


@dataclass
class SfiProgram:
    k: int
    words: list[int]
    slots: dict[str, int]  # component -> slot index (>= 1)
    code_extents: dict[int, tuple[int, int]]  # slot -> [start, end) executable range
    proc_names: dict[tuple[int, int], str]  # (slot, procedure id) -> name
    mask_loads: bool = False
    layout: dict[tuple[str, int], int] = field(default_factory=dict)

    @property
    def names(self) -> dict[int, str]:
        return {i: n for n, i in self.slots.items()}

    def return_stack_base(self) -> int:
        return TABLE_BASE + ROW * self.words[TABLE_COUNT]

    def copy(self) -> "SfiProgram":
        return SfiProgram(
            self.k, list(self.words), dict(self.slots), dict(self.code_extents),
            dict(self.proc_names), self.mask_loads, dict(self.layout),
        )


def _proc_ids(mp: MachineProgram) -> dict[tuple[str, str], int]:
    return {(mc.name, p): i for mc in mp for i, p in enumerate(sorted(mc.entries))}


def _expansion(ins, mask_loads: bool) -> int:
    t = type(ins)
    if t is Store or t is Jump:
        return 2
    if t is Load:
        return 2 if mask_loads else 1
    if t is Call:
        return 3
    return 1


def lower_sfi(mp: MachineProgram, k: int = DEFAULT_SLOT_BITS, mask_loads: bool = False) -> SfiProgram:
    order = compartment_order(mp)
    if order[0] not in mp.compartments:
        raise ValueError("machine program has no Main")
    slots = {n: i + 1 for i, n in enumerate(order)}
    size = 1 << k
    pids = _proc_ids(mp)
    words = [0] * ((len(order) + 1) << k)

    # per compartment: bare address of every machine instruction, trap word, blocks
    addr_of, trap_word, layout, extents = {}, {}, {}, {}
    for n in order:
        mc = mp[n]
        base = slots[n] << k
        a = base
        addrs = []
        for ins in mc.code:
            addrs.append(a)
            a += _expansion(ins, mask_loads)
        addr_of[n] = addrs
        trap_word[n] = a
        a += 1
        extents[slots[n]] = (base, a)
        for b, length in enumerate(mc.blocks):
            layout[(n, b)] = a
            a += length
        if a - base > size:
            raise SlotOverflow(f"compartment {n} needs {a - base} words, slot holds {size}")

    entry_addr = {(n, p): addr_of[n][lbl] for n in order for p, lbl in mp[n].entries.items()}

    # trusted zone
    rows = []
    for n in order:
        mc = mp[n]
        allowed = set(mc.imports) | {(n, p) for p in mc.entries}
        for c, p in sorted(allowed):
            if (c, p) in entry_addr:
                rows.append((slots[n], slots[c], pids[(c, p)], entry_addr[(c, p)]))
    words[T_CALL] = bare.TCALL_WORD
    words[T_RET] = bare.TRET_WORD
    words[TABLE_COUNT] = len(rows)
    for i, row in enumerate(rows):
        words[TABLE_BASE + ROW * i: TABLE_BASE + ROW * (i + 1)] = row
    rs_base = TABLE_BASE + ROW * len(rows)
    if rs_base + 3 > size:
        raise SlotOverflow("entry table does not fit in the trusted slot")
    words[RSP_CELL] = rs_base

    for n in order:
        mc = mp[n]
        slot = slots[n]
        addrs = addr_of[n]

        def target(label, addrs=addrs, n=n):
            return addrs[label] if 0 <= label < len(addrs) else trap_word[n]

        for ins, a in zip(mc.code, addrs):
            seq = _lower(ins, n, slot, target, layout, slots, pids, mask_loads)
            words[a: a + len(seq)] = seq
        words[trap_word[n]] = 0  # illegal

    proc_names = {(slots[c], i): p for (c, p), i in pids.items()}
    return SfiProgram(k, words, slots, extents, proc_names, mask_loads, layout)


def _lower(ins, comp, slot, target, layout, slots, pids, mask_loads) -> list[int]:
    t = type(ins)
    if t is Const:
        imm = ins.imm
        if type(imm) is BlockImm:
            base = layout.get((comp, imm.block))
            imm = -1 if base is None else base + imm.offset
        return [bare.const(imm, ins.rd)]
    if t is Mov:
        return [bare.mov(ins.rs, ins.rd)]
    if t is BinOp:
        return [bare.binop(ins.op, ins.rd, ins.r1, ins.r2)]
    if t is Load:
        if mask_loads:
            return [bare.mask(R_SFI, ins.ra, slot), bare.load(R_SFI, ins.rd)]
        return [bare.load(ins.ra, ins.rd)]
    if t is Store:
        return [bare.mask(R_SFI, ins.ra, slot), bare.store(R_SFI, ins.rs)]
    if t is Jal:
        return [bare.jal(target(ins.label))]
    if t is Jump:
        return [bare.mask(R_SFI, ins.r, slot), bare.jump(R_SFI)]
    if t is Bnz:
        return [bare.bnz(ins.r, target(ins.label))]
    if t is Call:
        return [
            bare.const(slots.get(ins.comp, -1), Reg.R_AUX1),
            bare.const(pids.get((ins.comp, ins.proc), -1), Reg.R_AUX2),
            bare.jal(T_CALL),
        ]
    if t is Return:
        return [bare.jal(T_RET)]
    if t is Halt:
        return [bare.HALT_WORD]
    if t is Nop:
        return [bare.NOP_WORD]
    raise TypeError(f"not an instruction: {ins!r}")


# --------------------------------------------------------------------------
# Static verification of untrusted slots


def verify_sfi(sp: SfiProgram) -> list[str]:
    """Check the emitted idioms that the confinement argument relies on.

    Returns a list of problems (empty when the program is acceptable).
    """
    problems = []
    for slot, (start, end) in sp.code_extents.items():
        prev = None
        for a in range(start, end):
            d = decode(sp.words[a])
            if d is None:
                prev = None
                continue
            op, ra, rb, rc, bop, imm = d
            where = f"slot {slot} address {a}"
            if op in (bare.TCALL, bare.TRET):
                problems.append(f"{where}: privileged trampoline instruction in untrusted code")
            writes = {bare.CONST: ra, bare.MOV: rb, bare.BINOP: ra, bare.LOAD: rb}.get(op)
            if writes == R_SFI:
                problems.append(f"{where}: r_sfi written by a non-mask instruction")
            if op == bare.MASK and (ra != R_SFI or imm != slot):
                problems.append(f"{where}: mask must target r_sfi and slot {slot}")
            masked = prev is not None and prev[0] == bare.MASK and prev[1] == R_SFI
            if op == bare.STORE and (ra != R_SFI or not masked):
                problems.append(f"{where}: store address not produced by a mask in the same block")
            if op == bare.JUMP and (ra != R_SFI or not masked):
                problems.append(f"{where}: computed jump not produced by a mask in the same block")
            if op == bare.LOAD and sp.mask_loads and (ra != R_SFI or not masked):
                problems.append(f"{where}: load address not masked")
            if op == bare.JAL and not (start <= imm < end or imm in (T_CALL, T_RET)):
                problems.append(f"{where}: direct call target {imm} outside slot")
            if op == bare.BNZ and not start <= imm < end:
                problems.append(f"{where}: branch target {imm} outside slot")
            prev = d
    return problems


# --------------------------------------------------------------------------
# Execution


def run_sfi(sp: SfiProgram, fuel: int) -> Trace:
    return _run(sp, fuel, None)


def run_sfi_checked(sp: SfiProgram, fuel: int) -> tuple[Trace, list[str]]:
    """Run while auditing confinement: stores from slot i stay in slot i,
    slot 0 is entered only at trampoline heads, and control moves between
    untrusted slots only through slot 0."""
    audit: list[str] = []
    return _run(sp, fuel, audit), audit


def _run(sp: SfiProgram, fuel: int, audit: list | None) -> Trace:
    k = sp.k
    words = list(sp.words)
    nmem = len(words)
    names = sp.names
    extents = sp.code_extents
    slot_size = 1 << k
    rs_base = sp.return_stack_base()
    n_rows = words[TABLE_COUNT]
    R_COM, R_RA, R_AUX1, R_AUX2 = int(Reg.R_COM), int(Reg.R_RA), int(Reg.R_AUX1), int(Reg.R_AUX2)

    def executable(a):
        s = a >> k
        ext = extents.get(s)
        return ext is not None and ext[0] <= a < ext[1]

    def writable(a):
        s = a >> k
        if s == 0 or not 0 <= a < nmem:
            return False
        ext = extents.get(s)
        return ext is not None and not ext[0] <= a < ext[1]

    regs = [0] * bare.NREGS
    main_slot = sp.slots["Main"]
    regs[R_SFI] = main_slot << k
    pc = None
    for i in range(n_rows):
        c, e, p, addr = words[TABLE_BASE + ROW * i: TABLE_BASE + ROW * (i + 1)]
        if e == main_slot and sp.proc_names.get((e, p)) == "main":
            pc = addr
    if pc is None:
        raise ValueError("SFI program has no Main.main entry")
    cur = main_slot  # slot of the running untrusted compartment
    events = []
    steps = 0
    term = None
    prev_slot = cur
    while steps < fuel:
        steps += 1
        if audit is not None:
            s = pc >> k
            if s == 0 and pc not in (T_CALL, T_RET):
                audit.append(f"slot 0 entered at {pc}")
            if s != 0 and prev_slot != 0 and s != prev_slot:
                audit.append(f"slot {prev_slot} -> slot {s} without a trampoline")
            prev_slot = s

        if pc == T_CALL or pc == T_RET:
            caller_slot = regs[R_RA] >> k
            if caller_slot != cur:
                term = Trap(names[cur])
                break
            if pc == T_CALL:
                callee_slot, pid = regs[R_AUX1], regs[R_AUX2]
                entry = None
                for i in range(n_rows):
                    row = TABLE_BASE + ROW * i
                    if (words[row], words[row + 1], words[row + 2]) == (cur, callee_slot, pid):
                        entry = words[row + 3]
                        break
                rsp = words[RSP_CELL]
                if entry is None or rsp + 3 > slot_size:
                    term = Trap(names[cur])
                    break
                words[rsp: rsp + 3] = (regs[R_RA], cur, callee_slot)
                words[RSP_CELL] = rsp + 3
                if callee_slot != cur:
                    v = regs[R_COM]
                    events.append(CallEv(names[cur], names[callee_slot], sp.proc_names[(callee_slot, pid)], v))
                    regs[:] = [0] * bare.NREGS
                    regs[R_COM] = v
                cur = callee_slot
                regs[R_SFI] = cur << k
                pc = entry
            else:
                rsp = words[RSP_CELL]
                if rsp <= rs_base:
                    term = HaltT()
                    break
                ret, caller, callee = words[rsp - 3: rsp]
                if callee != cur:
                    term = Trap(names[cur])
                    break
                words[RSP_CELL] = rsp - 3
                if caller != cur:
                    v = regs[R_COM]
                    events.append(RetEv(names[cur], names[caller], v))
                    regs[:] = [0] * bare.NREGS
                    regs[R_COM] = v
                cur = caller
                regs[R_SFI] = cur << k
                pc = ret
            if audit is not None:
                prev_slot = 0
            continue

        if not executable(pc):
            term = Trap(names[cur])
            break
        d = decode(words[pc])
        if d is None:
            term = Trap(names[cur])
            break
        op, a, b, c, bop, imm = d
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
        elif op == bare.MASK:
            regs[a] = (regs[b] % slot_size) + (imm << k)
            pc += 1
        elif op == bare.STORE:
            addr = regs[a]
            if not writable(addr):
                term = Trap(names[cur])
                break
            if audit is not None and addr >> k != pc >> k:
                audit.append(f"store from slot {pc >> k} to address {addr} in slot {addr >> k}")
            words[addr] = regs[b]
            pc += 1
        elif op == bare.LOAD:
            addr = regs[a]
            if not 0 <= addr < nmem:
                term = Trap(names[cur])
                break
            regs[b] = wrap64(words[addr])
            pc += 1
        elif op == bare.MOV:
            regs[b] = regs[a]
            pc += 1
        elif op == bare.JAL:
            regs[R_RA] = pc + 1
            pc = imm
        elif op == bare.JUMP:
            pc = regs[a]
        elif op == bare.BNZ:
            pc = imm if regs[a] != 0 else pc + 1
        elif op == bare.HALT:
            term = HaltT()
            break
        elif op == bare.NOP:
            pc += 1
        else:
            # privileged opcode outside the trusted slot
            term = Trap(names[cur])
            break
    return Trace(events, term if term is not None else OutOfFuel())


# --------------------------------------------------------------------------
# Text serialization: header, then "addr word" for every nonzero word


def serialize_sfi(sp: SfiProgram) -> str:
    out = [f"# sfi-program k {sp.k} slots {len(sp.slots)} mask_loads {int(sp.mask_loads)}"]
    for n, i in sorted(sp.slots.items(), key=lambda kv: kv[1]):
        start, end = sp.code_extents[i]
        out.append(f"# slot {i} {n} code {start} {end}")
    for (s, pid), name in sorted(sp.proc_names.items()):
        out.append(f"# proc {s} {pid} {name}")
    for (c, b), base in sorted(sp.layout.items(), key=lambda kv: kv[1]):
        out.append(f"# block {c} {b} {base}")
    for a, w in enumerate(sp.words):
        if w != 0:
            out.append(f"{a} {w}")
    return "\n".join(out) + "\n"


def parse_sfi(text: str) -> SfiProgram:
    k = nslots = None
    mask_loads = False
    slots, extents, procs, layout = {}, {}, {}, {}
    cells = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        f = line.split()
        if not f:
            continue
        try:
            if f[0] == "#":
                if f[1] == "sfi-program":
                    k, nslots, mask_loads = int(f[3]), int(f[5]), f[7] == "1"
                elif f[1] == "slot":
                    slots[f[3]] = int(f[2])
                    extents[int(f[2])] = (int(f[5]), int(f[6]))
                elif f[1] == "proc":
                    procs[(int(f[2]), int(f[3]))] = f[4]
                elif f[1] == "block":
                    layout[(f[2], int(f[3]))] = int(f[4])
                continue
            if len(f) != 2:
                raise ValueError(line)
            cells[int(f[0])] = int(f[1])
        except (ValueError, IndexError):
            raise ValueError(f"line {lineno}: malformed SFI record {line!r}") from None
    if k is None:
        raise ValueError("missing sfi-program header")
    words = [0] * ((nslots + 1) << k)
    for a, w in cells.items():
        words[a] = w
    return SfiProgram(k, words, slots, extents, procs, mask_loads, layout)
