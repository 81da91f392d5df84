"""Seeded instruction mutations for adversarial compartments.

Mutations replace single instructions and keep code length, so labels and
addresses elsewhere stay meaningful.  They model arbitrary attacker code in
the compartments they are pointed at and never touch anything else.
"""

from __future__ import annotations

import random

from .. import bare
from ..lang import BINOPS
from ..machine import (
    BinOp, BlockImm, Bnz, Call, Const, Halt, Jal, Jump, Load, MachineComponent, MachineProgram, Mov,
    Nop, Reg, Return, Store,
)
from ..sfi import T_CALL, T_RET, SfiProgram, verify_sfi
from ..tagged import INSTR, TaggedProgram

_REGS = list(Reg)


def _interesting_int(rng: random.Random) -> int:
    return rng.choice((0, 1, -1, 2, 7, 4096, rng.randrange(-50, 50), rng.randrange(-(1 << 63), 1 << 63)))


def random_instr(rng: random.Random, mc: MachineComponent, mp: MachineProgram):
    n = max(len(mc.code), 1)
    r = lambda: rng.choice(_REGS)  # noqa: E731
    label = lambda: rng.randrange(-1, n + 2)  # noqa: E731
    kind = rng.randrange(12)
    if kind == 0:
        return Nop()
    if kind == 1:
        if mc.blocks and rng.random() < 0.4:
            b = rng.randrange(len(mc.blocks) + 1)
            return Const(BlockImm(b, rng.randrange(-2, 8)), r())
        return Const(_interesting_int(rng), r())
    if kind == 2:
        return Mov(r(), r())
    if kind == 3:
        return BinOp(rng.choice(BINOPS), r(), r(), r())
    if kind == 4:
        return Load(r(), r())
    if kind == 5:
        return Store(r(), r())
    if kind == 6:
        return Jal(label())
    if kind == 7:
        return Jump(r())
    if kind == 8:
        return Bnz(r(), label())
    if kind == 9:
        targets = [(c.name, p) for c in mp for p in c.entries] + [("Main", "nope"), ("Nobody", "p")]
        return Call(*rng.choice(targets))
    if kind == 10:
        return Return()
    return Halt()


def _tweak(rng: random.Random, ins, mc, mp):
    """Small operand change that keeps the opcode, when one exists."""
    fields = getattr(ins, "__slots__", ())
    regs = [f for f in fields if isinstance(getattr(ins, f), Reg)]
    if regs:
        f = rng.choice(regs)
        vals = {f2: getattr(ins, f2) for f2 in fields}
        vals[f] = rng.choice(_REGS)
        return type(ins)(**vals)
    if isinstance(ins, Jal):
        return Jal(ins.label + rng.choice((-2, -1, 1, 2)))
    return random_instr(rng, mc, mp)


def mutate_machine(mp: MachineProgram, comps, rng: random.Random, count: int = 3) -> MachineProgram:
    comps = sorted(c for c in comps if c in mp.compartments and mp[c].code)
    if not comps:
        return mp
    for _ in range(count):
        mc = mp[rng.choice(comps)]
        code = list(mc.code)
        i = rng.randrange(len(code))
        if rng.random() < 0.5:
            code[i] = _tweak(rng, code[i], mc, mp)
        else:
            code[i] = random_instr(rng, mc, mp)
        mp = mp.replace(MachineComponent(mc.name, tuple(code), mc.blocks, mc.entries, mc.imports))
    return mp


def _random_word(rng: random.Random, nmem: int, hot: list[int]) -> int:
    r = lambda: rng.randrange(bare.NREGS)  # noqa: E731
    addr = lambda: rng.choice(hot) if hot and rng.random() < 0.6 else rng.randrange(-4, nmem + 4)  # noqa: E731
    op = rng.randrange(1, bare.TRET + 1)
    if op == bare.CONST:
        return bare.encode(op, r(), imm=addr() if rng.random() < 0.5 else _interesting_int(rng))
    if op == bare.BINOP:
        return bare.encode(op, r(), r(), r(), rng.randrange(len(BINOPS)))
    if op in (bare.JAL, bare.BNZ, bare.MASK):
        return bare.encode(op, r(), r(), imm=addr())
    return bare.encode(op, r(), r(), r())


def mutate_tagged(tp: TaggedProgram, comps, rng: random.Random, count: int = 3) -> TaggedProgram:
    """Overwrite instruction words owned by ``comps`` with arbitrary words."""
    out = tp.copy()
    owners = {out.owners.index(c) for c in comps if c in out.owners}
    sites = [a for a, t in enumerate(out.tags) if t is not None and t.kind == INSTR and t.owner in owners]
    if not sites:
        return out
    hot = sorted(set(out.entry_table.values()) | set(out.layout.values()) | {0})
    for _ in range(count):
        out.words[rng.choice(sites)] = _random_word(rng, len(out.words), hot)
    return out


def mutate_sfi(sp: SfiProgram, comps, rng: random.Random, count: int = 3, attempts: int = 50) -> SfiProgram:
    """Overwrite code words of ``comps``' slots, keeping only variants the verifier accepts."""
    out = sp.copy()
    slots = [sp.slots[c] for c in sorted(comps) if c in sp.slots]
    if not slots:
        return out
    base_problems = len(verify_sfi(out))
    for _ in range(count):
        for _ in range(attempts):
            slot = rng.choice(slots)
            start, end = out.code_extents[slot]
            if end <= start:
                break
            a = rng.randrange(start, end)
            hot = [start, end - 1, T_CALL, T_RET, slot << out.k, rng.randrange(start, end)]
            old = out.words[a]
            out.words[a] = _compliant_word(rng, slot, hot)
            if len(verify_sfi(out)) <= base_problems:
                break
            out.words[a] = old
    return out


def _compliant_word(rng: random.Random, slot: int, hot: list[int]) -> int:
    """A word drawn mostly from shapes the verifier can accept."""
    data = [r for r in range(bare.NREGS) if r != bare.R_SFI]
    r = lambda: rng.choice(data)  # noqa: E731
    any_r = lambda: rng.randrange(bare.NREGS)  # noqa: E731
    choice = rng.randrange(9)
    if choice == 0:
        return bare.const(rng.choice(hot) if rng.random() < 0.5 else _interesting_int(rng), r())
    if choice == 1:
        return bare.mov(any_r(), r())
    if choice == 2:
        return bare.binop(rng.choice(BINOPS), r(), any_r(), any_r())
    if choice == 3:
        return bare.load(any_r(), r())
    if choice == 4:
        return bare.mask(bare.R_SFI, any_r(), slot)
    if choice == 5:
        return bare.jal(rng.choice(hot))
    if choice == 6:
        return bare.bnz(any_r(), rng.choice(hot))
    if choice == 7:
        return bare.store(bare.R_SFI, any_r())
    return rng.choice((bare.NOP_WORD, bare.HALT_WORD, bare.jump(bare.R_SFI)))
