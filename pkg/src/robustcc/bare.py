"""Instruction encoding of the flat bare machine shared by both back ends.

An instruction occupies one memory word::

    bits 0-3   opcode
    bits 4-6   register a
    bits 7-9   register b
    bits 10-12 register c
    bits 13-15 binary operator index
    bits 16-   signed immediate (unbounded, so 64-bit constants fit in one word)

Words whose fields do not decode (opcode 0 included) are illegal and trap
when executed.
"""

from __future__ import annotations

from functools import lru_cache

from .lang import BINOPS
from .machine import Reg

ILLEGAL, NOP, CONST, MOV, BINOP, LOAD, STORE, JAL, JUMP, BNZ, HALT, MASK, TCALL, TRET = range(14)

MNEMONICS = {
    NOP: "nop", CONST: "const", MOV: "mov", BINOP: "binop", LOAD: "load", STORE: "store",
    JAL: "jal", JUMP: "jump", BNZ: "bnz", HALT: "halt", MASK: "mask", TCALL: "tcall", TRET: "tret",
}

# extra register reserved by the SFI back end; never named by compiled code
R_SFI = len(Reg)
NREGS = R_SFI + 1
_REG_LIMIT = NREGS


def encode(opcode: int, a: int = 0, b: int = 0, c: int = 0, bop: int = 0, imm: int = 0) -> int:
    return opcode | (a << 4) | (b << 7) | (c << 10) | (bop << 13) | (imm << 16)


def const(imm: int, rd) -> int:
    return encode(CONST, int(rd), imm=imm)


def mov(rs, rd) -> int:
    return encode(MOV, int(rs), int(rd))


def binop(op: str, rd, r1, r2) -> int:
    return encode(BINOP, int(rd), int(r1), int(r2), BINOPS.index(op))


def load(ra, rd) -> int:
    return encode(LOAD, int(ra), int(rd))


def store(ra, rs) -> int:
    return encode(STORE, int(ra), int(rs))


def jal(addr: int) -> int:
    return encode(JAL, imm=addr)


def jump(r) -> int:
    return encode(JUMP, int(r))


def bnz(r, addr: int) -> int:
    return encode(BNZ, int(r), imm=addr)


def mask(rd, rs, slot: int) -> int:
    return encode(MASK, int(rd), int(rs), imm=slot)


NOP_WORD = encode(NOP)
HALT_WORD = encode(HALT)
TCALL_WORD = encode(TCALL)
TRET_WORD = encode(TRET)


@lru_cache(maxsize=1 << 16)
def decode(word: int) -> tuple | None:
    """Decode to ``(opcode, a, b, c, operator, imm)`` or None if illegal."""
    opcode = word & 15
    if opcode == ILLEGAL or opcode > TRET:
        return None
    a, b, c = (word >> 4) & 7, (word >> 7) & 7, (word >> 10) & 7
    bop = (word >> 13) & 7
    if a >= _REG_LIMIT or b >= _REG_LIMIT or c >= _REG_LIMIT:
        return None
    if opcode == BINOP:
        if bop >= len(BINOPS):
            return None
        return (opcode, a, b, c, BINOPS[bop], word >> 16)
    return (opcode, a, b, c, None, word >> 16)


def _rname(r: int) -> str:
    return "r_sfi" if r == R_SFI else Reg(r).name.lower()


def disassemble(word: int) -> str:
    d = decode(word)
    if d is None:
        return "illegal"
    op, a, b, c, bop, imm = d
    m = MNEMONICS[op]
    if op == CONST:
        return f"{m} {imm} {_rname(a)}"
    if op in (MOV, LOAD, STORE):
        return f"{m} {_rname(a)} {_rname(b)}"
    if op == BINOP:
        return f"{m} {bop} {_rname(a)} {_rname(b)} {_rname(c)}"
    if op == JAL:
        return f"{m} {imm}"
    if op == JUMP:
        return f"{m} {_rname(a)}"
    if op == BNZ:
        return f"{m} {_rname(a)} {imm}"
    if op == MASK:
        return f"{m} {_rname(a)} {_rname(b)} slot {imm}"
    return m
