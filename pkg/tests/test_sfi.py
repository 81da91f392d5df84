import os
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import DATA
from robustcc import bare
from robustcc.compiler import compile_set, fuel_inflation
from robustcc.harness import GenParams, generate_component_set, mutate_machine, mutate_sfi
from robustcc.lang import parse_program
from robustcc.machine import Reg, run_cm
from robustcc.sfi import (
    T_CALL, T_RET, SlotOverflow, lower_sfi, mask_address, parse_sfi, run_sfi, run_sfi_checked, serialize_sfi,
    verify_sfi,
)
from robustcc.source import run_source
from robustcc.tagged import lower_tagged, run_tagged
from robustcc.traces import Call, Halt, OutOfFuel, Ret, Trace, Trap, Ub, prefix_upto_ub

seeds = st.integers(min_value=0, max_value=2**32)


def prog(name):
    with open(os.path.join(DATA, name)) as f:
        return parse_program(f.read())


def test_mask_examples():
    assert mask_address(0x3ABC, 3, 12) == 0x3ABC
    assert mask_address(0x5123, 3, 12) == 0x3123
    once = mask_address(0xFFFF, 3, 12)
    assert mask_address(once, 3, 12) == once
    with pytest.raises(ValueError):
        mask_address(1, 0, 12)


@given(st.integers(min_value=-(1 << 63), max_value=(1 << 63) - 1), st.integers(1, 20), st.integers(1, 16))
def test_mask_lands_in_slot(addr, slot, k):
    m = mask_address(addr, slot, k)
    assert m >> k == slot
    assert mask_address(m, slot, k) == m


def test_p0_p1():
    assert run_sfi(lower_sfi(compile_set(prog("p0.rcc"))), 1000) == Trace([], Halt())
    mp = compile_set(prog("p1.rcc"))
    assert run_sfi(lower_sfi(mp), 10000) == run_cm(mp, 10000) == Trace(
        [Call("Main", "C", "f", 5), Ret("C", "Main", 6)], Halt())


def test_zero_fuel():
    assert run_sfi(lower_sfi(compile_set(prog("p1.rcc"))), 0) == Trace([], OutOfFuel())


def test_verifier_accepts_lowered_code():
    sp = lower_sfi(compile_set(prog("p1.rcc")))
    assert verify_sfi(sp) == []
    assert verify_sfi(lower_sfi(compile_set(prog("p1.rcc")), mask_loads=True)) == []


def test_every_store_is_masked():
    sp = lower_sfi(compile_set(prog("p1.rcc")))
    for start, end in sp.code_extents.values():
        for a in range(start, end):
            d = bare.decode(sp.words[a])
            if d and d[0] == bare.STORE:
                prev = bare.decode(sp.words[a - 1])
                assert prev[0] == bare.MASK and prev[1] == d[1] == bare.R_SFI


@pytest.mark.parametrize("word, fragment", [
    (bare.store(Reg.R_AUX1, Reg.R_COM), "store address"),
    (bare.jump(Reg.R_RA), "computed jump"),
    (bare.const(0, bare.R_SFI), "r_sfi written"),
    (bare.mask(bare.R_SFI, Reg.R_COM, 2), "mask must target"),
    (bare.jal(5), "outside slot"),
    (bare.TCALL_WORD, "privileged"),
])
def test_verifier_rejects(word, fragment):
    sp = lower_sfi(compile_set(prog("p1.rcc")))
    start, _ = sp.code_extents[sp.slots["Main"]]
    sp.words[start + 1] = word
    problems = verify_sfi(sp)
    assert any(fragment in p for p in problems), problems


def test_slot_overflow():
    with pytest.raises(SlotOverflow):
        lower_sfi(compile_set(prog("p1.rcc")), k=8)


def test_serialization_round_trip():
    sp = lower_sfi(compile_set(prog("p1.rcc")), k=13)
    back = parse_sfi(serialize_sfi(sp))
    assert back.words == sp.words and back.slots == sp.slots and back.k == 13
    assert run_sfi(back, 10000) == run_sfi(sp, 10000)


def test_out_of_slot_store_is_masked_not_trapped():
    # the store aims five slots away; masking wraps it onto b[0] in Main's own slot
    s = parse_program(
        "component Main { import C.f; buffer b[2];"
        " export proc main() = b[5 * 16384] := 7; C.f(b[0]) }"
        "component C { export proc f() = arg }")
    assert run_source(s, 1000) == Trace([], Ub("Main"))
    mp = compile_set(s)
    assert run_sfi(lower_sfi(mp), 100000) == Trace([Call("Main", "C", "f", 7), Ret("C", "Main", 7)], Halt())
    # the tag monitor stops the same store
    assert run_tagged(lower_tagged(mp), 100000) == Trace([], Trap("Main"))


def test_trampoline_rejects_unknown_procedure():
    sp = lower_sfi(compile_set(prog("p1.rcc")))
    start, _ = sp.code_extents[sp.slots["Main"]]
    c_slot = sp.slots["C"]
    attack = sp.copy()
    attack.words[start: start + 3] = [
        bare.const(c_slot, Reg.R_AUX1), bare.const(7, Reg.R_AUX2), bare.jal(T_CALL)]
    assert verify_sfi(attack) == []
    assert run_sfi(attack, 1000) == Trace([], Trap("Main"))


def test_return_without_call_halts_only_from_main():
    # an unmatched return from Main's slot ends the program, as Main.main returning does
    sp = lower_sfi(compile_set(prog("p0.rcc")))
    start, _ = sp.code_extents[sp.slots["Main"]]
    sp.words[start] = bare.jal(T_RET)
    assert run_sfi(sp, 100) == Trace([], Halt())


@settings(max_examples=80, deadline=None)
@given(seeds)
def test_agrees_with_cm_on_ub_free(seed):
    mp = compile_set(generate_component_set(seed, GenParams(ub_free=True)))
    f = fuel_inflation(10**4)
    assert run_sfi(lower_sfi(mp), 4 * f) == run_cm(mp, f)


@settings(max_examples=80, deadline=None)
@given(seeds, st.booleans())
def test_extends_source_ub_prefix(seed, mask_loads):
    s = generate_component_set(seed, GenParams(ub_free=False))
    src = run_source(s, 10**4)
    t = run_sfi(lower_sfi(compile_set(s), mask_loads=mask_loads), 4 * fuel_inflation(10**4))
    assert prefix_upto_ub(src, t, [c.name for c in s])


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(min_value=1, max_value=6), st.booleans())
def test_confinement_under_mutation(seed, count, mask_loads):
    s = generate_component_set(seed, GenParams(ub_free=False))
    rng = random.Random(seed)
    names = sorted(s.names())
    bad = set(rng.sample(names, rng.randint(1, len(names))))
    mp = mutate_machine(compile_set(s), bad, rng, count)
    sp = mutate_sfi(lower_sfi(mp, mask_loads=mask_loads), bad, rng, count)
    assert verify_sfi(sp) == []
    _, violations = run_sfi_checked(sp, 20000)
    assert violations == []


def test_mutation_only_touches_adversary_code():
    sp = lower_sfi(compile_set(prog("p1.rcc")))
    m = mutate_sfi(sp, {"C"}, random.Random(5), 10)
    start, end = sp.code_extents[sp.slots["C"]]
    changed = [a for a, (x, y) in enumerate(zip(sp.words, m.words)) if x != y]
    assert changed and all(start <= a < end for a in changed)


def test_audit_catches_unverified_escape():
    # bypass the verifier: an unmasked store into C's slot is reported by the audit
    sp = lower_sfi(compile_set(prog("p1.rcc")))
    start, _ = sp.code_extents[sp.slots["Main"]]
    target = sp.layout[("C", 0)]
    sp.words[start: start + 2] = [bare.const(target, Reg.R_AUX1), bare.store(Reg.R_AUX1, Reg.R_COM)]
    assert verify_sfi(sp)
    _, violations = run_sfi_checked(sp, 1000)
    assert violations and "store from slot 1" in violations[0]
