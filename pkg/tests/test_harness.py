import os
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import DATA
from robustcc.compiler import compile_set
from robustcc.harness import (
    COUNTEREXAMPLE, INCONCLUSIVE, PASS, BackTranslationError, GenParams, back_translate, compromise_game,
    generate_component_set, generate_context, judge, mix, mutate_machine, random_case, rc_test, splitmix64,
    validate_game_result,
)
from robustcc.harness import rctest as rctest_module
from robustcc.lang import (
    CallExpr, ComponentSet, check_well_formed, format_program, interface_of, is_closed, link, parse_program,
    subexprs,
)
from robustcc.machine import BinOp, MachineComponent, run_cm
from robustcc.source import run_source
from robustcc.traces import Call, Halt, OutOfFuel, Ret, Trace, Trap, Ub, check_well_bracketed

seeds = st.integers(min_value=0, max_value=2**32)


def load(name):
    with open(os.path.join(DATA, name)) as f:
        return parse_program(f.read())


# ---------------------------------------------------------------- seeds

def test_splitmix64_reference_values():
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def test_mix_separates_streams():
    vals = {mix(7, i) for i in range(1000)} | {mix(8, i) for i in range(1000)}
    assert len(vals) == 2000


# ---------------------------------------------------------------- generator

def test_params_validation():
    with pytest.raises(ValueError):
        GenParams(components=(3, 2))
    with pytest.raises(ValueError):
        GenParams(buffer_length=(0, 2))
    with pytest.raises(ValueError):
        GenParams(weights={"num": -1.0})


@settings(max_examples=100, deadline=None)
@given(seeds, st.booleans())
def test_generated_sets_are_closed_and_acyclic(seed, ub_free):
    p = GenParams(ub_free=ub_free)
    s = generate_component_set(seed, p)
    assert is_closed(s)
    assert generate_component_set(seed, p) == s
    edges = {}
    for c in s:
        for q, proc in c.procedures.items():
            edges[(c.name, q)] = {(e.comp, e.proc) for e in subexprs(proc.body) if isinstance(e, CallExpr)}
    seen, done = set(), set()

    def visit(n):
        assert n not in seen or n in done, "recursive call graph"
        if n in done:
            return
        seen.add(n)
        for m in edges[n]:
            visit(m)
        done.add(n)

    for n in edges:
        visit(n)


def test_ub_mode_produces_ub_sometimes():
    ubs = sum(isinstance(run_source(generate_component_set(s, GenParams(ub_free=False)), 10**5).terminal, Ub)
              for s in range(200))
    assert 20 < ubs < 180


# ---------------------------------------------------------------- back-translation

def test_back_translate_p1_main():
    p1 = load("p1.rcc")
    t = run_source(p1, 100)
    ctx = back_translate(t, interface_of(p1), {"Main"})
    assert check_well_formed(ctx).ok
    replay = run_source(link(ComponentSet.of(p1["C"]), ctx), 1000)
    assert replay == t


def test_back_translate_ignores_received_values():
    # the replay issues the recorded calls even if the program answers differently
    t = Trace([Call("Main", "C", "f", 5), Ret("C", "Main", 6), Call("Main", "C", "f", 8)], Trap("C"))
    p = parse_program("component C { export proc f() = arg * 100 }")
    ctx = back_translate(t, interface_of(p), {"Main"})
    out = run_source(link(p, ctx), 1000)
    assert [e for e in out.events if isinstance(e, Call)] == [Call("Main", "C", "f", 5), Call("Main", "C", "f", 8)]
    assert isinstance(out.terminal, Halt)


def test_back_translate_replays_returns_and_reentry():
    src = parse_program(
        "component Main { import C.f; export proc f() = arg + 10 export proc main() = C.f(1) + C.f(2) }"
        "component C { import Main.f; export proc f() = Main.f(arg) * 2 }")
    t = run_source(src, 1000)
    assert len(t.events) == 8
    for roles in ({"Main"}, {"C"}, {"Main", "C"}):
        ctx = back_translate(t, interface_of(src), roles)
        out = run_source(link(src.without(roles), ctx), 10**4)
        assert out.events == t.events


def test_back_translate_avoids_name_clash():
    src = parse_program("component Main { import C.replay; export proc main() = C.replay(1) }"
                        "component C { export proc replay() = 3 }")
    t = run_source(src, 100)
    ctx = back_translate(t, interface_of(src), {"C"})
    assert "replay" in ctx["C"].exports and len(ctx["C"].procedures) == 2
    assert run_source(link(src.without({"C"}), ctx), 100) == t


@pytest.mark.parametrize("events", [
    [Ret("C", "Main", 1)],
    [Call("Main", "C", "f", 1), Ret("D", "Main", 1)],
    [Call("Main", "C", "g", 1)],  # g is not exported
])
def test_back_translate_rejects_bad_traces(events):
    iface = interface_of(load("p1.rcc"))
    with pytest.raises(BackTranslationError):
        back_translate(Trace(events, Halt()), iface, {"Main"})


@settings(max_examples=100, deadline=None)
@given(seeds, st.booleans(), st.randoms(use_true_random=False))
def test_back_translation_fidelity(seed, ub_free, rnd):
    s = generate_component_set(seed, GenParams(ub_free=ub_free))
    t = run_source(s, 10**5)
    names = sorted(s.names())
    roles = {n for n in names if rnd.random() < 0.5} or {rnd.choice(names)}
    ctx = back_translate(t, interface_of(s), roles)
    out = run_source(link(s.without(roles), ctx), 10**6)
    assert out.events == t.events
    assert not (isinstance(out.terminal, Ub) and out.terminal.comp in roles)


# ---------------------------------------------------------------- mutation

def test_mutation_is_deterministic_and_local():
    mp = compile_set(load("p1.rcc"))
    a = mutate_machine(mp, {"C"}, random.Random(1), 5)
    b = mutate_machine(mp, {"C"}, random.Random(1), 5)
    assert a == b
    assert a["Main"] == mp["Main"]
    assert len(a["C"].code) == len(mp["C"].code)


# ---------------------------------------------------------------- rc_test

def test_judge():
    c, r = Call("Main", "C", "f", 1), Ret("C", "Main", 2)
    t = Trace([c, r], Halt())
    assert judge(t, t, {"C"}, {"Main"}).kind == PASS
    assert judge(Trace([c], Ub("C")), t, {"C"}, {"Main"}).kind == PASS
    assert judge(Trace([c], Ub("Main")), t, {"C"}, {"Main"}).kind == COUNTEREXAMPLE
    assert judge(Trace([c], OutOfFuel()), t, {"C"}, {"Main"}).kind == INCONCLUSIVE
    assert judge(Trace([c], Halt()), Trace([c], Trap("Main")), {"C"}, {"Main"}).kind == PASS
    assert judge(Trace([c], Halt()), Trace([c], Trap("C")), {"C"}, {"Main"}).kind == COUNTEREXAMPLE
    assert judge(Trace([c, r], Halt()), Trace([c, Ret("C", "Main", 3)], Halt()), {"C"}, {"Main"}).kind == COUNTEREXAMPLE


@pytest.mark.parametrize("sem", ["cm", "tag", "sfi"])
def test_rc_test_p1_c_alone(sem):
    p1 = load("p1.rcc")
    p = ComponentSet.of(p1["C"])
    r = rc_test(p, 0, 1000, sem, context=ComponentSet.of(p1["Main"]))
    assert r.verdict.kind == PASS
    assert r.source == r.target == run_source(p1, 1000)
    r = rc_test(p, 3, 1000, sem)
    assert r.verdict.kind == PASS and r.source == r.target


def test_generated_context_fills_open_imports():
    p, _ = random_case(11)
    ctx = generate_context(p, 11)
    assert is_closed(link(p, ctx))


@settings(max_examples=40, deadline=None)
@given(seeds, st.sampled_from(["cm", "tag", "sfi"]), st.sampled_from([0, 1, 4]))
def test_rc_test_never_finds_counterexamples(seed, sem, mutations):
    p, _ = random_case(seed)
    assert rc_test(p, seed, 1000, sem, mutations=mutations).verdict.kind != COUNTEREXAMPLE


def test_rc_test_catches_a_miscompiling_compiler(monkeypatch):
    honest = rctest_module.compile_set

    def swap_add_for_sub(s, stack_size=4096):
        mp = honest(s, stack_size)
        for mc in list(mp):
            code = tuple(BinOp("sub", i.rd, i.r1, i.r2) if isinstance(i, BinOp) and i.op == "add" else i
                         for i in mc.code)
            mp = mp.replace(MachineComponent(mc.name, code, mc.blocks, mc.entries, mc.imports))
        return mp

    monkeypatch.setattr(rctest_module, "compile_set", swap_add_for_sub)
    verdicts = [rc_test(random_case(s)[0], s, 1000, "cm").verdict.kind for s in range(60)]
    assert COUNTEREXAMPLE in verdicts


# ---------------------------------------------------------------- compromise game

def test_game_p1():
    p1 = load("p1.rcc")
    r = compromise_game(p1, 1000)
    assert r.verdict.kind == PASS and r.steps == [] and r.final == r.target == run_source(p1, 1000)
    assert validate_game_result(r) == []


def test_game_compromises_overflowing_component():
    s = parse_program(
        "component Main { import C.f; export proc main() = C.f(1); C.f(2) }"
        "component C { buffer b[2]; export proc f() = if arg == 2 then b[7] := 1 else arg }")
    r = compromise_game(s, 1000)
    assert r.verdict.kind == PASS
    assert r.sequence == ["C"]
    assert r.steps[0].source == Trace([Call("Main", "C", "f", 1), Ret("C", "Main", 1), Call("Main", "C", "f", 2)], Ub("C"))
    assert r.target.terminal == Trap("C")
    assert validate_game_result(r) == []


def test_validation_detects_tampering():
    s = parse_program(
        "component Main { import C.f; export proc main() = C.f(1) }"
        "component C { buffer b[2]; export proc f() = b[7] := 1 }")
    r = compromise_game(s, 1000)
    assert r.verdict.kind == PASS and validate_game_result(r) == []
    r.target = Trace([Call("Main", "C", "f", 2)], Trap("C"))
    assert validate_game_result(r)


@settings(max_examples=80, deadline=None)
@given(seeds, st.booleans())
def test_game_properties(seed, ub_free):
    s = generate_component_set(seed, GenParams(ub_free=ub_free))
    r = compromise_game(s, 10**4)
    assert r.verdict.kind != COUNTEREXAMPLE, r.verdict
    if r.verdict.kind == PASS:
        assert validate_game_result(r) == []
    if ub_free:
        assert r.steps == []
    assert len(set(r.sequence)) == len(r.sequence)
    assert check_well_bracketed(r.target.events) is None
