"""Randomized robust-compilation testing.

One case links a source partial program ``p`` with a generated target
context, runs it at a chosen semantics, back-translates the observed trace
into a source context and checks that the source run of that context with
``p`` explains the target trace up to undefined behavior of ``p``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..compiler import DEFAULT_STACK_SIZE, compile_set, fuel_inflation
from ..lang import (
    CallExpr, Component, ComponentSet, Num, Procedure, Seq, check_well_formed, interface_of, link,
)
from ..machine import MachineProgram, run_cm
from ..sfi import DEFAULT_SLOT_BITS, lower_sfi, run_sfi
from ..source import run_source
from ..tagged import DEFAULT_MEMORY_SIZE, lower_tagged, run_tagged
from ..traces import OutOfFuel, Trace, Trap, prefix_upto_ub
from .backtranslate import back_translate
from .generator import ExprGen, GenParams, generate_component_set
from .mutate import mutate_machine, mutate_sfi, mutate_tagged
from .seeds import CONTEXT, MUTATE, PARAMS, SPLIT, rng_for

SEMANTICS = ("cm", "tag", "sfi")

PASS = "pass"
COUNTEREXAMPLE = "counterexample"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Verdict:
    kind: str
    reason: str = ""

    def __str__(self):
        return self.kind if not self.reason else f"{self.kind}: {self.reason}"


@dataclass
class TargetConfig:
    stack_size: int = DEFAULT_STACK_SIZE
    mem_size: int = DEFAULT_MEMORY_SIZE
    slot_bits: int = DEFAULT_SLOT_BITS
    mask_loads: bool = False


def target_fuel(fuel: int, sem: str) -> int:
    """Target-side budget for a source budget ``fuel``.

    The compiled machine gets ``F(fuel)``; the bare back ends spend a few
    extra steps per abstract instruction (masks, trampolines), so they get
    four times that.
    """
    f = fuel_inflation(fuel)
    return f if sem == "cm" else 4 * f


def run_target(mp: MachineProgram, sem: str, fuel: int, cfg: TargetConfig | None = None,
               comps=(), rng: random.Random | None = None, mutations: int = 0) -> Trace:
    """Lower ``mp`` for ``sem`` and run it, mutating ``comps`` at the bare level if asked."""
    cfg = cfg or TargetConfig()
    if sem == "cm":
        return run_cm(mp, fuel)
    if sem == "tag":
        tp = lower_tagged(mp, cfg.mem_size)
        if mutations and rng is not None:
            tp = mutate_tagged(tp, comps, rng, mutations)
        return run_tagged(tp, fuel)
    if sem == "sfi":
        sp = lower_sfi(mp, cfg.slot_bits, cfg.mask_loads)
        if mutations and rng is not None:
            sp = mutate_sfi(sp, comps, rng, mutations)
        return run_sfi(sp, fuel)
    raise ValueError(f"unknown target semantics {sem!r}")


def open_imports(p: ComponentSet) -> dict[str, set[str]]:
    """Procedures that ``p`` needs from components it does not define."""
    need: dict[str, set[str]] = {}
    for c in p:
        for comp, proc in c.imports:
            if comp not in p.components:
                need.setdefault(comp, set()).add(proc)
    if "Main" not in p.components:
        need.setdefault("Main", set()).add("main")
    return need


def generate_context(p: ComponentSet, seed: int) -> ComponentSet:
    """A safe source context supplying every open import of ``p``.

    Context ``Main.main`` drives the program by calling ``p``'s exports;
    other context procedures compute from their argument and own buffers.
    """
    rng = rng_for(seed, CONTEXT)
    params = GenParams(ub_free=True, depth=2)
    p_exports = [(c.name, q) for c in p for q in sorted(c.exports)]
    comps = []
    for name, procs in sorted(open_imports(p).items()):
        buffers = [(f"b{j}", rng.randint(1, 3)) for j in range(rng.randint(0, 1))]
        imports = []
        bodies = {}
        for q in sorted(procs):
            g = ExprGen(rng, params, name, buffers, [])
            body = g.expr(params.depth)
            if name == "Main" and q == "main" and p_exports:
                for _ in range(rng.randint(1, 3)):
                    target = rng.choice(p_exports)
                    if target not in imports:
                        imports.append(target)
                    body = Seq(CallExpr(target[0], target[1], Num(rng.randrange(-3, 20))), body)
            bodies[q] = Procedure(True, body)
        comps.append(Component(name, tuple(imports), tuple(buffers), bodies))
    return ComponentSet.of(*comps)


def split_program(s: ComponentSet, seed: int) -> ComponentSet:
    """A nonempty subset of ``s`` used as the program side of a case."""
    rng = rng_for(seed, SPLIT)
    names = sorted(s.names())
    keep = [n for n in names if rng.random() < 0.5] or [rng.choice(names)]
    return ComponentSet.of(*(s.components[n] for n in keep))


@dataclass
class RcResult:
    verdict: Verdict
    target: Trace | None = None
    source: Trace | None = None
    context: ComponentSet | None = None
    replay: ComponentSet | None = None
    notes: list[str] = field(default_factory=list)


def rc_test(p: ComponentSet, seed: int, fuel: int, sem: str = "cm", context: ComponentSet | None = None,
            mutations: int = 0, cfg: TargetConfig | None = None) -> RcResult:
    """Run one robust-compilation case for program side ``p``."""
    if sem not in SEMANTICS:
        raise ValueError(f"unknown target semantics {sem!r}")
    cfg = cfg or TargetConfig()
    ctx = context if context is not None else generate_context(p, seed)
    whole = link(p, ctx)
    report = check_well_formed(whole)
    if not report.ok:
        raise ValueError("; ".join(report.errors))
    ctx_names = set(ctx.names())
    rng = rng_for(seed, MUTATE)

    # separate compilation: the linked target is the union of per-component outputs
    mp = compile_set(whole, cfg.stack_size)
    if mutations and sem == "cm":
        mp = mutate_machine(mp, ctx_names, rng, mutations)
    elif mutations and rng.random() < 0.5:
        mp = mutate_machine(mp, ctx_names, rng, max(1, mutations // 2))
    t = run_target(mp, sem, target_fuel(fuel, sem), cfg, ctx_names, rng, mutations if sem != "cm" else 0)

    replay = back_translate(t, interface_of(whole), ctx_names)
    src = run_source(link(p, replay), fuel)
    return RcResult(judge(src, t, p.names(), ctx_names), t, src, ctx, replay)


def judge(src: Trace, t: Trace, program_comps, context_comps) -> Verdict:
    """Verdict for source replay ``src`` against target trace ``t``."""
    if prefix_upto_ub(src, t, program_comps):
        return Verdict(PASS)
    if isinstance(t.terminal, OutOfFuel) or isinstance(src.terminal, OutOfFuel):
        return Verdict(INCONCLUSIVE, "fuel exhausted")
    if src.events == t.events and isinstance(t.terminal, Trap) and t.terminal.comp in set(context_comps):
        # a context trap ends observation; the source replay stops there too
        return Verdict(PASS)
    return Verdict(COUNTEREXAMPLE, "source replay does not explain the target trace")


def random_case(seed: int, ub_free: bool | None = None) -> tuple[ComponentSet, GenParams]:
    """Program side for case ``seed``: a generated set cut down to a random subset."""
    rng = rng_for(seed, PARAMS)
    if ub_free is None:
        ub_free = rng.random() < 0.5
    params = GenParams(ub_free=ub_free)
    s = generate_component_set(seed, params)
    return split_program(s, seed), params
