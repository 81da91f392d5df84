"""The dynamic compromise game.

Starting from a closed set of components, run the compiled program once to
get the target trace ``t``.  Then repeatedly run the source program: while it
ends with undefined behavior in some component ``C``, check that the trace
so far is a strict prefix of ``t`` up to ``C``'s undefined behavior, and
replace ``C`` by a back-translation of ``t`` for that role.  Once the source
run stops without undefined behavior, its trace must coincide with ``t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..compiler import DEFAULT_STACK_SIZE, compile_set, fuel_inflation
from ..lang import Component, ComponentSet, interface_of
from ..machine import run_cm
from ..source import run_source
from ..traces import Halt, OutOfFuel, Trace, Trap, Ub, prefix_upto_ub
from .backtranslate import BackTranslationError, back_translate
from .rctest import COUNTEREXAMPLE, INCONCLUSIVE, PASS, Verdict

HARNESS = "harness"
SECURITY = "security violation"


@dataclass
class CompromiseStep:
    comp: str
    source: Trace  # source trace of the program before this replacement, ending in Ub(comp)
    replacement: Component


@dataclass
class GameResult:
    original: ComponentSet
    fuel: int
    target: Trace
    steps: list[CompromiseStep] = field(default_factory=list)
    final: Trace | None = None
    verdict: Verdict = Verdict(PASS)
    stack_size: int = DEFAULT_STACK_SIZE

    @property
    def sequence(self) -> list[str]:
        return [s.comp for s in self.steps]


def _partial(original: ComponentSet, steps) -> ComponentSet:
    s = original
    for st in steps:
        s = s.replace(st.replacement)
    return s


def compromise_game(s: ComponentSet, fuel: int, stack_size: int = DEFAULT_STACK_SIZE) -> GameResult:
    target = run_cm(compile_set(s, stack_size), fuel_inflation(fuel))
    res = GameResult(s, fuel, target, stack_size=stack_size)
    if isinstance(target.terminal, OutOfFuel):
        res.verdict = Verdict(INCONCLUSIVE, "target run exhausted its fuel")
        return res
    iface = interface_of(s)
    current = s
    compromised: set[str] = set()
    for _ in range(len(s.names()) + 1):
        src = run_source(current, fuel)
        if isinstance(src.terminal, OutOfFuel):
            res.final = src
            res.verdict = Verdict(INCONCLUSIVE, "source run exhausted its fuel")
            return res
        if not isinstance(src.terminal, Ub):
            res.final = src
            break
        comp = src.terminal.comp
        if comp in compromised:
            res.final = src
            res.verdict = Verdict(COUNTEREXAMPLE, f"{HARNESS}: back-translated {comp} has undefined behavior")
            return res
        if not prefix_upto_ub(src, target, [comp], strict=True):
            res.final = src
            res.verdict = Verdict(COUNTEREXAMPLE, f"{SECURITY}: source trace before {comp}'s UB is not a prefix of the target trace")
            return res
        if current is not s:
            # the partially compromised program compiles to the same prefix
            tk = run_cm(compile_set(current, stack_size), fuel_inflation(fuel))
            if not prefix_upto_ub(src, tk, [comp], strict=True):
                res.final = src
                res.verdict = Verdict(COUNTEREXAMPLE, f"{SECURITY}: compiled intermediate program leaves the prefix before {comp}'s UB")
                return res
        try:
            ctx = back_translate(target, iface, {comp})
        except BackTranslationError as e:
            res.final = src
            res.verdict = Verdict(COUNTEREXAMPLE, f"{HARNESS}: {e}")
            return res
        replacement = ctx.components[comp]
        res.steps.append(CompromiseStep(comp, src, replacement))
        compromised.add(comp)
        current = current.replace(replacement)
    else:
        res.verdict = Verdict(COUNTEREXAMPLE, f"{HARNESS}: more compromises than components")
        return res

    final = res.final
    ok_end = isinstance(target.terminal, Halt) or (
        isinstance(target.terminal, Trap) and target.terminal.comp in compromised
    )
    if final.events == target.events and ok_end and isinstance(final.terminal, Halt):
        res.verdict = Verdict(PASS)
    else:
        res.verdict = Verdict(COUNTEREXAMPLE, f"{SECURITY}: final source trace differs from the target trace")
    return res


def validate_game_result(r: GameResult) -> list[str]:
    """Re-check a game result from its own contents; returns the problems found."""
    problems = []
    names = r.original.names()
    comps = r.sequence
    if len(set(comps)) != len(comps):
        problems.append("a component was compromised twice")
    for c in comps:
        if c not in names:
            problems.append(f"compromised {c} is not part of the program")
    target = run_cm(compile_set(r.original, r.stack_size), fuel_inflation(r.fuel))
    if target != r.target:
        problems.append("stored target trace does not match a fresh run")
    last = -1
    for j, st in enumerate(r.steps):
        before = _partial(r.original, r.steps[:j])
        again = run_source(before, r.fuel)
        if again != st.source:
            problems.append(f"step {j}: stored source trace does not replay")
        if not prefix_upto_ub(st.source, r.target, [st.comp], strict=True):
            problems.append(f"step {j}: source trace is not a strict UB-prefix of the target trace")
        tk = run_cm(compile_set(before, r.stack_size), fuel_inflation(r.fuel))
        if not prefix_upto_ub(st.source, tk, [st.comp], strict=True):
            problems.append(f"step {j}: compiled partial program leaves the prefix")
        if len(st.source.events) < last:
            problems.append(f"step {j}: explained prefix got shorter")
        last = len(st.source.events)
    if r.verdict.kind == PASS:
        final = run_source(_partial(r.original, r.steps), r.fuel)
        if final != r.final:
            problems.append("stored final trace does not replay")
        if final.events != r.target.events:
            problems.append("final source trace differs from the target trace")
        if isinstance(final.terminal, Ub):
            problems.append("final source run has undefined behavior")
    return problems
