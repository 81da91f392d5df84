"""Back-translation of a finite trace prefix into safe source components.

Each context role becomes a component that counts its activations in a
private one-cell buffer.  Control enters a role either by an incoming call
or by a return from one of its own outgoing calls; on its j-th activation
the role performs its j-th recorded boundary action: issue the recorded call
(then keep replaying when control comes back), return the recorded value, or
``exit`` when the trace ended while it was running.  Received values are
ignored.  The only memory access is the literal ``ctr[0]``, so the produced
components cannot have undefined behavior.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..lang import (
    BinOp, CallExpr, Component, ComponentInterface, ComponentSet, Exit, If, Num, Procedure, Seq,
    index, index_store,
)
from ..traces import Call, Event, Ret, Trace, check_well_bracketed

COUNTER = "ctr"


class BackTranslationError(ValueError):
    """The trace projection is ill-bracketed or does not respect the interface."""


@dataclass(frozen=True)
class _CallAction:
    comp: str
    proc: str
    arg: int


@dataclass(frozen=True)
class _RetAction:
    value: int


def _actions(events: tuple[Event, ...], role: str) -> tuple[list, bool, set[str]]:
    """Outgoing actions of ``role``, whether it is running at the end, incoming procs."""
    active = role == "Main"
    actions = []
    entered = set()
    for i, ev in enumerate(events):
        if isinstance(ev, Call):
            incoming, outgoing = ev.callee == role, ev.caller == role
        else:
            incoming, outgoing = ev.to == role, ev.from_ == role
        if incoming:
            if active:
                raise BackTranslationError(f"event {i}: {role} entered while already running")
            active = True
            if isinstance(ev, Call):
                entered.add(ev.proc)
        elif outgoing:
            if not active:
                raise BackTranslationError(f"event {i}: {role} acts while not running")
            active = False
            actions.append(_CallAction(ev.callee, ev.proc, ev.arg) if isinstance(ev, Call) else _RetAction(ev.value))
    return actions, active, entered


def _fresh(base: str, taken) -> str:
    name = base
    while name in taken:
        name += "_"
    return name


def _dispatch(leaves: list, lo: int, hi: int):
    """Balanced if-tree selecting ``leaves[j - 1]`` for counter value j in [lo, hi]."""
    if lo == hi:
        return leaves[lo - 1]
    mid = (lo + hi) // 2
    return If(BinOp("leq", index(COUNTER, Num(0)), Num(mid)), _dispatch(leaves, lo, mid), _dispatch(leaves, mid + 1, hi))


def back_translate(t: Trace, iface: dict[str, ComponentInterface], roles) -> ComponentSet:
    events = t.events if isinstance(t, Trace) else tuple(t)
    problem = check_well_bracketed(events)
    if problem:
        raise BackTranslationError(problem)
    roles = set(roles)
    comps = []
    for role in sorted(roles):
        actions, active_at_end, entered = _actions(events, role)
        own = iface.get(role)
        exports = set(own.exports) if own else set()
        if role == "Main":
            exports.add("main")
        if own is not None and not entered <= exports:
            raise BackTranslationError(f"trace enters {role} through non-exported {sorted(entered - exports)}")
        exports |= entered

        imports = []
        for a in actions:
            if isinstance(a, _CallAction):
                target = iface.get(a.comp)
                if target is not None and a.proc not in target.exports:
                    raise BackTranslationError(f"{role} calls {a.comp}.{a.proc}, which is not exported")
                if (a.comp, a.proc) not in imports:
                    imports.append((a.comp, a.proc))

        step = _fresh("replay", exports)
        leaves = []
        for a in actions:
            if isinstance(a, _CallAction):
                leaves.append(Seq(CallExpr(a.comp, a.proc, Num(a.arg)), CallExpr(role, step, Num(0))))
            else:
                leaves.append(Num(a.value))
        if active_at_end:
            leaves.append(Exit())
        n = len(leaves)
        bump = index_store(COUNTER, Num(0), BinOp("add", index(COUNTER, Num(0)), Num(1)))
        if n == 0:
            body = Seq(bump, Exit())
        else:
            tree = _dispatch(leaves, 1, n)
            body = Seq(bump, If(BinOp("leq", index(COUNTER, Num(0)), Num(n)), tree, Exit()))

        procs = {p: Procedure(True, CallExpr(role, step, Num(0))) for p in sorted(exports)}
        procs[step] = Procedure(False, body)
        comps.append(Component(role, tuple(imports), ((COUNTER, 1),), procs))
    return ComponentSet.of(*comps)
