"""Random well-formed component sets for property-based testing.

Procedures are put in a random global order and may only call procedures
that come later in it, so generated programs never recurse and always
terminate.  With ``ub_free`` set, buffers are only indexed by in-bounds
literals and references never leave their component, so the source run can
never end in undefined behavior.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..lang import (
    Arg, BinOp, BufRef, CallExpr, Component, ComponentSet, Exit, If, Load, Num, Procedure,
    Seq, Store, index, index_store,
)
from .seeds import GEN, rng_for

DEFAULT_WEIGHTS = {
    "num": 3.0,
    "arg": 2.0,
    "binop": 3.0,
    "seq": 1.5,
    "if": 1.0,
    "load": 1.5,
    "store": 1.5,
    "call": 5.0,
    "exit": 0.1,
    # only drawn when ub_free is off
    "wild_index": 1.5,
    "deref": 0.5,
    "ref": 0.7,
}


@dataclass
class GenParams:
    components: tuple[int, int] = (2, 4)
    buffers: tuple[int, int] = (0, 2)
    buffer_length: tuple[int, int] = (1, 4)
    procedures: tuple[int, int] = (1, 3)
    depth: int = 3
    weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    ub_free: bool = True
    max_calls: int = 2

    def __post_init__(self):
        for lo, hi in (self.components, self.buffers, self.buffer_length, self.procedures):
            if lo > hi:
                raise ValueError("empty range in GenParams")
        if self.components[0] < 1 or self.buffer_length[0] < 1 or self.procedures[0] < 1:
            raise ValueError("GenParams lower bounds must allow a valid program")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("negative construct weight")


_UB_CONSTRUCTS = ("wild_index", "deref", "ref")


class ExprGen:
    """Expression generator for one procedure body."""

    def __init__(self, rng: random.Random, params: GenParams, comp: str,
                 buffers: list[tuple[str, int]], callees: list[tuple[str, str]]):
        self.rng = rng
        self.p = params
        self.comp = comp
        self.buffers = buffers
        self.callees = callees
        self.calls_left = params.max_calls
        self.used_calls: list[tuple[str, str]] = []

    def _small(self) -> int:
        return self.rng.choice((0, 1, 2, 3, 5, 7, 10, 42, self.rng.randrange(100)))

    def _literal_index(self, n: int) -> int:
        if self.p.ub_free:
            return self.rng.randrange(n)
        return self.rng.randrange(n + 2)

    def leaf(self):
        opts = ["num", "arg"]
        if self.buffers:
            opts.append("load")
        kind = self.rng.choice(opts)
        if kind == "num":
            return Num(self._small())
        if kind == "arg":
            return Arg()
        b, n = self.rng.choice(self.buffers)
        return index(b, Num(self._literal_index(n)))

    def call(self, depth: int):
        # crossing calls are what the harness observes, so prefer them
        self.calls_left -= 1
        cross = [t for t in self.callees if t[0] != self.comp]
        pool = cross if cross and self.rng.random() < 0.8 else self.callees
        target = self.rng.choice(pool)
        self.used_calls.append(target)
        return CallExpr(target[0], target[1], self.expr(depth))

    def expr(self, depth: int):
        if depth <= 0:
            return self.leaf()
        w = dict(self.p.weights)
        if self.p.ub_free:
            for k in _UB_CONSTRUCTS:
                w.pop(k, None)
        if not self.buffers:
            for k in ("load", "store", "wild_index", "ref"):
                w.pop(k, None)
        if not self.callees or self.calls_left <= 0:
            w.pop("call", None)
        kinds = [k for k, v in w.items() if v > 0]
        kind = self.rng.choices(kinds, [w[k] for k in kinds])[0]
        d = depth - 1
        rng = self.rng
        if kind == "num":
            return Num(self._small())
        if kind == "arg":
            return Arg()
        if kind == "binop":
            return BinOp(rng.choice(("add", "sub", "mul", "eq", "leq")), self.expr(d), self.expr(d))
        if kind == "seq":
            return Seq(self.expr(d), self.expr(d))
        if kind == "if":
            return If(self.expr(d), self.expr(d), self.expr(d))
        if kind == "load":
            b, n = rng.choice(self.buffers)
            return index(b, Num(self._literal_index(n)))
        if kind == "store":
            b, n = rng.choice(self.buffers)
            return index_store(b, Num(self._literal_index(n)), self.expr(d))
        if kind == "call":
            return self.call(d)
        if kind == "exit":
            return Exit()
        if kind == "wild_index":
            b, _ = rng.choice(self.buffers)
            ix = rng.choice((Arg(), self.expr(d), Num(rng.randrange(8))))
            if rng.random() < 0.5:
                return index(b, ix)
            return index_store(b, ix, self.expr(d))
        if kind == "deref":
            return Load(self.expr(d))
        if kind == "ref":
            b, _ = rng.choice(self.buffers)
            r = BufRef(b)
            choice = rng.randrange(3)
            if choice == 0:
                return r
            if choice == 1:
                return BinOp(rng.choice(("add", "sub", "eq")), r, self.expr(d))
            return Seq(self.expr(d), r)
        raise AssertionError(kind)


def generate_component_set(seed: int, params: GenParams | None = None) -> ComponentSet:
    """Deterministic in ``(seed, params)``; always closed and well-formed."""
    p = params or GenParams()
    rng = rng_for(seed, GEN)
    n = rng.randint(*p.components)
    names = ["Main"] + [f"C{i}" for i in range(1, n)]
    buffers = {}
    procs: dict[str, list[str]] = {}
    for c in names:
        buffers[c] = [(f"b{j}", rng.randint(*p.buffer_length)) for j in range(rng.randint(*p.buffers))]
        count = rng.randint(*p.procedures)
        procs[c] = (["main"] + [f"p{j}" for j in range(1, count)]) if c == "Main" else [f"p{j}" for j in range(count)]

    rest = [(c, q) for c in names for q in procs[c] if (c, q) != ("Main", "main")]
    rng.shuffle(rest)
    order = [("Main", "main")] + rest

    bodies = {}
    imports: dict[str, list[tuple[str, str]]] = {c: [] for c in names}
    exported = {("Main", "main")}
    for pos, (c, q) in enumerate(order):
        g = ExprGen(rng, p, c, buffers[c], order[pos + 1:])
        body = g.expr(p.depth)
        if pos == 0 and g.callees and g.calls_left > 0:
            body = Seq(g.call(p.depth - 1), body)
        bodies[(c, q)] = body
        for tc, tq in g.used_calls:
            if tc != c:
                exported.add((tc, tq))
                if (tc, tq) not in imports[c]:
                    imports[c].append((tc, tq))
    for key in order:
        if rng.random() < 0.2:
            exported.add(key)

    comps = []
    for c in names:
        comps.append(Component(
            c,
            tuple(imports[c]),
            tuple(buffers[c]),
            {q: Procedure((c, q) in exported, bodies[(c, q)]) for q in procs[c]},
        ))
    return ComponentSet.of(*comps)
