"""Independent big-step interpreter used as a test oracle.

Written directly from the evaluation rules, with none of the production
machinery: recursive evaluation, exceptions for exit and undefined behavior,
and its own memory representation (dict keyed by (component, buffer name)).
"""

from __future__ import annotations

from robustcc import lang
from robustcc.traces import Call, Halt, OutOfFuel, Ret, Trace, Ub

LO, HI = -(1 << 63), (1 << 63) - 1


def _wrap(x):
    return (x - LO) % (1 << 64) + LO


class _Exit(Exception):
    pass


class _UB(Exception):
    pass


class _Fuel(Exception):
    pass


class Oracle:
    def __init__(self, s, budget):
        self.s = s
        self.mem = {(c.name, b): [0] * n for c in s for b, n in c.buffers}
        self.events = []
        self.budget = budget
        self.comp = "Main"

    def tick(self):
        self.budget -= 1
        if self.budget < 0:
            raise _Fuel

    def ev(self, e, arg):
        self.tick()
        me = self.comp
        if isinstance(e, lang.Num):
            return e.value
        if isinstance(e, lang.Arg):
            return arg
        if isinstance(e, lang.Exit):
            raise _Exit
        if isinstance(e, lang.BufRef):
            return ("ref", me, e.name, 0)
        if isinstance(e, lang.Seq):
            self.ev(e.first, arg)
            return self.ev(e.second, arg)
        if isinstance(e, lang.If):
            c = self.ev(e.cond, arg)
            if not isinstance(c, int):
                raise _UB
            return self.ev(e.then if c else e.else_, arg)
        if isinstance(e, lang.BinOp):
            a = self.ev(e.left, arg)
            b = self.ev(e.right, arg)
            if isinstance(a, int) and isinstance(b, int):
                return {
                    "add": lambda: _wrap(a + b), "sub": lambda: _wrap(a - b), "mul": lambda: _wrap(a * b),
                    "eq": lambda: int(a == b), "leq": lambda: int(a <= b),
                }[e.op]()
            if isinstance(a, tuple) and isinstance(b, int) and e.op in ("add", "sub"):
                return a[:3] + (_wrap(a[3] + b if e.op == "add" else a[3] - b),)
            raise _UB
        if isinstance(e, lang.Load):
            cell = self._cell(self.ev(e.addr, arg))
            return self.mem[cell[0]][cell[1]]
        if isinstance(e, lang.Store):
            r = self.ev(e.addr, arg)
            v = self.ev(e.value, arg)
            cell = self._cell(r)
            self.mem[cell[0]][cell[1]] = v
            return v
        if isinstance(e, lang.CallExpr):
            v = self.ev(e.arg, arg)
            cross = e.comp != me
            if cross:
                if not isinstance(v, int):
                    raise _UB
                self.events.append(Call(me, e.comp, e.proc, v))
            self.comp = e.comp
            r = self.ev(self.s[e.comp].procedures[e.proc].body, v)
            if cross:
                if not isinstance(r, int):
                    raise _UB
                self.events.append(Ret(e.comp, me, r))
            self.comp = me
            return r
        raise TypeError(e)

    def _cell(self, r):
        if not isinstance(r, tuple) or r[1] != self.comp:
            raise _UB
        key = (r[1], r[2])
        if not 0 <= r[3] < len(self.mem[key]):
            raise _UB
        return key, r[3]


def oracle_run(s, budget=10**6) -> Trace:
    """Events and terminal of ``s``; OutOfFuel only if the step budget runs out."""
    o = Oracle(s, budget)
    try:
        o.ev(s["Main"].procedures["main"].body, 0)
        return Trace(o.events, Halt())
    except _Exit:
        return Trace(o.events, Halt())
    except _UB:
        return Trace(o.events, Ub(o.comp))
    except _Fuel:
        return Trace(o.events, OutOfFuel())
