"""Trace algebra: cross-component events, terminals, prefix orders, text format.

Trace file format (one record per line, single-space separated)::

    CALL <caller> <callee> <proc> <int>
    RET <from> <to> <int>
    END HALT | END UB <comp> | END TRAP <comp> | END FUEL
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union


@dataclass(frozen=True, slots=True)
class Call:
    caller: str
    callee: str
    proc: str
    arg: int

    def __post_init__(self):
        if self.caller == self.callee:
            raise ValueError(f"cross-component call event with caller == callee ({self.caller})")


@dataclass(frozen=True, slots=True)
class Ret:
    from_: str
    to: str
    value: int

    def __post_init__(self):
        if self.from_ == self.to:
            raise ValueError(f"cross-component return event with from == to ({self.to})")


Event = Union[Call, Ret]


@dataclass(frozen=True, slots=True)
class Halt:
    pass


@dataclass(frozen=True, slots=True)
class Ub:
    comp: str


@dataclass(frozen=True, slots=True)
class Trap:
    comp: str


@dataclass(frozen=True, slots=True)
class OutOfFuel:
    pass


Terminal = Union[Halt, Ub, Trap, OutOfFuel]


@dataclass(frozen=True)
class Trace:
    events: tuple[Event, ...]
    terminal: Terminal

    def __init__(self, events: Iterable[Event], terminal: Terminal):
        object.__setattr__(self, "events", tuple(events))
        object.__setattr__(self, "terminal", terminal)

    def __str__(self):
        return serialize_trace(self)


# Source and target runs both produce traces; the names document which side.
SourceOutcome = Trace
CmOutcome = Trace


def is_prefix(a: Trace, b: Trace) -> bool:
    """True iff the events of ``a`` form a list prefix of the events of ``b``."""
    n = len(a.events)
    return n <= len(b.events) and b.events[:n] == a.events


def prefix_upto_ub(src: Trace, tgt: Trace, comps: Iterable[str], strict: bool = False) -> bool:
    """The UB-ending prefix orders relating a source trace to a target trace.

    Non-strict: ``src`` equals ``tgt`` exactly, or ``src`` is an event prefix of
    ``tgt`` ending in ``Ub(C)`` for some ``C`` in ``comps``.  Strict: only the
    UB clause, and ``comps`` must name exactly one component.  A source trace
    that ran out of fuel never satisfies the equality clause.
    """
    comps = {comps} if isinstance(comps, str) else set(comps)
    if strict and len(comps) != 1:
        raise ValueError("strict UB-prefix relation takes exactly one component")
    ub_clause = (
        isinstance(src.terminal, Ub) and src.terminal.comp in comps and is_prefix(src, tgt)
    )
    if strict:
        return ub_clause
    if isinstance(src.terminal, OutOfFuel):
        return False
    return src == tgt or ub_clause


def check_well_bracketed(events: Sequence[Event]) -> str | None:
    """Return a description of the first bracketing violation, or None.

    Every ``Ret`` must answer the innermost open ``Call``.
    """
    open_calls: list[Call] = []
    for i, ev in enumerate(events):
        if isinstance(ev, Call):
            open_calls.append(ev)
        else:
            if not open_calls:
                return f"event {i}: return {ev.from_}->{ev.to} with no open call"
            top = open_calls.pop()
            if (top.callee, top.caller) != (ev.from_, ev.to):
                return (
                    f"event {i}: return {ev.from_}->{ev.to} does not match "
                    f"open call {top.caller}->{top.callee}.{top.proc}"
                )
    return None


def serialize_trace(t: Trace) -> str:
    lines = []
    for ev in t.events:
        if isinstance(ev, Call):
            lines.append(f"CALL {ev.caller} {ev.callee} {ev.proc} {ev.arg}")
        else:
            lines.append(f"RET {ev.from_} {ev.to} {ev.value}")
    term = t.terminal
    if isinstance(term, Halt):
        lines.append("END HALT")
    elif isinstance(term, Ub):
        lines.append(f"END UB {term.comp}")
    elif isinstance(term, Trap):
        lines.append(f"END TRAP {term.comp}")
    else:
        lines.append("END FUEL")
    return "\n".join(lines) + "\n"


class TraceParseError(ValueError):
    def __init__(self, msg: str, line: int):
        super().__init__(f"line {line}: {msg}")
        self.line = line


def _int_field(s: str, lineno: int) -> int:
    try:
        return int(s, 10)
    except ValueError:
        raise TraceParseError(f"bad integer {s!r}", lineno) from None


def parse_trace(text: str) -> Trace:
    events: list[Event] = []
    terminal: Terminal | None = None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, 1):
        if terminal is not None:
            raise TraceParseError("record after END", lineno)
        fields = line.split(" ")
        kind = fields[0]
        try:
            if kind == "CALL" and len(fields) == 5:
                events.append(Call(fields[1], fields[2], fields[3], _int_field(fields[4], lineno)))
            elif kind == "RET" and len(fields) == 4:
                events.append(Ret(fields[1], fields[2], _int_field(fields[3], lineno)))
            elif fields == ["END", "HALT"]:
                terminal = Halt()
            elif fields == ["END", "FUEL"]:
                terminal = OutOfFuel()
            elif kind == "END" and len(fields) == 3 and fields[1] == "UB":
                terminal = Ub(fields[2])
            elif kind == "END" and len(fields) == 3 and fields[1] == "TRAP":
                terminal = Trap(fields[2])
            else:
                raise TraceParseError(f"unrecognized record {line!r}", lineno)
        except TraceParseError:
            raise
        except ValueError as e:
            raise TraceParseError(str(e), lineno) from None
    if terminal is None:
        raise TraceParseError("missing END record", len(lines) + 1)
    return Trace(events, terminal)
