import pytest
from hypothesis import given, strategies as st

from robustcc.traces import (
    Call, Halt, OutOfFuel, Ret, Trace, TraceParseError, Trap, Ub, check_well_bracketed, is_prefix,
    parse_trace, prefix_upto_ub, serialize_trace,
)

names = st.sampled_from(["Main", "C", "D", "E1"])
ints = st.integers(min_value=-(1 << 63), max_value=(1 << 63) - 1)


@st.composite
def events(draw):
    a, b = draw(st.lists(names, min_size=2, max_size=2, unique=True))
    if draw(st.booleans()):
        return Call(a, b, draw(st.sampled_from(["f", "g", "main"])), draw(ints))
    return Ret(a, b, draw(ints))


terminals = st.one_of(st.just(Halt()), st.just(OutOfFuel()), names.map(Ub), names.map(Trap))
traces = st.builds(Trace, st.lists(events(), max_size=6), terminals)


def test_events_reject_self_interaction():
    with pytest.raises(ValueError):
        Call("C", "C", "f", 1)
    with pytest.raises(ValueError):
        Ret("C", "C", 1)


def test_serialize_examples():
    t = Trace([Call("Main", "C", "f", 5), Ret("C", "Main", 6)], Halt())
    assert serialize_trace(t) == "CALL Main C f 5\nRET C Main 6\nEND HALT\n"
    assert serialize_trace(Trace([], Ub("Main"))) == "END UB Main\n"
    assert serialize_trace(Trace([], Trap("C"))) == "END TRAP C\n"
    assert serialize_trace(Trace([], OutOfFuel())) == "END FUEL\n"


@given(traces)
def test_serialize_round_trip(t):
    assert parse_trace(serialize_trace(t)) == t


@pytest.mark.parametrize("text, line", [
    ("CALL Main C f\nEND HALT\n", 1),
    ("RET C Main x\nEND HALT\n", 1),
    ("CALL Main C f 1\n", 2),
    ("END HALT\nEND HALT\n", 2),
    ("END UB\n", 1),
    ("call Main C f 1\nEND HALT\n", 1),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(TraceParseError) as e:
        parse_trace(text)
    assert e.value.line == line


def test_prefix_upto_ub_cases():
    c = Call("Main", "C", "f", 5)
    r = Ret("C", "Main", 6)
    full = Trace([c, r], Halt())
    assert prefix_upto_ub(full, full, ["C"])
    assert prefix_upto_ub(Trace([c], Ub("C")), full, ["C"])
    assert not prefix_upto_ub(Trace([c], Ub("C")), full, ["Main"])
    assert prefix_upto_ub(Trace([c], Ub("C")), full, "C", strict=True)
    assert not prefix_upto_ub(full, full, "C", strict=True)
    assert not prefix_upto_ub(Trace([r], Ub("C")), full, ["C"])
    # running out of fuel never counts as the equality case
    fuel = Trace([c], OutOfFuel())
    assert not prefix_upto_ub(fuel, fuel, ["C"])


def test_strict_needs_single_component():
    t = Trace([], Ub("C"))
    with pytest.raises(ValueError):
        prefix_upto_ub(t, t, ["C", "D"], strict=True)


@given(traces, traces, st.sets(names, min_size=1))
def test_strict_implies_nonstrict(a, b, comps):
    for c in comps:
        if prefix_upto_ub(a, b, c, strict=True):
            assert prefix_upto_ub(a, b, comps)


@given(traces)
def test_ub_truncation_is_prefix(t):
    for k in range(len(t.events) + 1):
        cut = Trace(t.events[:k], Ub("C"))
        assert prefix_upto_ub(cut, t, ["C"])
        assert is_prefix(cut, t)


def test_well_bracketed():
    assert check_well_bracketed([Call("Main", "C", "f", 1), Ret("C", "Main", 2)]) is None
    assert check_well_bracketed([Ret("C", "Main", 2)]) is not None
    assert check_well_bracketed([Call("Main", "C", "f", 1), Ret("D", "Main", 2)]) is not None
    # open calls at the end of a prefix are fine
    assert check_well_bracketed([Call("Main", "C", "f", 1), Call("C", "D", "g", 1)]) is None
