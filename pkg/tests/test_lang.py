import os

import pytest
from hypothesis import given, settings, strategies as st

from conftest import DATA
from robustcc.harness import GenParams, generate_component_set
from robustcc.source import run_source
from robustcc.lang import (
    Arg, BinOp, BufRef, CallExpr, Component, ComponentSet, Exit, If, Load, LinkError, Num, ParseError,
    Procedure, Seq, Store, check_well_formed, format_expr, format_program, index, index_store,
    interface_of, is_closed, link, parse_expr, parse_program,
)

P1_TEXT = open(os.path.join(DATA, "p1.rcc")).read()

leaves = st.one_of(
    st.integers(min_value=0, max_value=(1 << 63) - 1).map(Num),
    st.just(Arg()), st.just(Exit()), st.just(BufRef("b")),
)


def _extend(children):
    return st.one_of(
        st.builds(BinOp, st.sampled_from(["add", "sub", "mul", "eq", "leq"]), children, children),
        st.builds(Seq, children, children),
        st.builds(If, children, children, children),
        st.builds(Load, children),
        st.builds(Store, children, children),
        st.builds(index, st.just("b"), children),
        st.builds(index_store, st.just("b"), children, children),
        st.builds(CallExpr, st.just("D"), st.just("g"), children),
    )


exprs = st.recursive(leaves, _extend, max_leaves=12)


def test_smallest_program():
    s = parse_program("component Main { export proc main() = exit }")
    assert s.names() == {"Main"}
    assert s["Main"].procedures["main"] == Procedure(True, Exit())
    assert is_closed(s)


def test_p1_shape():
    s = parse_program(P1_TEXT)
    assert s.names() == {"Main", "C"}
    assert s["Main"].imports == (("C", "f"),)
    assert s["C"].procedures["f"].body == BinOp("add", Arg(), Num(1))
    assert parse_program(format_program(s)) == s


@pytest.mark.parametrize("text", [
    "component A {} component A {}",
    "component A { buffer b[1]; buffer b[2]; }",
    "component A { proc f() = 1 proc f() = 2 }",
    "component A { import B.f; import B.f; }",
])
def test_duplicates_rejected(text):
    with pytest.raises(ParseError):
        parse_program(text)


def test_syntax_error_position():
    with pytest.raises(ParseError) as e:
        parse_program("component Main {\n  export proc main() = 1 +\n}")
    assert (e.value.line, e.value.col) == (3, 1)


def test_precedence_and_sugar():
    assert parse_expr("1 + 2 * 3") == BinOp("add", Num(1), BinOp("mul", Num(2), Num(3)))
    assert parse_expr("1; 2 := 3") == Seq(Num(1), Store(Num(2), Num(3)))
    assert parse_expr("1 == 2 + 3") == BinOp("eq", Num(1), BinOp("add", Num(2), Num(3)))
    assert parse_expr("b[arg]") == Load(BinOp("add", BufRef("b"), Arg()))
    assert parse_expr("b[1] := 2") == Store(BinOp("add", BufRef("b"), Num(1)), Num(2))
    assert parse_expr("!&b") == Load(BufRef("b"))
    assert parse_expr("1 := 2 := 3") == Store(Num(1), Store(Num(2), Num(3)))
    assert parse_expr("!(b[arg] := arg) := arg") == Store(Load(index_store("b", Arg(), Arg())), Arg())
    assert parse_expr("1 - 2 - 3") == BinOp("sub", BinOp("sub", Num(1), Num(2)), Num(3))


@given(exprs)
def test_expr_print_parse_round_trip(e):
    assert parse_expr(format_expr(e)) == e


@settings(max_examples=60)
@given(st.integers(min_value=0, max_value=10**6), st.booleans())
def test_program_round_trip(seed, ub_free):
    s = generate_component_set(seed, GenParams(ub_free=ub_free))
    text = format_program(s)
    assert parse_program(text) == s
    assert format_program(parse_program(text)) == text


def test_wellformedness_reports():
    assert not check_well_formed(parse_program(P1_TEXT))
    bad = parse_program("component Main { import C.f; export proc main() = C.f(1) }"
                        "component C { proc f() = 1 }")
    rep = check_well_formed(bad)
    assert rep.errors and not rep.open
    partial = parse_program("component Main { import C.f; export proc main() = C.f(1) }")
    rep = check_well_formed(partial)
    assert rep.ok and rep.open == [("Main", "C", "f")]
    assert not is_closed(partial)


@pytest.mark.parametrize("text", [
    "component A { proc f() = &nope }",
    "component A { proc f() = B.g(1) }",
    "component A { proc f() = A.h(1) }",
    "component A { import A.f; proc f() = 1 }",
    "component Main { proc main() = 1 }",
])
def test_wellformedness_errors(text):
    assert check_well_formed(parse_program(text)).errors


def test_link():
    s = parse_program(P1_TEXT)
    main, c = ComponentSet.of(s["Main"]), ComponentSet.of(s["C"])
    assert link(main, c) == s
    assert link(c, main) == s
    assert link(s, ComponentSet.of()) == s
    with pytest.raises(LinkError):
        link(main, main)


@settings(max_examples=40)
@given(st.integers(min_value=0, max_value=10**6))
def test_link_splits_preserve_reports(seed):
    s = generate_component_set(seed, GenParams(ub_free=False))
    names = sorted(s.names())
    left = ComponentSet.of(*(s[n] for n in names[::2]))
    right = ComponentSet.of(*(s[n] for n in names[1::2]))
    assert link(left, right) == link(right, left) == s
    assert check_well_formed(left).ok and check_well_formed(right).ok
    assert not check_well_formed(link(left, right))


def test_interface():
    iface = interface_of(parse_program(P1_TEXT))
    assert iface["C"].exports == {"f"}
    assert iface["Main"].imports == {("C", "f")}


def test_component_accessors():
    c = Component("A", (), (("x", 2), ("y", 1)), {"f": Procedure(True, Num(0)), "g": Procedure(False, Num(1))})
    assert c.exports == {"f"}
    assert c.buffer_index("y") == 1


@given(st.integers(min_value=-(1 << 63), max_value=-1))
def test_negative_literals_print_as_equivalent_subtraction(n):
    # the grammar only has naturals, so negatives come back as arithmetic
    text = format_expr(Num(n))
    prog = parse_program(f"component Main {{ import C.f; export proc main() = C.f({text}) }}"
                         "component C { export proc f() = 0 }")
    assert run_source(prog, 1000).events[0].arg == n
    assert parse_expr(format_expr(parse_expr(text))) == parse_expr(text)


def test_literal_range():
    assert parse_expr("9223372036854775807") == Num((1 << 63) - 1)
    with pytest.raises(ParseError):
        parse_expr("9223372036854775808")
