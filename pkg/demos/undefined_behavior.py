"""Undefined behavior in one component and what the targets do with it.

``C`` writes past the end of its buffer.  The source semantics stops with
``UB C``; each target keeps the boundary events seen so far and then does
whatever the compiled code does, which need not agree across targets.
"""

from robustcc import compile_set, lower_sfi, lower_tagged, parse_program, run_cm, run_sfi, run_source, run_tagged
from robustcc.compiler import fuel_inflation
from robustcc.traces import prefix_upto_ub, serialize_trace

SOURCE = """
component Main {
  import C.f;
  buffer secret[1];
  export proc main() = secret[0] := 42; C.f(3); C.f(1); exit
}

component C {
  buffer b[2];
  export proc f() = b[arg] := 7; arg
}
"""

prog = parse_program(SOURCE)
fuel = 1000
src = run_source(prog, fuel)
print("--- source")
print(serialize_trace(src), end="")

mp = compile_set(prog)
for sem, t in (
    ("cm", run_cm(mp, fuel_inflation(fuel))),
    ("tag", run_tagged(lower_tagged(mp), 4 * fuel_inflation(fuel))),
    ("sfi", run_sfi(lower_sfi(mp), 4 * fuel_inflation(fuel))),
):
    print(f"--- {sem}")
    print(serialize_trace(t), end="")
    assert prefix_upto_ub(src, t, ["Main", "C"])
