"""Compile a two-component program and run it at every level.

The source interpreter, the compartmentalized machine, the tagged monitor and
the SFI sandbox all produce the same boundary trace.
"""

from robustcc import compile_set, lower_sfi, lower_tagged, parse_program, run_cm, run_sfi, run_source, run_tagged
from robustcc.machine import format_asm
from robustcc.compiler import fuel_inflation
from robustcc.traces import serialize_trace

SOURCE = """
component Main {
  import C.f;
  export proc main() = C.f(5); exit
}

component C {
  buffer seen[1];
  export proc f() = seen[0] := arg; arg + 1
}
"""

prog = parse_program(SOURCE)
mp = compile_set(prog)
print(format_asm(mp))

fuel = 1000
runs = {
    "source": run_source(prog, fuel),
    "cm": run_cm(mp, fuel_inflation(fuel)),
    "tag": run_tagged(lower_tagged(mp), 4 * fuel_inflation(fuel)),
    "sfi": run_sfi(lower_sfi(mp), 4 * fuel_inflation(fuel)),
}
for sem, t in runs.items():
    print(f"--- {sem}")
    print(serialize_trace(t), end="")
assert len({r for r in runs.values()}) == 1
