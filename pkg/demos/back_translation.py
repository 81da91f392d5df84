"""Turn an observed trace into a source context that replays it.

We run a closed program, pick ``Main`` as the context role, rebuild it from
the trace alone and link the result with the untouched ``C``.
"""

from robustcc import format_program, interface_of, link, parse_program, run_source
from robustcc.harness import back_translate
from robustcc.traces import serialize_trace

SOURCE = """
component Main {
  import C.f;
  export proc log() = 0
  export proc main() = C.f(C.f(2) * 10); exit
}

component C {
  import Main.log;
  export proc f() = Main.log(arg); arg + 1
}
"""

prog = parse_program(SOURCE)
t = run_source(prog, 1000)
print(serialize_trace(t), end="")

replay = back_translate(t, interface_of(prog), {"Main"})
print(format_program(replay))

again = run_source(link(prog.without({"Main"}), replay), 1000)
assert again.events == t.events
print("replay reproduces all", len(t.events), "events")
