"""Mutate one compartment's code and watch the back ends contain it.

Adversarial compartments get arbitrary instruction words.  The tagged
monitor traps on policy violations; the SFI sandbox masks addresses so the
attacker stays inside its slot.  Both interpreters carry an independent audit
of their confinement invariant.
"""

from robustcc import compile_set, lower_sfi, lower_tagged, parse_program
from robustcc.compiler import fuel_inflation
from robustcc.harness import mutate_sfi, mutate_tagged
from robustcc.harness.seeds import MUTATE, rng_for
from robustcc.sfi import run_sfi_checked, verify_sfi
from robustcc.tagged import run_tagged_checked

SOURCE = """
component Main {
  import C.f;
  buffer secret[1];
  export proc main() = secret[0] := 42; C.f(1); secret[0]; exit
}

component C {
  buffer b[4];
  export proc f() = b[arg] := arg; b[0] + b[1]
}
"""

mp = compile_set(parse_program(SOURCE))
fuel = 4 * fuel_inflation(1000)
outcomes = {"tag": {}, "sfi": {}}
for seed in range(200):
    rng = rng_for(seed, MUTATE)
    t, violations = run_tagged_checked(mutate_tagged(lower_tagged(mp), {"C"}, rng, 4), fuel)
    assert not violations
    outcomes["tag"][type(t.terminal).__name__] = outcomes["tag"].get(type(t.terminal).__name__, 0) + 1
    sp = mutate_sfi(lower_sfi(mp), {"C"}, rng, 4)
    assert not verify_sfi(sp)
    t, violations = run_sfi_checked(sp, fuel)
    assert not violations
    outcomes["sfi"][type(t.terminal).__name__] = outcomes["sfi"].get(type(t.terminal).__name__, 0) + 1

for sem, counts in outcomes.items():
    print(sem, "terminals over 200 attacks:", dict(sorted(counts.items())), "audit violations: 0")
