"""Randomized robust-compilation tests and compromise games.

Each case is a pure function of its seed, so any line printed here can be
reproduced alone through the ``fscc`` command.
"""

from collections import Counter

from robustcc.cli import game_case, rc_case
from robustcc.harness import TargetConfig

verdicts = Counter()
for seed in range(60):
    for sem, r in rc_case(seed, 2000, ("cm", "tag", "sfi"), TargetConfig()):
        verdicts[sem, r.verdict.kind] += 1
for (sem, kind), n in sorted(verdicts.items()):
    print(f"rc-test {sem}: {n} {kind}")

for seed in range(60):
    r = game_case(seed, 2000)
    if r.sequence:
        print(f"game seed {seed}: {r.verdict} after compromising {', '.join(r.sequence)}")
        print(f"  reproduce: fscc game --seed {seed} --cases 1 --fuel 2000")
        break
