"""``fscc``: command-line front end.

Input files are recognized by their first meaningful line: ``component`` for
source programs, ``.compartment`` for machine assembly, and the
``# tagged-program`` / ``# sfi-program`` headers for lowered images.

Exit status: 0 success, 1 counterexample found, 2 usage, parse or
precondition error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .compiler import DEFAULT_STACK_SIZE, compile_set
from .harness import (
    COUNTEREXAMPLE, INCONCLUSIVE, PASS, BackTranslationError, TargetConfig, back_translate,
    compromise_game, random_case, rc_test, run_target, target_fuel, validate_game_result,
)
from .harness.generator import GenParams, generate_component_set
from .harness.seeds import MUTATE, PARAMS, rng_for
from .lang import LinkError, ParseError, check_well_formed, format_program, interface_of, is_closed, parse_program
from .machine import AsmParseError, MachineProgram, format_asm, parse_asm
from .sfi import DEFAULT_SLOT_BITS, SlotOverflow, lower_sfi, parse_sfi, run_sfi, serialize_sfi, verify_sfi
from .source import run_source
from .tagged import DEFAULT_MEMORY_SIZE, LayoutOverflow, lower_tagged, parse_tagged, run_tagged, serialize_tagged
from .traces import TraceParseError, parse_trace, serialize_trace

DEFAULT_FUEL = 100000
TARGETS = ("cm", "tag", "sfi")


class UsageError(Exception):
    pass


def default_fuel() -> int:
    raw = os.environ.get("ROBUSTCC_FUEL")
    if raw is None:
        return DEFAULT_FUEL
    try:
        fuel = int(raw)
    except ValueError:
        raise UsageError(f"ROBUSTCC_FUEL must be an integer, got {raw!r}") from None
    if fuel < 1:
        raise UsageError("ROBUSTCC_FUEL must be at least 1")
    return fuel


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _read(path: str) -> str:
    try:
        with open(path) as f:
            return f.read()
    except OSError as e:
        raise UsageError(f"{path}: {e.strerror}") from None


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w") as f:
            f.write(text)
    except OSError as e:
        raise UsageError(f"{path}: {e.strerror}") from None


def detect_kind(text: str) -> str:
    for line in text.splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("# tagged-program"):
            return "tag"
        if s.startswith("# sfi-program"):
            return "sfi"
        if s.startswith("#"):
            continue
        if s.startswith(".compartment"):
            return "asm"
        if s.split()[0] == "component":
            return "rcc"
        break
    raise UsageError("cannot tell the input format from its first line")


def _load(path: str):
    text = _read(path)
    kind = detect_kind(text)
    try:
        if kind == "rcc":
            return kind, parse_program(text)
        if kind == "asm":
            return kind, parse_asm(text)
        if kind == "tag":
            return kind, parse_tagged(text)
        return kind, parse_sfi(text)
    except ParseError as e:
        raise UsageError(f"{path}:{e.line}:{e.col}: {e}") from None
    except (AsmParseError, ValueError) as e:
        raise UsageError(f"{path}: {e}") from None


def _require_closed(s, path: str) -> None:
    rep = check_well_formed(s)
    if not rep.ok:
        raise UsageError(f"{path}: " + "; ".join(rep.errors))
    if not is_closed(s):
        raise UsageError(f"{path}: program is not closed")


def _machine(obj, kind: str, path: str, args) -> MachineProgram:
    if kind == "rcc":
        _require_closed(obj, path)
        return compile_set(obj, args.stack_size)
    if kind == "asm":
        return obj
    raise UsageError(f"{path}: a lowered image cannot be recompiled")


# --------------------------------------------------------------------------
# Subcommands


def cmd_check(args, out) -> int:
    kind, obj = _load(args.file)
    if kind != "rcc":
        raise UsageError("check expects a source program")
    rep = check_well_formed(obj)
    for e in rep.errors:
        print(f"error: {e}", file=out)
    for imp, c, p in rep.open:
        print(f"open: {imp} imports {c}.{p}", file=out)
    if not rep.ok:
        print("ill-formed", file=out)
        return 2
    print("well-formed, closed" if is_closed(obj) else "well-formed, open", file=out)
    return 0


def cmd_compile(args, out) -> int:
    kind, obj = _load(args.file)
    mp = _machine(obj, kind, args.file, args)
    if args.emit == "cm":
        text = format_asm(mp)
    elif args.emit == "tag":
        text = serialize_tagged(lower_tagged(mp, args.mem_size))
    else:
        sp = lower_sfi(mp, args.slot_bits, args.sfi_mask_loads)
        problems = verify_sfi(sp)
        if problems:
            raise UsageError("verifier rejected the lowered program: " + problems[0])
        text = serialize_sfi(sp)
    if args.output == "-":
        out.write(text)
    else:
        _write(args.output, text)
    return 0


def cmd_run(args, out) -> int:
    kind, obj = _load(args.file)
    fuel = args.fuel
    sem = args.sem
    if sem == "source":
        if kind != "rcc":
            raise UsageError("--sem source needs a source program")
        _require_closed(obj, args.file)
        t = run_source(obj, fuel)
    elif kind == "tag":
        if sem != "tag":
            raise UsageError("a tagged image only runs with --sem tag")
        t = run_tagged(obj, target_fuel(fuel, sem))
    elif kind == "sfi":
        if sem != "sfi":
            raise UsageError("an SFI image only runs with --sem sfi")
        t = run_sfi(obj, target_fuel(fuel, sem))
    else:
        mp = _machine(obj, kind, args.file, args)
        if "Main" not in mp.compartments:
            raise UsageError(f"{args.file}: no Main compartment")
        cfg = TargetConfig(args.stack_size, args.mem_size, args.slot_bits, args.sfi_mask_loads)
        t = run_target(mp, sem, target_fuel(fuel, sem), cfg)
    out.write(serialize_trace(t))
    return 0


def _summary(out, npass: int, nfail: int, ninc: int) -> None:
    print(f"{npass} pass / {nfail} fail / {ninc} inconclusive", file=out)


def rc_case(seed: int, fuel: int, sems, cfg: TargetConfig) -> list[tuple[str, object]]:
    """All verdicts of one rc-test case; a pure function of its arguments."""
    p, _ = random_case(seed)
    mutations = rng_for(seed, MUTATE).choice((0, 0, 1, 3, 5))
    return [(sem, rc_test(p, seed, fuel, sem, mutations=mutations, cfg=cfg)) for sem in sems]


def cmd_rc_test(args, out) -> int:
    sems = [args.sem] if args.sem else list(TARGETS)
    cfg = TargetConfig(args.stack_size, args.mem_size, args.slot_bits, args.sfi_mask_loads)
    counts = {PASS: 0, COUNTEREXAMPLE: 0, INCONCLUSIVE: 0}
    for i in range(args.cases):
        seed = args.seed + i
        results = rc_case(seed, args.fuel, sems, cfg)
        kinds = [r.verdict.kind for _, r in results]
        overall = COUNTEREXAMPLE if COUNTEREXAMPLE in kinds else INCONCLUSIVE if INCONCLUSIVE in kinds else PASS
        counts[overall] += 1
        for sem, r in results:
            print(f"seed {seed} {sem}: {r.verdict}", file=out)
            if r.verdict.kind == COUNTEREXAMPLE:
                print(f"counterexample: reproduce with rc-test --seed {seed} --cases 1 --sem {sem} --fuel {args.fuel}", file=out)
                print("  target: " + serialize_trace(r.target).strip().replace("\n", " | "), file=out)
                print("  source: " + serialize_trace(r.source).strip().replace("\n", " | "), file=out)
    _summary(out, counts[PASS], counts[COUNTEREXAMPLE], counts[INCONCLUSIVE])
    return 1 if counts[COUNTEREXAMPLE] else 0


def game_case(seed: int, fuel: int, stack_size: int = DEFAULT_STACK_SIZE):
    ub_free = rng_for(seed, PARAMS).random() < 0.5
    s = generate_component_set(seed, GenParams(ub_free=ub_free))
    return compromise_game(s, fuel, stack_size)


def cmd_game(args, out) -> int:
    counts = {PASS: 0, COUNTEREXAMPLE: 0, INCONCLUSIVE: 0}
    for i in range(args.cases):
        seed = args.seed + i
        r = game_case(seed, args.fuel, args.stack_size)
        verdict = r.verdict
        if verdict.kind == PASS:
            problems = validate_game_result(r)
            if problems:
                verdict = type(verdict)(COUNTEREXAMPLE, "harness: result does not re-validate: " + problems[0])
        counts[verdict.kind] += 1
        seq = ",".join(r.sequence) or "-"
        print(f"seed {seed}: {verdict} compromised={seq}", file=out)
        if verdict.kind == COUNTEREXAMPLE:
            print(f"counterexample: reproduce with game --seed {seed} --cases 1 --fuel {args.fuel}", file=out)
    _summary(out, counts[PASS], counts[COUNTEREXAMPLE], counts[INCONCLUSIVE])
    return 1 if counts[COUNTEREXAMPLE] else 0


def cmd_backtranslate(args, out) -> int:
    try:
        trace = parse_trace(_read(args.trace))
    except TraceParseError as e:
        raise UsageError(f"{args.trace}: {e}") from None
    kind, prog = _load(args.iface)
    if kind != "rcc":
        raise UsageError("--iface expects a source program")
    roles = [r for r in args.roles.split(",") if r]
    if not roles:
        raise UsageError("--roles needs at least one component name")
    try:
        ctx = back_translate(trace, interface_of(prog), roles)
    except BackTranslationError as e:
        raise UsageError(f"back-translation precondition: {e}") from None
    text = format_program(ctx)
    if args.output == "-":
        out.write(text)
    else:
        _write(args.output, text)
    return 0


# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    fuel = default_fuel()
    top = _Parser(prog="fscc", description="Compartmentalizing compiler and security test harness.")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def target_opts(sp):
        sp.add_argument("--stack-size", type=_positive, default=DEFAULT_STACK_SIZE)
        sp.add_argument("--mem-size", type=_positive, default=DEFAULT_MEMORY_SIZE)
        sp.add_argument("--slot-bits", type=_positive, default=DEFAULT_SLOT_BITS)
        sp.add_argument("--sfi-mask-loads", action="store_true")

    sp = sub.add_parser("check", help="report well-formedness of a source program")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("compile", help="compile to assembly or a lowered image")
    sp.add_argument("--emit", choices=TARGETS, required=True)
    sp.add_argument("file")
    sp.add_argument("-o", dest="output", required=True)
    target_opts(sp)
    sp.set_defaults(func=cmd_compile)

    sp = sub.add_parser("run", help="run a program and print its trace")
    sp.add_argument("--sem", choices=("source",) + TARGETS, required=True)
    sp.add_argument("--fuel", type=_positive, default=fuel)
    sp.add_argument("file")
    target_opts(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("rc-test", help="randomized robust-compilation tests")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--cases", type=_positive, required=True)
    sp.add_argument("--fuel", type=_positive, default=fuel)
    sp.add_argument("--sem", choices=TARGETS)
    target_opts(sp)
    sp.set_defaults(func=cmd_rc_test)

    sp = sub.add_parser("game", help="randomized compromise games")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--cases", type=_positive, required=True)
    sp.add_argument("--fuel", type=_positive, default=fuel)
    sp.add_argument("--stack-size", type=_positive, default=DEFAULT_STACK_SIZE)
    sp.set_defaults(func=cmd_game)

    sp = sub.add_parser("backtranslate", help="build a source context replaying a trace")
    sp.add_argument("--trace", required=True)
    sp.add_argument("--iface", required=True)
    sp.add_argument("--roles", required=True)
    sp.add_argument("-o", dest="output", required=True)
    sp.set_defaults(func=cmd_backtranslate)
    return top


def run_cli(argv: list[str], out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, out)
    except UsageError as e:
        print(f"fscc: {e}", file=err)
        return 2
    except (LinkError, LayoutOverflow, SlotOverflow) as e:
        print(f"fscc: {e}", file=err)
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
