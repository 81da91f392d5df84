"""A compartmentalizing compiler for a small unsafe language, two enforcing
back ends, and a randomized harness that tests the compiler's security
guarantees under mutual distrust."""

from .compiler import compile_component, compile_set, fuel_inflation
from .lang import ComponentSet, check_well_formed, format_program, interface_of, link, parse_program
from .machine import run_cm
from .sfi import lower_sfi, run_sfi, verify_sfi
from .source import run_source
from .tagged import lower_tagged, run_tagged
from .traces import Trace, parse_trace, prefix_upto_ub, serialize_trace

__all__ = [
    "compile_component", "compile_set", "fuel_inflation", "ComponentSet", "check_well_formed",
    "format_program", "interface_of", "link", "parse_program", "run_cm", "lower_sfi", "run_sfi",
    "verify_sfi", "run_source", "lower_tagged", "run_tagged", "Trace", "parse_trace",
    "prefix_upto_ub", "serialize_trace",
]
