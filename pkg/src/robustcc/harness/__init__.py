"""Randomized security testing: generators, back-translation, mutation, test drivers."""

from .backtranslate import BackTranslationError, back_translate
from .game import CompromiseStep, GameResult, compromise_game, validate_game_result
from .generator import GenParams, generate_component_set
from .mutate import mutate_machine, mutate_sfi, mutate_tagged
from .rctest import (
    COUNTEREXAMPLE, INCONCLUSIVE, PASS, RcResult, TargetConfig, Verdict, generate_context, judge, random_case,
    rc_test, run_target, target_fuel,
)
from .seeds import mix, splitmix64

__all__ = [
    "BackTranslationError", "back_translate", "CompromiseStep", "GameResult", "compromise_game",
    "validate_game_result", "GenParams", "generate_component_set", "mutate_machine", "mutate_sfi",
    "mutate_tagged", "COUNTEREXAMPLE", "INCONCLUSIVE", "PASS", "RcResult", "TargetConfig", "Verdict",
    "generate_context", "judge", "random_case", "rc_test", "run_target", "target_fuel", "mix", "splitmix64",
]
