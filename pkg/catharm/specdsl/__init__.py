"""Experiment spec language: ``.cat`` files declaring a whole run."""

from catharm.specdsl.compiler import CompiledPlan, PairingDirective, compile_plan
from catharm.specdsl.formatter import format_plan
from catharm.specdsl.lexer import ParseError, tokenize
from catharm.specdsl.parser import parse_blocks
from catharm.specdsl.plan import ExperimentPlan, load_plan, parse, plan_hash

__all__ = [
    "CompiledPlan",
    "ExperimentPlan",
    "PairingDirective",
    "ParseError",
    "compile_plan",
    "format_plan",
    "load_plan",
    "parse",
    "parse_blocks",
    "plan_hash",
    "tokenize",
]
