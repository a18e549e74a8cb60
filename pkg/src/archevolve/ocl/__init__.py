"""Constraint language: a navigation/collection subset of OCL."""

from archevolve.ocl.ast import (
    ConstraintSet,
    Invariant,
    OclError,
    OclSyntaxError,
    OclTypeError,
    invariant_to_text,
    to_text,
)
from archevolve.ocl.evaluator import (
    InvariantResult,
    ValidationReport,
    evaluate,
    typecheck,
)
from archevolve.ocl.parser import parse_expr, parse_rules

__all__ = [
    "ConstraintSet",
    "Invariant",
    "InvariantResult",
    "OclError",
    "OclSyntaxError",
    "OclTypeError",
    "ValidationReport",
    "evaluate",
    "invariant_to_text",
    "parse_expr",
    "parse_rules",
    "to_text",
    "typecheck",
]
