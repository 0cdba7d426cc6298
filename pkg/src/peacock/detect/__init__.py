"""Declarative detection rules over parsed boot events."""

from .engine import Alert, AlertGroup, evaluate, evaluate_rule
from .rules import (
    EVENT_FIELDS,
    SEVERITIES,
    DetectionRule,
    RuleSchemaError,
    args_text,
    builtin_rules,
    compile_rule,
    load_rules,
    match_glob,
)

__all__ = [
    "Alert", "AlertGroup", "DetectionRule", "EVENT_FIELDS", "RuleSchemaError", "SEVERITIES",
    "args_text", "builtin_rules", "compile_rule", "evaluate", "evaluate_rule", "load_rules",
    "match_glob",
]
