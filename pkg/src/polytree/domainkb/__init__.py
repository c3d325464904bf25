"""Algebraic predicates enumerated from domain knowledge."""

from .expr import Expr, ExprError, canonical_key, evaluate, parse_expr, render
from .kb import (
    DomainKbGenerator,
    KnowledgeBase,
    KnowledgeBaseError,
    PoolCapExceeded,
    PoolResult,
    Pools,
    apply_identities,
    cruise_kb,
    expand_sums,
    generate_pool,
    init_pools,
    load_kb,
    parse_kb,
    pool_candidates,
)

__all__ = [
    "DomainKbGenerator", "Expr", "ExprError", "KnowledgeBase", "KnowledgeBaseError",
    "PoolCapExceeded", "PoolResult", "Pools", "apply_identities", "canonical_key",
    "cruise_kb", "evaluate", "expand_sums", "generate_pool", "init_pools", "load_kb",
    "parse_expr", "parse_kb", "pool_candidates", "render",
]
