"""graphmend: rewrite torch.compile graph-break patterns at the source level.

Pipeline: parse -> unified IR (tree + symbol table + CFG) -> entry-point
analysis -> break detection -> validated rewrites (branch predication,
side-effect deferral) -> heal -> emit. See the cli module for the batch
driver.
"""

from .analysis import (
    BreakKind,
    EntryPoint,
    GraphBreakTag,
    TaintState,
    TorchAttrTable,
    compute_taint,
    detect_breaks,
    find_entry_points,
)
from .frontend import (
    AstNode,
    OverlapError,
    SourceModule,
    Span,
    SpanEdit,
    Tree,
    emit_source,
    parse_module,
    unified_diff,
)
from .transform import (
    DeferralRewrite,
    FileOutcome,
    PredicationRewrite,
    TransformPlan,
    apply_deferral,
    apply_predication,
    fix_file,
    plan_fixes,
)
from .uniir import (
    Cfg,
    Scope,
    Symbol,
    SymbolTable,
    Uniir,
    VerificationError,
    build_cfg,
    build_symbol_table,
    dominates,
    dump_ir,
    heal,
)

__version__ = "0.1.0"

__all__ = [
    "AstNode",
    "BreakKind",
    "Cfg",
    "DeferralRewrite",
    "EntryPoint",
    "FileOutcome",
    "GraphBreakTag",
    "OverlapError",
    "PredicationRewrite",
    "Scope",
    "SourceModule",
    "Span",
    "SpanEdit",
    "Symbol",
    "SymbolTable",
    "TaintState",
    "TorchAttrTable",
    "TransformPlan",
    "Tree",
    "Uniir",
    "VerificationError",
    "apply_deferral",
    "apply_predication",
    "build_cfg",
    "build_symbol_table",
    "compute_taint",
    "detect_breaks",
    "dominates",
    "dump_ir",
    "emit_source",
    "find_entry_points",
    "fix_file",
    "heal",
    "parse_module",
    "plan_fixes",
    "unified_diff",
]
