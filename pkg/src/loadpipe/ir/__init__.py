"""Tensor IR: nodes, text format, simplification and validation."""

from .nodes import (
    Access,
    Add,
    AsyncCopy,
    Block,
    BufferDecl,
    Compute,
    Const,
    Eq,
    Expr,
    FloorDiv,
    For,
    LoopKind,
    Lt,
    Min,
    Mod,
    Mul,
    PipelineGroup,
    Predicated,
    Program,
    Scope,
    Stmt,
    Sync,
    SyncKind,
    Var,
    eval_expr,
    free_vars,
    substitute,
    walk,
)
from .parse import ParseError, parse_program
from .printer import print_expr, print_program
from .simplify import SimplifyError, simplify
from .validate import Diagnostic, ValidationError, check, validate
