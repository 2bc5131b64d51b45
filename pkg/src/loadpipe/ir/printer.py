"""Canonical text form of programs (the inverse of :mod:`loadpipe.ir.parse`)."""

from __future__ import annotations

from .nodes import (
    Access,
    Add,
    AsyncCopy,
    Block,
    Compute,
    Const,
    Eq,
    Expr,
    FloorDiv,
    For,
    Lt,
    Min,
    Mod,
    Mul,
    Predicated,
    Program,
    Stmt,
    Sync,
    Var,
)

INDENT = "  "

# binding strength; higher binds tighter
_PREC = {Eq: 1, Lt: 1, Add: 2, Mul: 3, FloorDiv: 3, Mod: 3}
_OPS = {Eq: "==", Lt: "<", Add: "+", Mul: "*", FloorDiv: "/", Mod: "%"}


def _prec(e: Expr) -> int:
    return _PREC.get(type(e), 4)


def print_expr(e: Expr) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Min):
        return f"min({print_expr(e.lhs)}, {print_expr(e.rhs)})"
    p = _prec(e)
    lhs = print_expr(e.lhs)
    rhs = print_expr(e.rhs)
    # comparisons do not chain, so both sides need parens at equal precedence
    if _prec(e.lhs) < p or (p == 1 and _prec(e.lhs) == 1):
        lhs = f"({lhs})"
    if _prec(e.rhs) <= p:
        rhs = f"({rhs})"
    return f"{lhs} {_OPS[type(e)]} {rhs}"


def print_access(a: Access) -> str:
    return f"{a.buffer}[{', '.join(print_expr(i) for i in a.indices)}]"


def _print_body(body: tuple[Stmt, ...], depth: int, lines: list[str]) -> None:
    for s in body:
        _print_stmt(s, depth, lines)


def _open_close(head: str, body: tuple[Stmt, ...], depth: int, lines: list[str]) -> None:
    pad = INDENT * depth
    opener = f"{head} {{" if head else "{"
    if not body:
        lines.append(f"{pad}{opener} }}")
        return
    lines.append(f"{pad}{opener}")
    _print_body(body, depth + 1, lines)
    lines.append(f"{pad}}}")


def _print_stmt(s: Stmt, depth: int, lines: list[str]) -> None:
    pad = INDENT * depth
    if isinstance(s, For):
        _open_close(f"for {s.var} {s.kind.value} 0..{s.extent}", s.body, depth, lines)
    elif isinstance(s, Block):
        _open_close("", s.body, depth, lines)
    elif isinstance(s, Predicated):
        _open_close(f"if {print_expr(s.cond)}", s.body, depth, lines)
    elif isinstance(s, AsyncCopy):
        lines.append(f"{pad}copy_async {print_access(s.dst)} <- {print_access(s.src)};")
    elif isinstance(s, Compute):
        ops = ", ".join(print_access(a) for a in s.operands)
        lines.append(f"{pad}{print_access(s.dst)} = {s.op}({ops}) flops {s.flops};")
    elif isinstance(s, Sync):
        lines.append(f"{pad}{s.kind.value} {s.group};")
    else:
        raise TypeError(f"not a statement: {s!r}")


def print_stmts(body: tuple[Stmt, ...], depth: int = 0) -> str:
    lines: list[str] = []
    _print_body(body, depth, lines)
    return "\n".join(lines)


def print_program(p: Program) -> str:
    lines: list[str] = []
    for b in p.buffers:
        dims = ", ".join(str(d) for d in b.shape)
        stages = f" stages {b.stages}" if b.stages is not None else ""
        lines.append(f"buffer {b.name} {b.scope.keyword} {b.dtype}[{dims}]{stages};")
    for g in p.groups:
        lines.append(f"pipeline {g.name} {g.scope.keyword} capacity {g.capacity};")
    if p.body:
        if lines:
            lines.append("")
        _print_body(p.body, 0, lines)
    return "\n".join(lines) + "\n"
