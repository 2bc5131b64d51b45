"""Structural checks for programs. Returns diagnostics instead of raising."""

from __future__ import annotations

from dataclasses import dataclass

from .nodes import (
    Access,
    AsyncCopy,
    Compute,
    Expr,
    FloorDiv,
    For,
    Mod,
    Predicated,
    Program,
    Scope,
    Stmt,
    Sync,
    Var,
    children,
    reads,
    writes,
)
from .simplify import SimplifyError, simplify


@dataclass(frozen=True)
class Diagnostic:
    path: tuple[int, ...]
    message: str

    def __str__(self) -> str:
        where = ".".join(str(i) for i in self.path) or "<program>"
        return f"{where}: {self.message}"


class ValidationError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


def _expr_problems(e: Expr, bound: set[str]) -> list[str]:
    out = []
    if isinstance(e, Var):
        if e.name not in bound:
            out.append(f"unbound variable {e.name!r}")
        return out
    if hasattr(e, "lhs"):
        out += _expr_problems(e.lhs, bound) + _expr_problems(e.rhs, bound)
        if isinstance(e, (Mod, FloorDiv)):
            try:
                d = simplify(e.rhs)
            except SimplifyError as exc:
                out.append(str(exc))
            else:
                if not hasattr(d, "value") or d.value <= 0:
                    out.append("divisor must be a positive constant")
    return out


def validate(p: Program) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def report(path, msg):
        diags.append(Diagnostic(tuple(path), msg))

    decls = {}
    for b in p.buffers:
        if b.name in decls:
            report((), f"duplicate buffer name {b.name!r}")
        decls[b.name] = b
        if not b.shape or any(d < 1 for d in b.shape):
            report((), f"buffer {b.name!r} has a non-positive dimension")
        if b.stages is not None:
            if b.scope is Scope.GLOBAL:
                report((), f"global buffer {b.name!r} cannot carry pipeline stages")
            elif b.stages < 2:
                report((), f"buffer {b.name!r}: pipeline stages must be >= 2")
    groups = {}
    for g in p.groups:
        if g.name in groups:
            report((), f"duplicate pipeline group {g.name!r}")
        groups[g.name] = g
        if g.capacity < 1:
            report((), f"pipeline group {g.name!r} needs a positive capacity")
        if g.scope is Scope.GLOBAL:
            report((), f"pipeline group {g.name!r} cannot be global")

    def check_access(a: Access, path, bound):
        b = decls.get(a.buffer)
        if b is None:
            report(path, f"undeclared buffer {a.buffer!r}")
            return
        if len(a.indices) != len(b.shape):
            report(path, f"{a.buffer!r} has rank {len(b.shape)}, accessed with {len(a.indices)} indices")
        for e in a.indices:
            for msg in _expr_problems(e, bound):
                report(path, msg)

    def visit(body: tuple[Stmt, ...], prefix, bound: set[str]):
        for i, s in enumerate(body):
            path = prefix + (i,)
            if isinstance(s, For):
                if s.extent < 1:
                    report(path, f"zero-extent loop {s.var!r}")
                if s.var in bound:
                    report(path, f"loop variable {s.var!r} shadows an enclosing loop")
                visit(s.body, path, bound | {s.var})
                continue
            if isinstance(s, Predicated):
                for msg in _expr_problems(s.cond, bound):
                    report(path, msg)
            if isinstance(s, Sync) and s.group not in groups:
                report(path, f"sync names undeclared pipeline group {s.group!r}")
            for a in reads(s) + writes(s):
                check_access(a, path, bound)
            if isinstance(s, AsyncCopy):
                src, dst = decls.get(s.src.buffer), decls.get(s.dst.buffer)
                if src and dst and not dst.scope < src.scope:
                    report(path, "copy direction violates hierarchy")
            if isinstance(s, Compute) and not s.operands:
                report(path, "compute needs at least one operand")
            visit(children(s), path, bound)

    visit(p.body, (), set())

    # coarse write-before-read for locals, in program order
    first_write: dict[str, tuple] = {}
    first_read: dict[str, tuple] = {}

    def order(body, prefix):
        for i, s in enumerate(body):
            path = prefix + (i,)
            for a in reads(s):
                first_read.setdefault(a.buffer, path)
            for a in writes(s):
                first_write.setdefault(a.buffer, path)
            order(children(s), path)

    order(p.body, ())
    for b in p.locals:
        if b.name in first_read and (b.name not in first_write or first_write[b.name] > first_read[b.name]):
            report(first_read[b.name], f"local buffer {b.name!r} read before it is written")
    return diags


def check(p: Program) -> Program:
    diags = validate(p)
    if diags:
        raise ValidationError(diags)
    return p
