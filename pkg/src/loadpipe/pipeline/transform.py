"""Transformation half of the pipelining pass.

Index algebra for a root pipeline over loop ``v`` (extent E, stages s,
lookahead L = s-1): the steady copy fills slot ``(v+L) % s`` with chunk
``(v+L) % E``; consumers read slot ``v % s``.

A nested pipeline over ``u`` (extent F, stages t, lookahead L = t-1) inside
its parent's loop ``v`` runs on the fused step ``g = v*F + u``. Its copy fills
slot ``(g+L) % t`` from the parent's slot ``((g+L)/F) % s`` at inner offset
``(g+L) % F``; consumers read slot ``g % t``. The parent chunk needed by the
copy advances when ``(g+L) % F == 0``, which is where the parent's
release/wait pair goes.
"""

from __future__ import annotations

import copy
from typing import Callable

from ..ir.nodes import (
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
    Mod,
    Mul,
    Path,
    PipelineGroup,
    Predicated,
    Program,
    Stmt,
    Sync,
    SyncKind,
    Var,
    children,
    substitute,
    with_body,
)
from ..ir.simplify import simplify
from ..ir.validate import check
from .analysis import BufferPipelineInfo, PipelinePlan, analyze

# ------------------------------------------------------------------ helpers


def _has_body(s: Stmt) -> bool:
    return isinstance(s, (For, Block, Predicated))


def map_accesses(s: Stmt, fn: Callable[[Access, bool], Access],
                 cond: Callable[[Expr], Expr] = lambda e: e) -> Stmt:
    """Rebuild ``s`` with ``fn(access, is_write)`` applied to every access and
    ``cond`` to every predicate."""
    if isinstance(s, AsyncCopy):
        return AsyncCopy(fn(s.dst, True), fn(s.src, False))
    if isinstance(s, Compute):
        return Compute(fn(s.dst, True), s.op, tuple(fn(a, False) for a in s.operands), s.flops)
    if isinstance(s, Predicated):
        return Predicated(cond(s.cond), tuple(map_accesses(c, fn, cond) for c in s.body))
    if _has_body(s):
        return with_body(s, tuple(map_accesses(c, fn, cond) for c in s.body))
    return s


def subst_stmt(s: Stmt, mapping: dict[str, Expr]) -> Stmt:
    """Substitute loop variables by expressions and simplify every index."""

    def expr(e: Expr) -> Expr:
        return simplify(substitute(e, mapping))

    return map_accesses(s, lambda a, _w: Access(a.buffer, tuple(expr(e) for e in a.indices)), expr)


def _sync(kind: SyncKind, group: str) -> Sync:
    return Sync(kind, group)


class Insertions:
    """Statements to insert into statement lists, keyed by the list's path.

    Gap ``g`` of a list sits before its element ``g``; inserting after element
    ``i`` means gap ``i+1``.
    """

    def __init__(self):
        self.gaps: dict[Path, dict[int, list[Stmt]]] = {}

    def add(self, list_path: Path, gap: int, stmts) -> None:
        self.gaps.setdefault(tuple(list_path), {}).setdefault(gap, []).extend(stmts)

    def before(self, path: Path, stmts) -> None:
        self.add(path[:-1], path[-1], stmts)

    def after(self, path: Path, stmts) -> None:
        self.add(path[:-1], path[-1] + 1, stmts)

    def apply(self, body: tuple[Stmt, ...], list_path: Path = ()) -> tuple[Stmt, ...]:
        gaps = self.gaps.get(list_path, {})
        out: list[Stmt] = []
        for i, s in enumerate(body):
            out.extend(gaps.get(i, ()))
            if _has_body(s):
                s = with_body(s, self.apply(children(s), list_path + (i,)))
            out.append(s)
        out.extend(gaps.get(len(body), ()))
        return tuple(out)

    def remap(self, path: Path) -> Path:
        new = list(path)
        for d in range(len(path)):
            gaps = self.gaps.get(tuple(path[:d]), {})
            new[d] = path[d] + sum(len(v) for g, v in gaps.items() if g <= path[d])
        return tuple(new)


def _remap_plan(plan: PipelinePlan, ins: Insertions) -> PipelinePlan:
    out = copy.deepcopy(plan)
    for info in out:
        info.copy_path = ins.remap(info.copy_path)
        info.consumers = [ins.remap(c) for c in info.consumers]
        info.loop_path = ins.remap(info.loop_path)
        info.load_region = ins.remap(info.load_region)
        info.use_region = (ins.remap(info.use_region[0]), ins.remap(info.use_region[1]))
        info.prologue_site = ins.remap(info.prologue_site)
    return out


# ---------------------------------------------------------- step 1: expand


def expand_buffers(p: Program, plan: PipelinePlan) -> Program:
    """Give each pipelined buffer a leading slot dimension (slot 0 for now)."""
    stages = {i.buffer: i.stages for i in plan}
    if not stages:
        return p
    decls = tuple(
        BufferDecl(b.name, b.scope, (stages[b.name],) + b.shape, b.dtype, None) if b.name in stages else b
        for b in p.buffers
    )
    groups = p.groups + tuple(PipelineGroup(i.buffer, p.buffer(i.buffer).scope, i.stages) for i in plan)

    def fn(a: Access, _w: bool) -> Access:
        return Access(a.buffer, (Const(0),) + a.indices) if a.buffer in stages else a

    return Program(decls, groups, tuple(map_accesses(s, fn) for s in p.body))


# ------------------------------------------------ step 2+3: shift and wrap


def _step(plan: PipelinePlan, info: BufferPipelineInfo) -> tuple[Expr, Expr]:
    """(consumer step, producer step) as expressions of the loop variables."""
    u = Var(info.loop_var)
    if info.parent is None:
        g: Expr = u
    else:
        parent = plan[info.parent]
        g = Add(Mul(Var(parent.loop_var), Const(info.loop_extent)), u)
    return g, Add(g, Const(info.lookahead))


def shift_and_wrap_indices(p: Program, plan: PipelinePlan) -> Program:
    """Fill slot indices and shift the producer's source to the lookahead chunk."""
    copy_rules: dict[Path, Callable[[AsyncCopy], AsyncCopy]] = {}
    consumer_slot: dict[str, Expr] = {}
    for info in plan:
        g, gl = _step(plan, info)
        consumer_slot[info.buffer] = simplify(Mod(g, Const(info.stages)))
        dst_slot = simplify(Mod(gl, Const(info.stages)))
        if info.parent is None:
            mapping = {info.loop_var: simplify(Mod(gl, Const(info.loop_extent)))}
            src_slot = None
        else:
            parent = plan[info.parent]
            chunk = FloorDiv(gl, Const(info.loop_extent))
            mapping = {
                info.loop_var: simplify(Mod(gl, Const(info.loop_extent))),
                parent.loop_var: simplify(Mod(chunk, Const(parent.loop_extent))),
            }
            src_slot = simplify(Mod(chunk, Const(parent.stages)))

        def rule(c: AsyncCopy, dst_slot=dst_slot, mapping=mapping, src_slot=src_slot) -> AsyncCopy:
            dst = Access(c.dst.buffer, (dst_slot,) + c.dst.indices[1:])
            idx = tuple(simplify(substitute(e, mapping)) for e in c.src.indices)
            if src_slot is not None:
                idx = (src_slot,) + idx[1:]
            return AsyncCopy(dst, Access(c.src.buffer, idx))

        copy_rules[info.copy_path] = rule

    def rebuild(body: tuple[Stmt, ...], prefix: Path) -> tuple[Stmt, ...]:
        out = []
        for i, s in enumerate(body):
            path = prefix + (i,)
            if path in copy_rules:
                s = copy_rules[path](s)
            elif isinstance(s, (AsyncCopy, Compute)):
                def fn(a: Access, is_write: bool) -> Access:
                    if a.buffer in consumer_slot and not is_write:
                        return Access(a.buffer, (consumer_slot[a.buffer],) + a.indices[1:])
                    return a

                s = map_accesses(s, fn)
            elif _has_body(s):
                s = with_body(s, rebuild(children(s), path))
            out.append(s)
        return tuple(out)

    return Program(p.buffers, p.groups, rebuild(p.body, ()))


# ------------------------------------------------------- step 4: prologues


def _fill(group: str, stmt: Stmt) -> list[Stmt]:
    return [_sync(SyncKind.PRODUCER_ACQUIRE, group), stmt, _sync(SyncKind.PRODUCER_COMMIT, group)]


def inject_prologues(p: Program, plan: PipelinePlan) -> tuple[Program, PipelinePlan]:
    """Copy the first stages-1 chunks ahead of steady state.

    Returns the new program and the plan with paths moved to match it.
    """
    ins = Insertions()
    for info in plan:
        if info.parent is not None:
            continue
        load = p.stmt_at(info.load_region)
        stmts: list[Stmt] = []
        for c in range(info.lookahead):
            stmts += _fill(info.buffer, subst_stmt(load, {info.loop_var: Const(c - info.lookahead)}))
        ins.before(info.loop_path, stmts)
    for info in plan:
        if info.parent is None:
            continue
        parent = plan[info.parent]
        load = p.stmt_at(info.load_region)
        body: list[Stmt] = []
        for j in range(info.lookahead):
            if j % info.loop_extent == 0:
                body.append(_sync(SyncKind.CONSUMER_WAIT, parent.buffer))
            chunk = subst_stmt(load, {parent.loop_var: Const(0), info.loop_var: Const(j - info.lookahead)})
            body += _fill(info.buffer, chunk)
        ins.add(parent.loop_path, 0, [Predicated(Eq(Var(parent.loop_var), Const(0)), tuple(body))])
    return Program(p.buffers, p.groups, ins.apply(p.body)), _remap_plan(plan, ins)


# ------------------------------------------------------------ step 5: sync


def _drains(plan: PipelinePlan, info: BufferPipelineInfo) -> list[Stmt]:
    """Retire the batches still in flight after the outermost pipelined loop."""
    wait = _sync(SyncKind.CONSUMER_WAIT, info.buffer)
    release = _sync(SyncKind.CONSUMER_RELEASE, info.buffer)
    if not info.children:
        return [wait, release] * info.lookahead
    out: list[Stmt] = []
    for name in info.children:
        out += _drains(plan, plan[name])
    child = plan[info.children[0]]
    held = -(-child.lookahead // child.loop_extent)  # parent chunks waited but not yet released
    out += [wait] * (info.lookahead - held) + [release] * info.lookahead
    return out


def inject_sync(p: Program, plan: PipelinePlan) -> Program:
    ins = Insertions()
    for info in plan:
        if info.parent is None:
            continue
        parent = plan[info.parent]
        trigger = (info.loop_extent - info.lookahead % info.loop_extent) % info.loop_extent
        ins.add(info.loop_path, 0, [Predicated(
            Eq(Var(info.loop_var), Const(trigger)),
            (_sync(SyncKind.CONSUMER_RELEASE, parent.buffer), _sync(SyncKind.CONSUMER_WAIT, parent.buffer)),
        )])
    # all acquire/commit pairs first so a gap shared by one buffer's commit
    # and another's wait keeps the commit ahead
    for info in plan:
        ins.before(info.load_region, [_sync(SyncKind.PRODUCER_ACQUIRE, info.buffer)])
        ins.after(info.load_region, [_sync(SyncKind.PRODUCER_COMMIT, info.buffer)])
    for info in plan:
        if not info.children:
            ins.before(info.use_region[0], [_sync(SyncKind.CONSUMER_WAIT, info.buffer)])
            ins.after(info.use_region[1], [_sync(SyncKind.CONSUMER_RELEASE, info.buffer)])
    for info in plan:
        if info.parent is None:
            ins.after(info.loop_path, _drains(plan, info))
    return Program(p.buffers, p.groups, ins.apply(p.body))


# ------------------------------------------------------------------ driver


def transform_with_plan(p: Program) -> tuple[Program, PipelinePlan]:
    check(p)
    plan = analyze(p)
    if not len(plan):
        return p, plan
    q = expand_buffers(p, plan)
    q = shift_and_wrap_indices(q, plan)
    q, moved = inject_prologues(q, plan)
    q = inject_sync(q, moved)
    return check(q), plan


def transform(p: Program) -> Program:
    """Pipeline every buffer carrying a stage hint. Identity when there are none."""
    return transform_with_plan(p)[0]
