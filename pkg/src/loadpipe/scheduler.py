"""Schedule primitives over a small tensor dataflow graph, and GEMM lowering.

A ``ScheduleState`` is an immutable value. Every primitive returns a new state.
Buffers created by ``cache_read`` are named ``<root>_shared`` / ``<root>_reg``
unless a name is given.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from typing import Optional

from .config import WorkloadDesc
from .interp import PRE_PREFIX, UNARY_OPS
from .ir.nodes import (
    Access,
    Add,
    AsyncCopy,
    BufferDecl,
    Compute,
    Const,
    Expr,
    For,
    LoopKind,
    Mul,
    Program,
    Scope,
    Stmt,
    Var,
)
from .ir.simplify import simplify
from .ir.validate import check


class ScheduleError(ValueError):
    pass


class OrderingError(ScheduleError):
    pass


class Rule(enum.Enum):
    NOT_ASYNC_PRODUCER = "NotAsyncProducer"
    NO_SEQUENTIAL_LOOP = "NoSequentialLoop"
    SYNC_POSITION_CONFLICT = "SyncPositionConflict"


@dataclass(frozen=True)
class EligibilityReport:
    buffer: str
    eligible: bool
    failed_rule: Optional[Rule] = None
    explanation: str = ""

    def __post_init__(self):
        if self.eligible == (self.failed_rule is not None):
            raise ValueError("a report is either eligible or names a failed rule")


class IneligibleBufferError(ScheduleError):
    """Raised by ``mark_pipeline``; ``state`` records any retroactive refusal."""

    def __init__(self, report: EligibilityReport, state: "ScheduleState"):
        super().__init__(f"{report.buffer}: {report.failed_rule.value}: {report.explanation}")
        self.report = report
        self.state = state


class ProducerKind(enum.Enum):
    EXTERNAL = "ExternalInput"
    COPY = "AsyncCopyFrom"
    COMPUTE = "ComputeFrom"


@dataclass(frozen=True)
class TensorNode:
    name: str
    kind: ProducerKind
    scope: Scope
    sources: tuple[str, ...] = ()
    op: Optional[str] = None
    at: Optional[str] = None  # attach loop for cache-read buffers; None means default


@dataclass(frozen=True)
class SketchLoop:
    var: str
    extent: int
    kind: LoopKind
    axis: str


@dataclass(frozen=True)
class ScheduleState:
    graph: tuple[TensorNode, ...]
    output: str
    sketch: tuple[SketchLoop, ...]
    family: str = "gemm"
    applied: tuple[tuple, ...] = ()
    pipelined: tuple[tuple[str, int], ...] = ()
    refused: frozenset = field(default_factory=frozenset)

    def node(self, name: str) -> TensorNode:
        for n in self.graph:
            if n.name == name:
                return n
        raise ScheduleError(f"no tensor named {name!r}")

    def has(self, name: str) -> bool:
        return any(n.name == name for n in self.graph)

    def consumers(self, name: str) -> list[TensorNode]:
        return [n for n in self.graph if name in n.sources]

    @property
    def stages(self) -> dict[str, int]:
        return dict(self.pipelined)

    @property
    def tiled(self) -> bool:
        return any(rec[0] == "tile" for rec in self.applied)

    def _with(self, record: tuple, **changes) -> "ScheduleState":
        return replace(self, applied=self.applied + (record,), **changes)


# ------------------------------------------------------------ initial states


def gemm_state(M: int, N: int, K: int, batch: int = 1, pre_op: Optional[str] = None, pre_name: str = "S2") -> ScheduleState:
    """C = A @ B, optionally with an elementwise ``pre_op`` applied to A first."""
    graph = [TensorNode("A", ProducerKind.EXTERNAL, Scope.GLOBAL), TensorNode("B", ProducerKind.EXTERNAL, Scope.GLOBAL)]
    lhs = "A"
    if pre_op is not None:
        if pre_op not in UNARY_OPS:
            raise ScheduleError(f"unknown elementwise op {pre_op!r}")
        graph.append(TensorNode(pre_name, ProducerKind.COMPUTE, Scope.GLOBAL, ("A",), pre_op))
        lhs = pre_name
    graph.append(TensorNode("C", ProducerKind.COMPUTE, Scope.GLOBAL, (lhs, "B"), "mma"))
    sketch = [SketchLoop("i", M, LoopKind.PARALLEL, "i"), SketchLoop("j", N, LoopKind.PARALLEL, "j"),
              SketchLoop("k", K, LoopKind.SEQUENTIAL, "k")]
    if batch > 1:
        sketch.insert(0, SketchLoop("b", batch, LoopKind.PARALLEL, "b"))
    return ScheduleState(tuple(graph), "C", tuple(sketch))


def stencil_state(H: int, W: int) -> ScheduleState:
    """Y = stencil(X) over a parallel-only nest; no reduction loop exists."""
    graph = (TensorNode("X", ProducerKind.EXTERNAL, Scope.GLOBAL),
             TensorNode("Y", ProducerKind.COMPUTE, Scope.GLOBAL, ("X",), "stencil"))
    sketch = (SketchLoop("i", H, LoopKind.PARALLEL, "i"), SketchLoop("j", W, LoopKind.PARALLEL, "j"))
    return ScheduleState(graph, "Y", sketch, family="stencil")


# ---------------------------------------------------------------- primitives


def _check_not_pipelined_yet(s: ScheduleState, prim: str) -> None:
    if any(rec[0] in ("pipeline", "inline") for rec in s.applied):
        raise OrderingError(f"{prim} must precede pipeline and inline")


def _root(s: ScheduleState, name: str) -> str:
    n = s.node(name)
    while n.kind is ProducerKind.COPY:
        n = s.node(n.sources[0])
    return n.name


def cache_read(s: ScheduleState, tensor: str, scope: Scope, at: Optional[str] = None,
               name: Optional[str] = None) -> ScheduleState:
    _check_not_pipelined_yet(s, "cache_read")
    src = s.node(tensor)
    if not scope < src.scope:
        raise ScheduleError(f"cache_read {tensor}: {scope.keyword} is not below {src.scope.keyword}")
    if name is None:
        base = f"{_root(s, tensor)}_{'reg' if scope is Scope.REGISTER else scope.keyword}"
        name, n = base, 1
        while s.has(name):
            n += 1
            name = f"{base}{n}"
    elif s.has(name):
        raise ScheduleError(f"tensor {name!r} already exists")
    buf = TensorNode(name, ProducerKind.COPY, scope, (tensor,), at=at)
    graph = []
    for n in s.graph:
        if tensor in n.sources:
            n = replace(n, sources=tuple(name if x == tensor else x for x in n.sources))
        graph.append(n)
        if n.name == tensor:
            graph.append(buf)
    return s._with(("cache_read", tensor, scope.keyword, at, name), graph=tuple(graph))


_SUFFIXES = {2: "oi", 3: "oir"}


def tile(s: ScheduleState, tensor: str, splits: dict[str, list[int]]) -> ScheduleState:
    """Split sketch loops. ``splits[var]`` is either the full list of extents
    (product equal to the loop extent) or a single inner factor."""
    _check_not_pipelined_yet(s, "tile")
    if tensor != s.output:
        raise ScheduleError(f"only the output tensor {s.output!r} carries a loop sketch")
    loops = {l.var: l for l in s.sketch}
    for var in splits:
        if var not in loops:
            raise ScheduleError(f"no loop {var!r} in the sketch of {tensor}")
    new: list[SketchLoop] = []
    for l in s.sketch:
        if l.var not in splits:
            new.append(l)
            continue
        factors = list(splits[l.var])
        if any(f < 1 for f in factors):
            raise ScheduleError(f"split factors of {l.var} must be positive")
        prod = 1
        for f in factors:
            prod *= f
        if len(factors) == 1:
            if l.extent % factors[0]:
                raise ScheduleError(f"split factor {factors[0]} does not divide extent {l.extent} of {l.var}")
            factors = [l.extent // factors[0], factors[0]]
        elif prod != l.extent:
            raise ScheduleError(f"split factors {factors} of {l.var} do not multiply to extent {l.extent}")
        if len(factors) not in _SUFFIXES:
            raise ScheduleError(f"{l.var} may be split into 2 or 3 loops")
        for f, suffix in zip(factors, _SUFFIXES[len(factors)]):
            new.append(SketchLoop(l.axis + suffix, f, l.kind, l.axis))
    # outer levels of every axis first, then the next level, and so on
    levels = {}
    for l in new:
        depth = "oir".index(l.var[-1]) if l.var != l.axis else 0
        levels.setdefault(depth, []).append(l)
    ordered = tuple(l for d in sorted(levels) for l in levels[d])
    return s._with(("tile", tensor, tuple(sorted((k, tuple(v)) for k, v in splits.items()))), sketch=ordered)


def _attach_loop(s: ScheduleState, n: TensorNode) -> Optional[str]:
    """The sketch loop a buffer's fill is placed under (its innermost enclosing loop)."""
    names = [l.var for l in s.sketch]
    if n.at is not None:
        if n.at not in names:
            raise ScheduleError(f"{n.name}: attach loop {n.at!r} is not in the sketch")
        return n.at
    seq = [l.var for l in s.sketch if l.kind is LoopKind.SEQUENTIAL]
    if seq:
        return seq[min(1, len(seq) - 1)] if n.scope is Scope.REGISTER else seq[0]
    # parallel-only nest: fill once per outer tile
    outer = [l.var for l in s.sketch if l.var.endswith("o") and l.var != l.axis]
    return outer[-1] if outer else None


def pipelined_loop(s: ScheduleState, buffer: str) -> Optional[str]:
    """Innermost sequential sketch loop enclosing the buffer's fill."""
    at = _attach_loop(s, s.node(buffer))
    if at is None:
        return None
    found = None
    for l in s.sketch:
        if l.kind is LoopKind.SEQUENTIAL:
            found = l.var
        if l.var == at:
            break
    return found


def check_eligibility(s: ScheduleState, buffer: str) -> EligibilityReport:
    n = s.node(buffer)
    if n.kind is not ProducerKind.COPY:
        what = "an external input" if n.kind is ProducerKind.EXTERNAL else f"compute op {n.op!r}"
        return EligibilityReport(buffer, False, Rule.NOT_ASYNC_PRODUCER, f"{buffer} is produced by {what}, not an async copy")
    loop = pipelined_loop(s, buffer)
    if loop is None:
        return EligibilityReport(buffer, False, Rule.NO_SEQUENTIAL_LOOP, f"{buffer} is not filled inside any sequential loop")
    if buffer in s.refused:
        return EligibilityReport(buffer, False, Rule.SYNC_POSITION_CONFLICT, f"{buffer} was refused after a sync position conflict")
    if n.scope is Scope.SHARED:
        for other, _ in s.pipelined:
            o = s.node(other)
            if other != buffer and o.scope is Scope.SHARED:
                other_loop = pipelined_loop(s, other)
                if other_loop != loop:
                    return EligibilityReport(
                        buffer, False, Rule.SYNC_POSITION_CONFLICT,
                        f"{buffer} would sync at loop {loop} but {other} syncs at {other_loop}",
                    )
    return EligibilityReport(buffer, True)


def mark_pipeline(s: ScheduleState, buffer: str, stages: int) -> ScheduleState:
    if stages < 2:
        raise ScheduleError(f"pipeline {buffer}: stages must be >= 2, got {stages}")
    if not s.tiled:
        raise OrderingError("pipeline requires loop sketch")
    s.node(buffer)
    report = check_eligibility(s, buffer)
    if not report.eligible:
        after = s
        if report.failed_rule is Rule.SYNC_POSITION_CONFLICT:
            loop = pipelined_loop(s, buffer)
            losers = {buffer} | {
                b for b, _ in s.pipelined
                if s.node(b).scope is Scope.SHARED and pipelined_loop(s, b) != loop
            }
            after = replace(
                s,
                pipelined=tuple((b, k) for b, k in s.pipelined if b not in losers),
                refused=s.refused | losers,
            )
        raise IneligibleBufferError(report, after)
    if any(rec[0] == "inline" for rec in s.applied):
        raise OrderingError("pipeline must precede inline")
    pipelined = tuple((b, k) for b, k in s.pipelined if b != buffer) + ((buffer, stages),)
    return s._with(("pipeline", buffer, stages), pipelined=pipelined)


def _final_consumer(s: ScheduleState, name: str) -> tuple[TensorNode, list[str]]:
    """Follow copy buffers downstream until a compute node; returns it and the chain."""
    chain = [name]
    while True:
        cons = s.consumers(chain[-1])
        if len(cons) != 1:
            raise ScheduleError(f"{chain[-1]} must have exactly one consumer to fuse through")
        c = cons[0]
        if c.kind is not ProducerKind.COPY:
            return c, chain
        chain.append(c.name)


def _fuse_into(c: TensorNode, feeding: str, f: str) -> str:
    if c.op != "mma" or c.sources[0] != feeding:
        raise ScheduleError(f"cannot fuse {f!r} into {c.name} ({c.op}) through operand {feeding}")
    return PRE_PREFIX + f


def inline(s: ScheduleState, tensor: str) -> ScheduleState:
    t = s.node(tensor)
    if t.kind is not ProducerKind.COMPUTE or len(t.sources) != 1 or t.op not in UNARY_OPS:
        raise ScheduleError(f"inline {tensor}: not an elementwise unary producer")
    if tensor == s.output:
        raise ScheduleError("cannot inline the output tensor")
    src, f = t.sources[0], t.op
    stages = s.stages
    replaced: dict[str, TensorNode] = {}
    for c in s.consumers(tensor):
        if c.kind is ProducerKind.COPY:
            final, chain = _final_consumer(s, c.name)
            if any(b in stages for b in chain):
                # keep the copy chain async and move f into the final compute
                replaced[c.name] = replace(c, sources=(src,))
                replaced[final.name] = replace(replaced.get(final.name, final), op=_fuse_into(final, chain[-1], f))
            else:
                replaced[c.name] = TensorNode(c.name, ProducerKind.COMPUTE, c.scope, (src,), f, c.at)
        else:
            op = _fuse_into(c, tensor, f)
            replaced[c.name] = replace(c, op=op, sources=tuple(src if x == tensor else x for x in c.sources))
    graph = tuple(replaced.get(n.name, n) for n in s.graph if n.name != tensor)
    out = s._with(("inline", tensor), graph=graph)
    for b in stages:
        if out.has(b) and out.node(b).kind is not ProducerKind.COPY:
            raise ScheduleError(f"inline {tensor} would make pipelined buffer {b} non-async")
    return out


# ------------------------------------------------------------------- scripts

_WORKLOAD_RE = re.compile(r"^(\w+)=(\w+)$")


def parse_script(text: str) -> ScheduleState:
    """Apply a schedule script. The first line names the workload, e.g.
    ``workload gemm M=8 N=8 K=8 [batch=2] [pre=inc]``; each further line is
    one primitive: ``cache_read T scope [at LOOP] [as NAME]``,
    ``tile T i=2,4 k=8`` (or ``ko=8 ki=16``), ``pipeline BUF N``, ``inline T``."""
    s: Optional[ScheduleState] = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        try:
            if s is None:
                s = _workload_line(words)
                continue
            s = _apply(s, words)
        except (ScheduleError, ValueError, KeyError) as exc:
            if isinstance(exc, IneligibleBufferError):
                raise
            raise ScheduleError(f"line {lineno}: {exc}") from exc
    if s is None:
        raise ScheduleError("empty schedule script")
    return s


def _workload_line(words: list[str]) -> ScheduleState:
    if words[0] != "workload" or len(words) < 2:
        raise ScheduleError("script must start with 'workload gemm M=.. N=.. K=..' or 'workload stencil H=.. W=..'")
    kv = {}
    for w in words[2:]:
        m = _WORKLOAD_RE.match(w)
        if not m:
            raise ScheduleError(f"bad workload parameter {w!r}")
        kv[m.group(1)] = m.group(2)
    if words[1] == "gemm":
        pre = kv.pop("pre", None)
        dims = {k: int(v) for k, v in kv.items()}
        return gemm_state(dims.pop("M"), dims.pop("N"), dims.pop("K"), dims.pop("batch", 1), pre)
    if words[1] == "stencil":
        return stencil_state(int(kv["H"]), int(kv["W"]))
    raise ScheduleError(f"unknown workload family {words[1]!r}")


def _apply(s: ScheduleState, words: list[str]) -> ScheduleState:
    prim, args = words[0], words[1:]
    if prim == "cache_read":
        at = name = None
        rest = args[2:]
        while rest:
            if rest[0] == "at" and len(rest) > 1:
                at = rest[1]
            elif rest[0] == "as" and len(rest) > 1:
                name = rest[1]
            else:
                raise ScheduleError(f"unexpected {' '.join(rest)!r}")
            rest = rest[2:]
        return cache_read(s, args[0], Scope.from_keyword(args[1]), at, name)
    if prim == "tile":
        return tile(s, args[0], _tile_splits(s, args[1:]))
    if prim == "pipeline":
        return mark_pipeline(s, args[0], int(args[1]))
    if prim == "inline":
        return inline(s, args[0])
    raise ScheduleError(f"unknown primitive {prim!r}")


def _tile_splits(s: ScheduleState, items: list[str]) -> dict[str, list[int]]:
    axes = {l.axis for l in s.sketch}
    splits: dict[str, list[int]] = {}
    named: dict[str, dict[str, int]] = {}
    for item in items:
        key, _, val = item.partition("=")
        if key in axes:
            splits[key] = [int(v) for v in val.split(",")]
        elif key[:-1] in axes and key[-1] in "oir":
            named.setdefault(key[:-1], {})[key[-1]] = int(val)
        else:
            raise ScheduleError(f"bad tile argument {item!r}")
    for axis, parts in named.items():
        order = [c for c in "oir" if c in parts]
        if order != list("oir"[: len(order)]):
            raise ScheduleError(f"split of {axis} must name {axis}o, {axis}i[, {axis}r] in order")
        splits[axis] = [parts[c] for c in order]
    return splits


# ------------------------------------------------------------------- lowering


_DTYPES = {1: "i8", 2: "f16", 4: "f32", 8: "f64"}


def _levels(s: ScheduleState, axis: str, pad_front: bool, depth: int) -> list[tuple[str, int]]:
    loops = [(l.var, l.extent) for l in s.sketch if l.axis == axis]
    if len(loops) > depth:
        raise ScheduleError(f"axis {axis} split into more than {depth} levels")
    extents = [e for _, e in loops]
    pad = [1] * (depth - len(extents))
    extents = pad + extents if pad_front else extents + pad
    return [(axis + suffix, e) for suffix, e in zip("oir", extents)]


def _v(name: str) -> Var:
    return Var(name)


def workload_of(s: ScheduleState, elem_bytes: int = 2) -> WorkloadDesc:
    """GEMM workload implied by the sketch extents."""
    if s.family != "gemm":
        raise ScheduleError(f"no workload descriptor for family {s.family!r}")
    ext = {l.axis: 1 for l in s.sketch}
    for l in s.sketch:
        ext[l.axis] *= l.extent
    return WorkloadDesc(ext["i"], ext["j"], ext["k"], ext.get("b", 1), elem_bytes)


def lower(s: ScheduleState, workload: Optional[WorkloadDesc] = None) -> Program:
    """Lower a GEMM schedule into a Program carrying pipeline hints."""
    if s.family != "gemm":
        raise ScheduleError(f"lowering is implemented for the gemm family, not {s.family!r}")
    workload = workload or workload_of(s)
    ext = {l.axis: 1 for l in s.sketch}
    for l in s.sketch:
        ext[l.axis] *= l.extent
    batch = ext.get("b", 1)
    if (ext["i"], ext["j"], ext["k"], batch) != (workload.M, workload.N, workload.K, workload.batch):
        raise ScheduleError("workload shape does not match the schedule")
    dtype = _DTYPES.get(workload.elem_bytes)
    if dtype is None:
        raise ScheduleError(f"unsupported element size {workload.elem_bytes}")

    (io, EM), (ii, TM) = _levels(s, "i", True, 2)
    (jo, EN), (ji, TN) = _levels(s, "j", True, 2)
    (ko, E), (ki, F), (kr, RK) = _levels(s, "k", False, 3)
    TK = F * RK
    kloop_of = {l.var: l.var for l in s.sketch}
    level_of_loop = {ko: 0, ki: 1}
    # untiled k: the single sketch loop "k" plays ko
    kloop_of["k"] = ko
    bpre: tuple[Expr, ...] = (_v("b"),) if batch > 1 else ()
    stages = s.stages
    out = s.node(s.output)

    # operand chains: [root, buf1, buf2, ...]
    chains = []
    for src in out.sources:
        chain = [src]
        while s.node(chain[0]).scope is not Scope.GLOBAL:
            chain.insert(0, s.node(chain[0]).sources[0])
        chains.append(chain)
    if len(chains) != 2:
        raise ScheduleError("gemm output must have two operands")

    def level(name: str) -> int:
        n = s.node(name)
        if n.scope is Scope.GLOBAL:
            return -1
        at = _attach_loop(s, n)
        lv = level_of_loop.get(kloop_of.get(at, at))
        if lv is None:
            raise ScheduleError(f"{name}: buffers must attach at a reduction loop")
        return lv

    def kidx(h: int, ctx: int, local: Expr) -> Expr:
        terms: list[Expr] = []
        comps = [Mul(_v(ko), Const(TK)), Mul(_v(ki), Const(RK))]
        for lv in range(h + 1, min(ctx, 1) + 1):
            terms.append(comps[lv])
        terms.append(local)
        e = terms[0]
        for t in terms[1:]:
            e = Add(e, t)
        return simplify(e)

    def spatial(is_a: bool, glob: bool) -> Expr:
        o, i, t = (io, ii, TM) if is_a else (jo, ji, TN)
        return simplify(Add(Mul(_v(o), Const(t)), _v(i))) if glob else _v(i)

    def access(is_a: bool, name: str, ctx: int, local: Expr) -> Access:
        h = level(name)
        k = kidx(h, ctx, local)
        sp = spatial(is_a, h == -1)
        pre = bpre if h == -1 else ()
        return Access(name, pre + ((sp, k) if is_a else (k, sp)))

    def gshape(is_a: bool) -> tuple[int, ...]:
        return (batch,) * (batch > 1) + ((workload.M, workload.K) if is_a else (workload.K, workload.N))

    globals_: dict[str, BufferDecl] = {}
    locals_: list[BufferDecl] = []
    pre_nests: list[Stmt] = []
    fills: dict[int, list[Stmt]] = {0: [], 1: []}
    operand_access = []
    for pos, chain in enumerate(chains):
        is_a = pos == 0
        root = s.node(chain[0])
        if root.kind is ProducerKind.COMPUTE:
            # materialized elementwise pre-op over the whole operand
            srcname = root.sources[0]
            if root.op not in UNARY_OPS or s.node(srcname).kind is not ProducerKind.EXTERNAL:
                raise ScheduleError(f"unsupported producer for {root.name}")
            globals_[srcname] = BufferDecl(srcname, Scope.GLOBAL, gshape(is_a), dtype)
            d0, d1 = ("pi", "pk") if is_a else ("pk", "pj")
            e0, e1 = gshape(is_a)[-2:]
            idx = bpre + (_v(d0), _v(d1))
            nest: Stmt = For(d1, e1, LoopKind.PARALLEL, (
                Compute(Access(root.name, idx), root.op, (Access(srcname, idx),), 1),))
            nest = For(d0, e0, LoopKind.PARALLEL, (nest,))
            if batch > 1:
                nest = For("b", batch, LoopKind.PARALLEL, (nest,))
            pre_nests.append(nest)
        globals_[root.name] = BufferDecl(root.name, Scope.GLOBAL, gshape(is_a), dtype)
        prev_level = -1
        for src_name, name in zip(chain, chain[1:]):
            n = s.node(name)
            lv = level(name)
            if lv < prev_level:
                raise ScheduleError(f"{name} attaches outside its source buffer's loop")
            prev_level = lv
            kl = TK if lv == 0 else RK
            shape = (TM, kl) if is_a else (kl, TN)
            locals_.append(BufferDecl(name, n.scope, shape, dtype, stages.get(name)))
            sp_var = ii if is_a else ji
            dst = Access(name, (_v(sp_var), _v("kk")) if is_a else (_v("kk"), _v(sp_var)))
            src = access(is_a, src_name, lv, _v("kk"))
            if n.kind is ProducerKind.COPY:
                stmt: Stmt = AsyncCopy(dst, src)
            elif n.kind is ProducerKind.COMPUTE and n.op in UNARY_OPS:
                stmt = Compute(dst, n.op, (src,), 1)
            else:
                raise ScheduleError(f"unsupported producer for {name}")
            outer_var, outer_ext, inner_var, inner_ext = (ii, TM, "kk", kl) if is_a else ("kk", kl, ji, TN)
            fills[lv].append(For(outer_var, outer_ext, LoopKind.PARALLEL,
                                 (For(inner_var, inner_ext, LoopKind.PARALLEL, (stmt,)),)))
        operand_access.append(access(is_a, chain[-1], 2, _v(kr)))

    globals_[out.name] = BufferDecl(out.name, Scope.GLOBAL, (batch,) * (batch > 1) + (workload.M, workload.N), dtype)
    cacc = Access(out.name, bpre + (spatial(True, True), spatial(False, True)))
    compute = Compute(cacc, out.op, (cacc, *operand_access), 2)
    body: Stmt = For(kr, RK, LoopKind.SEQUENTIAL, (compute,))
    body = For(ii, TM, LoopKind.PARALLEL, (For(ji, TN, LoopKind.PARALLEL, (body,)),))
    body = For(ki, F, LoopKind.SEQUENTIAL, tuple(fills[1]) + (body,))
    body = For(ko, E, LoopKind.SEQUENTIAL, tuple(fills[0]) + (body,))
    body = For(io, EM, LoopKind.PARALLEL, (For(jo, EN, LoopKind.PARALLEL, (body,)),))
    if batch > 1:
        body = For("b", batch, LoopKind.PARALLEL, (body,))
    order = [n.name for n in s.graph if n.name in globals_]
    decls = tuple(globals_[n] for n in order) + tuple(locals_)
    return check(Program(decls, (), tuple(pre_nests) + (body,)))
