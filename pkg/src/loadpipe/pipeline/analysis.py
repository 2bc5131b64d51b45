"""Analysis half of the pipelining pass: builds a PipelinePlan from hints."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

from ..ir.nodes import (
    AsyncCopy,
    Compute,
    For,
    LoopKind,
    Path,
    Program,
    Scope,
    free_vars,
    reads,
    walk,
    writes,
)


class PipelineError(ValueError):
    """Analysis failure; ``rule`` names the eligibility rule when one applies."""

    def __init__(self, message: str, rule: Optional[str] = None):
        super().__init__(f"{rule}: {message}" if rule else message)
        self.rule = rule


@dataclass
class BufferPipelineInfo:
    buffer: str
    stages: int
    producer: Optional[str] = None
    copy_path: Path = ()
    consumers: list[Path] = field(default_factory=list)
    loop_var: Optional[str] = None
    loop_extent: int = 0
    loop_path: Path = ()
    load_region: Path = ()
    use_region: tuple[Path, Path] = ((), ())  # first and last statement of the use span
    prologue_site: Path = ()
    prologue_predicate: Optional[str] = None
    parent: Optional[str] = None
    children: list[str] = field(default_factory=list)

    @property
    def lookahead(self) -> int:
        return self.stages - 1

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("copy_path", "loop_path", "load_region", "prologue_site"):
            d[k] = list(d[k])
        d["consumers"] = [list(c) for c in self.consumers]
        d["use_region"] = [list(x) for x in self.use_region]
        return d


@dataclass
class PipelinePlan:
    infos: list[BufferPipelineInfo]

    def __getitem__(self, name: str) -> BufferPipelineInfo:
        for i in self.infos:
            if i.buffer == name:
                return i
        raise KeyError(name)

    def __iter__(self):
        return iter(self.infos)

    def __len__(self) -> int:
        return len(self.infos)

    def to_json(self) -> str:
        return json.dumps({"pipelines": [i.to_dict() for i in self.infos]}, indent=2)


# ------------------------------------------------------------------- step 1


def collect_hints(p: Program) -> list[tuple[str, int]]:
    return [(b.name, b.stages) for b in p.buffers if b.stages is not None]


# ------------------------------------------------------------------- step 2


def reconstruct_producers(p: Program, hints: list[tuple[str, int]]) -> PipelinePlan:
    hinted = dict(hints)
    infos = []
    for name, stages in hints:
        info = BufferPipelineInfo(name, stages)
        for path, s in walk(p.body):
            if any(a.buffer == name for a in writes(s)):
                if isinstance(s, Compute):
                    raise PipelineError(f"{name} is written by compute op {s.op!r}", "NotAsyncProducer")
                if info.producer is not None:
                    raise PipelineError(f"ambiguous producer: {name} has more than one async copy writer")
                info.producer = s.src.buffer
                info.copy_path = path
            if any(a.buffer == name for a in reads(s)):
                info.consumers.append(path)
        if info.producer is None:
            raise PipelineError(f"{name} is never written by an async copy", "NotAsyncProducer")
        if info.producer in hinted:
            info.parent = info.producer
        infos.append(info)
    plan = PipelinePlan(infos)
    for info in infos:
        if info.parent:
            parent = plan[info.parent]
            if not p.buffer(info.buffer).scope < p.buffer(parent.buffer).scope:
                raise PipelineError(f"{info.buffer} and its producer {parent.buffer} do not descend the hierarchy")
            parent.children.append(info.buffer)
    return plan


# ------------------------------------------------------------------- step 3


def _enclosing_loops(p: Program, path: Path) -> list[tuple[Path, For]]:
    out = []
    for d in range(1, len(path)):
        s = p.stmt_at(path[:d])
        if isinstance(s, For):
            out.append((path[:d], s))
    return out


def find_pipelined_loop(p: Program, info: BufferPipelineInfo) -> tuple[str, int]:
    copy = p.stmt_at(info.copy_path)
    assert isinstance(copy, AsyncCopy)
    used = set().union(*(free_vars(e) for e in copy.dst.indices))
    for path, loop in reversed(_enclosing_loops(p, info.copy_path)):
        if loop.kind is LoopKind.SEQUENTIAL and loop.var not in used:
            info.loop_var, info.loop_extent, info.loop_path = loop.var, loop.extent, path
            return loop.var, loop.extent
    raise PipelineError(f"the copy into {info.buffer} is not inside a suitable sequential loop", "NoSequentialLoop")


# ------------------------------------------------------------------- step 4


def record_regions(p: Program, info: BufferPipelineInfo) -> BufferPipelineInfo:
    lp = info.loop_path
    depth = len(lp)
    info.load_region = info.copy_path[: depth + 1]
    idx = []
    for c in info.consumers:
        if len(c) <= depth or c[:depth] != lp:
            raise PipelineError(f"consumer escapes pipelined loop: {info.buffer} is read outside loop {info.loop_var}")
        idx.append(c[depth])
    lo, hi = min(idx), max(idx)
    if lo <= info.load_region[-1]:
        raise PipelineError(f"{info.buffer} is used before it is loaded in the body of loop {info.loop_var}")
    info.use_region = (lp + (lo,), lp + (hi,))
    return info


# ------------------------------------------------------------------- step 5


def decide_prologue_sites(plan: PipelinePlan) -> PipelinePlan:
    for info in plan:
        root = info
        while root.parent:
            root = plan[root.parent]
        if root is info:
            info.prologue_site = info.loop_path
            info.prologue_predicate = None
        else:
            info.prologue_site = root.loop_path + (0,)
            info.prologue_predicate = f"{root.loop_var} == 0"
    return plan


def _check_nesting(p: Program, plan: PipelinePlan) -> None:
    shared_loops = {}
    for info in plan:
        if p.buffer(info.buffer).scope is Scope.SHARED:
            shared_loops[info.buffer] = info.loop_path
    if len(set(shared_loops.values())) > 1:
        raise PipelineError(
            "shared-scope pipelines sync at different loops: "
            + ", ".join(f"{b}@{p.stmt_at(lp).var}" for b, lp in shared_loops.items()),
            "SyncPositionConflict",
        )
    for info in plan:
        if not info.parent:
            continue
        parent = plan[info.parent]
        if parent.parent:
            raise PipelineError(f"{info.buffer}: pipelines nest at most two levels")
        if len(parent.children) != 1:
            raise PipelineError(f"{parent.buffer} feeds more than one pipelined buffer")
        if parent.consumers != [info.copy_path]:
            raise PipelineError(f"{parent.buffer} must be read only by the copy into {info.buffer}")
        lp = info.loop_path
        if lp[:-1] != parent.loop_path:
            raise PipelineError(f"loop {info.loop_var} must sit directly in the body of loop {parent.loop_var}")
        if lp[-1] != parent.use_region[0][-1] or parent.use_region[0] != parent.use_region[1]:
            raise PipelineError(f"the use of {parent.buffer} must be exactly loop {info.loop_var}")
        if info.stages - 1 > (parent.stages - 1) * info.loop_extent:
            raise PipelineError(
                f"lookahead of {info.buffer} ({info.stages - 1}) outruns {parent.buffer}: "
                f"needs stages-1 <= ({parent.stages}-1)*{info.loop_extent}"
            )


def analyze(p: Program) -> PipelinePlan:
    """Run all five analysis steps; the plan is ordered outermost-first."""
    plan = reconstruct_producers(p, collect_hints(p))
    for info in plan:
        find_pipelined_loop(p, info)
        record_regions(p, info)
    decide_prologue_sites(plan)
    _check_nesting(p, plan)
    depth = {}
    for info in plan:
        d, cur = 0, info
        while cur.parent:
            d, cur = d + 1, plan[cur.parent]
        depth[info.buffer] = d
    plan.infos.sort(key=lambda i: depth[i.buffer])
    return plan
