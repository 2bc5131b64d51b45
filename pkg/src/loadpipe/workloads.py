"""Generated GEMM schedules used for equivalence sweeps and golden files."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

from .config import WorkloadDesc
from .ir.nodes import Program
from .scheduler import ScheduleState, parse_script, lower

K_SPLITS = {4: (2, 2, 1), 8: (2, 2, 2), 16: (4, 2, 2)}
SIZES = (4, 8, 16)
OUTER_STAGES = (2, 3, 4)
INNER_STAGES = (2, 3)


@dataclass(frozen=True)
class Case:
    name: str
    script: str
    workload: WorkloadDesc

    def state(self) -> ScheduleState:
        return parse_script(self.script)

    def program(self) -> Program:
        return lower(self.state(), self.workload)


def gemm_script(size: int, outer: int, inner: Optional[int], pre: Optional[str] = None) -> str:
    """Square GEMM with A and B staged in shared memory; ``inner`` adds a
    pipelined register level for A; ``pre`` exercises case-2 inlining."""
    ko, ki, kr = K_SPLITS[size]
    half = size // 2
    lhs = "S2" if pre else "A"
    lines = [f"workload gemm M={size} N={size} K={size}" + (f" pre={pre}" if pre else "")]
    lines.append(f"cache_read {lhs} shared")
    lines.append("cache_read B shared")
    if inner is not None:
        lines.append(f"cache_read {lhs}_shared register")
    lines.append(f"tile C i=2,{half} j=2,{half} k={ko},{ki},{kr}")
    lines.append(f"pipeline {lhs}_shared {outer}")
    lines.append(f"pipeline B_shared {outer}")
    if inner is not None:
        lines.append(f"pipeline {lhs}_reg {inner}")
    if pre:
        lines.append(f"inline {lhs}")
    return "\n".join(lines) + "\n"


def corpus(include_inline: bool = True) -> Iterator[Case]:
    for size in SIZES:
        w = WorkloadDesc(size, size, size)
        for outer in OUTER_STAGES:
            yield Case(f"gemm{size}_s{outer}", gemm_script(size, outer, None), w)
            for inner in INNER_STAGES:
                yield Case(f"gemm{size}_s{outer}_r{inner}", gemm_script(size, outer, inner), w)
        if include_inline:
            yield Case(f"gemm{size}_inline", gemm_script(size, 3, 2, pre="inc"), w)


GOLDEN_SCRIPT = """workload gemm M=8 N=8 K=8
cache_read A shared
cache_read A_shared register
tile C i=2,4 j=2,4 k=4,2,1
pipeline A_shared 3
pipeline A_reg 2
"""


def golden_case() -> Case:
    return Case("golden", GOLDEN_SCRIPT, WorkloadDesc(8, 8, 8))
