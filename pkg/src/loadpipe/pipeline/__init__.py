"""The software-pipelining pass: analysis then transformation."""

from .analysis import (
    BufferPipelineInfo,
    PipelineError,
    PipelinePlan,
    analyze,
    collect_hints,
    decide_prologue_sites,
    find_pipelined_loop,
    reconstruct_producers,
    record_regions,
)
from .transform import (
    expand_buffers,
    inject_prologues,
    inject_sync,
    shift_and_wrap_indices,
    transform,
    transform_with_plan,
)

__all__ = [
    "BufferPipelineInfo",
    "PipelineError",
    "PipelinePlan",
    "analyze",
    "collect_hints",
    "decide_prologue_sites",
    "expand_buffers",
    "find_pipelined_loop",
    "inject_prologues",
    "inject_sync",
    "reconstruct_producers",
    "record_regions",
    "shift_and_wrap_indices",
    "transform",
    "transform_with_plan",
]
