"""Closed-form latency model for a tiled, two-level pipelined GEMM kernel.

All times are abstract cycles. The kernel runs in threadblock batches; each
threadblock runs an outer pipeline over shared-memory chunks whose use phase
is itself an inner pipeline over register chunks.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .config import HardwareSpec, ScheduleParams, WorkloadDesc


class DesignPointError(ValueError):
    pass


class UnschedulableError(DesignPointError):
    pass


def pipeline_latency(t_load: float, t_use: float, n_loop: int, n_pipe: int, n_mplx: int) -> float:
    """Latency of ``n_loop`` load/use iterations at depth ``n_pipe`` with
    ``n_mplx`` workers sharing the compute unit."""
    if t_load <= (n_pipe * n_mplx - 1) * t_use:
        return t_use * n_loop
    return (t_load + t_use) * n_loop / n_pipe


def util(n_warp_per_threadblk: int, n_threadblk_per_sm: int, hw: HardwareSpec) -> float:
    return min(1.0, n_warp_per_threadblk * n_threadblk_per_sm / hw.util_knee_warps)


def compute_latency(flops: float, hw: HardwareSpec, n_warp: int, n_tb_per_sm: int) -> float:
    if flops <= 0:
        return 0.0
    return flops / (hw.throughput_sm * util(n_warp, n_tb_per_sm, hw))


def smem_load_latency(bytes_one_loop: float, bytes_workset: float, n_tb_per_batch: int, hw: HardwareSpec) -> float:
    llc = hw.lat_llc_read + bytes_one_loop * n_tb_per_batch / hw.bw_llc
    dram = hw.lat_dram_read + bytes_workset / hw.bw_dram
    return max(llc, dram)


def epilogue_latency(bytes_output_tile: float, n_tb_per_batch: int, hw: HardwareSpec) -> float:
    return hw.lat_dram_write + bytes_output_tile * n_tb_per_batch / hw.bw_dram_write


def reg_load_latency(bytes_per_warp: float, hw: HardwareSpec) -> float:
    return hw.lat_smem + bytes_per_warp / hw.bw_smem


# ------------------------------------------------------------ footprints


def smem_bytes(p: ScheduleParams, w: WorkloadDesc) -> int:
    return (p.tile_m + p.tile_n) * p.tile_k * w.elem_bytes * p.n_smem_pipe_stage


def reg_bytes_per_warp(p: ScheduleParams, w: WorkloadDesc) -> int:
    """One stage of register operand tiles held by a warp."""
    tiles = p.reg_tiles // p.n_warp_per_threadblk
    return (p.reg_tile_m + p.reg_tile_n) * p.reg_tile_k * w.elem_bytes * tiles


def check_point(p: ScheduleParams, w: WorkloadDesc) -> None:
    problems = p.problems()
    for dim, tile in (("M", p.tile_m), ("N", p.tile_n), ("K", p.tile_k)):
        if getattr(w, dim) % tile:
            problems.append(f"tile does not divide {dim}")
    if problems:
        raise DesignPointError("; ".join(problems))


@dataclass(frozen=True)
class Occupancy:
    n_threadblk_per_sm: int
    n_threadblk_batch: int
    n_threadblk_per_batch: int
    n_threadblk_total: int


def occupancy(p: ScheduleParams, w: WorkloadDesc, hw: HardwareSpec) -> Occupancy:
    check_point(p, w)
    need_smem = smem_bytes(p, w)
    need_reg = reg_bytes_per_warp(p, w) * p.n_reg_pipe_stage * p.n_warp_per_threadblk
    per_sm = min(
        hw.max_threadblk_per_sm,
        hw.smem_per_sm // need_smem,
        hw.regs_per_sm // need_reg,
        hw.max_warps_per_sm // p.n_warp_per_threadblk,
    )
    if per_sm < 1:
        raise UnschedulableError(
            f"one threadblock needs {need_smem} B shared and {need_reg} B registers; does not fit on an SM"
        )
    total = (w.M // p.tile_m) * (w.N // p.tile_n) * w.batch
    per_batch = per_sm * hw.num_sm
    return Occupancy(per_sm, math.ceil(total / per_batch), per_batch, total)


def workset_bytes(p: ScheduleParams, w: WorkloadDesc, n_tb: int) -> int:
    """Unique A and B bytes loaded in one outer step by the first ``n_tb``
    threadblocks, taken in row-major tile order within each batch entry."""
    gm, gn = w.M // p.tile_m, w.N // p.tile_n
    n = min(n_tb, gm * gn * w.batch)
    full, rem = divmod(n, gm * gn)
    a_tiles = full * gm + math.ceil(rem / gn)
    b_tiles = full * gn + min(rem, gn)
    return (a_tiles * p.tile_m + b_tiles * p.tile_n) * p.tile_k * w.elem_bytes


@dataclass(frozen=True)
class LatencyBreakdown:
    t_kernel: float
    t_threadblk: float
    t_init: float
    t_main_loop: float
    t_epilogue: float
    t_smem_load: float
    t_reg_load: float
    t_smem_use: float
    t_compute: float
    n_threadblk_batch: int
    n_threadblk_per_sm: int
    n_threadblk_per_batch: int
    n_smem_loop: int
    n_reg_loop: int
    bytes_one_smem_loop: int
    bytes_workset: int
    bytes_output_tile: int
    flops_one_reg_loop: int

    def to_dict(self) -> dict:
        return asdict(self)


def predict(w: WorkloadDesc, p: ScheduleParams, hw: HardwareSpec) -> LatencyBreakdown:
    occ = occupancy(p, w, hw)
    n_smem_loop = w.K // p.tile_k
    n_reg_loop = p.tile_k // p.reg_tile_k
    tiles_per_warp = p.reg_tiles // p.n_warp_per_threadblk
    flops = 2 * p.reg_tile_m * p.reg_tile_n * p.reg_tile_k * tiles_per_warp
    bytes_one_smem_loop = (p.tile_m + p.tile_n) * p.tile_k * w.elem_bytes
    bytes_workset = workset_bytes(p, w, occ.n_threadblk_per_batch)
    bytes_output = p.tile_m * p.tile_n * w.elem_bytes

    t_compute = compute_latency(flops, hw, p.n_warp_per_threadblk, occ.n_threadblk_per_sm)
    t_reg_load = reg_load_latency(reg_bytes_per_warp(p, w), hw)
    t_smem_load = smem_load_latency(bytes_one_smem_loop, bytes_workset, occ.n_threadblk_per_batch, hw)
    t_smem_use = pipeline_latency(t_reg_load, t_compute, n_reg_loop, p.n_reg_pipe_stage, p.n_warp_per_threadblk)
    t_main = pipeline_latency(t_smem_load, t_smem_use, n_smem_loop, p.n_smem_pipe_stage, occ.n_threadblk_per_sm)
    t_init = t_smem_load + t_reg_load
    t_epi = epilogue_latency(bytes_output, occ.n_threadblk_per_batch, hw)
    t_tb = t_init + t_main + t_epi
    return LatencyBreakdown(
        t_kernel=t_tb * occ.n_threadblk_batch,
        t_threadblk=t_tb,
        t_init=t_init,
        t_main_loop=t_main,
        t_epilogue=t_epi,
        t_smem_load=t_smem_load,
        t_reg_load=t_reg_load,
        t_smem_use=t_smem_use,
        t_compute=t_compute,
        n_threadblk_batch=occ.n_threadblk_batch,
        n_threadblk_per_sm=occ.n_threadblk_per_sm,
        n_threadblk_per_batch=occ.n_threadblk_per_batch,
        n_smem_loop=n_smem_loop,
        n_reg_loop=n_reg_loop,
        bytes_one_smem_loop=bytes_one_smem_loop,
        bytes_workset=bytes_workset,
        bytes_output_tile=bytes_output,
        flops_one_reg_loop=flops,
    )


def format_breakdown(b: LatencyBreakdown) -> str:
    rows = [(k, v) for k, v in b.to_dict().items()]
    width = max(len(k) for k, _ in rows)
    out = []
    for k, v in rows:
        val = f"{v:.1f}" if isinstance(v, float) else str(v)
        out.append(f"{k.ljust(width)}  {val}")
    return "\n".join(out)
