import dataclasses

import pytest
from hypothesis import assume, given, settings, strategies as st

from loadpipe.config import ConfigError, HardwareSpec, ScheduleParams, WorkloadDesc
from loadpipe.perf_model import (
    DesignPointError,
    UnschedulableError,
    compute_latency,
    epilogue_latency,
    occupancy,
    pipeline_latency,
    predict,
    smem_load_latency,
    util,
    workset_bytes,
)

HW = HardwareSpec()


def test_pipeline_latency_examples():
    assert pipeline_latency(0, 10, 8, 2, 1) == 80
    assert pipeline_latency(10, 10, 8, 2, 1) == 80  # inclusive boundary
    assert pipeline_latency(30, 10, 8, 2, 1) == 160
    assert pipeline_latency(10.000001, 10, 8, 2, 1) == pytest.approx((20.000001) * 4)


def test_compute_latency():
    hw = dataclasses.replace(HW, throughput_sm=1024.0)
    assert compute_latency(16384, hw, 8, 1) == 16
    assert compute_latency(16384, hw, 4, 1) == 32  # half the knee
    assert compute_latency(0, hw, 1, 1) == 0


def test_util():
    assert util(8, 4, HW) == 1.0
    assert util(2, 1, HW) == 0.25
    assert util(4, 2, HW) == 1.0


def test_smem_load_latency():
    hw = dataclasses.replace(HW, bw_llc=512.0, bw_dram=64.0, lat_llc_read=200.0, lat_dram_read=400.0)
    assert smem_load_latency(4096, 1 << 20, 108, hw) == 16784
    assert smem_load_latency(4096, 1, 108, hw) == 200 + 4096 * 108 / 512


def test_epilogue_latency():
    hw = dataclasses.replace(HW, bw_dram_write=32.0, lat_dram_write=500.0)
    assert epilogue_latency(0, 108, hw) == 500
    assert epilogue_latency(8192, 108, hw) == 28148
    assert epilogue_latency(8192, 216, hw) - 500 == 2 * (28148 - 500)


def _p(**kw):
    base = dict(tile_m=64, tile_n=64, tile_k=32, reg_tile_m=16, reg_tile_n=16, reg_tile_k=8,
                n_smem_pipe_stage=2, n_reg_pipe_stage=2, n_warp_per_threadblk=4)
    base.update(kw)
    return ScheduleParams(**base)


def test_occupancy_floor_division():
    # one block needs 60 KiB of shared memory out of 100 KiB
    hw = dataclasses.replace(HW, smem_per_sm=100 * 1024)
    p = _p(tile_m=128, tile_n=112, tile_k=32, n_smem_pipe_stage=4)
    w = WorkloadDesc(1024, 1120, 1024)
    assert (128 + 112) * 32 * 2 * 4 == 60 * 1024
    assert occupancy(p, w, hw).n_threadblk_per_sm == 1


def test_occupancy_cap():
    hw = dataclasses.replace(HW, max_threadblk_per_sm=16, max_warps_per_sm=1024)
    p = _p(tile_m=16, tile_n=16, tile_k=16, reg_tile_m=16, reg_tile_n=16, reg_tile_k=8, n_warp_per_threadblk=1)
    assert occupancy(p, WorkloadDesc(256, 256, 256), hw).n_threadblk_per_sm == 16


def test_occupancy_unschedulable():
    p = _p(tile_m=128, tile_n=128, tile_k=64, n_smem_pipe_stage=8)
    with pytest.raises(UnschedulableError):
        occupancy(p, WorkloadDesc(1024, 1024, 1024), HW)


def test_indivisible_point():
    with pytest.raises(DesignPointError):
        predict(WorkloadDesc(100, 64, 64), _p(), HW)


def test_single_smem_iteration():
    b = predict(WorkloadDesc(256, 256, 32), _p(), HW)
    assert b.n_smem_loop == 1
    assert b.t_main_loop == pipeline_latency(b.t_smem_load, b.t_smem_use, 1, 2, b.n_threadblk_per_sm)


def test_more_stages_reach_case_one():
    w = WorkloadDesc(256, 256, 2048)
    hw = dataclasses.replace(HW, num_sm=1, max_threadblk_per_sm=1)
    mains = [predict(w, _p(tile_m=32, tile_n=32, n_smem_pipe_stage=s, n_warp_per_threadblk=2), hw)
             for s in (2, 4, 8, 12)]
    floors = [b.t_smem_use * b.n_smem_loop for b in mains]
    assert mains[0].t_main_loop > floors[0]
    assert all(a.t_main_loop >= b.t_main_loop for a, b in zip(mains, mains[1:]))
    assert mains[-1].t_main_loop == floors[-1]


def test_workset_excludes_shared_tiles():
    p = _p()
    w = WorkloadDesc(1024, 1024, 1024)
    one = workset_bytes(p, w, 1)
    assert one == (64 + 64) * 32 * 2
    row = workset_bytes(p, w, 16)  # one full row of tiles shares its A tile
    assert row == (64 + 16 * 64) * 32 * 2


def test_config_validation():
    with pytest.raises(ConfigError):
        HardwareSpec(num_sm=0)
    with pytest.raises(ConfigError):
        ScheduleParams.from_dict({"tile_m": 64, "bogus": 1})
    assert ScheduleParams.from_dict(_p().to_dict()) == _p()


def test_desk_config_identities():
    b = predict(WorkloadDesc(2048, 2048, 2048), _p(tile_m=128, tile_n=128, reg_tile_m=32, reg_tile_n=32), HW)
    assert b.t_threadblk == b.t_init + b.t_main_loop + b.t_epilogue
    assert b.t_kernel == b.t_threadblk * b.n_threadblk_batch


points = st.builds(
    ScheduleParams,
    tile_m=st.sampled_from([16, 32, 64, 128]),
    tile_n=st.sampled_from([16, 32, 64, 128]),
    tile_k=st.sampled_from([8, 16, 32, 64]),
    reg_tile_m=st.sampled_from([8, 16, 32]),
    reg_tile_n=st.sampled_from([8, 16, 32]),
    reg_tile_k=st.sampled_from([4, 8, 16]),
    n_smem_pipe_stage=st.integers(2, 5),
    n_reg_pipe_stage=st.integers(2, 3),
    n_warp_per_threadblk=st.sampled_from([1, 2, 4, 8]),
)


@settings(max_examples=300, deadline=None)
@given(points, st.sampled_from([256, 512, 1024]), st.integers(1, 3))
def test_breakdown_identities(p, size, batch):
    w = WorkloadDesc(size, size, size, batch)
    try:
        b = predict(w, p, HW)
    except DesignPointError:
        assume(False)
    assert b.t_threadblk == b.t_init + b.t_main_loop + b.t_epilogue
    assert b.t_kernel == b.t_threadblk * b.n_threadblk_batch
    assert b.t_main_loop >= b.t_smem_use * b.n_smem_loop - 1e-9


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1000), st.floats(0.1, 1000), st.integers(1, 64), st.integers(1, 6), st.integers(1, 6))
def test_pipeline_latency_case_selection(t_load, t_use, n, p, m):
    got = pipeline_latency(t_load, t_use, n, p, m)
    if t_load <= (p * m - 1) * t_use:
        assert got == t_use * n
    else:
        assert got == (t_load + t_use) * n / p
        assert got >= t_use * n
