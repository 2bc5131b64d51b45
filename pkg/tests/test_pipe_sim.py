import math

import pytest
from hypothesis import given, settings, strategies as st

from loadpipe.config import ConfigError, HardwareSpec, ScheduleParams, WorkloadDesc
from loadpipe.pipe_sim import (
    GroundTruthConfig,
    LevelConfig,
    SimConfig,
    measure_ground_truth,
    noiseless_cost,
    simulate_pipeline,
    simulate_two_level,
    validate_trace,
)
from loadpipe.perf_model import predict


def test_no_load_latency():
    assert simulate_pipeline(SimConfig(0, 10, 8, 1, 1))[0] == 80


def test_load_bound_close_to_formula():
    makespan, _ = simulate_pipeline(SimConfig(30, 10, 64, 2, 1))
    assert abs(makespan - 1280) / 1280 <= 0.10


def test_compute_bound_close_to_formula():
    makespan, tr = simulate_pipeline(SimConfig(10, 10, 64, 4, 1))
    assert abs(makespan - 640) / 640 <= 0.10
    assert tr.idle_fraction() < 0.02


def test_single_slot_serializes():
    # one slot: every load waits for the previous compute
    assert simulate_pipeline(SimConfig(5, 10, 4, 1, 1))[0] == 4 * 15


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(-1, 1, 1)
    with pytest.raises(ConfigError):
        SimConfig(1, 1, 0)
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"t_load": 1, "t_use": 1, "n_loop": 1, "extra": 2})


def test_trace_csv_deterministic():
    cfg = SimConfig(20, 10, 6, 2, 3)
    a = simulate_pipeline(cfg)[1].to_csv()
    b = simulate_pipeline(cfg)[1].to_csv()
    assert a == b
    assert a.splitlines()[0] == "time,worker,kind,iter"
    assert len(a.splitlines()) == 1 + 4 * 6 * 3


configs = st.builds(
    SimConfig,
    t_load=st.floats(0, 500),
    t_use=st.floats(1, 100),
    n_loop=st.integers(1, 40),
    n_pipe=st.integers(1, 4),
    n_mplx=st.integers(1, 4),
)


@settings(max_examples=200, deadline=None)
@given(configs)
def test_trace_invariants(cfg):
    makespan, tr = simulate_pipeline(cfg)
    assert validate_trace(tr) == []
    # the shared unit does every compute; no worker beats its own serial chain
    assert makespan >= cfg.n_mplx * cfg.n_loop * cfg.t_use - 1e-6
    assert makespan >= cfg.t_load + cfg.n_loop * cfg.t_use - 1e-6
    assert makespan <= cfg.n_mplx * cfg.n_loop * (cfg.t_load + cfg.t_use) + 1e-6


@settings(max_examples=100, deadline=None)
@given(configs)
def test_more_slots_never_hurt_single_worker(cfg):
    one = SimConfig(cfg.t_load, cfg.t_use, cfg.n_loop, cfg.n_pipe, 1)
    more = SimConfig(cfg.t_load, cfg.t_use, cfg.n_loop, cfg.n_pipe + 1, 1)
    assert simulate_pipeline(more)[0] <= simulate_pipeline(one)[0] + 1e-6


# ------------------------------------------------------------- two level


def test_two_level_degenerates_to_single():
    inner = LevelConfig(0, 4, 2, 1, t_use=5)
    outer = LevelConfig(30, 16, 2, 1)
    single = simulate_pipeline(SimConfig(30, 4 * 5, 16, 2, 1))[0]
    assert simulate_two_level(outer, inner) == pytest.approx(single)


def test_two_level_compute_bound():
    inner = LevelConfig(1, 8, 3, 4, t_use=10)
    outer = LevelConfig(10, 16, 4, 2)
    total = 2 * 4 * 16 * 8 * 10
    assert abs(simulate_two_level(outer, inner) - total) / total <= 0.10


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 200), st.floats(0, 100), st.integers(1, 6), st.integers(1, 4), st.integers(2, 4),
       st.integers(2, 3), st.integers(1, 2), st.integers(1, 3))
def test_fused_never_slower(t_out, t_in, e, f, s, t, groups, warps):
    if t - 1 > (s - 1) * f:
        return
    outer = LevelConfig(t_out, e, s, groups)
    inner = LevelConfig(t_in, f, t, warps, t_use=7)
    assert simulate_two_level(outer, inner, True) <= simulate_two_level(outer, inner, False) + 1e-6


# ------------------------------------------------------------ ground truth

W = WorkloadDesc(1024, 1024, 1024)
P = ScheduleParams(64, 64, 64, 32, 32, 16, 3, 2, 4)


def test_ground_truth_deterministic():
    g = GroundTruthConfig(noise_sigma=0.05, seed=3)
    assert measure_ground_truth(W, P, HardwareSpec(), g, key=7) == measure_ground_truth(W, P, HardwareSpec(), g, key=7)
    assert measure_ground_truth(W, P, HardwareSpec(), g, key=7) != measure_ground_truth(W, P, HardwareSpec(), g, key=8)


def test_ground_truth_near_but_not_equal_to_model():
    g = GroundTruthConfig(contention_factor=0.0, noise_sigma=0.0)
    sim = measure_ground_truth(W, P, HardwareSpec(), g)
    model = predict(W, P, HardwareSpec()).t_kernel
    assert sim != model
    assert 0.5 < sim / model < 2.0


def test_unschedulable_is_infinite():
    big = ScheduleParams(128, 128, 64, 32, 32, 16, 8, 2, 4)
    assert math.isinf(noiseless_cost(W, big, HardwareSpec()))
    assert math.isinf(measure_ground_truth(W, big, HardwareSpec(), GroundTruthConfig()))


def test_contention_slows_down():
    assert noiseless_cost(W, P, HardwareSpec(), 0.5) >= noiseless_cost(W, P, HardwareSpec(), 0.0)
