"""Acceptance criteria, one test each. Every test prints a single
``CRITERION n: PASS|FAIL`` line with the measured numbers, then asserts."""

import json
import random
import time

import numpy as np
import pytest

from loadpipe.bench import oracle_grid, two_level_grid
from loadpipe.config import HardwareSpec, ScheduleParams, WorkloadDesc
from loadpipe.interp import check_equivalence, random_inputs
from loadpipe.ir import parse_program, print_program
from loadpipe.perf_model import DesignPointError, pipeline_latency, predict
from loadpipe.pipe_sim import GroundTruthConfig
from loadpipe.pipeline import transform
from loadpipe.scheduler import (
    IneligibleBufferError,
    OrderingError,
    ProducerKind,
    Rule,
    cache_read,
    gemm_state,
    inline,
    lower,
    mark_pipeline,
    stencil_state,
    tile,
)
from loadpipe.ir import Scope
from loadpipe.tuner import Method, tune
from loadpipe.workloads import corpus


def _report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")


def test_criterion_1_transformation_correctness(capsys):
    start = time.perf_counter()
    cases = list(corpus())
    bad = []
    for case in cases:
        p = case.program()
        q = transform(p)
        for seed in range(5):
            if not check_equivalence(p, q, random_inputs(p, seed)):
                bad.append((case.name, seed))
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 60
    _report(capsys, 1, ok, f"{len(cases)} programs x 5 inputs, {len(bad)} mismatches, {elapsed:.1f}s (< 60s)")
    assert ok, bad


def test_criterion_2_golden(capsys, golden_input_text, golden_transformed_text):
    out = print_program(transform(parse_program(golden_input_text)))
    t = out
    steps = {
        "expanded buffer": "buffer A_shared shared f16[3, 4, 2];" in t,
        "+2 shift / mod-3 slot": "A_shared[(ko + 2) % 3" in t,
        "mod-extent producer wrap": "(ko + 2) % 4 * 2" in t,
        "2-chunk prologue": "A_shared[0, ii, kk] <-" in t and "A_shared[1, ii, kk] <-" in t,
        "sync order": t.index("producer_acquire A_shared") < t.index("producer_commit A_shared")
        < t.index("consumer_wait A_shared") < t.index("consumer_release A_shared"),
    }
    identical = out == golden_transformed_text
    ok = identical and all(steps.values())
    missing = [k for k, v in steps.items() if not v]
    _report(capsys, 2, ok, f"byte-identical={identical}, steps missing={missing or 'none'}")
    assert ok


def test_criterion_3_eligibility_and_ordering(capsys):
    results = {}
    # rule 1: compute-produced buffer
    s = tile(cache_read(gemm_state(8, 8, 8, pre_op="inc"), "S2", Scope.SHARED), "C", {"k": [4, 2, 1]})
    s = inline(s, "S2")
    try:
        mark_pipeline(s, "S2_shared", 2)
        results["NotAsyncProducer"] = False
    except IneligibleBufferError as exc:
        results["NotAsyncProducer"] = exc.report.failed_rule is Rule.NOT_ASYNC_PRODUCER
    # rule 2: stencil, parallel-only nest
    s = tile(cache_read(stencil_state(8, 8), "X", Scope.SHARED), "Y", {"i": [2, 4], "j": [2, 4]})
    try:
        mark_pipeline(s, "X_shared", 2)
        results["NoSequentialLoop"] = False
    except IneligibleBufferError as exc:
        results["NoSequentialLoop"] = exc.report.failed_rule is Rule.NO_SEQUENTIAL_LOOP
    # rule 3: two shared buffers syncing at different loops; both refused
    s = cache_read(cache_read(gemm_state(8, 8, 8), "A", Scope.SHARED), "B", Scope.SHARED, at="ki")
    s = mark_pipeline(tile(s, "C", {"k": [4, 2, 1]}), "A_shared", 2)
    try:
        mark_pipeline(s, "B_shared", 2)
        results["SyncPositionConflict"] = False
    except IneligibleBufferError as exc:
        results["SyncPositionConflict"] = (exc.report.failed_rule is Rule.SYNC_POSITION_CONFLICT
                                           and exc.state.refused == {"A_shared", "B_shared"}
                                           and not exc.state.stages)
    # ordering: pipeline needs a tiled sketch
    try:
        mark_pipeline(cache_read(gemm_state(8, 8, 8), "A", Scope.SHARED), "A_shared", 2)
        results["tile-before-pipeline"] = False
    except OrderingError:
        results["tile-before-pipeline"] = True
    # case 2: inline after pipeline keeps the buffer async and pipelined
    s = tile(cache_read(gemm_state(8, 8, 8, pre_op="inc"), "S2", Scope.SHARED), "C", {"k": [4, 2, 1]})
    s = inline(mark_pipeline(s, "S2_shared", 3), "S2")
    p = lower(s)
    results["inline-after-pipeline"] = (
        s.node("S2_shared").kind is ProducerKind.COPY and s.stages == {"S2_shared": 3}
        and bool(check_equivalence(p, transform(p), random_inputs(p, 0)))
    )
    ok = all(results.values())
    _report(capsys, 3, ok, ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in results.items()))
    assert ok, results


def test_criterion_4_model_identities(capsys):
    rng = random.Random(0)
    hw = HardwareSpec()
    checked = violations = 0
    while checked < 1000:
        size = rng.choice([256, 512, 1024, 2048])
        w = WorkloadDesc(size, size, size, rng.choice([1, 2]))
        p = ScheduleParams(
            rng.choice([32, 64, 128]), rng.choice([32, 64, 128]), rng.choice([16, 32, 64]),
            rng.choice([8, 16, 32]), rng.choice([8, 16, 32]), rng.choice([8, 16]),
            rng.randint(2, 5), rng.randint(2, 3), rng.choice([1, 2, 4, 8]),
        )
        try:
            b = predict(w, p, hw)
        except DesignPointError:
            continue
        checked += 1
        if b.t_threadblk != b.t_init + b.t_main_loop + b.t_epilogue or b.t_kernel != b.t_threadblk * b.n_threadblk_batch:
            violations += 1
    boundary = (
        pipeline_latency(10, 10, 8, 2, 1) == 80
        and pipeline_latency(10 + 1e-9, 10, 8, 2, 1) == pytest.approx((20 + 1e-9) * 4)
        and pipeline_latency(10 + 1e-9, 10, 8, 2, 1) > 80
        and pipeline_latency(30, 10, 8, 2, 2) == 80
        and pipeline_latency(31, 10, 8, 2, 2) == 41 * 4
    )
    ok = violations == 0 and boundary
    _report(capsys, 4, ok, f"{checked} random points, {violations} identity violations, boundary cases ok={boundary}")
    assert ok


def test_criterion_5_oracle_agreement(capsys):
    rows = [r for r in oracle_grid() if r.n_loop >= 32]
    within = [r for r in rows if r.rel_error <= 0.10]
    regime = sum(r.regime_match for r in rows) / len(rows)
    worst = max(rows, key=lambda r: r.rel_error)
    ok = len(within) == len(rows) and regime >= 0.95
    _report(
        capsys, 5, ok,
        f"{len(within)}/{len(rows)} grid points within 10% (worst {worst.rel_error:.1%} at "
        f"tLoad/tUse={worst.t_load / worst.t_use:g}, nPipe={worst.n_pipe}, nMplx={worst.n_mplx}); "
        f"regime match {regime:.1%} (>= 95%)",
    )
    assert ok


def test_criterion_6_multilevel_benefit(capsys):
    rows = two_level_grid()
    worse = [r for r in rows if r.fused > r.restart + 1e-9]

    def load_bound(r):
        inner, outer = r.inner, r.outer
        return (inner.t_load > (inner.n_pipe * inner.n_mplx - 1) * inner.t_use
                or outer.t_load > (outer.n_pipe * outer.n_mplx - 1) * inner.n_loop * inner.n_mplx * inner.t_use)

    strict = [r for r in rows if r.fused < r.restart - 1e-9 and load_bound(r)]
    ok = not worse and bool(strict)
    _report(capsys, 6, ok, f"{len(rows)} grid points, fused slower on {len(worse)}, "
                           f"strictly faster on {len(strict)} load-bound points")
    assert ok


@pytest.fixture(scope="module")
def tuning_study(default_space, default_truth):
    gt = GroundTruthConfig(noise_sigma=0.05)
    start = time.perf_counter()
    reports = {m: [tune(m, 50, default_space, gt, seed, default_truth) for seed in range(10)] for m in Method}
    return reports, time.perf_counter() - start


def test_criterion_7_tuning_study(capsys, default_space, tuning_study):
    reports, elapsed = tuning_study
    mean = {m: (float(np.mean([r.normalized[9] for r in rs])), float(np.mean([r.normalized[49] for r in rs])))
            for m, rs in reports.items()}
    assisted50, surrogate50 = mean[Method.ASSISTED][1], mean[Method.SURROGATE][1]
    parts = {
        "assisted@50 >= 0.95": assisted50 >= 0.95,
        "assisted@50 >= surrogate@50": assisted50 >= surrogate50,
        "analytical@10 >= grid@10": mean[Method.ANALYTICAL][0] >= mean[Method.GRID][0],
        "runtime < 10 min": elapsed < 600,
    }
    ok = all(parts.values())
    table = "; ".join(f"{m.value} @10={a:.3f} @50={b:.3f}" for m, (a, b) in mean.items())
    failed = [k for k, v in parts.items() if not v]
    _report(capsys, 7, ok, f"space={len(default_space)} points, 10 seeds, {elapsed:.0f}s; {table}; "
                           f"unmet: {failed or 'none'}")
    assert ok, parts


def test_criterion_8_cli_determinism(capsys, tmp_path, golden_input_text):
    from loadpipe.cli import main
    from loadpipe.workloads import GOLDEN_SCRIPT

    ir = tmp_path / "g.ir"
    ir.write_text(golden_input_text)
    script = tmp_path / "g.sched"
    script.write_text(GOLDEN_SCRIPT)
    point = tmp_path / "p.json"
    point.write_text(json.dumps({"workload": {"M": 512, "N": 512, "K": 512},
                                 "params": {"tile_m": 64, "tile_n": 64, "tile_k": 32, "reg_tile_m": 16,
                                            "reg_tile_n": 16, "reg_tile_k": 8}}))
    sim = tmp_path / "s.json"
    sim.write_text(json.dumps({"t_load": 25, "t_use": 10, "n_loop": 12, "n_pipe": 3, "n_mplx": 2}))
    space = tmp_path / "space.json"
    space.write_text(json.dumps({"workload": {"M": 512, "N": 512, "K": 512},
                                 "candidates": {"tile_m": [32, 64], "tile_n": [32, 64], "n_smem_pipe_stage": [2, 3],
                                                "reg_tile_m": [16], "reg_tile_n": [16], "reg_tile_k": [8],
                                                "tile_k": [32], "n_reg_pipe_stage": [2],
                                                "n_warp_per_threadblk": [2, 4]}}))
    side = str(tmp_path / "side")
    commands = {
        "parse": ["parse", str(ir)],
        "schedule": ["schedule", str(script)],
        "transform": ["transform", str(ir), "--emit-plan", side],
        "run": ["run", str(ir), "--transform", "--inputs", "random:7", "--trace", side],
        "verify": ["verify", str(ir), "--trials", "2"],
        "predict": ["predict", str(point), "--format", "table"],
        "simulate": ["simulate", str(sim), "--trace", side],
        "tune": ["tune", "--method", "all", "--budget", "8", "--space", str(space), "--csv", side],
        "bench-model": ["bench-model", "--top-k", side, "--space", str(space)],
    }
    differing = []
    for name, argv in commands.items():
        outs = []
        for _ in range(2):
            if (tmp_path / "side").exists():
                (tmp_path / "side").unlink()
            code = main(argv)
            stdout = capsys.readouterr().out
            extra = (tmp_path / "side").read_bytes() if (tmp_path / "side").exists() else b""
            outs.append((code, stdout, extra))
        if outs[0] != outs[1] or outs[0][0] != 0:
            differing.append(name)
    ok = not differing
    _report(capsys, 8, ok, f"{len(commands)} subcommands rerun, non-identical or failing: {differing or 'none'}")
    assert ok
